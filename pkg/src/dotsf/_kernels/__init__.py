"""Kernel backend selection.

The compiled Cython core is preferred when importable; otherwise the numpy
fallback is used.  Override with DOTSF_KERNELS=c|py|auto (default auto).
Both backends expose the same functions with identical semantics.
"""

import os

_requested = os.environ.get("DOTSF_KERNELS", "auto")
if _requested not in ("auto", "c", "py"):
    raise RuntimeError(f"DOTSF_KERNELS must be auto, c, or py (got {_requested!r})")

if _requested in ("auto", "c"):
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "c":
            raise
        from . import _pure as _impl
else:
    from . import _pure as _impl

BACKEND = _impl.NAME

tanh_fwd = _impl.tanh_fwd
tanh_bwd = _impl.tanh_bwd
relu_fwd = _impl.relu_fwd
relu_bwd = _impl.relu_bwd
layernorm_fwd = _impl.layernorm_fwd
layernorm_bwd = _impl.layernorm_bwd
adam_step = _impl.adam_step
ema_step = _impl.ema_step
clip_inplace = _impl.clip_inplace


def load_backend(name):
    """Return the raw backend module ('c' or 'py'); used by the benchmark."""
    if name == "py":
        from . import _pure
        return _pure
    if name == "c":
        from . import _core
        return _core
    raise ValueError(f"unknown kernel backend {name!r}")
