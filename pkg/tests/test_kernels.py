"""Backend equivalence: the compiled core and the numpy fallback must agree."""

import numpy as np
import pytest

from dotsf import _kernels
from dotsf.rng import Stream

pure = _kernels.load_backend("py")
try:
    core = _kernels.load_backend("c")
except ImportError:
    core = None

needs_core = pytest.mark.skipif(core is None, reason="compiled kernels not built")


def _rand2d(seed, shape=(17, 33)):
    return Stream(seed).normal(0, 1, shape)


@needs_core
@pytest.mark.parametrize("seed", range(3))
def test_activations_match(seed):
    x = _rand2d(seed)
    gy = _rand2d(seed + 100)
    for fwd, bwd in [(("tanh_fwd", "tanh_bwd")), ("relu_fwd", "relu_bwd")]:
        yp = getattr(pure, fwd)(x)
        yc = getattr(core, fwd)(x)
        np.testing.assert_allclose(yc, yp, rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(
            getattr(core, bwd)(yc, gy), getattr(pure, bwd)(yp, gy),
            rtol=1e-13, atol=1e-14,
        )


@needs_core
@pytest.mark.parametrize("seed", range(3))
def test_layernorm_matches(seed):
    x = _rand2d(seed)
    gy = _rand2d(seed + 7)
    yp, sp = pure.layernorm_fwd(x, 1e-5)
    yc, sc = core.layernorm_fwd(x, 1e-5)
    np.testing.assert_allclose(yc, yp, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(sc, sp, rtol=1e-12)
    np.testing.assert_allclose(
        core.layernorm_bwd(yc, sc, gy), pure.layernorm_bwd(yp, sp, gy),
        rtol=1e-11, atol=1e-12,
    )


@needs_core
def test_adam_and_ema_match():
    s = Stream(5)
    n = 257
    p1 = s.normal(0, 1, n)
    p2 = p1.copy()
    g = s.normal(0, 1, n)
    m1, v1 = np.zeros(n), np.zeros(n)
    m2, v2 = np.zeros(n), np.zeros(n)
    for t in range(1, 4):
        pure.adam_step(p1, g, m1, v1, t, 1e-3, 0.9, 0.999, 1e-8)
        core.adam_step(p2, g, m2, v2, t, 1e-3, 0.9, 0.999, 1e-8)
    np.testing.assert_allclose(p2, p1, rtol=1e-13, atol=1e-15)

    t1 = s.normal(0, 1, n)
    t2 = t1.copy()
    o = s.normal(0, 1, n)
    pure.ema_step(t1, o, 0.01)
    core.ema_step(t2, o, 0.01)
    np.testing.assert_allclose(t2, t1, rtol=1e-14)


@needs_core
def test_clip_matches():
    x1 = Stream(9).normal(0, 2, 100)
    x2 = x1.copy()
    pure.clip_inplace(x1, -1.0, 1.0)
    core.clip_inplace(x2, -1.0, 1.0)
    np.testing.assert_array_equal(x1, x2)


def test_backend_selection_env(tmp_path):
    import subprocess
    import sys
    code = "import dotsf; print(dotsf.KERNEL_BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code],
        env={"DOTSF_KERNELS": "py", "PATH": "/usr/bin:/bin"},
        capture_output=True, text=True,
    )
    assert out.stdout.strip() == "py"
