"""Parameter containers, MLPs, Adam, target-network EMA, gradient checking,
and the binary checkpoint format.
"""

import copy
import struct

import numpy as np

from . import _kernels as K
from . import tensor as T

CKPT_MAGIC = b"SRCP"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


class Module:
    """Minimal container: children and Tensor parameters found by attribute."""

    def named_parameters(self, prefix=""):
        out = {}
        for attr, val in vars(self).items():
            name = f"{prefix}{attr}" if prefix else attr
            if isinstance(val, T.Tensor) and val.requires_grad:
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_parameters(prefix=name + "/"))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(prefix=f"{name}.{i}/"))
                    elif isinstance(item, T.Tensor) and item.requires_grad:
                        out[f"{name}.{i}"] = item
        return out

    def named_state(self, prefix=""):
        """All tensors, trainable or not (target copies are untracked)."""
        out = {}
        for attr, val in vars(self).items():
            name = f"{prefix}{attr}" if prefix else attr
            if isinstance(val, T.Tensor):
                out[name] = val
            elif isinstance(val, Module):
                out.update(val.named_state(prefix=name + "/"))
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        out.update(item.named_state(prefix=f"{name}.{i}/"))
                    elif isinstance(item, T.Tensor):
                        out[f"{name}.{i}"] = item
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def param_checksum(self):
        """Cheap fingerprint used by the decoupling assertions."""
        return float(sum(np.abs(p.data).sum() for p in self.named_state().values()))

    def copy_as_target(self):
        """Deep copy with gradient tracking off; serves as an EMA target.

        Target forward passes therefore never record on the tape, so their
        outputs are constants without explicit detach calls.
        """
        tgt = copy.deepcopy(self)
        for p in tgt.named_state().values():
            p.requires_grad = False
            p.grad = None
        return tgt


class Linear(Module):
    def __init__(self, n_in, n_out, stream, bias=True):
        bound = 1.0 / np.sqrt(n_in)
        self.W = T.Tensor(stream.uniform(-bound, bound, (n_in, n_out)), requires_grad=True)
        self.b = T.Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.W)
        if self.b is not None:
            y = T.add(y, self.b)
        return y


class MLP(Module):
    """Small fully connected net.

    ``first_layer_norm`` applies layernorm(tanh(.)) after the first linear
    map (the DDPG-style trunk head), later hidden layers use
    ``hidden_act``.  ``out_tanh`` bounds the output to (-1, 1);
    ``out_layernorm`` normalizes it instead.
    """

    def __init__(self, sizes, stream, hidden_act="relu", first_layer_norm=False,
                 out_tanh=False, out_layernorm=False):
        self.layers = [
            Linear(sizes[i], sizes[i + 1], stream.child("layer", i))
            for i in range(len(sizes) - 1)
        ]
        self.hidden_act = hidden_act
        self.first_layer_norm = first_layer_norm
        self.out_tanh = out_tanh
        self.out_layernorm = out_layernorm

    def __call__(self, x):
        n = len(self.layers)
        act = T.tanh if self.hidden_act == "tanh" else T.relu
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < n - 1:
                if i == 0 and self.first_layer_norm:
                    x = T.layernorm(T.tanh(x))
                else:
                    x = act(x)
        if self.out_layernorm:
            x = T.layernorm(x)
        if self.out_tanh:
            x = T.tanh(x)
        return x


class Adam:
    """Standard Adam; state arrays mirror parameter shapes, step is 1-based."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros(p.data.size) for p in self.params]
        self.v = [np.zeros(p.data.size) for p in self.params]

    def step(self, grads=None):
        """Apply one update from ``p.grad`` (or an explicit list of arrays)."""
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad if grads is None else grads[i]
            if g is None:
                raise ValueError("parameter has no gradient; run backward first")
            if g.shape != p.data.shape:
                raise T.ShapeMismatchError(
                    f"adam: grad shape {g.shape} != param shape {p.data.shape}"
                )
            K.adam_step(
                p.data.reshape(-1), np.ascontiguousarray(g.reshape(-1)),
                self.m[i], self.v[i], self.t, self.lr,
                self.beta1, self.beta2, self.eps,
            )


def ema_update(target, online, tau):
    """target <- tau * online + (1 - tau) * target, parameter by parameter."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    t_params = target.named_state()
    o_params = online.named_state()
    for name, tp in t_params.items():
        op = o_params[name]
        if tp.data.shape != op.data.shape:
            raise T.ShapeMismatchError(
                f"ema: {name} shapes {tp.data.shape} != {op.data.shape}"
            )
        K.ema_step(tp.data.reshape(-1), op.data.reshape(-1), tau)


class FiniteDiffReport:
    def __init__(self, per_param, tolerance):
        self.per_param = per_param  # name -> max relative error
        self.tolerance = tolerance
        self.worst_param = max(per_param, key=per_param.get) if per_param else None
        self.max_rel_error = per_param[self.worst_param] if per_param else 0.0
        self.passed = self.max_rel_error < tolerance

    def __repr__(self):
        status = "pass" if self.passed else f"FAIL at {self.worst_param}"
        return f"FiniteDiffReport(max_rel_error={self.max_rel_error:.3e}, {status})"


def _rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1.0)


def finite_diff_check(loss_fn, named_params, tolerance=1e-4, h=1e-5, max_coords=None,
                      stream=None):
    """Compare backward() gradients against central finite differences.

    ``loss_fn`` rebuilds the loss from scratch (fresh forward pass).  With
    ``max_coords`` set, a random subset of coordinates per parameter is
    probed, drawn from ``stream``.
    """
    params = list(named_params.items())
    with T.tape_scope():
        loss = loss_fn()
        grads = T.active_tape().gradients(loss, [p for _, p in params])
    per_param = {}
    for name, p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords is not None and n > max_coords:
            idx = stream.gen.choice(n, size=max_coords, replace=False)
        else:
            idx = range(n)
        worst = 0.0
        analytic = grads[p].reshape(-1)
        for j in idx:
            orig = flat[j]
            with T.tape_scope():
                flat[j] = orig + h
                up = loss_fn().item()
                flat[j] = orig - h
                dn = loss_fn().item()
            flat[j] = orig
            fd = (up - dn) / (2.0 * h)
            worst = max(worst, _rel_err(analytic[j], fd))
        per_param[name] = worst
    return FiniteDiffReport(per_param, tolerance)


# ---------------------------------------------------------------------------
# checkpoint format: "SRCP" | u32 version | u32 count |
#   repeat: u32 name_len | name utf-8 | u32 rank | u64 dims... | f64 payload

def save_arrays(path, named):
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(named)))
        for name, arr in named.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes(order="C"))


def load_arrays(path):
    with open(path, "rb") as f:
        raw = f.read()
    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(raw):
            raise CheckpointError(
                f"truncated checkpoint: needed {n} bytes for {what} at offset {off}"
            )
        chunk = raw[off:off + n]
        off += n
        return chunk

    if take(4, "magic") != CKPT_MAGIC:
        raise CheckpointError("bad magic bytes; not a checkpoint file")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank, "dims"))
        n = int(np.prod(dims)) if rank else 1
        payload = take(8 * n, f"payload of {name}")
        out[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).copy()
    if off != len(raw):
        raise CheckpointError(f"trailing garbage after table at offset {off}")
    return out


def save_module(path, module):
    save_arrays(path, {k: v.data for k, v in module.named_parameters().items()})


def load_into_module(path, module):
    arrays = load_arrays(path)
    params = module.named_parameters()
    missing = set(params) - set(arrays)
    extra = set(arrays) - set(params)
    if missing or extra:
        raise CheckpointError(
            f"checkpoint does not match module (missing={sorted(missing)}, "
            f"extra={sorted(extra)})"
        )
    for name, p in params.items():
        if arrays[name].shape != p.data.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: {arrays[name].shape} vs {p.data.shape}"
            )
        p.data[...] = arrays[name]
