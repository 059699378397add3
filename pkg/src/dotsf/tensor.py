"""Dense f64 tensors with reverse-mode automatic differentiation.

A single-use gradient tape records primitive ops in execution order;
``backward`` replays it once in reverse and then clears it.  Everything is
64-bit and deterministic: no op introduces randomness, and elementwise
broadcasting is restricted to the leading-1 rule so every gradient
reduction is an explicit sum over leading axes.
"""

import contextlib

import numpy as np

from . import _kernels as K

LAYERNORM_EPS = 1e-5


class ShapeMismatchError(ValueError):
    pass


class UnsupportedOpError(ValueError):
    pass


class NonScalarLossError(ValueError):
    pass


def _as_f64(x):
    a = np.ascontiguousarray(x, dtype=np.float64)
    return a


class Tensor:
    """Dense row-major f64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = _as_f64(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def detach(self):
        """Same values, outside the graph."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class GradientTape:
    """Ordered record of primitive ops; single-use, replayed in reverse."""

    def __init__(self):
        self.entries = []  # (out, inputs, vjp)

    def record(self, out, inputs, vjp):
        self.entries.append((out, inputs, vjp))

    def clear(self):
        self.entries.clear()

    def gradients(self, loss, sources):
        """Functional reverse pass: returns {source: grad array}.

        Does not mutate any ``.grad`` field and does not clear the tape,
        so isolated passes (e.g. input-saliency) leave no trace behind.
        """
        _check_scalar(loss)
        grads = {id(loss): np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self.entries):
            gy = grads.get(id(out))
            if gy is None:
                continue
            for t, g in zip(inputs, vjp(gy)):
                if g is None or not t.requires_grad:
                    continue
                acc = grads.get(id(t))
                grads[id(t)] = g if acc is None else acc + g
        out = {}
        for s in sources:
            g = grads.get(id(s))
            out[s] = np.zeros_like(s.data) if g is None else g.reshape(s.data.shape)
        return out


_TAPE_STACK = [GradientTape()]


def active_tape():
    return _TAPE_STACK[-1]


@contextlib.contextmanager
def tape_scope(tape=None):
    """Push a fresh tape; ops recorded inside never touch the outer tape."""
    t = tape if tape is not None else GradientTape()
    _TAPE_STACK.append(t)
    try:
        yield t
    finally:
        _TAPE_STACK.pop()


def _check_scalar(loss):
    if loss.data.size != 1:
        raise NonScalarLossError(
            f"backward needs a scalar loss, got shape {loss.data.shape}"
        )


def backward(loss):
    """Populate ``.grad`` on every requires_grad leaf reachable from loss.

    Leaves recorded on the tape but not on a path to the loss receive zero
    gradients.  The tape is cleared afterwards (single-use contract).
    """
    tape = active_tape()
    _check_scalar(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    produced = {id(out) for out, _, _ in tape.entries}
    leaves = {}
    for out, inputs, vjp in reversed(tape.entries):
        for t in inputs:
            if t.requires_grad and id(t) not in produced:
                leaves[id(t)] = t
        gy = grads.get(id(out))
        if gy is None:
            continue
        for t, g in zip(inputs, vjp(gy)):
            if g is None or not t.requires_grad:
                continue
            acc = grads.get(id(t))
            grads[id(t)] = g if acc is None else acc + g
    for tid, leaf in leaves.items():
        g = grads.get(tid)
        leaf.grad = np.zeros_like(leaf.data) if g is None else g.reshape(leaf.data.shape)
    tape.clear()


def _record(out, inputs, vjp):
    if out.requires_grad:
        active_tape().record(out, inputs, vjp)
    return out


def _out(data, *inputs):
    return Tensor(data, requires_grad=any(t.requires_grad for t in inputs))


# ---------------------------------------------------------------------------
# broadcasting (leading-1 rule only)

def _broadcast_shapes(sa, sb, op):
    if sa == sb:
        return sa
    la, lb = len(sa), len(sb)
    n = max(la, lb)
    pa = (1,) * (n - la) + tuple(sa)
    pb = (1,) * (n - lb) + tuple(sb)
    out = []
    for i, (a, b) in enumerate(zip(pa, pb)):
        if a == b:
            out.append(a)
        elif a == 1 and pa[:i] == (1,) * i:
            out.append(b)
        elif b == 1 and pb[:i] == (1,) * i:
            out.append(a)
        else:
            raise ShapeMismatchError(
                f"{op}: shapes {tuple(sa)} and {tuple(sb)} are not compatible "
                "(only leading-1 broadcasting is supported)"
            )
    return tuple(out)


def _reduce_to(g, shape):
    """Sum gradient over the axes that were broadcast away."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# primitives

def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul: shapes {tuple(a.shape)} and {tuple(b.shape)} do not conform"
        )
    out = _out(a.data @ b.data, a, b)

    def vjp(gy):
        return gy @ b.data.T, a.data.T @ gy

    return _record(out, (a, b), vjp)


def add(a, b):
    _broadcast_shapes(a.shape, b.shape, "add")
    out = _out(a.data + b.data, a, b)

    def vjp(gy):
        return _reduce_to(gy, a.shape), _reduce_to(gy, b.shape)

    return _record(out, (a, b), vjp)


def sub(a, b):
    _broadcast_shapes(a.shape, b.shape, "sub")
    out = _out(a.data - b.data, a, b)

    def vjp(gy):
        return _reduce_to(gy, a.shape), _reduce_to(-gy, b.shape)

    return _record(out, (a, b), vjp)


def mul(a, b):
    _broadcast_shapes(a.shape, b.shape, "mul")
    out = _out(a.data * b.data, a, b)
    ad, bd = a.data, b.data

    def vjp(gy):
        return _reduce_to(gy * bd, a.shape), _reduce_to(gy * ad, b.shape)

    return _record(out, (a, b), vjp)


def scale(a, c):
    c = float(c)
    out = _out(a.data * c, a)

    def vjp(gy):
        return (gy * c,)

    return _record(out, (a,), vjp)


def tanh(a):
    y = K.tanh_fwd(_2d(a.data))
    out = _out(y.reshape(a.data.shape), a)

    def vjp(gy):
        return (K.tanh_bwd(y, _2d(gy)).reshape(a.data.shape),)

    return _record(out, (a,), vjp)


def relu(a):
    y = K.relu_fwd(_2d(a.data))
    out = _out(y.reshape(a.data.shape), a)

    def vjp(gy):
        return (K.relu_bwd(y, _2d(gy)).reshape(a.data.shape),)

    return _record(out, (a,), vjp)


def layernorm(a, eps=LAYERNORM_EPS):
    """Normalize each row of a 2-D tensor to zero mean / unit variance.

    No affine terms; a constant row maps to zeros (the eps keeps the
    zero-variance case finite).
    """
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"layernorm expects 2-D input, got {tuple(a.shape)}")
    y, inv_std = K.layernorm_fwd(np.ascontiguousarray(a.data), eps)
    out = _out(y, a)

    def vjp(gy):
        return (K.layernorm_bwd(y, inv_std, np.ascontiguousarray(gy)),)

    return _record(out, (a,), vjp)


def tsum(a):
    out = _out(np.array(a.data.sum()), a)

    def vjp(gy):
        return (np.broadcast_to(gy, a.data.shape).copy(),)

    return _record(out, (a,), vjp)


def tmean(a):
    n = a.data.size
    out = _out(np.array(a.data.mean()), a)

    def vjp(gy):
        return (np.broadcast_to(gy / n, a.data.shape).copy(),)

    return _record(out, (a,), vjp)


def sqnorm(a):
    """Squared L2 norm of all entries (a scalar)."""
    out = _out(np.array(np.dot(a.data.reshape(-1), a.data.reshape(-1))), a)
    ad = a.data

    def vjp(gy):
        return (2.0 * gy * ad,)

    return _record(out, (a,), vjp)


def l2norm_rows(a):
    """Row-wise L2 norm of a 2-D tensor: (n, k) -> (n,).

    The gradient uses a floor on the norm to stay finite at exactly-zero
    rows (subgradient 0 there).
    """
    if a.data.ndim != 2:
        raise ShapeMismatchError(f"l2norm_rows expects 2-D input, got {tuple(a.shape)}")
    y = np.sqrt(np.sum(a.data * a.data, axis=1))
    out = _out(y, a)
    ad = a.data

    def vjp(gy):
        denom = np.maximum(y, 1e-300)
        return (ad * (gy / denom)[:, None],)

    return _record(out, (a,), vjp)


def clip(a, lo, hi):
    """Elementwise clamp; gradient passes through the interior only."""
    ad = a.data
    out = _out(np.clip(ad, lo, hi), a)

    def vjp(gy):
        return (np.where((ad >= lo) & (ad <= hi), gy, 0.0),)

    return _record(out, (a,), vjp)


def concat(tensors, axis=1):
    datas = [t.data for t in tensors]
    base = list(datas[0].shape)
    for d in datas[1:]:
        if d.ndim != len(base) or any(
            d.shape[i] != base[i] for i in range(d.ndim) if i != axis % d.ndim
        ):
            raise ShapeMismatchError(
                f"concat: shapes {tuple(datas[0].shape)} and {tuple(d.shape)} "
                f"differ off axis {axis}"
            )
    out = Tensor(
        np.concatenate(datas, axis=axis),
        requires_grad=any(t.requires_grad for t in tensors),
    )
    sizes = [d.shape[axis % d.ndim] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(gy):
        return tuple(np.ascontiguousarray(g) for g in np.split(gy, splits, axis=axis))

    return _record(out, tuple(tensors), vjp)


def tslice(a, key):
    """Basic slicing; gradient scatters back into a zero array."""
    out = _out(a.data[key].copy(), a)

    def vjp(gy):
        g = np.zeros_like(a.data)
        g[key] = gy
        return (g,)

    return _record(out, (a,), vjp)


def _2d(x):
    return np.ascontiguousarray(x.reshape(-1, x.shape[-1]) if x.ndim != 2 else x)


_OPS = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "scalar-scale": scale,
    "tanh": tanh,
    "relu": relu,
    "layernorm": layernorm,
    "sum": tsum,
    "mean": tmean,
    "squared-l2-norm": sqnorm,
    "l2norm-rows": l2norm_rows,
    "clip": clip,
    "concat": concat,
    "slice": tslice,
}


def apply_op(kind, *args, **kwargs):
    """Dispatch a primitive by name; unknown kinds are an error."""
    try:
        fn = _OPS[kind]
    except KeyError:
        raise UnsupportedOpError(
            f"unsupported op kind {kind!r}; known: {sorted(_OPS)}"
        ) from None
    return fn(*args, **kwargs)
