"""Numpy fallback implementations of the hot kernels.

Semantics must match ``_core.pyx`` exactly (same reduction order per row,
same in-place contracts); the benchmark and the backend-equivalence tests
compare the two.  Matrix products are delegated to BLAS through numpy in
both backends, so only elementwise/fused work lives here.
"""

import numpy as np

NAME = "py"


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, gy):
    return gy * (1.0 - y * y)


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(y, gy):
    return np.where(y > 0.0, gy, 0.0)


def layernorm_fwd(x, eps):
    """Row-wise normalization over the last axis of a 2-D array.

    Returns (y, inv_std); inv_std is cached for the backward pass.
    """
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    return xc * inv_std, inv_std[:, 0]


def layernorm_bwd(y, inv_std, gy):
    g_mean = gy.mean(axis=1, keepdims=True)
    gy_y_mean = np.mean(gy * y, axis=1, keepdims=True)
    return inv_std[:, None] * (gy - g_mean - y * gy_y_mean)


def adam_step(p, g, m, v, t, lr, beta1, beta2, eps):
    """Fused in-place Adam update on flat f64 arrays. ``t`` is 1-based."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def ema_step(target, online, tau):
    """In-place target <- tau*online + (1-tau)*target."""
    target *= 1.0 - tau
    target += tau * online


def clip_inplace(x, lo, hi):
    np.clip(x, lo, hi, out=x)
