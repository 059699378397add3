# Fused f64 kernels for the training hot path. Mirrors _pure.py.
#
# Loops are written for C-contiguous inputs; callers guarantee contiguity.
# Matmul is intentionally absent: BLAS via numpy wins at these sizes in
# both backends.

import numpy as np

cimport cython
from libc.math cimport sqrt, tanh, pow

NAME = "c"


def tanh_fwd(double[:, ::1] x not None):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], i, j
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(k):
            o[i, j] = tanh(x[i, j])
    return out


def tanh_bwd(double[:, ::1] y not None, double[:, ::1] gy not None):
    cdef Py_ssize_t n = y.shape[0], k = y.shape[1], i, j
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(k):
            o[i, j] = gy[i, j] * (1.0 - y[i, j] * y[i, j])
    return out


def relu_fwd(double[:, ::1] x not None):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], i, j
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(k):
            o[i, j] = x[i, j] if x[i, j] > 0.0 else 0.0
    return out


def relu_bwd(double[:, ::1] y not None, double[:, ::1] gy not None):
    cdef Py_ssize_t n = y.shape[0], k = y.shape[1], i, j
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        for j in range(k):
            o[i, j] = gy[i, j] if y[i, j] > 0.0 else 0.0
    return out


def layernorm_fwd(double[:, ::1] x not None, double eps):
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], i, j
    cdef double mu, var, d, istd
    y = np.empty((n, k), dtype=np.float64)
    inv_std = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] yv = y
    cdef double[::1] sv = inv_std
    for i in range(n):
        mu = 0.0
        for j in range(k):
            mu += x[i, j]
        mu /= k
        var = 0.0
        for j in range(k):
            d = x[i, j] - mu
            var += d * d
        var /= k
        istd = 1.0 / sqrt(var + eps)
        sv[i] = istd
        for j in range(k):
            yv[i, j] = (x[i, j] - mu) * istd
    return y, inv_std


def layernorm_bwd(double[:, ::1] y not None, double[::1] inv_std not None,
                  double[:, ::1] gy not None):
    cdef Py_ssize_t n = y.shape[0], k = y.shape[1], i, j
    cdef double g_mean, gyy_mean
    out = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        g_mean = 0.0
        gyy_mean = 0.0
        for j in range(k):
            g_mean += gy[i, j]
            gyy_mean += gy[i, j] * y[i, j]
        g_mean /= k
        gyy_mean /= k
        for j in range(k):
            o[i, j] = inv_std[i] * (gy[i, j] - g_mean - y[i, j] * gyy_mean)
    return out


def adam_step(double[::1] p not None, double[::1] g not None,
              double[::1] m not None, double[::1] v not None,
              long t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0], i
    cdef double c1 = 1.0 - pow(beta1, t)
    cdef double c2 = 1.0 - pow(beta2, t)
    cdef double mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mhat = m[i] / c1
        vhat = v[i] / c2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)


def ema_step(double[::1] target not None, double[::1] online not None, double tau):
    cdef Py_ssize_t n = target.shape[0], i
    for i in range(n):
        target[i] = (1.0 - tau) * target[i] + tau * online[i]


def clip_inplace(double[::1] x not None, double lo, double hi):
    cdef Py_ssize_t n = x.shape[0], i
    for i in range(n):
        if x[i] < lo:
            x[i] = lo
        elif x[i] > hi:
            x[i] = hi
