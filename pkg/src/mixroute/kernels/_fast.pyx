# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot forward/backward array operations.

Same contracts as ``numpy_backend``; matmuls go through BLAS dgemm, the
elementwise passes are fused single loops (no temporaries).
"""

import numpy as np

from libc.math cimport cos as c_cos
from libc.math cimport exp as c_exp
from libc.math cimport log as c_log
from libc.math cimport sin as c_sin
from libc.math cimport tanh as c_tanh
from scipy.linalg.cython_blas cimport dgemm

name = "compiled"


cdef inline void _gemm(char ta, char tb, int m, int n, int k,
                       double* a, int lda, double* b, int ldb,
                       double* c, int ldc) nogil:
    cdef double one = 1.0
    cdef double zero = 0.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &zero, c, &ldc)


# -- affine ------------------------------------------------------------------

def affine_fwd(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    # x: (m, k) row-major, w: (n, k) row-major -> out: (m, n) = x @ w.T + b
    cdef int m = x.shape[0], k = x.shape[1], n = w.shape[0]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        # BLAS sees our row-major buffers as their transposes:
        # out^T (n x m) = w (n x k) @ x^T (k x m)
        _gemm(b'T', b'N', n, m, k, &w[0, 0], k, &x[0, 0], k, &out[0, 0], n)
        for i in range(m):
            for j in range(n):
                out[i, j] += b[j]
    return out_arr


def affine_bwd(double[:, ::1] x, double[:, ::1] w, double[:, ::1] g):
    # g: (m, n); returns (dx (m, k), dw (n, k), db (n,))
    cdef int m = x.shape[0], k = x.shape[1], n = w.shape[0]
    dx_arr = np.empty((m, k), dtype=np.float64)
    dw_arr = np.empty((n, k), dtype=np.float64)
    db_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t i, j
    with nogil:
        # dx^T (k x m) = w^T (k x n) @ g^T (n x m)
        _gemm(b'N', b'N', k, m, n, &w[0, 0], k, &g[0, 0], n, &dx[0, 0], k)
        # dw^T (k x n) = x^T (k x m) @ g (m x n)
        _gemm(b'N', b'T', k, n, m, &x[0, 0], k, &g[0, 0], n, &dw[0, 0], k)
        for i in range(m):
            for j in range(n):
                db[j] += g[i, j]
    return dx_arr, dw_arr, db_arr


# -- elementwise -------------------------------------------------------------

cdef inline double[::1] _flat(arr):
    return arr.reshape(-1)


def tanh_fwd(x):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = c_tanh(xv[i])
    return out


def tanh_bwd(y, g):
    out = np.empty_like(y)
    cdef double[::1] yv = _flat(y), gv = _flat(g), ov = _flat(out)
    cdef Py_ssize_t i, n = yv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] * (1.0 - yv[i] * yv[i])
    return out


def relu_fwd(x):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = xv[i] if xv[i] > 0.0 else 0.0
    return out


def relu_bwd(x, g):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), gv = _flat(g), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] if xv[i] > 0.0 else 0.0
    return out


def sin_fwd(x):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = c_sin(xv[i])
    return out


def sin_bwd(x, g):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), gv = _flat(g), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] * c_cos(xv[i])
    return out


def cos_fwd(x):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = c_cos(xv[i])
    return out


def cos_bwd(x, g):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), gv = _flat(g), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = -gv[i] * c_sin(xv[i])
    return out


def exp_fwd(x):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = c_exp(xv[i])
    return out


def exp_bwd(y, g):
    out = np.empty_like(y)
    cdef double[::1] yv = _flat(y), gv = _flat(g), ov = _flat(out)
    cdef Py_ssize_t i, n = yv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] * yv[i]
    return out


def log_fwd(x):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = c_log(xv[i])
    return out


def log_bwd(x, g):
    out = np.empty_like(x)
    cdef double[::1] xv = _flat(x), gv = _flat(g), ov = _flat(out)
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] / xv[i]
    return out


# -- row softmax (last axis of a 2-D array) ----------------------------------

def softmax_fwd(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], k = x.shape[1], i, j
    out_arr = np.empty((m, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double mx, s
    with nogil:
        for i in range(m):
            mx = x[i, 0]
            for j in range(1, k):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(k):
                out[i, j] = c_exp(x[i, j] - mx)
                s += out[i, j]
            for j in range(k):
                out[i, j] /= s
    return out_arr


def softmax_bwd(double[:, ::1] y, double[:, ::1] g):
    cdef Py_ssize_t m = y.shape[0], k = y.shape[1], i, j
    out_arr = np.empty((m, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double dot
    with nogil:
        for i in range(m):
            dot = 0.0
            for j in range(k):
                dot += g[i, j] * y[i, j]
            for j in range(k):
                out[i, j] = y[i, j] * (g[i, j] - dot)
    return out_arr


def log_softmax_fwd(double[:, ::1] x):
    cdef Py_ssize_t m = x.shape[0], k = x.shape[1], i, j
    out_arr = np.empty((m, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double mx, s
    with nogil:
        for i in range(m):
            mx = x[i, 0]
            for j in range(1, k):
                if x[i, j] > mx:
                    mx = x[i, j]
            s = 0.0
            for j in range(k):
                s += c_exp(x[i, j] - mx)
            s = c_log(s)
            for j in range(k):
                out[i, j] = x[i, j] - mx - s
    return out_arr


def log_softmax_bwd(double[:, ::1] out, double[:, ::1] g):
    cdef Py_ssize_t m = out.shape[0], k = out.shape[1], i, j
    res_arr = np.empty((m, k), dtype=np.float64)
    cdef double[:, ::1] res = res_arr
    cdef double s
    with nogil:
        for i in range(m):
            s = 0.0
            for j in range(k):
                s += g[i, j]
            for j in range(k):
                res[i, j] = g[i, j] - c_exp(out[i, j]) * s
    return res_arr
