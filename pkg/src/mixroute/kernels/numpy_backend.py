"""Reference numpy implementation of the hot array kernels.

The compiled backend in ``_fast.pyx`` implements the same contracts; this
module is the always-available fallback and the semantic reference.
"""

import numpy as np

name = "python"


# -- affine ------------------------------------------------------------------

def affine_fwd(x, w, b):
    # x: (m, k), w: (n, k), b: (n,) -> (m, n)
    return x @ w.T + b


def affine_bwd(x, w, g):
    # returns (dx, dw, db)
    return g @ w, g.T @ x, g.sum(axis=0)


# -- elementwise -------------------------------------------------------------

def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, g):
    return g * (1.0 - y * y)


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, g):
    return np.where(x > 0.0, g, 0.0)


def sin_fwd(x):
    return np.sin(x)


def sin_bwd(x, g):
    return g * np.cos(x)


def cos_fwd(x):
    return np.cos(x)


def cos_bwd(x, g):
    return -g * np.sin(x)


def exp_fwd(x):
    return np.exp(x)


def exp_bwd(y, g):
    return g * y


def log_fwd(x):
    return np.log(x)


def log_bwd(x, g):
    return g / x


# -- row softmax (last axis of a 2-D array) ----------------------------------

def softmax_fwd(x):
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y, g):
    dot = (g * y).sum(axis=1, keepdims=True)
    return y * (g - dot)


def log_softmax_fwd(x):
    m = x.max(axis=1, keepdims=True)
    shifted = x - m
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse


def log_softmax_bwd(out, g):
    return g - np.exp(out) * g.sum(axis=1, keepdims=True)
