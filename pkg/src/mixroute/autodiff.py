"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` records every primitive applied while it is the active
context; :meth:`Tape.backward` replays the records once, in reverse, to
accumulate vector-Jacobian products.  Everything learnable in the package
(experts, routers, losses) is composed from the primitives here.

Heavy kernels (affine, activations, softmax) dispatch through
``mixroute.kernels`` so the compiled backend can replace them.
"""

from __future__ import annotations

import threading

import numpy as np

from . import kernels
from .errors import ContractError, NumericError, ShapeError

GUARD_EPS = 1e-12

_tls = threading.local()


def _tape_stack():
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = _tls.stack = []
    return stack


def current_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_live")

    def __init__(self, data, requires_grad=False, name=None, _validate=True):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if _validate and not np.all(np.isfinite(arr)):
            raise NumericError(f"non-finite values entering graph ({name or 'tensor'})")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._live = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data, _validate=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = self.name or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, grad={self.requires_grad})"

    # arithmetic sugar; the module-level functions do the real work
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def leaf(data, requires_grad=False, name=None):
    """Create a graph-boundary tensor (validates finiteness)."""
    return Tensor(data, requires_grad=requires_grad, name=name)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


class _Node:
    __slots__ = ("name", "out", "inputs", "backward")

    def __init__(self, name, out, inputs, backward):
        self.name = name
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Single-owner: use as a context manager around the forward computation.
    Nodes are appended in execution order, so the list is already a
    topological order and one reverse sweep settles every gradient.
    """

    def __init__(self):
        self._nodes = []

    def __len__(self):
        return len(self._nodes)

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self

    def backward(self, loss):
        """Accumulate gradients of a scalar loss into every reachable leaf.

        Returns a dict mapping leaf tensors (requires_grad or not) to their
        gradient arrays; also adds into ``.grad`` of requires_grad leaves.
        """
        if not isinstance(loss, Tensor):
            raise ContractError("loss must be a Tensor")
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        holders = {id(loss): loss}
        for node in reversed(self._nodes):
            g = grads.pop(id(node.out), None)
            holders.pop(id(node.out), None)
            if g is None:
                continue
            input_grads = node.backward(g)
            for t, gi in zip(node.inputs, input_grads):
                if gi is None or not t._live:
                    continue
                tid = id(t)
                if tid in grads:
                    grads[tid] = grads[tid] + gi
                else:
                    grads[tid] = gi
                    holders[tid] = t
        result = {}
        for tid, g in grads.items():
            t = holders[tid]
            result[t] = g
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
        return result

    def gradients(self, loss, params):
        """Gradient list aligned with ``params``; unreachable ones are zero."""
        table = self.backward(loss)
        return [table.get(p, np.zeros_like(p.data)) for p in params]


def _record(name, out_data, inputs, backward):
    out = Tensor(out_data, _validate=False)
    tape = current_tape()
    if tape is not None and any(t._live for t in inputs):
        out._live = True
        tape._nodes.append(_Node(name, out, inputs, backward))
    return out


def _unbroadcast(g, shape):
    """Sum a gradient down to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: cannot broadcast {a.data.shape} with {b.data.shape}") from exc


# -- elementwise arithmetic ----------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record("add", a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _record("sub", a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _record("mul", ad * bd, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    ad, bd = a.data, b.data
    if np.any(np.abs(bd) < GUARD_EPS):
        raise NumericError("division by value smaller than guard epsilon")
    out = ad / bd

    def backward(g):
        return _unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)

    return _record("div", out, (a, b), backward)


def neg(a):
    a = as_tensor(a)

    def backward(g):
        return (-g,)

    return _record("neg", -a.data, (a,), backward)


# -- dense layers --------------------------------------------------------------

def affine(x, w, b):
    """x @ w.T + b with w shaped (out_dim, in_dim)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if w.ndim != 2 or b.ndim != 1 or w.data.shape[0] != b.data.shape[0]:
        raise ShapeError(f"affine: bad parameter shapes w={w.data.shape} b={b.data.shape}")
    vector_in = x.ndim == 1
    xd = x.data.reshape(1, -1) if vector_in else x.data
    if xd.ndim != 2 or xd.shape[1] != w.data.shape[1]:
        raise ShapeError(f"affine: input {x.data.shape} incompatible with w={w.data.shape}")
    out = kernels.active.affine_fwd(xd, w.data, b.data)

    def backward(g):
        g2 = g.reshape(1, -1) if vector_in else np.ascontiguousarray(g)
        gx, gw, gb = kernels.active.affine_bwd(xd, w.data, g2)
        return gx.reshape(x.data.shape), gw, gb

    return _record("affine", out[0] if vector_in else out, (x, w, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ bd.T, ad.T @ g

    return _record("matmul", ad @ bd, (a, b), backward)


# -- pointwise nonlinearities ----------------------------------------------------

def tanh(x):
    x = as_tensor(x)
    y = kernels.active.tanh_fwd(x.data)

    def backward(g):
        return (kernels.active.tanh_bwd(y, g),)

    return _record("tanh", y, (x,), backward)


def relu(x):
    x = as_tensor(x)
    xd = x.data

    def backward(g):
        # subgradient at 0 is 0
        return (kernels.active.relu_bwd(xd, g),)

    return _record("relu", kernels.active.relu_fwd(xd), (x,), backward)


def sin(x):
    x = as_tensor(x)
    xd = x.data

    def backward(g):
        return (kernels.active.sin_bwd(xd, g),)

    return _record("sin", kernels.active.sin_fwd(xd), (x,), backward)


def cos(x):
    x = as_tensor(x)
    xd = x.data

    def backward(g):
        return (kernels.active.cos_bwd(xd, g),)

    return _record("cos", kernels.active.cos_fwd(xd), (x,), backward)


def exp(x):
    x = as_tensor(x)
    y = kernels.active.exp_fwd(x.data)
    if not np.all(np.isfinite(y)):
        raise NumericError("exp overflow")

    def backward(g):
        return (kernels.active.exp_bwd(y, g),)

    return _record("exp", y, (x,), backward)


def log(x):
    x = as_tensor(x)
    xd = x.data
    if np.any(xd < GUARD_EPS):
        raise NumericError("log of value smaller than guard epsilon")

    def backward(g):
        return (kernels.active.log_bwd(xd, g),)

    return _record("log", kernels.active.log_fwd(xd), (x,), backward)


def clamp(x, lo, hi):
    """Clip values to [lo, hi]; gradient passes through the interior only."""
    x = as_tensor(x)
    xd = x.data

    def backward(g):
        return (np.where((xd >= lo) & (xd <= hi), g, 0.0),)

    return _record("clamp", np.clip(xd, lo, hi), (x,), backward)


# -- softmax family ---------------------------------------------------------------

def _rows(x, axis):
    """View of x with `axis` moved last and flattened to 2-D."""
    xd = x.data
    if xd.ndim == 0:
        raise ShapeError("softmax needs at least one axis")
    moved = np.moveaxis(xd, axis, -1)
    return np.ascontiguousarray(moved.reshape(-1, moved.shape[-1])), moved.shape


def _unrows(rows2d, moved_shape, axis):
    return np.moveaxis(rows2d.reshape(moved_shape), -1, axis)


def softmax(x, axis=-1):
    """Max-shifted softmax along the designated axis."""
    x = as_tensor(x)
    rows, moved_shape = _rows(x, axis)
    y2 = kernels.active.softmax_fwd(rows)
    y = _unrows(y2, moved_shape, axis)

    def backward(g):
        g2 = np.ascontiguousarray(np.moveaxis(g, axis, -1).reshape(-1, moved_shape[-1]))
        return (_unrows(kernels.active.softmax_bwd(y2, g2), moved_shape, axis),)

    return _record("softmax", y, (x,), backward)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    rows, moved_shape = _rows(x, axis)
    out2 = kernels.active.log_softmax_fwd(rows)
    out = _unrows(out2, moved_shape, axis)

    def backward(g):
        g2 = np.ascontiguousarray(np.moveaxis(g, axis, -1).reshape(-1, moved_shape[-1]))
        return (_unrows(kernels.active.log_softmax_bwd(out2, g2), moved_shape, axis),)

    return _record("log_softmax", out, (x,), backward)


# -- shape manipulation -------------------------------------------------------------

def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat of nothing")
    ndim = tensors[0].ndim
    if any(t.ndim != ndim for t in tensors):
        raise ShapeError("concat: rank mismatch")
    axis = axis % ndim if ndim else 0
    sizes = [t.data.shape[axis] for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from exc
    offsets = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, offsets, axis=axis))

    return _record("concat", out, tuple(tensors), backward)


def narrow(x, lo, hi):
    """Slice [lo, hi) along the last axis."""
    x = as_tensor(x)
    xd = x.data
    if not (0 <= lo < hi <= xd.shape[-1]):
        raise ShapeError(f"narrow: [{lo}, {hi}) out of bounds for {xd.shape}")
    out = np.ascontiguousarray(xd[..., lo:hi])

    def backward(g):
        gx = np.zeros_like(xd)
        gx[..., lo:hi] = g
        return (gx,)

    return _record("narrow", out, (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    orig = x.data.shape

    def backward(g):
        return (g.reshape(orig),)

    return _record("reshape", x.data.reshape(shape), (x,), backward)


# -- reductions ------------------------------------------------------------------

def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    xd = x.data
    out = np.sum(xd, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.full_like(xd, float(g)),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.ascontiguousarray(np.broadcast_to(ge, xd.shape)),)

    return _record("sum", out, (x,), backward)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    xd = x.data
    if axis is None:
        count = xd.size
    elif isinstance(axis, tuple):
        count = int(np.prod([xd.shape[a] for a in axis]))
    else:
        count = xd.shape[axis]
    out = np.mean(xd, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.full_like(xd, float(g) / count),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.ascontiguousarray(np.broadcast_to(ge, xd.shape)) / count,)

    return _record("mean", out, (x,), backward)


# -- gradient verification ---------------------------------------------------------

class GradCheckReport:
    """Comparison of tape gradients against central finite differences."""

    def __init__(self, max_rel_err, failures, tolerance):
        self.max_rel_err = max_rel_err
        self.failures = failures
        self.tolerance = tolerance

    @property
    def passed(self):
        return not self.failures

    def __repr__(self):
        return (
            f"GradCheckReport(max_rel_err={self.max_rel_err:.3e}, "
            f"failures={len(self.failures)}, tolerance={self.tolerance:.1e})"
        )


def grad_check(expr, params, step=1e-5, tolerance=1e-4):
    """Check tape gradients of ``expr()`` against central differences.

    ``expr`` must rebuild the scalar loss from the current values of
    ``params`` on every call; parameter entries are perturbed in place.
    """
    if step <= 0:
        raise ContractError("grad_check step must be positive")
    with Tape() as tape:
        loss = expr()
    grads = tape.gradients(loss, params)

    max_rel = 0.0
    failures = []
    for pi, (p, g) in enumerate(zip(params, grads)):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = expr().item()
            flat[i] = orig - step
            down = expr().item()
            flat[i] = orig
            fd = (up - down) / (2.0 * step)
            ad = gflat[i]
            rel = abs(ad - fd) / max(1.0, abs(ad), abs(fd))
            if rel > max_rel:
                max_rel = rel
            if rel > tolerance:
                failures.append((pi, i, ad, fd, rel))
    return GradCheckReport(max_rel, failures, tolerance)
