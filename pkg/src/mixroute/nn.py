"""Multilayer-perceptron building blocks on top of the autodiff tape.

Parameters live in a single flat float64 buffer (:class:`ParamStore`) so the
optimizer can update everything with a handful of vectorized operations; the
per-layer tensors are views into that buffer.
"""

from __future__ import annotations

import json

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError

CHECKPOINT_VERSION = 1

ACTIVATIONS = {
    "tanh": ad.tanh,
    "relu": ad.relu,
    "identity": lambda t: t,
}


class ParamStore:
    """Named float64 parameter tensors backed by one flat buffer.

    Two-phase: register arrays while building the model, then ``finalize()``
    packs them into a contiguous vector and rebinds each tensor's data to a
    view of it.  Registration order is the canonical parameter order.
    """

    def __init__(self):
        self._order = []
        self._initial = {}
        self.tensors = {}
        self.flat = None

    def add(self, name, values):
        if self.flat is not None:
            raise ConfigError("ParamStore already finalized")
        if name in self.tensors:
            raise ConfigError(f"duplicate parameter name {name!r}")
        arr = np.ascontiguousarray(values, dtype=np.float64)
        t = ad.leaf(arr, requires_grad=True, name=name)
        self._order.append(name)
        self._initial[name] = arr
        self.tensors[name] = t
        return t

    def finalize(self):
        total = int(np.sum([self._initial[n].size for n in self._order])) if self._order else 0
        self.flat = np.empty(total, dtype=np.float64)
        offset = 0
        self._slices = {}
        for name in self._order:
            arr = self._initial[name]
            view = self.flat[offset : offset + arr.size]
            view[:] = arr.reshape(-1)
            self.tensors[name].data = view.reshape(arr.shape)
            self._slices[name] = (offset, arr.size, arr.shape)
            offset += arr.size
        self._initial = None
        return self

    @property
    def names(self):
        return list(self._order)

    def __getitem__(self, name):
        return self.tensors[name]

    def params(self):
        return [self.tensors[n] for n in self._order]

    def flat_gradient(self, grad_map):
        """Pack a {tensor: grad} map into a flat vector (zeros where absent)."""
        out = np.zeros_like(self.flat)
        for name in self._order:
            t = self.tensors[name]
            g = grad_map.get(t)
            if g is not None:
                off, size, _ = self._slices[name]
                out[off : off + size] = g.reshape(-1)
        return out

    def get_flat(self):
        return self.flat.copy()

    def set_flat(self, values):
        if values.shape != self.flat.shape:
            raise ShapeError("flat parameter size mismatch")
        self.flat[:] = values

    def state_dict(self):
        return {
            name: {
                "shape": list(self.tensors[name].data.shape),
                "values": [float(v) for v in self.tensors[name].data.reshape(-1)],
            }
            for name in self._order
        }

    def load_state_dict(self, state):
        for name in self._order:
            if name not in state:
                raise ConfigError(f"checkpoint missing parameter {name!r}")
            entry = state[name]
            t = self.tensors[name]
            if tuple(entry["shape"]) != t.data.shape:
                raise ShapeError(
                    f"checkpoint shape {entry['shape']} != {list(t.data.shape)} for {name!r}"
                )
            t.data[...] = np.asarray(entry["values"], dtype=np.float64).reshape(t.data.shape)


def xavier_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class Mlp:
    """Dense feed-forward stack: affine layers with per-layer activations."""

    def __init__(self, store, name, dims, activations=None, rng=None, zero_init_last=False):
        if len(dims) < 2:
            raise ConfigError(f"{name}: need at least input and output dims")
        if any(d < 1 for d in dims):
            raise ConfigError(f"{name}: layer dims must be positive, got {dims}")
        n_layers = len(dims) - 1
        if activations is None:
            activations = ["tanh"] * (n_layers - 1) + ["identity"]
        if len(activations) != n_layers:
            raise ConfigError(f"{name}: {n_layers} layers but {len(activations)} activations")
        unknown = set(activations) - set(ACTIVATIONS)
        if unknown:
            raise ConfigError(f"{name}: unknown activations {sorted(unknown)}")
        self.name = name
        self.dims = list(dims)
        self.activations = list(activations)
        self.weights = []
        self.biases = []
        for layer in range(n_layers):
            fan_in, fan_out = dims[layer], dims[layer + 1]
            if zero_init_last and layer == n_layers - 1:
                w = np.zeros((fan_out, fan_in))
            else:
                w = xavier_uniform(rng, fan_out, fan_in)
            self.weights.append(store.add(f"{name}/{layer}/w", w))
            self.biases.append(store.add(f"{name}/{layer}/b", np.zeros(fan_out)))

    def __call__(self, x):
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = ACTIVATIONS[act](ad.affine(h, w, b))
        return h


def save_checkpoint(path, store, meta=None):
    payload = {"version": CHECKPOINT_VERSION, "tensors": store.state_dict()}
    if meta:
        payload["meta"] = meta
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path, store):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {payload.get('version')!r}")
    store.load_state_dict(payload["tensors"])
    return payload.get("meta", {})
