"""Two-stage probabilistic routing over modality paths and task paradigms.

A modality router produces a 4-way simplex from the raw modalities (plus
availability bits); per-path task routers produce 2-way simplices over
STL/MTL.  Their outer product is the 8-way joint PMF over expert slots,
used for soft mixtures, expected losses, and hard Gumbel selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import NumericError, ShapeError
from .experts import N_SLOTS, PATHS, SLOTS, ModalityTransforms, paradigm_loss, slot_index
from .nn import Mlp

LOG_FLOOR = -1e9


class RouterNets:
    """Gating networks: one over raw modalities, one per transformed path."""

    def __init__(self, store, transforms: ModalityTransforms, hidden=(32,), rng=None):
        in_dim = transforms.d_num + transforms.d_text + 2  # + availability bits
        self.path_router = Mlp(
            store, "router/path", [in_dim, *hidden, len(PATHS)],
            ["tanh"] * len(hidden) + ["identity"], rng, zero_init_last=True,
        )
        self.paradigm_routers = {
            path: Mlp(
                store, f"router/paradigm/{path.name}",
                [transforms.input_dim(path), *hidden, 2],
                ["tanh"] * len(hidden) + ["identity"], rng, zero_init_last=True,
            )
            for path in PATHS
        }


@dataclass
class RoutingState:
    """Routing simplices for one batch.

    ``path_probs`` is (n, 4); ``paradigm_probs[i]`` is (n, 2) for path i;
    ``joint`` is the (n, 8) outer-product PMF in slot order.  Log variants
    are kept so downstream terms (entropy, Gumbel) stay numerically exact.
    ``path_inputs[i]`` carries the transformed input for path i so expert
    evaluation reuses the router's transforms.
    """

    path_probs: ad.Tensor
    paradigm_probs: list
    joint: ad.Tensor
    log_path_probs: ad.Tensor = None
    log_paradigm_probs: list = None
    log_joint: ad.Tensor = None
    path_inputs: list = None
    mode: str = "soft"
    selected: np.ndarray = None

    @property
    def n(self):
        return self.joint.shape[0]

    @classmethod
    def from_arrays(cls, path_probs, paradigm_probs):
        """Build a constant state from probability arrays (mainly for tests)."""
        path_probs = np.atleast_2d(np.asarray(path_probs, dtype=np.float64))
        paradigm_probs = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in paradigm_probs]
        joint = np.concatenate(
            [path_probs[:, i : i + 1] * paradigm_probs[i] for i in range(len(PATHS))], axis=1
        )
        floored = lambda p: np.maximum(np.log(np.maximum(p, 1e-300)), LOG_FLOOR)
        return cls(
            path_probs=ad.leaf(path_probs),
            paradigm_probs=[ad.leaf(p) for p in paradigm_probs],
            joint=ad.leaf(joint),
            log_path_probs=ad.leaf(floored(path_probs)),
            log_paradigm_probs=[ad.leaf(floored(p)) for p in paradigm_probs],
            log_joint=ad.leaf(floored(joint)),
        )


def route(nets, transforms, x_num, x_text, availability=None):
    """Evaluate both routing stages; returns a RoutingState for the batch."""
    x_num = np.atleast_2d(np.asarray(x_num, dtype=np.float64))
    x_text = np.atleast_2d(np.asarray(x_text, dtype=np.float64))
    n = x_num.shape[0]
    if x_text.shape[0] != n:
        raise ShapeError("modalities disagree on batch size")
    if availability is None:
        availability = np.ones((n, 2))
    router_in = ad.leaf(np.concatenate([x_num, x_text, availability], axis=1))

    logits = nets.path_router(router_in)
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("non-finite modality-router logits")
    path_probs = ad.softmax(logits)
    log_path_probs = ad.log_softmax(logits)

    paradigm_probs, log_paradigm_probs, path_inputs = [], [], []
    joint_cols, log_joint_cols = [], []
    for i, path in enumerate(PATHS):
        xi = ad.leaf(transforms.apply(path, x_num, x_text))
        path_inputs.append(xi)
        tlogits = nets.paradigm_routers[path](xi)
        if not np.all(np.isfinite(tlogits.data)):
            raise NumericError(f"non-finite task-router logits on path {path.name}")
        probs = ad.softmax(tlogits)
        log_probs = ad.log_softmax(tlogits)
        paradigm_probs.append(probs)
        log_paradigm_probs.append(log_probs)
        joint_cols.append(ad.mul(ad.narrow(path_probs, i, i + 1), probs))
        log_joint_cols.append(ad.add(ad.narrow(log_path_probs, i, i + 1), log_probs))

    return RoutingState(
        path_probs=path_probs,
        paradigm_probs=paradigm_probs,
        joint=ad.concat(joint_cols, axis=1),
        log_path_probs=log_path_probs,
        log_paradigm_probs=log_paradigm_probs,
        log_joint=ad.concat(log_joint_cols, axis=1),
        path_inputs=path_inputs,
    )


def one_hot_state(n, path, paradigm):
    """Constant routing state with all mass on one slot (router bypass)."""
    s = slot_index(path, paradigm)
    path_probs = np.zeros((n, len(PATHS)))
    path_probs[:, int(path)] = 1.0
    paradigm_probs = []
    for p in PATHS:
        row = np.full((n, 2), 0.5)
        if int(p) == int(path):
            row = np.zeros((n, 2))
            row[:, int(paradigm)] = 1.0
        paradigm_probs.append(row)
    state = RoutingState.from_arrays(path_probs, paradigm_probs)
    state.selected = np.full(n, s, dtype=np.int64)
    return state


def soft_predict(state, outputs):
    """Joint-PMF-weighted mixture of the eight slot means, per task."""
    means1 = ad.concat([o.mean1 for o in outputs], axis=1)
    means2 = ad.concat([o.mean2 for o in outputs], axis=1)
    y1 = ad.sum(ad.mul(state.joint, means1), axis=1, keepdims=True)
    y2 = ad.sum(ad.mul(state.joint, means2), axis=1, keepdims=True)
    return y1, y2


def slot_losses(outputs, y1, y2):
    """Stack the eight per-slot paradigm losses into an (n, 8) tensor."""
    if len(outputs) != N_SLOTS:
        raise ShapeError(f"expected {N_SLOTS} expert outputs, got {len(outputs)}")
    cols = [paradigm_loss(j, o, y1, y2) for (_, j), o in zip(SLOTS, outputs)]
    return ad.concat(cols, axis=1)


def expected_loss(state, outputs, y1, y2):
    """Probability-weighted sum of per-slot losses, averaged over the batch.

    In soft mode gradients flow to the router logits and to every expert.
    """
    losses = slot_losses(outputs, y1, y2)
    per_sample = ad.sum(ad.mul(state.joint, losses), axis=1, keepdims=True)
    return ad.mean(per_sample)


def weighted_loss(weights, outputs, y1, y2):
    """Like expected_loss but with explicit (n, 8) weights (hard routing)."""
    losses = slot_losses(outputs, y1, y2)
    per_sample = ad.sum(ad.mul(weights, losses), axis=1, keepdims=True)
    return ad.mean(per_sample)


def gumbel_noise(seed, sample_indices, draw, k=N_SLOTS):
    """Standard Gumbel draws from per-sample Philox substreams.

    Streams are keyed by (seed, sample index) with the draw counter in the
    Philox counter block, so batch order and parallelism cannot change the
    noise a sample receives.
    """
    sample_indices = np.asarray(sample_indices, dtype=np.uint64)
    out = np.empty((len(sample_indices), k))
    key = np.uint64(np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF))
    for row, idx in enumerate(sample_indices):
        bits = np.random.Philox(counter=[np.uint64(draw), 0, 0, 0], key=[key, idx])
        out[row] = np.random.Generator(bits).gumbel(size=k)
    return out


def gumbel_select(state, tau, seed, straight_through=True, sample_indices=None, draw=0):
    """Sample relaxed one-hot slot weights via the Gumbel-Softmax trick.

    Returns (weights, selected): weights is an (n, 8) tensor - softmax of
    (log joint + Gumbel noise) / tau, forwarded as an exact one-hot when
    ``straight_through`` - and ``selected`` is the argmax slot per sample
    (ties broken by lowest slot index).
    """
    if tau <= 0:
        raise NumericError("gumbel temperature must be positive")
    if state.log_joint is not None:
        log_joint = state.log_joint
    else:
        vals = np.maximum(np.log(np.maximum(state.joint.data, 1e-300)), LOG_FLOOR)
        log_joint = ad.leaf(vals)
    n = log_joint.shape[0]
    if sample_indices is None:
        sample_indices = np.arange(n)
    noise = gumbel_noise(seed, sample_indices, draw, k=log_joint.shape[1])
    scaled = ad.mul(ad.add(log_joint, ad.leaf(noise)), 1.0 / tau)
    soft = ad.softmax(scaled)
    selected = np.argmax(soft.data, axis=1)
    if straight_through:
        hard = np.zeros_like(soft.data)
        hard[np.arange(n), selected] = 1.0
        weights = ad.add(ad.leaf(hard - soft.data), soft)
    else:
        weights = soft
    state.mode = "hard"
    state.selected = selected
    return weights, selected


def entropy_penalty(state, coef):
    """Entropy bonus: - coef * (H(path simplex) + mean over paths of H(task row)).

    Added to the training loss; minimizing it maximizes routing entropy,
    which discourages early collapse.  A zero coefficient contributes an
    exact constant zero (no gradient reaches the routers).
    """
    if coef == 0.0:
        return ad.leaf(0.0)
    h_path = ad.neg(ad.sum(ad.mul(state.path_probs, state.log_path_probs), axis=1))
    total = ad.mean(h_path)
    for probs, log_probs in zip(state.paradigm_probs, state.log_paradigm_probs):
        h = ad.neg(ad.sum(ad.mul(probs, log_probs), axis=1))
        total = ad.add(total, ad.mul(ad.mean(h), 1.0 / len(PATHS)))
    return ad.mul(total, -coef)


def joint_pmf(states):
    """Average joint PMF and the per-sample matrix, slot order preserved."""
    if isinstance(states, RoutingState):
        matrix = states.joint.data
    elif isinstance(states, np.ndarray):
        matrix = np.atleast_2d(states)
    else:
        matrix = np.concatenate([s.joint.data for s in states], axis=0)
    if matrix.shape[0] == 0:
        raise ShapeError("joint_pmf of an empty batch")
    return matrix.mean(axis=0), matrix
