"""The eight expert paths: four modality transforms crossed with two
task-sharing paradigms, each emitting heteroscedastic predictions for both
regression tasks.

Path order is T1, T2, N1, N2 (indices 0..3); paradigm order STL, MTL.
Expert slot ``s`` for (path, paradigm) is ``2 * path + paradigm``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .nn import Mlp


class ModalityPath(IntEnum):
    T1 = 0  # text vector only
    T2 = 1  # textualized-numeric surrogate + text
    N1 = 2  # numeric vector only
    N2 = 3  # embedded-text surrogate + numeric


class TaskParadigm(IntEnum):
    STL = 0  # disjoint per-task networks
    MTL = 1  # shared encoder + task heads


PATHS = tuple(ModalityPath)
PARADIGMS = tuple(TaskParadigm)
SLOTS = tuple((p, j) for p in PATHS for j in PARADIGMS)
N_SLOTS = len(SLOTS)


def slot_index(path, paradigm):
    return 2 * int(path) + int(paradigm)


def slot_name(path, paradigm):
    return f"{ModalityPath(path).name}/{TaskParadigm(paradigm).name}"


SLOT_NAMES = tuple(slot_name(p, j) for p, j in SLOTS)


@dataclass
class ModalityTransforms:
    """Frozen random linear surrogates for the two cross-modal conversions.

    ``num_to_text`` maps a numeric vector into text space (the textualized
    numeric used by T2); ``text_to_num`` maps a text vector into numeric
    space (the embedding used by N2).  Both are fixed per experiment so T2
    and N2 remain genuinely distinct representations.
    """

    num_to_text: np.ndarray  # (d_text, d_num)
    text_to_num: np.ndarray  # (d_num, d_text)

    @classmethod
    def create(cls, d_num, d_text, rng):
        return cls(
            num_to_text=rng.normal(size=(d_text, d_num)) / np.sqrt(d_num),
            text_to_num=rng.normal(size=(d_num, d_text)) / np.sqrt(d_text),
        )

    @property
    def d_num(self):
        return self.num_to_text.shape[1]

    @property
    def d_text(self):
        return self.num_to_text.shape[0]

    def input_dim(self, path):
        path = ModalityPath(path)
        if path == ModalityPath.T1:
            return self.d_text
        if path == ModalityPath.N1:
            return self.d_num
        if path == ModalityPath.T2:
            return 2 * self.d_text
        return 2 * self.d_num

    def apply(self, path, x_num, x_text):
        """Modality-transformed input for one path; inputs are (n, d) arrays."""
        x_num = np.atleast_2d(np.asarray(x_num, dtype=np.float64))
        x_text = np.atleast_2d(np.asarray(x_text, dtype=np.float64))
        if x_num.shape[1] != self.d_num or x_text.shape[1] != self.d_text:
            raise ShapeError(
                f"modality dims ({x_num.shape[1]}, {x_text.shape[1]}) != "
                f"({self.d_num}, {self.d_text})"
            )
        path = ModalityPath(path)
        if path == ModalityPath.T1:
            return x_text
        if path == ModalityPath.N1:
            return x_num
        if path == ModalityPath.T2:
            return np.concatenate([x_num @ self.num_to_text.T, x_text], axis=1)
        return np.concatenate([x_text @ self.text_to_num.T, x_num], axis=1)


def fill_missing(x_num, x_text, d_num, d_text):
    """Zero-fill absent modalities; returns (x_num, x_text, availability).

    Availability is an (n, 2) 0/1 array appended to the router input so
    missingness stays visible to routing while experts see zero vectors.
    """
    if x_num is None and x_text is None:
        raise ShapeError("at least one modality must be present")
    n = len(x_num) if x_num is not None else len(x_text)
    avail = np.ones((n, 2))
    if x_num is None:
        x_num = np.zeros((n, d_num))
        avail[:, 0] = 0.0
    if x_text is None:
        x_text = np.zeros((n, d_text))
        avail[:, 1] = 0.0
    return np.atleast_2d(x_num), np.atleast_2d(x_text), avail


@dataclass
class ExpertOutput:
    """Per-slot heteroscedastic predictions, one (mean, logvar) per task."""

    mean1: ad.Tensor
    logvar1: ad.Tensor
    mean2: ad.Tensor
    logvar2: ad.Tensor

    def for_task(self, task):
        if task == 1:
            return self.mean1, self.logvar1
        return self.mean2, self.logvar2


class _TaskNet:
    """Trunk + zero-initialized mean/logvar output layers."""

    def __init__(self, store, name, in_dim, trunk_dims, rng):
        dims = [in_dim, *trunk_dims]
        self.trunk = Mlp(store, f"{name}/trunk", dims, ["tanh"] * (len(dims) - 1), rng)
        self.mean = Mlp(store, f"{name}/mean", [dims[-1], 1], ["identity"], rng, zero_init_last=True)
        self.logvar = Mlp(store, f"{name}/logvar", [dims[-1], 1], ["identity"], rng, zero_init_last=True)

    def __call__(self, x):
        h = self.trunk(x)
        return self.mean(h), self.logvar(h)


class ExpertBank:
    """All eight expert slots over one set of modality transforms.

    STL slots hold two fully disjoint task networks; MTL slots share an
    encoder and keep per-task heads.  Checkpoint keys follow
    ``expert/{path}/{paradigm}/...``.
    """

    def __init__(self, store, transforms, hidden_dims=(64, 64), head_dims=(32,),
                 logvar_clamp=6.0, homoscedastic=False, rng=None):
        self.transforms = transforms
        self.logvar_clamp = float(logvar_clamp)
        self.homoscedastic = bool(homoscedastic)
        self._stl = {}
        self._mtl = {}
        for path in PATHS:
            in_dim = transforms.input_dim(path)
            stl_prefix = f"expert/{path.name}/STL"
            self._stl[path] = tuple(
                _TaskNet(store, f"{stl_prefix}/task{k}", in_dim,
                         (*hidden_dims, *head_dims), rng)
                for k in (1, 2)
            )
            mtl_prefix = f"expert/{path.name}/MTL"
            encoder = Mlp(store, f"{mtl_prefix}/shared", [in_dim, *hidden_dims],
                          ["tanh"] * len(hidden_dims), rng)
            heads = tuple(
                _TaskNet(store, f"{mtl_prefix}/task{k}", hidden_dims[-1], head_dims, rng)
                for k in (1, 2)
            )
            self._mtl[path] = (encoder, heads)

    def _finish(self, mean, logvar, n):
        c = self.logvar_clamp
        if self.homoscedastic:
            logvar = ad.leaf(np.zeros((n, 1)))
        else:
            logvar = ad.clamp(logvar, -c, c)
        return mean, logvar

    def forward(self, path, paradigm, x):
        """Run one expert slot on the (already transformed) input tensor."""
        x = ad.as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.transforms.input_dim(path):
            raise ShapeError(
                f"slot {slot_name(path, paradigm)} expects input dim "
                f"{self.transforms.input_dim(path)}, got {x.shape}"
            )
        n = x.shape[0]
        if TaskParadigm(paradigm) == TaskParadigm.STL:
            net1, net2 = self._stl[ModalityPath(path)]
            m1, lv1 = self._finish(*net1(x), n)
            m2, lv2 = self._finish(*net2(x), n)
        else:
            encoder, (head1, head2) = self._mtl[ModalityPath(path)]
            z = encoder(x)
            m1, lv1 = self._finish(*head1(z), n)
            m2, lv2 = self._finish(*head2(z), n)
        return ExpertOutput(m1, lv1, m2, lv2)


def heteroscedastic_loss(y, mean, logvar):
    """Negative Gaussian log-likelihood with predicted log-variance.

    0.5 * (y - mean)^2 * exp(-logvar) + 0.5 * logvar, elementwise.
    """
    y = ad.as_tensor(y)
    r = ad.sub(y, mean)
    fit = ad.mul(ad.mul(r, r), ad.exp(ad.neg(logvar)))
    return ad.add(ad.mul(fit, 0.5), ad.mul(logvar, 0.5))


def paradigm_loss(paradigm, output, y1, y2):
    """Total per-sample loss of one slot: sum of the two task losses.

    STL and MTL totals share this formula; they differ only in the network
    that produced ``output``.
    """
    del paradigm  # both paradigms sum the same per-task losses
    l1 = heteroscedastic_loss(y1, output.mean1, output.logvar1)
    l2 = heteroscedastic_loss(y2, output.mean2, output.logvar2)
    return ad.add(l1, l2)
