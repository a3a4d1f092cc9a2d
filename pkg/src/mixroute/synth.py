"""Equation-driven synthetic multitask multimodal benchmark.

Each sample has a numeric vector and a text-surrogate vector, both standard
normal, and two regression targets built from linear terms, random Fourier
feature (RFF) cross-modal terms, and sinusoidal terms.  Three scenarios
switch terms off: s2 drops the cross-modal RFF terms (each task then depends
on a single modality), s3 drops the sinusoidal terms.  "general" is s1.

Specs are frozen after sampling; the JSON sidecar stores the full coefficient
matrices so a trial can be replayed exactly without relying on RNG stream
order.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError

SCENARIOS = ("s1", "s2", "s3", "general")

_STREAM_SPEC = 0
_SPLIT_STREAMS = {"train": 1, "test": 2}


def _rng(seed, tag):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(tag)])))


@dataclass(frozen=True)
class RffMap:
    """Random Fourier feature map x -> sqrt(2/D) * cos(W x + b)."""

    weights: np.ndarray  # (D, d), entries ~ N(0, 1)
    phases: np.ndarray  # (D,), ~ Uniform[0, 2*pi]

    @classmethod
    def sample(cls, rng, out_dim, in_dim):
        return cls(
            weights=rng.normal(size=(out_dim, in_dim)),
            phases=rng.uniform(0.0, 2.0 * np.pi, size=out_dim),
        )

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ShapeError(f"rff map expects dim {self.in_dim}, got {x.shape[-1]}")
        return np.sqrt(2.0 / self.out_dim) * np.cos(x @ self.weights.T + self.phases)


def rff_features(rff_map, x):
    """Feature vector of one input under a frozen map."""
    return rff_map(x)


@dataclass(frozen=True)
class ScenarioSpec:
    """Frozen generator parameters for one synthetic trial."""

    scenario: str
    d_num: int
    d_text: int
    rff_dim: int
    noise_scale: float
    seed: int
    alpha1: np.ndarray  # (d_num,)
    alpha2: np.ndarray  # (d_text,)
    beta1: np.ndarray  # (rff_dim,), zero for s2
    beta2: np.ndarray  # (rff_dim,), zero for s2
    gamma1: float  # zero for s3
    gamma2: float  # zero for s3
    omega1: np.ndarray  # (d_num,)
    omega2: np.ndarray  # (d_text,)
    phi: RffMap  # acts on x_text
    psi: RffMap  # acts on x_num

    @classmethod
    def sample(cls, scenario, seed, d_num=16, d_text=16, rff_dim=32, noise_scale=0.1):
        scenario = scenario.lower()
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
        rng = _rng(seed, _STREAM_SPEC)
        alpha1 = rng.normal(size=d_num)
        alpha2 = rng.normal(size=d_text)
        beta1 = rng.normal(size=rff_dim)
        beta2 = rng.normal(size=rff_dim)
        gamma1 = float(rng.uniform(0.5, 1.5))
        gamma2 = float(rng.uniform(0.5, 1.5))
        omega1 = rng.normal(size=d_num)
        omega2 = rng.normal(size=d_text)
        phi = RffMap.sample(rng, rff_dim, d_text)
        psi = RffMap.sample(rng, rff_dim, d_num)
        if scenario == "s2":
            beta1 = np.zeros(rff_dim)
            beta2 = np.zeros(rff_dim)
        if scenario == "s3":
            gamma1 = 0.0
            gamma2 = 0.0
        return cls(
            scenario=scenario, d_num=d_num, d_text=d_text, rff_dim=rff_dim,
            noise_scale=float(noise_scale), seed=int(seed),
            alpha1=alpha1, alpha2=alpha2, beta1=beta1, beta2=beta2,
            gamma1=gamma1, gamma2=gamma2, omega1=omega1, omega2=omega2,
            phi=phi, psi=psi,
        )

    def targets(self, x_num, x_text):
        """Noiseless target pair for a batch of inputs."""
        x_num = np.atleast_2d(np.asarray(x_num, dtype=np.float64))
        x_text = np.atleast_2d(np.asarray(x_text, dtype=np.float64))
        y1 = (
            x_num @ self.alpha1
            + self.phi(x_text) @ self.beta1
            + self.gamma1 * np.sin(x_num @ self.omega1)
        )
        y2 = (
            x_text @ self.alpha2
            + self.psi(x_num) @ self.beta2
            + self.gamma2 * np.cos(x_text @ self.omega2)
        )
        return y1, y2

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "d_num": self.d_num,
            "d_text": self.d_text,
            "rff_dim": self.rff_dim,
            "noise_scale": self.noise_scale,
            "seed": self.seed,
            "alpha1": self.alpha1.tolist(),
            "alpha2": self.alpha2.tolist(),
            "beta1": self.beta1.tolist(),
            "beta2": self.beta2.tolist(),
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "omega1": self.omega1.tolist(),
            "omega2": self.omega2.tolist(),
            "phi": {"weights": self.phi.weights.tolist(), "phases": self.phi.phases.tolist()},
            "psi": {"weights": self.psi.weights.tolist(), "phases": self.psi.phases.tolist()},
        }

    @classmethod
    def from_dict(cls, d):
        arr = lambda v: np.asarray(v, dtype=np.float64)
        return cls(
            scenario=d["scenario"], d_num=d["d_num"], d_text=d["d_text"],
            rff_dim=d["rff_dim"], noise_scale=d["noise_scale"], seed=d["seed"],
            alpha1=arr(d["alpha1"]), alpha2=arr(d["alpha2"]),
            beta1=arr(d["beta1"]), beta2=arr(d["beta2"]),
            gamma1=d["gamma1"], gamma2=d["gamma2"],
            omega1=arr(d["omega1"]), omega2=arr(d["omega2"]),
            phi=RffMap(arr(d["phi"]["weights"]), arr(d["phi"]["phases"])),
            psi=RffMap(arr(d["psi"]["weights"]), arr(d["psi"]["phases"])),
        )


@dataclass
class Dataset:
    """Paired modality vectors with two regression targets."""

    x_num: np.ndarray  # (n, d_num)
    x_text: np.ndarray  # (n, d_text)
    y1: np.ndarray  # (n,)
    y2: np.ndarray  # (n,)
    split: str = "train"

    @property
    def n(self):
        return self.x_num.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.split == other.split
            and np.array_equal(self.x_num, other.x_num)
            and np.array_equal(self.x_text, other.x_text)
            and np.array_equal(self.y1, other.y1)
            and np.array_equal(self.y2, other.y2)
        )

    def content_hash(self):
        return hashlib.sha256(dataset_csv_bytes(self)).hexdigest()


def generate(spec, n, seed, split="train"):
    """Draw n fresh samples from a frozen spec.

    The sampling stream is keyed by (seed, split) so train and test are
    disjoint independent draws and any (spec, n, seed, split) regenerates
    the identical dataset.
    """
    if n <= 0:
        raise ConfigError("need a positive sample count")
    stream = _SPLIT_STREAMS.get(split)
    if stream is None:
        raise ConfigError(f"unknown split {split!r}; expected train or test")
    rng = _rng(seed, stream)
    x_num = rng.normal(size=(n, spec.d_num))
    x_text = rng.normal(size=(n, spec.d_text))
    eps1 = rng.normal(size=n) * spec.noise_scale
    eps2 = rng.normal(size=n) * spec.noise_scale
    y1, y2 = spec.targets(x_num, x_text)
    return Dataset(x_num=x_num, x_text=x_text, y1=y1 + eps1, y2=y2 + eps2, split=split)


# -- serialization -------------------------------------------------------------

def _header(d_num, d_text):
    return (
        [f"x_num_{i}" for i in range(d_num)]
        + [f"x_text_{i}" for i in range(d_text)]
        + ["y1", "y2"]
    )


def dataset_csv_bytes(ds):
    lines = [",".join(_header(ds.x_num.shape[1], ds.x_text.shape[1]))]
    for i in range(ds.n):
        row = (
            [repr(float(v)) for v in ds.x_num[i]]
            + [repr(float(v)) for v in ds.x_text[i]]
            + [repr(float(ds.y1[i])), repr(float(ds.y2[i]))]
        )
        lines.append(",".join(row))
    return ("\n".join(lines) + "\n").encode()


def write_dataset(ds, path):
    if ds.n == 0:
        raise ConfigError("refusing to serialize an empty dataset")
    try:
        with open(path, "wb") as fh:
            fh.write(dataset_csv_bytes(ds))
    except OSError as exc:
        raise OSError(f"failed writing dataset to {path}: {exc}") from exc


def read_dataset(path, split="train"):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"failed reading dataset from {path}: {exc}") from exc
    header = rows[0]
    d_num = len([c for c in header if c.startswith("x_num_")])
    d_text = len([c for c in header if c.startswith("x_text_")])
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return Dataset(
        x_num=data[:, :d_num],
        x_text=data[:, d_num : d_num + d_text],
        y1=data[:, d_num + d_text],
        y2=data[:, d_num + d_text + 1],
        split=split,
    )


def save_trial(out_dir, spec, sample_seed, datasets):
    """Write {split}.csv per dataset plus the spec.json replay sidecar."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    sidecar = {
        "version": 1,
        "spec": spec.to_dict(),
        "sample_seed": int(sample_seed),
        "splits": {},
    }
    for ds in datasets:
        path = os.path.join(out_dir, f"{ds.split}.csv")
        write_dataset(ds, path)
        paths[ds.split] = path
        sidecar["splits"][ds.split] = {"n": ds.n, "hash": ds.content_hash()}
    spec_path = os.path.join(out_dir, "spec.json")
    with open(spec_path, "w") as fh:
        json.dump(sidecar, fh, sort_keys=True)
    paths["spec"] = spec_path
    return paths


def replay_trial(spec_path):
    """Regenerate every split recorded in a sidecar, bit-identically."""
    with open(spec_path) as fh:
        sidecar = json.load(fh)
    spec = ScenarioSpec.from_dict(sidecar["spec"])
    seed = sidecar["sample_seed"]
    return {
        split: generate(spec, meta["n"], seed, split=split)
        for split, meta in sorted(sidecar["splits"].items())
    }
