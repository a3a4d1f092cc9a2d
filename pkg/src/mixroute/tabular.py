"""Data-driven synthetic tabular generation with fidelity reporting.

Three synthesizers over a mixed continuous/binary table:

* gaussian - multivariate normal fit with a 1e-6 diagonal jitter;
* copula   - rank-to-normal scores, Gaussian dependence, empirical
  quantile map back to the source marginals;
* kde      - resample source rows and add isotropic Gaussian noise with
  bandwidth m**(-1/(d+4)) in standardized coordinates.

Binary columns are thresholded at 0.5 after generation.  When the schema
designates binary outcome columns, gaussian and copula fit one model per
outcome class and draw proportional counts, which preserves the class
distribution; kde inherits it through resampling.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import ndtr, ndtri
from scipy.stats import ks_2samp, rankdata

from .errors import SynthesisError

JITTER = 1e-6

CONTINUOUS = "continuous"
BINARY = "binary"


@dataclass
class TabularSchema:
    """Column names with kinds and the designated binary outcome columns."""

    columns: list
    kinds: dict
    outcome_columns: list

    def __post_init__(self):
        for col in self.columns:
            if self.kinds.get(col) not in (CONTINUOUS, BINARY):
                raise SynthesisError(f"column {col!r} needs kind continuous|binary")
        for col in self.outcome_columns:
            if self.kinds.get(col) != BINARY:
                raise SynthesisError(f"outcome column {col!r} must be binary")

    @property
    def binary_columns(self):
        return [c for c in self.columns if self.kinds[c] == BINARY]

    def validate(self, df):
        missing = [c for c in self.columns if c not in df.columns]
        if missing:
            raise SynthesisError(f"table missing columns {missing}")
        for col in self.binary_columns:
            vals = set(np.unique(df[col].to_numpy()))
            if not vals <= {0.0, 1.0}:
                raise SynthesisError(f"binary column {col!r} contains values outside {{0,1}}")

    def to_dict(self):
        return {
            "columns": [{"name": c, "kind": self.kinds[c]} for c in self.columns],
            "outcomes": list(self.outcome_columns),
        }

    @classmethod
    def from_dict(cls, d):
        columns = [c["name"] for c in d["columns"]]
        kinds = {c["name"]: c["kind"] for c in d["columns"]}
        return cls(columns=columns, kinds=kinds, outcome_columns=list(d.get("outcomes", [])))

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def _threshold_binaries(df, schema):
    for col in schema.binary_columns:
        df[col] = (df[col].to_numpy() > 0.5).astype(np.float64)
    return df


def _strata(source, schema):
    """(mask, class values) per outcome class, in sorted class order."""
    if not schema.outcome_columns:
        return [(np.ones(len(source), dtype=bool), ())]
    labels = source[schema.outcome_columns].to_numpy()
    classes = sorted({tuple(row) for row in labels})
    return [(np.all(labels == np.asarray(cls), axis=1), cls) for cls in classes]


def _apportion(counts, n):
    """Largest-remainder split of n over strata, proportional to counts."""
    quotas = counts * (n / counts.sum())
    base = np.floor(quotas).astype(int)
    leftover = n - int(base.sum())
    order = np.argsort(-(quotas - base), kind="stable")
    base[order[:leftover]] += 1
    return base


def _factor(cov):
    """Symmetric factor of a jittered covariance; raises if hopeless."""
    jittered = cov + JITTER * np.eye(cov.shape[0])
    try:
        return np.linalg.cholesky(jittered)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(jittered)
        if np.any(vals < -1e-8):
            raise SynthesisError("covariance not factorizable after jitter")
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def gaussian_synthesize(source, schema, n, seed):
    """Draw from a fitted multivariate normal, stratified by outcome class."""
    schema.validate(source)
    if len(source) < 2:
        raise SynthesisError("gaussian synthesis needs at least 2 source rows")
    rng = _rng(seed)
    strata = _strata(source, schema)
    counts = _apportion(np.array([m.sum() for m, _ in strata], dtype=float), n)
    blocks = []
    for (mask, _), n_c in zip(strata, counts):
        if n_c == 0:
            continue
        block = source.loc[mask, schema.columns].to_numpy(dtype=np.float64)
        mu = block.mean(axis=0)
        cov = np.cov(block, rowvar=False, ddof=1) if block.shape[0] > 1 else np.zeros(
            (block.shape[1], block.shape[1])
        )
        cov = np.atleast_2d(cov)
        factor = _factor(cov)
        z = rng.standard_normal(size=(n_c, len(schema.columns)))
        blocks.append(mu + z @ factor.T)
    out = pd.DataFrame(np.concatenate(blocks, axis=0), columns=schema.columns)
    return _threshold_binaries(out, schema)


def _normal_scores(col_values, col_name):
    m = len(col_values)
    if np.unique(col_values).size < 2:
        raise SynthesisError(f"copula synthesis: column {col_name!r} is constant")
    ranks = rankdata(col_values, method="average")
    return ndtri(ranks / (m + 1.0))


def _empirical_quantile(col_values, u):
    ordered = np.sort(col_values)
    m = len(ordered)
    idx = np.clip((u * m).astype(int), 0, m - 1)
    return ordered[idx]


def copula_synthesize(source, schema, n, seed):
    """Gaussian-copula resynthesis, stratified by outcome class.

    Outcome columns are constant inside a stratum and are emitted as the
    class values; the copula models the remaining columns.
    """
    schema.validate(source)
    rng = _rng(seed)
    model_cols = [c for c in schema.columns if c not in schema.outcome_columns]
    strata = _strata(source, schema)
    counts = _apportion(np.array([m.sum() for m, _ in strata], dtype=float), n)
    blocks = []
    for (mask, cls), n_c in zip(strata, counts):
        if n_c == 0:
            continue
        block = source.loc[mask, model_cols].to_numpy(dtype=np.float64)
        scores = np.column_stack(
            [_normal_scores(block[:, j], model_cols[j]) for j in range(block.shape[1])]
        )
        corr = np.corrcoef(scores, rowvar=False) if scores.shape[1] > 1 else np.array([[1.0]])
        z = rng.standard_normal(size=(n_c, len(model_cols))) @ _factor(corr).T
        u = ndtr(z)
        synth = np.column_stack(
            [_empirical_quantile(block[:, j], u[:, j]) for j in range(block.shape[1])]
        )
        frame = pd.DataFrame(synth, columns=model_cols)
        for col, value in zip(schema.outcome_columns, cls):
            frame[col] = float(value)
        blocks.append(frame[schema.columns])
    out = pd.concat(blocks, ignore_index=True)
    return _threshold_binaries(out, schema)


def kde_bandwidth(m, d):
    """Scott-style bandwidth m**(-1/(d+4)) for m rows in d dimensions."""
    return float(m) ** (-1.0 / (d + 4.0))


def kde_synthesize(source, schema, n, seed, bandwidth=None):
    """Resample source rows plus isotropic noise in standardized space."""
    schema.validate(source)
    if len(source) == 0:
        raise SynthesisError("kde synthesis needs a nonempty source")
    rng = _rng(seed)
    values = source[schema.columns].to_numpy(dtype=np.float64)
    m, d = values.shape
    mu = values.mean(axis=0)
    sd = values.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    standardized = (values - mu) / sd
    h = kde_bandwidth(m, d) if bandwidth is None else float(bandwidth)
    picks = rng.integers(0, m, size=n)
    noisy = standardized[picks] + h * rng.standard_normal(size=(n, d))
    out = pd.DataFrame(noisy * sd + mu, columns=schema.columns)
    return _threshold_binaries(out, schema)


SYNTHESIZERS = {
    "gaussian": gaussian_synthesize,
    "copula": copula_synthesize,
    "kde": kde_synthesize,
}


# -- fidelity -------------------------------------------------------------------

@dataclass
class FidelityReport:
    """Source-vs-synthetic match: correlation MAD, class KL, marginal KS."""

    correlation_mad: float
    class_kl: float
    marginal_distances: dict

    def to_dict(self):
        return {
            "correlation_mad": self.correlation_mad,
            "class_kl_nats": self.class_kl,
            "kl_direction": "source||synthetic, add-one smoothing",
            "marginal_ks": self.marginal_distances,
        }


def _class_counts(df, outcome_columns):
    k = len(outcome_columns)
    support = [tuple((i >> b) & 1 for b in range(k)) for i in range(2 ** k)]
    labels = df[outcome_columns].to_numpy()
    counts = {cls: 0 for cls in support}
    for row in labels:
        counts[tuple(int(v) for v in row)] += 1
    return np.array([counts[cls] for cls in support], dtype=np.float64)


def fidelity_report(source, synthetic, schema):
    """Compare a synthetic table against its source under a shared schema."""
    schema.validate(source)
    schema.validate(synthetic)
    src = source[schema.columns].to_numpy(dtype=np.float64)
    syn = synthetic[schema.columns].to_numpy(dtype=np.float64)

    if src.shape[1] > 1:
        delta = np.abs(np.corrcoef(src, rowvar=False) - np.corrcoef(syn, rowvar=False))
        iu = np.triu_indices(src.shape[1], k=1)
        correlation_mad = float(np.mean(delta[iu]))
    else:
        correlation_mad = 0.0

    if schema.outcome_columns:
        p = _class_counts(source, schema.outcome_columns) + 1.0
        q = _class_counts(synthetic, schema.outcome_columns) + 1.0
        p /= p.sum()
        q /= q.sum()
        class_kl = float(np.sum(p * np.log(p / q)))
    else:
        class_kl = 0.0

    marginals = {
        col: float(ks_2samp(src[:, j], syn[:, j]).statistic)
        for j, col in enumerate(schema.columns)
    }
    return FidelityReport(correlation_mad, class_kl, marginals)


# -- bundled demo table -----------------------------------------------------------

def demo_table(n=300, seed=7):
    """Mixed demo table from a known covariance: 8 continuous features with
    AR(1)-style correlation plus two binary outcomes mildly tied to them."""
    rng = _rng(seed)
    d = 8
    corr = 0.3 ** np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
    scales = np.array([1.0, 2.0, 0.5, 1.5, 1.0, 3.0, 0.8, 1.2])
    means = np.array([0.0, 5.0, -2.0, 1.0, 0.0, 10.0, 0.5, -1.0])
    cov = corr * np.outer(scales, scales)
    z = rng.standard_normal(size=(n, d)) @ np.linalg.cholesky(cov).T
    features = means + z
    std = (features - features.mean(axis=0)) / features.std(axis=0)

    latent1 = 0.3 * std[:, 0] + np.sqrt(1 - 0.09) * rng.standard_normal(n)
    latent2 = 0.3 * std[:, 4] + np.sqrt(1 - 0.09) * rng.standard_normal(n)
    out1 = (latent1 > np.quantile(latent1, 0.6)).astype(np.float64)
    out2 = (latent2 > np.quantile(latent2, 0.65)).astype(np.float64)

    columns = [f"feat_{i}" for i in range(d)] + ["outcome_a", "outcome_b"]
    table = pd.DataFrame(
        np.column_stack([features, out1, out2]), columns=columns
    )
    kinds = {c: CONTINUOUS for c in columns[:d]}
    kinds["outcome_a"] = BINARY
    kinds["outcome_b"] = BINARY
    schema = TabularSchema(columns=columns, kinds=kinds,
                           outcome_columns=["outcome_a", "outcome_b"])
    return table, schema
