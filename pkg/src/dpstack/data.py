"""Datasets: ingestion, splitting, scaling, PCA and the synthetic generator."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import warnings
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats


class DatasetError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclasses.dataclass(frozen=True)
class LabeledDataset:
    """Samples ``X`` (n x d, one row per sample) with labels ``y`` in {-1, +1}."""

    X: np.ndarray
    y: np.ndarray
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise DatasetError("X must be 2-dimensional")
        if y.shape != (X.shape[0],):
            raise DatasetError(f"label vector has shape {y.shape}, expected ({X.shape[0]},)")
        if X.shape[0] < 1:
            raise DatasetError("dataset is empty")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise DatasetError("labels must be -1 or +1")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise DatasetError("feature_names length does not match the dimension")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def __len__(self):
        return self.n

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return LabeledDataset(self.X[idx], self.y[idx], self.feature_names)

    def columns(self, cols):
        cols = np.asarray(cols, dtype=int)
        names = None if self.feature_names is None else tuple(self.feature_names[c] for c in cols)
        return LabeledDataset(self.X[:, cols], self.y, names)


def _parse_label(token, lineno):
    try:
        v = float(token)
    except ValueError:
        raise DatasetError(f"line {lineno}: label {token!r} is not a number") from None
    if v == 0.0:
        return -1.0
    if v in (-1.0, 1.0):
        return v
    raise DatasetError(f"line {lineno}: label {token!r} outside {{-1, 0, 1}}")


def _load_csv(path):
    rows, labels = [], []
    names = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not t.strip() for t in rec):
                continue
            if lineno == 1:
                try:
                    float(rec[0])
                except ValueError:
                    names = tuple(t.strip() for t in rec[1:])
                    continue
            label = _parse_label(rec[0].strip(), lineno)
            try:
                vals = [float(t) for t in rec[1:]]
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from None
            if rows and len(vals) != len(rows[0]):
                raise DatasetError(
                    f"line {lineno}: {len(vals)} features, expected {len(rows[0])}"
                )
            rows.append(vals)
            labels.append(label)
    if not rows:
        raise DatasetError(f"{path}: no samples")
    if names is not None and len(names) != len(rows[0]):
        raise DatasetError(f"{path}: header has {len(names)} feature names for {len(rows[0])} columns")
    return LabeledDataset(np.array(rows, dtype=float), np.array(labels), names)


def _load_sparse(path, dim=None):
    entries, labels = [], []
    max_idx = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            label = _parse_label(tokens[0], lineno)
            row = {}
            for tok in tokens[1:]:
                try:
                    i, v = tok.split(":", 1)
                    i, v = int(i), float(v)
                except ValueError:
                    raise DatasetError(f"line {lineno}: malformed entry {tok!r}") from None
                if i < 1:
                    raise DatasetError(f"line {lineno}: feature indices are 1-based, got {i}")
                row[i - 1] = v
                max_idx = max(max_idx, i)
            entries.append(row)
            labels.append(label)
    if not entries:
        raise DatasetError(f"{path}: no samples")
    d = max_idx if dim is None else dim
    if max_idx > d:
        raise DatasetError(f"{path}: feature index {max_idx} exceeds dimension {d}")
    X = np.zeros((len(entries), d))
    for r, row in enumerate(entries):
        for i, v in row.items():
            X[r, i] = v
    return LabeledDataset(X, np.array(labels))


def load_dataset(path, format="csv", dim=None):
    """Read a dataset file.

    ``format="csv"``: first column is the label, optional header row.
    ``format="sparse"``: ``label idx:val ...`` lines with 1-based indices;
    ``dim`` fixes the dimension, otherwise the largest index is used.
    Labels 0/1 are mapped to -1/+1.
    """
    if format == "csv":
        return _load_csv(path)
    if format == "sparse":
        return _load_sparse(path, dim)
    raise ValueError(f"unknown dataset format {format!r}")


def save_dataset(ds, path, format="csv"):
    path = Path(path)
    if format == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if ds.feature_names is not None:
                w.writerow(["label", *ds.feature_names])
            for x, y in zip(ds.X, ds.y):
                w.writerow([f"{int(y):d}", *(repr(float(v)) for v in x)])
    elif format == "sparse":
        with open(path, "w") as fh:
            for x, y in zip(ds.X, ds.y):
                parts = [f"{int(y):+d}"] + [f"{i + 1}:{float(v)!r}" for i, v in enumerate(x) if v != 0]
                fh.write(" ".join(parts) + "\n")
    else:
        raise ValueError(f"unknown dataset format {format!r}")


def _split_sizes(n, fractions):
    return [int(math.floor(f * n + 0.5)) for f in fractions]


def train_valid_test_split(ds, fractions, rng):
    """Disjoint uniform random (train, valid, test) splits.

    Sizes are ``fractions * n`` rounded to nearest; a zero fraction yields
    ``None`` in that slot.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) > 1 + 1e-12:
        raise ValueError("fractions must be three non-negative numbers summing to at most 1")
    sizes = _split_sizes(ds.n, fractions)
    if sum(sizes) > ds.n:
        sizes[-1] = ds.n - sizes[0] - sizes[1]
    for f, s in zip(fractions, sizes):
        if f > 0 and s == 0:
            raise ValueError(f"split with fraction {f} is empty for n={ds.n}")
    perm = rng.permutation(ds.n)
    out, start = [], 0
    for s in sizes:
        out.append(ds.subset(np.sort(perm[start:start + s])) if s else None)
        start += s
    return tuple(out)


def scale_to_ball(X, radius):
    """Divide every row by one common factor so all norms are ``<= radius``.

    Returns ``(X_scaled, s)`` with ``s = max(1, max_norm / radius)``; data
    already inside the ball is left unchanged.
    """
    X = np.asarray(X, dtype=float)
    max_norm = float(np.max(np.linalg.norm(X, axis=1))) if X.size else 0.0
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        if max_norm > 0:
            raise ValueError("radius 0 requested for non-zero data")
        return X.copy(), 1.0
    s = max(1.0, max_norm / radius)
    Xs = X / s
    # rounding can leave the largest norm one ulp above the radius
    while float(np.max(np.linalg.norm(Xs, axis=1))) > radius:
        s = math.nextafter(s, math.inf)
        Xs = X / s
    return Xs, s


@dataclasses.dataclass(frozen=True)
class PCAResult:
    dataset: LabeledDataset
    components: np.ndarray  # d x k, orthonormal columns
    variances: np.ndarray
    mean: np.ndarray

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) @ self.components


def pca_reduce(ds, target_dims):
    """Project onto the top ``target_dims`` eigenvectors of the sample covariance.

    Each eigenvector's largest-magnitude coordinate is made positive so the
    result does not depend on the LAPACK build.
    """
    n, d = ds.X.shape
    if target_dims < 1 or target_dims > d:
        raise ValueError(f"target_dims must be in [1, {d}]")
    mean = ds.X.mean(axis=0)
    Xc = ds.X - mean
    cov = Xc.T @ Xc / max(n - 1, 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    for j in range(d):
        col = evecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            evecs[:, j] = -col
    rank = int(np.sum(evals > evals[0] * 1e-12)) if evals[0] > 0 else 0
    if rank < target_dims:
        warnings.warn(
            f"covariance rank {rank} below target_dims={target_dims}; "
            "trailing components have zero variance",
            RuntimeWarning,
            stacklevel=2,
        )
    comps = evecs[:, :target_dims]
    reduced = LabeledDataset(Xc @ comps, ds.y)
    return PCAResult(reduced, comps, evals[:target_dims].copy(), mean)


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    """Synthetic two-class data with feature groups of unequal usefulness.

    Features are split into ``k_true`` contiguous groups. In group g a
    fraction ``informative_fraction[g]`` of the features carries a class
    signal whose total norm is ``strengths[g]``; every feature also gets
    Gaussian noise with standard deviation ``noise``.
    """

    n: int = 4000
    d: int = 100
    k_true: int = 5
    strengths: Sequence[float] = (1.2, 0.6, 0.3, 0.15, 0.075)
    informative_fraction: Sequence[float] = (1.0, 1.0, 1.0, 1.0, 1.0)
    noise: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.d < 1 or not 1 <= self.k_true <= self.d:
            raise ValueError("need n >= 1 and 1 <= k_true <= d")
        if len(self.strengths) != self.k_true or len(self.informative_fraction) != self.k_true:
            raise ValueError("strengths and informative_fraction need one entry per group")
        if any(s < 0 for s in self.strengths):
            raise ValueError("signal strengths must be non-negative")
        if any(not 0 <= f <= 1 for f in self.informative_fraction):
            raise ValueError("informative fractions must lie in [0, 1]")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")

    @classmethod
    def from_dict(cls, cfg):
        return cls(**cfg)

    def to_dict(self):
        return {
            "n": self.n,
            "d": self.d,
            "k_true": self.k_true,
            "strengths": list(self.strengths),
            "informative_fraction": list(self.informative_fraction),
            "noise": self.noise,
        }


def synth_means(spec):
    """Class-mean vector mu (class +1 has mean +mu, class -1 has -mu)."""
    mu = np.zeros(spec.d)
    for g, block in enumerate(np.array_split(np.arange(spec.d), spec.k_true)):
        m = int(round(spec.informative_fraction[g] * block.size))
        if m == 0:
            continue
        mu[block[:m]] = spec.strengths[g] / math.sqrt(m)
    return mu


def synth_generate(spec, rng):
    """Draw a dataset from ``spec``.

    Returns ``(dataset, importance)`` where ``importance[i]`` is the
    per-feature signal power mu_i^2 / noise^2 plus a small floor, so that
    features are already sorted from most to least important.
    """
    mu = synth_means(spec)
    y = np.where(rng.random(spec.n) < 0.5, -1.0, 1.0)
    X = y[:, None] * mu[None, :] + spec.noise * rng.standard_normal((spec.n, spec.d))
    noise_var = spec.noise**2 if spec.noise > 0 else 1.0
    importance = mu**2 / noise_var + 1e-3
    names = tuple(f"f{i}" for i in range(spec.d))
    return LabeledDataset(X, y, names), importance


def bayes_auc(spec):
    """AUC of the optimal linear scorer mu.x for the generator (closed form)."""
    mu = synth_means(spec)
    m = float(np.linalg.norm(mu))
    if spec.noise == 0:
        return 1.0 if m > 0 else 0.5
    # score difference between a positive and a negative: N(2 |mu|^2, 2 noise^2 |mu|^2)
    return float(stats.norm.cdf(2 * m / (math.sqrt(2) * spec.noise)))


def load_synth_spec(path):
    with open(path) as fh:
        return SynthSpec.from_dict(json.load(fh))
