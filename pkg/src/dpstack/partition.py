"""Sample and feature partitioning, and group importance weights."""

from __future__ import annotations

import csv
import dataclasses
import math
from typing import Optional, Sequence

import numpy as np


@dataclasses.dataclass(frozen=True)
class FeaturePartition:
    """``K`` disjoint feature-index groups covering ``range(d)`` with weights ``q``."""

    groups: tuple
    weights: np.ndarray

    def __post_init__(self):
        groups = tuple(np.asarray(g, dtype=int) for g in self.groups)
        q = np.asarray(self.weights, dtype=float)
        if len(groups) == 0:
            raise ValueError("partition needs at least one group")
        if q.shape != (len(groups),):
            raise ValueError("need one weight per group")
        if any(g.size == 0 for g in groups):
            raise ValueError("empty feature group")
        if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")
        allidx = np.concatenate(groups)
        if np.unique(allidx).size != allidx.size:
            raise ValueError("feature groups overlap")
        if allidx.min() < 0 or not np.array_equal(np.sort(allidx), np.arange(allidx.size)):
            raise ValueError("feature groups must cover 0..d-1")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "weights", q)

    @property
    def K(self):
        return len(self.groups)

    @property
    def d(self):
        return sum(g.size for g in self.groups)

    @property
    def sizes(self):
        return [g.size for g in self.groups]

    def to_dict(self):
        return {"groups": [g.tolist() for g in self.groups], "q": self.weights.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(tuple(doc["groups"]), np.asarray(doc["q"], dtype=float))


def split_disjoint(n, fraction, rng):
    """Random disjoint (low, high) index sets with ``|low| = round(fraction * n)``."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    n_low = int(math.floor(fraction * n + 0.5))
    if n_low == 0 or n_low == n:
        raise ValueError(f"split of {n} samples at fraction {fraction} leaves one side empty")
    perm = rng.permutation(n)
    return np.sort(perm[:n_low]), np.sort(perm[n_low:])


def sample_partition(n, K, rng):
    """``K`` disjoint index sets of near-equal size covering ``range(n)``.

    The first ``n % K`` sets get one extra element.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > n:
        raise ValueError(f"cannot split {n} samples into {K} parts")
    perm = rng.permutation(n)
    return [np.sort(p) for p in np.array_split(perm, K)]


def importance_weights(v, groups):
    """q_k = sum of ``v`` over group k divided by the total."""
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("importance scores must be non-negative")
    total = v.sum()
    if not total > 0:
        raise ValueError("importance scores are all zero")
    q = np.array([v[np.asarray(g, dtype=int)].sum() for g in groups]) / total
    return q / q.sum()


def alpha_importance(d, alpha):
    """Scores alpha**i for i = 1..d, feature 0 being the most important.

    When alpha**d would overflow (or alpha**1 underflow relative to it) all
    scores are divided by a common factor; group weights are unaffected.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    logs = np.arange(1, d + 1) * math.log(alpha)
    if logs.max() > 700:
        logs -= logs.max()
    return np.exp(logs)


def feature_partition(d, K, mode="uniform", v: Optional[Sequence[float]] = None, rng=None):
    """Split ``d`` features into ``K`` groups.

    ``mode="uniform"``: random groups, equal weights 1/K.
    ``mode="sorted"``: features ordered by ``v`` descending (ties by index),
    cut into contiguous blocks, weights from :func:`importance_weights`.
    Earlier groups get the remainder when ``K`` does not divide ``d``.
    """
    if not 1 <= K <= d:
        raise ValueError(f"need 1 <= K <= d, got K={K}, d={d}")
    if mode == "uniform":
        if rng is None:
            raise ValueError("uniform mode needs a random generator")
        perm = rng.permutation(d)
        groups = tuple(np.sort(g) for g in np.array_split(perm, K))
        return FeaturePartition(groups, np.full(K, 1.0 / K))
    if mode == "sorted":
        if v is None:
            raise ValueError("sorted mode needs importance scores")
        v = np.asarray(v, dtype=float)
        if v.shape != (d,):
            raise ValueError(f"importance vector has shape {v.shape}, expected ({d},)")
        order = np.argsort(-v, kind="stable")
        groups = tuple(np.sort(g) for g in np.array_split(order, K))
        return FeaturePartition(groups, importance_weights(v, groups))
    raise ValueError(f"unknown partition mode {mode!r}")


def load_importance(path, d=None):
    """Read a ``feature_index,score`` CSV (0-based indices, optional header)."""
    scores = {}
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            try:
                idx, score = int(rec[0]), float(rec[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: expected feature_index,score") from None
            scores[idx] = score
    dim = d if d is not None else max(scores) + 1
    v = np.zeros(dim)
    for i, s in scores.items():
        if not 0 <= i < dim:
            raise ValueError(f"{path}: feature index {i} out of range for d={dim}")
        v[i] = s
    return v


def save_importance(v, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["feature_index", "score"])
        for i, s in enumerate(v):
            w.writerow([i, repr(float(s))])
