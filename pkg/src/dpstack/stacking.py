"""Privacy-preserving stacking over sample or feature partitions.

Both variants split the training set into a low-level part and a disjoint
high-level part. Low-level models are PLR fits on partitions of the former;
the high-level model is a PLR fit on their sigmoid outputs evaluated on the
latter. Every component sees the full budget epsilon because the regions it
touches are disjoint (parallel composition); the ``ledger`` on the returned
model records those regions.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence

import numpy as np

from .data import LabeledDataset, scale_to_ball
from .mechanism import pstf_params, sample_noise
from .numerics import DEFAULT_TOL, Regularizer
from .partition import FeaturePartition, sample_partition, split_disjoint
from .plr import FORMAT_VERSION, LinearModel, _dec, _enc, fit_perturbed, predict_linear, train_plr

COMBINERS = ("hl", "mv", "wmv")

_LO = np.nextafter(0.0, 1.0)
_HI = np.nextafter(1.0, 0.0)

# The high-level PLR has no intercept, and every meta-feature lies in (0, 1)
# around 0.5. It therefore sees its inputs shifted by this fixed constant.
META_CENTER = 0.5


@dataclasses.dataclass(frozen=True)
class BudgetEntry:
    """One disjoint data region and the budget spent on it."""

    region: str
    indices: np.ndarray
    epsilon: float
    consumers: tuple


def check_ledger(ledger):
    """Raise if two ledger regions share a sample index."""
    seen = set()
    for entry in ledger:
        idx = set(int(i) for i in entry.indices)
        if seen & idx:
            raise AssertionError(f"ledger region {entry.region!r} overlaps an earlier region")
        seen |= idx


@dataclasses.dataclass(frozen=True)
class StackedModel:
    kind: str  # "pst-s" or "pst-f"
    low_models: tuple
    high_model: LinearModel
    epsilon: float
    partition: Optional[FeaturePartition] = None
    ledger: tuple = ()
    lambdas: dict = dataclasses.field(default_factory=dict)

    @property
    def K(self):
        return len(self.low_models)

    @property
    def d(self):
        if self.partition is not None:
            return self.partition.d
        return self.low_models[0].d

    def to_dict(self):
        doc = {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            "d": self.d,
            "K": self.K,
            "groups": None if self.partition is None else [g.tolist() for g in self.partition.groups],
            "q": None if self.partition is None else self.partition.weights.tolist(),
            "s_k": [_enc(m.scale) for m in self.low_models],
            "low_weights": [m.weights.tolist() for m in self.low_models],
            "high_weights": self.high_model.weights.tolist(),
            "s_high": _enc(self.high_model.scale),
            "c_high": self.high_model.center,
            "epsilon": _enc(self.epsilon),
            "lambdas": self.lambdas,
            "budget": [
                {"region": e.region, "size": int(e.indices.size), "epsilon": _enc(e.epsilon),
                 "consumers": list(e.consumers)}
                for e in self.ledger
            ],
        }
        return doc

    @classmethod
    def from_dict(cls, doc):
        eps = _dec(doc["epsilon"])
        lambdas = doc.get("lambdas") or {}
        low_l = lambdas.get("low", [1.0] * doc["K"])
        if not isinstance(low_l, list):
            low_l = [low_l] * doc["K"]
        lows = tuple(
            LinearModel(np.asarray(w, dtype=float), _dec(s), eps, float(l))
            for w, s, l in zip(doc["low_weights"], doc["s_k"], low_l)
        )
        high = LinearModel(np.asarray(doc["high_weights"], dtype=float), _dec(doc["s_high"]), eps,
                           float(lambdas.get("high", 1.0)), center=float(doc.get("c_high", 0.0)))
        part = None
        if doc.get("groups") is not None:
            part = FeaturePartition(tuple(doc["groups"]), np.asarray(doc["q"], dtype=float))
        if len(lows) != doc["K"]:
            raise ValueError("K does not match the number of low-level weight vectors")
        return cls(doc["kind"], lows, high, eps, part, (), lambdas)


def _as_rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def _views(X, low_models, partition):
    X = np.asarray(X, dtype=float)
    if partition is None:
        return [X] * len(low_models)
    if X.shape[-1] != partition.d:
        raise ValueError(f"input has {X.shape[-1]} features, model expects {partition.d}")
    return [X[..., g] for g in partition.groups]


def low_level_scores(low_models, X, partition=None):
    """n x K matrix of low-level sigmoid outputs."""
    X2 = np.atleast_2d(np.asarray(X, dtype=float))
    cols = [predict_linear(m, v) for m, v in zip(low_models, _views(X2, low_models, partition))]
    return np.column_stack(cols)


def build_meta(low_models, ds_high: LabeledDataset, partition=None):
    """Meta-dataset of low-level sigmoid outputs paired with the true labels.

    Coordinates are kept strictly inside (0, 1).
    """
    M = np.clip(low_level_scores(low_models, ds_high.X, partition), _LO, _HI)
    return LabeledDataset(M, ds_high.y)


def train_pst_s(ds, epsilon, K, lam_low, lam_high=None, rng=None, *, fraction=0.5,
                tol=DEFAULT_TOL, _noise_fn=None):
    """Stacking over ``K`` disjoint sample subsets (every model gets ``epsilon``)."""
    rng = _as_rng(rng)
    if ds.n < 2 * K:
        raise ValueError(f"need at least 2K={2 * K} samples, got {ds.n}")
    lam_high = lam_low if lam_high is None else lam_high
    low_idx, high_idx = split_disjoint(ds.n, fraction, rng)
    parts = [low_idx[p] for p in sample_partition(low_idx.size, K, rng)]
    streams = rng.spawn(K + 1)
    lows = tuple(
        train_plr(ds.subset(p), epsilon, lam_low, rng=streams[k], tol=tol, _noise_fn=_noise_fn)
        for k, p in enumerate(parts)
    )
    d_high = ds.subset(high_idx)
    meta = build_meta(lows, d_high)
    high = train_plr(meta, epsilon, lam_high, rng=streams[K], center=META_CENTER, tol=tol,
                     _noise_fn=_noise_fn)
    ledger = tuple(BudgetEntry(f"S_{k}", p, epsilon, (f"low_{k}",)) for k, p in enumerate(parts))
    ledger += (BudgetEntry("D_high", high_idx, epsilon, ("high",)),)
    return StackedModel("pst-s", lows, high, float(epsilon), None, ledger,
                        {"low": float(lam_low), "high": float(lam_high)})


def train_pst_f(ds, epsilon, partition: FeaturePartition, lam, lam_high=None, rng=None, *,
                reg_offsets: Optional[Sequence] = None, anchors: Optional[Sequence] = None,
                fraction=0.5, tol=DEFAULT_TOL, _noise_fn=None):
    """Stacking over a feature partition with importance-scaled noise.

    Group k's inputs are scaled into the ball of radius ``q_k``, so its
    relative noise level is 2 d_k / (eps' q_k).

    ``reg_offsets`` are per-group centres u_k of the regularizer
    ||w - u_k||^2 / 2 in scaled coordinates. ``anchors`` are the same
    centres given as weights on *unscaled* inputs; they are converted with
    the group's scale factor once it is known. Pass at most one of the two.
    """
    rng = _as_rng(rng)
    if partition.d != ds.d:
        raise ValueError(f"partition covers {partition.d} features, data has {ds.d}")
    if reg_offsets is not None and anchors is not None:
        raise ValueError("pass reg_offsets or anchors, not both")
    K = partition.K
    q = partition.weights
    lams = np.broadcast_to(np.asarray(lam, dtype=float), (K,)).copy()
    lam_high = float(np.mean(lams)) if lam_high is None else float(lam_high)

    low_idx, high_idx = split_disjoint(ds.n, fraction, rng)
    d_low = ds.subset(low_idx)
    n = d_low.n
    params = pstf_params(epsilon, n, lams, q)
    streams = rng.spawn(K + 1)
    noise = _noise_fn or sample_noise

    lows = []
    for k, group in enumerate(partition.groups):
        Xk = d_low.X[:, group]
        if q[k] == 0:
            Xs, s = np.zeros_like(Xk), math.inf
            b = np.zeros(group.size)
        else:
            Xs, s = scale_to_ball(Xk, q[k])
            b = np.asarray(noise(group.size, params.group_rates[k], streams[k]), dtype=float)
        reg = Regularizer()
        if q[k] > 0 and reg_offsets is not None:
            reg = Regularizer.offset_l2(reg_offsets[k])
        elif q[k] > 0 and anchors is not None:
            reg = Regularizer.offset_l2(np.asarray(anchors[k], dtype=float) * s)
        res = fit_perturbed(Xs, d_low.y, b, params.group_deltas[k], lams[k], reg, tol)
        lows.append(LinearModel(res.w, s, float(epsilon), float(lams[k]), params,
                                res.iterations, res.residual))
    lows = tuple(lows)
    meta = build_meta(lows, ds.subset(high_idx), partition)
    high = train_plr(meta, epsilon, lam_high, rng=streams[K], center=META_CENTER, tol=tol,
                     _noise_fn=_noise_fn)
    ledger = (
        BudgetEntry("D_low", low_idx, epsilon, tuple(f"low_{k}" for k in range(K))),
        BudgetEntry("D_high", high_idx, epsilon, ("high",)),
    )
    return StackedModel("pst-f", lows, high, float(epsilon), partition, ledger,
                        {"low": lams.tolist(), "high": lam_high})


def predict_stacked(model: StackedModel, X, combiner="hl"):
    """Scores in [0, 1] from one of three combiners.

    ``"hl"``: the high-level model on the meta-features; ``"mv"``: fraction
    of low-level models voting positive; ``"wmv"``: the same vote weighted
    by the group importances (feature-partitioned models only).
    """
    single = np.asarray(X).ndim == 1
    S = low_level_scores(model.low_models, X, model.partition)
    if combiner == "hl":
        out = predict_linear(model.high_model, np.clip(S, _LO, _HI))
    elif combiner == "mv":
        out = np.mean(S > 0.5, axis=1)
    elif combiner == "wmv":
        if model.partition is None:
            raise ValueError("weighted majority vote needs importance weights (feature-partitioned model)")
        out = (S > 0.5).astype(float) @ model.partition.weights
    else:
        raise ValueError(f"unknown combiner {combiner!r}; choose from {COMBINERS}")
    out = np.asarray(out, dtype=float)
    return float(out[0]) if single else out
