"""Privacy-preserving stacking with hypothesis transfer.

Source-domain PLR models, one per feature group, become the centres of the
target-domain regularizers ||w - u_k||^2 / 2. The target phase only ever
receives the source *weights*, never source samples, and each domain
spends its own budget.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .numerics import DEFAULT_TOL
from .partition import FeaturePartition
from .plr import FORMAT_VERSION, LinearModel, _dec, _enc, train_plr
from .stacking import StackedModel, _as_rng, predict_stacked, train_pst_f


@dataclasses.dataclass(frozen=True)
class TransferModel:
    source_models: tuple
    target: StackedModel
    eps_src: float
    eps_tgt: float

    @property
    def partition(self):
        return self.target.partition

    @property
    def d(self):
        return self.target.d

    def to_dict(self):
        part = self.partition
        return {
            "format_version": FORMAT_VERSION,
            "kind": "pst-h",
            "source": {
                "groups": [g.tolist() for g in part.groups],
                "s_k": [_enc(m.scale) for m in self.source_models],
                "weights": [m.weights.tolist() for m in self.source_models],
                "lambdas": [m.lam for m in self.source_models],
            },
            "target": self.target.to_dict(),
            "eps_src": _enc(self.eps_src),
            "eps_tgt": _enc(self.eps_tgt),
        }

    @classmethod
    def from_dict(cls, doc):
        src = doc["source"]
        eps_src = _dec(doc["eps_src"])
        models = tuple(
            LinearModel(np.asarray(w, dtype=float), _dec(s), eps_src, float(l))
            for w, s, l in zip(src["weights"], src["s_k"], src["lambdas"])
        )
        return cls(models, StackedModel.from_dict(doc["target"]), eps_src, _dec(doc["eps_tgt"]))


def train_source_models(ds_src, epsilon, partition: FeaturePartition, lam, rng=None, *,
                        tol=DEFAULT_TOL, _noise_fn=None):
    """Plain PLR (unit-ball scaling) on each feature group of the source data."""
    rng = _as_rng(rng)
    if partition.d != ds_src.d:
        raise ValueError(f"partition covers {partition.d} features, source data has {ds_src.d}")
    lams = np.broadcast_to(np.asarray(lam, dtype=float), (partition.K,))
    streams = rng.spawn(partition.K)
    return tuple(
        train_plr(ds_src.columns(g), epsilon, float(lams[k]), rng=streams[k], tol=tol,
                  _noise_fn=_noise_fn)
        for k, g in enumerate(partition.groups)
    )


def source_anchors(source_models):
    """Source weights expressed on unscaled inputs.

    ``train_pst_f`` multiplies them by the target group's own scale factor,
    so the anchor induces the same predictor as the source model.
    """
    return [m.raw_weights() for m in source_models]


def train_pst_h(ds_src, ds_tgt, eps_src, eps_tgt, partition: FeaturePartition, lam_src, lam_tgt,
                lam_high=None, rng=None, *, fraction=0.5, tol=DEFAULT_TOL, _noise_fn=None,
                source_models=None):
    """Train source group models, then target PST-F anchored on them.

    ``source_models`` may carry already-trained source group models (for
    instance from :func:`train_source_models`); ``ds_src`` is then not read.
    """
    rng = _as_rng(rng)
    if ds_src is not None and ds_src.d != ds_tgt.d:
        raise ValueError(f"source has {ds_src.d} features, target has {ds_tgt.d}")
    src_rng, tgt_rng = rng.spawn(2)
    if source_models is None:
        source = train_source_models(ds_src, eps_src, partition, lam_src, src_rng, tol=tol,
                                     _noise_fn=_noise_fn)
    else:
        source = tuple(source_models)
    for m, g in zip(source, partition.groups):
        if m.d != g.size:
            raise ValueError("source model dimension does not match its feature group")
    target = train_pst_f(ds_tgt, eps_tgt, partition, lam_tgt, lam_high, tgt_rng,
                         anchors=source_anchors(source), fraction=fraction, tol=tol,
                         _noise_fn=_noise_fn)
    return TransferModel(source, target, float(eps_src), float(eps_tgt))


def predict_transfer(model: TransferModel, X, combiner="hl"):
    return predict_stacked(model.target, X, combiner)
