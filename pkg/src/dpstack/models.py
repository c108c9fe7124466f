"""JSON persistence and prediction for every model kind."""

from __future__ import annotations

import json

from .plr import FORMAT_VERSION, LinearModel, predict_linear
from .stacking import StackedModel, predict_stacked
from .transfer import TransferModel, predict_transfer

_KINDS = {"plr": LinearModel, "pst-s": StackedModel, "pst-f": StackedModel, "pst-h": TransferModel}


def model_kind(model):
    if isinstance(model, LinearModel):
        return "plr"
    if isinstance(model, StackedModel):
        return model.kind
    if isinstance(model, TransferModel):
        return "pst-h"
    raise TypeError(f"not a model: {type(model).__name__}")


def model_to_dict(model):
    return model.to_dict()


def model_from_dict(doc):
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {version!r}")
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    return _KINDS[kind].from_dict(doc)


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, allow_nan=False)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def model_dim(model):
    return model.d


def predict(model, X, combiner="hl"):
    """Scores in [0, 1]. Combiners other than ``"hl"`` need a stacked model."""
    if isinstance(model, LinearModel):
        if combiner != "hl":
            raise ValueError(f"combiner {combiner!r} requires a stacked model")
        return predict_linear(model, X)
    if isinstance(model, StackedModel):
        return predict_stacked(model, X, combiner)
    return predict_transfer(model, X, combiner)

