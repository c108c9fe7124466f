"""Differentially private logistic regression and stacking ensembles.

Objective-perturbation logistic regression (:func:`train_plr`), stacking over
sample or feature partitions (:func:`train_pst_s`, :func:`train_pst_f`),
stacking with hypothesis transfer (:func:`train_pst_h`) and a seeded
benchmark harness (:mod:`dpstack.bench`).
"""

from .data import LabeledDataset, SynthSpec, load_dataset, save_dataset, synth_generate
from .mechanism import BudgetRejected, PerturbationParams, plr_params, pstf_params, sample_noise
from .models import load_model, predict, save_model
from .numerics import ConvergenceError, Regularizer
from .partition import FeaturePartition, alpha_importance, feature_partition
from .plr import LinearModel, predict_linear, train_plr
from .stacking import StackedModel, predict_stacked, train_pst_f, train_pst_s
from .transfer import TransferModel, predict_transfer, train_pst_h

__version__ = "0.1.0"

__all__ = [
    "BudgetRejected", "ConvergenceError", "FeaturePartition", "LabeledDataset", "LinearModel",
    "PerturbationParams", "Regularizer", "StackedModel", "SynthSpec", "TransferModel",
    "alpha_importance", "feature_partition", "load_dataset", "load_model", "plr_params",
    "predict", "predict_linear", "predict_stacked", "predict_transfer", "pstf_params",
    "sample_noise", "save_dataset", "save_model", "synth_generate", "train_plr", "train_pst_f",
    "train_pst_h", "train_pst_s",
]
