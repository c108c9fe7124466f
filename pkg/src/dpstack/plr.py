"""Privacy-preserving logistic regression by objective perturbation."""

from __future__ import annotations

import dataclasses
import logging
import math
import warnings
from typing import Callable, Optional

import numpy as np

from .data import LabeledDataset, scale_to_ball
from .mechanism import PerturbationParams, plr_params, sample_noise
from .numerics import DEFAULT_TOL, ObjectiveSpec, Regularizer, minimize, sigmoid

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

NoiseFn = Callable[[int, float, np.random.Generator], np.ndarray]


@dataclasses.dataclass(frozen=True)
class LinearModel:
    """Weights learnt on inputs transformed as ``(x - center) / scale``.

    ``center`` is a fixed, data-independent shift (0 unless set at training
    time). ``scale`` is ``inf`` for a group whose inputs were zeroed out;
    such a model always predicts 0.5.
    """

    weights: np.ndarray
    scale: float
    epsilon: float
    lam: float
    params: Optional[PerturbationParams] = None
    iterations: int = 0
    residual: float = 0.0
    center: float = 0.0

    @property
    def d(self):
        return self.weights.shape[0]

    def raw_weights(self):
        """Weights acting directly on unscaled inputs."""
        if math.isinf(self.scale):
            return np.zeros_like(self.weights)
        return self.weights / self.scale

    def margin(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.d:
            raise ValueError(f"input has {X.shape[-1]} features, model expects {self.d}")
        if math.isinf(self.scale):
            return np.zeros(X.shape[:-1]) if X.ndim > 1 else 0.0
        return ((X - self.center) / self.scale) @ self.weights

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "plr",
            "d": self.d,
            "s": _enc(self.scale),
            "center": self.center,
            "epsilon": _enc(self.epsilon),
            "lambda": self.lam,
            "weights": self.weights.tolist(),
            "params": None if self.params is None else _enc_params(self.params),
        }

    @classmethod
    def from_dict(cls, doc):
        w = np.asarray(doc["weights"], dtype=float)
        if doc.get("d", w.size) != w.size:
            raise ValueError("model d does not match the weight count")
        return cls(w, _dec(doc["s"]), _dec(doc["epsilon"]), float(doc["lambda"]),
                   center=float(doc.get("center", 0.0)))


def _enc(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


def _dec(x):
    return math.inf if x in ("inf", None) else float(x)


def _enc_params(p):
    return {k: ([_enc(float(v)) for v in val] if isinstance(val, list) else _enc(val))
            for k, val in p.to_dict().items()}


def predict_linear(model, X):
    """sigma(((x - c) / s) . w) for one sample or a row-stack of samples."""
    return sigmoid(model.margin(X))


def fit_perturbed(X, y, b, delta, lam, reg=None, tol=DEFAULT_TOL):
    """Minimize the perturbed objective on already-scaled data."""
    spec = ObjectiveSpec(X, y, b, delta, lam, reg or Regularizer())
    res = minimize(spec, tol=tol)
    assert res.residual <= tol
    return res


def train_plr(ds: LabeledDataset, epsilon, lam, reg=None, rng=None, *, radius=1.0,
              center=0.0, tol=DEFAULT_TOL, _noise_fn: Optional[NoiseFn] = None):
    """Train an epsilon-DP logistic regression on ``ds``.

    Inputs are divided by a single factor so every norm is at most
    ``radius``; the factor is stored and replayed by :func:`predict_linear`.
    ``reg`` acts on the scaled weights. ``center`` is subtracted from every
    sample before scaling; it must not depend on the data. ``epsilon=inf``
    trains the noiseless model.

    ``_noise_fn`` replaces the noise sampler and exists for tests only.

    Raises:
        BudgetRejected: if no noise calibration exists for (epsilon, n, lam).
    """
    if rng is None:
        rng = np.random.default_rng()
    params = plr_params(epsilon, ds.n, lam)
    if np.all(ds.y == ds.y[0]):
        warnings.warn("all training labels are equal", RuntimeWarning, stacklevel=2)
    Xs, s = scale_to_ball(ds.X - center if center else ds.X, radius)
    if _noise_fn is not None:
        b = np.asarray(_noise_fn(ds.d, params.eps_prime, rng), dtype=float)
    else:
        b = sample_noise(ds.d, params.eps_prime, rng)
    res = fit_perturbed(Xs, ds.y, b, params.delta, lam, reg, tol)
    logger.debug("plr n=%d d=%d eps'=%.4g delta=%.4g iters=%d residual=%.2e",
                 ds.n, ds.d, params.eps_prime, params.delta, res.iterations, res.residual)
    return LinearModel(res.w, s, float(epsilon), float(lam), params, res.iterations, res.residual,
                       float(center))
