"""Privacy-budget arithmetic, the noise sampler and related calculators.

The noise density is proportional to exp(-rate * ||b|| / 2). Writing b as a
norm times a direction, the norm is Gamma(d, 2 / rate) distributed and the
direction is uniform on the sphere, which gives E||b|| = 2d / rate.

Importance weights passed to :func:`pstf_params` must come from side
information that does not depend on the training data; otherwise the
epsilon guarantee does not hold. The library cannot check where they came
from.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .numerics import Regularizer, loss_bundle


class BudgetRejected(ValueError):
    """The (epsilon, n, lambda) combination admits no valid noise calibration."""


@dataclasses.dataclass(frozen=True)
class PerturbationParams:
    """Noise rate and added quadratic coefficient for one training call.

    ``eps_prime`` is the final rate of the noise density and ``delta`` the
    quadratic coefficient. For feature-partitioned training ``group_deltas``
    and ``group_rates`` hold the per-group values; a group with zero
    importance gets rate ``inf`` (no noise) and delta 0.
    """

    epsilon: float
    eps_prime: float
    delta: float
    first_branch: bool
    group_deltas: Tuple[float, ...] = ()
    group_rates: Tuple[float, ...] = ()

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "eps_prime": self.eps_prime,
            "delta": self.delta,
            "branch": "eps_prime>0" if self.first_branch else "fallback",
            "group_deltas": list(self.group_deltas),
            "group_rates": list(self.group_rates),
        }


def _check_epsilon(epsilon):
    if not epsilon > 0:
        raise ValueError(f"privacy budget must be positive, got {epsilon}")


def _log_term(q, n, lam):
    # log(1 + q^2/(2 n lam) + q^4/(16 n^2 lam^2))
    return math.log1p(q * q / (2 * n * lam) + q**4 / (16 * n * n * lam * lam))


def _fallback_delta(q, n, epsilon, lam):
    return q * q / (4 * n * math.expm1(epsilon * q / 4)) - lam


def plr_params(epsilon, n, lam):
    """Noise calibration for a single objective-perturbed logistic regression.

    >>> p = plr_params(1.0, 1500, 0.01)
    >>> round(p.eps_prime, 5), p.delta
    (0.96694, 0.0)
    """
    _check_epsilon(epsilon)
    epsilon = float(epsilon)
    if n < 1:
        raise ValueError("n must be at least 1")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if math.isinf(epsilon):
        return PerturbationParams(epsilon, math.inf, 0.0, True)
    eps_prime = epsilon - _log_term(1.0, n, lam)
    if eps_prime > 0:
        return PerturbationParams(epsilon, eps_prime, 0.0, True)
    delta = _fallback_delta(1.0, n, epsilon, lam)
    if delta < 0:
        raise BudgetRejected(
            f"lambda={lam} too large for epsilon={epsilon}, n={n}: fallback delta {delta:.4g} < 0"
        )
    return PerturbationParams(epsilon, epsilon / 2, delta, False)


def pstf_params(epsilon, n, lams, q):
    """Noise calibration for feature-partitioned training with importance ``q``.

    ``lams`` may be a scalar (shared by every group) or one value per group.
    Groups with ``q_k == 0`` drop out of the sum and receive no noise.
    """
    _check_epsilon(epsilon)
    epsilon = float(epsilon)
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size == 0:
        raise ValueError("q must be a non-empty vector")
    if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("importance weights must be non-negative and sum to 1")
    lams = np.broadcast_to(np.asarray(lams, dtype=float), q.shape)
    if np.any(lams <= 0):
        raise ValueError("every lambda_k must be positive")
    if n < 1:
        raise ValueError("n must be at least 1")
    K = q.size
    if math.isinf(epsilon):
        rates = tuple(math.inf for _ in range(K))
        return PerturbationParams(epsilon, math.inf, 0.0, True, (0.0,) * K, rates)

    total = 0.0
    for qk, lk in zip(q, lams):
        if qk > 0:
            total += _log_term(float(qk), n, float(lk))
    eps_prime = epsilon - total
    if eps_prime > 0:
        rates = tuple(eps_prime if qk > 0 else math.inf for qk in q)
        return PerturbationParams(epsilon, eps_prime, 0.0, True, (0.0,) * K, rates)

    deltas = []
    for k, (qk, lk) in enumerate(zip(q, lams)):
        if qk == 0:
            deltas.append(0.0)
            continue
        dk = _fallback_delta(float(qk), n, epsilon, float(lk))
        if dk < 0:
            raise BudgetRejected(
                f"group {k}: lambda={lk} too large for epsilon={epsilon}, q={qk}, n={n} "
                f"(fallback delta {dk:.4g} < 0)"
            )
        deltas.append(dk)
    rates = tuple(epsilon / 2 if qk > 0 else math.inf for qk in q)
    return PerturbationParams(epsilon, epsilon / 2, 0.0, False, tuple(deltas), rates)


def sample_noise(d, eps_rate, rng):
    """Draw b with density proportional to exp(-eps_rate * ||b|| / 2).

    An infinite rate returns the zero vector (the noiseless limit).
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    if not eps_rate > 0:
        raise ValueError("noise rate must be positive")
    if math.isinf(eps_rate):
        return np.zeros(d)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    norm = rng.gamma(shape=d, scale=2.0 / eps_rate)
    return norm * direction


def sample_noise_norms(d, eps_rate, n_draws, rng):
    """Norms of ``n_draws`` independent noise vectors (vectorised)."""
    directions = rng.standard_normal((n_draws, d))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    norms = rng.gamma(shape=d, scale=2.0 / eps_rate, size=n_draws)
    return np.linalg.norm(directions * norms[:, None], axis=1)


def noise_audit(d, eps_rate, n_draws, rng, level=0.01):
    """Compare sampled noise norms with their Gamma(d, 2/eps_rate) law."""
    norms = sample_noise_norms(d, eps_rate, n_draws, rng)
    expected = 2.0 * d / eps_rate
    std_err = math.sqrt(d) * (2.0 / eps_rate) / math.sqrt(n_draws)
    ks = stats.kstest(norms, stats.gamma(a=d, scale=2.0 / eps_rate).cdf)
    mean = float(norms.mean())
    return {
        "d": d,
        "eps_rate": eps_rate,
        "n_draws": n_draws,
        "mean_norm": mean,
        "expected_norm": expected,
        "std_error": std_err,
        "ks_stat": float(ks.statistic),
        "ks_pvalue": float(ks.pvalue),
        "level": level,
        "passed": bool(ks.pvalue >= level and abs(mean - expected) <= 3 * std_err),
    }


def recover_noise(w, X, y, lam, delta, reg: Optional[Regularizer] = None):
    """The noise vector for which ``w`` is the stationary point of the objective.

    Setting the gradient to zero and solving for b gives
    b = -n lam grad g(w) - sum_i y_i l'(y_i x_i.w) x_i - n delta w.
    ``X`` must already be scaled the way it was at training time.
    """
    reg = reg or Regularizer()
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    _, d1, _ = loss_bundle(y * (X @ w))
    return -n * lam * reg.grad(w) - X.T @ (y * d1) - n * delta * w


def bound_terms(kind, v_norm, d, eps_g, epsilon, delta, K=1, q=1.0, reading="adjusted"):
    """The three max-arguments of the PLR / feature-group sample-size bounds.

    The unknown constant C1 is set to 1, so only ratios between terms are
    meaningful. ``kind`` is ``"single"`` (single model over all ``d`` features)
    or ``"part"`` (one group of a ``K``-way feature partition with importance
    ``q``). For ``"part"`` the reference norm is read two ways:

    * ``"raw"``: a = q * ||v||, with ``v_norm`` taken as the group's own
      reference norm;
    * ``"adjusted"``: the group's reference model is ||v|| / q because its
      inputs were shrunk by q, so a = ||v||.
    """
    if kind == "single":
        t1 = v_norm**2 * math.log(1 / delta) / eps_g**2
        t2 = d * math.log(d / delta) * v_norm / (eps_g * epsilon)
        t3 = v_norm**2 / (eps_g * epsilon)
        return t1, t2, t3
    if kind != "part":
        raise ValueError(f"unknown bound kind {kind!r}")
    if reading == "raw":
        a = q * v_norm
    elif reading == "adjusted":
        a = v_norm
    else:
        raise ValueError(f"unknown reading {reading!r}")
    t1 = a**2 * math.log(1 / delta) / eps_g**2
    t2 = d * math.log(d / (K * delta)) * a / (q * K * eps_g * epsilon)
    t3 = a**2 / (eps_g * epsilon)
    return t1, t2, t3


def expected_noise_norm(d, eps_rate):
    return 2.0 * d / eps_rate


def group_noise_levels(group_sizes: Sequence[int], q: Sequence[float], eps_prime):
    """Noise-to-signal ratio 2 d_k / (eps' q_k) of each feature group."""
    return [math.inf if qk == 0 else 2.0 * dk / (eps_prime * qk) for dk, qk in zip(group_sizes, q)]
