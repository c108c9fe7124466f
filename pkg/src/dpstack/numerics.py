"""Logistic loss, strongly convex regularizers and the perturbed-objective solver.

Every training routine in the package minimizes an objective of the form

    F(w) = (1/n) sum_i log(1 + exp(-y_i w.x_i)) + b.w/n + (delta/2)||w||^2 + lam * g(w)

with g either ||w||^2 / 2 or ||w - u||^2 / 2. Both regularizers are
1-strongly convex, so F is strictly convex whenever lam + delta > 0 and a
damped Newton iteration converges to the unique minimizer.
"""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

MAX_ITER = 10_000
DEFAULT_TOL = 1e-8


class ConvergenceError(RuntimeError):
    """Raised when the solver hits its iteration cap before reaching ``tol``."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def sigmoid(z):
    """Elementwise logistic function, stable for large ``|z|``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def loss_bundle(z):
    """Return ``(loss, first derivative, second derivative)`` of log(1 + e^-z).

    ``z`` is the margin y * w.x. The derivatives satisfy |l'| <= 1 and
    0 < l'' <= 1/4, the maximum being attained at z = 0.
    """
    z = np.asarray(z, dtype=float)
    loss = np.logaddexp(0.0, -z)
    p_neg = sigmoid(-z)
    p_pos = sigmoid(z)
    d1 = -p_neg
    d2 = p_pos * p_neg
    if z.ndim == 0:
        return float(loss), float(d1), float(d2)
    return loss, d1, d2


@dataclasses.dataclass(frozen=True)
class Regularizer:
    """``g(w) = ||w - offset||^2 / 2``; ``offset=None`` means plain L2."""

    offset: Optional[np.ndarray] = None
    mu: float = 1.0

    @classmethod
    def l2(cls):
        return cls()

    @classmethod
    def offset_l2(cls, u):
        return cls(offset=np.asarray(u, dtype=float).copy())

    @property
    def kind(self):
        return "L2" if self.offset is None else "OffsetL2"

    def center(self, d):
        if self.offset is None:
            return np.zeros(d)
        if self.offset.shape != (d,):
            raise ValueError(f"regularizer offset has shape {self.offset.shape}, expected ({d},)")
        return self.offset

    def value(self, w):
        r = w - self.center(w.shape[0])
        return 0.5 * float(r @ r)

    def grad(self, w):
        return w - self.center(w.shape[0])


@dataclasses.dataclass(frozen=True)
class ObjectiveSpec:
    """Data and coefficients of one perturbed logistic objective.

    ``X`` holds the (already scaled) samples row-wise and ``y`` the +-1 labels.
    """

    X: np.ndarray
    y: np.ndarray
    b: np.ndarray
    delta: float
    lam: float
    reg: Regularizer = dataclasses.field(default_factory=Regularizer)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n, d = X.shape
        if y.shape != (n,):
            raise ValueError(f"y has shape {y.shape}, expected ({n},)")
        if b.shape != (d,):
            raise ValueError(f"noise vector has shape {b.shape}, expected ({d},)")
        if not self.lam > 0:
            raise ValueError("regularization weight must be positive")
        if self.delta < 0:
            raise ValueError("quadratic coefficient must be non-negative")
        self.reg.center(d)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "b", b)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def _check_w(w, spec):
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.d,):
        raise ValueError(f"w has shape {w.shape}, expected ({spec.d},)")
    return w


def objective_eval(w, spec):
    """Value and exact gradient of the perturbed objective at ``w``."""
    w = _check_w(w, spec)
    n = spec.n
    z = spec.y * (spec.X @ w)
    loss, d1, _ = loss_bundle(z)
    value = (
        float(np.sum(loss)) / n
        + float(spec.b @ w) / n
        + 0.5 * spec.delta * float(w @ w)
        + spec.lam * spec.reg.value(w)
    )
    grad = spec.X.T @ (d1 * spec.y) / n + spec.b / n + spec.delta * w + spec.lam * spec.reg.grad(w)
    return value, grad


def objective_hessian(w, spec):
    w = _check_w(w, spec)
    z = spec.y * (spec.X @ w)
    _, _, d2 = loss_bundle(z)
    H = (spec.X.T * d2) @ spec.X / spec.n
    H[np.diag_indices_from(H)] += spec.delta + spec.lam * spec.reg.mu
    return H


@dataclasses.dataclass(frozen=True)
class SolverResult:
    w: np.ndarray
    iterations: int
    residual: float
    value: float


def minimize(spec, w0=None, tol=DEFAULT_TOL, max_iter=MAX_ITER):
    """Minimize the objective to gradient norm ``<= tol``.

    Damped Newton with Armijo backtracking. The iteration is a pure function
    of its inputs, so repeated calls return bitwise-identical iterates.
    ``w0`` defaults to the regularizer's minimizer.

    Raises:
        ConvergenceError: if ``max_iter`` is reached first.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if w0 is None:
        w = spec.reg.center(spec.d).copy()
    else:
        w = _check_w(w0, spec).copy()

    value, grad = objective_eval(w, spec)
    gnorm = float(np.linalg.norm(grad))
    it = 0
    while gnorm > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"solver stopped after {max_iter} iterations with gradient norm {gnorm:.3e}",
                gnorm,
            )
        it += 1
        H = objective_hessian(w, spec)
        step = -np.linalg.solve(H, grad)
        slope = float(grad @ step)
        # Near the optimum the decrease in F drops below its rounding error;
        # a step is then judged by the gradient norm instead.
        noise_floor = 1e-12 * max(1.0, abs(value))
        t = 1.0
        for _ in range(60):
            w_new = w + t * step
            v_new, g_new = objective_eval(w_new, spec)
            if v_new <= value + 1e-4 * t * slope:
                break
            if abs(v_new - value) <= noise_floor and np.linalg.norm(g_new) < 0.5 * gnorm:
                break
            t *= 0.5
        else:
            raise ConvergenceError(f"line search stalled with gradient norm {gnorm:.3e}", gnorm)
        w, value, grad = w_new, v_new, g_new
        gnorm = float(np.linalg.norm(grad))
    return SolverResult(w=w, iterations=it, residual=gnorm, value=value)
