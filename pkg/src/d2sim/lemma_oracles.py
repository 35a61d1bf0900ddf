"""Executable oracles for the scalar machinery behind the convergence analysis.

Three independent facts are exposed so other modules can be cross-checked
against them:

* the driven second-order recurrence a_{t+1} = rho (2 a_t - a_{t-1}) + beta_t
  (a_0 = 0) has the closed form
      a_{t+1} = a_1 q_{t+1} + sum_{s=1..t} beta_s q_{t+1-s},
      q_k = (u^k - v^k) / (u - v),  u, v = rho +- sqrt(rho^2 - rho),
  which for 0 < rho < 1 is the real trigonometric series
      q_k = rho^{(k-1)/2} sin(k theta) / sin(theta),  theta = arccos(sqrt(rho));
* partial sums of a_t = sum_{s<=t} rho^{t-s} b_s with rho in [0,1) and b >= 0
  obey sum a_t <= sum b_s / (1-rho) and sum a_t^2 <= sum b_s^2 / (1-rho)^2;
* multiplying a matrix by an orthogonal P (or P^T) preserves the Frobenius
  norm, and dropping the leading column can only shrink it.

The recurrence is contractive only for rho in (-1/3, 0) u (0, 1); specs may
carry rho down to -1 so the blow-up beyond the -1/3 boundary can be observed
directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RecurrenceSpec:
    """Inputs of the driven recurrence: a_0 = 0 implied, beta[s-1] drives step s."""

    rho: float
    a1: float
    beta: tuple[float, ...]
    horizon: int

    def __post_init__(self):
        if not (-1.0 < self.rho < 1.0) or self.rho == 0.0:
            raise ValueError(f"rho must lie in (-1, 0) or (0, 1), got {self.rho}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if len(self.beta) < self.horizon - 1:
            raise ValueError(
                f"need at least {self.horizon - 1} forcing terms, got {len(self.beta)}"
            )

    @property
    def in_contraction_domain(self) -> bool:
        return self.rho > -1.0 / 3.0


def recurrence_direct(spec: RecurrenceSpec) -> np.ndarray:
    """Evaluate a_1..a_horizon by running the recurrence itself."""
    a = np.empty(spec.horizon + 1)
    a[0] = 0.0
    a[1] = spec.a1
    for t in range(1, spec.horizon):
        a[t + 1] = spec.rho * (2.0 * a[t] - a[t - 1]) + spec.beta[t - 1]
    return a[1:]


def _mode_weights(rho: float, count: int) -> np.ndarray:
    # q_k for k = 0..count-1, evaluated without running the recurrence
    ks = np.arange(count, dtype=float)
    if rho > 0.0:
        theta = math.acos(math.sqrt(rho))
        return rho ** ((ks - 1.0) / 2.0) * np.sin(ks * theta) / math.sin(theta)
    root = math.sqrt(rho * rho - rho)
    u, v = rho + root, rho - root
    return (u**ks - v**ks) / (u - v)


def recurrence_closed_form(spec: RecurrenceSpec) -> np.ndarray:
    """Evaluate a_1..a_horizon from the closed form; independent of the recursion."""
    q = _mode_weights(spec.rho, spec.horizon + 1)
    a = np.empty(spec.horizon)
    a[0] = spec.a1
    beta = np.asarray(spec.beta, dtype=float)
    for t in range(1, spec.horizon):
        a[t] = spec.a1 * q[t + 1] + float(np.dot(beta[:t], q[t:0:-1]))
    return a


@dataclass(frozen=True)
class GeometricSumBounds:
    terms: np.ndarray  # a_1..a_k
    sum_terms: float  # S_k
    sum_squares: float  # D_k
    sum_bound: float  # sum b_s / (1 - rho)
    sq_bound: float  # sum b_s^2 / (1 - rho)^2

    @property
    def holds(self) -> bool:
        slack = 1e-12 * max(1.0, self.sum_bound, self.sq_bound)
        return self.sum_terms <= self.sum_bound + slack and (
            self.sum_squares <= self.sq_bound + slack
        )


def geometric_sum_bounds(rho: float, b, k: int | None = None) -> GeometricSumBounds:
    """Evaluate a_t = sum_{s<=t} rho^{t-s} b_s and check both partial-sum bounds."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    b = np.asarray(b, dtype=float)
    if np.any(b < 0.0):
        raise ValueError("forcing sequence must be nonnegative")
    if k is None:
        k = len(b)
    if not 1 <= k <= len(b):
        raise ValueError(f"k must be in [1, {len(b)}], got {k}")
    terms = np.empty(k)
    for t in range(1, k + 1):
        exponents = t - np.arange(1, t + 1, dtype=float)  # t-1, ..., 0
        terms[t - 1] = float(np.dot(rho**exponents, b[:t]))
    s_k = float(terms.sum())
    d_k = float((terms**2).sum())
    return GeometricSumBounds(
        terms=terms,
        sum_terms=s_k,
        sum_squares=d_k,
        sum_bound=float(b[:k].sum()) / (1.0 - rho),
        sq_bound=float((b[:k] ** 2).sum()) / (1.0 - rho) ** 2,
    )


@dataclass(frozen=True)
class RotationReport:
    frobenius: float
    frobenius_rotated: float
    frobenius_rotated_t: float
    tail_mass: float
    tolerance: float

    @property
    def passed(self) -> bool:
        scale = max(1.0, self.frobenius)
        return (
            abs(self.frobenius_rotated - self.frobenius) <= self.tolerance * scale
            and abs(self.frobenius_rotated_t - self.frobenius) <= self.tolerance * scale
            and self.tail_mass <= self.frobenius**2 + self.tolerance * max(1.0, self.frobenius**2)
        )


def rotation_invariance_check(
    x: np.ndarray, p: np.ndarray, tol: float = 1e-8
) -> RotationReport:
    """Check ||XP||_F = ||XP^T||_F = ||X||_F and the dropped-column inequality."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    if p.shape != (n, n):
        raise ValueError(f"P must be square, got shape {p.shape}")
    ortho = float(np.max(np.abs(p @ p.T - np.eye(n))))
    if ortho > tol:
        raise ValueError(f"P is not orthogonal (residual {ortho:.3e})")
    fro = float(np.linalg.norm(x))
    rotated = x @ p
    tail = float((rotated[:, 1:] ** 2).sum()) if n > 1 else 0.0
    return RotationReport(
        frobenius=fro,
        frobenius_rotated=float(np.linalg.norm(rotated)),
        frobenius_rotated_t=float(np.linalg.norm(x @ p.T)),
        tail_mass=tail,
        tolerance=tol,
    )


def negative_mode_coefficients(lambda_n: float) -> tuple[float, float]:
    """Both forcing coefficients in play for a negative eigenvalue mode.

    Returns (lambda_n^2 / (1 - |v|^2), 2 lambda_n^2 / (1 - |v|)^2): the first
    is what the contraction constants use, the second is what the
    recurrence-plus-sum route yields.  They differ by a bounded factor; both
    blow up as lambda_n approaches -1/3.
    """
    if not -1.0 / 3.0 < lambda_n < 0.0:
        raise ValueError(f"lambda_n must lie in (-1/3, 0), got {lambda_n}")
    av = math.sqrt(lambda_n * lambda_n - lambda_n) - lambda_n
    return (
        lambda_n * lambda_n / (1.0 - av * av),
        2.0 * lambda_n * lambda_n / (1.0 - av) ** 2,
    )
