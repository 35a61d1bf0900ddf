"""Exact convergence metrics evaluated on optimizer states.

All quantities use full-batch gradients even when training is stochastic,
so sampling noise never contaminates a reported metric:

    loss_mean_model          f(xbar)
    grad_norm_sq_mean_model  ||grad f(xbar)||^2
    grad_norm_sq_avg         ||(1/n) sum_i grad f_i(x_i)||^2
    consensus_err            sum_i ||xbar - x_i||^2
    zeta0                    (1/n) sum_i ||grad f_i(0) - grad f(0)||^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .mixing import TheoryConstants
    from .optimizers import OptimizerState
    from .problems import ProblemInstance, VarianceEstimates


@dataclass(frozen=True)
class MetricRecord:
    t: int
    loss_mean_model: float
    grad_norm_sq_mean_model: float
    grad_norm_sq_avg: float
    consensus_err: float
    gamma: float
    algorithm: str
    seed: int


@dataclass
class Trajectory:
    """Ordered metric records of one run plus its provenance."""

    config: dict | None
    records: list[MetricRecord]
    variances: "VarianceEstimates | None"
    constants: "TheoryConstants | None"
    warnings: list[str] = field(default_factory=list)
    final_state: "OptimizerState | None" = None

    @property
    def final_mean(self) -> np.ndarray:
        if self.final_state is None:
            raise ValueError("trajectory carries no final state")
        return self.final_state.X.mean(axis=1)


@dataclass(frozen=True)
class TrajectorySummary:
    final: MetricRecord
    mean_loss: float
    mean_grad_norm_sq_mean_model: float
    mean_grad_norm_sq_avg: float
    mean_consensus_err: float
    min_grad_norm_sq_mean_model: float


def evaluate(
    problem: "ProblemInstance",
    state: "OptimizerState",
    gamma: float = math.nan,
    seed: int = 0,
) -> MetricRecord:
    """Full-batch evaluation of every metric at the current state."""
    x = state.X
    if x.shape != (problem.dim, problem.n):
        raise ValueError(
            f"state shape {x.shape} does not match problem ({problem.dim}, {problem.n})"
        )
    xbar = x.mean(axis=1)
    loss = problem.loss(xbar)
    g_mean = problem.gradient(xbar)
    g_avg = np.zeros(problem.dim)
    for i in range(problem.n):
        g_avg += problem.local_gradient(i, x[:, i])
    g_avg /= problem.n
    consensus = float(((x - xbar[:, None]) ** 2).sum())
    return MetricRecord(
        t=state.t,
        loss_mean_model=loss,
        grad_norm_sq_mean_model=float(g_mean @ g_mean),
        grad_norm_sq_avg=float(g_avg @ g_avg),
        consensus_err=consensus,
        gamma=gamma,
        algorithm=state.algorithm,
        seed=seed,
    )


def zeta0(problem: "ProblemInstance") -> float:
    """Heterogeneity at the origin, computed exactly from full local gradients."""
    origin = np.zeros(problem.dim)
    grads = [problem.local_gradient(i, origin) for i in range(problem.n)]
    mean = np.zeros(problem.dim)
    for g in grads:
        mean += g
    mean /= problem.n
    return sum(float((g - mean) @ (g - mean)) for g in grads) / problem.n


def summarize(trajectory: Trajectory) -> TrajectorySummary:
    """Final and running-mean metric values plus the best gradient norm seen."""
    records = trajectory.records
    if not records:
        raise ValueError("cannot summarize an empty trajectory")
    k = len(records)
    return TrajectorySummary(
        final=records[-1],
        mean_loss=sum(r.loss_mean_model for r in records) / k,
        mean_grad_norm_sq_mean_model=sum(r.grad_norm_sq_mean_model for r in records) / k,
        mean_grad_norm_sq_avg=sum(r.grad_norm_sq_avg for r in records) / k,
        mean_consensus_err=sum(r.consensus_err for r in records) / k,
        min_grad_norm_sq_mean_model=min(r.grad_norm_sq_mean_model for r in records),
    )
