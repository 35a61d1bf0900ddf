"""Per-round state transitions for the three training algorithms.

States hold the dim x n matrix X of local models (column i = worker i).
Steppers are pure: they consume a state plus a gradient matrix sampled at
X_t and return a fresh state, which makes shared-sample comparisons between
algorithms exact.

    d2      t = 0:  X_{1/2} = X_0 - gamma G_0
            t >= 1: X_{t+1/2} = 2 X_t - X_{t-1} - gamma G_t + gamma G_{t-1}
            then    X_{t+1} = X_{t+1/2} W
    dpsgd   X_{t+1} = X_t W - gamma G_t
    cpsgd   x_{t+1} = x_t - gamma mean_i g_i, broadcast to all columns

Under both decentralized updates the column mean follows the exact SGD
recursion xbar_{t+1} = xbar_t - gamma gbar_t.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .metrics import MetricRecord, Trajectory, evaluate
from .mixing import MixingMatrix, TheoryPreconditionError, theory_constants, validate
from .problems import ProblemInstance, VarianceEstimates, full_local_gradient, stochastic_gradient
from .rng import sample_stream

ALGORITHMS = ("d2", "dpsgd", "cpsgd")


@dataclass(frozen=True)
class OptimizerState:
    """Iterate matrix plus the one-step memory the variance-reduced update needs.

    X_prev and G_prev stay zero for dpsgd and cpsgd; for d2 they are
    meaningful from t >= 1 on.
    """

    algorithm: str
    t: int
    X: np.ndarray
    X_prev: np.ndarray
    G_prev: np.ndarray


def initial_state(algorithm: str, dim: int, n: int) -> OptimizerState:
    """All-zero starting state (the analysis assumes X_0 = 0)."""
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    zeros = np.zeros((dim, n))
    return OptimizerState(algorithm, 0, zeros, zeros.copy(), zeros.copy())


def mix_columns(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """X W with a fixed-order accumulation so results never depend on BLAS
    threading; zero weights contribute exactly nothing."""
    out = np.zeros_like(x)
    for j in range(weights.shape[0]):
        out += x[:, j : j + 1] * weights[j, :][None, :]
    return out


def _check_step_args(state: OptimizerState, grads: np.ndarray, gamma: float, algorithm: str):
    if state.algorithm != algorithm:
        raise ValueError(f"state belongs to {state.algorithm!r}, not {algorithm!r}")
    if grads.shape != state.X.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match state {state.X.shape}")
    if gamma <= 0:
        raise ValueError(f"stepsize must be positive, got {gamma}")


def d2_step(
    state: OptimizerState, grads: np.ndarray, w: MixingMatrix, gamma: float
) -> OptimizerState:
    """One variance-reduced gossip round; `grads` must be sampled at state.X."""
    grads = np.asarray(grads, dtype=float)
    _check_step_args(state, grads, gamma, "d2")
    if w.n != state.X.shape[1]:
        raise ValueError(f"mixing matrix is {w.n}x{w.n}, state has {state.X.shape[1]} workers")
    if state.t == 0:
        half = state.X - gamma * grads
    else:
        half = (2.0 * state.X - state.X_prev) - gamma * grads + gamma * state.G_prev
    x_new = mix_columns(half, w.weights)
    return OptimizerState("d2", state.t + 1, x_new, state.X.copy(), grads.copy())


def dpsgd_step(
    state: OptimizerState, grads: np.ndarray, w: MixingMatrix, gamma: float
) -> OptimizerState:
    """One gossip-then-descend round: X_{t+1} = X_t W - gamma G_t.

    The gradient term is applied after averaging and is not itself mixed.
    """
    grads = np.asarray(grads, dtype=float)
    _check_step_args(state, grads, gamma, "dpsgd")
    if w.n != state.X.shape[1]:
        raise ValueError(f"mixing matrix is {w.n}x{w.n}, state has {state.X.shape[1]} workers")
    x_new = mix_columns(state.X, w.weights) - gamma * grads
    return OptimizerState("dpsgd", state.t + 1, x_new, state.X_prev, state.G_prev)


def cpsgd_step(state: OptimizerState, grads: np.ndarray, gamma: float) -> OptimizerState:
    """Hub update: average all workers' gradients, step, broadcast."""
    grads = np.asarray(grads, dtype=float)
    _check_step_args(state, grads, gamma, "cpsgd")
    if np.any(state.X != state.X[:, :1]):
        raise ValueError("centralized state must have identical columns")
    n = state.X.shape[1]
    g_bar = np.zeros(state.X.shape[0])
    for i in range(n):
        g_bar += grads[:, i]
    g_bar /= n
    x_new = state.X[:, 0] - gamma * g_bar
    return OptimizerState(
        "cpsgd", state.t + 1, np.repeat(x_new[:, None], n, axis=1), state.X_prev, state.G_prev
    )


def sample_gradient_matrix(
    problem: ProblemInstance,
    x: np.ndarray,
    batch_size: int | None,
    root_seed: int,
    iteration: int,
) -> np.ndarray:
    """Gradient matrix G with column i sampled on worker i's private stream.

    Streams are keyed by (root_seed, worker, iteration) only, so different
    algorithms fed the same key draw identical minibatches.  batch_size None
    means exact full-batch gradients (the sigma = 0 regime).
    """
    grads = np.empty((problem.dim, problem.n))
    for i in range(problem.n):
        if batch_size is None:
            grads[:, i] = full_local_gradient(problem, i, x[:, i])
        else:
            rng = sample_stream(root_seed, i, iteration)
            grads[:, i] = stochastic_gradient(problem, i, x[:, i], batch_size, rng).value
    return grads


def run(
    algorithm: str,
    problem: ProblemInstance,
    w: MixingMatrix | None,
    gamma: float,
    T: int,
    batch_size: int | None = 1,
    seed: int = 0,
    log_every: int = 1,
    hooks: Iterable[Callable[[MetricRecord], None]] = (),
    variances: VarianceEstimates | None = None,
    config: dict | None = None,
) -> Trajectory:
    """Run T synchronous rounds and record full-batch metrics along the way.

    Decentralized algorithms require a mixing matrix that passes validate().
    A stepsize outside the provable regime (C3 <= 0) is recorded as a warning
    and the run continues.  Records are written at t = 0, every `log_every`
    rounds, and at t = T.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if log_every < 1:
        raise ValueError(f"log_every must be >= 1, got {log_every}")
    if gamma <= 0:
        raise ValueError(f"stepsize must be positive, got {gamma}")
    warnings: list[str] = []
    constants = None
    if algorithm in ("d2", "dpsgd"):
        if w is None:
            raise ValueError(f"{algorithm} requires a mixing matrix")
        report = validate(w)
        if not report.valid:
            raise ValueError("invalid mixing matrix: " + "; ".join(report.reasons))
    if w is not None:
        try:
            constants = theory_constants(w, problem.L, gamma)
        except TheoryPreconditionError as exc:
            warnings.append(f"outside provable stepsize regime: {exc}")

    hooks = tuple(hooks)
    state = initial_state(algorithm, problem.dim, problem.n)
    records = []

    def record(s: OptimizerState):
        rec = evaluate(problem, s, gamma=gamma, seed=seed)
        records.append(rec)
        for hook in hooks:
            hook(rec)

    record(state)
    for t in range(T):
        grads = sample_gradient_matrix(problem, state.X, batch_size, seed, t)
        if algorithm == "d2":
            state = d2_step(state, grads, w, gamma)
        elif algorithm == "dpsgd":
            state = dpsgd_step(state, grads, w, gamma)
        else:
            state = cpsgd_step(state, grads, gamma)
        if state.t % log_every == 0 or state.t == T:
            record(state)

    return Trajectory(
        config=config,
        records=records,
        variances=variances,
        constants=constants,
        warnings=warnings,
        final_state=state,
    )
