"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines alongside the pytest verdicts.
"""

import time

import numpy as np

from d2sim.harness import build_problem, preset_config, run_experiment
from d2sim.lemma_oracles import (
    RecurrenceSpec,
    geometric_sum_bounds,
    recurrence_closed_form,
    recurrence_direct,
    rotation_invariance_check,
)
from d2sim.metrics import summarize
from d2sim.mixing import (
    build_mixing_matrix,
    build_topology,
    contraction_constants,
    recommended_stepsize,
    symmetric_eigen,
    theory_constants,
    validate,
)
from d2sim.optimizers import d2_step, dpsgd_step, initial_state, run, sample_gradient_matrix
from d2sim.problems import gen_least_squares
from d2sim.rng import aux_stream

RING5 = build_mixing_matrix(build_topology("ring", 5), "uniform-neighbor")


def _report(num: int, name: str, ok: bool, detail: str = ""):
    suffix = f" [{detail}]" if detail else ""
    print(f"\nACCEPTANCE {num} ({name}): {'PASS' if ok else 'FAIL'}{suffix}")
    assert ok, f"acceptance criterion {num} ({name}) failed{suffix}"


def test_criterion_1_mean_evolution_identity():
    start = time.time()
    problem = gen_least_squares(5, 10, 30, 1.0, 0.5, 11)
    gamma = 0.05
    worst = 0.0
    for algorithm, step in (("d2", d2_step), ("dpsgd", dpsgd_step)):
        state = initial_state(algorithm, problem.dim, problem.n)
        for t in range(500):
            grads = sample_gradient_matrix(problem, state.X, 1, 42, t)
            xbar = state.X.mean(axis=1)
            gbar = grads.mean(axis=1)
            state = step(state, grads, RING5, gamma)
            drift = float(np.linalg.norm(state.X.mean(axis=1) - xbar + gamma * gbar))
            worst = max(worst, drift / (1.0 + float(np.linalg.norm(xbar))))
    elapsed = time.time() - start
    _report(
        1,
        "mean-evolution identity",
        worst <= 1e-12 and elapsed < 5.0,
        f"worst drift {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_2_consensus_collapse():
    start = time.time()
    problem = gen_least_squares(8, 20, 30, 0.5, 0.5, 5)
    w = build_mixing_matrix(build_topology("complete", 8), "mean-all")
    a = run("d2", problem, w, 0.05, 200, batch_size=1, seed=9)
    b = run("cpsgd", problem, None, 0.05, 200, batch_size=1, seed=9)
    worst = 0.0
    for ra, rb in zip(a.records, b.records):
        for field in ("loss_mean_model", "grad_norm_sq_mean_model", "grad_norm_sq_avg"):
            x, y = getattr(ra, field), getattr(rb, field)
            worst = max(worst, abs(x - y) / (1.0 + abs(y)))
    state_gap = float(np.max(np.abs(a.final_state.X - b.final_state.X)))
    worst = max(worst, state_gap / (1.0 + float(np.max(np.abs(b.final_state.X)))))
    elapsed = time.time() - start
    _report(
        2,
        "consensus collapse equals centralized",
        worst <= 1e-10 and elapsed < 5.0,
        f"worst rel gap {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_3_zero_variance_reduction():
    start = time.time()
    problem = gen_least_squares(5, 10, 20, 0.0, 0.0, 2)
    trajectories = [
        run("d2", problem, RING5, 0.1, 100, batch_size=None, seed=1),
        run("dpsgd", problem, RING5, 0.1, 100, batch_size=None, seed=1),
        run("cpsgd", problem, None, 0.1, 100, batch_size=None, seed=1),
    ]
    worst = 0.0
    for records in zip(*[t.records for t in trajectories]):
        for field in (
            "loss_mean_model",
            "grad_norm_sq_mean_model",
            "grad_norm_sq_avg",
            "consensus_err",
        ):
            values = [getattr(r, field) for r in records]
            worst = max(worst, (max(values) - min(values)) / (1.0 + abs(values[0])))
    elapsed = time.time() - start
    _report(
        3,
        "zero-variance reduction",
        worst <= 1e-12,
        f"worst spread {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_4_heterogeneity_separation():
    start = time.time()
    config = preset_config("deterministic-quadratic")
    trajectories = {t.records[-1].algorithm: t for t in run_experiment(config)}
    d2_final = trajectories["d2"].records[-1].grad_norm_sq_mean_model
    dpsgd_final = trajectories["dpsgd"].records[-1].grad_norm_sq_mean_model
    elapsed = time.time() - start
    ok = d2_final <= 1e-12 and dpsgd_final >= 10.0 * d2_final and elapsed < 30.0
    _report(
        4,
        "heterogeneity separation",
        ok,
        f"d2 {d2_final:.2e}, plain decentralized {dpsgd_final:.2e}, {elapsed:.1f}s",
    )


def test_criterion_5_shuffled_parity():
    start = time.time()
    config = preset_config("shuffled-ring")
    finals = [t.records[-1].loss_mean_model for t in run_experiment(config)]
    ratio = max(finals) / min(finals)
    elapsed = time.time() - start
    _report(
        5,
        "shuffled parity",
        ratio <= 2.0 and elapsed < 30.0,
        f"loss ratio {ratio:.4f}, {elapsed:.1f}s",
    )


def test_criterion_6_spectral_gate():
    start = time.time()
    zero_self = build_mixing_matrix(
        build_topology("ring", 4), "uniform-neighbor", self_weight=0.0
    )
    rejects_bad = not validate(zero_self).valid
    accepts_rings = all(
        validate(build_mixing_matrix(build_topology("ring", n), "uniform-neighbor")).valid
        for n in range(3, 65)
    )
    rng = aux_stream(123, 9)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 33))
        a = rng.standard_normal((n, n))
        a = (a + a.T) / 2
        values, p = symmetric_eigen(a)
        worst = max(worst, float(np.max(np.abs(p @ np.diag(values) @ p.T - a))))
    elapsed = time.time() - start
    ok = rejects_bad and accepts_rings and worst <= 1e-8 and elapsed < 10.0
    _report(
        6,
        "spectral gate",
        ok,
        f"reconstruction {worst:.2e}, {elapsed:.1f}s",
    )


def test_criterion_7_constants_and_stepsize():
    start = time.time()
    mean_all = build_mixing_matrix(build_topology("complete", 4), "mean-all")
    constants = theory_constants(mean_all, L=1.0, gamma=0.1)
    exact = constants.C1 == 1.0 and constants.C2 == 0.0
    rng = aux_stream(77, 0)
    ok = True
    for _ in range(50):
        family = int(rng.integers(5))
        if family == 0:
            matrix = build_mixing_matrix(
                build_topology("ring", int(rng.integers(1, 9)) * 2 + 1), "uniform-neighbor"
            )
        elif family == 1:
            matrix = build_mixing_matrix(
                build_topology("ring", int(rng.integers(3, 20))), "lazy-metropolis"
            )
        elif family == 2:
            matrix = build_mixing_matrix(
                build_topology("complete", int(rng.integers(2, 10))), "uniform-neighbor"
            )
        elif family == 3:
            matrix = build_mixing_matrix(
                build_topology("star", int(rng.integers(2, 10))), "lazy-metropolis"
            )
        else:
            matrix = build_mixing_matrix(
                build_topology("complete", int(rng.integers(2, 10))), "mean-all"
            )
        L = float(rng.uniform(0.2, 8.0))
        sigma = float(rng.uniform(0.0, 4.0))
        T = int(rng.integers(10, 10**5))
        c1, c2 = contraction_constants(matrix)
        gamma = recommended_stepsize(c1, c2, L, sigma, T, matrix.n)
        slack = 1.0 + 1e-12
        ok &= c2 * gamma**2 * L**2 <= slack / 64.0
        ok &= c1 * gamma**2 * L**2 <= slack / 36.0
        ok &= theory_constants(matrix, L, gamma).C3 >= 0.5 - 1e-12
    elapsed = time.time() - start
    _report(
        7,
        "constants and stepsize",
        exact and ok,
        f"mean-all C1={constants.C1}, C2={constants.C2}, {elapsed:.1f}s",
    )


def test_criterion_8_lemma_oracles():
    start = time.time()
    rng = aux_stream(2024, 1)
    worst_recurrence = 0.0
    for k in range(50):
        rho = float(rng.uniform(-0.32, -0.01)) if k % 2 else float(rng.uniform(0.01, 0.95))
        spec = RecurrenceSpec(
            rho=rho,
            a1=float(rng.uniform(-1, 1)),
            beta=tuple(rng.uniform(-1, 1, size=200)),
            horizon=200,
        )
        gap = np.abs(recurrence_direct(spec) - recurrence_closed_form(spec))
        worst_recurrence = max(worst_recurrence, float(np.max(gap)))
    sums_hold = all(
        geometric_sum_bounds(
            float(rng.uniform(0.0, 0.99)), rng.uniform(0.0, 2.0, size=50)
        ).holds
        for _ in range(100)
    )
    rotations_hold = True
    for n in (3, 5, 8, 13, 21):
        matrix = build_mixing_matrix(build_topology("ring", n), "uniform-neighbor")
        x = rng.standard_normal((7, n))
        rotations_hold &= rotation_invariance_check(x, matrix.eigenvectors, tol=1e-8).passed
    elapsed = time.time() - start
    ok = worst_recurrence <= 1e-10 and sums_hold and rotations_hold and elapsed < 10.0
    _report(
        8,
        "lemma oracles",
        ok,
        f"recurrence gap {worst_recurrence:.2e}, {elapsed:.1f}s",
    )


def test_criterion_9_rate_sanity():
    start = time.time()
    config = preset_config("deterministic-quadratic")
    problem = build_problem(config.problem)
    averages = []
    horizons = (100, 200, 400)
    for T in horizons:
        trajectory = run(
            "d2", problem, RING5, config.gamma, T, batch_size=None, seed=config.seed
        )
        averages.append(summarize(trajectory).mean_grad_norm_sq_mean_model)
    slope = float(np.polyfit(np.log(horizons), np.log(averages), 1)[0])
    elapsed = time.time() - start
    _report(
        9,
        "rate sanity",
        slope <= -0.9,
        f"log-log slope {slope:.3f}, {elapsed:.1f}s",
    )


def test_criterion_10_determinism(tmp_path):
    start = time.time()
    outputs = []
    for name in ("a.csv", "b.csv"):
        config = preset_config("shuffled-ring", out=str(tmp_path / name))
        run_experiment(config)
        outputs.append((tmp_path / name).read_bytes())
    elapsed = time.time() - start
    ok = outputs[0] == outputs[1] and len(outputs[0]) > 0
    _report(
        10,
        "byte-identical reruns",
        ok,
        f"{len(outputs[0])} bytes, {elapsed:.1f}s",
    )
