"""Command-line entry point.

Subcommands: `run` executes a JSON config, `spectrum` prints the validation
report of a mixing matrix, `lemma-check` sweeps the scalar oracles, and
`preset` runs one of the bundled experiment configs.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness, lemma_oracles, mixing
from .metrics import summarize
from .rng import aux_stream


def _print_trajectories(trajectories) -> None:
    for trajectory in trajectories:
        summary = summarize(trajectory)
        final = summary.final
        print(
            f"{final.algorithm}: T={final.t} loss={final.loss_mean_model:.6g} "
            f"grad_norm_sq_mean={final.grad_norm_sq_mean_model:.6g} "
            f"consensus_err={final.consensus_err:.6g}"
        )
        for warning in trajectory.warnings:
            print(f"{final.algorithm}: warning: {warning}")
    if len(trajectories) >= 2:
        report = harness.compare_report(trajectories)
        base = report["algorithms"][0]
        for algo, ratios in report["gap_ratios"].items():
            if algo != base:
                print(f"{algo}/{base} loss ratio: {ratios['loss_mean_model']:.4g}")


def _cmd_run(args) -> int:
    config = harness.load_config(args.config)
    if args.out:
        config.out = args.out
    trajectories = harness.run_experiment(config)
    if config.out:
        print(f"wrote {config.out}")
    _print_trajectories(trajectories)
    return 0


def _cmd_spectrum(args) -> int:
    topology = mixing.build_topology(args.topology, args.n)
    matrix = mixing.build_mixing_matrix(topology, args.scheme)
    report = mixing.validate(matrix)
    print(f"kind={topology.kind}")
    print(f"n={topology.n}")
    print(f"scheme={args.scheme}")
    for line in report.as_lines():
        print(line)
    return 0 if report.valid else 1


def _cmd_lemma_check(args) -> int:
    rng = aux_stream(args.seed, 7)
    ok = True

    worst = 0.0
    for _ in range(50):
        rho = float(rng.uniform(-0.32, 0.95))
        if abs(rho) < 1e-3:
            rho = 0.5
        horizon = 100
        spec = lemma_oracles.RecurrenceSpec(
            rho=rho,
            a1=float(rng.uniform(-1, 1)),
            beta=tuple(rng.uniform(-1, 1, size=horizon)),
            horizon=horizon,
        )
        direct = lemma_oracles.recurrence_direct(spec)
        closed = lemma_oracles.recurrence_closed_form(spec)
        worst = max(worst, float(np.max(np.abs(direct - closed))))
    passed = worst <= 1e-10
    ok &= passed
    print(f"recurrence_closed_form_matches_direct: {'PASS' if passed else 'FAIL'} "
          f"(max residual {worst:.3e}, tol 1e-10)")

    violations = 0
    for _ in range(100):
        rho = float(rng.uniform(0.0, 0.99))
        b = rng.uniform(0.0, 2.0, size=50)
        if not lemma_oracles.geometric_sum_bounds(rho, b).holds:
            violations += 1
    passed = violations == 0
    ok &= passed
    print(f"geometric_sum_bounds_hold: {'PASS' if passed else 'FAIL'} "
          f"({violations} violations in 100 specs)")

    worst = 0.0
    for n in (3, 5, 8, 13):
        topology = mixing.build_topology("ring", n)
        matrix = mixing.build_mixing_matrix(topology, "uniform-neighbor")
        x = rng.standard_normal((6, n))
        report = lemma_oracles.rotation_invariance_check(x, matrix.eigenvectors)
        worst = max(worst, abs(report.frobenius_rotated - report.frobenius))
        if not report.passed:
            ok = False
    print(f"rotation_invariance: {'PASS' if ok else 'FAIL'} "
          f"(max residual {worst:.3e}, tol 1e-8)")
    return 0 if ok else 1


def _cmd_preset(args) -> int:
    config = harness.preset_config(args.name, out=args.out)
    trajectories = harness.run_experiment(config)
    if config.out:
        print(f"wrote {config.out}")
    _print_trajectories(trajectories)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="d2sim",
        description="Desk-scale simulator for decentralized stochastic gradient methods.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True, help="path to the config file")
    p_run.add_argument("--out", help="override the CSV output path")
    p_run.set_defaults(func=_cmd_run)

    p_spec = sub.add_parser("spectrum", help="validate and print a mixing matrix spectrum")
    p_spec.add_argument("--topology", required=True, choices=("ring", "complete", "star"))
    p_spec.add_argument("--n", required=True, type=int)
    p_spec.add_argument("--scheme", required=True,
                        choices=("uniform-neighbor", "lazy-metropolis", "mean-all"))
    p_spec.set_defaults(func=_cmd_spectrum)

    p_lemma = sub.add_parser("lemma-check", help="run the scalar oracle property sweeps")
    p_lemma.add_argument("--seed", type=int, default=0)
    p_lemma.set_defaults(func=_cmd_lemma_check)

    p_preset = sub.add_parser("preset", help="run a bundled experiment preset")
    p_preset.add_argument("name", choices=harness.PRESETS)
    p_preset.add_argument("--out", help="CSV output path")
    p_preset.set_defaults(func=_cmd_preset)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
