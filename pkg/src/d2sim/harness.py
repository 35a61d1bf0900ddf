"""Experiment configuration, orchestration and CSV emission.

A config is plain JSON with the exact keys

    {"algorithm", "topology": {"kind", "n"}, "mixing_scheme",
     "problem": {"kind", "dim", "n_workers", "samples_per_worker",
                 "heterogeneity", "noise", "classes", "shuffled", "seed"},
     "gamma", "T", "batch_size", "log_every", "seed", "out"}

Unknown keys are rejected.  `gamma` may be the string "auto", in which case
the stepsize rule is evaluated with an estimated sigma; `batch_size` may be
the string "full" (or null) for exact full-batch gradients.  Runs append one
CSV row per metric record under the fixed header

    iter,algo,loss,grad_norm_sq_mean,grad_norm_sq_avg,consensus_err,gamma,seed

with floats printed to 17 significant digits so identical configs produce
byte-identical files.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import optimizers
from .metrics import MetricRecord, Trajectory, summarize
from .mixing import (
    MixingMatrix,
    build_mixing_matrix,
    build_topology,
    contraction_constants,
    recommended_stepsize,
    validate,
)
from .problems import (
    LABEL_PARTITION,
    LEAST_SQUARES,
    ProblemInstance,
    VarianceEstimates,
    estimate_variances,
    gen_label_partition,
    gen_least_squares,
)
from .rng import aux_stream

CSV_HEADER = "iter,algo,loss,grad_norm_sq_mean,grad_norm_sq_avg,consensus_err,gamma,seed"

_TOP_KEYS = {
    "algorithm",
    "topology",
    "mixing_scheme",
    "problem",
    "gamma",
    "T",
    "batch_size",
    "log_every",
    "seed",
    "out",
}
_TOPOLOGY_KEYS = {"kind", "n"}
_PROBLEM_KEYS = {
    "kind",
    "dim",
    "n_workers",
    "samples_per_worker",
    "heterogeneity",
    "noise",
    "classes",
    "shuffled",
    "seed",
}
_ALGORITHMS = ("d2", "dpsgd", "cpsgd", "all")
_VARIANCE_PROBES = 3
_VARIANCE_SAMPLES = 200


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    algorithm: str
    topology_kind: str
    topology_n: int
    mixing_scheme: str
    problem: dict
    gamma: float | str
    T: int
    batch_size: int | None
    log_every: int
    seed: int
    out: str | None

    def to_json_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "topology": {"kind": self.topology_kind, "n": self.topology_n},
            "mixing_scheme": self.mixing_scheme,
            "problem": dict(self.problem),
            "gamma": self.gamma,
            "T": self.T,
            "batch_size": "full" if self.batch_size is None else self.batch_size,
            "log_every": self.log_every,
            "seed": self.seed,
            "out": self.out,
        }


def _require_int(value, field: str, minimum: int) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{field}: expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{field}: must be >= {minimum}, got {value}")
    return value


def _require_number(value, field: str, minimum: float) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{field}: expected a number, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{field}: must be >= {minimum}, got {value}")
    return float(value)


def _check_keys(data: dict, allowed: set[str], prefix: str = ""):
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {prefix}{key!r}")


def load_config(source: str | Path | dict) -> ExperimentConfig:
    """Parse and validate a config from a path, raw JSON text, or a dict."""
    if isinstance(source, dict):
        data = source
    else:
        text = None
        if isinstance(source, Path) or (isinstance(source, str) and os.path.exists(source)):
            text = Path(source).read_text()
        elif isinstance(source, str):
            text = source
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(data, _TOP_KEYS)
    for field in ("algorithm", "topology", "mixing_scheme", "problem", "gamma", "T", "seed"):
        if field not in data:
            raise ConfigError(f"missing required key {field!r}")

    algorithm = data["algorithm"]
    if algorithm not in _ALGORITHMS:
        raise ConfigError(f"algorithm: must be one of {_ALGORITHMS}, got {algorithm!r}")

    topo = data["topology"]
    if not isinstance(topo, dict):
        raise ConfigError("topology: expected an object with keys 'kind' and 'n'")
    _check_keys(topo, _TOPOLOGY_KEYS, prefix="topology.")
    for field in _TOPOLOGY_KEYS:
        if field not in topo:
            raise ConfigError(f"missing required key topology.{field!r}")
    kind = topo["kind"]
    n = _require_int(topo["n"], "topology.n", 1)
    try:
        build_topology(kind, n)
    except ValueError as exc:
        raise ConfigError(f"topology: {exc}") from exc

    scheme = data["mixing_scheme"]
    if scheme not in ("uniform-neighbor", "lazy-metropolis", "mean-all"):
        raise ConfigError(f"mixing_scheme: unknown scheme {scheme!r}")

    problem = _validate_problem_spec(data["problem"], n)

    gamma = data["gamma"]
    if gamma != "auto":
        gamma = _require_number(gamma, "gamma", 0.0)
        if gamma <= 0:
            raise ConfigError(f"gamma: must be positive, got {gamma}")

    T = _require_int(data["T"], "T", 1)
    batch_size = data.get("batch_size", 1)
    if batch_size is None or batch_size == "full":
        batch_size = None
    else:
        batch_size = _require_int(batch_size, "batch_size", 1)
    log_every = _require_int(data.get("log_every", 1), "log_every", 1)
    seed = _require_int(data["seed"], "seed", 0)
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError(f"out: expected a path string or null, got {out!r}")

    return ExperimentConfig(
        algorithm=algorithm,
        topology_kind=kind,
        topology_n=n,
        mixing_scheme=scheme,
        problem=problem,
        gamma=gamma,
        T=T,
        batch_size=batch_size,
        log_every=log_every,
        seed=seed,
        out=out,
    )


def _validate_problem_spec(spec, n_topology: int) -> dict:
    if not isinstance(spec, dict):
        raise ConfigError("problem: expected an object")
    _check_keys(spec, _PROBLEM_KEYS, prefix="problem.")
    for field in ("kind", "dim", "n_workers", "seed"):
        if field not in spec:
            raise ConfigError(f"missing required key problem.{field!r}")
    kind = spec["kind"]
    if kind not in (LEAST_SQUARES, LABEL_PARTITION):
        raise ConfigError(f"problem.kind: unknown kind {kind!r}")
    _require_int(spec["dim"], "problem.dim", 1)
    n_workers = _require_int(spec["n_workers"], "problem.n_workers", 1)
    if n_workers != n_topology:
        raise ConfigError(
            f"problem.n_workers: {n_workers} does not match topology.n = {n_topology}"
        )
    _require_int(spec["seed"], "problem.seed", 0)
    if kind == LEAST_SQUARES:
        for field in ("samples_per_worker", "heterogeneity", "noise"):
            if field not in spec:
                raise ConfigError(f"missing required key problem.{field!r}")
        for field in ("classes", "shuffled"):
            if field in spec:
                raise ConfigError(f"problem.{field}: not valid for kind {kind!r}")
        _require_int(spec["samples_per_worker"], "problem.samples_per_worker", 1)
        _require_number(spec["heterogeneity"], "problem.heterogeneity", 0.0)
        _require_number(spec["noise"], "problem.noise", 0.0)
    else:
        for field in ("samples_per_worker", "classes", "shuffled"):
            if field not in spec:
                raise ConfigError(f"missing required key problem.{field!r}")
        for field in ("heterogeneity", "noise"):
            if field in spec:
                raise ConfigError(f"problem.{field}: not valid for kind {kind!r}")
        _require_int(spec["samples_per_worker"], "problem.samples_per_worker", 1)
        classes = _require_int(spec["classes"], "problem.classes", 1)
        if not isinstance(spec["shuffled"], bool):
            raise ConfigError(f"problem.shuffled: expected true/false, got {spec['shuffled']!r}")
        pool = spec["samples_per_worker"] * n_workers
        if pool % classes != 0:
            raise ConfigError(
                "problem.samples_per_worker: pool "
                f"{pool} is not divisible into {classes} classes"
            )
    return dict(spec)


def build_problem(spec: dict) -> ProblemInstance:
    """Instantiate the problem named by a validated problem spec."""
    if spec["kind"] == LEAST_SQUARES:
        return gen_least_squares(
            n=spec["n_workers"],
            dim=spec["dim"],
            samples_per_worker=spec["samples_per_worker"],
            heterogeneity=spec["heterogeneity"],
            noise=spec["noise"],
            seed=spec["seed"],
        )
    samples_per_class = spec["samples_per_worker"] * spec["n_workers"] // spec["classes"]
    return gen_label_partition(
        n=spec["n_workers"],
        dim=spec["dim"],
        classes=spec["classes"],
        samples_per_class=samples_per_class,
        shuffled=spec["shuffled"],
        seed=spec["seed"],
    )


def _probe_variances(problem: ProblemInstance, seed: int) -> VarianceEstimates:
    rng = aux_stream(seed, 3)
    probes = [np.zeros(problem.dim)]
    for _ in range(_VARIANCE_PROBES - 1):
        probes.append(rng.standard_normal(problem.dim))
    return estimate_variances(problem, probes, _VARIANCE_SAMPLES, rng)


def format_csv_row(record: MetricRecord) -> str:
    return ",".join(
        [
            str(record.t),
            record.algorithm,
            format(record.loss_mean_model, ".17g"),
            format(record.grad_norm_sq_mean_model, ".17g"),
            format(record.grad_norm_sq_avg, ".17g"),
            format(record.consensus_err, ".17g"),
            format(record.gamma, ".17g"),
            str(record.seed),
        ]
    )


def run_experiment(config: ExperimentConfig) -> list[Trajectory]:
    """Execute a config end to end; returns one trajectory per algorithm run.

    Pipeline: topology -> mixing matrix -> validation -> problem -> variance
    estimates -> stepsize resolution -> runs -> CSV.  Algorithm "all" runs
    d2, dpsgd and cpsgd with identical per-worker sample streams.  Validation
    failures abort before any optimizer step.
    """
    topology = build_topology(config.topology_kind, config.topology_n)
    matrix = build_mixing_matrix(topology, config.mixing_scheme)
    report = validate(matrix)
    algorithms = ("d2", "dpsgd", "cpsgd") if config.algorithm == "all" else (config.algorithm,)
    warnings: list[str] = []
    if not report.valid:
        if any(a in ("d2", "dpsgd") for a in algorithms):
            raise ConfigError("mixing matrix fails validation: " + "; ".join(report.reasons))
        warnings.append("mixing matrix fails validation: " + "; ".join(report.reasons))

    problem = build_problem(config.problem)
    variances = _probe_variances(problem, config.seed)
    gamma = config.gamma
    if gamma == "auto":
        if not report.valid:
            raise ConfigError("gamma 'auto' needs a valid mixing matrix")
        c1, c2 = contraction_constants(matrix)
        gamma = recommended_stepsize(
            c1, c2, problem.L, math.sqrt(variances.sigma_sq), config.T, config.topology_n
        )

    echo = config.to_json_dict()
    echo["gamma"] = gamma
    trajectories = []
    sink = _CsvSink(config.out) if config.out else None
    try:
        for algorithm in algorithms:
            w: MixingMatrix | None = matrix if algorithm in ("d2", "dpsgd") else None
            hooks = (sink.write,) if sink else ()
            trajectory = optimizers.run(
                algorithm,
                problem,
                w,
                gamma,
                config.T,
                batch_size=config.batch_size,
                seed=config.seed,
                log_every=config.log_every,
                hooks=hooks,
                variances=variances,
                config=echo,
            )
            trajectory.warnings.extend(warnings)
            trajectories.append(trajectory)
    finally:
        if sink:
            sink.close()
    return trajectories


class _CsvSink:
    """Streams metric records to disk, one row per record."""

    def __init__(self, path: str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._fh.write(CSV_HEADER + "\n")

    def write(self, record: MetricRecord):
        self._fh.write(format_csv_row(record) + "\n")

    def close(self):
        self._fh.close()


def compare_report(trajectories: list[Trajectory]) -> dict:
    """Side-by-side final metrics and gap ratios relative to the first run."""
    if len(trajectories) < 2:
        raise ValueError("need at least two trajectories to compare")
    problems = []
    for t in trajectories:
        if t.config is None:
            raise ValueError("trajectories must carry config echoes to compare")
        problems.append(t.config["problem"])
    if any(p != problems[0] for p in problems[1:]):
        raise ValueError("mismatched problems: trajectories were run on different instances")

    def ratio(a: float, b: float) -> float:
        if a == b:
            return 1.0
        if b == 0.0:
            return math.inf
        return a / b

    finals = [summarize(t).final for t in trajectories]
    base = finals[0]
    metrics = ("loss_mean_model", "grad_norm_sq_mean_model", "grad_norm_sq_avg", "consensus_err")
    report = {
        "algorithms": [f.algorithm for f in finals],
        "final": {
            f.algorithm: {m: getattr(f, m) for m in metrics} for f in finals
        },
        "gap_ratios": {
            f.algorithm: {m: ratio(getattr(f, m), getattr(base, m)) for m in metrics}
            for f in finals
        },
        "warnings": sorted({w for t in trajectories for w in t.warnings}),
    }
    return report


# ---------------------------------------------------------------------------
# presets


def preset_config(name: str, out: str | None = None) -> ExperimentConfig:
    """Bundled experiment configs: the two data-partition regimes on a ring
    plus the deterministic (sigma = 0) quadratic used for theory checks."""
    if name == "unshuffled-ring":
        data = {
            "algorithm": "all",
            "topology": {"kind": "ring", "n": 5},
            "mixing_scheme": "uniform-neighbor",
            "problem": {
                "kind": LABEL_PARTITION,
                "dim": 10,
                "n_workers": 5,
                "samples_per_worker": 40,
                "classes": 10,
                "shuffled": False,
                "seed": 7,
            },
            "gamma": 0.1,
            "T": 2000,
            "batch_size": "full",
            "log_every": 1,
            "seed": 1,
        }
    elif name == "shuffled-ring":
        data = {
            "algorithm": "all",
            "topology": {"kind": "ring", "n": 5},
            "mixing_scheme": "uniform-neighbor",
            "problem": {
                "kind": LABEL_PARTITION,
                "dim": 10,
                "n_workers": 5,
                "samples_per_worker": 40,
                "classes": 10,
                "shuffled": True,
                "seed": 7,
            },
            "gamma": 0.05,
            "T": 2000,
            "batch_size": 8,
            "log_every": 1,
            "seed": 1,
        }
    elif name == "deterministic-quadratic":
        data = {
            "algorithm": "all",
            "topology": {"kind": "ring", "n": 5},
            "mixing_scheme": "uniform-neighbor",
            "problem": {
                "kind": LEAST_SQUARES,
                "dim": 10,
                "n_workers": 5,
                "samples_per_worker": 40,
                "heterogeneity": 1.0,
                "noise": 0.0,
                "seed": 3,
            },
            "gamma": 0.1,
            "T": 5000,
            "batch_size": "full",
            "log_every": 1,
            "seed": 1,
        }
    else:
        raise ConfigError(f"unknown preset {name!r}")
    if out is not None:
        data["out"] = out
    return load_config(data)


PRESETS = ("unshuffled-ring", "shuffled-ring", "deterministic-quadratic")
