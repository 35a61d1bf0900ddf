import json
import math

import pytest

from d2sim.harness import (
    CSV_HEADER,
    ConfigError,
    build_problem,
    compare_report,
    format_csv_row,
    load_config,
    preset_config,
    run_experiment,
)
from d2sim.metrics import MetricRecord, zeta0
from d2sim.mixing import build_mixing_matrix, build_topology, contraction_constants, recommended_stepsize


def minimal_config(**overrides) -> dict:
    data = {
        "algorithm": "d2",
        "topology": {"kind": "ring", "n": 4},
        "mixing_scheme": "lazy-metropolis",
        "problem": {
            "kind": "least-squares",
            "dim": 4,
            "n_workers": 4,
            "samples_per_worker": 6,
            "heterogeneity": 0.5,
            "noise": 0.3,
            "seed": 2,
        },
        "gamma": 0.05,
        "T": 5,
        "seed": 11,
    }
    data.update(overrides)
    return data


class TestLoadConfig:
    def test_defaults_filled(self):
        config = load_config(json.dumps(minimal_config()))
        assert config.log_every == 1
        assert config.batch_size == 1
        assert config.out is None

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            load_config(json.dumps(minimal_config(learning_rate=0.1)))

    def test_unknown_nested_key_named(self):
        bad = minimal_config()
        bad["problem"]["momentum"] = 0.9
        with pytest.raises(ConfigError, match="problem.*momentum"):
            load_config(json.dumps(bad))

    def test_semantic_error_carries_field_path(self):
        with pytest.raises(ConfigError, match="topology"):
            load_config(json.dumps(minimal_config(topology={"kind": "ring", "n": 2})))

    def test_parse_error_carries_line(self):
        with pytest.raises(ConfigError, match="line"):
            load_config('{"algorithm": "d2",\n  "T": }')

    def test_full_batch_spelling(self):
        config = load_config(json.dumps(minimal_config(batch_size="full")))
        assert config.batch_size is None
        config = load_config(json.dumps(minimal_config(batch_size=None)))
        assert config.batch_size is None

    def test_problem_kind_key_mismatches(self):
        bad = minimal_config()
        bad["problem"]["classes"] = 4
        with pytest.raises(ConfigError, match="classes"):
            load_config(json.dumps(bad))
        lp = minimal_config(
            problem={
                "kind": "label-partition",
                "dim": 4,
                "n_workers": 4,
                "samples_per_worker": 5,
                "classes": 4,
                "shuffled": True,
                "seed": 0,
            }
        )
        lp["problem"]["noise"] = 0.1
        with pytest.raises(ConfigError, match="noise"):
            load_config(json.dumps(lp))

    def test_worker_count_must_match_topology(self):
        bad = minimal_config()
        bad["problem"]["n_workers"] = 5
        with pytest.raises(ConfigError, match="n_workers"):
            load_config(json.dumps(bad))

    def test_missing_required_key(self):
        data = minimal_config()
        del data["gamma"]
        with pytest.raises(ConfigError, match="gamma"):
            load_config(json.dumps(data))

    def test_round_trip_lossless(self):
        config = load_config(json.dumps(minimal_config(out="/tmp/x.csv", batch_size="full")))
        assert load_config(json.dumps(config.to_json_dict())) == config

    def test_pool_divisibility(self):
        lp = minimal_config(
            problem={
                "kind": "label-partition",
                "dim": 4,
                "n_workers": 4,
                "samples_per_worker": 5,
                "classes": 3,
                "shuffled": False,
                "seed": 0,
            }
        )
        with pytest.raises(ConfigError, match="divisible"):
            load_config(json.dumps(lp))


class TestBuildProblem:
    def test_label_partition_pool_mapping(self):
        spec = {
            "kind": "label-partition",
            "dim": 4,
            "n_workers": 4,
            "samples_per_worker": 6,
            "classes": 8,
            "shuffled": False,
            "seed": 1,
        }
        p = build_problem(spec)
        assert p.n == 4
        assert all(s.size == 6 for s in p.shards)

    def test_least_squares_passthrough(self):
        p = build_problem(minimal_config()["problem"])
        assert p.kind == "least-squares"
        assert p.n == 4 and p.dim == 4


class TestRunExperiment:
    def test_all_algorithms_identical_when_degenerate(self):
        config = load_config(
            json.dumps(
                minimal_config(
                    algorithm="all",
                    topology={"kind": "complete", "n": 4},
                    mixing_scheme="mean-all",
                    problem={
                        "kind": "least-squares",
                        "dim": 4,
                        "n_workers": 4,
                        "samples_per_worker": 6,
                        "heterogeneity": 0.0,
                        "noise": 0.0,
                        "seed": 2,
                    },
                    batch_size="full",
                    T=30,
                )
            )
        )
        trajectories = run_experiment(config)
        assert [t.records[-1].algorithm for t in trajectories] == ["d2", "dpsgd", "cpsgd"]
        for records in zip(*[t.records for t in trajectories]):
            losses = [r.loss_mean_model for r in records]
            assert max(losses) - min(losses) <= 1e-10 * (1 + abs(losses[0]))

    def test_csv_determinism_and_header(self, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for path in paths:
            config = load_config(json.dumps(minimal_config(algorithm="all", T=8)))
            config.out = str(path)
            run_experiment(config)
        a, b = paths[0].read_bytes(), paths[1].read_bytes()
        assert a == b
        lines = a.decode().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 3 * 9  # header + three runs x (T + 1) records

    def test_invalid_matrix_aborts_decentralized(self, monkeypatch):
        from d2sim import harness

        config = load_config(json.dumps(minimal_config()))
        # swap in the zero-self-weight ring, whose smallest eigenvalue is -1
        monkeypatch.setattr(
            harness,
            "build_mixing_matrix",
            lambda topo, scheme: build_mixing_matrix(topo, "uniform-neighbor", self_weight=0.0),
        )
        with pytest.raises(ConfigError, match="validation"):
            run_experiment(config)

    def test_auto_gamma_matches_stepsize_rule(self):
        config = load_config(json.dumps(minimal_config(gamma="auto", T=12)))
        trajectory = run_experiment(config)[0]
        matrix = build_mixing_matrix(build_topology("ring", 4), "lazy-metropolis")
        c1, c2 = contraction_constants(matrix)
        problem = build_problem(config.problem)
        expected = recommended_stepsize(
            c1, c2, problem.L, math.sqrt(trajectory.variances.sigma_sq), 12, 4
        )
        assert trajectory.config["gamma"] == pytest.approx(expected, rel=1e-12)
        assert trajectory.records[-1].gamma == pytest.approx(expected, rel=1e-12)

    def test_trajectory_carries_variances_and_config(self):
        config = load_config(json.dumps(minimal_config(T=3)))
        trajectory = run_experiment(config)[0]
        assert trajectory.variances is not None
        assert trajectory.variances.zeta0 == pytest.approx(
            zeta0(build_problem(config.problem)), abs=1e-14
        )
        assert trajectory.config["T"] == 3
        assert [r.t for r in trajectory.records] == [0, 1, 2, 3]


class TestCompareReport:
    def _trajectories(self, algorithm="all", **overrides):
        config = load_config(json.dumps(minimal_config(algorithm=algorithm, **overrides)))
        return run_experiment(config)

    def test_identical_trajectories_unit_ratios(self):
        t = self._trajectories(algorithm="d2", T=4)[0]
        report = compare_report([t, t])
        for ratios in report["gap_ratios"].values():
            assert all(r == 1.0 for r in ratios.values())

    def test_single_trajectory_rejected(self):
        t = self._trajectories(algorithm="d2", T=4)[0]
        with pytest.raises(ValueError, match="at least two"):
            compare_report([t])

    def test_mismatched_problems_rejected(self):
        t1 = self._trajectories(algorithm="d2", T=4)[0]
        other = minimal_config(T=4)
        other["problem"]["seed"] = 3
        t2 = run_experiment(load_config(json.dumps(other)))[0]
        with pytest.raises(ValueError, match="mismatched problems"):
            compare_report([t1, t2])

    def test_all_mode_report_structure(self):
        trajectories = self._trajectories(T=6)
        report = compare_report(trajectories)
        assert report["algorithms"] == ["d2", "dpsgd", "cpsgd"]
        assert set(report["final"]) == {"d2", "dpsgd", "cpsgd"}


class TestPresets:
    @pytest.mark.parametrize(
        "name", ["unshuffled-ring", "shuffled-ring", "deterministic-quadratic"]
    )
    def test_presets_load(self, name):
        config = preset_config(name)
        assert config.topology_kind == "ring"
        assert config.topology_n == 5

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="preset"):
            preset_config("imagenet")

    def test_preset_out_override(self):
        config = preset_config("shuffled-ring", out="/tmp/x.csv")
        assert config.out == "/tmp/x.csv"

    def test_partition_regimes_order_heterogeneity(self):
        unshuffled = build_problem(preset_config("unshuffled-ring").problem)
        shuffled = build_problem(preset_config("shuffled-ring").problem)
        assert zeta0(shuffled) < zeta0(unshuffled)


def test_csv_row_formatting():
    record = MetricRecord(
        t=3,
        loss_mean_model=0.1,
        grad_norm_sq_mean_model=1e-17,
        grad_norm_sq_avg=2.5,
        consensus_err=0.0,
        gamma=0.05,
        algorithm="d2",
        seed=7,
    )
    row = format_csv_row(record)
    assert row.split(",")[0] == "3"
    assert row.split(",")[1] == "d2"
    assert row.split(",")[2] == "0.10000000000000001"
    assert row.split(",")[-1] == "7"
