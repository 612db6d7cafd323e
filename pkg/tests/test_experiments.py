import copy
import csv
import json
import math

import pytest

from rsgnet.cli import main
from rsgnet.errors import ValidationError
from rsgnet.experiments import (
    COLUMNS,
    SweepRecord,
    compare_bound,
    grid_points,
    load_default_config,
    read_records_csv,
    run_experiment,
    sweep_figure_trends,
    trend_verdict,
    validate_config,
)

TINY_DA = {"B": 5, "n_iter": 20, "gamma": 0.1, "trajectories": 3, "lipschitz_pairs": 10,
           "data": {"source": "synthetic", "S": 60, "eval_S": 40, "mu_x": 0.5, "tau_x": 0.3}}
TINY_TRAIN = {
    "mode": "train", "seed": 4,
    "data": {"source": "synthetic", "S": 80, "eval_S": 40, "mu_x": 0.5, "tau_x": 0.3},
    "network": {"family": "lnn", "widths": [6, 4, 2], "box_limits": [0.2, None], "keep_prob": 0.8},
    "pretrain": {"n_iter": 15, "gamma": 0.1, "runs": 2},
    "training": {"batch_size": 5, "n_iter": 25, "gamma": 0.1, "runs": 3, "trajectories": 3},
}


def _strip_seconds(path):
    lines = (path / "results.csv").read_text(encoding="utf-8").splitlines()
    idx = COLUMNS.index("seconds")
    return [row[:idx] + row[idx + 1:] for row in csv.reader(lines)]


def _summary_without_seconds(path):
    doc = json.loads((path / "summary.json").read_text(encoding="utf-8"))
    for r in doc["records"]:
        r.pop("seconds")
    return doc


class TestCompareBound:
    def test_within_bound(self):
        rep = compare_bound([SweepRecord("x", 0, {}, 0.10, 0.01, bound=0.109694)])
        assert rep["violation_count"] == 0 and rep["checked"] == 1

    def test_violation(self):
        rep = compare_bound([SweepRecord("x", 0, {}, 0.20, 0.01, bound=0.109694)])
        assert rep["violations"] == [0]

    def test_infinite_bound_excluded(self):
        recs = [SweepRecord("x", 0, {}, 5.0, 0.0, bound=math.inf), SweepRecord("x", 1, {}, 0.1, 0.0, bound=1.0)]
        rep = compare_bound(recs)
        assert rep == {"checked": 1, "violation_count": 0, "violations": [], "excluded": [0]}

    def test_accepts_dicts(self):
        rep = compare_bound([{"index": 3, "empirical": 1.0, "stderr": math.nan, "bound": 0.5}])
        assert rep["violations"] == [3]


class TestTrend:
    def test_single_point(self):
        v = trend_verdict([1.0], [2.0])
        assert v["verdict"] == "insufficient points" and "spearman" not in v

    def test_direction(self):
        assert trend_verdict([1, 2, 3], [0.1, 0.5, 0.9])["verdict"] == "increasing"
        assert trend_verdict([1, 2, 3], [0.9, 0.5, 0.1])["spearman"] == pytest.approx(-1.0)

    def test_grid_points(self):
        assert grid_points({"a": [1, 2], "b": [3]}) == [{"a": 1, "b": 3}, {"a": 2, "b": 3}]
        assert grid_points({"points": [{"a": 1}]}) == [{"a": 1}]
        assert grid_points({"a": []}) == []


class TestSweeps:
    def test_size_sweep_records(self):
        grid = {"points": [{"d_x": 4, "d_h": 3}, {"d_x": 6, "d_h": 5}, {"d_x": 8, "d_h": 6}]}
        recs, summary = sweep_figure_trends("size", grid, TINY_DA, seed=1)
        assert [r.index for r in recs] == [0, 1, 2]
        assert all(r.empirical >= 0 and r.bound >= 0 for r in recs)
        assert summary["trend"]["points"] == 3
        assert "U_da" in recs[0].constants

    def test_workers_match_serial(self):
        grid = {"zeta": [0.3, 0.9]}
        base = dict(TINY_DA, widths=[5, 4, 3, 2], w_m=0.2)
        a, _ = sweep_figure_trends("dropout", grid, base, seed=2)
        b, _ = sweep_figure_trends("dropout", grid, base, seed=2, workers=2)
        assert [r.row()[:10] for r in a] == [r.row()[:10] for r in b]

    def test_pretrain_sweep(self):
        grid = {"pretrain_iters": [0, 10]}
        base = dict(TINY_DA, widths=[5, 4, 3, 2], w_m=0.2, zeta=0.5)
        recs, _ = sweep_figure_trends("pretrain-vs-dropout", grid, base, seed=0)
        assert "pretrain_achieved" in recs[1].constants
        assert recs[0].constants["alpha"] >= 0

    def test_desk_caps(self):
        with pytest.raises(ValidationError) as exc:
            sweep_figure_trends("size", {"d_x": [128], "d_h": [8]}, dict(TINY_DA, trajectories=80))
        assert len(exc.value.problems) == 2

    def test_budget_flags_partial(self):
        recs, summary = sweep_figure_trends("size", {"d_x": [4, 5], "d_h": [3]}, TINY_DA, budget_seconds=0.0)
        assert summary["partial"] and len(recs) < 2

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            sweep_figure_trends("colour", {}, TINY_DA)


class TestRunExperiment:
    def test_bounds_mode_complexity(self, tmp_path):
        doc = run_experiment(load_default_config("bounds_complexity"), tmp_path)
        assert abs(doc["summary"]["n_iterations"] - 7840) <= 0.02 * 7840
        assert doc["summary"]["sample_size"] == 1961

    def test_zero_point_sweep(self, tmp_path):
        cfg = {"mode": "sweep", "sweep": dict(TINY_DA, kind="size", grid={"d_x": [], "d_h": [4]})}
        run_experiment(cfg, tmp_path)
        assert (tmp_path / "results.csv").read_text(encoding="utf-8") == ",".join(COLUMNS) + "\n"

    def test_train_deterministic(self, tmp_path):
        run_experiment(copy.deepcopy(TINY_TRAIN), tmp_path / "a")
        run_experiment(copy.deepcopy(TINY_TRAIN), tmp_path / "b")
        assert _strip_seconds(tmp_path / "a") == _strip_seconds(tmp_path / "b")
        assert _summary_without_seconds(tmp_path / "a") == _summary_without_seconds(tmp_path / "b")

    def test_seed_override_changes_output(self, tmp_path):
        run_experiment(copy.deepcopy(TINY_TRAIN), tmp_path / "a")
        run_experiment(copy.deepcopy(TINY_TRAIN), tmp_path / "b", seed=99)
        assert _strip_seconds(tmp_path / "a") != _strip_seconds(tmp_path / "b")

    @pytest.mark.parametrize("name", ["bounds_complexity", "plan_dropout", "datastats"])
    def test_csv_json_round_trip(self, tmp_path, name):
        doc = run_experiment(load_default_config(name), tmp_path)
        parsed = read_records_csv(tmp_path / "results.csv")
        stored = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))["records"]
        assert len(parsed) == len(stored) == len(doc["records"])
        for row, rec in zip(parsed, stored):
            for col in COLUMNS:
                a, b = row[col], rec[col]
                if isinstance(a, float) and math.isnan(a):
                    assert math.isnan(b)
                else:
                    assert a == b, col

    def test_train_round_trip(self, tmp_path):
        run_experiment(copy.deepcopy(TINY_TRAIN), tmp_path)
        parsed = read_records_csv(tmp_path / "results.csv")
        stored = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))["records"]
        assert [p["empirical"] for p in parsed] == [s["empirical"] for s in stored]
        assert [p["constants"] for p in parsed] == [s["constants"] for s in stored]

    def test_train_summary(self, tmp_path):
        doc = run_experiment(copy.deepcopy(TINY_TRAIN), tmp_path)
        s = doc["summary"]
        assert 0 <= s["best_run"] < 3
        assert s["pretrain"]["runs_used"] == [1]
        assert doc["records"][-1]["kind"] == "expected"

    def test_config_echo(self, tmp_path):
        cfg = load_default_config("datastats")
        doc = json.loads(json.dumps(run_experiment(cfg, tmp_path)))
        assert doc["config"] == cfg


class TestValidation:
    def test_lists_every_problem(self):
        with pytest.raises(ValidationError) as exc:
            validate_config({"mode": "train", "seed": "x", "network": {"family": "cnn", "widths": [3]},
                             "training": {}})
        assert len(exc.value.problems) >= 6

    def test_bad_mode(self):
        with pytest.raises(ValidationError):
            validate_config({"mode": "dance"})

    def test_unknown_sweep_axis(self):
        with pytest.raises(ValidationError, match="learning_rate"):
            validate_config({"mode": "sweep", "sweep": {"kind": "size", "grid": {"learning_rate": [1]}}})

    def test_unknown_formula(self):
        with pytest.raises(ValidationError):
            validate_config({"mode": "bounds", "bounds": {"formulas": ["eq99"]}})

    @pytest.mark.parametrize("name", ["train_1nn", "train_da", "train_lnn", "bounds_complexity", "plan_dropout",
                                      "datastats", "sweep_size", "sweep_wm_zeta", "sweep_dropout", "sweep_depth",
                                      "sweep_pretrain_vs_dropout"])
    def test_shipped_configs_validate(self, name):
        validate_config(load_default_config(name))


class TestCli:
    def test_bounds(self, tmp_path, capsys):
        assert main(["bounds", "--preset", "bounds_complexity", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "summary.json").exists()

    def test_config_file_and_seed(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(load_default_config("datastats")))
        assert main(["datastats", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
        doc = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert doc["seed"] == 3

    def test_invalid_config_nonzero(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"mode": "bounds", "bounds": {"formulas": []}}))
        assert main(["bounds", "--config", str(cfg), "--out", str(tmp_path / "o")]) != 0
        assert "formulas" in capsys.readouterr().err

    def test_mode_mismatch(self, tmp_path):
        assert main(["plan", "--preset", "datastats", "--out", str(tmp_path)]) != 0

    def test_missing_file(self, tmp_path):
        assert main(["plan", "--config", str(tmp_path / "none.json")]) != 0

    def test_requires_subcommand(self):
        with pytest.raises(SystemExit):
            main([])
