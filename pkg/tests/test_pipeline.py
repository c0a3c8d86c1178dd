import json
import os

import pytest

from periorisk import pipeline
from periorisk.cli import main
from periorisk.exceptions import ConfigError
from periorisk.metrics import EvaluationReport
from periorisk.pipeline import CellResult, RunConfig, RunReport, fmt2, render_table

FAST = {"forest": {"n_trees": 50}, "rf_folds": 3, "rf_sizes": (5, 10)}


def _cfg(tmp_path, **kw):
    opts = dict(preset="eras-like", seed=1, out=str(tmp_path / "out"), **FAST)
    opts.update(kw)
    return RunConfig(**opts)


@pytest.fixture(scope="module")
def full_report(tmp_path_factory):
    cfg = _cfg(tmp_path_factory.mktemp("run"))
    return cfg, pipeline.run(cfg)


def test_full_run_has_twelve_cells(full_report):
    cfg, report = full_report
    assert len(report.cells) == 12
    assert {(c.selection, c.model) for c in report.cells} == {
        (s, m) for s in pipeline.SELECTIONS for m in pipeline.MODELS}
    for c in report.cells:
        assert c.error is None, c.error
        assert 0.0 <= c.out_of_sample.auc <= 1.0
    assert report.n_train[0] + report.n_train[1] == 580
    assert report.n_test[0] + report.n_test[1] == 187
    assert report.cell("forest", "all").variables == report.cell("logit", "all").variables


def test_outputs_written(full_report):
    cfg, report = full_report
    files = set(os.listdir(cfg.out))
    assert {"report.json", "report.txt", "timing.json", "cmi_trace.csv",
            "imputation_tables.json", "rf_wrapper_cv.csv", "nb_wrapper.csv"} <= files
    with open(os.path.join(cfg.out, "report.json")) as fh:
        back = RunReport.from_dict(json.load(fh))
    assert back.to_json() == report.to_json()
    assert "timing" not in report.to_dict()


def test_same_config_same_json(full_report, tmp_path):
    cfg, report = full_report
    again = pipeline.run(_cfg(tmp_path), write=False)
    assert again.to_dict()["cells"] == report.to_dict()["cells"]
    assert again.selections == report.selections


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        _cfg(tmp_path, models=()).validate()
    with pytest.raises(ConfigError):
        _cfg(tmp_path, models=("svm",)).validate()
    with pytest.raises(ConfigError):
        _cfg(tmp_path, selection=("lasso",)).validate()
    with pytest.raises(ConfigError):
        RunConfig().validate()
    with pytest.raises(ConfigError):
        _cfg(tmp_path, forest={"seed": 3}).validate()
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"preset": "eras-like", "colour": "red"})
    with pytest.raises(ConfigError):
        RunConfig(input=str(tmp_path / "missing.csv"), schema="s.json",
                  split={"column": "year", "cutoff": 1}).validate()


def test_config_round_trip(tmp_path):
    cfg = _cfg(tmp_path, split={"column": "year", "cutoff": 2023})
    (tmp_path / "cfg.json").write_text(json.dumps(cfg.to_dict()))
    assert RunConfig.load(tmp_path / "cfg.json") == cfg


def test_fmt2():
    assert fmt2(0.785) == "0.79"
    assert fmt2(0.784999) == "0.78"
    assert fmt2(1.0) == "1.00"
    assert fmt2(None) == "NA"
    assert fmt2(float("nan")) == "NA"


def _report(cells):
    return RunReport({}, "y", (1, 1), (1, 1), cells, {})


def test_render_single_cell():
    rep = EvaluationReport(0.785, 0.1, 0.7, 10, 5)
    text = render_table(_report([CellResult("logit", "all", ["a"], rep, rep)]))
    lines = text.splitlines()
    rows = [ln for ln in lines if ln.startswith("Logistic regression")]
    assert len(rows) == 1
    assert rows[0].split()[2:5] == ["0.79", "0.10", "0.70"]
    with pytest.raises(ConfigError):
        render_table(_report([]))


def test_render_three_blocks(full_report):
    text = render_table(full_report[1])
    for label in ("All", "Filtering", "Wrapper"):
        assert label in text.splitlines()
    error_cell = CellResult("forest", "wrapper", error={"error": "OneClassOnly"})
    assert "error: OneClassOnly" in render_table(_report([error_cell]))


def _run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_simulate(tmp_path, capsys):
    code, out, _ = _run_cli(["simulate", "--preset", "three-signal", "--seed", "2",
                             "--out", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads(out)["rows"] == 1200
    assert {"cohort.csv", "cohort.truth.json", "schema.json"} <= {p.name for p in tmp_path.iterdir()}


def test_cli_train_evaluate_report(tmp_path, capsys):
    cfg = {"preset": "separable", "seed": 0, "out": str(tmp_path), "models": ["logit", "nbkde"],
           "selection": ["all"]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    code, out, _ = _run_cli(["train", "--config", str(tmp_path / "cfg.json")], capsys)
    assert code == 0 and json.loads(out)["models"] == 2
    code, out, _ = _run_cli(["evaluate", "--config", str(tmp_path / "cfg.json")], capsys)
    assert code == 0 and json.loads(out)["cells"] == 2
    code, out, _ = _run_cli(["report", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "Logistic regression" in out and (tmp_path / "report.txt").read_text() == out


def test_cli_run_and_select(tmp_path, capsys):
    cfg = {"preset": "three-signal", "out": str(tmp_path), "models": ["logit"],
           "selection": ["all", "filter"]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    code, out, _ = _run_cli(["run", "--config", str(tmp_path / "cfg.json"), "--seed", "3"], capsys)
    assert code == 0
    assert json.loads(out) == {"cells": 2, "errors": 0, "out": str(tmp_path)}
    code, out, _ = _run_cli(["select", "--config", str(tmp_path / "cfg.json")], capsys)
    assert code == 0
    assert {"s1", "s2", "s3"} <= set(json.loads(out)["filter"])


def test_cli_errors_go_to_stderr(tmp_path, capsys):
    code, out, err = _run_cli(["report", "--out", str(tmp_path)], capsys)
    assert code == 1 and out == ""
    assert json.loads(err)["error"] == "ConfigError"
    code, _, err = _run_cli(["run", "--preset", "nope", "--out", str(tmp_path)], capsys)
    assert code == 1 and "error" in json.loads(err)
    (tmp_path / "bad.json").write_text("{not json")
    code, _, err = _run_cli(["run", "--config", str(tmp_path / "bad.json")], capsys)
    assert code == 1 and json.loads(err)["error"] == "ConfigError"
