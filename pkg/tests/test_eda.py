import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periorisk.data import VariableKind
from periorisk.eda import (bin_codes, cut_codes, empirical_logit, interaction_grid,
                           marginal_logit_curve, quantile_cuts, write_curve_csv, write_grid_csv)
from periorisk.exceptions import EmptyInput

from conftest import make_dataset

C = VariableKind.continuous()


def test_empirical_logit_examples():
    assert empirical_logit(5, 5)[0] == 0.0
    assert empirical_logit(9, 1)[0] == pytest.approx(math.log(9.5 / 1.5), abs=1e-15)
    assert empirical_logit(9, 1)[0] == pytest.approx(1.8458, abs=5e-5)
    logit, lo, hi = empirical_logit(0, 10)
    assert math.isfinite(logit) and lo < logit < hi
    with pytest.raises(EmptyInput):
        empirical_logit(0, 0)


def test_binary_variable_curve():
    ds = make_dataset({"b": [0] * 10 + [1] * 10}, {"b": VariableKind.binary()},
                      np.array([0, 1] * 5 + [1] * 9 + [0]))
    points = marginal_logit_curve(ds, "b", "y")
    assert [p.x for p in points] == [0.0, 1.0]
    assert points[0].logit == 0.0
    assert points[1].logit == pytest.approx(1.8458, abs=5e-5)
    assert (points[1].n1, points[1].n0) == (9, 1)


def test_constant_variable_gives_one_point():
    ds = make_dataset({"x": np.full(30, 2.5)}, {"x": C}, np.tile([0, 1, 1], 10))
    points = marginal_logit_curve(ds, "x", "y")
    assert len(points) == 1
    assert points[0].n0 + points[0].n1 == 30


def test_monotone_risk_gives_nondecreasing_logits():
    rng = np.random.default_rng(0)
    x = rng.normal(size=5000)
    y = (rng.random(5000) < 1 / (1 + np.exp(-1.5 * x))).astype(int)
    points = marginal_logit_curve(make_dataset({"x": x}, {"x": C}, y), "x", "y")
    assert len(points) == 6
    assert all(b.logit >= a.logit for a, b in zip(points, points[1:]))
    assert sum(p.n0 + p.n1 for p in points) == 5000


def test_missing_rows_skipped():
    x = np.r_[np.arange(20.0), [np.nan] * 5]
    ds = make_dataset({"x": x}, {"x": C}, np.tile([0, 1], 13)[:25])
    assert sum(p.n0 + p.n1 for p in marginal_logit_curve(ds, "x", "y")) == 20


def test_cut_codes_put_ties_in_upper_bin():
    assert cut_codes([18.4, 18.5, 24.9, 25.0, 30.0], [18.5, 25, 30]).tolist() == [0, 1, 1, 2, 3]
    assert bin_codes([1.0, 2.0, 3.0], [2.0]).tolist() == [0, 0, 1]


def _bmi_procedure(seed=0, n=400):
    rng = np.random.default_rng(seed)
    bmi = rng.uniform(17, 40, n)
    proc = rng.integers(0, 2, n)
    y = rng.integers(0, 2, n)
    kinds = {"BMI": C, "procedure": VariableKind.nominal(["lap", "open"])}
    return make_dataset({"BMI": bmi, "procedure": proc}, kinds, y)


def test_interaction_grid_shape(tmp_path):
    ds = _bmi_procedure()
    bins = {"cutpoints": [18.5, 25, 30], "labels": ["Under", "Normal", "Over", "Obese"]}
    grid = interaction_grid(ds, "BMI", "procedure", "y", bins_a=bins)
    assert len(grid.cells) <= 8
    assert grid.labels_a == ["Under", "Normal", "Over", "Obese"]
    assert sum(p.n0 + p.n1 for _, _, p in grid.rows()) == ds.n_rows
    write_grid_csv(grid, tmp_path / "grid.csv")
    rows = list(csv.reader(open(tmp_path / "grid.csv")))
    assert rows[0][:2] == ["BMI", "procedure"]
    assert len(rows) == len(grid.cells) + 1


def test_empty_cell_warns():
    ds = _bmi_procedure(n=50)
    with pytest.warns(UserWarning, match="empty cell"):
        grid = interaction_grid(ds, "BMI", "procedure", "y", bins_a=[10.0, 50.0])
    assert grid.warnings
    assert all(i == 1 for i, _ in grid.cells)


def test_cutpoints_must_increase():
    with pytest.raises(ValueError):
        interaction_grid(_bmi_procedure(n=20), "BMI", "procedure", "y", bins_a=[25, 18.5])


def test_curve_csv(tmp_path):
    ds = _bmi_procedure()
    points = marginal_logit_curve(ds, "BMI", "y")
    write_curve_csv(points, tmp_path / "curve.csv")
    rows = list(csv.DictReader(open(tmp_path / "curve.csv")))
    assert [r["bin"] for r in rows] == [p.label for p in points]
    assert float(rows[0]["logit"]) == points[0].logit


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100), st.integers(0, 100))
def test_band_contains_point(n1, n0):
    if n0 + n1 == 0:
        return
    logit, lo, hi = empirical_logit(n1, n0)
    assert lo < logit < hi
    assert hi - logit == pytest.approx(logit - lo)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=1, max_size=80))
def test_bin_counts_sum_to_rows(values):
    x = np.array(values)
    codes = bin_codes(x, quantile_cuts(x))
    assert codes.min() >= 0
    assert codes.max() <= len(quantile_cuts(x))
    y = np.arange(len(x)) % 2
    points = marginal_logit_curve(make_dataset({"x": x}, {"x": C}, y), "x", "y")
    assert sum(p.n0 + p.n1 for p in points) == len(x)
