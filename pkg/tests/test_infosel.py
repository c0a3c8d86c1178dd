import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periorisk.data import VariableKind
from periorisk.exceptions import DimensionMismatch, MissingValuePresent, TooShort
from periorisk.infosel import (HybridCMISelector, JointTable, conditional_mutual_information,
                               discretize_for_info, elbow_index, hybrid_filter_arrays,
                               hybrid_filter_select, mutual_information, write_cmi_csv)

from conftest import make_dataset
from test_acceptance import cmi_cells, elbow_scan

C = VariableKind.continuous()


def _table_columns(table):
    x, y = [], []
    for i, row in enumerate(table):
        for j, count in enumerate(row):
            x += [i] * count
            y += [j] * count
    return np.array(x), np.array(y)


def test_mi_examples():
    assert mutual_information([0, 1, 0, 1], [0, 1, 0, 1]) == pytest.approx(math.log(2), abs=1e-15)
    x, y = _table_columns([[25, 25], [25, 25]])
    assert mutual_information(x, y) == 0.0
    x, y = _table_columns([[40, 10], [10, 40]])
    # frozen from the cell-sum oracle
    assert mutual_information(x, y) == pytest.approx(0.19274475702175753, abs=1e-14)
    assert cmi_cells(x, y, [0] * len(x)) == pytest.approx(0.19274475702175753, abs=1e-14)


def test_conditional_independence_gives_zero():
    # within each z stratum x and y are independent by construction
    z = np.repeat([0, 1], 40)
    x = np.tile(np.repeat([0, 1], 20), 2)
    y = np.tile([0, 1], 40)
    assert conditional_mutual_information(x, y, [z]) == pytest.approx(0.0, abs=1e-15)


def test_column_checks():
    with pytest.raises(MissingValuePresent):
        mutual_information([0.0, np.nan], [0, 1])
    with pytest.raises(DimensionMismatch):
        mutual_information([0, 1, 0], [0, 1])
    table = JointTable.from_columns([[0, 1, 1], [2, 2, 0]], ["a", "b"])
    assert table.counts.tolist() == [[0, 1], [1, 1]]
    assert table.n == 3


def test_discretize_uniform_and_constant():
    x = np.random.default_rng(0).uniform(size=1000)
    ds = make_dataset({"u": x, "c": np.full(1000, 3.0), "b": np.tile([0, 1], 500)},
                      {"u": C, "c": C, "b": VariableKind.binary()}, np.tile([0, 1], 500))
    disc = discretize_for_info(ds)
    assert np.bincount(disc.column("u").astype(int)).tolist() == [100, 200, 200, 200, 200, 100]
    assert set(disc.column("c")) == {0.0}
    assert disc.schema.kind("c").n_levels == 2
    np.testing.assert_array_equal(disc.column("b"), ds.column("b"))


def test_elbow_examples():
    values = (10, 4, 2, 1.5, 1.2, 1.0)
    assert elbow_index(values) == elbow_scan(values) == 2
    assert elbow_index([3.0, 1.0]) == 0
    assert elbow_index([4.0, 3.0, 2.0, 1.0]) == 0
    with pytest.raises(TooShort):
        elbow_index([1.0])


def _signal_data(seed, n=3000, d=8):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 2, size=(n, d)).astype(float)
    eta = -0.5 + 2.0 * X[:, 0] + 1.5 * X[:, 1] + 1.0 * X[:, 2] + 0.8 * X[:, 3]
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(int)
    return X, y, [f"v{k}" for k in range(d)]


def test_hybrid_filter_seed_and_tail(tmp_path):
    X, y, names = _signal_data(0)
    selected, elbow, seed_trace = hybrid_filter_arrays(X, y, names)
    assert [s["variable"] for s in seed_trace] == ["v0", "v1", "v2"]
    assert seed_trace[0]["given"] == [] and seed_trace[2]["given"] == ["v0", "v1"]
    assert selected[:4] == ["v0", "v1", "v2", "v3"]
    assert [v for v, _ in elbow.items][0] == "v3"
    scores = [s for _, s in elbow.items]
    assert scores == sorted(scores, reverse=True)
    write_cmi_csv(elbow, seed_trace, tmp_path / "cmi.csv")
    rows = list(csv.DictReader(open(tmp_path / "cmi.csv")))
    assert len(rows) == len(names)
    assert sum(int(r["elbow"]) for r in rows) == 1
    assert sum(int(r["selected"]) for r in rows) == len(selected)


def test_hybrid_filter_needs_four_candidates():
    X, y, names = _signal_data(1, n=100)
    with pytest.raises(TooShort):
        hybrid_filter_arrays(X[:, :3], y, names[:3])


def test_selector_and_dataset_entry_point():
    X, y, names = _signal_data(2, n=2000, d=6)
    X[:, 5] = np.random.default_rng(9).normal(size=2000)
    sel = HybridCMISelector(kinds=[VariableKind.binary()] * 5 + [C], feature_names=names).fit(X, y)
    assert sel.get_support()[:3].all()
    kinds = {n: VariableKind.binary() for n in names[:5]}
    kinds["v5"] = C
    ds = make_dataset(dict(zip(names, X.T)), kinds, y)
    selected, _, _ = hybrid_filter_select(ds, "y", n_jobs=2)
    assert selected == sel.selected_


small_cols = st.integers(4, 60).flatmap(lambda n: st.tuples(
    *(st.lists(st.integers(0, k), min_size=n, max_size=n) for k in (2, 1, 2, 1))))


@settings(max_examples=100, deadline=None)
@given(small_cols)
def test_information_properties(cols):
    x, y, z1, z2 = (np.array(c) for c in cols)
    mi = mutual_information(x, y)
    assert mi >= 0.0
    assert mi == pytest.approx(mutual_information(y, x), abs=1e-12)
    cmi = conditional_mutual_information(x, y, [z1, z2])
    assert cmi >= 0.0
    assert cmi == pytest.approx(conditional_mutual_information(y, x, [z1, z2]), abs=1e-12)
    assert cmi == pytest.approx(cmi_cells(x.tolist(), y.tolist(), (z1 * 2 + z2).tolist()), abs=1e-12)
    assert conditional_mutual_information(x, y, []) == mi
    # chain rule: I(X;(Y,Z)) = I(X;Z) + I(X;Y|Z)
    yz = y * 3 + z1
    assert mutual_information(x, yz) == pytest.approx(
        mutual_information(x, z1) + conditional_mutual_information(x, y, [z1]), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=2, max_size=30))
def test_elbow_matches_scan(values):
    values = sorted(values, reverse=True)
    k = elbow_index(values)
    assert 0 <= k < len(values)
    ref = elbow_scan(values)
    if ref != k:
        # only near-ties may disagree
        m = len(values)
        dx, dy = m - 1.0, values[-1] - values[0]

        def dist(i):
            return abs(dx * (values[i] - values[0]) - dy * i) / math.hypot(dx, dy)

        assert dist(k) == pytest.approx(dist(ref), abs=1e-9)
