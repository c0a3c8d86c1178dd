import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periorisk import synthgen
from periorisk.data import (Dataset, Schema, SplitSpec, Variable, VariableKind, class_counts,
                            load_csv, temporal_split, write_csv)
from periorisk.exceptions import (EmptyPartition, MissingOutcome, SchemaError, UnknownColumn,
                                  UnknownOutcome, UnparseableCell)

from conftest import make_dataset

SCHEMA = Schema((Variable("age", VariableKind.continuous()),
                 Variable("ifsmoke", VariableKind.binary())), ("seriouscomp",))


def _write(tmp_path, text):
    path = tmp_path / "cohort.csv"
    path.write_text(text)
    return path


def test_load_single_row(tmp_path):
    ds = load_csv(_write(tmp_path, "age,ifsmoke,seriouscomp\n65,1,0\n"), SCHEMA)
    assert ds.n_rows == 1
    assert ds.missing_count() == 0
    assert ds.cell(0, "age") == 65.0
    assert ds.outcome("seriouscomp").tolist() == [0]


@pytest.mark.parametrize("sentinel", ["NA", ""])
def test_missing_sentinels(tmp_path, sentinel):
    ds = load_csv(_write(tmp_path, f"age,ifsmoke,seriouscomp\n{sentinel},1,0\n"), SCHEMA)
    assert ds.cell(0, "age") is None
    assert ds.missing_count("age") == 1


def test_sentinel_is_case_sensitive(tmp_path):
    with pytest.raises(UnparseableCell):
        load_csv(_write(tmp_path, "age,ifsmoke,seriouscomp\nna,1,0\n"), SCHEMA)


def test_missing_outcome_rejected(tmp_path):
    with pytest.raises(MissingOutcome):
        load_csv(_write(tmp_path, "age,ifsmoke,seriouscomp\n65,1,NA\n"), SCHEMA)


def test_unparseable_and_unknown_column(tmp_path):
    with pytest.raises(UnparseableCell) as err:
        load_csv(_write(tmp_path, "age,ifsmoke,seriouscomp\n65,2,0\n"), SCHEMA)
    assert err.value.details["column"] == "ifsmoke"
    with pytest.raises(UnknownColumn):
        load_csv(_write(tmp_path, "age,smoker,seriouscomp\n65,1,0\n"), SCHEMA)


def test_header_may_be_permuted(tmp_path):
    ds = load_csv(_write(tmp_path, "seriouscomp,ifsmoke,age\n1,0,70.5\n"), SCHEMA)
    assert ds.cell(0, "age") == 70.5
    assert ds.cell(0, "ifsmoke") == 0.0
    assert ds.outcome("seriouscomp").tolist() == [1]


def test_factor_levels_parse_by_label(tmp_path):
    schema = Schema((Variable("ASA", VariableKind.ordinal(["1", "2", "3", "4"])),), ("y",))
    ds = load_csv(_write(tmp_path, "ASA,y\n3,0\n1,1\n"), schema)
    assert ds.column("ASA").tolist() == [2.0, 0.0]
    assert ds.cell(0, "ASA") == "3"


def test_kind_invariants():
    with pytest.raises(SchemaError):
        VariableKind.ordinal([])
    with pytest.raises(SchemaError):
        VariableKind.nominal(["a", "a"])
    assert VariableKind.binary().levels == ("0", "1")
    with pytest.raises(SchemaError):
        Schema((Variable("a", VariableKind.binary()), Variable("a", VariableKind.binary())))
    with pytest.raises(SchemaError):
        Schema((Variable("y", VariableKind.binary()),), ("y",))


def test_dataset_rejects_out_of_range_levels():
    schema = Schema((Variable("f", VariableKind.nominal("ab")),), ("y",))
    with pytest.raises(SchemaError):
        Dataset(schema, [[2.0]], {"y": [0]})


def test_schema_json_round_trip(tmp_path):
    schema = Schema((Variable("ASA", VariableKind.nominal(["12", "34"])),
                     Variable("age", VariableKind.continuous())), ("y",), ("year",))
    schema.dump(tmp_path / "schema.json")
    assert Schema.load(tmp_path / "schema.json") == schema


def test_cohort_split_counts():
    # the eras-like generator reproduces the cohort's calendar layout
    ds = synthgen.generate(synthgen.preset("eras-like"), seed=0).dataset
    assert ds.n_rows == 767
    train, test = temporal_split(ds, SplitSpec.by_threshold("year", 2023))
    assert (train.n_rows, test.n_rows) == (580, 187)


def test_split_by_rows_preserves_order():
    ds = make_dataset({"x": np.arange(10.0)}, {"x": VariableKind.continuous()},
                      np.array([0, 1] * 5))
    train, test = temporal_split(ds, SplitSpec.by_rows(range(5)))
    assert train.column("x").tolist() == [0, 1, 2, 3, 4]
    assert test.column("x").tolist() == [5, 6, 7, 8, 9]
    with pytest.raises(EmptyPartition):
        temporal_split(ds, SplitSpec.by_rows(range(10)))


def test_split_spec_needs_one_mode():
    with pytest.raises(SchemaError):
        SplitSpec()
    with pytest.raises(SchemaError):
        SplitSpec(column="year", cutoff=1.0, train_rows=(0,))
    assert SplitSpec.from_dict({"column": "year", "cutoff": 2023}).mode == "threshold"


def test_class_counts():
    ds = make_dataset({"x": np.zeros(7)}, {"x": VariableKind.continuous()}, np.zeros(7, int))
    assert class_counts(ds, "y") == (7, 0)
    with pytest.raises(UnknownOutcome):
        class_counts(ds, "z")


def test_class_counts_match_emitted_csv(tmp_path):
    cohort = synthgen.generate(synthgen.preset("eras-like"), seed=7)
    cohort.write(tmp_path / "c.csv", tmp_path / "c.json")
    train, _ = temporal_split(cohort.dataset, SplitSpec.by_threshold("year", 2023))
    # independent recount straight from the text of the emitted file
    lines = (tmp_path / "c.csv").read_text().splitlines()
    header = lines[0].split(",")
    iy, iyear = header.index("seriouscomp"), header.index("year")
    rows = [line.split(",") for line in lines[1:]]
    n1 = sum(1 for r in rows if float(r[iyear]) < 2023 and r[iy] == "1")
    n0 = sum(1 for r in rows if float(r[iyear]) < 2023 and r[iy] == "0")
    assert class_counts(train, "seriouscomp") == (n0, n1)
    assert n0 + n1 == 580


@st.composite
def datasets(draw):
    n = draw(st.integers(1, 25))
    floats = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
    x = draw(st.lists(st.one_of(floats, st.just(np.nan)), min_size=n, max_size=n))
    f = draw(st.lists(st.one_of(st.sampled_from([0.0, 1.0, 2.0]), st.just(np.nan)),
                      min_size=n, max_size=n))
    y = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    kinds = {"x": VariableKind.continuous(), "f": VariableKind.nominal(["a", "b", "c"])}
    return make_dataset({"x": x, "f": f}, kinds, np.array(y))


@settings(max_examples=60, deadline=None)
@given(datasets())
def test_csv_round_trip(tmp_path_factory, ds):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(ds, path)
    back = load_csv(path, ds.schema)
    assert back.equals(ds)
    write_csv(back, path.with_suffix(".2.csv"))
    assert path.read_bytes() == path.with_suffix(".2.csv").read_bytes()


@settings(max_examples=60, deadline=None)
@given(datasets(), st.data())
def test_split_partition_law(ds, data):
    rows = data.draw(st.sets(st.integers(0, ds.n_rows - 1)))
    if len(rows) in (0, ds.n_rows):
        with pytest.raises(EmptyPartition):
            temporal_split(ds, SplitSpec.by_rows(sorted(rows)))
        return
    train, test = temporal_split(ds, SplitSpec.by_rows(sorted(rows)))
    assert train.n_rows + test.n_rows == ds.n_rows
    assert train.schema == test.schema == ds.schema


@settings(max_examples=60, deadline=None)
@given(datasets(), st.randoms(use_true_random=False))
def test_class_counts_permutation_invariant(ds, rnd):
    perm = list(range(ds.n_rows))
    rnd.shuffle(perm)
    n0, n1 = class_counts(ds, "y")
    assert class_counts(ds.take(perm), "y") == (n0, n1)
    assert n0 + n1 == ds.n_rows
