import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from periorisk import synthgen
from periorisk.data import SplitSpec, VariableKind, class_counts, temporal_split
from periorisk.exceptions import InvalidSpec, UnknownPreset
from periorisk.synthgen import (CohortSpec, Marginal, OutcomeModel, Term, VariableSpec,
                                bernoulli, categorical, generate, linear, tnormal)

C = VariableKind.continuous()


def test_eras_like_shape():
    spec = synthgen.preset("eras-like")
    assert len(spec.variables) == 34
    assert spec.schema().outcome_names == ("seriouscomp", "anycomp")
    ds = generate(spec, seed=0).dataset
    assert ds.schema.kind("ASA").levels == ("1", "2", "3", "4")
    assert ds.missing_count("BMI") > 0


@pytest.mark.parametrize("seed", range(3))
def test_eras_like_training_events(seed):
    ds = generate(synthgen.preset("eras-like"), seed=seed).dataset
    train, _ = temporal_split(ds, SplitSpec.by_threshold("year", 2023))
    n0, n1 = class_counts(train, "seriouscomp")
    sigma = math.sqrt(580 * 0.107 * 0.893)
    assert abs(n1 - 580 * 0.107) <= 3 * sigma


def test_calibrated_prevalences():
    spec = synthgen.preset("eras-like").replace(n_rows=50_000, periods=())
    cohort = generate(spec, seed=11)
    assert cohort.dataset.outcome("seriouscomp").mean() == pytest.approx(0.107, abs=0.01)
    assert cohort.dataset.outcome("anycomp").mean() == pytest.approx(0.328, abs=0.01)
    for name, missing in (("BMI", 63), ("ifanemia", 79)):
        assert cohort.dataset.missing_count(name) / 50_000 == pytest.approx(missing / 767, abs=0.01)


def test_zero_model_gives_half_prevalence():
    spec = CohortSpec("flat", 20_000, (VariableSpec("x", C, tnormal(0, 1, -5, 5)),),
                      (OutcomeModel("y", 0.0, (linear("x", 0.0),)),))
    cohort = generate(spec, seed=3)
    assert np.all(cohort.probabilities["y"] == 0.5)
    assert cohort.dataset.outcome("y").mean() == pytest.approx(0.5, abs=0.02)


def test_same_seed_same_bytes(tmp_path):
    for k in (1, 2):
        generate(synthgen.preset("three-signal"), seed=5).write(tmp_path / f"{k}.csv",
                                                                 tmp_path / f"{k}.json")
    assert (tmp_path / "1.csv").read_bytes() == (tmp_path / "2.csv").read_bytes()
    assert (tmp_path / "1.json").read_bytes() == (tmp_path / "2.json").read_bytes()
    a = generate(synthgen.preset("three-signal"), seed=6).dataset
    b = generate(synthgen.preset("three-signal"), seed=5).dataset
    assert not a.equals(b)


def test_small_presets():
    sep = synthgen.preset("separable")
    assert sep.outcomes[0].terms[0].coef == 10.0
    assert synthgen.preset("noise-heavy").outcomes[0].terms == ()
    assert synthgen.preset("noise-heavy").outcomes[0].intercept == 0.0
    p = generate(synthgen.preset("interaction"), seed=0).probabilities["y"]
    assert set(np.round(p, 12)) == set(np.round(1 / (1 + np.exp([1.5, -1.0])), 12))
    with pytest.raises(UnknownPreset):
        synthgen.preset("nope")


@pytest.mark.parametrize("name", sorted(synthgen.PRESETS))
def test_probabilities_strictly_inside_unit_interval(name):
    cohort = generate(synthgen.preset(name), seed=0)
    for p in cohort.probabilities.values():
        assert np.all((p > 0) & (p < 1))


def test_continuous_marginal_means():
    spec = synthgen.preset("eras-like").replace(n_rows=20_000, periods=(), missingness={})
    ds = generate(spec, seed=4).dataset
    for v in spec.variables:
        x = ds.column(v.name)
        se = v.marginal.sd() / math.sqrt(x.size)
        assert abs(x.mean() - v.marginal.mean()) <= 3.5 * se, v.name
    # age draws around a mean slightly below the untruncated 65.9
    assert spec.variable("age").marginal.mean() == pytest.approx(65.3, abs=0.1)


def test_spec_validation():
    x = VariableSpec("x", C, tnormal(0, 1, -3, 3))
    with pytest.raises(InvalidSpec):
        CohortSpec("bad", 0, (x,), ())
    with pytest.raises(InvalidSpec):
        CohortSpec("bad", 10, (x, x), ())
    with pytest.raises(InvalidSpec):
        CohortSpec("bad", 10, (VariableSpec("b", C, bernoulli(0.5)),), ())
    with pytest.raises(InvalidSpec):
        CohortSpec("bad", 10, (VariableSpec("f", VariableKind.nominal("ab"),
                                            categorical([0.2, 0.3, 0.5])),), ())
    with pytest.raises(InvalidSpec):
        CohortSpec("bad", 10, (x,), (OutcomeModel("y", 0.0, (linear("z", 1.0),)),))
    with pytest.raises(InvalidSpec):
        CohortSpec("bad", 10, (x,), (OutcomeModel("y", 0.0, (Term(1.0, ({"var": "x", "level": "a"},)),)),))
    with pytest.raises(InvalidSpec):
        CohortSpec("bad", 10, (x,), (), {"x": 1.0})
    with pytest.raises(InvalidSpec):
        CohortSpec("bad", 10, (x,), (), periods=((0, 4),))
    with pytest.raises(InvalidSpec):
        Marginal("poisson", {}).validate(C, "x")


@pytest.mark.parametrize("name", sorted(synthgen.PRESETS))
def test_spec_dict_round_trip(name):
    spec = synthgen.preset(name)
    assert CohortSpec.from_dict(spec.to_dict()) == spec


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31))
def test_probabilities_follow_the_model(b0, b1, seed):
    spec = CohortSpec("p", 50, (VariableSpec("x", C, tnormal(0, 1, -4, 4)),),
                      (OutcomeModel("y", b0, (linear("x", b1),)),))
    cohort = generate(spec, seed=seed)
    x = cohort.dataset.column("x")
    np.testing.assert_allclose(cohort.probabilities["y"], 1 / (1 + np.exp(-(b0 + b1 * x))),
                               rtol=1e-12)
