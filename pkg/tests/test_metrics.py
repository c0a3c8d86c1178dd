import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from periorisk.exceptions import EmptyInput, OneClassOnly
from periorisk.metrics import (EvaluationReport, auc, brier_overall, brier_per_class, evaluate,
                               threshold_classify)


def test_auc_examples():
    assert auc([1, 0], [0.9, 0.1]) == 1.0
    assert auc([1, 0, 1, 0], [0.3] * 4) == 0.5
    # pairs (0.8,0.6) (0.8,0.2) (0.4,0.2) concordant, (0.4,0.6) discordant
    assert auc([1, 1, 0, 0], [0.8, 0.4, 0.6, 0.2]) == 0.75


def test_auc_needs_both_classes():
    with pytest.raises(OneClassOnly):
        auc([1, 1], [0.2, 0.3])
    with pytest.raises(OneClassOnly):
        brier_per_class([0, 0], [0.2, 0.3])


def test_brier_examples():
    _, bs1 = brier_per_class([1, 1, 0], [0.9, 0.8, 0.0])
    assert bs1 == pytest.approx(0.025, abs=1e-15)
    assert brier_per_class([0, 1], [0.0, 1.0]) == (0.0, 0.0)
    assert brier_per_class([0, 1, 0, 1], [0.5] * 4) == (0.25, 0.25)
    assert brier_overall([1, 0], [1.0, 0.0]) == 0.0
    assert brier_overall([1, 0], [0.5, 0.5]) == 0.25
    with pytest.raises(EmptyInput):
        brier_overall([], [])


def test_threshold_classify():
    assert threshold_classify([0.5]).tolist() == [1]
    assert threshold_classify([0.49]).tolist() == [0]
    assert threshold_classify([0.0, 0.3, 1.0], cutoff=0.0).tolist() == [1, 1, 1]


def test_probabilities_are_checked():
    with pytest.raises(ValueError):
        auc([0, 1], [0.1, 1.2])


def test_report_round_trip():
    rep = evaluate([0, 0, 1, 1, 1], [0.1, 0.6, 0.7, 0.4, 0.9])
    assert (rep.n0, rep.n1) == (2, 3)
    assert EvaluationReport.from_dict(rep.to_dict()) == rep
    assert set(rep.to_dict()) == {"auc", "brier0", "brier1", "n0", "n1"}


labels_probs = st.integers(2, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1000).map(lambda k: k / 1000), min_size=n, max_size=n)))


@settings(max_examples=150, deadline=None)
@given(labels_probs)
def test_auc_invariant_under_increasing_transform(lp):
    y, p = np.array(lp[0]), np.array(lp[1])
    assume(0 < y.sum() < len(y))
    a = auc(y, p)
    assert 0.0 <= a <= 1.0
    assert auc(y, p ** 3) == pytest.approx(a, abs=1e-12)
    assert auc(y, 0.5 + 0.25 * np.tanh(p)) == pytest.approx(a, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(labels_probs)
def test_auc_complement(lp):
    y, p = np.array(lp[0]), np.array(lp[1])
    assume(0 < y.sum() < len(y))
    assume(len(np.unique(p)) == len(p))
    assert auc(y, p) + auc(y, 1 - p) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=150, deadline=None)
@given(labels_probs)
def test_brier_decomposition_and_bounds(lp):
    y, p = np.array(lp[0]), np.array(lp[1])
    assume(0 < y.sum() < len(y))
    bs0, bs1 = brier_per_class(y, p)
    n1 = y.sum()
    n0 = len(y) - n1
    assert 0.0 <= bs0 <= 1.0 and 0.0 <= bs1 <= 1.0
    assert brier_overall(y, p) == pytest.approx((n0 * bs0 + n1 * bs1) / len(y), abs=1e-12)
    assert bs0 == pytest.approx(np.mean(p[y == 0] ** 2), abs=1e-15)
