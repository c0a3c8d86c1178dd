"""Plug-in mutual information filters on discretized data.

All information quantities are in nats and use empirical frequencies with
``0 * log 0 = 0``. Continuous columns are binned at the 10/30/50/70/90
percentiles before any information is computed.
"""

import csv
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_kinds, check_labels, check_X
from .data import VariableKind
from .eda import bin_codes, bin_labels, quantile_cuts
from .exceptions import DimensionMismatch, EmptyInput, MissingValuePresent, TooShort


def _codes(col):
    col = np.asarray(col)
    if col.ndim != 1:
        raise DimensionMismatch("columns must be one-dimensional")
    if col.dtype.kind == "f" and np.isnan(col).any():
        raise MissingValuePresent("information measures need complete columns")
    return np.unique(col, return_inverse=True)[1].astype(np.int64)


def _combine(columns, n):
    """Single code per row for the joint value of several columns."""
    out = np.zeros(n, dtype=np.int64)
    for col in columns:
        c = _codes(col)
        if c.size != n:
            raise DimensionMismatch("columns differ in length")
        out = out * (c.max() + 1) + c
    return np.unique(out, return_inverse=True)[1].astype(np.int64)


@dataclass
class JointTable:
    dims: list
    counts: np.ndarray
    n: int

    @classmethod
    def from_columns(cls, columns, names=None):
        columns = [_codes(c) for c in columns]
        if not columns or columns[0].size == 0:
            raise EmptyInput("empty table")
        shape = tuple(int(c.max()) + 1 for c in columns)
        counts = np.zeros(shape, dtype=np.int64)
        np.add.at(counts, tuple(columns), 1)
        return cls(list(names or range(len(columns))), counts, int(columns[0].size))


def mutual_information(x, y):
    """Plug-in ``I(X;Y)`` in nats."""
    cx, cy = _codes(x), _codes(y)
    n = cx.size
    if n == 0:
        raise EmptyInput("no rows")
    if cy.size != n:
        raise DimensionMismatch("columns differ in length")
    joint = np.zeros((cx.max() + 1, cy.max() + 1))
    np.add.at(joint, (cx, cy), 1.0)
    px = np.broadcast_to(joint.sum(axis=1, keepdims=True), joint.shape)
    py = np.broadcast_to(joint.sum(axis=0, keepdims=True), joint.shape)
    nz = joint > 0
    ratio = joint[nz] * n / (px[nz] * py[nz])
    return max(float(np.sum(joint[nz] / n * np.log(ratio))), 0.0)


def conditional_mutual_information(x, y, z=()):
    """Plug-in ``I(X;Y|Z)`` in nats; ``z`` is a list of conditioning columns.

    Conditioning cells without rows contribute nothing; an empty ``z``
    gives :func:`mutual_information`.
    """
    if len(z) == 0:
        return mutual_information(x, y)
    cx, cy = _codes(x), _codes(y)
    n = cx.size
    if n == 0:
        raise EmptyInput("no rows")
    if cy.size != n:
        raise DimensionMismatch("columns differ in length")
    cz = _combine(z, n)
    joint = np.zeros((cz.max() + 1, cx.max() + 1, cy.max() + 1))
    np.add.at(joint, (cz, cx, cy), 1.0)
    nzc = np.broadcast_to(joint.sum(axis=(1, 2), keepdims=True), joint.shape)
    nxz = np.broadcast_to(joint.sum(axis=2, keepdims=True), joint.shape)
    nyz = np.broadcast_to(joint.sum(axis=1, keepdims=True), joint.shape)
    nz = joint > 0
    ratio = joint[nz] * nzc[nz] / (nxz[nz] * nyz[nz])
    return max(float(np.sum(joint[nz] / n * np.log(ratio))), 0.0)


def discretize_for_info(ds, variables=None):
    """Bin continuous columns at the quantile grid; discrete columns are kept.

    Duplicate cuts are dropped, so a constant column becomes a single bin.
    """
    names = ds.schema.names if variables is None else list(variables)
    schema = ds.schema
    X = np.array(ds.X)
    for name in names:
        kind = schema.kind(name)
        if not kind.is_continuous:
            continue
        j = schema.index(name)
        cuts = quantile_cuts(X[:, j])
        X[:, j] = bin_codes(X[:, j], cuts)
        schema = schema.with_kind(name, VariableKind.ordinal(bin_labels(cuts)))
    return ds.with_columns(schema, X)


def elbow_index(values):
    """Index with the largest perpendicular distance to the first-last chord.

    Points are ``(i, values[i])`` with no rescaling of either axis. The first
    maximizing index wins; a collinear sequence returns 0.
    """
    v = np.asarray(values, dtype=np.float64)
    m = v.size
    if m < 2:
        raise TooShort("elbow needs at least two values")
    i = np.arange(m, dtype=np.float64)
    dx, dy = m - 1.0, v[-1] - v[0]
    dist = np.abs(dx * (v - v[0]) - dy * i) / np.hypot(dx, dy)
    tol = 1e-12 * max(1.0, float(np.max(np.abs(v))), dx)
    if dist.max() <= tol:
        return 0
    return int(np.argmax(dist))


@dataclass
class ElbowResult:
    items: list  # (variable, cmi) sorted by cmi descending
    elbow_index: int

    @property
    def selected(self):
        return [name for name, _ in self.items[: self.elbow_index + 1]]


def _argmax_first(values):
    values = np.asarray(values)
    return int(np.flatnonzero(values == values.max())[0])


def _cmi_all(cols, y, cond, candidates, n_jobs):
    z = [cols[c] for c in cond]
    if n_jobs == 1:
        return [conditional_mutual_information(cols[c], y, z) for c in candidates]
    return Parallel(n_jobs=n_jobs)(
        delayed(conditional_mutual_information)(cols[c], y, z) for c in candidates)


def hybrid_filter_arrays(X, y, names, n_jobs=1):
    """Greedy MI/CMI seed of three variables plus an elbow-cut tail.

    ``X`` must already be discrete. Returns the selected names (seed first,
    then the tail in CMI order), the :class:`ElbowResult` for the tail, and
    the seed trace.
    """
    X = np.asarray(X, dtype=np.float64)
    names = list(names)
    d = len(names)
    if d < 4:
        raise TooShort("the hybrid filter needs at least four candidate variables")
    cols = [X[:, j] for j in range(d)]
    chosen, seed_trace = [], []
    for _ in range(3):
        rest = [j for j in range(d) if j not in chosen]
        scores = _cmi_all(cols, y, chosen, rest, n_jobs)
        k = _argmax_first(scores)
        chosen.append(rest[k])
        seed_trace.append({"variable": names[rest[k]], "value": float(scores[k]),
                           "given": [names[c] for c in chosen[:-1]]})
    rest = [j for j in range(d) if j not in chosen]
    scores = _cmi_all(cols, y, chosen, rest, n_jobs)
    # stable sort keeps index order among equal scores
    order = sorted(range(len(rest)), key=lambda k: -scores[k])
    items = [(names[rest[k]], float(scores[k])) for k in order]
    elbow = ElbowResult(items, elbow_index([s for _, s in items]) if len(items) >= 2 else 0)
    selected = [names[c] for c in chosen] + elbow.selected
    return selected, elbow, seed_trace


def hybrid_filter_select(ds, outcome, candidates=None, n_jobs=1):
    names = ds.schema.names if candidates is None else list(candidates)
    disc = discretize_for_info(ds, names)
    return hybrid_filter_arrays(disc.matrix(names), ds.outcome(outcome), names, n_jobs)


def write_cmi_csv(elbow, seed_trace, path):
    """CMI trace: seed variables first, then the tail with the elbow marked."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("variable", "cmi", "selected", "elbow"))
        for s in seed_trace:
            w.writerow((s["variable"], repr(s["value"]), 1, 0))
        for k, (name, value) in enumerate(elbow.items):
            w.writerow((name, repr(value), int(k <= elbow.elbow_index), int(k == elbow.elbow_index)))


class HybridCMISelector(SelectorMixin, BaseEstimator):
    """Hybrid MI/CMI filter as a scikit-learn selector.

    Continuous columns (per ``kinds``) are binned at the quantile grid
    before scoring.
    """

    def __init__(self, kinds=None, feature_names=None, n_jobs=1):
        self.kinds = kinds
        self.feature_names = feature_names
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X = np.array(check_X(X), dtype=np.float64)
        y = check_labels(y)
        kinds = check_kinds(self.kinds, X.shape[1])
        names = self.feature_names or [f"x{j}" for j in range(X.shape[1])]
        for j, kind in enumerate(kinds):
            if kind.is_continuous:
                X[:, j] = bin_codes(X[:, j], quantile_cuts(X[:, j]))
        self.selected_, self.elbow_, self.seed_trace_ = hybrid_filter_arrays(X, y, names,
                                                                             self.n_jobs)
        self.support_ = np.isin(names, self.selected_)
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_
