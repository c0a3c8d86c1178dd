"""Empirical-logit summaries of single variables and variable pairs.

Counts are adjusted by +0.5 in both numerator and denominator so that
cells without events stay finite. Bands are 90% Wald intervals on the
logit scale.
"""

import csv
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .data import format_number
from .exceptions import EmptyInput

QUANTILE_GRID = (0.10, 0.30, 0.50, 0.70, 0.90)
Z90 = 1.645
ADJUST = 0.5
BAND = "wald90"


def quantile_cuts(x, grid=QUANTILE_GRID):
    """Distinct empirical quantiles of the observed values of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    obs = x[~np.isnan(x)]
    if obs.size == 0:
        raise EmptyInput("no observed values to bin")
    return np.unique(np.quantile(obs, grid))


def bin_codes(x, cuts):
    """Bin index per value; a value equal to a cut goes to the lower bin. NaN stays NaN."""
    x = np.asarray(x, dtype=np.float64)
    codes = np.searchsorted(np.asarray(cuts, dtype=np.float64), x, side="left").astype(np.float64)
    codes[np.isnan(x)] = np.nan
    return codes


def bin_labels(cuts):
    cuts = [format_number(c) for c in cuts]
    if not cuts:
        return ["all"]
    labels = [f"<={cuts[0]}"]
    labels += [f"({a},{b}]" for a, b in zip(cuts[:-1], cuts[1:])]
    labels.append(f">{cuts[-1]}")
    return labels


def bin_midpoints(x, cuts):
    """Midpoint of each bin, closing the outer bins at the observed min and max."""
    x = np.asarray(x, dtype=np.float64)
    obs = x[~np.isnan(x)]
    edges = np.concatenate([[obs.min()], cuts, [obs.max()]])
    return 0.5 * (edges[:-1] + edges[1:])


def empirical_logit(n1, n0):
    """Adjusted log odds with its 90% band: ``(logit, lo90, hi90)``."""
    if n0 + n1 < 1:
        raise EmptyInput("empirical logit of an empty group")
    a, b = n1 + ADJUST, n0 + ADJUST
    logit = math.log(a / b)
    half = Z90 * math.sqrt(1.0 / a + 1.0 / b)
    return logit, logit - half, logit + half


@dataclass(frozen=True)
class LogitPoint:
    label: str
    x: float  # bin midpoint for continuous variables, level code otherwise
    logit: float
    lo90: float
    hi90: float
    n0: int
    n1: int

    @classmethod
    def from_counts(cls, label, x, n1, n0):
        logit, lo, hi = empirical_logit(n1, n0)
        return cls(label, float(x), logit, lo, hi, int(n0), int(n1))

    def to_dict(self):
        return asdict(self)


def _grouping(ds, var):
    """Group code per row, group labels and group x positions for ``var``."""
    kind = ds.schema.kind(var)
    x = ds.column(var)
    if kind.is_continuous:
        cuts = quantile_cuts(x)
        codes = bin_codes(x, cuts)
        mids = bin_midpoints(x, cuts)
        return codes, bin_labels(cuts), mids
    return x, list(kind.levels), np.arange(kind.n_levels, dtype=np.float64)


def marginal_logit_curve(ds, var, outcome):
    """One :class:`LogitPoint` per non-empty bin (or level) of ``var``.

    Rows with ``var`` Missing are skipped.
    """
    codes, labels, xs = _grouping(ds, var)
    y = ds.outcome(outcome)
    points = []
    for k, label in enumerate(labels):
        in_bin = codes == k
        n = int(in_bin.sum())
        if n == 0:
            continue
        n1 = int(y[in_bin].sum())
        points.append(LogitPoint.from_counts(label, xs[k], n1, n - n1))
    return points


def cut_codes(x, cutpoints):
    """Codes for user-given cutpoints; a value equal to a cut goes to the upper bin."""
    x = np.asarray(x, dtype=np.float64)
    codes = np.searchsorted(np.asarray(cutpoints, dtype=np.float64), x, side="right").astype(np.float64)
    codes[np.isnan(x)] = np.nan
    return codes


@dataclass
class InteractionGrid:
    var_a: str
    var_b: str
    labels_a: list
    labels_b: list
    cells: dict  # (i, j) -> LogitPoint
    warnings: list

    def rows(self):
        for (i, j), pt in sorted(self.cells.items()):
            yield self.labels_a[i], self.labels_b[j], pt


def _pair_grouping(ds, var, bins):
    if bins is None:
        return _grouping(ds, var)[:2]
    cutpoints = bins["cutpoints"] if isinstance(bins, dict) else bins
    labels = bins.get("labels") if isinstance(bins, dict) else None
    cutpoints = [float(c) for c in cutpoints]
    if any(b <= a for a, b in zip(cutpoints[:-1], cutpoints[1:])):
        raise ValueError("cutpoints must be strictly increasing")
    if labels is None:
        edges = [format_number(c) for c in cutpoints]
        labels = [f"<{edges[0]}"] + [f"[{a},{b})" for a, b in zip(edges[:-1], edges[1:])]
        labels.append(f">={edges[-1]}")
    if len(labels) != len(cutpoints) + 1:
        raise ValueError("need one label more than cutpoints")
    return cut_codes(ds.column(var), cutpoints), list(labels)


def interaction_grid(ds, var_a, var_b, outcome, bins_a=None, bins_b=None):
    """Empirical logits on the cross-classification of two variables.

    ``bins_a`` / ``bins_b`` are cutpoint lists (or ``{"cutpoints", "labels"}``
    dicts); ``None`` uses factor levels or the quantile grid. A value equal to
    a user cutpoint falls in the upper bin. Empty cells are omitted and
    reported in ``warnings``.
    """
    codes_a, labels_a = _pair_grouping(ds, var_a, bins_a)
    codes_b, labels_b = _pair_grouping(ds, var_b, bins_b)
    y = ds.outcome(outcome)
    cells, notes = {}, []
    for i in range(len(labels_a)):
        for j in range(len(labels_b)):
            in_cell = (codes_a == i) & (codes_b == j)
            n = int(in_cell.sum())
            if n == 0:
                msg = f"empty cell {var_a}={labels_a[i]}, {var_b}={labels_b[j]}"
                notes.append(msg)
                warnings.warn(msg, stacklevel=2)
                continue
            n1 = int(y[in_cell].sum())
            cells[(i, j)] = LogitPoint.from_counts(f"{labels_a[i]}|{labels_b[j]}", i, n1, n - n1)
    return InteractionGrid(var_a, var_b, labels_a, labels_b, cells, notes)


CURVE_FIELDS = ("bin", "midpoint", "logit", "lo90", "hi90", "n0", "n1")


def write_curve_csv(points, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_FIELDS)
        for p in points:
            w.writerow([p.label, repr(p.x), repr(p.logit), repr(p.lo90), repr(p.hi90), p.n0, p.n1])


def write_grid_csv(grid, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((grid.var_a, grid.var_b, "logit", "lo90", "hi90", "n0", "n1"))
        for la, lb, p in grid.rows():
            w.writerow([la, lb, repr(p.logit), repr(p.lo90), repr(p.hi90), p.n0, p.n1])
