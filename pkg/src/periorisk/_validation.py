"""Input validation shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .data import VariableKind
from .exceptions import DimensionMismatch, EmptyInput, MissingValuePresent, OneClassOnly


def check_labels(y, both_classes=True):
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.ravel()
    if y.size == 0:
        raise EmptyInput("no labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    y = y.astype(np.int64)
    if both_classes and (y.min() == y.max()):
        raise OneClassOnly(f"only class {int(y[0])} present")
    return y


def check_probs(p, n=None):
    p = np.asarray(p, dtype=np.float64).ravel()
    if n is not None and p.shape[0] != n:
        raise DimensionMismatch(f"{p.shape[0]} predictions for {n} labels")
    if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    return p


def check_X(X, allow_nan=False):
    X = check_array(X, dtype=np.float64, ensure_all_finite="allow-nan" if allow_nan else True)
    return X


def check_complete(X, names=None):
    bad = np.isnan(X).any(axis=0)
    if bad.any():
        cols = [names[i] if names else int(i) for i in np.flatnonzero(bad)]
        raise MissingValuePresent(f"missing values in {cols}", columns=cols)


def check_kinds(kinds, n_features):
    """Normalize a ``kinds`` parameter; ``None`` means all continuous."""
    if kinds is None:
        return [VariableKind.continuous()] * n_features
    kinds = [k if isinstance(k, VariableKind) else VariableKind.from_dict(k) for k in kinds]
    if len(kinds) != n_features:
        raise DimensionMismatch(f"{len(kinds)} kinds for {n_features} features")
    return kinds
