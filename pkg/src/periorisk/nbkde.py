"""Naive Bayes with kernel-density class-conditional marginals.

Continuous marginals are Gaussian-kernel density estimates with Silverman's
rule-of-thumb bandwidth per class; discrete marginals are add-0.5 smoothed
level frequencies. Posteriors are evaluated in log space.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.model_selection import train_test_split
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complete, check_kinds, check_labels, check_X
from .data import VariableKind
from .exceptions import DimensionMismatch
from .metrics import brier_per_class

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
PMF_PSEUDOCOUNT = 0.5


def silverman_bandwidth(x, scale=1.0):
    """``0.9 * min(sd, IQR/1.34) * m**(-1/5)``.

    Falls back to the standard deviation when the IQR is zero, and to
    ``1e-6 * scale`` when the sample is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.size
    sd = float(np.std(x, ddof=1)) if m > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    h = 0.9 * spread * m ** (-0.2)
    if not h > 0:
        h = 1e-6 * (scale if scale > 0 else 1.0)
    return h


@dataclass
class KernelDensity:
    points: np.ndarray
    bandwidth: float

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = (x[:, None] - self.points[None, :]) / self.bandwidth
        return (logsumexp(-0.5 * z * z, axis=1) - np.log(self.points.size * self.bandwidth)
                - LOG_SQRT_2PI)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def to_dict(self):
        return {"type": "kde", "bandwidth": self.bandwidth, "points": self.points.tolist()}


@dataclass
class SmoothedPmf:
    probs: np.ndarray

    @classmethod
    def from_codes(cls, codes, n_levels):
        counts = np.bincount(np.asarray(codes, dtype=np.int64), minlength=n_levels)
        return cls((counts + PMF_PSEUDOCOUNT) / (counts.sum() + PMF_PSEUDOCOUNT * n_levels))

    def logpdf(self, x):
        return np.log(self.probs[np.asarray(x, dtype=np.int64)])

    def pdf(self, x):
        return self.probs[np.asarray(x, dtype=np.int64)]

    def to_dict(self):
        return {"type": "pmf", "probs": self.probs.tolist()}


def marginal_from_dict(d):
    if d["type"] == "kde":
        return KernelDensity(np.asarray(d["points"], dtype=np.float64), d["bandwidth"])
    return SmoothedPmf(np.asarray(d["probs"], dtype=np.float64))


def fit_marginal(x, kind, scale=1.0):
    if kind.is_continuous:
        return KernelDensity(np.asarray(x, dtype=np.float64).copy(), silverman_bandwidth(x, scale))
    return SmoothedPmf.from_codes(x, kind.n_levels)


@dataclass
class NbModel:
    priors: tuple
    variables: list
    marginals: tuple  # (class-0 list, class-1 list), aligned with variables

    def log_joint(self, X):
        """Per-class ``log prior + sum of log marginals``, shape (n, 2)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.variables):
            raise DimensionMismatch(f"expected {len(self.variables)} columns, got {X.shape[1]}")
        out = np.empty((X.shape[0], 2))
        for j in (0, 1):
            out[:, j] = np.log(self.priors[j])
            for p, dens in enumerate(self.marginals[j]):
                out[:, j] += dens.logpdf(X[:, p])
        return out

    def posterior(self, X):
        lj = self.log_joint(X)
        return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))

    def to_dict(self):
        return {
            "priors": list(self.priors),
            "variables": list(self.variables),
            "marginals": [[m.to_dict() for m in ms] for ms in self.marginals],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["priors"]), list(d["variables"]),
                   tuple([marginal_from_dict(m) for m in ms] for ms in d["marginals"]))


def class_priors(y, prior_mode="empirical"):
    if prior_mode == "equal":
        return (0.5, 0.5)
    if prior_mode == "empirical":
        n1 = int(np.sum(y))
        return ((len(y) - n1) / len(y), n1 / len(y))
    raise ValueError(f"unknown prior_mode {prior_mode!r}")


def fit_nb_arrays(X, y, kinds, names, prior_mode="empirical"):
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y)
    check_complete(X, names)
    marginals = ([], [])
    for p, kind in enumerate(kinds):
        col = X[:, p]
        scale = float(col.max() - col.min())
        for j in (0, 1):
            marginals[j].append(fit_marginal(col[y == j], kind, scale))
    return NbModel(class_priors(y, prior_mode), list(names), marginals)


def fit_nb(ds, variables, outcome, prior_mode="empirical"):
    return fit_nb_arrays(ds.matrix(variables), ds.outcome(outcome), ds.schema.kinds(variables),
                         list(variables), prior_mode)


def predict_nb(model, row):
    """Posterior probability of class 1 for a single row."""
    return float(model.posterior(np.asarray(row, dtype=np.float64)[None, :])[0, 1])


# ---------------------------------------------------------------------------
# greedy wrapper


def _mean_class_brier(y, log_joint):
    p1 = np.exp(log_joint[:, 1] - np.logaddexp(log_joint[:, 0], log_joint[:, 1]))
    bs0, bs1 = brier_per_class(y, p1)
    return 0.5 * (bs0 + bs1)


def nb_wrapper_arrays(X, y, kinds, names, seed=0, prior_mode="empirical", learn_fraction=0.75):
    """Greedy forward selection driven by the mean per-class Brier score.

    The training data is split (stratified) into learning and validation
    parts. The best pair on the learning part seeds the search; variables are
    then added one at a time by best learning score until the validation
    score stops improving.

    Returns
    -------
    selected : list of str
    trace : dict
        ``learn_path`` holds one learning score per selected variable (the
        first entry scores the first seed variable alone), ``val_path`` one
        validation score per accepted step, ``rejected`` the candidate whose
        addition failed on validation.
    """
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y)
    names = list(names)
    d = len(names)
    if d < 2:
        raise ValueError("the wrapper needs at least two candidate variables")
    learn_idx, val_idx = train_test_split(np.arange(len(y)), train_size=learn_fraction,
                                          stratify=y, random_state=seed)
    learn_idx, val_idx = np.sort(learn_idx), np.sort(val_idx)
    y_l, y_v = y[learn_idx], y[val_idx]
    check_labels(y_l)
    check_labels(y_v)
    model = fit_nb_arrays(X[learn_idx], y_l, kinds, names, prior_mode)

    # the NB log-likelihood is additive over variables: precompute each term once
    contrib_l = np.empty((d, len(learn_idx), 2))
    contrib_v = np.empty((d, len(val_idx), 2))
    for p in range(d):
        for j in (0, 1):
            dens = model.marginals[j][p]
            contrib_l[p, :, j] = dens.logpdf(X[learn_idx, p])
            contrib_v[p, :, j] = dens.logpdf(X[val_idx, p])
    log_prior = np.log(np.asarray(model.priors))

    def score_learn(subset):
        return _mean_class_brier(y_l, log_prior + contrib_l[list(subset)].sum(axis=0))

    def score_val(subset):
        return _mean_class_brier(y_v, log_prior + contrib_v[list(subset)].sum(axis=0))

    best_pair, best = None, np.inf
    for pair in itertools.combinations(range(d), 2):
        s = score_learn(pair)
        if s < best:
            best_pair, best = pair, s
    selected = list(best_pair)
    learn_path = [score_learn(best_pair[:1]), best]
    val_path = [score_val(selected)]
    rejected = None
    remaining = [p for p in range(d) if p not in selected]
    while remaining:
        scores = [score_learn(selected + [p]) for p in remaining]
        k = int(np.argmin(scores))
        cand = remaining[k]
        v = score_val(selected + [cand])
        if not v < val_path[-1]:
            rejected = {"variable": names[cand], "learn": scores[k], "val": v}
            break
        selected.append(cand)
        remaining.remove(cand)
        learn_path.append(scores[k])
        val_path.append(v)
    trace = {
        "order": [names[p] for p in selected],
        "learn_path": learn_path,
        "val_path": val_path,
        "rejected": rejected,
        "n_learn": int(len(learn_idx)),
        "n_val": int(len(val_idx)),
    }
    return [names[p] for p in selected], trace


def nb_wrapper_select(ds, outcome, seed=0, prior_mode="empirical", candidates=None):
    names = list(candidates) if candidates is not None else ds.schema.names
    return nb_wrapper_arrays(ds.matrix(names), ds.outcome(outcome), ds.schema.kinds(names), names,
                             seed, prior_mode)


# ---------------------------------------------------------------------------
# estimators


class KDENaiveBayes(ClassifierMixin, BaseEstimator):
    """Naive Bayes classifier with per-class KDE / smoothed-pmf marginals.

    Parameters
    ----------
    prior : {"empirical", "equal"}
    kinds : list of VariableKind, optional
        Discrete columns get smoothed pmfs; ``None`` treats all as continuous.
    feature_names : list of str, optional
    """

    def __init__(self, prior="empirical", kinds=None, feature_names=None):
        self.prior = prior
        self.kinds = kinds
        self.feature_names = feature_names

    def fit(self, X, y):
        X = check_X(X, allow_nan=True)
        y = check_labels(y)
        self.kinds_ = check_kinds(self.kinds, X.shape[1])
        names = self.feature_names or [f"x{j}" for j in range(X.shape[1])]
        self.model_ = fit_nb_arrays(X, y, self.kinds_, names, self.prior)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_X(X, allow_nan=True)
        check_complete(X)
        return self.model_.posterior(X)

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def to_dict(self):
        check_is_fitted(self, "model_")
        return {"model": "nbkde", "kinds": [k.to_dict() for k in self.kinds_],
                **self.model_.to_dict()}

    @classmethod
    def from_dict(cls, d):
        kinds = [VariableKind.from_dict(k) for k in d["kinds"]]
        est = cls(kinds=kinds, feature_names=list(d["variables"]))
        est.kinds_ = kinds
        est.model_ = NbModel.from_dict(d)
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = len(kinds)
        return est


class NBWrapperSelector(SelectorMixin, BaseEstimator):
    def __init__(self, prior="empirical", kinds=None, feature_names=None, random_state=0,
                 learn_fraction=0.75):
        self.prior = prior
        self.kinds = kinds
        self.feature_names = feature_names
        self.random_state = random_state
        self.learn_fraction = learn_fraction

    def fit(self, X, y):
        X = check_X(X, allow_nan=True)
        kinds = check_kinds(self.kinds, X.shape[1])
        names = self.feature_names or [f"x{j}" for j in range(X.shape[1])]
        self.selected_, self.trace_ = nb_wrapper_arrays(X, y, kinds, names, self.random_state,
                                                        self.prior, self.learn_fraction)
        self.support_ = np.isin(names, self.selected_)
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_
