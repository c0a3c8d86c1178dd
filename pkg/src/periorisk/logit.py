"""Unweighted and class-weighted logistic regression.

Ordinal and nominal predictors enter as factor blocks of L-1 indicator
columns (first level is the reference). Coefficients maximize the weighted
log-likelihood

    l_w(beta) = w1 * sum_{y=1} log(pi_i) + w0 * sum_{y=0} log(1 - pi_i)

by Newton-Raphson with step halving. ``weights=None`` means every row has
weight one, i.e. the ordinary likelihood.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_complete, check_kinds, check_labels, check_X
from .exceptions import ConstantFactor, DimensionMismatch, SingularHessian

logger = logging.getLogger(__name__)

SEPARATION_ETA = 30.0
RIDGE_JITTER = 1e-8
POLISH_TOL = 1e-6


@dataclass(frozen=True)
class ClassWeights:
    w0: float
    w1: float

    def __post_init__(self):
        if not (self.w0 > 0 and self.w1 > 0):
            raise ValueError("class weights must be positive")
        total = self.w0 + self.w1
        object.__setattr__(self, "w0", self.w0 / total)
        object.__setattr__(self, "w1", self.w1 / total)

    @classmethod
    def equal(cls):
        return cls(0.5, 0.5)

    def row_weights(self, y):
        return np.where(np.asarray(y) == 1, self.w1, self.w0)

    def to_dict(self):
        return {"w0": self.w0, "w1": self.w1}


def balanced_weights(y):
    """Weights proportional to the inverse class frequencies, summing to one."""
    y = check_labels(y)
    n1 = int(y.sum())
    n0 = len(y) - n1
    return ClassWeights(1.0 / n0, 1.0 / n1)


def resolve_weights(class_weight, y):
    if class_weight is None or isinstance(class_weight, ClassWeights):
        return class_weight
    if class_weight == "balanced":
        return balanced_weights(y)
    if class_weight == "equal":
        return ClassWeights.equal()
    if isinstance(class_weight, (tuple, list)):
        return ClassWeights(*class_weight)
    if isinstance(class_weight, dict):
        return ClassWeights(class_weight[0], class_weight[1])
    raise ValueError(f"unsupported class_weight {class_weight!r}")


# ---------------------------------------------------------------------------
# design matrices


@dataclass
class DesignMatrix:
    matrix: np.ndarray
    column_names: list
    block_map: dict  # predictor name -> (start, stop) column range

    @property
    def n_columns(self):
        return self.matrix.shape[1]

    def columns_for(self, names):
        """Column indices of the intercept plus the blocks of ``names``."""
        cols = [0]
        for name in names:
            start, stop = self.block_map[name]
            cols.extend(range(start, stop))
        return cols


def expand(X, kinds, names, check_constant=False):
    """Build the intercept + expanded predictor matrix from a cell matrix."""
    X = np.asarray(X, dtype=np.float64)
    check_complete(X, names)
    n = X.shape[0]
    blocks = [np.ones((n, 1))]
    column_names = ["(Intercept)"]
    block_map = {}
    start = 1
    for j, (name, kind) in enumerate(zip(names, kinds)):
        col = X[:, j]
        if kind.is_factor:
            if check_constant and np.unique(col).size < 2:
                raise ConstantFactor(f"factor {name!r} has a single observed level", variable=name)
            levels = np.arange(1, kind.n_levels)
            block = (col[:, None] == levels[None, :]).astype(np.float64)
            column_names.extend(f"{name}{kind.levels[k]}" for k in levels)
        else:
            block = col[:, None]
            column_names.append(name)
        blocks.append(block)
        block_map[name] = (start, start + block.shape[1])
        start += block.shape[1]
    return DesignMatrix(np.hstack(blocks), column_names, block_map)


def build_design(ds, variables):
    """Design matrix for ``variables`` of a :class:`~periorisk.data.Dataset`."""
    return expand(ds.matrix(variables), ds.schema.kinds(variables), list(variables),
                  check_constant=True)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class LogitFit:
    beta: np.ndarray
    loglik: float
    aic: float
    converged: bool
    weights: ClassWeights = None
    separation: bool = False
    n_iter: int = 0
    score_norm: float = np.inf
    column_names: list = field(default_factory=list)

    @property
    def n_coef(self):
        return len(self.beta)

    def summary(self, null_loglik=None):
        """JSON-ready fit summary; deviances are -2 * (weighted) log-likelihoods."""
        out = {
            "coefficients": [{"name": n, "estimate": float(b)}
                             for n, b in zip(self.column_names, self.beta)],
            "loglik": self.loglik,
            "aic": self.aic,
            "converged": self.converged,
            "separation": self.separation,
            "iterations": self.n_iter,
            "weights": None if self.weights is None else self.weights.to_dict(),
            "residual_deviance_weighted": -2.0 * self.loglik,
        }
        if null_loglik is not None:
            out["null_deviance_weighted"] = -2.0 * null_loglik
        return out


def weighted_loglik(beta, X, y, row_w):
    eta = X @ beta
    return -float(np.sum(row_w * np.logaddexp(0.0, (1.0 - 2.0 * y) * eta)))


def information_criterion(loglik, n_coef, row_w, aic_mode="direct"):
    if aic_mode == "direct":
        return -2.0 * loglik + 2.0 * n_coef
    if aic_mode == "rescaled":
        return -2.0 * loglik * len(row_w) / row_w.sum() + 2.0 * n_coef
    raise ValueError(f"unknown aic_mode {aic_mode!r}")


def _newton_step(X, score, hess_w):
    H = X.T @ (X * hess_w[:, None])
    try:
        step = np.linalg.solve(H, score)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    try:
        step = np.linalg.solve(H + RIDGE_JITTER * np.eye(H.shape[0]), score)
    except np.linalg.LinAlgError:
        raise SingularHessian("Hessian singular even after ridge jitter") from None
    if not np.all(np.isfinite(step)):
        raise SingularHessian("non-finite Newton step after ridge jitter")
    return step


def fit(dm, y, weights=None, max_iter=100, score_tol=1e-8, rel_tol=1e-10, aic_mode="direct"):
    """Maximize the (weighted) log-likelihood by Newton-Raphson.

    Parameters
    ----------
    dm : DesignMatrix or ndarray
        Design including the intercept column.
    y : array of 0/1
    weights : ClassWeights or None
        ``None`` gives every row weight one.

    Returns
    -------
    LogitFit
        ``converged`` is False when the iteration cap is hit or when the
        linear predictor exceeds 30 in magnitude before convergence
        (``separation`` is then set).
    """
    X = dm.matrix if isinstance(dm, DesignMatrix) else np.asarray(dm, dtype=np.float64)
    names = dm.column_names if isinstance(dm, DesignMatrix) else [f"x{j}" for j in range(X.shape[1])]
    y = check_labels(y)
    if X.shape[0] != len(y):
        raise DimensionMismatch(f"{X.shape[0]} design rows for {len(y)} labels")
    yf = y.astype(np.float64)
    row_w = np.ones(len(y)) if weights is None else weights.row_weights(y)

    beta = np.zeros(X.shape[1])
    ll = weighted_loglik(beta, X, yf, row_w)
    converged = separation = False
    n_iter = 0
    while True:
        eta = X @ beta
        pi = expit(eta)
        score = X.T @ (row_w * (yf - pi))
        score_norm = float(np.max(np.abs(score)))
        # a small relative loglik change only ends the loop once the score is also small;
        # otherwise Newton steps continue to polish the optimum
        if score_norm < score_tol or (converged and score_norm < POLISH_TOL):
            converged = True
            break
        if np.max(np.abs(eta)) > SEPARATION_ETA:
            separation = True
            break
        if n_iter >= max_iter:
            break
        step = _newton_step(X, score, row_w * pi * (1.0 - pi))
        n_iter += 1
        ll_new = weighted_loglik(beta + step, X, yf, row_w)
        halvings = 0
        while ll_new < ll and halvings < 30:
            step = step / 2.0
            ll_new = weighted_loglik(beta + step, X, yf, row_w)
            halvings += 1
        if ll_new < ll:
            # no ascent direction left at machine precision
            converged = abs(ll_new - ll) <= rel_tol * (abs(ll) + 1e-300) or score_norm < POLISH_TOL
            break
        beta = beta + step
        rel_change = abs(ll_new - ll) / (abs(ll) + 1e-300)
        ll = ll_new
        if rel_change < rel_tol:
            converged = True

    if separation:
        logger.info("separation detected after %d iterations", n_iter)
    aic = information_criterion(ll, X.shape[1], row_w, aic_mode)
    return LogitFit(beta, ll, aic, converged, weights, separation, n_iter, score_norm, list(names))


def predict(fit_, dm):
    X = dm.matrix if isinstance(dm, DesignMatrix) else np.asarray(dm, dtype=np.float64)
    if X.shape[1] != len(fit_.beta):
        raise DimensionMismatch(f"design has {X.shape[1]} columns, model {len(fit_.beta)}")
    return expit(X @ fit_.beta)


# ---------------------------------------------------------------------------
# stepwise AIC


@dataclass
class StepwiseResult:
    variables: list
    trace: list
    fit: LogitFit


def stepwise_arrays(X, y, kinds, names, direction="backward", weights=None, aic_mode="direct",
                    max_iter=100):
    """Greedy stepwise AIC selection over whole factor blocks.

    Forward and both start from the intercept-only model, backward from the
    full model. Each step takes the add/drop move with the lowest AIC if it
    improves on the current AIC; ties go to the lowest variable index.
    """
    if direction not in ("forward", "backward", "both"):
        raise ValueError(f"unknown direction {direction!r}")
    y = check_labels(y)
    names = list(names)
    if len(names) < 2:
        raise ValueError("stepwise selection needs at least two candidate variables")
    dm = expand(X, kinds, names, check_constant=True)
    cache = {}

    def fit_subset(subset):
        key = tuple(sorted(subset))
        if key not in cache:
            cols = dm.columns_for([names[i] for i in key])
            sub = DesignMatrix(dm.matrix[:, cols], [dm.column_names[c] for c in cols], {})
            cache[key] = fit(sub, y, weights, max_iter=max_iter, aic_mode=aic_mode)
        return cache[key]

    current = set() if direction in ("forward", "both") else set(range(len(names)))
    current_aic = fit_subset(current).aic
    trace = [{"step": 0, "move": "start", "variable": None, "aic": current_aic}]
    while True:
        moves = []
        if direction in ("forward", "both"):
            moves += [("add", i) for i in range(len(names)) if i not in current]
        if direction in ("backward", "both"):
            moves += [("drop", i) for i in sorted(current)]
        if not moves:
            break
        scored = []
        for move, i in moves:
            subset = current | {i} if move == "add" else current - {i}
            scored.append((fit_subset(subset).aic, i, move))
        best_aic, best_i, best_move = min(scored, key=lambda t: (t[0], t[1]))
        if not best_aic < current_aic - 1e-9:
            break
        current = current | {best_i} if best_move == "add" else current - {best_i}
        current_aic = best_aic
        trace.append({"step": len(trace), "move": best_move, "variable": names[best_i],
                      "aic": best_aic})
    selected = [names[i] for i in sorted(current)]
    return StepwiseResult(selected, trace, fit_subset(current))


def stepwise_select(ds, outcome, direction="backward", weights=None, candidates=None,
                    aic_mode="direct"):
    """Stepwise AIC on a Dataset; returns (variables, trace)."""
    names = list(candidates) if candidates is not None else ds.schema.names
    res = stepwise_arrays(ds.matrix(names), ds.outcome(outcome), ds.schema.kinds(names), names,
                          direction, weights, aic_mode)
    return res.variables, res.trace


# ---------------------------------------------------------------------------
# estimators


def _feature_names(est, n_features):
    names = getattr(est, "feature_names", None)
    if names is None:
        return [f"x{j}" for j in range(n_features)]
    if len(names) != n_features:
        raise DimensionMismatch(f"{len(names)} feature names for {n_features} features")
    return list(names)


class WeightedLogisticRegression(ClassifierMixin, BaseEstimator):
    """Logistic regression maximizing a class-weighted likelihood.

    Parameters
    ----------
    class_weight : {"balanced", "equal"}, ClassWeights, (w0, w1) or None
        ``"balanced"`` weights each class by its inverse frequency;
        ``None`` fits the ordinary unweighted likelihood.
    kinds : list of VariableKind, optional
        Per-column kinds; factors are expanded to indicator blocks.
    feature_names : list of str, optional
    max_iter : int
    aic_mode : {"direct", "rescaled"}
    """

    def __init__(self, class_weight="balanced", kinds=None, feature_names=None, max_iter=100,
                 aic_mode="direct"):
        self.class_weight = class_weight
        self.kinds = kinds
        self.feature_names = feature_names
        self.max_iter = max_iter
        self.aic_mode = aic_mode

    def fit(self, X, y):
        X = check_X(X, allow_nan=True)
        y = check_labels(y)
        self.kinds_ = check_kinds(self.kinds, X.shape[1])
        self.feature_names_ = _feature_names(self, X.shape[1])
        self.weights_ = resolve_weights(self.class_weight, y)
        dm = expand(X, self.kinds_, self.feature_names_)
        self.fit_ = fit(dm, y, self.weights_, max_iter=self.max_iter, aic_mode=self.aic_mode)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self.intercept_ = float(self.fit_.beta[0])
        self.coef_ = self.fit_.beta[1:].copy()
        self.converged_ = self.fit_.converged
        self.separation_ = self.fit_.separation
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "fit_")
        X = check_X(X, allow_nan=True)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        p1 = predict(self.fit_, expand(X, self.kinds_, self.feature_names_))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def to_dict(self):
        check_is_fitted(self, "fit_")
        return {
            "model": "logit",
            "feature_names": self.feature_names_,
            "kinds": [k.to_dict() for k in self.kinds_],
            "summary": self.fit_.summary(),
            "beta": self.fit_.beta.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        from .data import VariableKind

        kinds = [VariableKind.from_dict(k) for k in d["kinds"]]
        est = cls(kinds=kinds, feature_names=d["feature_names"])
        s = d["summary"]
        w = s["weights"]
        est.kinds_ = kinds
        est.feature_names_ = list(d["feature_names"])
        est.weights_ = None if w is None else ClassWeights(w["w0"], w["w1"])
        est.fit_ = LogitFit(np.asarray(d["beta"]), s["loglik"], s["aic"], s["converged"],
                            est.weights_, s["separation"], s["iterations"],
                            column_names=[c["name"] for c in s["coefficients"]])
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = len(kinds)
        est.intercept_ = float(est.fit_.beta[0])
        est.coef_ = est.fit_.beta[1:].copy()
        est.converged_ = est.fit_.converged
        est.separation_ = est.fit_.separation
        return est


class StepwiseAICSelector(SelectorMixin, BaseEstimator):
    """Stepwise AIC variable selection wrapped as a sklearn selector."""

    def __init__(self, direction="backward", class_weight="balanced", kinds=None,
                 feature_names=None, aic_mode="direct"):
        self.direction = direction
        self.class_weight = class_weight
        self.kinds = kinds
        self.feature_names = feature_names
        self.aic_mode = aic_mode

    def fit(self, X, y):
        X = check_X(X, allow_nan=True)
        y = check_labels(y)
        kinds = check_kinds(self.kinds, X.shape[1])
        names = _feature_names(self, X.shape[1])
        weights = resolve_weights(self.class_weight, y)
        res = stepwise_arrays(X, y, kinds, names, self.direction, weights, self.aic_mode)
        self.selected_ = res.variables
        self.trace_ = res.trace
        self.fit_ = res.fit
        self.support_ = np.isin(names, res.variables)
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_
