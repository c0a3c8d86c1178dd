"""Random forest of Gini classification trees with per-class bootstrap.

Each tree is grown on a stratified bootstrap: ``n_min`` rows drawn with
replacement from each class, ``n_min`` being the minority class count.
Nodes smaller than ``min_node_size`` are not split. Numeric variables split
at midpoints of consecutive distinct values; ordinal and nominal variables
split on level subsets, enumerated exhaustively.
"""

from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.model_selection import StratifiedKFold
from sklearn.utils.validation import check_is_fitted

from ._treekernel import best_split_rows, grow
from ._validation import check_complete, check_kinds, check_labels, check_X
from .data import VariableKind
from .exceptions import DimensionMismatch, EmptyInput

MAX_SUBSET_LEVELS = 10


def gini(n0, n1):
    n = n0 + n1
    if n < 1:
        raise EmptyInput("Gini index of an empty node")
    p0, p1 = n0 / n, n1 / n
    return 1.0 - p0 * p0 - p1 * p1


@dataclass(frozen=True)
class Split:
    variable: int
    delta: float
    threshold: float = None  # numeric rule: x <= threshold goes left
    left_levels: tuple = None  # subset rule: level code in left_levels goes left

    def goes_left(self, x):
        if self.left_levels is None:
            return x <= self.threshold
        return np.isin(x, self.left_levels)


def level_subsets(levels):
    """Left-hand level sets of every two-way partition of ``levels``.

    The first level always goes left, so each partition appears once; sets
    are yielded in increasing bitmask order over the remaining levels.
    """
    levels = list(levels)
    rest = levels[1:]
    for mask in range(2 ** len(rest) - 1):
        yield (levels[0],) + tuple(lv for b, lv in enumerate(rest) if mask >> b & 1)


def _factor_arrays(is_factor, n_levels, d):
    is_factor = np.zeros(d, dtype=np.bool_) if is_factor is None else np.asarray(is_factor, dtype=np.bool_)
    n_levels = np.asarray(n_levels, dtype=np.int64)
    if np.any(n_levels[is_factor] > MAX_SUBSET_LEVELS):
        raise ValueError(f"subset splits support at most {MAX_SUBSET_LEVELS} levels")
    return is_factor, n_levels


def best_split(X, y, candidates, is_factor=None, n_levels=None):
    """Split maximizing the Gini decrease over the candidate variables.

    Returns None when no candidate yields a strictly positive decrease.
    Ties go to the lowest variable index, then the lowest threshold (or
    first subset in :func:`level_subsets` order).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    if n_levels is None:
        n_levels = np.zeros(d, dtype=np.int64)
        if is_factor is not None:
            for v in range(d):
                if is_factor[v]:
                    n_levels[v] = int(X[:, v].max()) + 1
    is_factor, n_levels = _factor_arrays(is_factor, n_levels, d)
    cand = np.unique(np.asarray(candidates, dtype=np.int64))
    found, var, delta, thr, mask = best_split_rows(X, y, np.arange(y.size), cand, is_factor,
                                                   n_levels)
    if not found:
        return None
    if mask:
        levels = tuple(c for c in range(int(n_levels[var])) if (mask >> c) & 1)
        return Split(int(var), float(delta), left_levels=levels)
    return Split(int(var), float(delta), threshold=float(thr))


# ---------------------------------------------------------------------------
# trees


@dataclass
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray
    left_mask: np.ndarray  # bitmask of left-going level codes for subset splits, else 0
    left: np.ndarray
    right: np.ndarray
    p1: np.ndarray
    n: np.ndarray
    importance: np.ndarray
    n_boot: tuple = (0, 0)

    @property
    def n_leaves(self):
        return int(np.sum(self.feature < 0))

    def apply(self, X):
        """Index of the leaf each row lands in."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            f = self.feature[cur]
            x = X[rows, f]
            mask = self.left_mask[cur]
            subset = mask > 0
            go_left = np.where(subset,
                               ((mask >> np.where(subset, x, 0).astype(np.int64)) & 1) == 1,
                               x <= self.threshold[cur])
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def predict_leaf_p1(self, X):
        return self.p1[self.apply(X)]

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left_mask": self.left_mask.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "p1": self.p1.tolist(),
            "n": self.n.tolist(),
            "importance": self.importance.tolist(),
            "n_boot": list(self.n_boot),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=np.float64),
            np.asarray(d["left_mask"], dtype=np.int64),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["p1"], dtype=np.float64),
            np.asarray(d["n"], dtype=np.int64),
            np.asarray(d["importance"], dtype=np.float64),
            tuple(d.get("n_boot", (0, 0))),
        )


def grow_tree(X, y, is_factor, n_levels, mtry, min_node_size, rng):
    """Grow one unpruned tree on (X, y) with ``mtry`` random candidates per node."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    is_factor, n_levels = _factor_arrays(is_factor, n_levels, X.shape[1])
    # one row of uniform keys per potential node; the mtry smallest pick the candidates
    keys = rng.random((2 * y.size, X.shape[1]))
    return Tree(*grow(X, y, is_factor, n_levels, int(mtry), int(min_node_size), keys))


def stratified_bootstrap(y, rng):
    """Rows drawn with replacement, ``n_minority`` from each class."""
    idx0 = np.flatnonzero(y == 0)
    idx1 = np.flatnonzero(y == 1)
    n_min = min(idx0.size, idx1.size)
    return np.concatenate([rng.choice(idx0, n_min, replace=True),
                           rng.choice(idx1, n_min, replace=True)])


# ---------------------------------------------------------------------------
# forests


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    mtry: int = None  # None -> floor(sqrt(d))
    min_node_size: int = 50
    stratified: bool = True
    seed: int = 0
    proba: str = "vote"  # "vote" share of trees, or "mean" of leaf proportions
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.proba not in ("vote", "mean"):
            raise ValueError(f"unknown proba mode {self.proba!r}")

    def resolve_mtry(self, d):
        mtry = int(np.floor(np.sqrt(d))) if self.mtry is None else int(self.mtry)
        if not 1 <= mtry <= d:
            raise ValueError(f"mtry={mtry} outside [1, {d}]")
        return mtry

    def to_dict(self):
        return asdict(self)


def _fit_tree(X, y, is_factor, n_levels, cfg, mtry, tree_seed):
    rng = np.random.default_rng(tree_seed)
    if cfg.stratified:
        rows = stratified_bootstrap(y, rng)
    else:
        rows = rng.choice(y.size, y.size, replace=True)
    tree = grow_tree(X[rows], y[rows], is_factor, n_levels, mtry, cfg.min_node_size, rng)
    n1 = int(y[rows].sum())
    tree.n_boot = (rows.size - n1, n1)
    return tree


@dataclass
class Forest:
    trees: list
    config: ForestConfig
    variables: list
    kinds: list = field(default_factory=list)

    def predict_proba1(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != len(self.variables):
            raise DimensionMismatch(f"expected {len(self.variables)} columns, got {X.shape[1]}")
        leaf_p1 = np.stack([t.predict_leaf_p1(X) for t in self.trees])
        if self.config.proba == "vote":
            return (leaf_p1 >= 0.5).mean(axis=0)
        return leaf_p1.mean(axis=0)

    def importance(self):
        """Mean decrease in Gini per variable, averaged over trees."""
        return np.mean([t.importance for t in self.trees], axis=0)

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "variables": list(self.variables),
            "kinds": [k.to_dict() for k in self.kinds],
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls([Tree.from_dict(t) for t in d["trees"]], ForestConfig(**d["config"]),
                   list(d["variables"]), [VariableKind.from_dict(k) for k in d["kinds"]])


def fit_forest_arrays(X, y, kinds, names, cfg=ForestConfig()):
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y)
    check_complete(X, names)
    is_factor = np.array([k.is_factor for k in kinds], dtype=np.bool_)
    n_levels = np.array([k.n_levels if k.is_factor else 0 for k in kinds], dtype=np.int64)
    mtry = cfg.resolve_mtry(X.shape[1])
    if cfg.n_jobs == 1:
        trees = [_fit_tree(X, y, is_factor, n_levels, cfg, mtry, cfg.seed + i)
                 for i in range(cfg.n_trees)]
    else:
        trees = Parallel(n_jobs=cfg.n_jobs)(
            delayed(_fit_tree)(X, y, is_factor, n_levels, cfg, mtry, cfg.seed + i) for i in range(cfg.n_trees))
    return Forest(trees, cfg, list(names), list(kinds))


def fit_forest(ds, variables, outcome, cfg=ForestConfig()):
    return fit_forest_arrays(ds.matrix(variables), ds.outcome(outcome),
                             ds.schema.kinds(variables), list(variables), cfg)


def predict_forest(forest, row):
    return float(forest.predict_proba1(np.asarray(row, dtype=np.float64)[None, :])[0])


def importance(forest):
    return dict(zip(forest.variables, forest.importance().tolist()))


def importance_ranking(forest):
    imp = forest.importance()
    order = sorted(range(len(imp)), key=lambda i: (-imp[i], i))
    return [(forest.variables[i], float(imp[i])) for i in order]


def write_importance_csv(forest, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variable,mdg\n")
        for name, value in importance_ranking(forest):
            fh.write(f"{name},{value!r}\n")


def rf_wrapper_arrays(X, y, kinds, names, cfg=ForestConfig(), sizes=(5, 10, 15, 20), folds=10,
                      seed=0, cutoff=0.5):
    """Choose the top-k importance subset with the best stratified CV accuracy.

    Ties in mean accuracy go to the smaller k.
    """
    X = np.asarray(X, dtype=np.float64)
    y = check_labels(y)
    names = list(names)
    sizes = sorted(int(k) for k in sizes)
    if len(names) < sizes[-1]:
        raise ValueError(f"{len(names)} variables but subset sizes up to {sizes[-1]} requested")
    full = fit_forest_arrays(X, y, kinds, names, cfg)
    ranking = [names.index(v) for v, _ in importance_ranking(full)]
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    fold_idx = list(splitter.split(np.zeros(len(y)), y))
    trace = []
    best_k, best_acc = None, -np.inf
    for k in sizes:
        top = ranking[:k]
        accs = []
        for tr, te in fold_idx:
            forest = fit_forest_arrays(X[np.ix_(tr, top)], y[tr], [kinds[i] for i in top],
                                       [names[i] for i in top], cfg)
            pred = (forest.predict_proba1(X[np.ix_(te, top)]) >= cutoff).astype(np.int64)
            accs.append(float(np.mean(pred == y[te])))
        mean_acc = float(np.mean(accs))
        trace.append({"k": k, "mean_accuracy": mean_acc, "fold_accuracy": accs})
        if mean_acc > best_acc:
            best_k, best_acc = k, mean_acc
    selected = [names[i] for i in ranking[:best_k]]
    return selected, {"ranking": [names[i] for i in ranking], "cv": trace, "best_k": best_k,
                      "importance": importance(full)}


def rf_wrapper_select(ds, outcome, cfg=ForestConfig(), sizes=(5, 10, 15, 20), folds=10, seed=0,
                      candidates=None):
    names = list(candidates) if candidates is not None else ds.schema.names
    return rf_wrapper_arrays(ds.matrix(names), ds.outcome(outcome), ds.schema.kinds(names), names,
                             cfg, sizes, folds, seed)


# ---------------------------------------------------------------------------
# estimators


class StratifiedRandomForest(ClassifierMixin, BaseEstimator):
    """Random forest classifier with balanced per-class bootstrap samples.

    Parameters
    ----------
    n_trees : int, default 500
    mtry : int, optional
        Candidate variables per node; default ``floor(sqrt(n_features))``.
    min_node_size : int, default 50
        Nodes with fewer rows are not split.
    stratified : bool, default True
    proba : {"vote", "mean"}
    random_state : int
        Tree ``i`` is seeded with ``random_state + i``.
    n_jobs : int
    kinds : list of VariableKind, optional
    feature_names : list of str, optional
    """

    def __init__(self, n_trees=500, mtry=None, min_node_size=50, stratified=True, proba="vote",
                 random_state=0, n_jobs=1, kinds=None, feature_names=None):
        self.n_trees = n_trees
        self.mtry = mtry
        self.min_node_size = min_node_size
        self.stratified = stratified
        self.proba = proba
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.kinds = kinds
        self.feature_names = feature_names

    def _config(self):
        return ForestConfig(self.n_trees, self.mtry, self.min_node_size, self.stratified,
                            self.random_state, self.proba, self.n_jobs)

    def fit(self, X, y):
        X = check_X(X)
        y = check_labels(y)
        kinds = check_kinds(self.kinds, X.shape[1])
        names = self.feature_names or [f"x{j}" for j in range(X.shape[1])]
        self.forest_ = fit_forest_arrays(X, y, kinds, names, self._config())
        self.feature_importances_ = self.forest_.importance()
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "forest_")
        p1 = self.forest_.predict_proba1(check_X(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def to_dict(self):
        check_is_fitted(self, "forest_")
        return {"model": "forest", **self.forest_.to_dict()}

    @classmethod
    def from_dict(cls, d):
        forest = Forest.from_dict(d)
        c = forest.config
        est = cls(c.n_trees, c.mtry, c.min_node_size, c.stratified, c.proba, c.seed, c.n_jobs,
                  forest.kinds, forest.variables)
        est.forest_ = forest
        est.feature_importances_ = forest.importance()
        est.classes_ = np.array([0, 1])
        est.n_features_in_ = len(forest.variables)
        return est


class RFWrapperSelector(SelectorMixin, BaseEstimator):
    def __init__(self, sizes=(5, 10, 15, 20), folds=10, n_trees=500, min_node_size=50,
                 random_state=0, n_jobs=1, kinds=None, feature_names=None):
        self.sizes = sizes
        self.folds = folds
        self.n_trees = n_trees
        self.min_node_size = min_node_size
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.kinds = kinds
        self.feature_names = feature_names

    def fit(self, X, y):
        X = check_X(X)
        kinds = check_kinds(self.kinds, X.shape[1])
        names = self.feature_names or [f"x{j}" for j in range(X.shape[1])]
        cfg = ForestConfig(n_trees=self.n_trees, min_node_size=self.min_node_size,
                           seed=self.random_state, n_jobs=self.n_jobs)
        self.selected_, self.trace_ = rf_wrapper_arrays(X, y, kinds, names, cfg, self.sizes,
                                                        self.folds, self.random_state)
        self.support_ = np.isin(names, self.selected_)
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "support_")
        return self.support_
