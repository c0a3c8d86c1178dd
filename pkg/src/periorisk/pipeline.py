"""Config-driven runs: split, preprocess, select, fit, evaluate, report.

Everything that learns from data (imputation tables, variable selection,
model fits) sees only the training partition, unless ``paper_faithful``
asks for imputation tables learned on all rows.
"""

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields
from decimal import ROUND_HALF_UP, Decimal

from joblib import Parallel, delayed

from . import preprocess as pp
from . import synthgen
from .data import Schema, SplitSpec, load_csv, temporal_split, write_csv
from .eda import interaction_grid, marginal_logit_curve, write_curve_csv, write_grid_csv
from .exceptions import ConfigError, PerioRiskError
from .forest import ForestConfig, StratifiedRandomForest, rf_wrapper_select, write_importance_csv
from .infosel import hybrid_filter_select, write_cmi_csv
from .logit import WeightedLogisticRegression, balanced_weights, stepwise_select
from .metrics import EvaluationReport, evaluate
from .nbkde import KDENaiveBayes, nb_wrapper_select

logger = logging.getLogger(__name__)

MODELS = ("logit", "wlogit", "nbkde", "forest")
SELECTIONS = ("all", "filter", "wrapper")
MODEL_LABELS = {
    "logit": "Logistic regression",
    "wlogit": "W. logistic regression",
    "nbkde": "Naive Bayes (kde)",
    "forest": "Random forests",
}
SELECTION_LABELS = {"all": "All", "filter": "Filtering", "wrapper": "Wrapper"}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    """One run of the protocol.

    Exactly one of ``input`` (CSV path, with ``schema``) or ``preset`` (a
    cohort generator preset) names the data. ``preprocess`` is a
    preprocessing preset name or JSON path; by default the preset that
    belongs to the cohort preset is used, if any. ``forest`` holds
    overrides for :class:`~periorisk.forest.ForestConfig`.
    """

    input: str = None
    preset: str = None
    schema: str = None
    outcome: str = None
    split: SplitSpec = None
    models: tuple = MODELS
    selection: tuple = SELECTIONS
    seed: int = 0
    out: str = "out"
    paper_faithful: bool = False
    preprocess: str = None
    forest: dict = field(default_factory=dict)
    stepwise_direction: str = "backward"
    aic_mode: str = "direct"
    nb_prior: str = "empirical"
    rf_sizes: tuple = (5, 10, 15, 20)
    rf_folds: int = 10
    n_jobs: int = 1

    def __post_init__(self):
        self.models = tuple(self.models)
        self.selection = tuple(self.selection)
        self.rf_sizes = tuple(int(k) for k in self.rf_sizes)
        self.forest = dict(self.forest)
        if isinstance(self.split, dict):
            self.split = SplitSpec.from_dict(self.split)

    def validate(self):
        if not self.models:
            raise ConfigError("at least one model is required")
        bad = [m for m in self.models if m not in MODELS]
        if bad:
            raise ConfigError(f"unknown models {bad}; choose from {list(MODELS)}")
        if not self.selection:
            raise ConfigError("at least one selection mode is required")
        bad = [s for s in self.selection if s not in SELECTIONS]
        if bad:
            raise ConfigError(f"unknown selection modes {bad}; choose from {list(SELECTIONS)}")
        if (self.input is None) == (self.preset is None):
            raise ConfigError("give exactly one of 'input' and 'preset'")
        if self.input is not None:
            if self.schema is None:
                raise ConfigError("'schema' is required with 'input'")
            if self.split is None:
                raise ConfigError("'split' is required with 'input'")
            for key in ("input", "schema"):
                if not os.path.exists(getattr(self, key)):
                    raise ConfigError(f"{key} path {getattr(self, key)!r} does not exist")
        elif self.preset not in synthgen.PRESETS:
            raise ConfigError(f"unknown cohort preset {self.preset!r}")
        # the forest seed always comes from ``seed``
        unknown = set(self.forest) - ({f.name for f in fields(ForestConfig)} - {"seed"})
        if unknown:
            raise ConfigError(f"unsupported forest settings {sorted(unknown)}")
        return self

    def forest_config(self, n_jobs=None):
        opts = dict(self.forest)
        opts["seed"] = self.seed
        if n_jobs is not None:
            opts["n_jobs"] = n_jobs
        return ForestConfig(**opts)

    def to_dict(self):
        d = asdict(self)
        d["split"] = None if self.split is None else self.split.to_dict()
        d["models"] = list(self.models)
        d["selection"] = list(self.selection)
        d["rf_sizes"] = list(self.rf_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from None


# ---------------------------------------------------------------------------
# data preparation


@dataclass
class Prepared:
    train: object
    test: object
    outcome: str
    imputer: object = None


def load_data(cfg):
    """Full dataset, outcome name and split spec for a config."""
    if cfg.preset is not None:
        cohort = synthgen.generate(synthgen.preset(cfg.preset), seed=cfg.seed)
        ds = cohort.dataset
        outcome = cfg.outcome or synthgen.OUTCOME_FOR.get(cfg.preset, ds.schema.outcome_names[0])
        split = cfg.split or SplitSpec.by_threshold("year", synthgen.SPLIT_CUTOFF.get(cfg.preset, 1))
    else:
        ds = load_csv(cfg.input, Schema.load(cfg.schema))
        outcome = cfg.outcome or ds.schema.outcome_names[0]
        split = cfg.split
    ds.outcome(outcome)
    return ds, outcome, split


def preprocess_spec(cfg):
    name = cfg.preprocess
    if name is None and cfg.preset is not None:
        name = synthgen.PREPROCESS_FOR.get(cfg.preset)
    if name is None or name == "none":
        return None
    if name in pp.PRESETS:
        return pp.preset(name)
    if os.path.exists(name):
        return pp.PreprocessSpec.load(name)
    raise ConfigError(f"preprocessing {name!r} is neither a preset nor a file")


def prepare(cfg, data=None):
    """Split, then encode and impute with tables learned on the training rows."""
    ds, outcome, split = data or load_data(cfg)
    train, test = temporal_split(ds, split)
    spec = preprocess_spec(cfg)
    if spec is None:
        return Prepared(train, test, outcome)
    train, (test,), imputer = pp.preprocess_fit_transform(train, [test], spec, cfg.paper_faithful)
    return Prepared(train, test, outcome, imputer)


# ---------------------------------------------------------------------------
# selection


def _error_record(exc):
    if isinstance(exc, PerioRiskError):
        return exc.to_dict()
    return {"error": type(exc).__name__, "message": str(exc)}


def _select_one(cfg, train, outcome, mode, model):
    """Selected variables plus a JSON-ready trace."""
    names = train.schema.names
    if mode == "all":
        return names, None
    if mode == "filter":
        selected, elbow, seed_trace = hybrid_filter_select(train, outcome)
        return selected, {"seed": seed_trace, "tail": [list(t) for t in elbow.items],
                          "elbow_index": elbow.elbow_index, "_elbow": elbow}
    if model in ("logit", "wlogit"):
        weights = balanced_weights(train.outcome(outcome)) if model == "wlogit" else None
        selected, trace = stepwise_select(train, outcome, cfg.stepwise_direction, weights,
                                          aic_mode=cfg.aic_mode)
        return selected, {"direction": cfg.stepwise_direction, "path": trace}
    if model == "nbkde":
        return nb_wrapper_select(train, outcome, cfg.seed, cfg.nb_prior)
    selected, trace = rf_wrapper_select(train, outcome, cfg.forest_config(), cfg.rf_sizes,
                                        cfg.rf_folds, cfg.seed)
    return selected, trace


def select(cfg, prep):
    """Run every selection the config needs, on the training partition only.

    Returns a dict keyed by ``(mode, model)``; filtering and "all" are shared
    across models and keyed with ``model=None``.
    """
    jobs = []
    for mode in cfg.selection:
        if mode == "wrapper":
            jobs += [(mode, m) for m in cfg.models]
        else:
            jobs.append((mode, None))
    out = {}
    for mode, model in jobs:
        try:
            selected, trace = _select_one(cfg, prep.train, prep.outcome, mode, model)
            out[(mode, model)] = {"variables": list(selected), "trace": trace, "error": None}
        except Exception as exc:  # recorded per cell, the run goes on
            logger.warning("selection %s/%s failed: %s", mode, model, exc)
            out[(mode, model)] = {"variables": None, "trace": None, "error": _error_record(exc)}
    return out


def selection_for(selections, mode, model):
    return selections[(mode, model if mode == "wrapper" else None)]


# ---------------------------------------------------------------------------
# fitting and evaluation


def make_estimator(cfg, model, train, variables):
    kinds = train.schema.kinds(variables)
    if model == "logit":
        return WeightedLogisticRegression(None, kinds, list(variables), aic_mode=cfg.aic_mode)
    if model == "wlogit":
        return WeightedLogisticRegression("balanced", kinds, list(variables), aic_mode=cfg.aic_mode)
    if model == "nbkde":
        return KDENaiveBayes(cfg.nb_prior, kinds, list(variables))
    fc = cfg.forest_config(n_jobs=1)
    return StratifiedRandomForest(fc.n_trees, fc.mtry, fc.min_node_size, fc.stratified, fc.proba,
                                  fc.seed, fc.n_jobs, kinds, list(variables))


def fit_cell(cfg, model, train, outcome, variables):
    if not variables:
        raise ConfigError("no variables selected")
    est = make_estimator(cfg, model, train, variables)
    return est.fit(train.matrix(variables), train.outcome(outcome))


def evaluate_estimator(est, ds, outcome, variables):
    p1 = est.predict_proba(ds.matrix(variables))[:, 1]
    return evaluate(ds.outcome(outcome), p1)


@dataclass
class CellResult:
    model: str
    selection: str
    variables: list = None
    in_sample: EvaluationReport = None
    out_of_sample: EvaluationReport = None
    error: dict = None

    def to_dict(self):
        return {
            "model": self.model,
            "selection": self.selection,
            "variables": self.variables,
            "in_sample": None if self.in_sample is None else self.in_sample.to_dict(),
            "out_of_sample": None if self.out_of_sample is None else self.out_of_sample.to_dict(),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d):
        ins, oos = d.get("in_sample"), d.get("out_of_sample")
        return cls(d["model"], d["selection"], d.get("variables"),
                   None if ins is None else EvaluationReport.from_dict(ins),
                   None if oos is None else EvaluationReport.from_dict(oos), d.get("error"))


def _run_cell(cfg, prep, model, mode, sel):
    t0 = time.perf_counter()
    cell = CellResult(model, mode)
    if sel["error"] is not None:
        cell.error = {"stage": "selection", **sel["error"]}
        return cell, None, time.perf_counter() - t0
    cell.variables = list(sel["variables"])
    est = None
    try:
        est = fit_cell(cfg, model, prep.train, prep.outcome, cell.variables)
        cell.in_sample = evaluate_estimator(est, prep.train, prep.outcome, cell.variables)
        cell.out_of_sample = evaluate_estimator(est, prep.test, prep.outcome, cell.variables)
    except Exception as exc:
        logger.warning("cell %s/%s failed: %s", mode, model, exc)
        cell.error = {"stage": "fit" if est is None else "evaluate", **_error_record(exc)}
    return cell, est, time.perf_counter() - t0


@dataclass
class RunReport:
    config: dict
    outcome: str
    n_train: tuple
    n_test: tuple
    cells: list
    selections: dict
    timing: dict = field(default_factory=dict)

    def cell(self, model, selection):
        for c in self.cells:
            if c.model == model and c.selection == selection:
                return c
        raise KeyError((model, selection))

    def to_dict(self):
        """Deterministic content only; timings live in :attr:`timing`."""
        return {
            "config": self.config,
            "outcome": self.outcome,
            "n_train": list(self.n_train),
            "n_test": list(self.n_test),
            "cells": [c.to_dict() for c in self.cells],
            "selections": self.selections,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(d["config"], d["outcome"], tuple(d["n_train"]), tuple(d["n_test"]),
                   [CellResult.from_dict(c) for c in d["cells"]], d.get("selections", {}))


def _counts(ds, outcome):
    y = ds.outcome(outcome)
    n1 = int(y.sum())
    return (len(y) - n1, n1)


def _public_trace(trace):
    if isinstance(trace, dict):
        return {k: v for k, v in trace.items() if not k.startswith("_")}
    return trace


def run_prepared(cfg, prep):
    """Selection, fitting and evaluation on an already prepared split."""
    timing = {}
    t0 = time.perf_counter()
    selections = select(cfg, prep)
    timing["selection"] = time.perf_counter() - t0
    jobs = [(model, mode) for mode in cfg.selection for model in cfg.models]
    args = [(cfg, prep, model, mode, selection_for(selections, mode, model)) for model, mode in jobs]
    if cfg.n_jobs == 1:
        results = [_run_cell(*a) for a in args]
    else:
        results = Parallel(n_jobs=cfg.n_jobs)(delayed(_run_cell)(*a) for a in args)
    cells = [r[0] for r in results]
    estimators = {(c.selection, c.model): r[1] for c, r in zip(cells, results)}
    for c, r in zip(cells, results):
        timing[f"{c.selection}/{c.model}"] = r[2]
    sel_public = {}
    for (mode, model), s in selections.items():
        key = mode if model is None else f"{mode}/{model}"
        sel_public[key] = {"variables": s["variables"], "trace": _public_trace(s["trace"]),
                           "error": s["error"]}
    report = RunReport(cfg.to_dict(), prep.outcome, _counts(prep.train, prep.outcome),
                       _counts(prep.test, prep.outcome), cells, sel_public, timing)
    return report, selections, estimators


def run(cfg, write=True):
    """Execute the full protocol for ``cfg`` and (optionally) write its outputs."""
    cfg.validate()
    t0 = time.perf_counter()
    prep = prepare(cfg)
    t_prep = time.perf_counter() - t0
    report, selections, estimators = run_prepared(cfg, prep)
    report.timing = {"preprocess": t_prep, **report.timing,
                     "total": time.perf_counter() - t0}
    if write:
        write_outputs(cfg.out, report, prep, selections, estimators)
    return report


# ---------------------------------------------------------------------------
# rendering and output


def fmt2(x):
    """Half-up rounding to two decimals."""
    if x is None or x != x:
        return "NA"
    return str(Decimal(repr(float(x))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def render_table(report):
    """Aligned text table grouped by selection mode."""
    if not report.cells:
        raise ConfigError("empty report")
    metric = ("AUC", "Brier(0)", "Brier(1)")
    label_w = max(len("Model"), *(len(MODEL_LABELS[c.model]) for c in report.cells))
    col_w = 9
    head1 = " " * label_w + "  " + "In-sample".center(3 * col_w) + "  " + \
        "Out-of-sample".center(3 * col_w)
    head2 = "Model".ljust(label_w) + "  " + "".join(m.rjust(col_w) for m in metric) + "  " + \
        "".join(m.rjust(col_w) for m in metric)
    lines = [head1.rstrip(), head2, "-" * len(head2)]
    for mode in SELECTIONS:
        block = [c for c in report.cells if c.selection == mode]
        if not block:
            continue
        lines.append(SELECTION_LABELS[mode])
        for c in block:
            row = MODEL_LABELS[c.model].ljust(label_w) + "  "
            if c.error is not None:
                row += f"error: {c.error.get('error')}"
            else:
                for rep in (c.in_sample, c.out_of_sample):
                    row += "".join(fmt2(v).rjust(col_w) for v in (rep.auc, rep.brier0, rep.brier1))
                    row += "  "
            lines.append(row.rstrip())
    return "\n".join(lines) + "\n"


def write_selection_csvs(out, selections):
    for (mode, model), s in selections.items():
        trace = s["trace"]
        if trace is None:
            continue
        if mode == "filter":
            write_cmi_csv(trace["_elbow"], trace["seed"], os.path.join(out, "cmi_trace.csv"))
        elif model in ("logit", "wlogit"):
            with open(os.path.join(out, f"stepwise_{model}.csv"), "w", encoding="utf-8") as fh:
                fh.write("step,move,variable,aic\n")
                for t in trace["path"]:
                    fh.write(f"{t['step']},{t['move']},{t['variable'] or ''},{t['aic']!r}\n")
        elif model == "nbkde":
            with open(os.path.join(out, "nb_wrapper.csv"), "w", encoding="utf-8") as fh:
                fh.write("step,variable,learn_score,val_score\n")
                # the first validation score belongs to the seed pair
                vals = [""] + [repr(v) for v in trace["val_path"]]
                for k, (v, ls) in enumerate(zip(trace["order"], trace["learn_path"])):
                    fh.write(f"{k},{v},{ls!r},{vals[k]}\n")
        elif model == "forest":
            with open(os.path.join(out, "rf_wrapper_cv.csv"), "w", encoding="utf-8") as fh:
                fh.write("k,mean_accuracy\n")
                for t in trace["cv"]:
                    fh.write(f"{t['k']},{t['mean_accuracy']!r}\n")


def write_outputs(out, report, prep=None, selections=None, estimators=None):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(os.path.join(out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_table(report))
    with open(os.path.join(out, "timing.json"), "w", encoding="utf-8") as fh:
        json.dump(report.timing, fh, indent=2)
    if selections is not None:
        write_selection_csvs(out, selections)
    if estimators is not None:
        for (mode, model), est in estimators.items():
            if model == "forest" and est is not None:
                write_importance_csv(est.forest_, os.path.join(out, f"importance_{mode}.csv"))
    if prep is not None and prep.imputer is not None:
        with open(os.path.join(out, "imputation_tables.json"), "w", encoding="utf-8") as fh:
            json.dump(prep.imputer.tables_to_dict(), fh, indent=2)


def write_eda(out, ds, outcome, pairs=(("BMI", "procedure"),)):
    """One logit-curve CSV per variable plus the requested interaction grids."""
    os.makedirs(out, exist_ok=True)
    written = []
    for name in ds.schema.names:
        path = os.path.join(out, f"logit_{name}.csv")
        write_curve_csv(marginal_logit_curve(ds, name, outcome), path)
        written.append(path)
    for a, b in pairs:
        if a in ds.schema.names and b in ds.schema.names:
            bins_a = {"cutpoints": pp.BMI_CLASSES.scheme.cutpoints,
                      "labels": pp.BMI_CLASSES.scheme.labels} if a == "BMI" else None
            grid = interaction_grid(ds, a, b, outcome, bins_a)
            path = os.path.join(out, f"interaction_{a}_{b}.csv")
            write_grid_csv(grid, path)
            written.append(path)
    return written


def write_prepared(out, prep):
    os.makedirs(out, exist_ok=True)
    write_csv(prep.train, os.path.join(out, "train.csv"))
    write_csv(prep.test, os.path.join(out, "test.csv"))
    prep.train.schema.dump(os.path.join(out, "schema.json"))
    if prep.imputer is not None:
        with open(os.path.join(out, "imputation_tables.json"), "w", encoding="utf-8") as fh:
            json.dump(prep.imputer.tables_to_dict(), fh, indent=2)


def selections_to_json(selections):
    out = {}
    for (mode, model), s in selections.items():
        key = mode if model is None else f"{mode}/{model}"
        out[key] = {"variables": s["variables"], "trace": _public_trace(s["trace"]),
                    "error": s["error"]}
    return out


def models_to_json(estimators):
    return {f"{mode}/{model}": (None if est is None else est.to_dict())
            for (mode, model), est in estimators.items()}


ESTIMATOR_TYPES = {"logit": WeightedLogisticRegression, "nbkde": KDENaiveBayes,
                   "forest": StratifiedRandomForest}


def models_from_json(d):
    out = {}
    for key, m in d.items():
        mode, model = key.split("/")
        out[(mode, model)] = None if m is None else ESTIMATOR_TYPES[m["model"]].from_dict(m)
    return out


def evaluate_models(prep, estimators):
    cells = []
    order = sorted(estimators, key=lambda k: (SELECTIONS.index(k[0]), MODELS.index(k[1])))
    for mode, model in order:
        est = estimators[(mode, model)]
        cell = CellResult(model, mode)
        if est is None:
            cell.error = {"stage": "fit", "error": "NotFitted", "message": "no fitted model"}
        else:
            variables = list(est.feature_names)
            cell.variables = variables
            cell.in_sample = evaluate_estimator(est, prep.train, prep.outcome, variables)
            cell.out_of_sample = evaluate_estimator(est, prep.test, prep.outcome, variables)
        cells.append(cell)
    return cells
