"""Level encodings and conditional-table imputation.

Imputation fills each target from a table of conditional means (continuous
targets) or modes (discrete targets) over the cells of its conditioning
variables. Continuous conditioners enter through a derived discretization.
Entries are processed in plan order, so later targets may condition on
columns imputed earlier.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import Dataset, VariableKind
from .eda import cut_codes
from .exceptions import InvalidSpec, NoObservedValues, SchemaError, UnknownPreset, UnmappedLevel

# ---------------------------------------------------------------------------
# encoding rules


@dataclass(frozen=True)
class MergeLevels:
    """Relabel factor levels; ``mapping`` sends every old label to a new one."""

    mapping: dict
    levels: tuple = None  # new level order; default: first appearance in mapping
    kind: str = None  # "ordinal" / "nominal" / "binary"; default keeps ordinal, else nominal

    def new_levels(self):
        if self.levels is not None:
            return tuple(self.levels)
        return tuple(dict.fromkeys(str(v) for v in self.mapping.values()))

    def to_dict(self):
        return {"type": "merge", "mapping": dict(self.mapping), "levels": self.levels,
                "kind": self.kind}


@dataclass(frozen=True)
class Binarize:
    """Levels in ``positive`` become 1, all others 0."""

    positive: tuple

    def to_dict(self):
        return {"type": "binarize", "positive": list(self.positive)}


@dataclass(frozen=True)
class BinsByCutpoints:
    """Ordinal bins of a continuous variable.

    A value equal to a cutpoint falls in the upper bin, so bin ``k`` is
    ``[cut[k-1], cut[k])``.
    """

    cutpoints: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "cutpoints", tuple(float(c) for c in self.cutpoints))
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        c = self.cutpoints
        if any(b <= a for a, b in zip(c[:-1], c[1:])):
            raise InvalidSpec("cutpoints must be strictly increasing")
        if len(self.labels) != len(c) + 1:
            raise InvalidSpec("need exactly one label more than cutpoints")

    def codes(self, x):
        return cut_codes(x, self.cutpoints)

    def label_of(self, value):
        return self.labels[int(self.codes(np.array([value]))[0])]

    def kind(self):
        return VariableKind.ordinal(self.labels)

    def to_dict(self):
        return {"type": "bins", "cutpoints": list(self.cutpoints), "labels": list(self.labels)}


def rule_from_dict(d):
    t = d["type"]
    if t == "merge":
        levels = tuple(d["levels"]) if d.get("levels") is not None else None
        return MergeLevels(dict(d["mapping"]), levels, d.get("kind"))
    if t == "binarize":
        return Binarize(tuple(d["positive"]))
    if t == "bins":
        return BinsByCutpoints(d["cutpoints"], d["labels"])
    raise InvalidSpec(f"unknown rule type {t!r}")


@dataclass(frozen=True)
class EncodingRule:
    target: str
    rule: object

    def to_dict(self):
        return {"target": self.target, **self.rule.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["target"], rule_from_dict(d))


def _merge(col, kind, rule, target):
    if not kind.is_discrete:
        raise SchemaError(f"cannot merge levels of continuous {target!r}")
    mapping = {str(k): str(v) for k, v in rule.mapping.items()}
    new = rule.new_levels()
    lookup = np.empty(kind.n_levels, dtype=np.float64)
    for code, label in enumerate(kind.levels):
        if label not in mapping:
            raise UnmappedLevel(target, label)
        if mapping[label] not in new:
            raise UnmappedLevel(target, mapping[label])
        lookup[code] = new.index(mapping[label])
    out = np.full(col.shape, np.nan)
    obs = ~np.isnan(col)
    out[obs] = lookup[col[obs].astype(np.int64)]
    tag = rule.kind or ("ordinal" if kind.tag == "ordinal" else "nominal")
    if tag == "binary":
        if new != ("0", "1"):
            raise InvalidSpec("binary merge must produce levels ('0', '1')")
        return out, VariableKind.binary()
    return out, VariableKind(tag, new)


def _binarize(col, kind, rule, target):
    if not kind.is_discrete:
        raise SchemaError(f"cannot binarize continuous {target!r}")
    positive = [str(p) for p in rule.positive]
    for p in positive:
        if p not in kind.levels:
            raise UnmappedLevel(target, p)
    flags = np.array([lv in positive for lv in kind.levels], dtype=np.float64)
    out = np.full(col.shape, np.nan)
    obs = ~np.isnan(col)
    out[obs] = flags[col[obs].astype(np.int64)]
    return out, VariableKind.binary()


def apply_encodings(ds, rules):
    """Apply encoding rules in order; Missing cells stay Missing."""
    schema, X = ds.schema, np.array(ds.X)
    for r in rules:
        j = schema.index(r.target)
        kind = schema.kind(r.target)
        if isinstance(r.rule, MergeLevels):
            X[:, j], new_kind = _merge(X[:, j], kind, r.rule, r.target)
        elif isinstance(r.rule, Binarize):
            X[:, j], new_kind = _binarize(X[:, j], kind, r.rule, r.target)
        elif isinstance(r.rule, BinsByCutpoints):
            if not kind.is_continuous:
                raise SchemaError(f"cutpoint bins need a continuous column, {r.target!r} is {kind.tag}")
            X[:, j], new_kind = r.rule.codes(X[:, j]), r.rule.kind()
        else:
            raise InvalidSpec(f"unsupported rule {r.rule!r}")
        schema = schema.with_kind(r.target, new_kind)
    return ds.with_columns(schema, X)


# ---------------------------------------------------------------------------
# imputation


@dataclass(frozen=True)
class DerivedDiscretization:
    source: str
    scheme: BinsByCutpoints
    name: str = None

    @property
    def label(self):
        return self.name or f"{self.source}~bins"

    def to_dict(self):
        return {"source": self.source, "name": self.label, **self.scheme.to_dict()}


def _conditioner_from(d):
    if isinstance(d, str):
        return d
    return DerivedDiscretization(d["source"], BinsByCutpoints(d["cutpoints"], d["labels"]),
                                 d.get("name"))


def _conditioner_to(c):
    return c if isinstance(c, str) else c.to_dict()


def _conditioner_source(c):
    return c if isinstance(c, str) else c.source


MEAN, MODE = "mean", "mode"


@dataclass(frozen=True)
class ImputationEntry:
    target: str
    conditioners: tuple
    statistic: str = None  # None picks mean/mode from the target's kind

    def __post_init__(self):
        object.__setattr__(self, "conditioners", tuple(self.conditioners))
        if self.target in [_conditioner_source(c) for c in self.conditioners]:
            raise InvalidSpec(f"{self.target!r} cannot condition on itself")
        if self.statistic not in (None, MEAN, MODE):
            raise InvalidSpec(f"unknown statistic {self.statistic!r}")

    def resolved_statistic(self, kind):
        stat = self.statistic or (MEAN if kind.is_continuous else MODE)
        if (stat == MEAN) != kind.is_continuous:
            raise InvalidSpec(f"{self.target!r}: continuous targets use the mean, discrete the mode")
        return stat

    def to_dict(self):
        return {"target": self.target, "conditioners": [_conditioner_to(c) for c in self.conditioners],
                "statistic": self.statistic}

    @classmethod
    def from_dict(cls, d):
        return cls(d["target"], tuple(_conditioner_from(c) for c in d["conditioners"]),
                   d.get("statistic"))


@dataclass(frozen=True)
class ImputationPlan:
    entries: tuple

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def targets(self):
        return [e.target for e in self.entries]

    def to_dict(self):
        return [e.to_dict() for e in self.entries]

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(ImputationEntry.from_dict(e) for e in d))


def conditioner_codes(ds, conditioner):
    """Integer-valued codes (NaN for Missing) of a conditioner column."""
    if isinstance(conditioner, str):
        kind = ds.schema.kind(conditioner)
        if kind.is_continuous:
            raise SchemaError(f"conditioner {conditioner!r} is continuous; discretize it first")
        return ds.column(conditioner)
    src = ds.schema.kind(conditioner.source)
    if not src.is_continuous:
        raise SchemaError(f"derived discretization of non-continuous {conditioner.source!r}")
    return conditioner.scheme.codes(ds.column(conditioner.source))


def _cell_keys(ds, conditioners):
    cols = [conditioner_codes(ds, c) for c in conditioners]
    if not cols:
        return np.ones(ds.n_rows, dtype=bool), [()] * ds.n_rows
    Z = np.column_stack(cols)
    complete = ~np.isnan(Z).any(axis=1)
    keys = [tuple(int(v) for v in row) if ok else None for row, ok in zip(Z, complete)]
    return complete, keys


def _mode(codes, n_levels):
    counts = np.bincount(codes.astype(np.int64), minlength=n_levels)
    return float(np.argmax(counts))  # argmax returns the lowest code among ties


@dataclass
class ConditionalTable:
    target: str
    conditioners: tuple
    statistic: str
    cells: dict = field(default_factory=dict)  # cell key -> value
    fallback: float = np.nan
    counts: dict = field(default_factory=dict)

    def lookup(self, key):
        if key is None:
            return self.fallback
        return self.cells.get(key, self.fallback)

    def to_dict(self):
        return {
            "target": self.target,
            "conditioners": [_conditioner_to(c) for c in self.conditioners],
            "statistic": self.statistic,
            "fallback": self.fallback,
            "cells": [{"key": list(k), "value": v, "n": self.counts[k]}
                      for k, v in sorted(self.cells.items())],
        }

    @classmethod
    def from_dict(cls, d):
        cells = {tuple(c["key"]): c["value"] for c in d["cells"]}
        counts = {tuple(c["key"]): c["n"] for c in d["cells"]}
        return cls(d["target"], tuple(_conditioner_from(c) for c in d["conditioners"]),
                   d["statistic"], cells, d["fallback"], counts)


def build_conditional_table(ds, target, conditioners, statistic=None):
    """Per-cell conditional mean or mode of ``target``, plus a marginal fallback."""
    entry = ImputationEntry(target, tuple(conditioners), statistic)
    kind = ds.schema.kind(target)
    stat = entry.resolved_statistic(kind)
    y = ds.column(target)
    observed = ~np.isnan(y)
    if not observed.any():
        raise NoObservedValues(target)

    def summarize(values):
        return float(np.mean(values)) if stat == MEAN else _mode(values, kind.n_levels)

    complete, keys = _cell_keys(ds, entry.conditioners)
    groups = {}
    for i in np.flatnonzero(observed & complete):
        groups.setdefault(keys[i], []).append(i)
    cells = {k: summarize(y[rows]) for k, rows in groups.items()}
    counts = {k: len(rows) for k, rows in groups.items()}
    return ConditionalTable(target, entry.conditioners, stat, cells, summarize(y[observed]), counts)


def fill_from_table(ds, table):
    """Fill Missing cells of the table's target; observed cells are untouched."""
    j = ds.schema.index(table.target)
    col = ds.X[:, j]
    missing = np.isnan(col)
    if not missing.any():
        return ds
    _, keys = _cell_keys(ds, table.conditioners)
    X = np.array(ds.X)
    for i in np.flatnonzero(missing):
        X[i, j] = table.lookup(keys[i])
    return ds.with_columns(ds.schema, X)


def impute(ds, plan):
    """Impute every plan target in order, learning tables from ``ds`` itself."""
    return ConditionalTableImputer(plan).fit(ds).transform(ds)


class ConditionalTableImputer(TransformerMixin, BaseEstimator):
    """Learn conditional tables on one dataset and apply them to others.

    Tables are learned in plan order on the progressively imputed fitting
    data, so a later target conditioning on an earlier one sees it complete.

    Parameters
    ----------
    plan : ImputationPlan
    """

    def __init__(self, plan=None):
        self.plan = plan

    def fit(self, ds, y=None):
        if not isinstance(ds, Dataset):
            raise TypeError("ConditionalTableImputer works on Dataset objects")
        tables = []
        cur = ds
        for entry in self.plan.entries:
            table = build_conditional_table(cur, entry.target, entry.conditioners, entry.statistic)
            cur = fill_from_table(cur, table)
            tables.append(table)
        self.tables_ = tables
        return self

    def transform(self, ds):
        check_is_fitted(self, "tables_")
        for table in self.tables_:
            ds = fill_from_table(ds, table)
        return ds

    def tables_to_dict(self):
        check_is_fitted(self, "tables_")
        return [t.to_dict() for t in self.tables_]


# ---------------------------------------------------------------------------
# JSON documents and presets


@dataclass(frozen=True)
class PreprocessSpec:
    encodings: tuple = ()
    plan: ImputationPlan = ImputationPlan(())

    def to_dict(self):
        return {"encodings": [r.to_dict() for r in self.encodings],
                "imputation": self.plan.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(EncodingRule.from_dict(r) for r in d.get("encodings", [])),
                   ImputationPlan.from_dict(d.get("imputation", [])))

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


AGE_DECADES = DerivedDiscretization(
    "age",
    BinsByCutpoints((20, 30, 40, 50, 60, 70, 80, 90),
                    ("<20", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80-89", "90+")),
    "age_decade",
)
BMI_CLASSES = DerivedDiscretization(
    "BMI",
    BinsByCutpoints((18.5, 25.0, 30.0), ("Underweight", "Normal", "Overweight", "Obese")),
    "BMI_class",
)
SURGERY_LENGTH = DerivedDiscretization(
    "surgerytime",
    BinsByCutpoints((90.0, 150.0), ("Short", "Medium", "Long")),
    "surgerytime_class",
)


def eras_mst():
    """Encoding and imputation steps of the ERAS cohort at MST.

    ASA classes 1 and 4 are merged into 2 and 3. Imputation follows the
    published table order. Two conditioners of that table are absent from the
    34 analysis variables and are handled as follows:

    * ``ifanemia`` was conditioned on ``finaldiagnosis``; ``ifcancer`` is used
      in its place.
    * ``anaesthesiatype`` was conditioned on ``ifnerveorlocalanaest``; that
      conditioner is dropped.
    """
    age, bmi, st = AGE_DECADES, BMI_CLASSES, SURGERY_LENGTH
    encodings = (
        EncodingRule("ASA", MergeLevels({"1": "12", "2": "12", "3": "34", "4": "34"},
                                        ("12", "34"), "nominal")),
    )
    pre = (age, bmi, "ASA", "ifpredisease")
    op = (st, "procedure")
    entries = (
        ImputationEntry("BMI", (age, "gender", "ifdiabet")),
        ImputationEntry("ifsmoke", (age, bmi, "gender")),
        ImputationEntry("ifalcohol", (age, bmi, "gender")),
        ImputationEntry("ASA", (age, bmi)),
        ImputationEntry("WHO", (age, bmi, "gender")),
        ImputationEntry("prenutritioncond", (age, bmi, "ASA", "gender")),
        ImputationEntry("ifpresurgery", pre),
        ImputationEntry("ifstomacounsel", pre),
        ImputationEntry("ifcarbohydrate", pre),
        ImputationEntry("iflaxat", pre),
        ImputationEntry("ifanemia", (age, bmi, "ASA", "ifcancer")),
        ImputationEntry("bloodloss", op),
        ImputationEntry("ifothermajors", ("bloodloss",) + op),
        ImputationEntry("givencrystalloids", ("bloodloss",) + op),
        ImputationEntry("ifgivencolloids", ("bloodloss",) + op),
        ImputationEntry("anaesthesiatype", ("ifepiorspinanaest", "procedure")),
    )
    return PreprocessSpec(encodings, ImputationPlan(entries))


PRESETS = {"eras-mst": eras_mst}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise UnknownPreset(f"unknown preprocessing preset {name!r}", preset=name) from None


def preprocess_fit_transform(train, others, spec, paper_faithful=False):
    """Encode all partitions, learn imputation tables, impute all partitions.

    Tables come from ``train`` alone unless ``paper_faithful`` is set, in
    which case they are learned on the union of all partitions.
    """
    train = apply_encodings(train, spec.encodings)
    others = [apply_encodings(ds, spec.encodings) for ds in others]
    if paper_faithful:
        full = concat([train] + others)
        imputer = ConditionalTableImputer(spec.plan).fit(full)
    else:
        imputer = ConditionalTableImputer(spec.plan).fit(train)
    return imputer.transform(train), [imputer.transform(ds) for ds in others], imputer


def concat(datasets):
    first = datasets[0]
    return Dataset(
        first.schema,
        np.vstack([d.X for d in datasets]),
        {k: np.concatenate([d.outcomes[k] for d in datasets]) for k in first.outcomes},
        {k: np.concatenate([d.metadata[k] for d in datasets]) for k in first.metadata},
    )
