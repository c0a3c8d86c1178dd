"""Typed tabular data for mixed perioperative variables.

A :class:`Dataset` stores predictors in one float matrix: continuous values
as-is, binary values as 0/1, ordinal and nominal values as integer level
codes into the variable's declared level list, and ``NaN`` for Missing.
Outcomes are kept apart as 0/1 integer arrays and are never missing.
Metadata columns (such as the surgery year used for the temporal split) are
carried along but never modeled.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    EmptyPartition,
    MissingOutcome,
    SchemaError,
    UnknownColumn,
    UnknownOutcome,
    UnknownVariable,
    UnparseableCell,
)

NA_VALUES = ("", "NA")
KIND_TAGS = ("continuous", "binary", "ordinal", "nominal")


@dataclass(frozen=True)
class VariableKind:
    tag: str
    levels: tuple = ()

    def __post_init__(self):
        if self.tag not in KIND_TAGS:
            raise SchemaError(f"unknown variable kind {self.tag!r}")
        levels = tuple(str(lv) for lv in self.levels)
        if self.tag == "binary":
            levels = ("0", "1")
        elif self.tag == "continuous":
            levels = ()
        else:
            if not levels:
                raise SchemaError(f"{self.tag} kind needs a non-empty level list")
            if len(set(levels)) != len(levels):
                raise SchemaError(f"duplicate levels in {levels}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def continuous(cls):
        return cls("continuous")

    @classmethod
    def binary(cls):
        return cls("binary")

    @classmethod
    def ordinal(cls, levels):
        return cls("ordinal", tuple(levels))

    @classmethod
    def nominal(cls, levels):
        return cls("nominal", tuple(levels))

    @property
    def is_continuous(self):
        return self.tag == "continuous"

    @property
    def is_discrete(self):
        return self.tag != "continuous"

    @property
    def is_factor(self):
        """Ordinal and nominal variables; expanded to dummies by the logit model."""
        return self.tag in ("ordinal", "nominal")

    @property
    def n_levels(self):
        return len(self.levels)

    def parse(self, raw):
        """Parse one CSV field into the float cell encoding; ``None`` if invalid."""
        if self.tag == "continuous":
            try:
                value = float(raw)
            except ValueError:
                return None
            return value if math.isfinite(value) else None
        if self.tag == "binary":
            try:
                value = float(raw)
            except ValueError:
                return None
            return value if value in (0.0, 1.0) else None
        try:
            return float(self.levels.index(raw))
        except ValueError:
            return None

    def format(self, value):
        if value != value:
            return "NA"
        if self.tag == "continuous":
            return format_number(value)
        if self.tag == "binary":
            return str(int(value))
        return self.levels[int(value)]

    def to_dict(self):
        out = {"kind": self.tag}
        if self.is_factor:
            out["levels"] = list(self.levels)
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d.get("levels", ())))


def format_number(value):
    """Shortest text that round-trips ``value`` exactly."""
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VariableKind


@dataclass(frozen=True)
class Schema:
    variables: tuple
    outcome_names: tuple = ()
    metadata_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "outcome_names", tuple(self.outcome_names))
        object.__setattr__(self, "metadata_names", tuple(self.metadata_names))
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("variable names must be unique")
        others = list(self.outcome_names) + list(self.metadata_names)
        if len(set(others)) != len(others) or set(others) & set(names):
            raise SchemaError("outcome/metadata names must be unique and disjoint from variables")

    @property
    def names(self):
        return [v.name for v in self.variables]

    @property
    def columns(self):
        return self.names + list(self.outcome_names) + list(self.metadata_names)

    def index(self, name):
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise UnknownVariable(f"unknown variable {name!r}", variable=name)

    def kind(self, name):
        return self.variables[self.index(name)].kind

    def kinds(self, names=None):
        if names is None:
            return [v.kind for v in self.variables]
        return [self.kind(n) for n in names]

    def with_kind(self, name, kind):
        i = self.index(name)
        variables = list(self.variables)
        variables[i] = Variable(name, kind)
        return Schema(variables, self.outcome_names, self.metadata_names)

    def to_dict(self):
        return {
            "variables": [{"name": v.name, **v.kind.to_dict()} for v in self.variables],
            "outcomes": list(self.outcome_names),
            "metadata": list(self.metadata_names),
        }

    @classmethod
    def from_dict(cls, d):
        variables = [Variable(v["name"], VariableKind.from_dict(v)) for v in d["variables"]]
        return cls(variables, d.get("outcomes", ()), d.get("metadata", ()))

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable table of predictors, outcomes and metadata.

    Parameters
    ----------
    schema : Schema
    X : array of shape (n_rows, n_variables)
        Cell encoding described in the module docstring.
    outcomes : dict of str -> array of shape (n_rows,)
    metadata : dict of str -> array of shape (n_rows,), optional
    """

    def __init__(self, schema, X, outcomes=None, metadata=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(schema.variables):
            raise SchemaError(f"matrix shape {X.shape} does not match {len(schema.variables)} variables")
        outcomes = dict(outcomes or {})
        metadata = dict(metadata or {})
        if set(outcomes) != set(schema.outcome_names):
            raise SchemaError("outcome arrays do not match schema outcome names")
        if set(metadata) != set(schema.metadata_names):
            raise SchemaError("metadata arrays do not match schema metadata names")
        n = X.shape[0]
        for name, y in outcomes.items():
            y = np.asarray(y)
            if y.shape != (n,) or not np.isin(y, (0, 1)).all():
                raise SchemaError(f"outcome {name!r} must be a 0/1 vector of length {n}")
        for j, var in enumerate(schema.variables):
            col = X[:, j]
            obs = col[~np.isnan(col)]
            if var.kind.is_discrete and obs.size:
                if not (np.all(obs == np.round(obs)) and obs.min() >= 0 and obs.max() < var.kind.n_levels):
                    raise SchemaError(f"column {var.name!r} holds values outside its levels")
        self.schema = schema
        self.X = _frozen(X)
        self.outcomes = {k: _frozen(np.asarray(v, dtype=np.int64)) for k, v in outcomes.items()}
        self.metadata = {k: _frozen(np.asarray(v, dtype=np.float64)) for k, v in metadata.items()}

    @property
    def n_rows(self):
        return self.X.shape[0]

    def __len__(self):
        return self.n_rows

    def __repr__(self):
        return f"Dataset(n_rows={self.n_rows}, n_variables={self.X.shape[1]})"

    def column(self, name):
        if name in self.metadata:
            return self.metadata[name]
        return self.X[:, self.schema.index(name)]

    def outcome(self, name):
        try:
            return self.outcomes[name]
        except KeyError:
            raise UnknownOutcome(f"unknown outcome {name!r}", outcome=name) from None

    def matrix(self, names=None):
        if names is None:
            return self.X
        return self.X[:, [self.schema.index(n) for n in names]]

    def cell(self, row, name):
        """Decoded cell: float for numbers, level label for factors, None if Missing."""
        kind = self.schema.kind(name)
        value = self.column(name)[row]
        if value != value:
            return None
        if kind.is_factor:
            return kind.levels[int(value)]
        return float(value)

    def missing_count(self, name=None):
        if name is None:
            return int(np.isnan(self.X).sum())
        return int(np.isnan(self.column(name)).sum())

    def take(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(
            self.schema,
            self.X[rows],
            {k: v[rows] for k, v in self.outcomes.items()},
            {k: v[rows] for k, v in self.metadata.items()},
        )

    def with_columns(self, schema, X):
        return Dataset(schema, X, self.outcomes, self.metadata)

    def equals(self, other):
        return (
            self.schema == other.schema
            and np.array_equal(self.X, other.X, equal_nan=True)
            and all(np.array_equal(self.outcomes[k], other.outcomes[k]) for k in self.outcomes)
            and all(np.array_equal(self.metadata[k], other.metadata[k]) for k in self.metadata)
        )


def load_csv(path, schema, na_values=NA_VALUES):
    """Read a CSV file into a :class:`Dataset`, binding columns by name."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UnknownColumn("empty file: no header row") from None
        header = [h.strip() for h in header]
        expected = schema.columns
        if sorted(header) != sorted(expected) or len(set(header)) != len(header):
            unknown = sorted(set(header) ^ set(expected))
            raise UnknownColumn(f"header does not match schema: {unknown}", columns=unknown)
        pos = {name: i for i, name in enumerate(header)}
        rows = list(reader)

    n, d = len(rows), len(schema.variables)
    X = np.empty((n, d))
    outcomes = {name: np.empty(n, dtype=np.int64) for name in schema.outcome_names}
    metadata = {name: np.empty(n) for name in schema.metadata_names}
    binary = VariableKind.binary()
    continuous = VariableKind.continuous()
    for r, fields in enumerate(rows):
        if len(fields) != len(header):
            raise UnparseableCell(r, None, ",".join(fields))
        for j, var in enumerate(schema.variables):
            raw = fields[pos[var.name]]
            if raw in na_values:
                X[r, j] = np.nan
                continue
            value = var.kind.parse(raw)
            if value is None:
                raise UnparseableCell(r, var.name, raw)
            X[r, j] = value
        for name in schema.outcome_names:
            raw = fields[pos[name]]
            if raw in na_values:
                raise MissingOutcome(r, name)
            value = binary.parse(raw)
            if value is None:
                raise UnparseableCell(r, name, raw)
            outcomes[name][r] = int(value)
        for name in schema.metadata_names:
            raw = fields[pos[name]]
            value = continuous.parse(raw)
            if value is None:
                raise UnparseableCell(r, name, raw)
            metadata[name][r] = value
    return Dataset(schema, X, outcomes, metadata)


def write_csv(ds, path):
    schema = ds.schema
    kinds = schema.kinds()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(schema.columns)
        for r in range(ds.n_rows):
            row = [k.format(v) for k, v in zip(kinds, ds.X[r])]
            row += [str(int(ds.outcomes[name][r])) for name in schema.outcome_names]
            row += [format_number(ds.metadata[name][r]) for name in schema.metadata_names]
            writer.writerow(row)


@dataclass(frozen=True)
class SplitSpec:
    """Either rows with ``column < cutoff`` form the training set, or the
    explicit ``train_rows`` do."""

    column: str = None
    cutoff: float = None
    train_rows: tuple = field(default=None)

    def __post_init__(self):
        by_threshold = self.column is not None and self.cutoff is not None
        if by_threshold == (self.train_rows is not None):
            raise SchemaError("SplitSpec needs exactly one of (column, cutoff) or train_rows")
        if self.train_rows is not None:
            object.__setattr__(self, "train_rows", tuple(int(i) for i in self.train_rows))

    @classmethod
    def by_threshold(cls, column, cutoff):
        return cls(column=column, cutoff=float(cutoff))

    @classmethod
    def by_rows(cls, rows):
        return cls(train_rows=tuple(rows))

    @property
    def mode(self):
        return "threshold" if self.train_rows is None else "rows"

    def to_dict(self):
        if self.mode == "threshold":
            return {"column": self.column, "cutoff": self.cutoff}
        return {"train_rows": list(self.train_rows)}

    @classmethod
    def from_dict(cls, d):
        if "train_rows" in d:
            return cls.by_rows(d["train_rows"])
        return cls.by_threshold(d["column"], d["cutoff"])


def split_mask(ds, spec):
    """Boolean mask of training rows."""
    if spec.mode == "threshold":
        return ds.column(spec.column) < spec.cutoff
    rows = np.asarray(spec.train_rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= ds.n_rows):
        raise SchemaError("train_rows index out of range")
    mask = np.zeros(ds.n_rows, dtype=bool)
    mask[rows] = True
    return mask


def temporal_split(ds, spec):
    """Split into (train, test); row order is preserved within each side."""
    mask = split_mask(ds, spec)
    train_idx = np.flatnonzero(mask)
    test_idx = np.flatnonzero(~mask)
    if train_idx.size == 0 or test_idx.size == 0:
        raise EmptyPartition(f"split yields {train_idx.size} train / {test_idx.size} test rows")
    return ds.take(train_idx), ds.take(test_idx)


def class_counts(ds, outcome):
    y = ds.outcome(outcome)
    n1 = int(y.sum())
    return len(y) - n1, n1
