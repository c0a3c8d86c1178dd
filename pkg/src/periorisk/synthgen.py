"""Seeded synthetic cohorts with a known logistic outcome model.

Predictors are drawn independently from their marginals. Each outcome is
Bernoulli with probability ``sigmoid(intercept + sum of terms)``, where a
term is a coefficient times a product of features (a raw value, a level
indicator or a threshold indicator). Missing cells are injected after the
outcomes are drawn, so outcomes are never Missing.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from scipy.stats import truncnorm

from .data import Dataset, Schema, Variable, VariableKind, write_csv
from .exceptions import InvalidSpec, UnknownPreset

# ---------------------------------------------------------------------------
# spec types


@dataclass(frozen=True)
class Marginal:
    """``bernoulli(p)``, ``categorical(probs)``, ``truncnormal(mean, sd, lo, hi)`` or ``uniform(lo, hi)``."""

    dist: str
    params: dict

    def validate(self, kind, name):
        p = self.params
        if self.dist == "bernoulli":
            if not kind.tag == "binary" or not 0.0 <= p["p"] <= 1.0:
                raise InvalidSpec(f"{name}: bernoulli needs a binary variable and p in [0, 1]")
        elif self.dist == "categorical":
            probs = np.asarray(p["probs"], dtype=np.float64)
            if not kind.is_discrete or probs.size != kind.n_levels:
                raise InvalidSpec(f"{name}: need one probability per level")
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
                raise InvalidSpec(f"{name}: categorical probabilities must be >= 0 and sum to 1")
        elif self.dist in ("truncnormal", "uniform"):
            if not kind.is_continuous or not p["lo"] < p["hi"]:
                raise InvalidSpec(f"{name}: continuous range needs lo < hi")
            if self.dist == "truncnormal" and not p["sd"] > 0:
                raise InvalidSpec(f"{name}: sd must be positive")
        else:
            raise InvalidSpec(f"{name}: unknown distribution {self.dist!r}")

    def _truncnorm(self):
        p = self.params
        a, b = (p["lo"] - p["mean"]) / p["sd"], (p["hi"] - p["mean"]) / p["sd"]
        return truncnorm(a, b, loc=p["mean"], scale=p["sd"])

    def mean(self):
        """Population mean (level code for categorical marginals)."""
        p = self.params
        if self.dist == "bernoulli":
            return p["p"]
        if self.dist == "categorical":
            return float(np.dot(np.arange(len(p["probs"])), p["probs"]))
        if self.dist == "uniform":
            return 0.5 * (p["lo"] + p["hi"])
        return float(self._truncnorm().mean())

    def sd(self):
        p = self.params
        if self.dist == "bernoulli":
            return float(np.sqrt(p["p"] * (1 - p["p"])))
        if self.dist == "categorical":
            k = np.arange(len(p["probs"]))
            return float(np.sqrt(np.dot(k * k, p["probs"]) - self.mean() ** 2))
        if self.dist == "uniform":
            return (p["hi"] - p["lo"]) / np.sqrt(12.0)
        return float(self._truncnorm().std())

    def draw(self, n, rng):
        p = self.params
        if self.dist == "bernoulli":
            return (rng.random(n) < p["p"]).astype(np.float64)
        if self.dist == "categorical":
            probs = np.asarray(p["probs"], dtype=np.float64)
            return rng.choice(probs.size, size=n, p=probs / probs.sum()).astype(np.float64)
        if self.dist == "uniform":
            return rng.uniform(p["lo"], p["hi"], n)
        return self._truncnorm().rvs(size=n, random_state=rng)

    def to_dict(self):
        return {"dist": self.dist, **self.params}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(d.pop("dist"), d)


def bernoulli(p):
    return Marginal("bernoulli", {"p": float(p)})


def categorical(probs):
    probs = np.asarray(probs, dtype=np.float64)
    return Marginal("categorical", {"probs": (probs / probs.sum()).tolist()})


def tnormal(mean, sd, lo, hi):
    return Marginal("truncnormal", {"mean": float(mean), "sd": float(sd), "lo": float(lo),
                                    "hi": float(hi)})


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: VariableKind
    marginal: Marginal

    def to_dict(self):
        return {"name": self.name, **self.kind.to_dict(), "marginal": self.marginal.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], VariableKind.from_dict(d), Marginal.from_dict(d["marginal"]))


@dataclass(frozen=True)
class Term:
    """``coef`` times the product of its features.

    A feature is a dict with ``var`` and at most one of ``level`` (indicator
    of that level), ``above`` (indicator of ``x > above``) or ``below``
    (indicator of ``x < below``); a bare ``var`` uses the cell value.
    """

    coef: float
    features: tuple

    def to_dict(self):
        return {"coef": self.coef, "features": [dict(f) for f in self.features]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["coef"]), tuple(dict(f) for f in d["features"]))


def linear(var, coef):
    return Term(coef, ({"var": var},))


def level(var, lv, coef):
    return Term(coef, ({"var": var, "level": str(lv)},))


@dataclass(frozen=True)
class OutcomeModel:
    name: str
    intercept: float
    terms: tuple = ()

    def to_dict(self):
        return {"name": self.name, "intercept": self.intercept,
                "terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], float(d["intercept"]), tuple(Term.from_dict(t) for t in d["terms"]))


@dataclass(frozen=True)
class CohortSpec:
    """Generative description of a cohort.

    ``periods`` assigns a ``year`` metadata column by row position as a list
    of ``(year, n_rows)`` pairs; rows are exchangeable, so this is a
    labelling only.
    """

    name: str
    n_rows: int
    variables: tuple
    outcomes: tuple
    missingness: dict = field(default_factory=dict)
    periods: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "periods", tuple(tuple(p) for p in self.periods))
        self.validate()

    @property
    def names(self):
        return [v.name for v in self.variables]

    def variable(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise InvalidSpec(f"undeclared variable {name!r}")

    def validate(self):
        if self.n_rows < 1:
            raise InvalidSpec("n_rows must be positive")
        if len(set(self.names)) != len(self.names):
            raise InvalidSpec("duplicate variable names")
        for v in self.variables:
            v.marginal.validate(v.kind, v.name)
        for o in self.outcomes:
            for t in o.terms:
                for f in t.features:
                    var = self.variable(f["var"])
                    if "level" in f and f["level"] not in var.kind.levels:
                        raise InvalidSpec(f"{o.name}: {f['var']} has no level {f['level']!r}")
        for name, rate in self.missingness.items():
            self.variable(name)
            if not 0.0 <= rate < 1.0:
                raise InvalidSpec(f"missingness rate of {name!r} must be in [0, 1)")
        if self.periods and sum(n for _, n in self.periods) != self.n_rows:
            raise InvalidSpec("period sizes must add up to n_rows")

    def schema(self):
        meta = ("year",) if self.periods else ()
        return Schema([Variable(v.name, v.kind) for v in self.variables],
                      [o.name for o in self.outcomes], meta)

    def replace(self, **changes):
        d = {"name": self.name, "n_rows": self.n_rows, "variables": self.variables,
             "outcomes": self.outcomes, "missingness": self.missingness,
             "periods": self.periods, "seed": self.seed}
        d.update(changes)
        return CohortSpec(**d)

    def to_dict(self):
        return {
            "name": self.name,
            "n_rows": self.n_rows,
            "seed": self.seed,
            "variables": [v.to_dict() for v in self.variables],
            "outcomes": [o.to_dict() for o in self.outcomes],
            "missingness": dict(self.missingness),
            "periods": [list(p) for p in self.periods],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], int(d["n_rows"]),
                   tuple(VariableSpec.from_dict(v) for v in d["variables"]),
                   tuple(OutcomeModel.from_dict(o) for o in d["outcomes"]),
                   dict(d.get("missingness", {})), tuple(tuple(p) for p in d.get("periods", ())),
                   int(d.get("seed", 0)))


# ---------------------------------------------------------------------------
# generation


def _feature(X, spec, f):
    v = spec.variable(f["var"])
    x = X[:, spec.names.index(f["var"])]
    if "level" in f:
        return (x == v.kind.levels.index(f["level"])).astype(np.float64)
    if "above" in f:
        return (x > f["above"]).astype(np.float64)
    if "below" in f:
        return (x < f["below"]).astype(np.float64)
    return x


def linear_predictor(X, spec, model):
    eta = np.full(X.shape[0], model.intercept)
    for t in model.terms:
        prod = np.ones(X.shape[0])
        for f in t.features:
            prod = prod * _feature(X, spec, f)
        eta += t.coef * prod
    return eta


@dataclass
class GeneratedCohort:
    dataset: Dataset
    probabilities: dict  # outcome -> ground-truth P(y=1) per row
    spec: CohortSpec

    def sidecar(self):
        return {"spec": self.spec.to_dict(),
                "probabilities": {k: v.tolist() for k, v in self.probabilities.items()}}

    def write(self, csv_path, sidecar_path):
        write_csv(self.dataset, csv_path)
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(), fh)


def generate(spec, seed=None):
    """Draw one cohort; ``seed`` overrides ``spec.seed``."""
    if seed is not None:
        spec = spec.replace(seed=int(seed))
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    X = np.column_stack([v.marginal.draw(n, rng) for v in spec.variables])
    outcomes, probs = {}, {}
    for o in spec.outcomes:
        p = expit(linear_predictor(X, spec, o))
        probs[o.name] = p
        outcomes[o.name] = (rng.random(n) < p).astype(np.int64)
    for name in spec.names:
        rate = spec.missingness.get(name, 0.0)
        if rate > 0:
            j = spec.names.index(name)
            X[rng.random(n) < rate, j] = np.nan
    meta = {}
    if spec.periods:
        meta["year"] = np.repeat([float(y) for y, _ in spec.periods], [k for _, k in spec.periods])
    return GeneratedCohort(Dataset(spec.schema(), X, outcomes, meta), probs, spec)


# ---------------------------------------------------------------------------
# presets

B, C = VariableKind.binary(), VariableKind.continuous()


def _nom(levels):
    return VariableKind.nominal([str(x) for x in levels])


def _ord(levels):
    return VariableKind.ordinal([str(x) for x in levels])


# pooled in-sample shares of the published cohort summary
_ERAS_BINARY = (
    ("ifalcohol", 0.526), ("gender", 0.507), ("ifpredisease", 0.314), ("ifdiabet", 0.129),
    ("ifheart", 0.105), ("ifpulmonary", 0.131), ("WHO", 0.119), ("ifsmoke", 0.228),
    ("prenutritioncond", 0.228), ("ifpresurgery", 0.524), ("ifradiotherapy", 0.076),
    ("iflaxat", 0.203), ("ifstomacounsel", 0.371), ("ifcarbohydrate", 0.871),
    ("ifanemia", 0.134), ("ifopensurgery", 0.25), ("ifothermajors", 0.207),
    ("ifbowelanas", 0.79), ("ifmuscledrug", 0.088), ("ifheartdrug", 0.734),
    ("ifgivencolloids", 0.164), ("ifconverted", 0.067), ("stomaproc", 0.293),
    ("ifcancer", 0.633),
)

_ERAS_ORDER = (
    "age", "ifalcohol", "BMI", "ASA", "gender", "ifpredisease", "ifdiabet", "ifheart",
    "ifpulmonary", "WHO", "ifsmoke", "prenutritioncond", "ifpresurgery", "ifradiotherapy",
    "iflaxat", "ifstomacounsel", "ifcarbohydrate", "ifanemia", "ifopensurgery",
    "ifothermajors", "ifbowelanas", "ifmuscledrug", "anaesthesiatype", "ifheartdrug",
    "bloodloss", "givencrystalloids", "surgerytime", "procedure", "ifgivencolloids",
    "ifconverted", "stomaproc", "ifepiorspinanaest", "subprocedure", "ifcancer",
)

# missing counts out of 767 rows in the published imputation table
_ERAS_MISSING = {
    "BMI": 63, "ifsmoke": 4, "ifalcohol": 7, "ASA": 6, "WHO": 44, "prenutritioncond": 48,
    "ifpresurgery": 3, "ifstomacounsel": 1, "ifcarbohydrate": 1, "iflaxat": 6, "ifanemia": 79,
    "bloodloss": 4, "ifothermajors": 2, "givencrystalloids": 16, "ifgivencolloids": 16,
    "anaesthesiatype": 8,
}

# intercepts solved so the population prevalence matches the targets
# (serious 0.107, any 0.328); see tests/test_synthgen.py for the check
ERAS_SERIOUS_INTERCEPT = -4.4551
ERAS_ANY_INTERCEPT = -2.7627


def _eras_variables():
    specs = {name: VariableSpec(name, B, bernoulli(p)) for name, p in _ERAS_BINARY}
    specs.update({
        "age": VariableSpec("age", C, tnormal(65.9, 12.5, 20, 92)),
        "BMI": VariableSpec("BMI", C, tnormal(26.3, 4.6, 14.03, 48.33)),
        "surgerytime": VariableSpec("surgerytime", C, tnormal(112.0, 58.0, 15, 475)),
        # raw four-class ASA; the preprocessing preset merges 1->2 and 4->3
        "ASA": VariableSpec("ASA", _nom("1234"), categorical([0.010, 0.592, 0.388, 0.010])),
        "anaesthesiatype": VariableSpec("anaesthesiatype", _nom("12"), categorical([0.241, 0.759])),
        "bloodloss": VariableSpec("bloodloss", _ord("123"), categorical([353, 128, 99])),
        "givencrystalloids": VariableSpec("givencrystalloids", _ord("123"),
                                          categorical([218, 292, 70])),
        "procedure": VariableSpec("procedure", _nom("12"), categorical([475, 105])),
        "ifepiorspinanaest": VariableSpec("ifepiorspinanaest", _nom("012"),
                                          categorical([63, 475, 42])),
        "subprocedure": VariableSpec("subprocedure", _nom("1234"),
                                     categorical([223, 93, 33, 231])),
    })
    return tuple(specs[name] for name in _ERAS_ORDER)


def _bmi_procedure(coef):
    return Term(coef, ({"var": "BMI", "above": 30.0}, {"var": "procedure", "level": "2"}))


def _eras_outcomes():
    serious = OutcomeModel("seriouscomp", ERAS_SERIOUS_INTERCEPT, (
        linear("surgerytime", 0.010), linear("WHO", 0.8), linear("ifothermajors", 0.9),
        linear("ifpulmonary", 0.5), linear("ifanemia", 0.45), linear("ifopensurgery", 0.5),
        linear("ifmuscledrug", 0.6), linear("ifgivencolloids", 0.8), linear("ifdiabet", -0.5),
        level("ifepiorspinanaest", "2", 1.0), level("bloodloss", "3", 0.4),
        _bmi_procedure(1.0),
    ))
    anyc = OutcomeModel("anycomp", ERAS_ANY_INTERCEPT, (
        linear("surgerytime", 0.008), linear("WHO", 1.2), linear("ifothermajors", 0.8),
        linear("ifpulmonary", 0.7), linear("ifopensurgery", 0.5), linear("ifpredisease", 0.3),
        linear("ifanemia", 0.4), linear("ifradiotherapy", -0.6),
        level("ASA", "3", 0.45), level("ASA", "4", 0.45), level("bloodloss", "3", 0.6),
        level("ifepiorspinanaest", "2", 0.8), _bmi_procedure(0.8),
    ))
    return serious, anyc


def eras_like():
    """34 predictors shaped like the ERAS cohort, 580 training and 187 test rows.

    Training rows span 2020 to 2022 and test rows are labelled 2023.
    """
    return CohortSpec(
        "eras-like", 767, _eras_variables(), _eras_outcomes(),
        {k: v / 767 for k, v in _ERAS_MISSING.items()},
        ((2020, 193), (2021, 193), (2022, 194), (2023, 187)), 0,
    )


def separable():
    """One variable with coefficient 10 plus two noise variables."""
    variables = (
        VariableSpec("x", C, tnormal(0.0, 1.0, -6.0, 6.0)),
        VariableSpec("noise1", C, tnormal(0.0, 1.0, -6.0, 6.0)),
        VariableSpec("noise2", B, bernoulli(0.5)),
    )
    return CohortSpec("separable", 400, variables, (OutcomeModel("y", 0.0, (linear("x", 10.0),)),),
                      periods=((0, 300), (1, 100)))


def noise_heavy():
    """Null outcome over one continuous, one binary and four 4-level nominal variables."""
    variables = [VariableSpec("c1", C, tnormal(0.0, 1.0, -6.0, 6.0)),
                 VariableSpec("b1", B, bernoulli(0.4))]
    variables += [VariableSpec(f"f{k}", _nom("abcd"), categorical([0.25] * 4)) for k in range(1, 5)]
    return CohortSpec("noise-heavy", 600, tuple(variables), (OutcomeModel("y", 0.0),),
                      periods=((0, 450), (1, 150)))


def interaction():
    """Risk raised only for obese patients with procedure 2."""
    variables = (
        VariableSpec("BMI", C, tnormal(26.3, 4.6, 14.03, 48.33)),
        VariableSpec("procedure", _nom("12"), categorical([0.5, 0.5])),
        VariableSpec("age", C, tnormal(65.9, 12.5, 20, 92)),
        VariableSpec("gender", B, bernoulli(0.5)),
    )
    model = OutcomeModel("y", -1.5, (_bmi_procedure(2.5),))
    return CohortSpec("interaction", 2000, variables, (model,), periods=((0, 1500), (1, 500)))


def three_signal():
    """Three strong signals, one moderate signal and sixteen noise variables.

    Signals: ``s1`` continuous, ``s2`` binary, ``s3`` a four-level nominal;
    ``m1`` is a weaker continuous effect.
    """
    variables = [
        VariableSpec("s1", C, tnormal(0.0, 1.0, -6.0, 6.0)),
        VariableSpec("s2", B, bernoulli(0.4)),
        VariableSpec("s3", _nom("abcd"), categorical([0.25] * 4)),
        VariableSpec("m1", C, tnormal(0.0, 1.0, -6.0, 6.0)),
    ]
    for k in range(1, 17):
        if k % 4 == 1:
            variables.append(VariableSpec(f"n{k}", _nom("abc"), categorical([1 / 3] * 3)))
        elif k % 2 == 0:
            variables.append(VariableSpec(f"n{k}", C, tnormal(0.0, 1.0, -6.0, 6.0)))
        else:
            variables.append(VariableSpec(f"n{k}", B, bernoulli(0.5)))
    model = OutcomeModel("y", -2.25, (
        linear("s1", 1.2), linear("s2", 2.5), level("s3", "c", 2.0), level("s3", "d", -2.0),
        linear("m1", 0.4),
    ))
    return CohortSpec("three-signal", 1200, tuple(variables), (model,),
                      periods=((0, 900), (1, 300)))


PRESETS = {
    "eras-like": eras_like,
    "separable": separable,
    "noise-heavy": noise_heavy,
    "interaction": interaction,
    "three-signal": three_signal,
}

# preprocessing preset that goes with each cohort preset
PREPROCESS_FOR = {"eras-like": "eras-mst"}
OUTCOME_FOR = {"eras-like": "seriouscomp"}
SPLIT_CUTOFF = {"eras-like": 2023}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise UnknownPreset(f"unknown cohort preset {name!r}", preset=name) from None
