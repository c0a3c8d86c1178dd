import numpy as np
import pytest

from periorisk.data import Dataset, Schema, Variable, VariableKind

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Collects one PASS/FAIL line per acceptance criterion for the summary."""

    def log(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(columns, kinds, outcome=None, metadata=None, outcome_name="y"):
    """Small Dataset from a dict of columns; kinds maps name -> VariableKind."""
    names = list(columns)
    schema = Schema(tuple(Variable(n, kinds[n]) for n in names),
                    (outcome_name,) if outcome is not None else (),
                    tuple(metadata or ()))
    X = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    outcomes = {outcome_name: np.asarray(outcome)} if outcome is not None else {}
    return Dataset(schema, X, outcomes, metadata)


@pytest.fixture
def mixed_dataset(rng):
    n = 200
    age = rng.normal(60, 10, n)
    smoke = rng.integers(0, 2, n)
    asa = rng.integers(0, 3, n)
    eta = -1.0 + 0.05 * (age - 60) + 0.8 * smoke
    y = (rng.random(n) < 1 / (1 + np.exp(-eta))).astype(int)
    kinds = {"age": VariableKind.continuous(), "ifsmoke": VariableKind.binary(),
             "ASA": VariableKind.ordinal(["1", "2", "3"])}
    return make_dataset({"age": age, "ifsmoke": smoke, "ASA": asa}, kinds, y)
