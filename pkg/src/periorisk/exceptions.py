"""Exception types raised across periorisk.

Every error carries a machine-readable payload (``to_dict``) so the CLI can
emit it as JSON.
"""


class PerioRiskError(ValueError):
    """Base class for all periorisk errors."""

    def __init__(self, message="", **details):
        super().__init__(message)
        self.details = details

    def to_dict(self):
        return {"error": type(self).__name__, "message": str(self), **self.details}


# data
class UnparseableCell(PerioRiskError):
    def __init__(self, row, column, raw):
        super().__init__(f"cannot parse {raw!r} in column {column!r} at row {row}",
                         row=row, column=column, raw=raw)


class UnknownColumn(PerioRiskError):
    pass


class MissingOutcome(PerioRiskError):
    def __init__(self, row, column):
        super().__init__(f"outcome {column!r} missing at row {row}", row=row, column=column)


class EmptyPartition(PerioRiskError):
    pass


class UnknownOutcome(PerioRiskError):
    pass


class UnknownVariable(PerioRiskError):
    pass


class SchemaError(PerioRiskError):
    pass


# preprocess
class UnmappedLevel(PerioRiskError):
    def __init__(self, target, level):
        super().__init__(f"level {level!r} of {target!r} has no mapping", target=target, level=level)


class NoObservedValues(PerioRiskError):
    def __init__(self, target):
        super().__init__(f"{target!r} has no observed values", target=target)


# models / metrics
class OneClassOnly(PerioRiskError):
    pass


class EmptyInput(PerioRiskError):
    pass


class MissingValuePresent(PerioRiskError):
    pass


class ConstantFactor(PerioRiskError):
    pass


class DimensionMismatch(PerioRiskError):
    pass


class SingularHessian(PerioRiskError):
    pass


class TooShort(PerioRiskError):
    pass


# synthgen / pipeline
class InvalidSpec(PerioRiskError):
    pass


class UnknownPreset(PerioRiskError):
    pass


class ConfigError(PerioRiskError):
    pass
