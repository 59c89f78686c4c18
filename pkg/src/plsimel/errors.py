"""Exception hierarchy.

Every error carries the process exit code the CLI reports for it:
2 for configuration problems, 3 for bad data, 4 for numerical failure.
"""


class PlsimError(Exception):
    exit_code = 1


class ConfigError(PlsimError, ValueError):
    exit_code = 2


class DomainError(PlsimError, ValueError):
    """An argument lies outside the region where the operation is defined."""

    exit_code = 2


class DataError(PlsimError, ValueError):
    exit_code = 3


class IngestionError(DataError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class DegeneratePointError(DataError):
    """Zero index density at an observation where a ratio is required."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NumericalError(PlsimError, ArithmeticError):
    exit_code = 4


class SingularityError(NumericalError):
    pass


class UnderdeterminedError(NumericalError):
    pass


class DegenerateVarianceError(NumericalError):
    pass


class DegenerateFitError(NumericalError):
    pass


class CollinearityError(NumericalError):
    pass
