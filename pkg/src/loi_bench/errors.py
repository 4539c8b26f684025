"""Exception hierarchy; each family maps to a CLI exit code."""


class LoIBenchError(Exception):
    exit_code = 1


class ConfigurationError(LoIBenchError):
    exit_code = 2


class ValidationError(LoIBenchError):
    exit_code = 3


class MapParseError(ValidationError):
    def __init__(self, message: str, row: int, col: int):
        super().__init__(f"{message} at row {row}, column {col}")
        self.row = row
        self.col = col


class TerminalStateError(ValidationError):
    pass


class InsufficientCheckpointsError(ValidationError):
    pass


class OrderingError(ValidationError):
    pass


class IncompatibleHistogramError(ValidationError):
    pass


class InfeasiblePlanError(ValidationError):
    pass


class NumericalError(LoIBenchError):
    exit_code = 4


class DegenerateInputError(NumericalError):
    pass


class UndefinedCorrelationError(NumericalError):
    pass


class DomainError(NumericalError):
    pass
