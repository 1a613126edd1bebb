# tools/errors.py

from typing import Any, Dict, Optional


class StatArbError(Exception):
    """
    Base error for the research pipeline.
    `details` carries structured context (tickers, matrices, residuals) for logs and API responses.
    """
    exit_code = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        self.details = details or {}
        super().__init__(message)


# ---- validation / IO (exit code 1) ----

class ConfigError(StatArbError):
    pass


class DataError(StatArbError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, line: int, details: Optional[Dict[str, Any]] = None):
        self.line = line
        super().__init__(f"line {line}: {message}", details)


class EmptyPanelError(DataError):
    pass


class InsufficientDataError(StatArbError):
    pass


class DimensionError(StatArbError):
    pass


class ShapeError(StatArbError):
    pass


class UnsupportedRegimeError(StatArbError):
    pass


# ---- numerical failures (exit code 2) ----

class NumericalError(StatArbError):
    exit_code = 2


class DegenerateSeriesError(NumericalError):
    pass


class DegenerateRegressionError(NumericalError):
    pass


class CollinearityError(NumericalError):
    pass


class NormalizationError(NumericalError):
    pass


class ConditioningError(NumericalError):
    pass


class NumericError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message: str, step: int, details: Optional[Dict[str, Any]] = None):
        self.step = step
        super().__init__(message, details)


class ConvergenceError(NumericalError):
    def __init__(self, message: str, residual: float, details: Optional[Dict[str, Any]] = None):
        self.residual = residual
        super().__init__(message, details)


class DegenerateSteadyStateError(NumericalError):
    pass


class BankruptcyError(NumericalError):
    def __init__(self, message: str, date: Any = None, details: Optional[Dict[str, Any]] = None):
        self.date = date
        super().__init__(message, details)
