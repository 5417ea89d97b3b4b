"""Exception hierarchy.

Every failure the library raises derives from ``ModelValidityError``. The CLI
maps the three families onto exit codes: parameter/config problems are usage
errors (1), data problems are data errors (2), numerical faults are (3).
"""

from __future__ import annotations

from typing import Any, Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class ModelValidityError(Exception):
    exit_code = EXIT_USAGE


class ParameterError(ModelValidityError, ValueError):
    """A parameter set violates one of its invariants."""


class TireLoadError(ParameterError):
    """Negative normal load handed to a tire model (upstream load-transfer fault)."""


class ConfigError(ModelValidityError, ValueError):
    pass


class DataError(ModelValidityError):
    exit_code = EXIT_DATA


class TrajectoryParseError(DataError):
    def __init__(self, path: Any, message: str, line: Optional[int] = None, column: Optional[str] = None):
        self.path = str(path)
        self.line = line
        self.column = column
        self.detail = message
        where = self.path
        if line is not None:
            where += f", line {line}"
        if column is not None:
            where += f", column '{column}'"
        super().__init__(f"{where}: {message}")

    def __reduce__(self):
        return type(self), (self.path, self.detail, self.line, self.column)


class AlignmentError(DataError):
    pass


class NumericalFault(ModelValidityError, ArithmeticError):
    exit_code = EXIT_NUMERICAL


class IntegrationFault(NumericalFault):
    def __init__(self, message: str, state: Any = None):
        self.detail = message
        self.state = state
        super().__init__(f"{message} (state={state!r})" if state is not None else message)

    def __reduce__(self):
        return type(self), (self.detail, self.state)


class PlantEnvelopeError(NumericalFault):
    def __init__(self, message: str, t: float, state: Any = None):
        self.t = t
        self.state = state
        self.detail = message
        super().__init__(f"t={t:.3f}s: {message}")

    def __reduce__(self):
        return type(self), (self.detail, self.t, self.state)


class FilterFault(NumericalFault):
    def __init__(self, message: str, step: Optional[int] = None, condition: Optional[float] = None):
        self.step = step
        self.condition = condition
        self.detail = message
        parts = [message]
        if step is not None:
            parts.append(f"step={step}")
        if condition is not None:
            parts.append(f"cond(S)={condition:.3e}")
        super().__init__(", ".join(parts))

    def __reduce__(self):
        return type(self), (self.detail, self.step, self.condition)
