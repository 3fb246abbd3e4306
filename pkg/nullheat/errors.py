from typing import List, Optional


__all__ = [
    'DomainError',
    'ParameterError',
    'UndefinedInputError',
    'ConfigError',
    'SolverError',
    'ConvergenceError',
    'InfeasibleWeightsError',
]


class DomainError(ValueError):
    pass


class ParameterError(ValueError):
    pass


class UndefinedInputError(ValueError):
    pass


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None) -> None:
        self.line = line
        self.column = column

        if line is not None:
            location = f'line {line}' if column is None else f'line {line}, column {column}'
            message = f'{location}: {message}'

        super().__init__(message)


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message: str, residuals: Optional[List[float]] = None) -> None:
        super().__init__(message)
        self.residuals = list(residuals or [])


class InfeasibleWeightsError(SolverError):
    def __init__(self, log_span: float, max_log_span: float) -> None:
        self.log_span = log_span
        self.max_log_span = max_log_span

        super().__init__(
            f'weight dynamic range e^{log_span:.1f} exceeds the representable span e^{max_log_span:.1f} on the truncated window, '
            'use a smaller s or a coarser grid'
        )
