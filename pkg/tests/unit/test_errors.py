import pytest

from nullheat.errors import ConfigError, ConvergenceError, InfeasibleWeightsError, ParameterError, SolverError


@pytest.mark.parametrize('line,column,expected', [
    (None, None, 'unknown key "foo"'),
    (4, None, 'line 4: unknown key "foo"'),
    (4, 7, 'line 4, column 7: unknown key "foo"'),
])
def test_config_error(line: int, column: int, expected: str) -> None:
    error = ConfigError('unknown key "foo"', line=line, column=column)

    assert str(error) == expected
    assert error.line == line
    assert error.column == column
    assert isinstance(error, ValueError)


def test_convergence_error() -> None:
    error = ConvergenceError('conjugate gradient stagnated', residuals=[1.0, 0.5])

    assert isinstance(error, SolverError)
    assert error.residuals == [1.0, 0.5]
    assert ConvergenceError('no history').residuals == []


def test_infeasible_weights_error() -> None:
    error = InfeasibleWeightsError(812.345, 700.0)

    assert isinstance(error, SolverError)
    assert error.log_span == 812.345
    assert error.max_log_span == 700.0
    assert str(error).startswith('weight dynamic range e^812.3 exceeds the representable span e^700.0')


def test_hierarchy() -> None:
    assert issubclass(ParameterError, ValueError)
    assert not issubclass(SolverError, ValueError)
