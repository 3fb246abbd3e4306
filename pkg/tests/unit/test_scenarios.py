import os
import math
import json

from typing import Any, Dict
from pathlib import Path

import pytest

from _pytest.tmpdir import TempPathFactory
from _pytest.capture import CaptureFixture
from pytest_mock import MockerFixture

from nullheat import PRESET_CONTEXT
from nullheat.config import Scenario, ScenarioConfig, load_config
from nullheat.errors import ConvergenceError, ParameterError
from nullheat.scenarios import RUNNERS, ScenarioOutcome, carleman_stable, run_scenario


def run_preset(name: str, directory: Path) -> Dict[str, Any]:
    config = load_config(os.path.join(PRESET_CONTEXT, f'{name}.json'))
    rc = run_scenario(config, str(directory))

    with open(directory / 'summary.json', encoding='utf-8') as fd:
        summary: Dict[str, Any] = json.load(fd)

    assert summary['rc'] == rc

    return summary


def test_runners_cover_every_scenario() -> None:
    assert set(RUNNERS.keys()) == set(Scenario)


class TestForward:
    def test_sine(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('forward')
        summary = run_preset('forward_sine', test_context)

        assert summary['status'] == 'ok'
        assert summary['scenario'] == 'forward'
        assert summary['config']['problem']['nx'] == 128
        assert summary['results']['terminal_error'] <= 1e-3
        assert summary['results']['blow_up'] is None
        assert not summary['results']['energy_violation']

        assert sorted(os.listdir(test_context)) == ['norms.dat', 'plot.gp', 'profiles.dat', 'summary.json', 'trajectory.csv']
        assert "plot 'norms.dat' using 1:2" in (test_context / 'plot.gp').read_text()

    def test_bessel(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('forward')
        summary = run_preset('forward_bessel', test_context)

        assert summary['rc'] == 0
        assert summary['results']['decay_rate_error'] <= 1e-2
        assert 'terminal_error' not in summary['results']

    def test_deterministic(self, tmp_path_factory: TempPathFactory) -> None:
        first = tmp_path_factory.mktemp('first')
        second = tmp_path_factory.mktemp('second')
        run_preset('forward_sine', first)
        run_preset('forward_sine', second)

        assert (first / 'summary.json').read_text() == (second / 'summary.json').read_text()


class TestControl:
    def test_hum(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('control')
        summary = run_preset('control_preset', test_context)
        results = summary['results']

        assert summary['rc'] == 0
        assert results['method'] == 'hum'
        assert results['null_ok']
        assert results['ratio'] <= 1e-2
        assert (test_context / 'control.csv').exists()
        assert 'picard_iterations' not in results

    def test_variational(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('control')
        summary = run_preset('variational_preset', test_context)
        results = summary['results']

        assert summary['rc'] == 0
        assert results['method'] == 'variational'
        assert results['terminal_norm'] <= 1e-6
        assert 'diagnostics.log_weight_span' in results

    def test_memory(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('memory')
        summary = run_preset('memory_preset', test_context)
        results = summary['results']

        assert summary['rc'] == 0
        assert results['converged']
        assert results['null_ok']
        assert results['diagnostics.memory_source_max'] > 0.0
        assert (test_context / 'picard.dat').exists()

        diffs = results['picard_diffs']
        assert len(diffs) >= 2
        assert all(later < earlier for earlier, later in zip(diffs, diffs[1:]))
        assert results['picard_monotone']

    def test_two_phase(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('two_phase')
        summary = run_preset('two_phase_preset', test_context)
        results = summary['results']

        assert summary['rc'] == 0
        assert results['diagnostics.t0'] == pytest.approx(0.25)
        assert results['converged']
        assert results['null_ok']
        assert results['ratio'] <= 1e-2
        assert summary['config']['problem']['y0'] == 'step'


class TestVerification:
    def test_carleman(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('carleman')
        summary = run_preset('carleman_preset', test_context)
        results = summary['results']

        assert summary['rc'] == 0
        assert results['samples'] == 20
        assert results['log_ratio_change'] == pytest.approx(results['max_log_ratio_2s'] - results['max_log_ratio'])
        assert results['stable']
        assert results['log_ratio_change'] < math.log(10.0)
        assert sorted(os.listdir(test_context)) == [
            'caccioppoli.csv',
            'carleman_interior.csv',
            'carleman_interior_2s.csv',
            'constants.md',
            'log_ratios.dat',
            'plot.gp',
            'summary.json',
        ]

        constants = (test_context / 'constants.md').read_text().splitlines()
        assert constants[0] == '| inequality | s | samples | seed | max ratio | max log ratio |'
        assert len(constants) == 5

        rows = (test_context / 'carleman_interior.csv').read_text().splitlines()
        assert rows[0].startswith('inequality,s,sample,lhs,rhs,ratio,log_lhs,log_rhs,log_ratio,')
        assert len(rows) == 21

    def test_spectral_scan(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('spectral')
        summary = run_preset('spectral_scan_preset', test_context)
        results = summary['results']

        assert results['classifications']['0'] == 'bounded'
        assert results['classifications']['0.2'] == 'bounded'
        assert results['classifications']['0.3'] == 'collapsing'
        assert results['pi_squared_gap'] <= 1e-4
        assert (test_context / 'spectral_scan.csv').read_text().splitlines()[0] == (
            'mu,lambda_nx50,lambda_nx100,lambda_nx200,lambda_nx400,classification'
        )

    def test_hardy(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('hardy')
        summary = run_preset('hardy_preset', test_context)

        assert summary['rc'] == 0
        assert summary['results']['all_ok']
        assert summary['results']['max_ratio'] < 1.0
        assert not (test_context / 'plot.gp').exists()

    def test_weights(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('weights')
        summary = run_preset('weights_preset', test_context)
        results = summary['results']

        assert summary['rc'] == 0
        assert results['passed']
        assert results['failures'] == []
        assert results['C0'] == pytest.approx(34560.0)
        assert results['gap_margin'] < 0.0
        assert results['cfrak_interval'][0] == pytest.approx(134.1429, abs=1e-3)
        assert (test_context / 'validation.csv').read_text().splitlines()[0] == 'constraint,passed,margin,detail'
        assert len((test_context / 'weights.csv').read_text().splitlines()) == 1 + 19 * 20


def test_failing_weights(tmp_path_factory: TempPathFactory) -> None:
    test_context = tmp_path_factory.mktemp('weights')
    config_file = test_context / 'weights.json'
    config_file.write_text('{\n  "scenario": "weights",\n  "weights": {"k": 2.0, "s": 1.0, "mode": "memory"}\n}')

    rc = run_scenario(load_config(str(config_file)), str(test_context / 'out'))
    summary = json.loads((test_context / 'out' / 'summary.json').read_text())

    assert rc == 2
    assert summary['status'] == 'failed'
    assert 'k_memory_range' in summary['results']['failures']


@pytest.mark.parametrize('error,rc', [
    (ParameterError('nx too small'), 2),
    (ConvergenceError('conjugate gradient stagnated'), 3),
])
def test_runner_errors(error: Exception, rc: int, mocker: MockerFixture, tmp_path_factory: TempPathFactory, capsys: CaptureFixture) -> None:
    test_context = tmp_path_factory.mktemp('errors')
    mocker.patch.dict(RUNNERS, {Scenario.HARDY_SUITE: mocker.MagicMock(side_effect=error)})

    assert run_scenario(ScenarioConfig(scenario=Scenario.HARDY_SUITE), str(test_context)) == rc

    summary = json.loads((test_context / 'summary.json').read_text())
    assert summary['status'] == 'error'
    assert summary['results'] == {'error': str(error)}
    assert capsys.readouterr().out == f'!! hardy_suite: {error}\n'


def test_outcome_defaults() -> None:
    outcome = ScenarioOutcome()

    assert outcome.rc == 0
    assert outcome.summary == {}
    assert outcome.plots == []


def test_missed_null_tolerance(tmp_path_factory: TempPathFactory) -> None:
    test_context = tmp_path_factory.mktemp('control')
    config_file = test_context / 'control.json'
    config_file.write_text('{\n  "scenario": "control",\n  "problem": {"nx": 20, "nt": 20},\n  "solver": {"epsilon": 1.0, "null_tol": 1e-12}\n}')

    rc = run_scenario(load_config(str(config_file)), str(test_context / 'out'))
    summary = json.loads((test_context / 'out' / 'summary.json').read_text())

    assert rc == 3
    assert summary['status'] == 'failed'
    assert not summary['results']['null_ok']
    assert summary['results']['ratio'] > 1e-12


@pytest.mark.parametrize('change,stable', [
    (-3121.1, True),
    (0.0, True),
    (math.log(10.0) - 1e-9, True),
    (math.log(10.0), False),
    (25.0, False),
])
def test_carleman_stable(change: float, stable: bool) -> None:
    assert carleman_stable(change) == stable
