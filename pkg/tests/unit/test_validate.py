import os

from argparse import Namespace
from pathlib import Path

import pytest

from _pytest.tmpdir import TempPathFactory
from _pytest.capture import CaptureFixture

from nullheat import PRESET_CONTEXT
from nullheat.config import load_config
from nullheat.validate import ValidationMessage, validate, validate_config, validate_scenario


def preset(name: str) -> str:
    return os.path.join(PRESET_CONTEXT, f'{name}.json')


def write(directory: Path, content: str, name: str = 'scenario.json') -> str:
    path = directory / name
    path.write_text(content)

    return str(path)


def failed(messages: list) -> list:
    return [message.check for message in messages if not message.ok]


def test_validation_message() -> None:
    assert ValidationMessage(check='grid', ok=True).status == 'ok'
    assert ValidationMessage(check='grid', ok=False, detail='nx').status == 'FAILED'


@pytest.mark.parametrize('name', sorted(os.path.splitext(name)[0] for name in os.listdir(PRESET_CONTEXT)))
def test_presets_are_valid(name: str) -> None:
    messages, rc = validate_scenario(load_config(preset(name)))

    assert rc == 0, failed(messages)
    assert messages[0].check == 'grid'


class TestValidateScenario:
    def test_memory_checks(self) -> None:
        messages, rc = validate_scenario(load_config(preset('memory_preset')))
        checks = {message.check: message for message in messages}

        assert rc == 0
        assert 'mu_controllable' in checks
        assert 'gap_condition' in checks
        assert checks['kernel_admissible'].ok
        assert 'decay_exp kernel' in checks['kernel_admissible'].detail
        assert checks['omega_tilde_in_omega'].ok

    def test_two_phase_uses_remaining_horizon(self) -> None:
        messages, rc = validate_scenario(load_config(preset('two_phase_preset')))
        checks = {message.check: message for message in messages}

        assert rc == 0
        assert checks['t0_range'].ok
        assert checks['kernel_admissible'].ok
        assert checks['t0_grid'].ok
        assert checks['remaining_horizon'].ok
        assert checks['remaining_horizon'].detail == "T'=0.75"

    @pytest.mark.parametrize('T,nt,t0,rc,failures', [
        (1.0, 40, 0.25, 0, []),
        (2.0, 40, 0.9, 0, []),
        (1.0, 4, 0.45, 2, ['t0_grid']),
        (0.5, 40, 0.3, 2, ['t0_range', 't0_grid']),
        (4.0, 8, 1.9, 2, ['t0_grid']),
    ])
    def test_two_phase_horizons(self, T: float, nt: int, t0: float, rc: int, failures: list, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, f'''{{
  "scenario": "two_phase",
  "problem": {{"mu": 0.2, "T": {T}, "nx": 20, "nt": {nt}, "y0": "step"}},
  "weights": {{"s": 1.0}},
  "solver": {{"t0": {t0}}}
}}''')
        messages, actual = validate_scenario(load_config(path))

        assert actual == rc, failed(messages)
        assert failed(messages) == failures
        if rc == 0:
            assert {message.check: message for message in messages}['remaining_horizon'].ok

    def test_k_outside_memory_range(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, '''{
  "scenario": "memory",
  "problem": {"mu": 0.2, "nx": 20, "nt": 20},
  "weights": {"k": 2.0, "s": 1.0},
  "kernel": {"kind": "decay_exp", "amplitude": 1.0, "M0": 40000.0}
}''')
        messages, rc = validate_scenario(load_config(path))

        assert rc == 2
        assert 'k_memory_range' in failed(messages)
        assert 'k_consistency' in failed(messages)

    def test_inadmissible_kernel(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, '''{
  "scenario": "memory",
  "problem": {"mu": 0.2, "nx": 20, "nt": 20},
  "weights": {"s": 1.0},
  "kernel": {"kind": "constant", "amplitude": 0.5}
}''')
        messages, rc = validate_scenario(load_config(path))

        assert rc == 2
        assert failed(messages) == ['kernel_admissible']

    def test_supercritical_control(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, '{\n  "scenario": "control",\n  "problem": {"mu": 0.3}\n}')
        messages, rc = validate_scenario(load_config(path))

        assert rc == 2
        assert failed(messages) == ['mu_controllable']

    def test_bad_grid(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, '{\n  "scenario": "forward",\n  "problem": {"omega": [0.8, 0.3]}\n}')
        messages, rc = validate_scenario(load_config(path))

        assert rc == 2
        assert len(messages) == 1
        assert messages[0].check == 'grid'

    def test_missing_y0_file(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, '{\n  "scenario": "forward",\n  "problem": {"y0": "missing.csv"}\n}')
        messages, rc = validate_scenario(load_config(path))

        assert rc == 1
        assert failed(messages) == ['y0']

    def test_supercritical_bessel(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, '{\n  "scenario": "forward",\n  "problem": {"mu": 0.3, "y0": "bessel"}\n}')
        _, rc = validate_scenario(load_config(path))

        assert rc == 2

    def test_carleman_checks(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, '''{
  "scenario": "carleman_suite",
  "weights": {"s": 1.0},
  "verify": {"samples": 0, "window": 0.5, "omega_pp": [0.3, 0.6]}
}''')
        messages, rc = validate_scenario(load_config(path))

        assert rc == 2
        assert failed(messages) == ['window', 'samples', 'omega_pp_in_omega_prime']

    def test_spectral_grids(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('validate')
        path = write(test_context, '{\n  "scenario": "spectral_scan",\n  "verify": {"nx_list": [100, 50]}\n}')
        messages, rc = validate_scenario(load_config(path))

        assert rc == 2
        assert failed(messages) == ['nx_list']


def test_validate_config(capsys: CaptureFixture, tmp_path_factory: TempPathFactory) -> None:
    test_context = tmp_path_factory.mktemp('validate')

    assert validate_config(preset('hardy_preset')) == 0
    capture = capsys.readouterr()
    assert capture.out.startswith(f'validating {preset("hardy_preset")}\n')
    assert 'check    status' in capture.out
    assert '!!' not in capture.out

    path = write(test_context, '{\n  "scenario": "control",\n  "problem": {"mu": 0.3}\n}')
    assert validate_config(path) == 2
    capture = capsys.readouterr()
    assert '!! mu_controllable: mu=0.3 must not exceed 1/4\n' in capture.out

    broken = write(test_context, '{\n  "scenario": "forward",\n', name='broken.json')
    assert validate_config(broken) == 1
    capture = capsys.readouterr()
    assert f'!! {broken}: line 3' in capture.out

    assert validate(Namespace(config=[preset('hardy_preset'), path, broken])) == 2
