import os

from argparse import Namespace

import pytest

from _pytest.tmpdir import TempPathFactory
from _pytest.capture import CaptureFixture
from pytest_mock import MockerFixture

from nullheat import PRESET_CONTEXT
from nullheat.config import Scenario, ScenarioConfig, OutputBlock, load_config
from nullheat.run import output_directory, run, run_config


def preset(name: str) -> str:
    return os.path.join(PRESET_CONTEXT, f'{name}.json')


def test_output_directory(mocker: MockerFixture) -> None:
    mocker.patch('nullheat.OUTPUT_CONTEXT', '/var/tmp/nullheat-output')
    config = load_config(preset('hardy_preset'))

    assert output_directory(config, '/tmp/out') == '/tmp/out/hardy_preset'
    assert output_directory(config, None) == '/var/tmp/nullheat-output/hardy_preset'

    configured = ScenarioConfig(scenario=Scenario.HARDY_SUITE, output=OutputBlock(directory='/srv/results', prefix='hardy'))
    assert output_directory(configured, None) == '/srv/results/hardy'
    assert output_directory(configured, '/tmp/out') == '/tmp/out/hardy'


def test_run_config(capsys: CaptureFixture, tmp_path_factory: TempPathFactory) -> None:
    test_context = tmp_path_factory.mktemp('run')

    assert run_config(preset('hardy_preset'), str(test_context)) == 0
    capture = capsys.readouterr()
    assert capture.out == (
        'running hardy_suite scenario hardy_preset\n'
        f'hardy_preset finished with rc=0, artifacts in {test_context / "hardy_preset"}\n'
        '├── hardy.csv (12 rows)\n'
        '└── summary.json\n'
    )

    missing = str(test_context / 'missing.json')
    assert run_config(missing, str(test_context)) == 1
    assert capsys.readouterr().out == f'!! {missing}: {missing} does not exist\n'

    invalid = test_context / 'invalid.json'
    invalid.write_text('{\n  "scenario": "control",\n  "problem": {"mu": 0.3}\n}')
    assert run_config(str(invalid), str(test_context)) == 2
    assert capsys.readouterr().out == '!! invalid: mu_controllable: mu=0.3 must not exceed 1/4\n'
    assert not (test_context / 'invalid').exists()


def test_run(mocker: MockerFixture, tmp_path_factory: TempPathFactory) -> None:
    test_context = tmp_path_factory.mktemp('run')

    with pytest.raises(ValueError) as ve:
        run(Namespace(jobs=0, out=None, config=[]))
    assert str(ve.value) == '--jobs must be at least 1, got 0'

    run_config_mock = mocker.patch('nullheat.run.run_config', side_effect=[0, 2])
    assert run(Namespace(jobs=1, out=str(test_context), config=['a.json', 'b.json'])) == 2
    assert run_config_mock.call_count == 2
    args, _ = run_config_mock.call_args_list[0]
    assert args == ('a.json', str(test_context))

    run_pool_mock = mocker.patch('nullheat.run._run_pool', return_value=[3, 0])
    assert run(Namespace(jobs=4, out=None, config=['a.json', 'b.json'])) == 3
    run_pool_mock.assert_called_once_with([('a.json', None), ('b.json', None)], 2)
