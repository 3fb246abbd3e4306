import sys

from typing import Dict, Optional, cast
from argparse import ArgumentParser as CoreArgumentParser

import pytest

from _pytest.capture import CaptureFixture
from _pytest.tmpdir import TempPathFactory
from pytest_mock import MockerFixture

from nullheat.__main__ import _create_parser, _parse_arguments, main


def test__create_parser() -> None:
    parser = _create_parser()

    assert parser.prog == 'nullheat'
    assert parser.description is not None
    assert 'null controllability' in parser.description
    assert parser._subparsers is not None
    assert len(parser._subparsers._group_actions) == 1
    assert sorted([option_string for action in parser._actions for option_string in action.option_strings]) == sorted([
        '-h', '--help',
        '--version',
        '-v', '--verbose',
    ])
    assert sorted([action.dest for action in parser._actions if len(action.option_strings) == 0]) == ['command']
    subparser = parser._subparsers._group_actions[0]
    assert subparser is not None
    assert subparser.choices is not None
    choices = cast(Dict[str, Optional[CoreArgumentParser]], subparser.choices)
    assert list(choices.keys()) == ['run', 'validate', 'presets']

    run_parser = choices.get('run', None)
    assert run_parser is not None
    assert run_parser._subparsers is None
    assert getattr(run_parser, 'prog', None) == 'nullheat run'
    assert sorted([option_string for action in run_parser._actions for option_string in action.option_strings]) == sorted([
        '-h', '--help',
        '-o', '--out',
        '-j', '--jobs',
    ])
    assert sorted([action.dest for action in run_parser._actions if len(action.option_strings) == 0]) == ['config']

    validate_parser = choices.get('validate', None)
    assert validate_parser is not None
    assert validate_parser._subparsers is None
    assert getattr(validate_parser, 'prog', None) == 'nullheat validate'
    assert sorted([option_string for action in validate_parser._actions for option_string in action.option_strings]) == sorted([
        '-h', '--help',
    ])

    presets_parser = choices.get('presets', None)
    assert presets_parser is not None
    assert presets_parser._subparsers is not None
    assert getattr(presets_parser, 'prog', None) == 'nullheat presets'
    presets_subparser = presets_parser._subparsers._group_actions[0]
    assert list(cast(Dict[str, Optional[CoreArgumentParser]], presets_subparser.choices).keys()) == ['list', 'show']


def test__parse_arguments(capsys: CaptureFixture, mocker: MockerFixture) -> None:
    sys.argv = ['nullheat']

    with pytest.raises(SystemExit) as se:
        _parse_arguments()
    assert se.type == SystemExit
    assert se.value.code == 2
    capture = capsys.readouterr()
    assert capture.out == ''
    assert 'usage: nullheat' in capture.err
    assert 'nullheat: error: no command specified' in capture.err

    sys.argv = ['nullheat', '--version']
    mocker.patch('nullheat.__main__.__version__', '0.0.0')

    with pytest.raises(SystemExit) as se:
        _parse_arguments()
    assert se.value.code == 0
    capture = capsys.readouterr()
    assert capture.err == ''
    assert capture.out == 'nullheat (development)\n'

    mocker.patch('nullheat.__main__.__version__', '1.4.0')

    with pytest.raises(SystemExit) as se:
        _parse_arguments()
    assert se.value.code == 0
    assert capsys.readouterr().out == 'nullheat 1.4.0\n'

    sys.argv = ['nullheat', 'presets']

    with pytest.raises(SystemExit) as se:
        _parse_arguments()
    assert se.value.code == 2
    capture = capsys.readouterr()
    assert capture.out == ''
    assert capture.err == 'nullheat: error: no subcommand for presets specified\n'

    sys.argv = ['nullheat', 'run', '-j', '2', '--out', '/tmp/out', 'hardy_preset', 'missing.json']
    arguments = _parse_arguments()
    assert arguments.command == 'run'
    assert arguments.jobs == 2
    assert arguments.out == '/tmp/out'
    assert arguments.config[0].endswith('hardy_preset.json')
    assert arguments.config[1] == 'missing.json'
    assert not arguments.verbose


def test_main(capsys: CaptureFixture, mocker: MockerFixture, tmp_path_factory: TempPathFactory) -> None:
    test_context = tmp_path_factory.mktemp('main')

    sys.argv = ['nullheat', 'validate', 'hardy_preset']
    assert main() == 0
    assert 'validating ' in capsys.readouterr().out

    sys.argv = ['nullheat', 'run', '--out', str(test_context), 'hardy_preset']
    assert main() == 0
    capsys.readouterr()
    assert (test_context / 'hardy_preset' / 'summary.json').exists()

    sys.argv = ['nullheat', 'run', '-j', '0', 'hardy_preset']
    assert main() == 1
    capture = capsys.readouterr()
    assert capture.out == '\n--jobs must be at least 1, got 0\n\n!! aborted nullheat\n'

    mocker.patch('nullheat.__main__.presets', side_effect=[KeyboardInterrupt])
    sys.argv = ['nullheat', 'presets', 'list']
    assert main() == 1
    assert capsys.readouterr().out == '\n\n!! aborted nullheat\n'
