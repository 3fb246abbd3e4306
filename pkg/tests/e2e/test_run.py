import pytest

from ..fixtures import End2EndFixture
from ..helpers import read_summary


def test_e2e_run_hardy(e2e_fixture: End2EndFixture) -> None:
    rc, output = e2e_fixture.execute(['run', 'hardy_preset'])

    try:
        assert rc == 0
    except AssertionError:
        print(''.join(output))
        raise

    result = ''.join(output)
    artifacts = e2e_fixture.output / 'hardy_preset'

    assert 'running hardy_suite scenario hardy_preset\n' in result
    assert f'hardy_preset finished with rc=0, artifacts in {artifacts}\n' in result
    assert sorted(path.name for path in artifacts.iterdir()) == ['hardy.csv', 'summary.json']

    summary = read_summary(artifacts)
    assert summary['status'] == 'ok'
    assert summary['results']['all_ok']


def test_e2e_run_out(e2e_fixture: End2EndFixture) -> None:
    out = e2e_fixture.root / 'custom'
    rc, output = e2e_fixture.execute(['run', '--out', str(out), 'forward_sine', 'weights_preset'])

    try:
        assert rc == 0
    except AssertionError:
        print(''.join(output))
        raise

    assert (out / 'forward_sine' / 'plot.gp').exists()
    assert (out / 'weights_preset' / 'weights.csv').exists()


def test_e2e_run_invalid(e2e_fixture: End2EndFixture) -> None:
    config_file = e2e_fixture.write_config('supercritical_control', {
        'scenario': 'control',
        'problem': {'mu': 0.3},
    })

    rc, output = e2e_fixture.execute(['run', str(config_file)])

    assert rc == 2
    assert '!! supercritical_control: mu_controllable: mu=0.3 must not exceed 1/4\n' in ''.join(output)

    rc, output = e2e_fixture.execute(['run', '-j', '0', 'hardy_preset'])

    assert rc == 1
    assert ''.join(output) == '\n--jobs must be at least 1, got 0\n\n!! aborted nullheat\n'


@pytest.mark.slow
def test_e2e_run_parallel(e2e_fixture: End2EndFixture) -> None:
    out = e2e_fixture.root / 'parallel'
    rc, output = e2e_fixture.execute(['run', '-j', '2', '--out', str(out), 'control_preset', 'variational_preset'])

    try:
        assert rc == 0
    except AssertionError:
        print(''.join(output))
        raise

    for name in ['control_preset', 'variational_preset']:
        summary = read_summary(out / name)
        assert summary['rc'] == 0
        assert summary['status'] == 'ok'


@pytest.mark.slow
def test_e2e_run_two_phase(e2e_fixture: End2EndFixture) -> None:
    rc, output = e2e_fixture.execute(['run', 'two_phase_preset'])

    try:
        assert rc == 0
    except AssertionError:
        print(''.join(output))
        raise

    summary = read_summary(e2e_fixture.output / 'two_phase_preset')
    assert summary['config']['problem']['y0'] == 'step'
    assert summary['results']['null_ok']
    assert summary['results']['ratio'] <= 1e-2
