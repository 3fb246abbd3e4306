from ..fixtures import End2EndFixture


def test_e2e_validate(e2e_fixture: End2EndFixture) -> None:
    rc, output = e2e_fixture.execute(['validate', 'memory_preset', 'two_phase_preset'])

    try:
        assert rc == 0
    except AssertionError:
        print(''.join(output))
        raise

    result = ''.join(output)
    assert 'memory_preset.json\n' in result
    assert 'two_phase_preset.json\n' in result
    assert 'kernel_admissible' in result
    assert '!!' not in result


def test_e2e_validate_failing(e2e_fixture: End2EndFixture) -> None:
    config_file = e2e_fixture.write_config('bad_weights', {
        'scenario': 'weights',
        'weights': {'k': 2.0, 's': 1.0, 'mode': 'memory'},
    })
    missing = e2e_fixture.root / 'missing.json'

    rc, output = e2e_fixture.execute(['validate', str(config_file)])

    assert rc == 2
    assert '!! k_memory_range: ' in ''.join(output)

    rc, output = e2e_fixture.execute(['validate', str(config_file), str(missing)])

    assert rc == 2
    assert f'!! {missing}: {missing} does not exist\n' in ''.join(output)


def test_e2e_presets(e2e_fixture: End2EndFixture) -> None:
    rc, output = e2e_fixture.execute(['presets', 'list'])

    assert rc == 0
    result = ''.join(output)
    for name in ['carleman_preset', 'control_preset', 'forward_sine', 'weights_preset']:
        assert f'\n{name} ' in result

    rc, output = e2e_fixture.execute(['presets', 'show', 'hardy_preset'])

    assert rc == 0
    assert '"scenario": "hardy_suite"' in ''.join(output)
