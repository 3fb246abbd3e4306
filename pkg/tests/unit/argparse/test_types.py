import os

from _pytest.tmpdir import TempPathFactory

from nullheat import PRESET_CONTEXT
from nullheat.argparse.types import ConfigFile


class TestConfigFile:
    def test_presets(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('presets')
        (test_context / 'b.json').write_text('{}')
        (test_context / 'a.json').write_text('{}')
        (test_context / 'notes.txt').write_text('')

        config_file = ConfigFile(str(test_context), '*.json')

        assert config_file.patterns == ['*.json']
        assert config_file.names() == ['a', 'b']
        assert config_file.presets() == {'a': str(test_context / 'a.json'), 'b': str(test_context / 'b.json')}
        assert ConfigFile(str(test_context / 'missing')).presets() == {}

    def test___call__(self, tmp_path_factory: TempPathFactory) -> None:
        test_context = tmp_path_factory.mktemp('configs')
        own = test_context / 'hardy_preset.json'
        own.write_text('{}')

        config_file = ConfigFile(PRESET_CONTEXT, '*.json')

        assert config_file('hardy_preset') == os.path.join(PRESET_CONTEXT, 'hardy_preset.json')
        assert config_file('hardy_preset.json') == os.path.join(PRESET_CONTEXT, 'hardy_preset.json')
        assert config_file(str(own)) == str(own)
        assert config_file('missing.json') == 'missing.json'
        assert config_file(os.path.join('sub', 'hardy_preset.json')) == os.path.join('sub', 'hardy_preset.json')
