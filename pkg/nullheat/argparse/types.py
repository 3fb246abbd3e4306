import os

from typing import Dict, List
from fnmatch import fnmatch


__all__ = [
    'ConfigFile',
]


class ConfigFile:
    '''argparse `type=` for scenario configurations.

    A value naming a shipped preset (with or without `.json`) resolves to the packaged
    file. Anything else is passed through unchanged, so that missing or malformed files
    are reported by the configuration loader with its own exit code instead of argparse's.
    '''
    def __init__(self, preset_directory: str, *patterns: str) -> None:
        self.preset_directory = preset_directory
        self.patterns = list(patterns) or ['*.json']

    def presets(self) -> Dict[str, str]:
        if not os.path.isdir(self.preset_directory):
            return {}

        return {
            os.path.splitext(name)[0]: os.path.join(self.preset_directory, name)
            for name in sorted(os.listdir(self.preset_directory))
            if any(fnmatch(name, pattern) for pattern in self.patterns)
        }

    def names(self) -> List[str]:
        return list(self.presets().keys())

    def __call__(self, value: str) -> str:
        if os.path.exists(value):
            return value

        name = os.path.splitext(os.path.basename(value))[0] if os.sep not in value else None
        presets = self.presets()

        if name is not None and name in presets:
            return presets[name]

        return value
