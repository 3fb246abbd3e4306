import json
import sys

from typing import Any, Dict, List, Literal, Optional, Tuple, Type
from types import TracebackType
from os import environ, pathsep
from shutil import rmtree
from pathlib import Path

from _pytest.tmpdir import TempPathFactory

from .helpers import onerror, run_command


__all__ = [
    'End2EndFixture',
]


class End2EndFixture:
    '''Isolated working directory for running the `nullheat` command against the source tree.'''
    _tmp_path_factory: TempPathFactory
    _env: Dict[str, str]
    _root: Optional[Path]

    def __init__(self, tmp_path_factory: TempPathFactory) -> None:
        self._tmp_path_factory = tmp_path_factory
        self._env = {}
        self._root = None

    @property
    def root(self) -> Path:
        if self._root is None:
            raise AttributeError('root is not set')

        return self._root

    @property
    def output(self) -> Path:
        return self.root / 'output'

    def __enter__(self) -> 'End2EndFixture':
        self._root = self._tmp_path_factory.mktemp('test_context')
        source_root = (Path(__file__).parent / '..').resolve()
        python_path = environ.get('PYTHONPATH', '')

        self._env.update({
            'PATH': environ.get('PATH', ''),
            'PYTHONPATH': f'{source_root}{pathsep}{python_path}' if python_path else str(source_root),
            'NULLHEAT_OUTPUT_DIR': str(self.output),
        })

        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        traceback: Optional[TracebackType],
    ) -> Literal[True]:
        if exc is None and self._root is not None:
            if environ.get('KEEP_FILES', None) is None:
                rmtree(self._root, onerror=onerror)
            else:
                print(self._root)

        return True

    def write_config(self, name: str, content: Dict[str, Any]) -> Path:
        path = self.root / f'{name}.json'
        path.write_text(json.dumps(content, indent=2))

        return path

    def execute(self, arguments: List[str]) -> Tuple[int, List[str]]:
        return run_command(
            [sys.executable, '-m', 'nullheat'] + arguments,
            cwd=str(self.root),
            env=dict(self._env),
        )
