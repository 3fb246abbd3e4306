import json
import os
import stat
import subprocess
import sys

from typing import Any, Callable, Dict, List, Optional, Tuple
from types import TracebackType
from pathlib import Path

from setuptools_scm import get_version


SOURCE_ROOT = (Path(__file__).parent / '..').resolve()

COMMAND_TIMEOUT = 600


def run_command(
    command: List[str],
    env: Optional[Dict[str, str]] = None,
    cwd: Optional[str] = None,
    timeout: float = COMMAND_TIMEOUT,
) -> Tuple[int, List[str]]:
    '''Run `command` to completion and return its rc with stdout and stderr merged into lines.'''
    result = subprocess.run(
        command,
        env=env if env is not None else os.environ.copy(),
        cwd=cwd if cwd is not None else os.getcwd(),
        stdout=subprocess.PIPE,
        stderr=subprocess.STDOUT,
        timeout=timeout,
        check=False,
    )

    text = result.stdout.decode('utf-8')
    if sys.platform == 'win32':
        text = text.replace(os.linesep, '\n')

    return result.returncode, text.splitlines(keepends=True)


def read_summary(directory: Path) -> Dict[str, Any]:
    summary: Dict[str, Any] = json.loads((directory / 'summary.json').read_text(encoding='utf-8'))

    return summary


def onerror(func: Callable, path: str, exc_info: TracebackType) -> None:
    '''`shutil.rmtree` error handler, retries once after making a read-only path writable.'''
    if os.access(path, os.W_OK):
        raise  # pylint: disable=misplaced-bare-raise

    os.chmod(path, stat.S_IWUSR)
    func(path)


def get_current_version() -> str:
    version = get_version(root=str(SOURCE_ROOT), fallback_version='0.0.0', local_scheme='no-local-version')

    assert version is not None, f'setuptools-scm was not able to get current version for {SOURCE_ROOT}'

    return str(version)
