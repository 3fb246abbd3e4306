import os
import logging

from typing import List, Optional, Tuple
from argparse import Namespace as Arguments
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import nullheat
from . import PRESET_CONTEXT, register_parser
from .argparse import ArgumentSubParser
from .argparse.types import ConfigFile
from .config import ScenarioConfig, load_config
from .errors import ConfigError
from .scenarios import run_scenario
from .utils import artifacts
from .validate import validate_scenario


__all__ = [
    'output_directory',
    'run_config',
    'run',
]

logger = logging.getLogger(__name__)


@register_parser(order=1)
def create_parser(sub_parser: ArgumentSubParser) -> None:
    # nullheat run
    run_parser = sub_parser.add_parser('run', description=(
        'validate and execute scenario configurations, writing summary.json, CSV tables and gnuplot data for each of them.'
    ))

    run_parser.add_argument(
        '-o', '--out',
        type=str,
        required=False,
        default=None,
        help='directory where a sub-directory per scenario is created, default is `$NULLHEAT_OUTPUT_DIR` or `./nullheat-output`',
    )

    run_parser.add_argument(
        '-j', '--jobs',
        type=int,
        required=False,
        default=1,
        help='number of scenarios to run concurrently, each in its own process',
    )

    run_parser.add_argument(
        'config',
        nargs='+',
        type=ConfigFile(PRESET_CONTEXT, '*.json'),
        help='path to scenario configuration, or name of a shipped preset',
    )

    if run_parser.prog != 'nullheat run':  # pragma: no cover
        run_parser.prog = 'nullheat run'


def output_directory(config: ScenarioConfig, out: Optional[str]) -> str:
    if out is not None:
        base = out
    elif config.output.directory is not None:
        base = config.output.directory
    else:
        base = nullheat.OUTPUT_CONTEXT

    return os.path.join(base, config.name)


def run_config(path: str, out: Optional[str] = None) -> int:
    try:
        config = load_config(path)
    except ConfigError as e:
        print(f'!! {path}: {e}')
        return 1

    messages, rc = validate_scenario(config)
    if rc != 0:
        for message in messages:
            if not message.ok:
                print(f'!! {config.name}: {message.check}: {message.detail}')
        return rc

    directory = output_directory(config, out)
    print(f'running {config.scenario.value} scenario {config.name}')
    rc = run_scenario(config, directory)

    print(f'{config.name} finished with rc={rc}, artifacts in {directory}')
    for line in artifacts(Path(directory)):
        print(line)

    return rc


def _configure_worker(level: int) -> None:
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def _run_pool(jobs: List[Tuple[str, Optional[str]]], workers: int) -> List[int]:
    level = logging.getLogger().getEffectiveLevel()

    with ProcessPoolExecutor(max_workers=workers, initializer=_configure_worker, initargs=(level,)) as executor:
        futures = [executor.submit(run_config, path, out) for path, out in jobs]

        return [future.result() for future in futures]


def run(args: Arguments) -> int:
    if args.jobs < 1:
        raise ValueError(f'--jobs must be at least 1, got {args.jobs}')

    jobs = [(path, args.out) for path in args.config]

    if args.jobs > 1 and len(jobs) > 1:
        logger.debug('running %d scenarios in %d processes', len(jobs), args.jobs)
        codes = _run_pool(jobs, min(args.jobs, len(jobs)))
    else:
        codes = [run_config(path, out) for path, out in jobs]

    return max(codes)
