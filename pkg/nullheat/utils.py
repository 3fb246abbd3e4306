import os
import sys
import csv
import json
import math

from typing import Any, Dict, Generator, List, Optional, Sequence
from pathlib import Path

import numpy as np

from jinja2 import Environment, FileSystemLoader, StrictUndefined

from . import STATIC_CONTEXT


__all__ = [
    'artifacts',
    'print_table',
    'jsonable',
    'dump_summary',
    'write_csv',
    'write_rows',
    'write_dat',
    'render_plot_script',
]

TEE = '├── '
LAST = '└── '

TABLE_SUFFIXES = ('.csv', '.dat')


def _data_rows(path: Path) -> int:
    with open(path, encoding='utf-8') as fd:
        lines = [line for line in fd if line.strip() and not line.startswith('#')]

    # csv tables carry a plain header line, dat tables a `#` comment
    return len(lines) - 1 if path.suffix == '.csv' else len(lines)


def artifacts(directory: Path) -> Generator[str, None, None]:
    '''Listing of a run directory, one line per artifact; tables show their data row count.'''
    contents = sorted(path for path in directory.iterdir() if path.is_file())
    for index, path in enumerate(contents):
        pointer = LAST if index == len(contents) - 1 else TEE
        if path.suffix in TABLE_SUFFIXES:
            yield f'{pointer}{path.name} ({_data_rows(path)} rows)'
        else:
            yield f'{pointer}{path.name}'


def print_table(headers: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    cells = [[str(value) for value in row] for row in rows]
    widths = [len(header) for header in headers]
    for row in cells:
        widths = [max(width, len(value)) for width, value in zip(widths, row)]

    def print_table_lines() -> None:
        sys.stdout.write('-|-'.join('-' * width for width in widths))
        sys.stdout.write('-|\n')

    print('  '.join(f'{header:<{width}}' for header, width in zip(headers, widths)))
    print_table_lines()
    for row in cells:
        print('  '.join(f'{value:<{width}}' for value, width in zip(row, widths)))
    print_table_lines()


def jsonable(value: Any) -> Any:
    '''numpy scalars/arrays to builtins, non-finite floats to strings (JSON has no inf/nan).'''
    if isinstance(value, dict):
        return {str(key): jsonable(item) for key, item in value.items()}

    if isinstance(value, (list, tuple)):
        return [jsonable(item) for item in value]

    if isinstance(value, np.ndarray):
        return [jsonable(item) for item in value.tolist()]

    if isinstance(value, (bool, np.bool_)):
        return bool(value)

    if isinstance(value, (int, np.integer)):
        return int(value)

    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isnan(number):
            return 'nan'
        if math.isinf(number):
            return 'inf' if number > 0 else '-inf'
        return number

    return value


def dump_summary(summary: Dict[str, Any]) -> str:
    return json.dumps(jsonable(summary), sort_keys=True, indent=2) + '\n'


def write_csv(path: str, header: Sequence[str], table: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(table), delimiter=',', header=','.join(header), comments='', fmt='%.12e')


def write_dat(path: str, header: Sequence[str], table: np.ndarray) -> None:
    '''gnuplot data: whitespace separated, `#` header, first column is t or x.'''
    np.savetxt(path, np.atleast_2d(table), delimiter=' ', header=' '.join(header), comments='# ', fmt='%.12e')


def render_plot_script(directory: str, title: str, data_files: List[Dict[str, Any]], template: Optional[str] = None) -> str:
    environment = Environment(
        loader=FileSystemLoader(STATIC_CONTEXT),
        undefined=StrictUndefined,
        keep_trailing_newline=True,
    )
    script = environment.get_template(template or 'plot.gp.j2').render(title=title, files=data_files)

    path = os.path.join(directory, 'plot.gp')
    with open(path, 'w', encoding='utf-8') as fd:
        fd.write(script)

    return path


def write_rows(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    '''CSV with mixed columns; floats as `%.12e`, everything else as str.'''
    def cell(value: Any) -> str:
        if isinstance(value, (bool, np.bool_)):
            return 'true' if value else 'false'
        if isinstance(value, (float, np.floating)):
            return '%.12e' % float(value)
        return str(value)

    with open(path, 'w', encoding='utf-8', newline='') as fd:
        writer = csv.writer(fd, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(value) for value in row])
