import json

from argparse import Namespace as Arguments

from . import PRESET_CONTEXT, register_parser
from .argparse import ArgumentSubParser
from .argparse.types import ConfigFile
from .utils import print_table


__all__ = [
    'presets',
]


@register_parser(order=3)
def create_parser(sub_parser: ArgumentSubParser) -> None:
    # nullheat presets
    presets_parser = sub_parser.add_parser('presets', description='list or show the scenario configurations shipped with nullheat.')

    presets_sub_parser = presets_parser.add_subparsers(dest='subcommand')

    # nullheat presets list
    presets_sub_parser.add_parser('list', description='list shipped presets with their scenario and description.')

    # nullheat presets show
    show_parser = presets_sub_parser.add_parser('show', description='print the JSON of a shipped preset.')
    show_parser.add_argument(
        'name',
        type=str,
        choices=ConfigFile(PRESET_CONTEXT).names(),
        help='name of the preset',
    )

    if presets_parser.prog != 'nullheat presets':  # pragma: no cover
        presets_parser.prog = 'nullheat presets'


def presets(args: Arguments) -> int:
    shipped = ConfigFile(PRESET_CONTEXT).presets()

    if args.subcommand == 'show':
        with open(shipped[args.name], encoding='utf-8') as fd:
            print(fd.read(), end='')
        return 0

    rows = []
    for name, path in shipped.items():
        with open(path, encoding='utf-8') as fd:
            content = json.load(fd)
        rows.append([name, content.get('scenario', ''), content.get('description', '')])

    print_table(['name', 'scenario', 'description'], rows)

    return 0
