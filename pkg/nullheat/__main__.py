import argparse
import logging

from .argparse import ArgumentParser
from .run import run
from .validate import validate
from .presets import presets
from . import __version__, register_parser


def _create_parser() -> ArgumentParser:
    parser = ArgumentParser(
        description=(
            'null controllability experiments for the one dimensional heat equation with an inverse-square potential '
            'and a memory term: forward solves, HUM and weighted variational control, the memory fixed point, and '
            'numerical checks of the Carleman, Caccioppoli and Hardy inequalities behind them.'
        ),
    )

    if parser.prog != 'nullheat':
        parser.prog = 'nullheat'

    parser.add_argument(
        '--version',
        action='store_true',
        default=False,
        help='print version of nullheat, and exit',
    )

    parser.add_argument(
        '-v', '--verbose',
        action='store_true',
        default=False,
        help='log solver diagnostics on level `DEBUG`',
    )

    sub_parser = parser.add_subparsers(dest='command')

    for create_parser in register_parser.registered:
        create_parser(sub_parser)

    return parser


def _parse_arguments() -> argparse.Namespace:
    parser = _create_parser()
    args = parser.parse_args()

    if args.version:
        if __version__ == '0.0.0':
            version = '(development)'
        else:
            version = __version__

        print(f'nullheat {version}')

        raise SystemExit(0)

    if args.command is None:
        parser.error('no command specified')

    if args.command == 'presets' and getattr(args, 'subcommand', None) is None:
        parser.error_no_help(f'no subcommand for {args.command} specified')

    return args


def main() -> int:
    try:
        args = _parse_arguments()

        logging.basicConfig(
            level=logging.DEBUG if args.verbose else logging.WARNING,
            format='%(asctime)s %(levelname)s %(name)s: %(message)s',
        )

        if args.command == 'run':
            rc = run(args)
        elif args.command == 'validate':
            rc = validate(args)
        elif args.command == 'presets':
            rc = presets(args)
        else:
            raise ValueError(f'unknown command {args.command}')

        return rc
    except (KeyboardInterrupt, ValueError) as e:
        print('')
        if isinstance(e, ValueError):
            print(str(e))

        print('\n!! aborted nullheat')
        return 1


if __name__ == '__main__':  # pragma: no cover
    raise SystemExit(main())
