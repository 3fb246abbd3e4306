from typing import List, Optional, Tuple
from argparse import Namespace as Arguments
from dataclasses import dataclass, replace

from . import PRESET_CONTEXT, register_parser
from .argparse import ArgumentSubParser
from .argparse.types import ConfigFile
from .config import Scenario, ScenarioConfig, load_config
from .discretization import SpaceTimeGrid
from .errors import ConfigError, ParameterError
from .utils import print_table
from .weights import MemoryKernel, WeightParams, kernel_admissibility, validate_params


__all__ = [
    'ValidationMessage',
    'validate_scenario',
    'validate_config',
    'validate',
]

CONTROL_SCENARIOS = (Scenario.CONTROL, Scenario.MEMORY, Scenario.TWO_PHASE)


@register_parser(order=2)
def create_parser(sub_parser: ArgumentSubParser) -> None:
    # nullheat validate
    validate_parser = sub_parser.add_parser('validate', description=(
        'check a scenario configuration without running it. exits with 1 when the file is malformed, '
        'and with 2 when a parameter violates a constraint.'
    ))

    validate_parser.add_argument(
        'config',
        nargs='+',
        type=ConfigFile(PRESET_CONTEXT, '*.json'),
        help='path to scenario configuration, or name of a shipped preset',
    )

    if validate_parser.prog != 'nullheat validate':  # pragma: no cover
        validate_parser.prog = 'nullheat validate'


@dataclass(frozen=True)
class ValidationMessage:
    check: str
    ok: bool
    detail: str = ''

    @property
    def status(self) -> str:
        return 'ok' if self.ok else 'FAILED'


class _Collector:
    def __init__(self) -> None:
        self.messages: List[ValidationMessage] = []

    def add(self, check: str, ok: bool, detail: str = '') -> bool:
        self.messages.append(ValidationMessage(check=check, ok=ok, detail=detail))

        return ok

    @property
    def passed(self) -> bool:
        return all(message.ok for message in self.messages)


def _check_kernel(collector: _Collector, config: ScenarioConfig, params: WeightParams, grid: SpaceTimeGrid, kernel: MemoryKernel) -> None:
    if config.scenario == Scenario.TWO_PHASE:
        # the control phase sees the horizon left after the switch
        t0 = config.solver.t0 if config.solver.t0 is not None else grid.T / 4.0
        n0 = max(1, int(round(t0 / grid.dt)))
        if n0 >= grid.nt:
            return
        grid = grid.sub_grid(n0, grid.nt)
        params = replace(params, T=grid.T)

    report = kernel_admissibility(kernel, params, grid)
    collector.add(
        'kernel_admissible',
        report.admissible,
        f'{kernel.kind.value} kernel, log sup = {report.log_sup:.6g}, s*C0 = {params.s * report.C0:.6g}',
    )


def validate_scenario(config: ScenarioConfig) -> Tuple[List[ValidationMessage], int]:
    '''Checks of a loaded configuration; rc is 0 when all pass, 1 for file problems, 2 for constraint violations.'''
    collector = _Collector()
    problem = config.problem

    try:
        grid = config.grid()
        collector.add('grid', True, f'nx={grid.nx}, nt={grid.nt}, T={grid.T}')
    except ParameterError as e:
        collector.add('grid', False, str(e))
        return collector.messages, 2

    try:
        config.initial_state(grid)
        collector.add('y0', True, problem.y0)
    except ConfigError as e:
        collector.add('y0', False, str(e))
        return collector.messages, 1
    except ParameterError as e:
        collector.add('y0', False, str(e))
        return collector.messages, 2

    if config.scenario in CONTROL_SCENARIOS:
        collector.add('mu_controllable', problem.mu <= 0.25, f'mu={problem.mu} must not exceed 1/4')
        collector.add('epsilon_positive', config.solver.epsilon > 0.0, f'epsilon={config.solver.epsilon}')

    params: Optional[WeightParams] = None
    if config.weights is not None:
        params = config.weight_params(grid)
        report = validate_params(params)
        for check in report.checks:
            collector.add(check.name, check.passed, f'margin {check.margin:.6g}' + (f', {check.detail}' if check.detail else ''))

        lo_tilde, hi_tilde = params.sigma.omega_tilde
        lo, hi = problem.omega
        collector.add('omega_tilde_in_omega', lo <= lo_tilde < hi_tilde <= hi, f'omega_tilde={params.sigma.omega_tilde}, omega={problem.omega}')

    if params is not None and config.scenario in (Scenario.MEMORY, Scenario.TWO_PHASE):
        kernel = config.memory_kernel(params)
        if kernel is not None:
            _check_kernel(collector, config, params, grid, kernel)

    if config.scenario == Scenario.TWO_PHASE:
        t0 = config.solver.t0 if config.solver.t0 is not None else grid.T / 4.0
        collector.add('t0_range', 0.0 < t0 < grid.T / 2.0, f't0={t0} must lie in (0, T/2)')

        # the switch happens on the time grid, and the control phase runs on what is left of T
        n0 = max(1, int(round(t0 / grid.dt)))
        switch = float(grid.t[min(n0, grid.nt)])
        if collector.add('t0_grid', n0 < grid.nt and switch < grid.T / 2.0, f't0={t0} switches at t={switch:.6g}, T/2={grid.T / 2.0:.6g}'):
            remaining = grid.T - switch
            if params is not None:
                report = validate_params(replace(params, T=remaining))
                detail = f"T'={remaining:.6g}" + (f', failed {", ".join(report.failures)}' if not report.passed else '')
                collector.add('remaining_horizon', report.passed, detail)

    verify = config.verify
    if config.scenario == Scenario.CARLEMAN_SUITE:
        collector.add('window', 0.0 < verify.window < 0.5, f'window={verify.window} must lie in (0, 1/2)')
        collector.add('samples', verify.samples >= 1, f'samples={verify.samples}')
        lo_pp, hi_pp = verify.omega_pp
        lo_p, hi_p = problem.omega_prime
        collector.add('omega_pp_in_omega_prime', lo_p < lo_pp < hi_pp < hi_p, f'omega_pp={verify.omega_pp}, omega_prime={problem.omega_prime}')

    if config.scenario == Scenario.SPECTRAL_SCAN:
        increasing = all(later > earlier for earlier, later in zip(verify.nx_list[:-1], verify.nx_list[1:]))
        collector.add('nx_list', increasing and len(verify.nx_list) >= 2 and verify.nx_list[0] >= 3, f'nx_list={verify.nx_list}')

    if config.scenario == Scenario.HARDY_SUITE:
        collector.add('nx_list', all(nx >= 1 for nx in verify.nx_list), f'nx_list={verify.nx_list}')

    return collector.messages, 0 if collector.passed else 2


def validate_config(path: str) -> int:
    print(f'validating {path}')

    try:
        config = load_config(path)
    except ConfigError as e:
        print(f'!! {path}: {e}')
        return 1

    messages, rc = validate_scenario(config)
    print_table(['check', 'status', 'detail'], [[message.check, message.status, message.detail] for message in messages])

    for message in messages:
        if not message.ok:
            print(f'!! {message.check}: {message.detail}')

    return rc


def validate(args: Arguments) -> int:
    return max(validate_config(path) for path in args.config)
