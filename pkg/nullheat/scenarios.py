import os
import math
import logging

from typing import Any, Callable, Dict, List, Optional
from dataclasses import dataclass, field

import numpy as np

from .config import Scenario, ScenarioConfig
from .control import (
    ControlResult,
    control_result_summary,
    memory_fixed_point,
    penalized_hum,
    two_phase_control,
    verify_null,
    weighted_variational_control,
)
from .discretization import Trajectory, l2_norm, trajectory_to_csv
from .errors import DomainError, ParameterError, SolverError
from .evolve import bessel_mode, energy_check, forward_solve
from .utils import dump_summary, render_plot_script, write_csv, write_dat, write_rows
from .verify import CarlemanSuite, caccioppoli_suite, carleman_suite, hardy_suite, supercritical_scan
from .weights import (
    Psi,
    cfrak_interval,
    extremal_weights,
    gap_margin,
    kernel_constant,
    psi,
    validate_params,
    weight_table,
)


__all__ = [
    'ScenarioOutcome',
    'RUNNERS',
    'carleman_stable',
    'run_scenario',
]

logger = logging.getLogger(__name__)

# one decade of growth in the empirical constant when s doubles
STABILITY_LOG_FACTOR = math.log(10.0)


def carleman_stable(log_ratio_change: float) -> bool:
    '''An upper-bound estimate is unresolved only when its constant grows as s doubles.'''
    return bool(log_ratio_change < STABILITY_LOG_FACTOR)


@dataclass
class ScenarioOutcome:
    summary: Dict[str, Any] = field(default_factory=dict)
    rc: int = 0
    plots: List[Dict[str, Any]] = field(default_factory=list)


Runner = Callable[[ScenarioConfig, str], ScenarioOutcome]


def _plot(name: str, xlabel: str, labels: List[str], logscale: bool = False) -> Dict[str, Any]:
    return {
        'name': name,
        'xlabel': xlabel,
        'logscale': logscale,
        'columns': [{'index': index + 2, 'label': label} for index, label in enumerate(labels)],
    }


def _trajectory_artifacts(directory: str, trajectory: Trajectory, u: Optional[np.ndarray] = None) -> List[Dict[str, Any]]:
    grid = trajectory.grid
    trajectory_to_csv(trajectory, os.path.join(directory, 'trajectory.csv'))

    norm_columns = [grid.t, trajectory.norms()]
    norm_labels = ['|y|']
    if u is not None:
        control = Trajectory(values=np.asarray(u), grid=grid, label='u')
        trajectory_to_csv(control, os.path.join(directory, 'control.csv'))
        norm_columns.append(control.norms())
        norm_labels.append('|u|')

    write_dat(os.path.join(directory, 'norms.dat'), ['t'] + norm_labels, np.column_stack(norm_columns))
    write_dat(os.path.join(directory, 'profiles.dat'), ['x', 'y0', 'yT'], np.column_stack([grid.x, trajectory.initial, trajectory.terminal]))

    return [
        _plot('norms.dat', 't', norm_labels, logscale=True),
        _plot('profiles.dat', 'x', ['y0', 'yT']),
    ]


def run_forward(config: ScenarioConfig, directory: str) -> ScenarioOutcome:
    grid = config.grid()
    params = config.weight_params() if config.weights is not None else None
    problem = config.pde_problem(grid, config.memory_kernel(params))
    trajectory = forward_solve(problem)

    summary: Dict[str, Any] = {
        'terminal_norm': l2_norm(trajectory.terminal, grid),
        'initial_norm': l2_norm(problem.y0, grid),
        'blow_up': None,
    }

    if trajectory.blow_up is not None:
        summary['blow_up'] = {'step': trajectory.blow_up.step, 'time': trajectory.blow_up.time, 'max_abs': trajectory.blow_up.max_abs}
    else:
        if problem.kernel is None:
            energy = energy_check(trajectory, problem)
            summary.update({'energy_lhs': energy.lhs, 'energy_rhs': energy.rhs_data, 'energy_ratio': energy.ratio, 'energy_violation': energy.violation})

        if config.problem.y0 == 'sine' and config.problem.mu == 0.0 and problem.kernel is None:
            exact = math.exp(-math.pi ** 2 * grid.T) * np.sin(np.pi * grid.x)
            summary['terminal_error'] = l2_norm(trajectory.terminal - exact, grid) / l2_norm(exact, grid)

        if config.problem.y0 == 'bessel' and problem.kernel is None:
            _, eigenvalue = bessel_mode(config.problem.mu, grid)
            rate = -math.log(summary['terminal_norm'] / summary['initial_norm']) / grid.T
            summary.update({'decay_rate': rate, 'decay_rate_reference': eigenvalue, 'decay_rate_error': abs(rate - eigenvalue) / eigenvalue})

    return ScenarioOutcome(summary=summary, plots=_trajectory_artifacts(directory, trajectory))


def _control_outcome(config: ScenarioConfig, directory: str, result: ControlResult) -> ScenarioOutcome:
    summary = control_result_summary(result)
    null_ok = verify_null(result, config.solver.null_tol)
    summary.update({'null_ok': null_ok, 'null_tol': config.solver.null_tol})

    if not null_ok:
        logger.warning('terminal/initial ratio %.3e is above the null tolerance %.1e', result.ratio, config.solver.null_tol)

    plots = _trajectory_artifacts(directory, result.y, result.u)

    rc = 0 if null_ok else 3
    if result.fixed_point is not None:
        diffs = np.asarray(result.fixed_point.diffs, dtype=float)
        if diffs.size > 0:
            write_dat(os.path.join(directory, 'picard.dat'), ['iteration', 'diff'], np.column_stack([np.arange(1, diffs.size + 1), diffs]))
            plots.append(_plot('picard.dat', 'iteration', ['diff'], logscale=True))

        if not result.fixed_point.converged:
            rc = 3

    return ScenarioOutcome(summary=summary, rc=rc, plots=plots)


def run_control(config: ScenarioConfig, directory: str) -> ScenarioOutcome:
    grid = config.grid()
    params = config.weight_params(grid) if config.weights is not None else None
    problem = config.pde_problem(grid)
    solver = config.solver

    if solver.method == 'variational':
        assert params is not None
        result = weighted_variational_control(problem, params, cg_tol=solver.cg_tol, cg_max=solver.cg_max)
    else:
        result = penalized_hum(problem, epsilon=solver.epsilon, weight_mode=solver.weight_mode, params=params, cg_tol=solver.cg_tol, cg_max=solver.cg_max)

    return _control_outcome(config, directory, result)


def run_memory(config: ScenarioConfig, directory: str) -> ScenarioOutcome:
    grid = config.grid()
    params = config.weight_params(grid)
    problem = config.pde_problem(grid, config.memory_kernel(params))
    solver = config.solver

    result, _ = memory_fixed_point(
        problem,
        params,
        method=solver.method,
        tol=solver.picard_tol,
        max_iter=solver.picard_max,
        epsilon=solver.epsilon,
        weight_mode=solver.weight_mode,
        cg_tol=solver.cg_tol,
        cg_max=solver.cg_max,
    )

    return _control_outcome(config, directory, result)


def run_two_phase(config: ScenarioConfig, directory: str) -> ScenarioOutcome:
    grid = config.grid()
    params = config.weight_params(grid)
    problem = config.pde_problem(grid, config.memory_kernel(params))
    solver = config.solver

    result = two_phase_control(
        problem,
        params,
        t0=solver.t0,
        method=solver.method,
        tol=solver.picard_tol,
        max_iter=solver.picard_max,
        epsilon=solver.epsilon,
        weight_mode=solver.weight_mode,
        cg_tol=solver.cg_tol,
        cg_max=solver.cg_max,
    )

    return _control_outcome(config, directory, result)


def _suite_rows(suite: CarlemanSuite, label: str) -> List[List[Any]]:
    rows = suite.rows()

    return [[label, suite.s] + list(row.values()) for row in rows]


def _constants_table(suites: Dict[str, CarlemanSuite], samples: int) -> str:
    lines = [
        '| inequality | s | samples | seed | max ratio | max log ratio |',
        '|------------|---|---------|------|-----------|---------------|',
    ]
    for label, suite in suites.items():
        lines.append(f'| {label} | {suite.s:.6g} | {samples} | {suite.seed} | {suite.max_ratio:.6e} | {suite.max_log_ratio:.6f} |')

    return '\n'.join(lines) + '\n'


def run_carleman_suite(config: ScenarioConfig, directory: str) -> ScenarioOutcome:
    grid = config.grid()
    params = config.weight_params(grid)
    verify = config.verify

    suites = {
        f'carleman_{verify.form}': carleman_suite(params, grid, samples=verify.samples, seed=config.seed, window=verify.window, form=verify.form),
        f'carleman_{verify.form}_2s': carleman_suite(
            params.with_s(2.0 * params.s), grid, samples=verify.samples, seed=config.seed, window=verify.window, form=verify.form,
        ),
        'caccioppoli': caccioppoli_suite(params, grid, verify.omega_pp, samples=verify.samples, seed=config.seed, window=verify.window),
    }

    for label, suite in suites.items():
        header = ['inequality', 's'] + list(suite.rows()[0].keys())
        write_rows(os.path.join(directory, f'{label}.csv'), header, _suite_rows(suite, label))

    with open(os.path.join(directory, 'constants.md'), 'w', encoding='utf-8') as fd:
        fd.write(_constants_table(suites, verify.samples))

    base, doubled, caccioppoli = suites.values()
    change = doubled.max_log_ratio - base.max_log_ratio

    write_dat(
        os.path.join(directory, 'log_ratios.dat'),
        ['draw', 'log_ratio_s', 'log_ratio_2s'],
        np.column_stack([np.arange(len(base.reports)), [r.log_ratio for r in base.reports], [r.log_ratio for r in doubled.reports]]),
    )

    summary = {
        's': params.s,
        'samples': verify.samples,
        'max_ratio': base.max_ratio,
        'max_log_ratio': base.max_log_ratio,
        'max_ratio_2s': doubled.max_ratio,
        'max_log_ratio_2s': doubled.max_log_ratio,
        'log_ratio_change': change,
        'stable': carleman_stable(change),
        'flagged': sum(report.flagged for report in base.reports + doubled.reports),
        'caccioppoli_max_ratio': caccioppoli.max_ratio,
        'caccioppoli_max_log_ratio': caccioppoli.max_log_ratio,
    }

    return ScenarioOutcome(summary=summary, plots=[_plot('log_ratios.dat', 'draw', ['s', '2s'])])


def run_spectral_scan(config: ScenarioConfig, directory: str) -> ScenarioOutcome:
    verify = config.verify
    rows = supercritical_scan(verify.mu_list, verify.nx_list, bounded_tol=verify.bounded_tol, collapse_tol=verify.collapse_tol)

    header = ['mu'] + [f'lambda_nx{nx}' for nx in verify.nx_list] + ['classification']
    write_rows(os.path.join(directory, 'spectral_scan.csv'), header, [[row.mu] + row.values + [row.classification] for row in rows])

    labels = [f'mu={row.mu:g}' for row in rows]
    table = np.column_stack([np.asarray(verify.nx_list, dtype=float)] + [np.asarray(row.values) for row in rows])
    write_dat(os.path.join(directory, 'spectral.dat'), ['nx'] + labels, table)

    summary: Dict[str, Any] = {
        'classifications': {f'{row.mu:g}': row.classification for row in rows},
        'lambda_min': {f'{row.mu:g}': row.values for row in rows},
    }

    for row in rows:
        if row.mu == 0.0:
            summary['pi_squared_gap'] = abs(row.values[-1] - math.pi ** 2) / math.pi ** 2

    return ScenarioOutcome(summary=summary, plots=[_plot('spectral.dat', 'nx', labels)])


def run_hardy_suite(config: ScenarioConfig, directory: str) -> ScenarioOutcome:
    rows = hardy_suite(config.verify.nx_list)

    write_rows(os.path.join(directory, 'hardy.csv'), ['function', 'nx', 'ratio', 'bound', 'ok'], [[row.function, row.nx, row.ratio, row.bound, row.ok] for row in rows])

    summary = {
        'all_ok': all(row.ok for row in rows),
        'max_ratio': max(row.ratio for row in rows),
        'ratios': {f'{row.function}/nx={row.nx}': row.ratio for row in rows},
    }

    return ScenarioOutcome(summary=summary)


def run_weights(config: ScenarioConfig, directory: str) -> ScenarioOutcome:
    grid = config.grid()
    params = config.weight_params(grid)
    report = validate_params(params)

    write_rows(
        os.path.join(directory, 'validation.csv'),
        ['constraint', 'passed', 'margin', 'detail'],
        [[check.name, check.passed, check.margin, check.detail] for check in report.checks],
    )
    write_csv(
        os.path.join(directory, 'weights.csv'),
        ['t', 'x', 'theta', 'nu', 'log_e2s_phi_tilde', 'log_e2s_Phi_tilde'],
        weight_table(params, grid),
    )

    x = np.linspace(0.0, 1.0, 201)
    write_dat(os.path.join(directory, 'profiles.dat'), ['x', 'psi', 'Psi'], np.column_stack([x, psi(params, x), Psi(params, x)]))

    start = extremal_weights(params, 0.0)
    interval = cfrak_interval(params.rho, params.sigma_max, params.d) if params.d > 1.0 else None

    summary: Dict[str, Any] = {
        'params': params.as_dict(),
        'passed': report.passed,
        'failures': report.failures,
        'gap_margin': gap_margin(params),
        'C0': kernel_constant(params),
        'hatPhi_0': start.hatPhi,
        'hatphi_0': start.hatphi,
        'checkphi_5T_8': extremal_weights(params, 5.0 * params.T / 8.0).checkphi,
        'cfrak_interval': list(interval) if interval is not None else None,
    }

    return ScenarioOutcome(summary=summary, rc=0 if report.passed else 2, plots=[_plot('profiles.dat', 'x', ['psi', 'Psi'])])


RUNNERS: Dict[Scenario, Runner] = {
    Scenario.FORWARD: run_forward,
    Scenario.CONTROL: run_control,
    Scenario.MEMORY: run_memory,
    Scenario.TWO_PHASE: run_two_phase,
    Scenario.CARLEMAN_SUITE: run_carleman_suite,
    Scenario.SPECTRAL_SCAN: run_spectral_scan,
    Scenario.HARDY_SUITE: run_hardy_suite,
    Scenario.WEIGHTS: run_weights,
}


def run_scenario(config: ScenarioConfig, directory: str) -> int:
    '''Execute the scenario of `config` and write its artifacts to `directory`; returns the exit code.'''
    os.makedirs(directory, exist_ok=True)

    try:
        outcome = RUNNERS[config.scenario](config, directory)
        status = 'ok' if outcome.rc == 0 else 'failed'
    except (ParameterError, DomainError) as e:
        logger.debug('%s scenario rejected its parameters', config.scenario.value, exc_info=True)
        print(f'!! {config.name}: {e}')
        outcome = ScenarioOutcome(summary={'error': str(e)}, rc=2)
        status = 'error'
    except SolverError as e:
        logger.debug('%s scenario solver failure', config.scenario.value, exc_info=True)
        print(f'!! {config.name}: {e}')
        outcome = ScenarioOutcome(summary={'error': str(e)}, rc=3)
        status = 'error'

    summary = {
        'scenario': config.scenario.value,
        'config': config.as_dict(),
        'status': status,
        'rc': outcome.rc,
        'results': outcome.summary,
    }

    with open(os.path.join(directory, 'summary.json'), 'w', encoding='utf-8') as fd:
        fd.write(dump_summary(summary))

    if len(outcome.plots) > 0:
        render_plot_script(directory, f'{config.name} ({config.scenario.value})', outcome.plots)

    return outcome.rc
