import math
import logging

from typing import Any, Callable, Dict, List, Optional, Tuple, Union
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp

from scipy.special import logsumexp

from .discretization import SpaceTimeGrid, Trajectory, assemble_operator, memory_source, l2_norm, trapezoid_weights
from .errors import ConvergenceError, InfeasibleWeightsError, ParameterError, SolverError
from .evolve import BackwardEuler, CrankNicolson, PdeProblem, control_adjoint, forward_solve
from .weights import MAX_LOG_SPAN, WeightParams, kernel_admissibility, log_control_weights, log_nu_weights, log_weight_span


__all__ = [
    'WeightMode',
    'SynthesisMethod',
    'CGResult',
    'ControlResult',
    'FixedPointReport',
    'VariationalSystem',
    'conjugate_gradient',
    'penalized_hum',
    'assemble_variational_system',
    'weighted_variational_control',
    'weighted_cost',
    'memory_fixed_point',
    'two_phase_control',
    'verify_null',
    'control_result_summary',
]

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
DEFAULT_CG_TOLERANCE = 1e-10
DEFAULT_CG_MAX_ITERATIONS = 2000
DEFAULT_PICARD_TOLERANCE = 1e-6
DEFAULT_PICARD_MAX_ITERATIONS = 20

STAGNATION_WINDOW = 50
STAGNATION_REDUCTION = 1e-12

# space-time unknowns of the variational system
VARIATIONAL_SIZE_CAP = 20000


class WeightMode(str, Enum):
    UNIFORM = 'uniform'
    PAPER = 'paper'


class SynthesisMethod(str, Enum):
    HUM = 'hum'
    VARIATIONAL = 'variational'


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: List[float] = field(default_factory=list)


@dataclass
class FixedPointReport:
    iterations: int
    diffs: List[float]
    converged: bool
    R_bound: float
    monotone: bool = True


@dataclass
class ControlResult:
    u: np.ndarray
    y: Trajectory
    terminal_norm: float
    initial_norm: float
    cg_iterations: int
    residual: float
    weighted_cost: Optional[float] = None
    method: str = SynthesisMethod.HUM.value
    diagnostics: Dict[str, float] = field(default_factory=dict)
    fixed_point: Optional[FixedPointReport] = None

    @property
    def ratio(self) -> float:
        if self.initial_norm == 0.0:
            return self.terminal_norm

        return self.terminal_norm / self.initial_norm


def conjugate_gradient(
    apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    tol: float = DEFAULT_CG_TOLERANCE,
    max_iter: int = DEFAULT_CG_MAX_ITERATIONS,
    preconditioner: Optional[np.ndarray] = None,
) -> CGResult:
    '''Preconditioned conjugate gradient from a zero start on a symmetric positive definite operator.

    `preconditioner` is the inverse diagonal of a Jacobi preconditioner. Stops when the
    relative residual drops below `tol`; raises ConvergenceError on stagnation (relative
    reduction below 1e-12 over 50 steps) or when `max_iter` is exhausted.
    '''
    b_norm = float(np.linalg.norm(b))
    x = np.zeros_like(b, dtype=float)

    if b_norm == 0.0:
        return CGResult(x=x, iterations=0, residual=0.0, history=[0.0])

    r = np.array(b, dtype=float)
    z = r * preconditioner if preconditioner is not None else r
    p = z.copy()
    rz = float(r @ z)
    history = [1.0]

    for iteration in range(1, max_iter + 1):
        Ap = apply(p)
        curvature = float(p @ Ap)
        if not curvature > 0.0:
            raise SolverError(f'operator is not positive definite (p.Ap={curvature:.3e}) at iteration {iteration}')

        alpha = rz / curvature
        x += alpha * p
        r -= alpha * Ap

        residual = float(np.linalg.norm(r)) / b_norm
        history.append(residual)
        logger.debug('cg iteration %d: relative residual %.3e', iteration, residual)

        if residual <= tol:
            return CGResult(x=x, iterations=iteration, residual=residual, history=history)

        if iteration >= STAGNATION_WINDOW:
            reference = history[iteration - STAGNATION_WINDOW]
            if (reference - residual) < STAGNATION_REDUCTION * reference:
                logger.warning('cg stagnated at iteration %d with relative residual %.3e', iteration, residual)
                raise ConvergenceError(f'conjugate gradient stagnated at iteration {iteration} (residual {residual:.3e})', history)

        z = r * preconditioner if preconditioner is not None else r
        rz_next = float(r @ z)
        p = z + (rz_next / rz) * p
        rz = rz_next

    logger.warning('cg reached %d iterations with relative residual %.3e', max_iter, history[-1])
    raise ConvergenceError(f'conjugate gradient did not reach {tol:g} within {max_iter} iterations (residual {history[-1]:.3e})', history)


def _hum_weights(grid: SpaceTimeGrid, weight_mode: WeightMode, params: Optional[WeightParams]) -> np.ndarray:
    mask = grid.omega_mask[None, :].astype(float)

    if weight_mode == WeightMode.UNIFORM:
        return np.repeat(mask, grid.nt + 1, axis=0)

    if params is None:
        raise ParameterError('paper weight mode needs weight parameters')

    _, log_wu = log_control_weights(params, grid)
    scale = float(np.max(log_wu[:, grid.omega_mask]))

    return np.exp(log_wu - scale) * mask


def weighted_cost(y: np.ndarray, u: np.ndarray, p: WeightParams, grid: SpaceTimeGrid) -> float:
    '''log of ∬ y² e^{−2sΦ̃} + ∬_ω s^{−3}ν^{−3} u² e^{−2sΦ̃} over [0, T − δt].'''
    log_wy, log_wu = log_control_weights(p, grid)
    state = np.asarray(y)[:-1]
    control = (np.asarray(u) * grid.omega_mask[None, :])[:-1]

    with np.errstate(divide='ignore'):
        terms = np.concatenate([
            (np.log(state ** 2) - log_wy[:-1]).ravel(),
            (np.log(control ** 2) - log_wu[:-1]).ravel(),
        ])

    terms = terms[~np.isnan(terms)]
    if terms.size == 0 or not np.any(np.isfinite(terms)):
        return -math.inf

    return float(logsumexp(terms)) + math.log(grid.h * grid.dt)


def _finish(
    prob: PdeProblem,
    u: np.ndarray,
    y: Trajectory,
    cg: CGResult,
    method: SynthesisMethod,
    params: Optional[WeightParams],
    diagnostics: Dict[str, float],
) -> ControlResult:
    grid = prob.grid
    cost = weighted_cost(y.values, u, params, grid) if params is not None else None

    result = ControlResult(
        u=u,
        y=y,
        terminal_norm=l2_norm(y.terminal, grid),
        initial_norm=l2_norm(prob.y0, grid),
        cg_iterations=cg.iterations,
        residual=cg.residual,
        weighted_cost=cost,
        method=method.value,
        diagnostics=diagnostics,
    )
    logger.info(
        '%s synthesis: terminal/initial = %.3e after %d cg iterations (residual %.3e)',
        method.value, result.ratio, result.cg_iterations, result.residual,
    )

    return result


def penalized_hum(
    prob: PdeProblem,
    epsilon: float = DEFAULT_EPSILON,
    weight_mode: Union[WeightMode, str] = WeightMode.UNIFORM,
    params: Optional[WeightParams] = None,
    cg_tol: float = DEFAULT_CG_TOLERANCE,
    cg_max: int = DEFAULT_CG_MAX_ITERATIONS,
) -> ControlResult:
    '''Penalized HUM: solve (𝒮ρ𝒮* + ε) zT = −y_free(T) and set u = ρ·1_ω·𝒮*zT.

    𝒮 maps a control to the terminal state of the problem with zero data, 𝒮* is its exact
    discrete adjoint (control_adjoint), so the controlled terminal state is −ε·zT.
    '''
    weight_mode = WeightMode(weight_mode)

    if not epsilon > 0.0:
        raise ParameterError(f'penalty epsilon must be positive, got {epsilon}')

    if prob.mu > 0.25:
        raise ParameterError(f'null control needs mu <= 1/4, got {prob.mu}')

    if prob.kernel is not None:
        raise ParameterError('fold the memory term into the source before calling penalized_hum')

    grid = prob.grid
    stepper = CrankNicolson(prob.mu, grid)
    rho = _hum_weights(grid, weight_mode, params)
    zero_data = PdeProblem(grid=grid, mu=prob.mu, y0=np.zeros(grid.nx))

    def control_of(zT: np.ndarray) -> np.ndarray:
        return rho * control_adjoint(zT, prob.mu, grid, stepper=stepper)

    def gramian(zT: np.ndarray) -> np.ndarray:
        return forward_solve(zero_data, control_of(zT), stepper=stepper).terminal + epsilon * zT

    y_free = forward_solve(prob, stepper=stepper)
    cg = conjugate_gradient(gramian, -y_free.terminal, tol=cg_tol, max_iter=cg_max)

    u = control_of(cg.x)
    y = forward_solve(prob, u, stepper=stepper)

    tau = trapezoid_weights(grid.nt)[:, None]
    z_hat = control_adjoint(cg.x, prob.mu, grid, stepper=stepper)
    dual_value = (
        0.5 * grid.h * grid.dt * float(np.sum(tau * rho * z_hat ** 2))
        + 0.5 * epsilon * grid.h * float(cg.x @ cg.x)
        + grid.h * float(y_free.terminal @ cg.x)
    )

    diagnostics = {
        'epsilon': epsilon,
        'dual_value': dual_value,
        'free_terminal_norm': l2_norm(y_free.terminal, grid),
    }

    return _finish(prob, u, y, cg, SynthesisMethod.HUM, params if weight_mode == WeightMode.PAPER else None, diagnostics)


@dataclass
class VariationalSystem:
    '''Space-time normal equations K z = rhs of the weighted variational problem.

    L is the block-bidiagonal Crank-Nicolson operator on (y_1..y_nt), M averages node
    sources onto steps, state/control weights are normalized by e^{log_scale}.
    '''
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dynamics: sp.csr_matrix
    averaging: sp.csr_matrix
    initial_block: np.ndarray
    state_weights: np.ndarray
    control_weights: np.ndarray
    log_scale: float
    log_span: float


def assemble_variational_system(prob: PdeProblem, p: WeightParams, max_log_span: float = MAX_LOG_SPAN) -> VariationalSystem:
    grid = prob.grid
    nx, nt = grid.nx, grid.nt

    if nx * nt > VARIATIONAL_SIZE_CAP:
        raise ParameterError(f'space-time system with nt*nx={nt * nx} unknowns exceeds the cap of {VARIATIONAL_SIZE_CAP}')

    if prob.kernel is not None:
        raise ParameterError('fold the memory term into the source before assembling the variational system')

    if abs(p.T - grid.T) > 1e-12 * grid.T:
        raise ParameterError(f'weight horizon T={p.T} does not match the grid horizon {grid.T}')

    span = log_weight_span(p, grid)
    if span > max_log_span:
        raise InfeasibleWeightsError(span, max_log_span)

    log_wy, log_wu = log_control_weights(p, grid)
    finite = np.concatenate([log_wy[np.isfinite(log_wy)], log_wu[:, grid.omega_mask][np.isfinite(log_wu[:, grid.omega_mask])]])
    log_scale = float(finite.max())

    state_weights = np.exp(log_wy[1:] - log_scale).ravel()
    control_weights = (np.exp(log_wu - log_scale) * grid.omega_mask[None, :]).ravel()

    operator = assemble_operator(prob.mu, grid).to_sparse()
    identity = sp.identity(nx, format='csr')
    diagonal_block = identity / grid.dt + 0.5 * operator
    lower_block = -identity / grid.dt + 0.5 * operator

    dynamics = (sp.kron(sp.identity(nt), diagonal_block) + sp.kron(sp.eye(nt, k=-1), lower_block)).tocsr()
    averaging = sp.kron(0.5 * (sp.eye(nt, nt + 1, k=0) + sp.eye(nt, nt + 1, k=1)), identity).tocsr()

    initial_block = (identity / grid.dt - 0.5 * operator) @ prob.y0
    rhs = averaging @ prob.source_field().ravel()
    rhs[:nx] += initial_block

    matrix = (
        dynamics @ sp.diags(state_weights) @ dynamics.T
        + averaging @ sp.diags(control_weights) @ averaging.T
    ).tocsr()

    logger.debug('variational system: %d unknowns, log weight span %.1f, log scale %.1f', nt * nx, span, log_scale)

    return VariationalSystem(
        matrix=matrix,
        rhs=np.asarray(rhs),
        dynamics=dynamics,
        averaging=averaging,
        initial_block=np.asarray(initial_block),
        state_weights=state_weights,
        control_weights=control_weights,
        log_scale=log_scale,
        log_span=span,
    )


def weighted_variational_control(
    prob: PdeProblem,
    p: WeightParams,
    cg_tol: float = DEFAULT_CG_TOLERANCE,
    cg_max: int = DEFAULT_CG_MAX_ITERATIONS,
) -> ControlResult:
    '''Weighted space-time construction: ȳ = e^{2sΦ̃}L*z̄, ū = −1_ω s³ν³e^{2sΦ̃}z̄ with K z̄ = l.'''
    if prob.mu > 0.25:
        raise ParameterError(f'null control needs mu <= 1/4, got {prob.mu}')

    grid = prob.grid
    system = assemble_variational_system(prob, p)

    diagonal = system.matrix.diagonal()
    preconditioner = np.where(diagonal > 0.0, 1.0 / np.where(diagonal > 0.0, diagonal, 1.0), 1.0)

    cg = conjugate_gradient(lambda v: system.matrix @ v, system.rhs, tol=cg_tol, max_iter=cg_max, preconditioner=preconditioner)

    states = (system.state_weights * (system.dynamics.T @ cg.x)).reshape(grid.nt, grid.nx)
    values = np.vstack([prob.y0[None, :], states])
    u = -(system.control_weights * (system.averaging.T @ cg.x)).reshape(grid.nt + 1, grid.nx)

    y = Trajectory(values=values, grid=grid, label='y')
    diagnostics = {
        'log_weight_scale': system.log_scale,
        'log_weight_span': system.log_span,
    }

    return _finish(prob, u, y, cg, SynthesisMethod.VARIATIONAL, p, diagnostics)


def _synthesize(
    prob: PdeProblem,
    p: WeightParams,
    method: SynthesisMethod,
    epsilon: float,
    weight_mode: WeightMode,
    cg_tol: float,
    cg_max: int,
) -> ControlResult:
    if method == SynthesisMethod.HUM:
        return penalized_hum(prob, epsilon=epsilon, weight_mode=weight_mode, params=p, cg_tol=cg_tol, cg_max=cg_max)

    return weighted_variational_control(prob, p, cg_tol=cg_tol, cg_max=cg_max)


def _picard_weights(p: WeightParams, grid: SpaceTimeGrid) -> np.ndarray:
    '''e^{−2sΦ̃} over [0, T − δt], divided by its maximum.'''
    _, _, log_Phi = log_nu_weights(p, grid.t[:-1], grid.x)

    return np.asarray(np.exp(-log_Phi - np.max(-log_Phi)))


def memory_fixed_point(
    prob: PdeProblem,
    p: WeightParams,
    method: Union[SynthesisMethod, str] = SynthesisMethod.HUM,
    tol: float = DEFAULT_PICARD_TOLERANCE,
    max_iter: int = DEFAULT_PICARD_MAX_ITERATIONS,
    epsilon: float = DEFAULT_EPSILON,
    weight_mode: Union[WeightMode, str] = WeightMode.UNIFORM,
    cg_tol: float = DEFAULT_CG_TOLERANCE,
    cg_max: int = DEFAULT_CG_MAX_ITERATIONS,
    require_admissible: bool = True,
) -> Tuple[ControlResult, FixedPointReport]:
    '''Picard iteration w ↦ controlled trajectory of the problem with memory source ∫a·w folded in.

    Starts from w = 0 and stops when the e^{−sΦ̃}-weighted distance of successive iterates
    drops below `tol`; an unchanged memory source means the next iterate repeats the
    current one, so the distance is zero.
    '''
    method = SynthesisMethod(method)
    weight_mode = WeightMode(weight_mode)
    kernel = prob.kernel

    if kernel is None:
        raise ParameterError('memory_fixed_point needs a problem with a memory kernel')

    grid = prob.grid
    if require_admissible:
        certificate = kernel_admissibility(kernel, p, grid)
        if not certificate.admissible:
            raise ParameterError(f'{kernel.kind.value} kernel is not admissible for s={p.s} (log_sup={certificate.log_sup:g})')

    weights = _picard_weights(p, grid)
    cell = grid.h * grid.dt

    def weighted_norm(v: np.ndarray) -> float:
        return math.sqrt(cell * float(np.sum(weights * v[:-1] ** 2)))

    base = replace(prob, kernel=None)
    base_source = base.source_field()

    previous = np.zeros((grid.nt + 1, grid.nx))
    previous_source = memory_source(kernel, previous, grid)
    current_source = previous_source
    diffs: List[float] = []
    R_bound = 0.0
    converged = False
    result: Optional[ControlResult] = None
    iteration = 0

    for iteration in range(1, max_iter + 1):
        folded = replace(base, source=base_source + previous_source)
        result = _synthesize(folded, p, method, epsilon, weight_mode, cg_tol, cg_max)
        current = np.array(result.y.values)
        current_source = memory_source(kernel, current, grid)

        if np.array_equal(current_source, previous_source):
            diff = 0.0
        else:
            diff = weighted_norm(current - previous)

        diffs.append(diff)
        R_bound = max(R_bound, weighted_norm(current))
        logger.debug('picard iteration %d: weighted diff %.3e', iteration, diff)

        if diff <= tol:
            converged = True
            break

        previous, previous_source = current, current_source

    assert result is not None

    monotone = all(later <= earlier for earlier, later in zip(diffs[1:], diffs[2:]))
    if converged and not monotone:
        logger.warning('picard diffs were not monotone after the first iteration: %s', diffs)

    if not converged:
        logger.warning('picard iteration did not converge within %d iterations, last diff %.3e', max_iter, diffs[-1])
    else:
        logger.info('picard iteration converged after %d iterations', iteration)

    result.diagnostics['memory_source_max'] = float(np.max(np.abs(current_source)))
    report = FixedPointReport(iterations=iteration, diffs=diffs, converged=converged, R_bound=R_bound, monotone=monotone)
    result.fixed_point = report

    return result, report


def two_phase_control(
    prob: PdeProblem,
    p: WeightParams,
    t0: Optional[float] = None,
    method: Union[SynthesisMethod, str] = SynthesisMethod.HUM,
    tol: float = DEFAULT_PICARD_TOLERANCE,
    max_iter: int = DEFAULT_PICARD_MAX_ITERATIONS,
    epsilon: float = DEFAULT_EPSILON,
    weight_mode: Union[WeightMode, str] = WeightMode.UNIFORM,
    cg_tol: float = DEFAULT_CG_TOLERANCE,
    cg_max: int = DEFAULT_CG_MAX_ITERATIONS,
    require_admissible: bool = True,
) -> ControlResult:
    '''Free evolution with memory on [0, t0], then the memory fixed point on [t0, T] from w(t0).

    The memory integral restarts at t0; u vanishes on [0, t0). The free phase steps with backward Euler
    so rough data such as the step profile reaches t0 without undamped stiff modes.
    '''
    grid = prob.grid
    t0 = grid.T / 4.0 if t0 is None else t0

    if not 0.0 < t0 < grid.T / 2.0:
        raise ParameterError(f'switching time t0={t0} must lie in (0, T/2) with T={grid.T}')

    n0 = max(1, int(round(t0 / grid.dt)))
    if n0 >= grid.nt:
        raise ParameterError(f'switching time t0={t0} leaves no steps for the control phase')
    if grid.t[n0] >= grid.T / 2.0:
        raise ParameterError(f'switching time t0={t0} falls on t={grid.t[n0]:g}, not before T/2 on this time grid')

    # kernels depend on T − t, so the free phase runs on the full horizon and is cut at t0
    free = forward_solve(prob, stepper=BackwardEuler(prob.mu, grid))
    if free.blow_up is not None and free.blow_up.step <= n0:
        raise SolverError(f'free phase blew up: {free.blow_up}')

    switch_state = np.array(free.values[n0])
    remaining = grid.sub_grid(n0, grid.nt)
    phase_two_problem = PdeProblem(grid=remaining, mu=prob.mu, y0=switch_state, source=prob.source_field()[n0:], kernel=prob.kernel)
    phase_two_params = replace(p, T=remaining.T)

    report: Optional[FixedPointReport] = None
    if prob.kernel is not None:
        phase_two, report = memory_fixed_point(
            phase_two_problem,
            phase_two_params,
            method=method,
            tol=tol,
            max_iter=max_iter,
            epsilon=epsilon,
            weight_mode=weight_mode,
            cg_tol=cg_tol,
            cg_max=cg_max,
            require_admissible=require_admissible,
        )
    else:
        phase_two = _synthesize(phase_two_problem, phase_two_params, SynthesisMethod(method), epsilon, WeightMode(weight_mode), cg_tol, cg_max)

    values = np.vstack([free.values[:n0], phase_two.y.values])
    u = np.vstack([np.zeros((n0, grid.nx)), phase_two.u])

    diagnostics = dict(phase_two.diagnostics)
    diagnostics.update({
        't0': float(grid.t[n0]),
        'switch_norm': l2_norm(switch_state, grid),
    })

    return ControlResult(
        u=u,
        y=Trajectory(values=values, grid=grid, label='y'),
        terminal_norm=phase_two.terminal_norm,
        initial_norm=l2_norm(prob.y0, grid),
        cg_iterations=phase_two.cg_iterations,
        residual=phase_two.residual,
        weighted_cost=phase_two.weighted_cost,
        method=phase_two.method,
        diagnostics=diagnostics,
        fixed_point=report,
    )


def verify_null(res: ControlResult, rel_tol: float) -> bool:
    if res.initial_norm == 0.0:
        return res.terminal_norm <= rel_tol

    return res.terminal_norm <= rel_tol * res.initial_norm


def control_result_summary(res: ControlResult) -> Dict[str, Any]:
    summary: Dict[str, Any] = {
        'method': res.method,
        'terminal_norm': res.terminal_norm,
        'initial_norm': res.initial_norm,
        'ratio': res.ratio,
        'cg_iterations': res.cg_iterations,
        'residual': res.residual,
        'weighted_cost': res.weighted_cost,
        'converged': res.fixed_point.converged if res.fixed_point is not None else True,
    }
    summary.update({f'diagnostics.{key}': value for key, value in res.diagnostics.items()})

    if res.fixed_point is not None:
        summary.update({
            'picard_iterations': res.fixed_point.iterations,
            'picard_diffs': list(res.fixed_point.diffs),
            'picard_monotone': res.fixed_point.monotone,
            'R_bound': res.fixed_point.R_bound,
        })

    return summary
