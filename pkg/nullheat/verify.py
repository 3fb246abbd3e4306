import math
import logging

from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union
from dataclasses import dataclass, field

import numpy as np

from scipy.linalg import eigh_tridiagonal
from scipy.special import logsumexp

from .discretization import SpaceTimeGrid, assemble_operator, discrete_hardy_ratio, spectral_bottom
from .errors import ParameterError, UndefinedInputError
from .evolve import adjoint_solve
from .weights import WeightParams, extremal_weights, log_nu_weights, psi, Psi


__all__ = [
    'InequalityReport',
    'HardyPoincareEstimate',
    'SpectralScanRow',
    'HardyRow',
    'CarlemanSuite',
    'improved_hp_constant',
    'carleman_ratio',
    'caccioppoli_ratio',
    'carleman_suite',
    'caccioppoli_suite',
    'supercritical_scan',
    'classify_spectral',
    'hardy_suite',
    'HARDY_FAMILY',
]

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 1.0 / 16.0

BOUNDED_TOLERANCE = 0.10
COLLAPSE_TOLERANCE = 0.10

HP_QUADRATURE_NODES = 2000

TestFunction = Callable[[np.ndarray], np.ndarray]


@dataclass
class InequalityReport:
    lhs: float
    rhs: float
    ratio: float
    log_lhs: float
    log_rhs: float
    log_ratio: float
    params: Dict[str, Any] = field(default_factory=dict)
    sample: str = ''
    components: Dict[str, float] = field(default_factory=dict)

    @property
    def flagged(self) -> bool:
        return math.isinf(self.ratio)

    def as_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {
            'sample': self.sample,
            'lhs': self.lhs,
            'rhs': self.rhs,
            'ratio': self.ratio,
            'log_lhs': self.log_lhs,
            'log_rhs': self.log_rhs,
            'log_ratio': self.log_ratio,
        }
        row.update({f'log_{name}': value for name, value in self.components.items()})

        return row


def _exp(value: float) -> float:
    if value == -math.inf:
        return 0.0

    return math.exp(value) if value < 709.0 else math.inf


def _report(log_lhs: float, log_rhs: float, params: Dict[str, Any], sample: str, components: Dict[str, float]) -> InequalityReport:
    if log_rhs == -math.inf:
        log_ratio = -math.inf if log_lhs == -math.inf else math.inf
        if log_ratio == math.inf:
            logger.warning('%s: right-hand side vanishes with a positive left-hand side', sample)
    else:
        log_ratio = log_lhs - log_rhs

    return InequalityReport(
        lhs=_exp(log_lhs),
        rhs=_exp(log_rhs),
        ratio=_exp(log_ratio),
        log_lhs=log_lhs,
        log_rhs=log_rhs,
        log_ratio=log_ratio,
        params=params,
        sample=sample,
        components=components,
    )


def _log_integral(log_weight: np.ndarray, integrand: np.ndarray, cell: float) -> float:
    '''log Σ e^{log_weight}·integrand·cell for a non-negative integrand.'''
    log_weight, integrand = np.broadcast_arrays(log_weight, integrand)

    with np.errstate(divide='ignore'):
        terms = log_weight + np.log(integrand)

    terms = terms[np.isfinite(terms)]
    if terms.size == 0:
        return -math.inf

    return float(logsumexp(terms)) + math.log(cell)


def _log_add(*values: float) -> float:
    finite = [value for value in values if value != -math.inf]
    if len(finite) == 0:
        return -math.inf

    return float(logsumexp(finite))


def _gradient(z: np.ndarray, h: float) -> np.ndarray:
    '''Forward difference quotients on the nx + 1 cells, with zero boundary values.'''
    padded = np.pad(z, ((0, 0), (1, 1)))

    return np.diff(padded, axis=1) / h


def _window_rows(grid: SpaceTimeGrid, window: float, include_start: bool = False) -> np.ndarray:
    if not 0.0 < window < 0.5:
        raise ParameterError(f'time window must lie in (0, 1/2), got {window}')

    slack = 1e-12 * grid.T
    upper = grid.t <= (1.0 - window) * grid.T + slack
    lower = np.full(grid.t.shape, True) if include_start else grid.t >= window * grid.T - slack

    rows = np.flatnonzero(lower & upper & (grid.t < grid.T))
    if rows.size == 0:
        raise ParameterError(f'no time step of the grid falls into the window [{window}T, {1.0 - window}T]')

    return rows


def _midpoints(grid: SpaceTimeGrid) -> np.ndarray:
    return (np.arange(grid.nx + 1) + 0.5) * grid.h


def _check_horizon(p: WeightParams, grid: SpaceTimeGrid) -> None:
    if abs(p.T - grid.T) > 1e-12 * grid.T:
        raise ParameterError(f'weight horizon T={p.T} does not match the grid horizon {grid.T}')


def improved_hp_constant(
    eta: float,
    test_functions: Union[Mapping[str, TestFunction], Sequence[TestFunction]],
    nx: int = HP_QUADRATURE_NODES,
) -> 'HardyPoincareEstimate':
    '''Lower bound on C(η) in ∫x^η z_x² ≤ C ∫(z_x² − z²/(4x²)), as the largest sampled ratio.'''
    if not eta > 0.0:
        raise ParameterError(f'eta must be positive, got {eta}')

    if not isinstance(test_functions, Mapping):
        test_functions = {getattr(function, '__name__', f'sample_{index}'): function for index, function in enumerate(test_functions)}

    h = 1.0 / (nx + 1)
    x = np.arange(1, nx + 1) * h
    midpoints = (np.arange(nx + 1) + 0.5) * h

    ratios: Dict[str, float] = {}
    excluded: List[str] = []

    for name, function in test_functions.items():
        z = np.asarray(function(x), dtype=float)
        gradient = _gradient(z[None, :], h)[0]

        numerator = float(np.sum(midpoints ** eta * gradient ** 2)) * h
        defect = float(np.sum(gradient ** 2)) * h - 0.25 * float(np.sum(z ** 2 / x ** 2)) * h

        if not np.any(z != 0.0) or not defect > 0.0:
            logger.warning('excluding test function %s from the improved Hardy-Poincare estimate (defect %.3e)', name, defect)
            excluded.append(name)
            continue

        ratios[name] = numerator / defect

    if len(ratios) == 0:
        raise UndefinedInputError('no test function with a positive Hardy defect')

    return HardyPoincareEstimate(eta=eta, value=max(ratios.values()), ratios=ratios, excluded=excluded)


@dataclass
class HardyPoincareEstimate:
    eta: float
    value: float
    ratios: Dict[str, float]
    excluded: List[str] = field(default_factory=list)


def carleman_ratio(
    p: WeightParams,
    g: Optional[np.ndarray],
    zT: np.ndarray,
    grid: SpaceTimeGrid,
    window: float = DEFAULT_WINDOW,
    form: str = 'interior',
    eta: Optional[float] = None,
    sample: str = '',
) -> InequalityReport:
    '''Both sides of the interior-observation Carleman estimate for z = adjoint_solve(g, zT).

    `interior` compares 𝔍(z) with ∬ g²e^{2sΦ} + ∬_{ω′} s³θ³z²e^{2sΦ} on [εT, (1 − ε)T];
    `modified` compares ‖e^{sφ̂(0)}z(0)‖² + ∬ νz²e^{2sφ̃} with
    e^{2s(φ̂(0) − φ̌(5T/8))}(∬ g²e^{2sΦ̃} + ∬_ω s³ν³z²e^{2sΦ̃}) on [0, (1 − ε)T].
    '''
    if form not in ('interior', 'modified'):
        raise ParameterError(f'unknown carleman form "{form}"')

    _check_horizon(p, grid)
    rows = _window_rows(grid, window, include_start=form == 'modified')
    z = adjoint_solve(g, zT, p.mu, grid).values
    source = np.zeros_like(z) if g is None else np.asarray(g, dtype=float)
    eta = p.eta if eta is None else eta

    params = p.as_dict()
    params.update({'window': window, 'form': form, 'eta': eta, 'nx': grid.nx, 'nt': grid.nt})

    if form == 'modified':
        return _modified_carleman(p, z, source, grid, rows, params, sample)

    return _interior_carleman(p, z, source, grid, rows, eta, params, sample)


def _interior_carleman(
    p: WeightParams,
    z: np.ndarray,
    g: np.ndarray,
    grid: SpaceTimeGrid,
    rows: np.ndarray,
    eta: float,
    params: Dict[str, Any],
    sample: str,
) -> InequalityReport:
    s = p.s
    cell = grid.h * grid.dt
    times = grid.t[rows]
    theta = ((times * (p.T - times)) ** (-p.k))[:, None]
    x = grid.x[None, :]
    midpoints = _midpoints(grid)[None, :]

    log_phi = 2.0 * s * theta * psi(p, grid.x)[None, :]
    log_phi_cells = 2.0 * s * theta * psi(p, midpoints)
    log_Phi = 2.0 * s * theta * Psi(p, grid.x)[None, :]

    z_rows = z[rows]
    gradient = _gradient(z_rows, grid.h)
    log_s_theta = np.log(s * theta)

    components = {
        'x2': _log_integral(3.0 * log_s_theta + log_phi, x ** 2 * z_rows ** 2, cell),
    }

    if math.isclose(p.mu, 0.25, rel_tol=0.0, abs_tol=1e-15):
        components['gradient'] = _log_integral(log_s_theta + log_phi_cells, midpoints ** eta * gradient ** 2, cell)
    else:
        components['gradient'] = _log_integral(log_s_theta + log_phi_cells, gradient ** 2, cell)
        components['hardy'] = _log_integral(log_s_theta + log_phi, z_rows ** 2 / x ** 2, cell)

    components['gamma'] = _log_integral(log_s_theta + log_phi, z_rows ** 2 / x ** p.gamma, cell)

    observation = grid.omega_prime_mask[None, :]
    components['source'] = _log_integral(log_Phi, g[rows] ** 2, cell)
    components['observation'] = _log_integral(3.0 * log_s_theta + log_Phi, np.where(observation, z_rows ** 2, 0.0), cell)

    log_lhs = _log_add(*(components[name] for name in ('x2', 'gradient', 'hardy', 'gamma') if name in components))
    log_rhs = _log_add(components['source'], components['observation'])

    return _report(log_lhs, log_rhs, params, sample, components)


def _modified_carleman(
    p: WeightParams,
    z: np.ndarray,
    g: np.ndarray,
    grid: SpaceTimeGrid,
    rows: np.ndarray,
    params: Dict[str, Any],
    sample: str,
) -> InequalityReport:
    s = p.s
    cell = grid.h * grid.dt
    nu_values, log_phi, log_Phi = log_nu_weights(p, grid.t[rows], grid.x)
    nu_column = nu_values[:, None]
    z_rows = z[rows]

    hatphi_start = extremal_weights(p, 0.0).hatphi
    gap = 2.0 * s * (hatphi_start - extremal_weights(p, 5.0 * p.T / 8.0).checkphi)

    initial_energy = grid.h * float(np.sum(z[0] ** 2))
    components = {
        'initial': 2.0 * s * hatphi_start + math.log(initial_energy) if initial_energy > 0.0 else -math.inf,
        'nu': _log_integral(np.log(nu_column) + log_phi, z_rows ** 2, cell),
        'source': _log_integral(log_Phi, g[rows] ** 2, cell),
        'observation': _log_integral(
            3.0 * np.log(s * nu_column) + log_Phi,
            np.where(grid.omega_mask[None, :], z_rows ** 2, 0.0),
            cell,
        ),
        'gap': gap,
    }

    log_lhs = _log_add(components['initial'], components['nu'])
    log_rhs = _log_add(components['source'], components['observation'])
    if log_rhs != -math.inf:
        log_rhs += gap

    return _report(log_lhs, log_rhs, params, sample, components)


def caccioppoli_ratio(
    p: WeightParams,
    omega_pp: Tuple[float, float],
    g: Optional[np.ndarray],
    zT: np.ndarray,
    grid: SpaceTimeGrid,
    weight: str = 'psi',
    window: float = DEFAULT_WINDOW,
    sample: str = '',
) -> InequalityReport:
    '''∬_{ω″} z_x²e^{2sφ} against ∬_{ω′} (g² + s²θ²z²)e^{2sφ} with φ = θ·ψ or φ = θ·Ψ.'''
    if weight not in ('psi', 'Psi'):
        raise ParameterError(f'unknown caccioppoli weight "{weight}", use psi or Psi')

    lo, hi = omega_pp
    alpha_prime, beta_prime = grid.omega_prime
    if not alpha_prime < lo < hi < beta_prime:
        raise ParameterError(f'closure of omega_pp={omega_pp} must lie inside omega_prime={grid.omega_prime}')

    _check_horizon(p, grid)
    rows = _window_rows(grid, window)
    z = adjoint_solve(g, zT, p.mu, grid).values[rows]
    source = np.zeros_like(z) if g is None else np.asarray(g, dtype=float)[rows]

    profile = psi if weight == 'psi' else Psi
    s = p.s
    cell = grid.h * grid.dt
    times = grid.t[rows]
    theta = ((times * (p.T - times)) ** (-p.k))[:, None]
    midpoints = _midpoints(grid)

    log_phi = 2.0 * s * theta * profile(p, grid.x)[None, :]
    log_phi_cells = 2.0 * s * theta * profile(p, midpoints)[None, :]

    inner = ((midpoints > lo) & (midpoints < hi))[None, :]
    outer = grid.omega_prime_mask[None, :]
    gradient = _gradient(z, grid.h)

    components = {
        'gradient': _log_integral(log_phi_cells, np.where(inner, gradient ** 2, 0.0), cell),
        'source': _log_integral(log_phi, np.where(outer, source ** 2, 0.0), cell),
        'zero_order': _log_integral(2.0 * np.log(s * theta) + log_phi, np.where(outer, z ** 2, 0.0), cell),
    }

    params = p.as_dict()
    params.update({'window': window, 'weight': weight, 'omega_pp': list(omega_pp), 'nx': grid.nx, 'nt': grid.nt})

    return _report(components['gradient'], _log_add(components['source'], components['zero_order']), params, sample, components)


def _draw(grid: SpaceTimeGrid, seed: int, index: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng([seed, index])
    zT = rng.standard_normal(grid.nx)
    g = rng.standard_normal((grid.nt + 1, grid.nx))

    return g, zT


@dataclass
class CarlemanSuite:
    reports: List[InequalityReport]
    max_ratio: float
    max_log_ratio: float
    seed: int
    s: float

    def rows(self) -> List[Dict[str, Any]]:
        return [report.as_row() for report in self.reports]


def _suite(reports: List[InequalityReport], seed: int, s: float) -> CarlemanSuite:
    log_ratios = [report.log_ratio for report in reports]

    return CarlemanSuite(
        reports=reports,
        max_ratio=max(report.ratio for report in reports),
        max_log_ratio=max(log_ratios),
        seed=seed,
        s=s,
    )


def carleman_suite(
    p: WeightParams,
    grid: SpaceTimeGrid,
    samples: int = 20,
    seed: int = 0,
    window: float = DEFAULT_WINDOW,
    form: str = 'interior',
) -> CarlemanSuite:
    '''Empirical Carleman constant over seeded random (g, zT) draws; draw i uses default_rng([seed, i]).'''
    if samples < 1:
        raise ParameterError(f'suite needs at least one sample, got {samples}')

    reports = []
    for index in range(samples):
        g, zT = _draw(grid, seed, index)
        reports.append(carleman_ratio(p, g, zT, grid, window=window, form=form, sample=f'seed={seed}/draw={index}'))

    suite = _suite(reports, seed, p.s)
    logger.info('carleman suite (%s, s=%g): max log ratio %.6g over %d draws', form, p.s, suite.max_log_ratio, samples)

    return suite


def caccioppoli_suite(
    p: WeightParams,
    grid: SpaceTimeGrid,
    omega_pp: Tuple[float, float],
    samples: int = 20,
    seed: int = 0,
    window: float = DEFAULT_WINDOW,
    weight: str = 'psi',
) -> CarlemanSuite:
    if samples < 1:
        raise ParameterError(f'suite needs at least one sample, got {samples}')

    reports = []
    for index in range(samples):
        g, zT = _draw(grid, seed, index)
        reports.append(caccioppoli_ratio(p, omega_pp, g, zT, grid, weight=weight, window=window, sample=f'seed={seed}/draw={index}'))

    return _suite(reports, seed, p.s)


@dataclass
class SpectralScanRow:
    mu: float
    nx: List[int]
    values: List[float]
    classification: str


def classify_spectral(values: Sequence[float], bounded_tol: float = BOUNDED_TOLERANCE, collapse_tol: float = COLLAPSE_TOLERANCE) -> str:
    '''Classify λ_min under refinement by the trend of its decrements d_i = λ_i − λ_{i+1}.

    `collapsing` when every decrement is positive and none shrinks by more than `collapse_tol`:
    a constant drop per doubling is a log-divergent fall. `bounded` when the decrements shrink
    in magnitude, else `indeterminate`. Two grid sizes carry no trend; they count as `bounded`
    when λ_min moves by less than `bounded_tol` (relative).
    '''
    if len(values) < 2:
        raise ParameterError('classification needs at least two grid sizes')

    decrements = [previous - current for previous, current in zip(values[:-1], values[1:])]

    if len(decrements) == 1:
        relative = abs(decrements[0]) / max(abs(values[0]), np.finfo(float).tiny)
        return 'bounded' if relative < bounded_tol else 'indeterminate'

    pairs = list(zip(decrements[:-1], decrements[1:]))

    if all(d > 0.0 for d in decrements) and all(later >= (1.0 - collapse_tol) * earlier for earlier, later in pairs):
        return 'collapsing'

    if all(abs(later) < abs(earlier) for earlier, later in pairs):
        return 'bounded'

    return 'indeterminate'


def supercritical_scan(
    mu_list: Sequence[float],
    nx_list: Sequence[int],
    bounded_tol: float = BOUNDED_TOLERANCE,
    collapse_tol: float = COLLAPSE_TOLERANCE,
) -> List[SpectralScanRow]:
    if any(later <= earlier for earlier, later in zip(nx_list[:-1], nx_list[1:])):
        raise ParameterError(f'nx_list must be increasing, got {list(nx_list)}')

    rows = []
    for mu in mu_list:
        values = [spectral_bottom(mu, nx) for nx in nx_list]
        classification = classify_spectral(values, bounded_tol, collapse_tol)
        logger.debug('spectral scan mu=%g: %s -> %s', mu, values, classification)
        rows.append(SpectralScanRow(mu=float(mu), nx=list(nx_list), values=values, classification=classification))

    return rows


def _ground_state(x: np.ndarray) -> np.ndarray:
    grid = SpaceTimeGrid(nx=x.shape[0], nt=1, T=1.0)
    operator = assemble_operator(0.0, grid)
    _, vectors = eigh_tridiagonal(operator.diagonal, operator.off_diagonal, select='i', select_range=(0, 0))
    vector = vectors[:, 0]

    return np.asarray(vector * np.sign(vector[vector.shape[0] // 2]))


HARDY_FAMILY: Dict[str, TestFunction] = {
    'parabola': lambda x: x * (1.0 - x),
    'near_extremal': lambda x: x ** 0.6 * (1.0 - x),
    'sine': lambda x: np.sin(np.pi * x),
    'ground_state': _ground_state,
}


@dataclass
class HardyRow:
    function: str
    nx: int
    ratio: float
    bound: float
    ok: bool


def hardy_suite(nx_list: Sequence[int], family: Optional[Mapping[str, TestFunction]] = None) -> List[HardyRow]:
    '''discrete_hardy_ratio for every test function and grid, checked against 1 + 5h.'''
    family = family if family is not None else HARDY_FAMILY
    rows = []

    for nx in nx_list:
        grid = SpaceTimeGrid(nx=nx, nt=1, T=1.0)
        bound = 1.0 + 5.0 * grid.h
        for name, function in family.items():
            ratio = discrete_hardy_ratio(function(grid.x), grid)
            rows.append(HardyRow(function=name, nx=nx, ratio=ratio, bound=bound, ok=ratio <= bound))

    return rows
