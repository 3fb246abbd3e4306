import logging

from typing import Any, Dict, Optional, Tuple, Union, TYPE_CHECKING
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from scipy.linalg import eigvalsh_tridiagonal, LinAlgError

from .errors import ParameterError, SolverError, UndefinedInputError

if TYPE_CHECKING:  # pragma: no cover
    from .evolve import BlowUpReport
    from .weights import MemoryKernel


__all__ = [
    'SpaceTimeGrid',
    'Trajectory',
    'TridiagonalMatrix',
    'assemble_operator',
    'memory_quadrature',
    'memory_source',
    'spectral_bottom',
    'discrete_hardy_ratio',
    'l2_norm',
    'mu_norm_squared',
    'trapezoid_weights',
    'trajectory_to_csv',
]

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]


@dataclass(frozen=True)
class SpaceTimeGrid:
    '''Uniform interior nodes x_i = i·h, i = 1..nx, h = 1/(nx + 1), and times t_n = n·δt, n = 0..nt.

    x = 0 is never a node, so the inverse-square potential is only evaluated at x ≥ h.
    '''
    nx: int
    nt: int
    T: float
    omega: Interval = (0.3, 0.8)
    omega_prime: Interval = (0.4, 0.7)

    def __post_init__(self) -> None:
        if self.nx < 1 or self.nt < 1:
            raise ParameterError(f'grid needs nx >= 1 and nt >= 1, got nx={self.nx}, nt={self.nt}')

        if not self.T > 0.0:
            raise ParameterError(f'horizon T must be positive, got {self.T}')

        alpha, beta = self.omega
        alpha_prime, beta_prime = self.omega_prime

        if not 0.0 <= alpha < beta <= 1.0:
            raise ParameterError(f'omega={self.omega} is not a subinterval of (0, 1)')

        if not (0.0 < alpha_prime < beta_prime < 1.0 and alpha < alpha_prime and beta_prime < beta):
            raise ParameterError(f'closure of omega_prime={self.omega_prime} must lie inside omega={self.omega}')

    @property
    def h(self) -> float:
        return 1.0 / (self.nx + 1)

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(1, self.nx + 1) * self.h

    @cached_property
    def t(self) -> np.ndarray:
        times = np.arange(self.nt + 1) * self.dt
        # weights vanish exactly on the t = T row
        times[-1] = self.T

        return times

    def interval_mask(self, interval: Interval) -> np.ndarray:
        lo, hi = interval

        return (self.x > lo) & (self.x < hi)

    @cached_property
    def omega_mask(self) -> np.ndarray:
        return self.interval_mask(self.omega)

    @cached_property
    def omega_prime_mask(self) -> np.ndarray:
        return self.interval_mask(self.omega_prime)

    def sub_grid(self, n_start: int, n_stop: int) -> 'SpaceTimeGrid':
        '''Grid on [t_{n_start}, t_{n_stop}] with the time origin moved to t_{n_start}.'''
        if not 0 <= n_start < n_stop <= self.nt:
            raise ParameterError(f'invalid time window [{n_start}, {n_stop}] for nt={self.nt}')

        steps = n_stop - n_start

        return SpaceTimeGrid(nx=self.nx, nt=steps, T=steps * self.dt, omega=self.omega, omega_prime=self.omega_prime)


@dataclass(frozen=True)
class Trajectory:
    values: np.ndarray
    grid: SpaceTimeGrid
    label: str = 'y'
    blow_up: Optional['BlowUpReport'] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        expected = (self.grid.nt + 1, self.grid.nx)
        if self.values.shape != expected:
            raise ParameterError(f'trajectory shape {self.values.shape} does not match grid {expected}')

        self.values.flags.writeable = False

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def norms(self) -> np.ndarray:
        return np.sqrt(self.grid.h * np.sum(self.values ** 2, axis=1))


@dataclass(frozen=True)
class TridiagonalMatrix:
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    @property
    def size(self) -> int:
        return int(self.diagonal.shape[0])

    def to_sparse(self) -> sp.csr_matrix:
        return sp.diags([self.off_diagonal, self.diagonal, self.off_diagonal], [-1, 0, 1], format='csr')

    def dot(self, v: np.ndarray) -> np.ndarray:
        result = self.diagonal * v
        result[:-1] += self.off_diagonal * v[1:]
        result[1:] += self.off_diagonal * v[:-1]

        return result


def _stencil(mu: float, nx: int) -> TridiagonalMatrix:
    h = 1.0 / (nx + 1)
    x = np.arange(1, nx + 1) * h
    diagonal = np.full(nx, 2.0 / h ** 2) - mu / x ** 2

    return TridiagonalMatrix(diagonal=diagonal, off_diagonal=np.full(nx - 1, -1.0 / h ** 2))


def assemble_operator(mu: float, grid: SpaceTimeGrid) -> TridiagonalMatrix:
    '''A_h = −D_xx − μ/x² with homogeneous Dirichlet closure.'''
    return _stencil(mu, grid.nx)


def trapezoid_weights(n: int) -> np.ndarray:
    weights = np.ones(n + 1)
    weights[0] = weights[-1] = 0.5

    return weights


def memory_quadrature(kern: 'MemoryKernel', w: Union[Trajectory, np.ndarray], n: int, grid: Optional[SpaceTimeGrid] = None) -> np.ndarray:
    '''Trapezoidal approximation of ∫_0^{t_n} a(t_n, s, x_i) w(s, x_i) ds at every node.'''
    if isinstance(w, Trajectory):
        grid = w.grid
        history = w.values
    else:
        if grid is None:
            raise ParameterError('a grid is needed for a plain history array')
        history = w

    if not 0 <= n <= grid.nt:
        raise ParameterError(f'time index {n} outside [0, {grid.nt}]')

    if n == 0:
        return np.zeros(grid.nx)

    s = grid.t[:n + 1]
    kernel = kern.evaluate(grid.t[n], s[:, None], grid.x[None, :], grid.T)
    weights = grid.dt * trapezoid_weights(n)

    return np.asarray(weights @ (kernel * history[:n + 1]))


def memory_source(kern: 'MemoryKernel', w: Union[Trajectory, np.ndarray], grid: Optional[SpaceTimeGrid] = None) -> np.ndarray:
    '''memory_quadrature at every time index, stacked as an (nt + 1) × nx field.'''
    if isinstance(w, Trajectory):
        grid = w.grid
        history = w.values
    else:
        if grid is None:
            raise ParameterError('a grid is needed for a plain history array')
        history = w

    return np.vstack([memory_quadrature(kern, history, n, grid) for n in range(grid.nt + 1)])


def spectral_bottom(mu: float, nx: int) -> float:
    '''Smallest eigenvalue of the discrete singular operator by Sturm-count bisection.'''
    if nx < 3:
        raise ParameterError(f'spectral_bottom needs nx >= 3, got {nx}')

    operator = _stencil(mu, nx)

    try:
        values = eigvalsh_tridiagonal(
            operator.diagonal,
            operator.off_diagonal,
            select='i',
            select_range=(0, 0),
            lapack_driver='stebz',
        )
    except LinAlgError as e:
        raise SolverError(f'eigenvalue bisection failed for mu={mu}, nx={nx}: {e}') from e

    return float(values[0])


def _grid_spacing(grid: Optional[SpaceTimeGrid], size: int) -> float:
    if grid is None:
        return 1.0 / (size + 1)

    if grid.nx != size:
        raise ParameterError(f'vector of length {size} does not live on a grid with nx={grid.nx}')

    return grid.h


def discrete_hardy_ratio(y: np.ndarray, grid: Optional[SpaceTimeGrid] = None) -> float:
    '''(¼ Σ y_i²/x_i² h) / (Σ ((y_{i+1} − y_i)/h)² h) with zero boundary values.'''
    values = np.asarray(y, dtype=float)
    h = _grid_spacing(grid, values.shape[0])
    x = np.arange(1, values.shape[0] + 1) * h
    padded = np.concatenate([[0.0], values, [0.0]])

    denominator = float(np.sum(np.diff(padded) ** 2) / h)
    if denominator == 0.0:
        raise UndefinedInputError('hardy ratio is undefined for y = 0')

    numerator = 0.25 * float(np.sum(values ** 2 / x ** 2)) * h

    return numerator / denominator


def l2_norm(v: np.ndarray, grid: SpaceTimeGrid) -> float:
    return float(np.sqrt(grid.h * np.sum(np.asarray(v) ** 2)))


def mu_norm_squared(v: np.ndarray, mu: float, grid: SpaceTimeGrid) -> float:
    '''Σ (difference quotients)² h − μ Σ v_i²/x_i² h.'''
    padded = np.concatenate([[0.0], np.asarray(v, dtype=float), [0.0]])
    gradient = float(np.sum(np.diff(padded) ** 2)) / grid.h
    potential = mu * grid.h * float(np.sum(np.asarray(v) ** 2 / grid.x ** 2))

    return gradient - potential


def trajectory_to_csv(traj: Trajectory, path: str) -> None:
    header = ','.join(['t'] + [f'x_{i}' for i in range(1, traj.grid.nx + 1)])
    table = np.column_stack([traj.grid.t, traj.values])

    np.savetxt(path, table, delimiter=',', header=header, comments='', fmt='%.12e')
    logger.debug('wrote %s trajectory to %s', traj.label, path)
