import math
import logging

from typing import Callable, Optional, Tuple, Union
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from scipy.sparse.linalg import splu
from scipy.special import jv
from scipy.optimize import brentq

from .discretization import SpaceTimeGrid, Trajectory, assemble_operator, memory_quadrature, l2_norm, mu_norm_squared, trapezoid_weights
from .errors import ParameterError, SolverError
from .weights import MemoryKernel


__all__ = [
    'BlowUpReport',
    'PdeProblem',
    'EnergyReport',
    'CrankNicolson',
    'BackwardEuler',
    'forward_solve',
    'adjoint_solve',
    'control_adjoint',
    'energy_check',
    'bessel_mode',
    'initial_profile',
]

logger = logging.getLogger(__name__)

BLOWUP_THRESHOLD = 1e150

ENERGY_TOLERANCE = 1e-14

SourceField = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class BlowUpReport:
    step: int
    time: float
    max_abs: float

    def __str__(self) -> str:
        return f'blow-up at step {self.step} (t={self.time:.6g}), max |y| = {self.max_abs:.6g}'


@dataclass(frozen=True)
class PdeProblem:
    grid: SpaceTimeGrid
    mu: float
    y0: np.ndarray
    source: Optional[SourceField] = None
    kernel: Optional[MemoryKernel] = None

    def __post_init__(self) -> None:
        if np.shape(self.y0) != (self.grid.nx,):
            raise ParameterError(f'y0 has shape {np.shape(self.y0)}, expected ({self.grid.nx},)')

    @property
    def T(self) -> float:
        return self.grid.T

    def source_field(self) -> np.ndarray:
        shape = (self.grid.nt + 1, self.grid.nx)

        if self.source is None:
            return np.zeros(shape)

        if callable(self.source):
            tt, xx = np.meshgrid(self.grid.t, self.grid.x, indexing='ij')
            field = np.asarray(self.source(tt, xx), dtype=float)
        else:
            field = np.asarray(self.source, dtype=float)

        if field.shape != shape:
            raise ParameterError(f'source has shape {field.shape}, expected {shape}')

        return field


@dataclass(frozen=True)
class EnergyReport:
    lhs: float
    rhs_data: float
    ratio: float
    violation: bool


class CrankNicolson:
    '''(I + θδt·A) y_n = (I − (1−θ)δt·A) y_{n−1} + δt·s_n with θ = 1/2 and one factorization per grid and μ.'''
    theta = 0.5

    def __init__(self, mu: float, grid: SpaceTimeGrid) -> None:
        self.grid = grid
        self.mu = mu
        self.operator = assemble_operator(mu, grid).to_sparse()

        identity = sp.identity(grid.nx, format='csr')
        self.implicit = (identity + self.theta * grid.dt * self.operator).tocsc()
        self.explicit = (identity - (1.0 - self.theta) * grid.dt * self.operator).tocsr()

        try:
            self._factor = splu(self.implicit)
        except RuntimeError as e:
            raise SolverError(f'{self.name} system is singular for mu={mu}, nx={grid.nx}, dt={grid.dt}: {e}') from e

    @property
    def name(self) -> str:
        return 'Crank-Nicolson'

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return np.asarray(self._factor.solve(rhs))

    def step(self, y: np.ndarray, source: Optional[np.ndarray] = None) -> np.ndarray:
        rhs = self.explicit @ y
        if source is not None:
            rhs = rhs + self.grid.dt * source

        return self.solve(rhs)


class BackwardEuler(CrankNicolson):
    '''Fully implicit stepping; its amplification 1/(1 + δt·λ) damps the stiff modes Crank-Nicolson only flips.'''
    theta = 1.0

    @property
    def name(self) -> str:
        return 'backward Euler'


def _check_blow_up(values: np.ndarray, n: int, grid: SpaceTimeGrid) -> Optional[BlowUpReport]:
    row = values[n]
    finite = np.isfinite(row)
    max_abs = float(np.max(np.abs(row[finite]))) if np.any(finite) else math.inf

    if np.all(finite) and max_abs <= BLOWUP_THRESHOLD:
        return None

    return BlowUpReport(step=n, time=float(grid.t[n]), max_abs=max_abs if np.all(finite) else math.inf)


def forward_solve(prob: PdeProblem, u: Optional[np.ndarray] = None, stepper: Optional[CrankNicolson] = None) -> Trajectory:
    grid = prob.grid
    stepper = stepper or CrankNicolson(prob.mu, grid)

    forcing = prob.source_field()
    if u is not None:
        control = np.asarray(u, dtype=float)
        if control.shape != forcing.shape:
            raise ParameterError(f'control has shape {control.shape}, expected {forcing.shape}')
        forcing = forcing + control * grid.omega_mask[None, :]

    kernel = prob.kernel if prob.kernel is not None and prob.kernel.amplitude != 0.0 else None

    values = np.zeros((grid.nt + 1, grid.nx))
    values[0] = prob.y0
    blow_up: Optional[BlowUpReport] = None
    memory_previous = np.zeros(grid.nx)

    for n in range(1, grid.nt + 1):
        source = 0.5 * (forcing[n] + forcing[n - 1])

        if kernel is not None:
            # lagged memory: y_n is predicted by y_{n-1} inside the quadrature at t_n
            values[n] = values[n - 1]
            memory_current = memory_quadrature(kernel, values, n, grid)
            source = source + 0.5 * (memory_previous + memory_current)

        values[n] = stepper.step(values[n - 1], source)

        if kernel is not None:
            memory_previous = memory_quadrature(kernel, values, n, grid)

        blow_up = _check_blow_up(values, n, grid)
        if blow_up is not None:
            logger.warning('forward solve with mu=%g stopped: %s', prob.mu, blow_up)
            values[n + 1:] = np.nan
            break

    return Trajectory(values=values, grid=grid, label='y', blow_up=blow_up)


def adjoint_solve(g: Optional[np.ndarray], zT: np.ndarray, mu: float, grid: SpaceTimeGrid, stepper: Optional[CrankNicolson] = None) -> Trajectory:
    '''Backward Crank-Nicolson for −z_t + A z = g from z(T) = zT.'''
    stepper = stepper or CrankNicolson(mu, grid)

    values = np.zeros((grid.nt + 1, grid.nx))
    values[-1] = zT

    for n in range(grid.nt, 0, -1):
        source = None if g is None else 0.5 * (g[n] + g[n - 1])
        values[n - 1] = stepper.step(values[n], source)

    return Trajectory(values=values, grid=grid, label='z')


def control_adjoint(zT: np.ndarray, mu: float, grid: SpaceTimeGrid, stepper: Optional[CrankNicolson] = None) -> np.ndarray:
    '''Node field ž with ⟨y(T), zT⟩_h = hδt Σ_m τ_m ⟨U_m, ž_m⟩ for y = forward_solve(0, U).

    τ are the trapezoid weights (½, 1, ..., 1, ½); ž_m = (ζ_m + ζ_{m+1}) / (2τ_m) with
    ζ_n = (I + δt/2·A)^{-1} z_n and ζ_0 = ζ_{nt+1} = 0.
    '''
    stepper = stepper or CrankNicolson(mu, grid)
    z = adjoint_solve(None, zT, mu, grid, stepper=stepper).values

    zeta = np.zeros((grid.nt + 2, grid.nx))
    for n in range(1, grid.nt + 1):
        zeta[n] = stepper.solve(z[n])

    tau = trapezoid_weights(grid.nt)

    return (zeta[:-1] + zeta[1:]) / (2.0 * tau[:, None])


def energy_check(traj: Trajectory, prob: PdeProblem) -> EnergyReport:
    grid = traj.grid
    values = traj.values

    sup_l2 = float(np.max(grid.h * np.sum(values ** 2, axis=1)))
    dissipation = sum(mu_norm_squared(values[n], prob.mu, grid) for n in range(grid.nt + 1)) * grid.dt
    lhs = sup_l2 + dissipation

    forcing = prob.source_field()
    source_norm = float(grid.h * grid.dt * np.sum(trapezoid_weights(grid.nt)[:, None] * forcing ** 2))
    rhs_data = l2_norm(prob.y0, grid) ** 2 + source_norm

    if rhs_data == 0.0:
        violation = lhs > ENERGY_TOLERANCE
        if violation:
            logger.warning('energy check: lhs=%g with vanishing data', lhs)
        return EnergyReport(lhs=lhs, rhs_data=0.0, ratio=math.inf if violation else 0.0, violation=violation)

    return EnergyReport(lhs=lhs, rhs_data=rhs_data, ratio=lhs / rhs_data, violation=False)


def bessel_mode(mu: float, grid: SpaceTimeGrid) -> Tuple[np.ndarray, float]:
    '''First eigenfunction √x·J_ν(j x) of −∂xx − μ/x² on (0, 1), ν = √(1/4 − μ), and its eigenvalue j².'''
    if mu > 0.25:
        raise ParameterError(f'no Bessel ground state for mu={mu} > 1/4')

    order = math.sqrt(0.25 - mu)
    samples = np.linspace(order + 1e-3, order + 10.0, 2000)
    values = jv(order, samples)
    crossing = int(np.argmax(np.sign(values[:-1]) != np.sign(values[1:])))
    root = float(brentq(lambda r: float(jv(order, r)), samples[crossing], samples[crossing + 1], xtol=1e-14))

    profile = np.sqrt(grid.x) * jv(order, root * grid.x)

    return profile / np.max(np.abs(profile)), root * root


def initial_profile(name: str, grid: SpaceTimeGrid, mu: float = 0.0) -> np.ndarray:
    if name == 'sine':
        return np.sin(np.pi * grid.x)

    if name == 'step':
        return np.sign(grid.x - 0.5)

    if name == 'bessel':
        profile, _ = bessel_mode(mu, grid)
        return profile

    raise ParameterError(f'unknown initial profile "{name}"')
