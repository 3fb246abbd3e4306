import math
import logging

from typing import Any, Dict, List, Optional, Tuple, Union, TYPE_CHECKING
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import DomainError, SolverError

if TYPE_CHECKING:  # pragma: no cover
    from .discretization import SpaceTimeGrid


__all__ = [
    'ValidationMode',
    'SigmaSpec',
    'WeightParams',
    'WeightValues',
    'ExtremalWeights',
    'ConstraintCheck',
    'ValidationReport',
    'KernelKind',
    'MemoryKernel',
    'AdmissibilityReport',
    'evaluate_weights',
    'extremal_weights',
    'validate_params',
    'cfrak_interval',
    'gap_margin',
    'kernel_constant',
    'kernel_admissibility',
    'weight_table',
    'log_control_weights',
    'log_weight_span',
    'default_s',
    'MAX_LOG_SPAN',
]

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# upper end of the admissible k-range for the memory theorem
K_MEMORY_UPPER = math.log(4.0 / 3.0) / math.log(16.0 / 15.0) - 1.0

K_CONSISTENCY_TOLERANCE = 1e-12

EXTREMAL_TOLERANCE = 1e-9

VALIDATION_GRID_SIZE = 200

SIGMA_SAMPLES = 201

# largest finite exponent of a double, used as the admissibility cap
LOG_SUP_CAP = float(np.log(np.finfo(float).max))


class ValidationMode(str, Enum):
    BASIC = 'basic'
    MEMORY = 'memory'


@dataclass(frozen=True)
class SigmaSpec:
    '''Closed-form choice of the auxiliary function σ of the non-singular weight Ψ.

    `parabola` is σ(x) = a·x(1 − x), `sine` is σ(x) = a·sin(πx); both vanish at the
    boundary and have their only critical point at x = 1/2.
    '''
    family: str = 'parabola'
    coefficient: float = 1.0
    omega_tilde: Tuple[float, float] = (0.4, 0.6)

    def __post_init__(self) -> None:
        if self.family not in ('parabola', 'sine'):
            raise ValueError(f'unknown sigma family "{self.family}"')

    def value(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == 'parabola':
            return self.coefficient * x * (1.0 - x)

        return self.coefficient * np.sin(np.pi * x)

    def derivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == 'parabola':
            return self.coefficient * (1.0 - 2.0 * x)

        return self.coefficient * np.pi * np.cos(np.pi * x)

    @property
    def sigma_max(self) -> float:
        if self.family == 'parabola':
            return abs(self.coefficient) / 4.0

        return abs(self.coefficient)

    @property
    def critical_point(self) -> float:
        return 0.5


@dataclass(frozen=True)
class WeightParams:
    gamma: float
    cfrak: float
    d: float
    rho: float
    s: float
    T: float
    mu: float
    sigma: SigmaSpec = field(default_factory=SigmaSpec)
    mode: ValidationMode = ValidationMode.BASIC
    k: float = math.nan
    eta: float = 1.0

    def __post_init__(self) -> None:
        if math.isnan(self.k):
            object.__setattr__(self, 'k', 1.0 + 2.0 / self.gamma)

        if not isinstance(self.mode, ValidationMode):
            object.__setattr__(self, 'mode', ValidationMode(self.mode))

    @property
    def sigma_max(self) -> float:
        return self.sigma.sigma_max

    def with_s(self, s: float) -> 'WeightParams':
        return replace(self, s=s)

    def as_dict(self) -> Dict[str, Any]:
        return {
            'gamma': self.gamma,
            'k': self.k,
            'cfrak': self.cfrak,
            'd': self.d,
            'rho': self.rho,
            's': self.s,
            'T': self.T,
            'mu': self.mu,
            'eta': self.eta,
            'mode': self.mode.value,
            'sigma': {
                'family': self.sigma.family,
                'coefficient': self.sigma.coefficient,
                'omega_tilde': list(self.sigma.omega_tilde),
            },
        }


@dataclass(frozen=True)
class WeightValues:
    theta: np.ndarray
    nu: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    Psi: np.ndarray
    Phi: np.ndarray
    phi_tilde: np.ndarray
    Phi_tilde: np.ndarray
    log_e2s_phi_tilde: np.ndarray
    log_e2s_Phi_tilde: np.ndarray


@dataclass(frozen=True)
class ExtremalWeights:
    hatPhi: float
    hatphi: float
    checkphi: float


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    passed: bool
    margin: float
    detail: str = ''


@dataclass
class ValidationReport:
    mode: ValidationMode
    checks: List[ConstraintCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def get(self, name: str) -> ConstraintCheck:
        for check in self.checks:
            if check.name == name:
                return check

        raise KeyError(name)

    def add(self, name: str, passed: bool, margin: float, detail: str = '') -> None:
        self.checks.append(ConstraintCheck(name=name, passed=bool(passed), margin=float(margin), detail=detail))


def _as_times(p: WeightParams, t: ArrayLike, allow_zero: bool = False) -> np.ndarray:
    times = np.asarray(t, dtype=float)
    lower_ok = times >= 0.0 if allow_zero else times > 0.0

    if not np.all(lower_ok & (times < p.T)):
        interval = '[0, T)' if allow_zero else '(0, T)'
        raise DomainError(f'weights are only defined for t in {interval} with T={p.T}')

    return times


def theta(p: WeightParams, t: ArrayLike) -> np.ndarray:
    times = _as_times(p, t)

    return np.asarray((times * (p.T - times)) ** (-p.k))


def nu(p: WeightParams, t: ArrayLike) -> np.ndarray:
    # frozen at θ(T/2) on [0, T/2], so it stays finite at t = 0
    times = _as_times(p, t, allow_zero=True)
    frozen = (p.T * p.T / 4.0) ** (-p.k)
    late = np.maximum(times, p.T / 2.0)

    return np.where(times <= p.T / 2.0, frozen, (late * (p.T - late)) ** (-p.k))


def psi(p: WeightParams, x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)

    return p.cfrak * (x * x - p.d)


def Psi(p: WeightParams, x: ArrayLike) -> np.ndarray:
    return np.asarray(np.exp(p.rho * p.sigma.value(x)) - np.exp(2.0 * p.rho * p.sigma_max))


def log_nu_weights(p: WeightParams, t: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    '''ν(t), 2sφ̃ and 2sΦ̃ on the mesh t × x, for t in [0, T].

    Rows with t = T carry ν = +inf and log-weights −inf (the weights vanish there).
    '''
    times = np.asarray(t, dtype=float)
    at_end = times >= p.T
    nu_values = np.full(times.shape, np.inf)
    if np.any(~at_end):
        nu_values[~at_end] = nu(p, times[~at_end])

    with np.errstate(invalid='ignore'):
        log_phi = 2.0 * p.s * nu_values[:, None] * psi(p, x)[None, :]
        log_Phi = 2.0 * p.s * nu_values[:, None] * Psi(p, x)[None, :]

    log_phi[at_end, :] = -np.inf
    log_Phi[at_end, :] = -np.inf

    return nu_values, log_phi, log_Phi


def evaluate_weights(p: WeightParams, t: ArrayLike, x: ArrayLike) -> WeightValues:
    times, positions = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))

    if np.any((positions < 0.0) | (positions > 1.0)):
        raise DomainError('weights are only defined for x in [0, 1]')

    theta_values = theta(p, times)
    nu_values = nu(p, times)
    psi_values = psi(p, positions)
    Psi_values = Psi(p, positions)
    phi_tilde = nu_values * psi_values
    Phi_tilde = nu_values * Psi_values

    return WeightValues(
        theta=theta_values,
        nu=nu_values,
        psi=psi_values,
        phi=theta_values * psi_values,
        Psi=Psi_values,
        Phi=theta_values * Psi_values,
        phi_tilde=phi_tilde,
        Phi_tilde=Phi_tilde,
        log_e2s_phi_tilde=2.0 * p.s * phi_tilde,
        log_e2s_Phi_tilde=2.0 * p.s * Phi_tilde,
    )


def _relative_gap(a: float, b: float) -> float:
    scale = max(abs(a), abs(b), np.finfo(float).tiny)

    return abs(a - b) / scale


def extremal_weights(p: WeightParams, t: float) -> ExtremalWeights:
    nu_t = float(nu(p, t))
    M = p.sigma_max

    hatphi = nu_t * p.cfrak * (1.0 - p.d)
    checkphi = -nu_t * p.cfrak * p.d
    hatPhi = nu_t * (math.exp(p.rho * M) - math.exp(2.0 * p.rho * M))

    # the closed forms must agree with an explicit extremization over x
    x = np.linspace(0.0, 1.0, 2 * VALIDATION_GRID_SIZE + 1)
    phi_tilde = nu_t * psi(p, x)
    Phi_tilde = nu_t * Psi(p, x)

    for name, closed, sampled in (
        ('hatphi', hatphi, float(phi_tilde.max())),
        ('checkphi', checkphi, float(phi_tilde.min())),
        ('hatPhi', hatPhi, float(Phi_tilde.max())),
    ):
        if _relative_gap(closed, sampled) > EXTREMAL_TOLERANCE:
            raise SolverError(f'closed form {name}={closed!r} disagrees with grid extremum {sampled!r}')

    return ExtremalWeights(hatPhi=hatPhi, hatphi=hatphi, checkphi=checkphi)


def cfrak_interval(rho: float, sigma_max: float, d: float) -> Optional[Tuple[float, float]]:
    growth = math.exp(rho * sigma_max)
    lo = (growth * growth - 1.0) / (d - 1.0)
    hi = (16.0 / 15.0) * (growth * growth - growth) / (d - 1.0)

    if lo >= hi:
        return None

    return lo, hi


def gap_margin(p: WeightParams) -> float:
    '''2Φ̂(0) − φ̌(5T/8), negative when the memory fixed point closes.'''
    return 2.0 * extremal_weights(p, 0.0).hatPhi - extremal_weights(p, 5.0 * p.T / 8.0).checkphi


def validate_params(p: WeightParams) -> ValidationReport:
    report = ValidationReport(mode=p.mode)

    report.add('gamma_range', 0.0 < p.gamma < 2.0, min(p.gamma, 2.0 - p.gamma), 'gamma must lie in (0, 2)')
    k_expected = 1.0 + 2.0 / p.gamma if p.gamma != 0.0 else math.inf
    k_error = abs(p.k - k_expected)
    report.add('k_consistency', k_error <= K_CONSISTENCY_TOLERANCE, K_CONSISTENCY_TOLERANCE - k_error, 'k must equal 1 + 2/gamma')
    report.add('mu_subcritical', p.mu <= 0.25, 0.25 - p.mu, 'mu must not exceed the Hardy constant 1/4')
    report.add('cfrak_positive', p.cfrak > 0.0, p.cfrak)
    report.add('d_above_one', p.d > 1.0, p.d - 1.0)
    report.add('rho_positive', p.rho > 0.0, p.rho)
    report.add('s_positive', p.s > 0.0, p.s)
    report.add('T_positive', p.T > 0.0, p.T)

    if not all(check.passed for check in report.checks if check.name in ('d_above_one', 'T_positive')):
        # the remaining checks evaluate weights and need a well-formed parameter set
        return report

    psi_max = p.cfrak * (1.0 - p.d)
    report.add('psi_negative', psi_max < 0.0, -psi_max, 'psi(x) = c(x^2 - d) < 0 on [0, 1]')

    samples = np.linspace(0.0, 1.0, SIGMA_SAMPLES)
    sigma_values = p.sigma.value(samples)
    boundary = max(abs(float(sigma_values[0])), abs(float(sigma_values[-1])))
    interior = float(sigma_values[1:-1].min())
    report.add('sigma_boundary', boundary == 0.0 and interior > 0.0, interior, 'sigma(0) = sigma(1) = 0 and sigma > 0 inside')

    lo_tilde, hi_tilde = p.sigma.omega_tilde
    outside = (samples <= lo_tilde) | (samples >= hi_tilde)
    slope = float(np.abs(p.sigma.derivative(samples[outside])).min()) if np.any(outside) else math.inf
    report.add(
        'sigma_critical_point_in_omega_tilde',
        slope > 0.0 and lo_tilde < p.sigma.critical_point < hi_tilde,
        min(p.sigma.critical_point - lo_tilde, hi_tilde - p.sigma.critical_point),
        'sigma_x must not vanish outside omega_tilde',
    )

    lower = (math.exp(2.0 * p.rho * p.sigma_max) - 1.0) / (p.d - 1.0)
    report.add('cfrak_lower_bound', p.cfrak >= lower, p.cfrak - lower, f'cfrak >= {lower:.6g}')

    # φ ≤ Φ reduces to ψ ≤ Ψ since θ > 0, but it is checked on the space-time grid as stated
    times = p.T * (np.arange(VALIDATION_GRID_SIZE) + 0.5) / VALIDATION_GRID_SIZE
    x = np.linspace(0.0, 1.0, VALIDATION_GRID_SIZE)
    theta_values = theta(p, times)[:, None]
    nu_values = nu(p, times)[:, None]
    spread = Psi(p, x)[None, :] - psi(p, x)[None, :]
    phi_margin = float(np.min(theta_values * spread))
    phi_tilde_margin = float(np.min(nu_values * spread))
    report.add('phi_below_Phi', phi_margin >= 0.0 and phi_tilde_margin >= 0.0, min(phi_margin, phi_tilde_margin))

    if p.mode == ValidationMode.MEMORY:
        report.add('d_above_three', p.d > 3.0, p.d - 3.0)
        report.add('k_memory_range', 2.0 < p.k < K_MEMORY_UPPER, min(p.k - 2.0, K_MEMORY_UPPER - p.k), f'k must lie in (2, {K_MEMORY_UPPER:.6f})')

        interval = cfrak_interval(p.rho, p.sigma_max, p.d)
        if interval is None:
            report.add('cfrak_interval', False, -math.inf, 'interval is empty, increase rho')
        else:
            lo, hi = interval
            report.add('cfrak_interval', lo < p.cfrak < hi, min(p.cfrak - lo, hi - p.cfrak), f'cfrak must lie in ({lo:.6g}, {hi:.6g})')

        margin = gap_margin(p)
        report.add('gap_condition', margin < 0.0, -margin, f'2*hatPhi(0) - checkphi(5T/8) = {margin:.6g}')

    return report


class KernelKind(str, Enum):
    CONSTANT = 'constant'
    DECAY_EXP = 'decay_exp'
    FADING = 'fading'


@dataclass(frozen=True)
class MemoryKernel:
    '''Memory kernel a(t, s, x) of the Volterra term.

    constant:  a = amplitude
    decay_exp: a = amplitude·exp(−M0/(T − t)^k)
    fading:    a = amplitude·exp(−M0·(t − s))
    '''
    kind: KernelKind = KernelKind.CONSTANT
    amplitude: float = 0.0
    M0: float = 0.0
    k: float = 3.0
    admissible: Optional[bool] = None
    C0: Optional[float] = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, KernelKind):
            object.__setattr__(self, 'kind', KernelKind(self.kind))

    def evaluate(self, t: ArrayLike, s: ArrayLike, x: ArrayLike, T: float) -> np.ndarray:
        t_arr, s_arr, x_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float), np.asarray(x, dtype=float))

        if self.kind == KernelKind.CONSTANT:
            return np.full(t_arr.shape, float(self.amplitude))

        if self.kind == KernelKind.DECAY_EXP:
            remaining = T - t_arr
            with np.errstate(divide='ignore', over='ignore', invalid='ignore'):
                values = self.amplitude * np.exp(-self.M0 / remaining ** self.k)

            return np.where(remaining > 0.0, values, 0.0)

        return self.amplitude * np.exp(-self.M0 * (t_arr - s_arr))


@dataclass(frozen=True)
class AdmissibilityReport:
    admissible: bool
    log_sup: float
    C0: float
    exact: bool


def kernel_constant(p: WeightParams) -> float:
    return (4.0 ** p.k) * p.cfrak * p.d / (p.T ** p.k)


def kernel_admissibility(kern: MemoryKernel, p: WeightParams, grid: 'SpaceTimeGrid') -> AdmissibilityReport:
    C0 = kernel_constant(p)
    threshold = p.s * C0

    if kern.amplitude == 0.0:
        return AdmissibilityReport(admissible=True, log_sup=-math.inf, C0=C0, exact=True)

    log_amplitude = math.log(abs(kern.amplitude))

    if kern.kind == KernelKind.CONSTANT:
        # s·C0/(T − t)^k diverges as t → T while a does not decay
        return AdmissibilityReport(admissible=False, log_sup=math.inf, C0=C0, exact=True)

    if kern.kind == KernelKind.DECAY_EXP and kern.k == p.k:
        excess = threshold - kern.M0
        if excess > 0.0:
            return AdmissibilityReport(admissible=False, log_sup=math.inf, C0=C0, exact=True)

        # the exponent log|a| + (s·C0 − M0)/(T − t)^k is largest at t = 0
        return AdmissibilityReport(admissible=True, log_sup=log_amplitude + excess / p.T ** p.k, C0=C0, exact=True)

    times = grid.t[:-1]
    log_sup = -math.inf
    for n, t_n in enumerate(times):
        values = np.abs(kern.evaluate(t_n, grid.t[:n + 1, None], grid.x[None, :], grid.T))
        with np.errstate(divide='ignore'):
            peak = float(np.max(np.log(values)))

        log_sup = max(log_sup, peak + threshold / (grid.T - t_n) ** p.k)

    admissible = log_sup <= LOG_SUP_CAP
    logger.debug('grid admissibility for %s kernel: log_sup=%g cap=%g', kern.kind.value, log_sup, LOG_SUP_CAP)

    return AdmissibilityReport(admissible=admissible, log_sup=log_sup, C0=C0, exact=False)


def weight_table(p: WeightParams, grid: 'SpaceTimeGrid') -> np.ndarray:
    '''Rows (t, x, theta, nu, log_e2s_phi_tilde, log_e2s_Phi_tilde) for 0 < t < T.'''
    times = grid.t[1:-1]
    tt, xx = np.meshgrid(times, grid.x, indexing='ij')
    values = evaluate_weights(p, tt, xx)

    return np.column_stack([
        tt.ravel(),
        xx.ravel(),
        values.theta.ravel(),
        values.nu.ravel(),
        values.log_e2s_phi_tilde.ravel(),
        values.log_e2s_Phi_tilde.ravel(),
    ])


# smallest normal double is e^-708.4; normalized weights below it lose all precision
MAX_LOG_SPAN = float(-np.log(np.finfo(float).tiny))

DEFAULT_S = 1.0


def log_control_weights(p: WeightParams, grid: 'SpaceTimeGrid') -> Tuple[np.ndarray, np.ndarray]:
    '''log e^{2sΦ̃} and log s³ν³e^{2sΦ̃} on all (t_n, x_i) nodes, −inf on the t = T row.'''
    nu_values, _, log_Phi = log_nu_weights(p, grid.t, grid.x)

    with np.errstate(divide='ignore'):
        log_scale = 3.0 * np.log(p.s * nu_values)

    log_wu = log_Phi + np.where(np.isfinite(log_scale), log_scale, 0.0)[:, None]
    log_wu[-1, :] = -np.inf

    return log_Phi, log_wu


def log_weight_span(p: WeightParams, grid: 'SpaceTimeGrid') -> float:
    log_wy, log_wu = log_control_weights(p, grid)
    # state weights are used on [δt, T − δt], control weights on ω over [0, T − δt]
    values = np.concatenate([log_wy[1:-1].ravel(), log_wu[:-1, grid.omega_mask].ravel()])
    values = values[np.isfinite(values)]

    if values.size == 0:
        return 0.0

    return float(values.max() - values.min())


def default_s(p: WeightParams, grid: Optional['SpaceTimeGrid'] = None) -> float:
    '''s used when a configuration does not set one.

    The gap condition scales linearly with s, so it holds for every s > 0 as soon as it
    holds at all. Without a grid the unit value is used; with a grid s is halved from
    there until the variational weights fit half of the representable span.
    '''
    if grid is None:
        return DEFAULT_S

    s = DEFAULT_S
    for _ in range(64):
        if log_weight_span(p.with_s(s), grid) <= MAX_LOG_SPAN / 2.0:
            break
        s /= 2.0

    logger.debug('default s on %dx%d grid: %g', grid.nx, grid.nt, s)

    return s
