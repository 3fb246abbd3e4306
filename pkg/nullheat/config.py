import os
import re
import json
import logging

from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union, get_type_hints
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from jsonschema import Draft7Validator
from jsonschema.exceptions import ValidationError, best_match
from jsonschema.protocols import Validator

from . import STATIC_CONTEXT
from .discretization import SpaceTimeGrid
from .errors import ConfigError
from .evolve import PdeProblem, initial_profile
from .weights import MemoryKernel, SigmaSpec, ValidationMode, WeightParams, default_s


__all__ = [
    'Scenario',
    'ProblemBlock',
    'SigmaBlock',
    'WeightsBlock',
    'KernelBlock',
    'SolverBlock',
    'VerifyBlock',
    'OutputBlock',
    'ScenarioConfig',
    'load_config',
]

logger = logging.getLogger(__name__)

C = TypeVar('C')

PROFILES = ('sine', 'bessel', 'step')

SCHEMA_PATH = os.path.join(STATIC_CONTEXT, 'scenario.schema.json')

KIND_NAMES = {
    'integer': 'an integer',
    'number': 'a number',
    'string': 'a string',
    'boolean': 'a boolean',
    'object': 'an object',
    'array': 'a list',
}


class Scenario(str, Enum):
    FORWARD = 'forward'
    CONTROL = 'control'
    MEMORY = 'memory'
    TWO_PHASE = 'two_phase'
    CARLEMAN_SUITE = 'carleman_suite'
    SPECTRAL_SCAN = 'spectral_scan'
    HARDY_SUITE = 'hardy_suite'
    WEIGHTS = 'weights'


@dataclass(frozen=True)
class ProblemBlock:
    mu: float = 0.0
    T: float = 1.0
    nx: int = 50
    nt: int = 50
    omega: Tuple[float, float] = (0.3, 0.8)
    omega_prime: Tuple[float, float] = (0.4, 0.7)
    y0: str = 'sine'


@dataclass(frozen=True)
class SigmaBlock:
    family: str = 'parabola'
    coefficient: float = 1.0
    omega_tilde: Tuple[float, float] = (0.4, 0.6)


@dataclass(frozen=True)
class WeightsBlock:
    gamma: float = 1.0
    k: Optional[float] = None
    cfrak: float = 135.0
    d: float = 4.0
    rho: float = 12.0
    s: Optional[float] = None
    sigma: SigmaBlock = field(default_factory=SigmaBlock)
    eta: float = 1.0
    mode: Optional[str] = None


@dataclass(frozen=True)
class KernelBlock:
    kind: str = 'constant'
    amplitude: float = 0.0
    M0: float = 0.0
    k: Optional[float] = None


@dataclass(frozen=True)
class SolverBlock:
    method: str = 'hum'
    epsilon: float = 1e-6
    cg_tol: float = 1e-10
    cg_max: int = 2000
    picard_tol: float = 1e-6
    picard_max: int = 20
    t0: Optional[float] = None
    weight_mode: str = 'uniform'
    null_tol: float = 1e-2


@dataclass(frozen=True)
class VerifyBlock:
    mu_list: List[float] = field(default_factory=lambda: [0.0, 0.2, 0.25, 0.26, 0.3])
    nx_list: List[int] = field(default_factory=lambda: [50, 100, 200, 400])
    samples: int = 20
    window: float = 1.0 / 16.0
    form: str = 'interior'
    omega_pp: Tuple[float, float] = (0.45, 0.65)
    bounded_tol: float = 0.10
    collapse_tol: float = 0.10


@dataclass(frozen=True)
class OutputBlock:
    directory: Optional[str] = None
    prefix: Optional[str] = None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario
    description: str = ''
    problem: ProblemBlock = field(default_factory=ProblemBlock)
    weights: Optional[WeightsBlock] = None
    kernel: Optional[KernelBlock] = None
    solver: SolverBlock = field(default_factory=SolverBlock)
    verify: VerifyBlock = field(default_factory=VerifyBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    seed: int = 0
    path: str = field(default='', compare=False)

    @property
    def name(self) -> str:
        if self.output.prefix:
            return self.output.prefix

        return os.path.splitext(os.path.basename(self.path))[0] or self.scenario.value

    @property
    def validation_mode(self) -> ValidationMode:
        if self.weights is not None and self.weights.mode is not None:
            return ValidationMode(self.weights.mode)

        if self.scenario in (Scenario.MEMORY, Scenario.TWO_PHASE):
            return ValidationMode.MEMORY

        return ValidationMode.BASIC

    def grid(self) -> SpaceTimeGrid:
        problem = self.problem

        return SpaceTimeGrid(nx=problem.nx, nt=problem.nt, T=problem.T, omega=problem.omega, omega_prime=problem.omega_prime)

    def initial_state(self, grid: SpaceTimeGrid) -> np.ndarray:
        name = self.problem.y0
        if name in PROFILES:
            return initial_profile(name, grid, self.problem.mu)

        path = name if os.path.isabs(name) else os.path.join(os.path.dirname(os.path.abspath(self.path)), name)
        if not os.path.isfile(path):
            raise ConfigError(f'y0 file {path} does not exist', line=_locate(self.path, 'y0'))

        try:
            values = np.loadtxt(path, delimiter=',', ndmin=1, comments='#').ravel()
        except ValueError as e:
            raise ConfigError(f'y0 file {path} is not a comma-separated list of numbers: {e}') from e

        if values.shape[0] != grid.nx:
            raise ConfigError(f'y0 file {path} has {values.shape[0]} values, expected nx={grid.nx}')

        return values

    def weight_params(self, grid: Optional[SpaceTimeGrid] = None) -> WeightParams:
        if self.weights is None:
            raise ConfigError(f'scenario {self.scenario.value} needs a weights block')

        block = self.weights
        sigma = SigmaSpec(family=block.sigma.family, coefficient=block.sigma.coefficient, omega_tilde=block.sigma.omega_tilde)
        params = WeightParams(
            gamma=block.gamma,
            cfrak=block.cfrak,
            d=block.d,
            rho=block.rho,
            s=1.0,
            T=self.problem.T,
            mu=self.problem.mu,
            sigma=sigma,
            mode=self.validation_mode,
            k=block.k if block.k is not None else float('nan'),
            eta=block.eta,
        )

        if block.s is not None:
            return params.with_s(block.s)

        variational = self.solver.method == 'variational' and self.scenario in (Scenario.CONTROL, Scenario.MEMORY, Scenario.TWO_PHASE)

        return params.with_s(default_s(params, grid if variational else None))

    def memory_kernel(self, params: Optional[WeightParams] = None) -> Optional[MemoryKernel]:
        if self.kernel is None:
            return None

        if self.kernel.k is not None:
            k = self.kernel.k
        else:
            k = params.k if params is not None else MemoryKernel.k

        return MemoryKernel(
            kind=self.kernel.kind,
            amplitude=self.kernel.amplitude,
            M0=self.kernel.M0,
            k=k,
        )

    def pde_problem(self, grid: SpaceTimeGrid, kernel: Optional[MemoryKernel] = None) -> PdeProblem:
        return PdeProblem(grid=grid, mu=self.problem.mu, y0=self.initial_state(grid), kernel=kernel)

    def as_dict(self) -> Dict[str, Any]:
        def convert(value: Any) -> Any:
            if is_dataclass(value):
                return {item.name: convert(getattr(value, item.name)) for item in fields(value) if item.name != 'path'}
            if isinstance(value, Enum):
                return value.value
            if isinstance(value, tuple):
                return list(value)
            return value

        return dict(convert(self))


def _locate(source: str, key: str, start: int = 0) -> Optional[int]:
    '''1-based line of the first `"key":` at or after `start`; `source` is JSON text or a file path.'''
    text = source
    if '\n' not in source and os.path.isfile(source):
        with open(source, encoding='utf-8') as fd:
            text = fd.read()

    match = re.compile(r'"{}"\s*:'.format(re.escape(key))).search(text, start)
    if match is None:
        return None

    return text.count('\n', 0, match.start()) + 1


def _offset(text: str, key: str, start: int) -> int:
    match = re.compile(r'"{}"\s*:'.format(re.escape(key))).search(text, start)

    return match.start() if match is not None else start


@lru_cache(maxsize=None)
def _validator() -> Validator:
    with open(SCHEMA_PATH, encoding='utf-8') as fd:
        schema = json.load(fd)

    Draft7Validator.check_schema(schema)

    return Draft7Validator(schema)


def _schema_error(error: ValidationError, text: str) -> ConfigError:
    '''Translate a schema violation into a ConfigError anchored at the offending key.'''
    keys = [str(item) for item in error.absolute_path if isinstance(item, str)]
    start = 0
    for key in keys:
        start = _offset(text, key, start)

    name = '.'.join(keys)
    line = _locate(text, keys[-1], start) if keys else 1
    value = error.instance
    rule = error.validator_value

    if error.validator == 'additionalProperties':
        known = set(error.schema.get('properties', {}))
        unknown = sorted(key for key in value if key not in known)[0]
        return ConfigError(f'unknown key "{name + "." if name else ""}{unknown}"', line=_locate(text, unknown, start))

    if error.validator == 'type':
        kinds = [kind for kind in (rule if isinstance(rule, list) else [rule]) if kind != 'null']
        return ConfigError(f'"{name}" must be {KIND_NAMES.get(kinds[0], kinds[0])}, got {value!r}', line=line)

    if error.validator == 'enum':
        choices = ', '.join(str(choice) for choice in rule if choice is not None)
        return ConfigError(f'"{name}" must be one of {choices}, got {value!r}', line=line)

    if error.validator in ('minItems', 'maxItems'):
        size = error.schema.get('minItems')
        if size is not None and size == error.schema.get('maxItems'):
            return ConfigError(f'"{name}" must be a list of {size} numbers, got {value!r}', line=line)
        return ConfigError(f'"{name}" must be a non-empty list, got {value!r}', line=line)

    return ConfigError(f'"{name or "configuration"}" {error.message}', line=line)


def _build(cls: Type[C], data: Dict[str, Any]) -> C:
    '''Instantiate a block from schema-checked data; missing keys keep the dataclass defaults.'''
    hints = get_type_hints(cls)

    def convert(value: Any, annotation: Any) -> Any:
        arguments = getattr(annotation, '__args__', ())
        if getattr(annotation, '__origin__', None) is Union:
            if value is None:
                return None
            annotation = [argument for argument in arguments if argument is not type(None)][0]
            arguments = getattr(annotation, '__args__', ())

        origin = getattr(annotation, '__origin__', None)
        if is_dataclass(annotation):
            return _build(annotation, value)
        if origin in (tuple, Tuple):
            return tuple(convert(item, argument) for item, argument in zip(value, arguments))
        if origin in (list, List):
            return [convert(item, arguments[0]) for item in value]
        if annotation in (int, float) or (isinstance(annotation, type) and issubclass(annotation, Enum)):
            return annotation(value)

        return value

    return cls(**{key: convert(value, hints[key]) for key, value in data.items()})


def load_config(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding='utf-8') as fd:
            text = fd.read()
    except FileNotFoundError:
        raise ConfigError(f'{path} does not exist')
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f'unable to read {path}: {e}')

    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, line=e.lineno, column=e.colno)

    if not isinstance(data, dict) or 'scenario' not in data:
        raise ConfigError('configuration must be an object with a "scenario" key', line=1)

    error = best_match(_validator().iter_errors(data))
    if error is not None:
        raise _schema_error(error, text)

    config = _build(ScenarioConfig, data)
    object.__setattr__(config, 'path', os.path.abspath(path))
    logger.debug('loaded %s scenario from %s', config.scenario.value, path)

    _check_blocks(config, text)

    return config


def _check_blocks(config: ScenarioConfig, text: str) -> None:
    needs_weights = {Scenario.MEMORY, Scenario.TWO_PHASE, Scenario.CARLEMAN_SUITE, Scenario.WEIGHTS}
    if config.solver.method == 'variational' or config.solver.weight_mode == 'paper':
        needs_weights.add(Scenario.CONTROL)

    if config.scenario in needs_weights and config.weights is None:
        raise ConfigError(f'scenario {config.scenario.value} needs a "weights" block', line=_locate(text, 'scenario'))

    if config.scenario == Scenario.MEMORY and config.kernel is None:
        raise ConfigError('scenario memory needs a "kernel" block', line=_locate(text, 'scenario'))

    if config.kernel is not None and config.scenario not in (Scenario.FORWARD, Scenario.MEMORY, Scenario.TWO_PHASE):
        raise ConfigError(f'scenario {config.scenario.value} does not take a "kernel" block', line=_locate(text, 'kernel'))

    y0 = config.problem.y0
    if y0 not in PROFILES and not y0.endswith('.csv'):
        raise ConfigError(f'"problem.y0" must be one of {", ".join(PROFILES)} or a path to a .csv file, got {y0!r}', line=_locate(text, 'y0'))

