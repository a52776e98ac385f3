import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import toml
from jmespath import search as json_search
from sympy import Symbol, SympifyError, lambdify, sympify

from .diffusion import BESSEL, GBM, GENERIC, DiffusionSpec
from .errors import AggregationStoppingError, ConfigError
from .mc_oracle import McConfig
from .preference import CAPPED, LINEAR, LOG, POWER, TABULATED, AttitudeFunction
from .preference import DEFAULT_NODES, DiscountLaw
from .valuation import REJECT, R0_CONVENTIONS, ValuationContext

logger = logging.getLogger(__name__)

ARTIFACTS = ('conditions', 'threshold', 'verdict', 'barrier_map', 'iteration', 'mc')
DEFAULT_ARTIFACTS = ('conditions', 'threshold', 'verdict')

_REQUIRED = object()


def _get(document, path, default=_REQUIRED, kind=None):
    value = json_search(path, document)
    if value is None:
        if default is _REQUIRED:
            raise ConfigError('Missing required key', field=path)
        return default
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f'Expected {kind.__name__}, got {value!r}', field=path)
    return value


def parse_expression(text, symbol, path):
    """Turn a configuration expression such as ``'0.2*x'`` into a numpy
    function of *symbol*.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = str(text)
    if not isinstance(text, str):
        raise ConfigError(f'Expected an expression, got {text!r}', field=path)
    variable = Symbol(symbol)
    try:
        expression = sympify(text, locals={symbol: variable})
    except (SympifyError, SyntaxError, TypeError) as error:
        raise ConfigError(f'Cannot parse {text!r}: {error}', field=path)
    unknown = expression.free_symbols - {variable}
    if unknown:
        names = ', '.join(sorted(str(s) for s in unknown))
        raise ConfigError(f'Unknown symbols in {text!r}: {names}', field=path)
    return lambdify(variable, expression, 'numpy')


def _model(document, strike):
    kind = _get(document, 'model.kind', GBM, str)
    state_cap = _get(document, 'model.state_cap', 10 * strike, float)
    try:
        if kind == GBM:
            return DiffusionSpec.gbm(
                _get(document, 'model.mu', kind=float),
                _get(document, 'model.sigma', kind=float),
                state_cap=state_cap,
            )
        if kind == BESSEL:
            return DiffusionSpec.bessel(
                _get(document, 'model.nu', 0.5, float), state_cap=state_cap
            )
        if kind == GENERIC:
            c_text = _get(document, 'model.c', None)
            return DiffusionSpec.generic(
                parse_expression(_get(document, 'model.a'), 'x', 'model.a'),
                parse_expression(_get(document, 'model.b'), 'x', 'model.b'),
                None if c_text is None else parse_expression(c_text, 'x', 'model.c'),
                state_floor=_get(document, 'model.state_floor', 0.0, float),
                state_cap=state_cap,
            )
    except ConfigError:
        raise
    except AggregationStoppingError as error:
        raise ConfigError(str(error), field='model')
    raise ConfigError(f'Unknown model kind {kind!r}', field='model.kind')


def _pairs(value, path):
    try:
        return [(float(r), float(w)) for r, w in value]
    except (TypeError, ValueError):
        raise ConfigError('Expected a list of [value, weight] pairs', field=path)


def _law(document, base_dir):
    f_space = _get(document, 'law.f_space', False, bool)
    atoms = _pairs(_get(document, 'law.atoms', []), 'law.atoms')
    csv = _get(document, 'law.csv', None, str)
    density = _get(document, 'law.density', None, dict)

    try:
        if csv is not None:
            path = Path(csv)
            if not path.is_absolute():
                path = Path(base_dir) / path
            if not path.exists():
                raise ConfigError(f'No such file: {path}', field='law.csv')
            return DiscountLaw.from_csv(path, f_space=f_space)
        if density is not None:
            pdf = parse_expression(
                _get(document, 'law.density.pdf'), 'r', 'law.density.pdf'
            )
            return DiscountLaw.from_density(
                lambda r: np.broadcast_to(pdf(r), np.shape(r)),
                _get(document, 'law.density.lo', kind=float),
                _get(document, 'law.density.hi', kind=float),
                n_nodes=_get(document, 'law.density.nodes', DEFAULT_NODES, int),
                atoms=atoms,
                f_space=f_space,
            )
        if not atoms:
            raise ConfigError('A law needs atoms, a csv file or a density', field='law')
        return DiscountLaw.from_atoms(atoms, f_space=f_space)
    except ConfigError:
        raise
    except (AggregationStoppingError, OSError) as error:
        raise ConfigError(str(error), field='law')


def _attitude(document):
    kind = _get(document, 'attitude.kind', LINEAR, str)
    try:
        if kind == LINEAR:
            return AttitudeFunction.linear()
        if kind == POWER:
            return AttitudeFunction.power(_get(document, 'attitude.p', kind=float))
        if kind == LOG:
            return AttitudeFunction.log()
        if kind == CAPPED:
            return AttitudeFunction.capped(_get(document, 'attitude.alpha', kind=float))
        if kind == TABULATED:
            return AttitudeFunction.tabulated(
                _get(document, 'attitude.values', kind=list),
                _get(document, 'attitude.phi', kind=list),
            )
    except ConfigError:
        raise
    except (AggregationStoppingError, TypeError, ValueError) as error:
        raise ConfigError(str(error), field='attitude')
    raise ConfigError(f'Unknown attitude kind {kind!r}', field='attitude.kind')


def _mc(document, seed):
    try:
        return McConfig(
            n_paths=_get(document, 'mc.n_paths', 100_000, int),
            dt=_get(document, 'mc.dt', 1e-4, float),
            horizon=_get(document, 'mc.horizon', None, float),
            seed=seed if seed is not None else _get(document, 'mc.seed', 0, int),
            scheme=_get(document, 'mc.scheme', None, str),
        )
    except AggregationStoppingError as error:
        raise ConfigError(str(error), field='mc')


@dataclass
class GridSettings:
    x_n: int = 2001
    a_n: int = 200
    r_n: int = 20

    def __post_init__(self):
        for name in ('x_n', 'a_n', 'r_n'):
            if getattr(self, name) < 2:
                raise ConfigError(
                    'Grids need at least two points', field=f'grids.{name}'
                )


@dataclass
class ExperimentConfig:
    """A validated experiment read from a TOML document. Load it with
    :meth:`load`:

    .. code-block:: python

        from aggregation_stopping.config import ExperimentConfig

        config = ExperimentConfig.load('experiments/gbm.toml', seed=7)
        ctx = config.context()
    """

    model: DiffusionSpec
    law: DiscountLaw
    attitude: AttitudeFunction
    strike: float = 1.0
    r0_convention: str = REJECT
    force: bool = False
    example: str = None
    grids: GridSettings = field(default_factory=GridSettings)
    mc: McConfig = field(default_factory=McConfig)
    output_directory: Path = Path('out')
    artifacts: tuple = DEFAULT_ARTIFACTS
    document: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path, seed=None, grid_n=None, force=None):
        """Read and validate the configuration file at *path*:

        * *seed* overrides ``mc.seed``.
        * *grid_n* overrides ``grids.x_n``.
        * *force* overrides ``problem.force``.

        Raises :class:`aggregation_stopping.errors.ConfigError` naming the
        offending field (and the line, for syntax errors).
        """
        path = Path(path)
        try:
            document = toml.load(path)
        except toml.TomlDecodeError as error:
            raise ConfigError(f'Invalid TOML: {error.msg}', line=error.lineno)
        except OSError as error:
            raise ConfigError(f'Cannot read {path}: {error.strerror}')
        config = cls.from_document(document, base_dir=path.parent, seed=seed)

        if grid_n is not None:
            config.grids = replace(config.grids, x_n=grid_n)
        if force is not None:
            config.force = force
        logger.debug('Loaded configuration %s', path)
        return config

    @classmethod
    def from_document(cls, document, base_dir='.', seed=None):
        strike = _get(document, 'problem.strike', 1.0, float)
        if not strike > 0:
            raise ConfigError('The strike must be positive', field='problem.strike')
        r0_convention = _get(document, 'problem.r0_convention', REJECT, str)
        if r0_convention not in R0_CONVENTIONS:
            raise ConfigError(
                f'Unknown convention {r0_convention!r}', field='problem.r0_convention'
            )

        example = _get(document, 'problem.example', None, str)
        if example is not None:
            from .reproduction import EXAMPLES

            if example not in EXAMPLES:
                raise ConfigError(
                    f'Unknown example {example!r}', field='problem.example'
                )

        artifacts = tuple(_get(document, 'outputs.artifacts', DEFAULT_ARTIFACTS))
        for name in artifacts:
            if name not in ARTIFACTS:
                raise ConfigError(
                    f'Unknown artifact {name!r}', field='outputs.artifacts'
                )

        directory = Path(_get(document, 'outputs.directory', 'out', str))
        if not directory.is_absolute():
            directory = Path(base_dir) / directory

        return cls(
            model=_model(document, strike),
            law=_law(document, base_dir),
            attitude=_attitude(document),
            strike=strike,
            r0_convention=r0_convention,
            force=_get(document, 'problem.force', False, bool),
            example=example,
            grids=GridSettings(
                x_n=_get(document, 'grids.x_n', 2001, int),
                a_n=_get(document, 'grids.a_n', 200, int),
                r_n=_get(document, 'grids.r_n', 20, int),
            ),
            mc=_mc(document, seed),
            output_directory=directory,
            artifacts=artifacts,
            document=document,
        )

    def context(self):
        return ValuationContext(
            self.model,
            self.law,
            self.attitude,
            strike=self.strike,
            r0_convention=self.r0_convention,
        )

    @property
    def x_grid(self):
        return np.linspace(self.model.state_floor, self.model.state_cap, self.grids.x_n)

    @property
    def a_grid(self):
        return np.linspace(0.0, self.strike, self.grids.a_n)
