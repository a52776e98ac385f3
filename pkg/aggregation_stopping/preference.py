import logging
from dataclasses import dataclass
from functools import cached_property
from math import isfinite

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, NumericError

logger = logging.getLogger(__name__)

LINEAR = 'linear'
POWER = 'power'
LOG = 'log'
CAPPED = 'capped'
TABULATED = 'tabulated'
ATTITUDE_KINDS = (LINEAR, POWER, LOG, CAPPED, TABULATED)

WEIGHT_TOLERANCE = 1e-12
DEFAULT_NODES = 64
MONOTONE_SLACK = 1e-10


def _check_pairs(pairs, label):
    for r, w in pairs:
        if not (isfinite(r) and r >= 0):
            raise DomainError(f'{label} values must be finite and non-negative: {r}')
        if not (isfinite(w) and w > 0):
            raise DomainError(f'{label} weights must be positive: {w}')


@dataclass(frozen=True)
class DiscountLaw:
    """The distribution of the random discount rate.

    * *atoms* are ``(r, w)`` pairs sorted by ``r``.
    * *density_nodes* are quadrature ``(r, w)`` pairs for a continuous part.
    * *f_space* marks laws whose values are GBM hitting exponents ``f(rho)``
      rather than rates.

    The weights of both parts add up to 1.
    """

    atoms: tuple = ()
    density_nodes: tuple = ()
    f_space: bool = False

    def __post_init__(self):
        _check_pairs(self.atoms, 'Atom')
        _check_pairs(self.density_nodes, 'Node')
        rates = [r for r, _ in self.atoms]
        if rates != sorted(rates):
            raise DomainError('Atoms must be sorted by rate')
        if not (self.atoms or self.density_nodes):
            raise DomainError('A discount law needs at least one atom or node')
        total = sum(w for _, w in self.nodes)
        if abs(total - 1) > WEIGHT_TOLERANCE:
            raise DomainError(f'Weights add up to {total!r}, not 1')

    @classmethod
    def from_atoms(cls, atoms, f_space=False, normalize=False):
        """Build a law from ``(r, w)`` pairs. With *normalize* the weights are
        rescaled to add up to 1.
        """
        pairs = sorted((float(r), float(w)) for r, w in atoms)
        if normalize:
            total = sum(w for _, w in pairs)
            if not total > 0:
                raise DomainError('Atom weights add up to zero')
            pairs = [(r, w / total) for r, w in pairs]
        return cls(atoms=tuple(pairs), f_space=f_space)

    @classmethod
    def dirac(cls, r, f_space=False):
        return cls(atoms=((float(r), 1.0),), f_space=f_space)

    @classmethod
    def from_density(cls, pdf, lo, hi, n_nodes=DEFAULT_NODES, atoms=(), f_space=False):
        """Discretize a continuous law with Gauss-Legendre nodes:

        * *pdf* is a (vectorized) density on ``[lo, hi]``; it need not be
          normalized.
        * *n_nodes* is the number of quadrature nodes.
        * *atoms* are optional ``(r, w)`` point masses. The continuous part gets
          the remaining mass ``1 - sum(w)``.
        """
        if not (isfinite(lo) and isfinite(hi) and 0 <= lo < hi):
            raise DomainError(f'Invalid density support [{lo}, {hi}]')
        atoms = sorted((float(r), float(w)) for r, w in atoms)
        atom_mass = sum(w for _, w in atoms)
        if not (0 <= atom_mass < 1):
            raise DomainError('Atoms leave no mass for the continuous part')

        x, weights = leggauss(n_nodes)
        rates = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        masses = 0.5 * (hi - lo) * weights * np.asarray(pdf(rates), dtype=float)
        if np.any(masses < 0) or not np.all(np.isfinite(masses)):
            raise DomainError('Density must be finite and non-negative')
        total = masses.sum()
        if not total > 0:
            raise DomainError('Density has no mass on its support')
        masses *= (1 - atom_mass) / total

        keep = masses > 0
        nodes = tuple(zip(rates[keep].tolist(), masses[keep].tolist()))
        logger.debug(
            'Discretized density on [%g, %g] into %d nodes', lo, hi, len(nodes)
        )
        return cls(atoms=tuple(atoms), density_nodes=nodes, f_space=f_space)

    @classmethod
    def from_csv(cls, path, f_space=False):
        """Load a law from a two-column ``r, weight`` CSV file. Header and
        comment lines are skipped; weights are normalized on load.
        """
        data = np.genfromtxt(path, delimiter=',', comments='#', ndmin=2)
        if data.ndim != 2 or data.shape[1] < 2:
            raise DomainError(f'{path} is not a two-column table')
        data = data[~np.isnan(data[:, :2]).any(axis=1)]
        if not len(data):
            raise DomainError(f'{path} has no numeric rows')
        return cls.from_atoms(data[:, :2].tolist(), f_space=f_space, normalize=True)

    @property
    def nodes(self):
        return tuple(sorted(self.atoms + self.density_nodes))

    @property
    def rates(self):
        return np.array([r for r, _ in self.nodes])

    @property
    def weights(self):
        return np.array([w for _, w in self.nodes])

    @property
    def rho_star(self):
        return max(r for r, _ in self.nodes)

    @property
    def has_zero_rate(self):
        return any(r == 0 for r, _ in self.nodes)

    def mean(self, fn=None):
        return integrate_rho(self, fn or (lambda r: r))


def integrate_rho(law, fn, allow_neg_inf=False):
    """Return ``sum(w * fn(r))`` over the atoms and quadrature nodes of *law*.

    * *law* is a :class:`DiscountLaw`.
    * *fn* maps a rate (or exponent, for ``f_space`` laws) to a number or a
      numpy array.
    * *allow_neg_inf* lets ``-inf`` values through, so that ``phi(0) = -inf``
      makes the sum ``-inf``.

    Any other non-finite value of *fn* raises
    :class:`aggregation_stopping.errors.NumericError` naming the rate.
    """
    total = 0.0
    for r, w in law.nodes:
        value = np.asarray(fn(r), dtype=float)
        bad = ~np.isfinite(value)
        if allow_neg_inf:
            bad &= ~np.isneginf(value)
        if np.any(bad):
            raise NumericError('Non-finite integrand', r=r)
        total = total + w * value
    if np.ndim(total) == 0:
        return float(total)
    return total


@dataclass(frozen=True)
class AttitudeFunction:
    """The aggregation attitude ``phi`` applied to each rate's expected payoff.

    Kinds: ``'linear'``, ``'power'`` (``v ** p / p`` with ``p <= 1``,
    ``p != 0``), ``'log'``, ``'capped'`` (``min(v, alpha)``) and
    ``'tabulated'`` (monotone piecewise-cubic interpolation of *phis* over
    *values*).
    """

    kind: str
    p: float = 1.0
    alpha: float = None
    values: tuple = ()
    phis: tuple = ()

    def __post_init__(self):
        if self.kind not in ATTITUDE_KINDS:
            raise DomainError(f'Unknown attitude kind: {self.kind}')
        if self.kind == POWER and not (self.p <= 1 and self.p != 0):
            raise DomainError('Power attitudes need p <= 1 and p != 0')
        if self.kind == CAPPED and not (self.alpha is not None and 0 < self.alpha < 1):
            raise DomainError('Capped attitudes need alpha in (0, 1)')
        if self.kind == TABULATED:
            values = np.asarray(self.values, dtype=float)
            phis = np.asarray(self.phis, dtype=float)
            if len(values) < 2 or values.shape != phis.shape:
                raise DomainError('Tabulated attitudes need two matching rows or more')
            if np.any(np.diff(values) <= 0):
                raise DomainError('Tabulated values must be strictly increasing')
            if np.any(np.diff(phis) < 0):
                raise DomainError('Tabulated attitudes must be non-decreasing')

    @classmethod
    def linear(cls):
        return cls(LINEAR)

    @classmethod
    def power(cls, p):
        return cls(POWER, p=float(p))

    @classmethod
    def log(cls):
        return cls(LOG)

    @classmethod
    def capped(cls, alpha):
        return cls(CAPPED, alpha=float(alpha))

    @classmethod
    def tabulated(cls, values, phis):
        return cls(
            TABULATED,
            values=tuple(float(v) for v in values),
            phis=tuple(float(v) for v in phis),
        )

    @cached_property
    def _interpolator(self):
        return PchipInterpolator(self.values, self.phis, extrapolate=False)

    def __call__(self, v):
        return attitude_value(self, v)


def _as_payoff(att, v):
    v = np.asarray(v, dtype=float)
    if np.any(v < 0) or np.any(np.isnan(v)):
        raise DomainError('Attitudes are evaluated on non-negative payoff values')
    if att.kind == LOG or (att.kind == POWER and att.p < 0):
        if np.any(v == 0):
            raise DomainError(f'The {att.kind} attitude is unbounded below at 0')
    if att.kind == TABULATED:
        if np.any(v < att.values[0]) or np.any(v > att.values[-1]):
            raise DomainError('Value outside the tabulated attitude range')
    return v


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def unbounded_below(att):
    """Return ``True`` for attitudes with ``phi(v) -> -inf`` as ``v -> 0``."""
    return att.kind == LOG or (att.kind == POWER and att.p < 0)


def attitude_value(att, v, extended=False):
    """Vectorized ``phi(v)``. A zero value raises for attitudes that are
    :func:`unbounded_below`, unless *extended* is set, in which case
    ``phi(0) = -inf``. Valuations compare values on that extended line.
    """
    if extended and unbounded_below(att):
        v = np.asarray(v, dtype=float)
        zero = v == 0
        if np.any(zero):
            finite = attitude_value(att, np.where(zero, 1.0, v))
            return _scalar_or_array(np.where(zero, -np.inf, finite))
    v = _as_payoff(att, v)
    if att.kind == LINEAR:
        result = v
    elif att.kind == POWER:
        result = v**att.p / att.p
    elif att.kind == LOG:
        result = np.log(v)
    elif att.kind == CAPPED:
        result = np.minimum(v, att.alpha)
    else:
        result = att._interpolator(v)
    return _scalar_or_array(result)


def attitude_derivative(att, v):
    """Vectorized ``phi'(v)``; the capped kink reports the left derivative."""
    v = _as_payoff(att, v)
    if att.kind == LINEAR:
        result = np.ones_like(v)
    elif att.kind == POWER:
        with np.errstate(divide='ignore'):
            result = v ** (att.p - 1)
    elif att.kind == LOG:
        result = 1 / v
    elif att.kind == CAPPED:
        result = np.where(v <= att.alpha, 1.0, 0.0)
    else:
        result = att._interpolator.derivative(1)(v)
    return _scalar_or_array(result)


def attitude_second_derivative(att, v):
    v = _as_payoff(att, v)
    if att.kind in (LINEAR, CAPPED):
        result = np.zeros_like(v)
    elif att.kind == POWER:
        with np.errstate(divide='ignore'):
            result = (att.p - 1) * v ** (att.p - 2)
    elif att.kind == LOG:
        result = -1 / v**2
    else:
        result = att._interpolator.derivative(2)(v)
    return _scalar_or_array(result)


def attitude_eval(att, v):
    """Return ``(phi(v), phi'(v))``:

    * *att* is an :class:`AttitudeFunction`.
    * *v* is a payoff value, ``v >= 0`` (``v > 0`` for ``log`` and negative
      powers).

    .. code-block:: python

        from aggregation_stopping.preference import AttitudeFunction, attitude_eval

        attitude_eval(AttitudeFunction.power(0.5), 4.0)  # (4.0, 0.5)
    """
    return attitude_value(att, v), attitude_derivative(att, v)


def check_Ciii(att, v_grid):
    """Check that ``v * phi'(v)`` is non-decreasing and ``phi`` is strictly
    increasing on *v_grid*.

    Return value: ``(holds, witnesses)`` where *witnesses* lists the
    ``(v_lo, v_hi)`` neighbours at which a check fails.
    """
    v_grid = np.asarray(v_grid, dtype=float)
    if np.any(v_grid <= 0) or np.any(np.diff(v_grid) <= 0):
        raise DomainError('check_Ciii needs a sorted grid of positive values')

    phi, dphi = attitude_eval(att, v_grid)
    elasticity = dphi * v_grid
    bad = (np.diff(elasticity) < -MONOTONE_SLACK) | (np.diff(phi) <= 0)
    witnesses = [(float(v_grid[i]), float(v_grid[i + 1])) for i in np.flatnonzero(bad)]
    return not witnesses, witnesses


def aggregation_coefficient(att, v):
    """Return ``-phi''(v) / phi(v)``. Raises ``ZeroDivisionError`` where
    ``phi(v) == 0``.
    """
    phi = attitude_value(att, v)
    if np.any(np.asarray(phi) == 0):
        raise ZeroDivisionError(f'phi vanishes at {v}')
    return _scalar_or_array(-np.asarray(attitude_second_derivative(att, v)) / phi)
