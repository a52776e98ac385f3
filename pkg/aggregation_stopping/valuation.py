import logging
from collections import namedtuple
from dataclasses import dataclass
from math import isfinite

import numpy as np

from .diffusion import GBM, exit_parts, log_hit, log_hit_up
from .errors import ConventionError, DomainError, UnsupportedError
from .preference import CAPPED, attitude_value, integrate_rho

logger = logging.getLogger(__name__)

REJECT = 'reject'
TRANSFORM_LIMIT = 'transform-limit'
R0_CONVENTIONS = (REJECT, TRANSFORM_LIMIT)

DEFAULT_EPS_CLS = 1e-9

RED = 'red'
BLUE = 'blue'
GREEN = 'green'
YELLOW = 'yellow'

Regions = namedtuple('Regions', ['stop', 'indifferent', 'cont'])


@dataclass(frozen=True)
class Policy:
    """A stopping region: sorted, disjoint closed intervals ``(lo, hi)``.

    .. code-block:: python

        from aggregation_stopping.valuation import Policy

        Policy.barrier(0.6)  # [0, 0.6]
        Policy(((0.0, 0.5), (0.8, 0.9)))
    """

    intervals: tuple = ()
    grid_aligned: bool = False

    def __post_init__(self):
        previous = None
        for lo, hi in self.intervals:
            if not (isfinite(lo) and isfinite(hi) and lo <= hi):
                raise DomainError(f'Invalid interval [{lo}, {hi}]')
            if previous is not None and not lo > previous:
                raise DomainError('Intervals must be sorted and separated')
            previous = hi

    def __str__(self):
        if self.is_empty:
            return '{}'
        return ' U '.join(f'[{lo:.6g}, {hi:.6g}]' for lo, hi in self.intervals)

    @classmethod
    def empty(cls, grid_aligned=True):
        return cls((), grid_aligned)

    @classmethod
    def barrier(cls, a, floor=0.0, grid_aligned=False):
        return cls(((float(floor), float(a)),), grid_aligned)

    @classmethod
    def from_mask(cls, grid, mask):
        """Group consecutive selected grid points into closed intervals."""
        grid = np.asarray(grid, dtype=float)
        mask = np.asarray(mask, dtype=bool)
        edges = np.diff(np.concatenate(([0], mask.astype(int), [0])))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1) - 1
        intervals = tuple(
            (float(grid[i]), float(grid[j])) for i, j in zip(starts, stops)
        )
        return cls(intervals, grid_aligned=True)

    @property
    def is_empty(self):
        return not self.intervals

    @property
    def lows(self):
        return np.array([lo for lo, _ in self.intervals])

    @property
    def highs(self):
        return np.array([hi for _, hi in self.intervals])

    @property
    def right_end(self):
        return self.intervals[-1][1] if self.intervals else None

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_empty:
            return np.zeros(x.shape, dtype=bool)
        idx = np.searchsorted(self.lows, x, side='right') - 1
        return (idx >= 0) & (x <= self.highs[np.clip(idx, 0, None)])

    def mask(self, grid):
        return self.contains(grid)

    def snap(self, grid):
        """Widen every interval outward to grid points and re-merge."""
        grid = np.asarray(grid, dtype=float)
        mask = np.zeros(grid.shape, dtype=bool)
        for lo, hi in self.intervals:
            i = max(np.searchsorted(grid, lo, side='right') - 1, 0)
            j = min(np.searchsorted(grid, hi, side='left'), len(grid) - 1)
            mask[i : j + 1] = True
        return Policy.from_mask(grid, mask)

    def issubset(self, other):
        return all(
            any(o_lo <= lo and hi <= o_hi for o_lo, o_hi in other.intervals)
            for lo, hi in self.intervals
        )


@dataclass(frozen=True)
class ValuationContext:
    """Everything a valuation needs:

    * *model* is a :class:`aggregation_stopping.diffusion.DiffusionSpec`.
    * *law* is a :class:`aggregation_stopping.preference.DiscountLaw`.
    * *att* is an :class:`aggregation_stopping.preference.AttitudeFunction`.
    * *strike* is ``K`` in the default payoff ``(K - x)+``.
    * *payoff* optionally replaces the default payoff with a non-negative
      continuous function of the state.
    * *r0_convention* is ``'reject'`` or ``'transform-limit'``; the latter
      accepts raw zero rates and uses the ``r -> 0`` limit of the transforms.
    * *eps_cls* scales the classification tolerance.
    """

    model: object
    law: object
    att: object
    strike: float = 1.0
    payoff: object = None
    r0_convention: str = REJECT
    eps_cls: float = DEFAULT_EPS_CLS

    def __post_init__(self):
        if not (isfinite(self.strike) and self.strike > 0):
            raise DomainError('The strike must be positive')
        if self.r0_convention not in R0_CONVENTIONS:
            raise DomainError(f'Unknown zero-rate convention: {self.r0_convention}')
        if self.law.f_space and self.model.kind != GBM:
            raise UnsupportedError('Exponent-space laws need a GBM model')
        if (
            self.law.has_zero_rate
            and not self.law.f_space
            and self.r0_convention == REJECT
        ):
            raise ConventionError(
                'The law has a zero discount rate; '
                f'set r0_convention to {TRANSFORM_LIMIT!r} to accept it'
            )

    @property
    def standard_payoff(self):
        return self.payoff is None

    def rate_args(self, r):
        """Map a law value to ``(rate, exponent)`` arguments for the
        :mod:`aggregation_stopping.diffusion` functions.
        """
        if self.law.f_space:
            return 0.0, r
        return r, None


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def payoff_g(ctx, x):
    """Return the payoff ``g(x)``, by default ``max(K - x, 0)``."""
    x = np.asarray(x, dtype=float)
    if ctx.payoff is None:
        result = np.maximum(ctx.strike - x, 0.0)
    else:
        result = np.vectorize(ctx.payoff, otypes=[float])(x)
    return _scalar_or_array(result)


def stopped_value(ctx, x):
    """Return ``phi(g(x))``, the value of stopping at once. Where ``g(x) = 0``
    an attitude that is unbounded below gives ``-inf``.
    """
    return attitude_value(ctx.att, payoff_g(ctx, x), extended=True)


def continuation_margin(ctx, now, later):
    """Return ``(later - now, eps)`` for arrays of stopping values *now* and
    continuation values *later*. Values equal to ``-inf`` on both sides give a
    margin of 0; ``now == -inf`` alone gives ``+inf``. *eps* is
    ``eps_cls * (1 + |now|)`` with infinite *now* counted as 0.
    """
    now = np.asarray(now, dtype=float)
    later = np.asarray(later, dtype=float)
    with np.errstate(invalid='ignore'):
        margin = later - now
    both = np.where(np.isneginf(later), 0.0, np.inf)
    margin = np.where(np.isneginf(now), both, margin)
    eps = ctx.eps_cls * (1 + np.abs(np.where(np.isfinite(now), now, 0.0)))
    return margin, eps


def inner_expectation(ctx, r, x, R):
    """Return ``E[exp(-r * tau) * g(X_tau)]`` for the first entry time ``tau``
    into *R*, for an array of starting states *x*.
    """
    rate, exponent = ctx.rate_args(r)
    model = ctx.model
    x = np.atleast_1d(np.asarray(x, dtype=float))
    result = np.zeros_like(x)
    if R.is_empty:
        return result

    lows, highs = R.lows, R.highs
    below = np.searchsorted(lows, x, side='right') - 1
    above = below + 1
    inside = R.contains(x)
    has_below = below >= 0
    has_above = above < len(lows)

    gap = ~inside & has_below & has_above
    if gap.any():
        l = highs[below[gap]]
        u = lows[above[gap]]
        to_lower, to_upper = exit_parts(model, rate, x[gap], l, u, exponent)
        result[gap] = payoff_g(ctx, l) * to_lower + payoff_g(ctx, u) * to_upper

    down = ~inside & has_below & ~has_above
    if down.any():
        a = highs[below[down]]
        log_factor = log_hit(model, rate, x[down], a, exponent)
        result[down] = payoff_g(ctx, a) * np.exp(log_factor)

    up = ~inside & ~has_below & has_above
    if up.any():
        u = lows[0]
        log_factor = log_hit_up(model, rate, x[up], u, exponent)
        result[up] = payoff_g(ctx, u) * np.exp(log_factor)

    result[inside] = payoff_g(ctx, x[inside])
    return result


def J(ctx, x, R):
    """Return the aggregated continuation value
    ``sum(w * phi(E[exp(-r * tau) * g(X_tau)]))`` of the policy *R*:

    * *ctx* is a :class:`ValuationContext`.
    * *x* is a state or a numpy array of states.
    * *R* is a :class:`Policy`.

    On *R* the value is ``phi(g(x))``. Paths that never enter *R* contribute 0.

    .. code-block:: python

        from aggregation_stopping.diffusion import DiffusionSpec
        from aggregation_stopping.preference import AttitudeFunction, DiscountLaw
        from aggregation_stopping.valuation import J, Policy, ValuationContext

        ctx = ValuationContext(
            DiffusionSpec.gbm(0.05, 0.2),
            DiscountLaw.from_atoms([(1, 0.5), (2, 0.5)], f_space=True),
            AttitudeFunction.capped(0.25),
        )
        J(ctx, 0.8, Policy.barrier(0.7))  # 0.23984375
    """
    flat = np.atleast_1d(np.asarray(x, dtype=float))
    total = integrate_rho(
        ctx.law,
        lambda r: attitude_value(
            ctx.att, inner_expectation(ctx, r, flat, R), extended=True
        ),
        allow_neg_inf=True,
    )
    inside = R.contains(flat)
    if inside.any():
        total = np.where(inside, stopped_value(ctx, np.where(inside, flat, 0.0)), total)
    return _scalar_or_array(np.reshape(total, np.shape(x)))


def Lambda(ctx, x, a):
    """Return the value at *x* of the one-barrier policy ``[0, a]``: the
    aggregated ``phi(g(a) * E[exp(-r * tau_a)])`` for ``x >= a`` and
    ``phi(g(x))`` for ``x < a``. Broadcasts over *x* and *a*.
    """
    x, a = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(a, dtype=float))
    stopped = x <= a
    start = np.where(stopped, a, x)
    payoff_a = np.asarray(payoff_g(ctx, a))

    def per_rate(r):
        rate, exponent = ctx.rate_args(r)
        transform = np.exp(log_hit(ctx.model, rate, start, a, exponent))
        return attitude_value(ctx.att, payoff_a * transform, extended=True)

    value = integrate_rho(ctx.law, per_rate, allow_neg_inf=True)
    if stopped.any():
        value = np.where(stopped, stopped_value(ctx, x), value)
    return _scalar_or_array(value)


def V(ctx, x, R):
    """Return ``max(phi(g(x)), J(x, R))``."""
    return _scalar_or_array(np.maximum(stopped_value(ctx, x), J(ctx, x, R)))


def classify(ctx, R, x_grid):
    """Split *x_grid* into stopping, indifference and continuation regions of
    the policy *R*.

    Return value: a ``Regions(stop, indifferent, cont)`` tuple of boolean
    masks over *x_grid*. A point is in ``stop`` when ``phi(g(x))`` beats
    ``J(x, R)`` by more than ``eps_cls * (1 + |phi(g(x))|)``. A stopping
    value of ``-inf`` never beats continuing.
    """
    grid = np.asarray(x_grid, dtype=float)
    now = stopped_value(ctx, grid)
    margin, eps = continuation_margin(ctx, now, J(ctx, grid, R))
    stop = margin < -eps
    indifferent = np.abs(margin) <= eps
    return Regions(stop, indifferent, ~(stop | indifferent))


def barrier_regions(ctx, x, a):
    """Label points ``(x, a)`` of a capped context by which atoms hit the cap
    in ``Lambda(x, a)``: ``'red'`` below the barrier, ``'blue'`` when no atom
    is capped, ``'yellow'`` when every atom is, ``'green'`` in between.
    """
    if ctx.att.kind != CAPPED:
        raise UnsupportedError('Region labels are defined for capped attitudes')
    x, a = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(a, dtype=float))
    start = np.maximum(x, a)
    payoff_a = np.asarray(payoff_g(ctx, a))

    capped = np.zeros(x.shape, dtype=int)
    for r, _ in ctx.law.nodes:
        rate, exponent = ctx.rate_args(r)
        inner = payoff_a * np.exp(log_hit(ctx.model, rate, start, a, exponent))
        capped += inner > ctx.att.alpha
    n = len(ctx.law.nodes)

    labels = np.where(capped == 0, BLUE, np.where(capped == n, YELLOW, GREEN))
    labels = np.where(x < a, RED, labels)
    return labels.item() if labels.ndim == 0 else labels
