import logging
from collections import namedtuple
from dataclasses import asdict, dataclass, field
from math import exp, sqrt

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .diffusion import GBM, check_model_conditions, f_gbm, m_log_derivative
from .errors import PreconditionError, UnsupportedError
from .preference import CAPPED, check_Ciii, integrate_rho
from .valuation import Lambda, Policy, classify, continuation_margin, stopped_value

logger = logging.getLogger(__name__)

DEFAULT_GRID_N = 2001
DEFAULT_A_N = 200
DEFAULT_MAX_ITER = 50

TOL_PLATEAU = 1e-9
ROOT_XTOL = 1e-14

# Regimes
SMOOTH_ROOT = 'smooth-root'
SMOOTH_ZERO = 'smooth-zero'
SCAN_DERIVED = 'scan-derived'
MEAN = 'mean'
ONE_MINUS_ALPHA = 'one-minus-alpha'
GAMMA = 'gamma'

# Verdicts
EXISTS = 'exists'
EXISTS_NOT_SMALLEST = 'exists-not-smallest'
DOES_NOT_EXIST = 'does-not-exist'

Threshold = namedtuple('Threshold', ['a_star', 'regime', 'gamma'])


@dataclass
class IterationTrace:
    """Policies visited by :func:`iterate_to_fixed_point`, starting with the
    (grid-aligned) initial policy.
    """

    policies: list
    converged: bool
    n_steps: int

    @property
    def limit(self):
        return self.policies[-1]


@dataclass
class BarrierRow:
    """Maximizers of ``Lambda(x, a)`` over equilibrium barriers at one state.
    *intervals* are ``(a_lo, a_hi)`` pairs.
    """

    x: float
    intervals: tuple
    value: float


@dataclass
class EquilibriumReport:
    a_star: float
    regime: str
    gamma: float = None
    verdict: str = None
    verdict_a: float = None
    witnesses: list = field(default_factory=list)
    a_double_star_map: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def default_x_grid(ctx, n=DEFAULT_GRID_N):
    return np.linspace(ctx.model.state_floor, ctx.model.state_cap, n)


def default_a_grid(ctx, n=DEFAULT_A_N):
    return np.linspace(0.0, ctx.strike, n)


def theta(ctx, R, x_grid):
    """Apply the policy-improvement operator: return the grid-aligned union of
    *R* with the states where stopping at once strictly beats ``J(x, R)``.
    """
    grid = np.asarray(x_grid, dtype=float)
    if not R.grid_aligned:
        R = R.snap(grid)
    stop = classify(ctx, R, grid).stop
    return Policy.from_mask(grid, R.mask(grid) | stop)


def iterate_to_fixed_point(ctx, R0, x_grid, max_iter=DEFAULT_MAX_ITER):
    """Apply :func:`theta` from *R0* until the policy stops changing on the
    grid or *max_iter* applications have been made.

    Return value: an :class:`IterationTrace`. ``n_steps`` counts applications
    of :func:`theta`, including the final one that confirms the fixed point.

    .. code-block:: python

        from aggregation_stopping.equilibrium import iterate_to_fixed_point

        trace = iterate_to_fixed_point(ctx, Policy.empty(), grid)
        print(trace.converged, trace.limit)
    """
    if max_iter < 1:
        raise ValueError('max_iter must be at least 1')
    grid = np.asarray(x_grid, dtype=float)
    current = R0 if R0.grid_aligned else R0.snap(grid)
    policies = [current]

    for step in range(1, max_iter + 1):
        following = theta(ctx, current, grid)
        logger.debug(
            'Iteration %d: %d interval(s), %s',
            step,
            len(following.intervals),
            following,
        )
        if np.array_equal(following.mask(grid), current.mask(grid)):
            return IterationTrace(policies, True, step)
        policies.append(following)
        current = following

    logger.warning('No fixed point within %d iterations', max_iter)
    return IterationTrace(policies, False, max_iter)


def _check_states(ctx, a, x_grid):
    grid = np.asarray(x_grid, dtype=float)
    offsets = ctx.strike * np.geomspace(1e-6, 1e-1, 25)
    kinks = [ctx.strike]
    if ctx.att.kind == CAPPED and ctx.standard_payoff:
        kinks.append(ctx.strike - ctx.att.alpha)
    xs = np.concatenate((grid, a + offsets, kinks))
    xs = xs[(xs >= a) & (xs <= ctx.model.state_cap)]
    return np.unique(xs)


def is_barrier_equilibrium(ctx, a, x_grid=None):
    """Check whether ``[0, a]`` is an equilibrium, i.e. whether
    ``Lambda(x, a) >= phi(g(x))`` for every state ``x >= a``.

    The grid is augmented with states just above *a* and with the payoff
    kinks so that violations close to the barrier are seen.

    Return value: ``(holds, worst_x)`` where *worst_x* minimizes
    ``Lambda(x, a) - phi(g(x))``.
    """
    if x_grid is None:
        x_grid = default_x_grid(ctx)
    xs = _check_states(ctx, a, x_grid)
    margin, eps = continuation_margin(ctx, stopped_value(ctx, xs), Lambda(ctx, xs, a))
    worst = int(np.argmin(margin))
    return bool(np.all(margin >= -eps)), float(xs[worst])


def G(ctx, a):
    """Return ``sum(w * m_r(a))``, the aggregated right-derivative in ``x`` of
    the log hitting transforms at ``x = a``.
    """

    def m_at_a(r):
        rate, exponent = ctx.rate_args(r)
        return m_log_derivative(ctx.model, rate, a, exponent=exponent)

    return integrate_rho(ctx.law, m_at_a)


def smooth_preconditions(ctx, n=200):
    """Run the attitude and model checks required by
    :func:`smallest_threshold_smooth`. Return a ``dict`` with keys ``ciii``,
    ``ciii_witnesses``, ``model`` (a ``ConditionReport``) and ``holds``.
    """
    K = ctx.strike
    v_grid = np.linspace(K / n, K, n)
    ciii, witnesses = check_Ciii(ctx.att, v_grid)

    rates = ctx.law.rates
    r_grid = np.union1d(rates, np.linspace(rates.min(), rates.max(), 20))
    report = check_model_conditions(
        ctx.model, r_grid, v_grid, exponents=ctx.law.f_space
    )
    return {
        'ciii': ciii,
        'ciii_witnesses': witnesses,
        'model': report,
        'holds': ciii and report.holds,
    }


def scan_threshold(ctx, a_grid=None, x_grid=None):
    """Return the smallest barrier of *a_grid* that passes
    :func:`is_barrier_equilibrium` (the strike when none does).
    """
    if a_grid is None:
        a_grid = default_a_grid(ctx)
    for a in a_grid:
        if is_barrier_equilibrium(ctx, float(a), x_grid)[0]:
            return float(a)
    return float(ctx.strike)


def smallest_threshold_smooth(ctx, force=False, a_grid=None, x_grid=None):
    """Return the smallest equilibrium barrier for a strictly increasing
    attitude:

    * *ctx* is a :class:`aggregation_stopping.valuation.ValuationContext` with
      the default put payoff.
    * *force* replaces the precondition error with a grid scan whose result is
      labelled ``'scan-derived'``.

    The barrier is the root of ``G(a) + 1 / (K - a)``, or 0 when that is
    positive throughout ``(0, K)``.

    Return value: a ``Threshold(a_star, regime, gamma)`` tuple.
    """
    if not ctx.standard_payoff:
        raise UnsupportedError('The smooth threshold needs the put payoff')
    checks = smooth_preconditions(ctx)
    if not checks['holds']:
        if not force:
            raise PreconditionError('Attitude or model conditions fail', checks)
        logger.warning('Conditions fail; deriving the threshold from a grid scan')
        return Threshold(scan_threshold(ctx, a_grid, x_grid), SCAN_DERIVED, None)

    K = ctx.strike

    def excess(a):
        return G(ctx, a) + 1 / (K - a)

    lo = K * 1e-9
    hi = K * (1 - 1e-12)
    if excess(lo) >= 0:
        logger.info('Smooth threshold is 0')
        return Threshold(0.0, SMOOTH_ZERO, None)
    a_star = brentq(excess, lo, hi, xtol=ROOT_XTOL)
    logger.info('Smooth threshold a_star=%.12g', a_star)
    return Threshold(a_star, SMOOTH_ROOT, None)


def gbm_gamma(alpha, f_star):
    """Return the smaller root of ``(1 - a) * a**f_star = alpha * (1 - alpha)**f_star``
    on ``[0, f_star / (f_star + 1)]``.
    """
    if f_star <= 0:
        raise UnsupportedError('The capped root needs a positive largest exponent')
    top = f_star / (f_star + 1)
    target = alpha * (1 - alpha) ** f_star
    return brentq(lambda a: (1 - a) * a**f_star - target, 0.0, top, xtol=ROOT_XTOL)


def bessel_hump(r, x):
    """Return ``(1 - x) * x * exp(sqrt(2r) * x)``."""
    return (1 - x) * x * np.exp(sqrt(2 * r) * x)


def bessel_hump_argmax(r):
    """Return the maximizer of :func:`bessel_hump` on ``[0, 1]``."""
    if r == 0:
        return 0.5
    c = sqrt(2 * r)
    return sqrt(0.25 + 1 / c**2) - 1 / c + 0.5


def bessel_gamma(alpha, rho_star):
    """Return the root on ``[0, x*(rho_star)]`` of
    ``(1 - g) * g * exp(c * g) = alpha * (1 - alpha) * exp(c * (1 - alpha))``
    with ``c = sqrt(2 * rho_star)``.
    """
    c = sqrt(2 * rho_star)
    top = bessel_hump_argmax(rho_star)
    target = alpha * (1 - alpha)
    return brentq(
        lambda g: (1 - g) * g * exp(c * (g - (1 - alpha))) - target,
        0.0,
        top,
        xtol=ROOT_XTOL,
    )


def bessel_x_double_star(alpha, rho_star, a):
    """Return the state ``x >= a`` where
    ``(1 - a) * (a / x) * exp(-sqrt(2 * rho_star) * (x - a))`` falls to
    *alpha*; *a* itself when it is already at or below *alpha* there.
    """
    c = sqrt(2 * rho_star)

    def excess(x):
        return (1 - a) * (a / x) * exp(-c * (x - a)) - alpha

    if excess(a) <= 0:
        return a
    hi = a + 1.0
    while excess(hi) > 0:
        hi *= 2
    return brentq(excess, a, hi, xtol=ROOT_XTOL)


def _capped_gbm(ctx, alpha):
    model = ctx.model

    def exponent(r):
        return r if ctx.law.f_space else f_gbm(r, model.mu, model.sigma)

    mean_f = integrate_rho(ctx.law, exponent)
    f_star = exponent(ctx.law.rho_star)
    mean_branch = mean_f / (mean_f + 1)
    star_branch = f_star / (f_star + 1)

    if 1 - alpha <= mean_branch:
        return Threshold(mean_branch, MEAN, None)
    if 1 - alpha <= star_branch:
        return Threshold(1 - alpha, ONE_MINUS_ALPHA, None)
    gamma = gbm_gamma(alpha, f_star)
    return Threshold(gamma, GAMMA, gamma)


def _capped_bessel3(ctx, alpha):
    law = ctx.law
    s = integrate_rho(law, lambda r: sqrt(2 * r))
    mean_branch = bessel_hump_argmax(s * s / 2)
    star_branch = bessel_hump_argmax(law.rho_star)

    if 1 - alpha <= mean_branch:
        return Threshold(mean_branch, MEAN, None)
    if 1 - alpha <= star_branch:
        return Threshold(1 - alpha, ONE_MINUS_ALPHA, None)
    gamma = bessel_gamma(alpha, law.rho_star)
    return Threshold(gamma, GAMMA, gamma)


def smallest_threshold_capped(ctx):
    """Return the smallest equilibrium barrier for the capped attitude
    ``min(v, alpha)`` with the put payoff and ``K = 1``, for GBM and the
    three-dimensional Bessel process.

    The three branches are the mean-exponent threshold, ``1 - alpha`` and the
    smaller root ``gamma`` of the hump equation for the largest rate.

    Return value: a ``Threshold(a_star, regime, gamma)`` tuple.
    """
    if ctx.att.kind != CAPPED:
        raise UnsupportedError('The capped threshold needs a capped attitude')
    if not ctx.standard_payoff or ctx.strike != 1:
        raise UnsupportedError('The capped threshold needs the put payoff with K = 1')

    alpha = ctx.att.alpha
    if ctx.model.kind == GBM:
        threshold = _capped_gbm(ctx, alpha)
    elif ctx.model.is_bessel3 and not ctx.law.f_space:
        threshold = _capped_bessel3(ctx, alpha)
    else:
        raise UnsupportedError('The capped threshold covers GBM and Bessel-3 only')

    logger.info(
        'Capped threshold a_star=%.12g (%s)', threshold.a_star, threshold.regime
    )
    return threshold


def find_threshold(ctx, force=False, a_grid=None, x_grid=None):
    """Return the smallest equilibrium barrier by the fastest applicable
    route: the capped solvers, the smooth root, or a grid scan.
    """
    if ctx.att.kind == CAPPED:
        try:
            return smallest_threshold_capped(ctx)
        except UnsupportedError:
            logger.warning('No capped closed form; scanning barriers')
            return Threshold(scan_threshold(ctx, a_grid, x_grid), SCAN_DERIVED, None)
    return smallest_threshold_smooth(ctx, force=force, a_grid=a_grid, x_grid=x_grid)


def equilibrium_barriers(a_grid, a_star, strike):
    a_grid = np.asarray(a_grid, dtype=float)
    inside = a_grid[(a_grid > a_star) & (a_grid <= strike)]
    return np.concatenate(([a_star], inside))


def _runs(mask):
    edges = np.diff(np.concatenate(([0], mask.astype(int), [0])))
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1) - 1))


def _refine(ctx, x, a_values, i, best):
    lo = a_values[max(i - 1, 0)]
    hi = a_values[min(i + 1, len(a_values) - 1)]
    if i == 0 or i == len(a_values) - 1:
        return a_values[i]
    result = minimize_scalar(
        lambda a: -Lambda(ctx, x, a),
        bounds=(lo, hi),
        method='bounded',
        options={'xatol': 1e-12},
    )
    if result.success and -result.fun >= best - TOL_PLATEAU:
        return float(result.x)
    return a_values[i]


def _maximizers(ctx, x_grid, a_values):
    xs = np.asarray(x_grid, dtype=float)
    table = np.asarray(Lambda(ctx, xs[:, None], a_values[None, :]), dtype=float)
    best = table.max(axis=1)
    return table >= best[:, None] - TOL_PLATEAU, best


def optimal_barrier_map(ctx, x_grid, a_grid, a_star=None, refine=True):
    """For each state of *x_grid*, find the equilibrium barriers that maximize
    ``Lambda(x, a)``:

    * *a_grid* is restricted to ``[a_star, K]`` and *a_star* is added.
    * *a_star* defaults to :func:`find_threshold`.
    * *refine* sharpens isolated maximizers with a bounded scalar search
      between the neighbouring grid points.

    Return value: a list of :class:`BarrierRow`.
    """
    if a_star is None:
        a_star = find_threshold(ctx).a_star
    a_values = equilibrium_barriers(a_grid, a_star, ctx.strike)
    masks, best = _maximizers(ctx, x_grid, a_values)

    rows = []
    for x, mask, value in zip(np.asarray(x_grid, dtype=float), masks, best):
        intervals = []
        for i, j in _runs(mask):
            if i == j and refine:
                point = _refine(ctx, x, a_values, i, value)
                intervals.append((point, point))
            else:
                intervals.append((float(a_values[i]), float(a_values[j])))
        rows.append(BarrierRow(float(x), tuple(intervals), float(value)))
    return rows


def _disjoint_pair(masks):
    running = masks[0].copy()
    for j in range(1, len(masks)):
        running &= masks[j]
        if not running.any():
            for i in range(j):
                if not (masks[i] & masks[j]).any():
                    return i, j
            break
    for i in range(len(masks)):
        for j in range(i + 1, len(masks)):
            if not (masks[i] & masks[j]).any():
                return i, j
    return None


def optimal_verdict(ctx, x_grid=None, a_grid=None, force=False):
    """Decide whether an optimal equilibrium exists among the one-barrier
    equilibria, by intersecting the maximizer sets of ``Lambda(x, .)`` across
    *x_grid*:

    * ``'exists'`` when the smallest equilibrium barrier is in every set;
    * ``'exists-not-smallest'`` when the intersection is non-empty but misses
      it (the smallest common barrier is reported);
    * ``'does-not-exist'`` otherwise, with two states whose maximizer sets
      are disjoint as witnesses.

    Return value: an :class:`EquilibriumReport`.
    """
    if x_grid is None:
        x_grid = np.linspace(0.0, 2 * ctx.strike, 401)
    if a_grid is None:
        a_grid = default_a_grid(ctx)
    xs = np.asarray(x_grid, dtype=float)

    threshold = find_threshold(ctx, force=force, a_grid=a_grid)
    a_star = threshold.a_star
    a_values = equilibrium_barriers(a_grid, a_star, ctx.strike)
    masks, best = _maximizers(ctx, xs, a_values)
    rows = optimal_barrier_map(ctx, xs, a_grid, a_star=a_star)
    common = np.logical_and.reduce(masks, axis=0)

    report = EquilibriumReport(
        a_star=a_star,
        regime=threshold.regime,
        gamma=threshold.gamma,
        a_double_star_map=rows,
    )
    if common[0]:
        report.verdict = EXISTS
        report.verdict_a = a_star
    elif common.any():
        i = int(np.flatnonzero(common)[0])
        report.verdict = EXISTS_NOT_SMALLEST
        report.verdict_a = _sharpen(rows, a_values, i)
    else:
        report.verdict = DOES_NOT_EXIST
        pair = _disjoint_pair(masks)
        if pair is not None:
            report.witnesses = [
                {
                    'x': rows[k].x,
                    'maximizers': [list(interval) for interval in rows[k].intervals],
                    'value': float(best[k]),
                }
                for k in pair
            ]

    logger.info('Verdict %s (a=%s)', report.verdict, report.verdict_a)
    return report


def _sharpen(rows, a_values, i):
    # Prefer a refined singleton maximizer lying within one grid step
    step = np.max(np.diff(a_values)) if len(a_values) > 1 else 0.0
    for row in reversed(rows):
        if len(row.intervals) == 1:
            lo, hi = row.intervals[0]
            if lo == hi and abs(lo - a_values[i]) <= step:
                return lo
    return float(a_values[i])
