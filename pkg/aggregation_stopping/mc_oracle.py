import logging
from dataclasses import dataclass, replace
from math import ceil, exp, isfinite, log, sqrt

import numpy as np

from .diffusion import GBM
from .errors import DomainError, UnsupportedError
from .preference import attitude_derivative, attitude_value
from .valuation import payoff_g, stopped_value

logger = logging.getLogger(__name__)

EULER = 'euler'
EXACT_BESSEL3 = 'exact_bessel3'
EXACT_GBM = 'exact_gbm_increment'
SCHEMES = (EULER, EXACT_BESSEL3, EXACT_GBM)

# Steps keep a path at least STEP_SAFETY local standard deviations (and drift
# displacements) away from the barriers it could jump over
STEP_SAFETY = 5.0
HORIZON_TAIL = 1e-6
Z_FLAG = 3.0
BIAS_Z = 2.0

LOWER = -1
UPPER = 1
CENSORED = 0


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings:

    * *n_paths* is the number of simulated paths (at least 1000).
    * *dt* is the finest time step, used next to the barriers.
    * *horizon* is the censoring time ``T``. By default it is chosen so that
      ``exp(-r_min * T) < 1e-6``.
    * *seed* alone determines every random draw.
    * *scheme* is ``'euler'``, ``'exact_bessel3'`` or
      ``'exact_gbm_increment'``; by default the exact scheme of the model is
      used when there is one.
    * *block_size* is the number of paths per random stream.
    * *max_step* caps the adaptive time step far from the barriers.
    """

    n_paths: int = 100_000
    dt: float = 1e-4
    horizon: float = None
    seed: int = 0
    scheme: str = None
    block_size: int = 10_000
    max_step: float = 1.0

    def __post_init__(self):
        if self.n_paths < 1000:
            raise DomainError('n_paths must be at least 1000')
        if not (isfinite(self.dt) and self.dt > 0):
            raise DomainError('dt must be positive')
        if self.horizon is not None and not self.horizon >= 100 * self.dt:
            raise DomainError('The horizon must be at least 100 * dt')
        if self.scheme is not None and self.scheme not in SCHEMES:
            raise DomainError(f'Unknown scheme: {self.scheme}')
        if self.block_size < 1 or self.max_step < self.dt:
            raise DomainError('block_size must be positive and max_step >= dt')

    def horizon_for(self, r_min):
        if self.horizon is not None:
            return self.horizon
        return max(log(1 / HORIZON_TAIL) / r_min, 100 * self.dt)

    def scheme_for(self, model):
        if self.scheme is None:
            if model.kind == GBM:
                return EXACT_GBM
            if model.is_bessel3:
                return EXACT_BESSEL3
            return EULER
        if self.scheme == EXACT_GBM and model.kind != GBM:
            raise UnsupportedError('The exact GBM scheme needs a GBM model')
        if self.scheme == EXACT_BESSEL3 and not model.is_bessel3:
            raise UnsupportedError('The exact Bessel scheme needs a Bessel-3 model')
        return self.scheme


@dataclass
class McEstimate:
    mean: float
    std_error: float
    n_effective: int
    truncation_bound: float = 0.0
    censored: int = 0
    bias_flag: bool = False

    def z_score(self, expected):
        if self.std_error == 0:
            return 0.0 if self.mean == expected else float('inf')
        return (self.mean - expected) / self.std_error


@dataclass
class JEstimate:
    """Monte Carlo estimate of ``J(x, R)``: *per_atom* holds ``(r, McEstimate)``
    pairs for the inner expectations; *mean* and *std_error* belong to the
    aggregated value.
    """

    per_atom: tuple
    mean: float
    std_error: float

    def z_score(self, expected):
        if self.std_error == 0:
            return 0.0 if self.mean == expected else float('inf')
        return (self.mean - expected) / self.std_error


@dataclass
class _Exits:
    tau: np.ndarray
    side: np.ndarray
    killed: np.ndarray


def _streams(cfg):
    n_blocks = ceil(cfg.n_paths / cfg.block_size)
    children = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    for i, child in enumerate(children):
        size = min(cfg.block_size, cfg.n_paths - i * cfg.block_size)
        yield size, np.random.Generator(np.random.Philox(child))


class _Coordinates:
    """Simulation coordinates of one block: log-state for exact GBM, three
    Brownian coordinates for exact Bessel-3, the state itself for Euler.
    """

    def __init__(self, model, scheme, x, n):
        self.model = model
        self.scheme = scheme
        if scheme == EXACT_GBM:
            self.values = np.full(n, log(x))
        elif scheme == EXACT_BESSEL3:
            self.values = np.zeros((n, 3))
            self.values[:, 0] = x
        else:
            self.values = np.full(n, float(x))

    def state(self, idx):
        if self.scheme == EXACT_GBM:
            return np.exp(self.values[idx])
        if self.scheme == EXACT_BESSEL3:
            return np.sqrt(np.sum(self.values[idx] ** 2, axis=1))
        return self.values[idx]

    def local(self, states):
        # (volatility, drift) of the coordinate that distances are measured in
        model = self.model
        if self.scheme == EXACT_GBM:
            sig = np.full(states.shape, model.sigma)
            return sig, np.full(states.shape, model.mu - 0.5 * model.sigma**2)
        if self.scheme == EXACT_BESSEL3:
            return np.ones(states.shape), 1 / np.maximum(states, 1e-300)
        return np.abs(model.volatility(states)), model.drift(states)

    def advance(self, idx, states, h, rng):
        model = self.model
        if self.scheme == EXACT_GBM:
            z = rng.standard_normal(len(idx))
            drift = model.mu - 0.5 * model.sigma**2
            self.values[idx] += drift * h + model.sigma * np.sqrt(h) * z
        elif self.scheme == EXACT_BESSEL3:
            z = rng.standard_normal((len(idx), 3))
            self.values[idx] += np.sqrt(h)[:, None] * z
        else:
            z = rng.standard_normal(len(idx))
            step = model.drift(states) * h + model.volatility(states) * np.sqrt(h) * z
            # Reflect at the floor
            floor = model.state_floor
            self.values[idx] = floor + np.abs(states + step - floor)


def _distance(model, scheme, states, lower, upper):
    if scheme == EXACT_GBM:
        coord = np.log(states)
        lo = log(lower) if lower else -np.inf
        hi = log(upper) if upper is not None else np.inf
    else:
        coord = states
        lo = lower if lower is not None else -np.inf
        hi = upper if upper is not None else np.inf
    return np.minimum(coord - lo, hi - coord)


def _step_sizes(cfg, dist, sig, drift, remaining):
    with np.errstate(divide='ignore', invalid='ignore'):
        h = (dist / (STEP_SAFETY * sig)) ** 2
        drift_cap = np.where(
            np.abs(drift) > 0, dist / (STEP_SAFETY * np.abs(drift)), np.inf
        )
    h = np.clip(np.minimum(h, drift_cap), cfg.dt, cfg.max_step)
    return np.minimum(h, remaining)


def _first_exits(model, x, lower, upper, cfg, horizon):
    """Simulate every path from *x* until it leaves ``(lower, upper)`` or the
    horizon passes. Exits are recorded at step resolution and snapped to the
    barrier that was crossed.
    """
    scheme = cfg.scheme_for(model)
    taus, sides, killed = [], [], []

    for block, (size, rng) in enumerate(_streams(cfg)):
        coords = _Coordinates(model, scheme, x, size)
        t = np.zeros(size)
        kill = np.zeros(size)
        side = np.full(size, CENSORED)
        active = np.ones(size, dtype=bool)
        steps = 0

        while active.any():
            idx = np.flatnonzero(active)
            states = coords.state(idx)
            dist = _distance(model, scheme, states, lower, upper)
            sig, drift = coords.local(states)
            h = _step_sizes(cfg, dist, sig, drift, horizon - t[idx])

            kill[idx] += model.killing(states) * h
            coords.advance(idx, states, h, rng)
            t[idx] += h
            steps += 1

            moved = coords.state(idx)
            if lower is not None:
                hit = moved <= lower
                side[idx[hit]] = LOWER
                active[idx[hit]] = False
            if upper is not None:
                hit = active[idx] & (moved >= upper)
                side[idx[hit]] = UPPER
                active[idx[hit]] = False
            expired = active[idx] & (t[idx] >= horizon * (1 - 1e-12))
            active[idx[expired]] = False

        logger.debug('MC block %d: %d paths in %d steps', block, size, steps)
        taus.append(t)
        sides.append(side)
        killed.append(kill)

    return _Exits(np.concatenate(taus), np.concatenate(sides), np.concatenate(killed))


def _summary(samples, censored, horizon, r):
    n = len(samples)
    std_error = float(np.std(samples, ddof=1) / sqrt(n))
    bound = exp(-r * horizon) if censored else 0.0
    if censored:
        logger.warning(
            '%d of %d paths censored at T=%g (bound %.3g)', censored, n, horizon, bound
        )
    return McEstimate(float(np.mean(samples)), std_error, n, bound, int(censored))


def _check_rate(r):
    if not r > 0:
        raise UnsupportedError('Monte Carlo transforms need a positive rate')


def _hit_estimate(model, r, x, a, cfg):
    horizon = cfg.horizon_for(r)
    exits = _first_exits(model, x, a, None, cfg, horizon)
    hit = exits.side == LOWER
    samples = np.where(hit, np.exp(-r * exits.tau - exits.killed), 0.0)
    return _summary(samples, np.count_nonzero(~hit), horizon, r)


def estimate_hit_transform(model, r, x, a, cfg, check_bias=False):
    """Estimate ``E[exp(-r * tau_a)]`` for the diffusion started at *x*:

    * *model* is a :class:`aggregation_stopping.diffusion.DiffusionSpec`.
    * *r* is a positive discount rate.
    * *a* is a barrier at or below *x*.
    * *cfg* is a :class:`McConfig`.
    * *check_bias* re-runs the estimate with ``dt`` halved and raises the
      ``bias_flag`` when the mean moves by more than two standard errors.

    Return value: an :class:`McEstimate`.

    .. code-block:: python

        from aggregation_stopping.diffusion import DiffusionSpec
        from aggregation_stopping.mc_oracle import McConfig, estimate_hit_transform

        estimate = estimate_hit_transform(
            DiffusionSpec.bessel(), 0.5, 1.0, 0.5, McConfig(n_paths=100_000)
        )
        print(estimate.mean, estimate.std_error)  # close to 0.303265
    """
    _check_rate(r)
    if a > x:
        raise DomainError(f'The barrier {a} lies above the starting state {x}')
    if a == x:
        return McEstimate(1.0, 0.0, cfg.n_paths)

    estimate = _hit_estimate(model, r, x, a, cfg)
    if check_bias:
        finer = _hit_estimate(model, r, x, a, replace(cfg, dt=cfg.dt / 2))
        if abs(finer.mean - estimate.mean) > BIAS_Z * estimate.std_error:
            logger.warning(
                'Halving dt moved the estimate from %g to %g', estimate.mean, finer.mean
            )
            estimate.bias_flag = True
    return estimate


def estimate_exit_transform(model, r, x, l, u, cfg):
    """Estimate the two-sided exit transforms
    ``(E[exp(-r * tau) ; exit at l], E[exp(-r * tau) ; exit at u])``.

    Return value: a pair of :class:`McEstimate`.
    """
    _check_rate(r)
    if not l <= x <= u or not l < u:
        raise DomainError(f'Need l <= x <= u with l < u, got ({l}, {x}, {u})')
    if x == l:
        return McEstimate(1.0, 0.0, cfg.n_paths), McEstimate(0.0, 0.0, cfg.n_paths)
    if x == u:
        return McEstimate(0.0, 0.0, cfg.n_paths), McEstimate(1.0, 0.0, cfg.n_paths)

    horizon = cfg.horizon_for(r)
    exits = _first_exits(model, x, l, u, cfg, horizon)
    discount = np.exp(-r * exits.tau - exits.killed)
    censored = np.count_nonzero(exits.side == CENSORED)
    return (
        _summary(np.where(exits.side == LOWER, discount, 0.0), censored, horizon, r),
        _summary(np.where(exits.side == UPPER, discount, 0.0), censored, horizon, r),
    )


def _neighbours(R, x):
    lows, highs = R.lows, R.highs
    below = np.searchsorted(lows, x, side='right') - 1
    lower = float(highs[below]) if below >= 0 else None
    upper = float(lows[below + 1]) if below + 1 < len(lows) else None
    return lower, upper


def estimate_J(ctx, x, R, cfg):
    """Estimate ``J(x, R)`` by simulating the first entry into *R* once and
    discounting the same paths at every rate of the law.

    The aggregated standard error applies the delta method path by path with
    ``phi'`` at each rate's mean (the left derivative at a capped kink).

    Return value: a :class:`JEstimate`.
    """
    if ctx.law.f_space:
        raise UnsupportedError('Monte Carlo needs discount rates, not exponents')
    x = float(x)
    if R.contains(x):
        return JEstimate((), float(stopped_value(ctx, x)), 0.0)

    rates = ctx.law.rates
    for r in rates:
        _check_rate(r)
    if R.is_empty:
        return JEstimate((), float(attitude_value(ctx.att, 0.0, extended=True)), 0.0)

    lower, upper = _neighbours(R, x)
    horizon = cfg.horizon_for(float(rates.min()))
    exits = _first_exits(ctx.model, x, lower, upper, cfg, horizon)

    reward = np.zeros(len(exits.tau))
    if lower is not None:
        reward[exits.side == LOWER] = payoff_g(ctx, lower)
    if upper is not None:
        reward[exits.side == UPPER] = payoff_g(ctx, upper)
    censored = np.count_nonzero(exits.side == CENSORED)

    per_atom = []
    total = 0.0
    linear = np.zeros(len(exits.tau))
    for r, w in ctx.law.nodes:
        samples = reward * np.exp(-r * exits.tau - exits.killed)
        estimate = _summary(samples, censored, horizon, r)
        per_atom.append((r, estimate))
        value = attitude_value(ctx.att, estimate.mean, extended=True)
        total += w * value
        if np.isfinite(value):
            linear += w * attitude_derivative(ctx.att, estimate.mean) * samples

    std_error = float(np.std(linear, ddof=1) / sqrt(len(linear)))
    return JEstimate(tuple(per_atom), float(total), std_error)


def _advance(coords, n, span, n_sub, rng):
    idx = np.arange(n)
    h = np.full(n, span / n_sub)
    for _ in range(n_sub):
        coords.advance(idx, coords.state(idx), h, rng)
    return coords.state(idx)


def check_submartingale(model, K, cfg, t_grid, direction, states=None):
    """Estimate the drift of ``(K - X)+`` between consecutive times of
    *t_grid* for paths started at each of *states*, and flag drifts more than
    three standard errors on the wrong side of 0:

    * *direction* ``'sub'`` flags negative drifts, ``'super'`` positive ones.
    * *states* defaults to eight states spread over ``(0, K)``.

    Return value: ``(passes, drifts)`` where *drifts* is a list of ``dict``
    with keys ``state``, ``t``, ``drift``, ``std_error`` and ``flagged``.
    """
    if direction not in ('sub', 'super'):
        raise DomainError(f'Unknown direction: {direction}')
    t_grid = np.asarray(t_grid, dtype=float)
    if len(t_grid) < 2 or np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise DomainError('t_grid must be increasing, non-negative, with two times')
    if states is None:
        states = np.linspace(0.1 * K, 0.9 * K, 8)

    scheme = cfg.scheme_for(model)
    drifts = []
    for state in np.asarray(states, dtype=float):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
        coords = _Coordinates(model, scheme, state, cfg.n_paths)
        previous_time = 0.0
        previous = None
        for t in t_grid:
            span = t - previous_time
            if span > 0:
                n_sub = 1 if scheme != EULER else max(1, min(1000, ceil(span / cfg.dt)))
                current = _advance(coords, cfg.n_paths, span, n_sub, rng)
            else:
                current = coords.state(np.arange(cfg.n_paths))
            value = np.maximum(K - current, 0.0)
            if previous is not None:
                change = value - previous
                drift = float(np.mean(change))
                std_error = float(np.std(change, ddof=1) / sqrt(len(change)))
                if direction == 'sub':
                    flagged = drift < -Z_FLAG * std_error
                else:
                    flagged = drift > Z_FLAG * std_error
                drifts.append(
                    {
                        'state': float(state),
                        't': float(t),
                        'drift': drift,
                        'std_error': std_error,
                        'flagged': bool(flagged),
                    }
                )
            previous = value
            previous_time = t

    passes = not any(d['flagged'] for d in drifts)
    logger.info('Drift check (%s) %s', direction, 'passes' if passes else 'fails')
    return passes, drifts
