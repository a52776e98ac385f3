import logging
from dataclasses import dataclass
from functools import lru_cache
from math import factorial, isfinite, log, sqrt

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.special import ive, kve

from .errors import DomainError, NumericError, UnsupportedError

logger = logging.getLogger(__name__)

GBM = 'gbm'
BESSEL = 'bessel'
GENERIC = 'generic'
MODEL_KINDS = (GBM, BESSEL, GENERIC)

CLOSED_FORM = 'closed_form'
ODE_NUMERIC = 'ode_numeric'

# Finite-difference slack for the monotonicity scans
MONOTONE_SLACK = 1e-10

# Generic models are solved down to state_floor + LOWER_OFFSET * width
LOWER_OFFSET = 1e-6
RICCATI_RTOL = 1e-10
RICCATI_ATOL = 1e-13


def _apply(fn, x):
    """Evaluate a coefficient on a state or array of states, falling back to
    element-wise calls for scalar-only callables.
    """
    x = np.asarray(x, dtype=float)
    try:
        value = np.asarray(fn(x), dtype=float)
    except (TypeError, ValueError):
        value = None
    if value is None or value.shape != x.shape:
        if value is not None and value.ndim == 0:
            return np.full(x.shape, float(value))
        value = np.vectorize(fn, otypes=[float])(x)
    return value


@dataclass(frozen=True)
class DiffusionSpec:
    """A one-dimensional diffusion on (*state_floor*, *state_cap*).

    * *kind* is one of ``'gbm'``, ``'bessel'`` or ``'generic'``.
    * *mu* and *sigma* are the GBM drift and volatility.
    * *nu* is the Bessel degree; the dimension is ``2 * nu + 2``.
    * *a_fn*, *b_fn* and *c_fn* are the generator coefficients of a generic
      model: ``0.5 * a(x)**2 * u'' + b(x) * u' - c(x) * u``.
    * *riccati_start* is where the backward Riccati integration of a generic
      model starts. It defaults to ``100 * state_cap``.

    Use the :meth:`gbm`, :meth:`bessel` and :meth:`generic` constructors.
    """

    kind: str
    mu: float = 0.0
    sigma: float = 1.0
    nu: float = 0.5
    a_fn: object = None
    b_fn: object = None
    c_fn: object = None
    state_floor: float = 0.0
    state_cap: float = 10.0
    riccati_start: float = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DomainError(f'Unknown model kind: {self.kind}')
        if not (self.state_cap > self.state_floor):
            raise DomainError('state_cap must exceed state_floor')
        if self.kind == GBM:
            if not (isfinite(self.mu) and isfinite(self.sigma)):
                raise DomainError('GBM parameters must be finite')
            if self.sigma <= 0:
                raise DomainError('GBM requires sigma > 0')
        elif self.kind == BESSEL:
            if not (isfinite(self.nu) and self.nu >= 0):
                raise DomainError('Bessel requires nu >= 0')
        else:
            if self.a_fn is None or self.b_fn is None:
                raise DomainError('Generic models need a_fn and b_fn')
            samples = np.linspace(self.state_floor, self.state_cap, 66)[1:-1]
            a_values = np.asarray([self.a_fn(x) for x in samples], dtype=float)
            if not np.all(a_values > 0):
                raise DomainError('Generic models need a_fn(x) > 0 on the state range')
            if self.riccati_start is not None and self.riccati_start < self.state_cap:
                raise DomainError('riccati_start must be at least state_cap')

    @classmethod
    def gbm(cls, mu, sigma, state_cap=10.0):
        return cls(GBM, mu=mu, sigma=sigma, state_cap=state_cap)

    @classmethod
    def bessel(cls, nu=0.5, state_cap=10.0):
        return cls(BESSEL, nu=nu, state_cap=state_cap)

    @classmethod
    def generic(
        cls, a_fn, b_fn, c_fn=None, state_floor=0.0, state_cap=10.0, riccati_start=None
    ):
        return cls(
            GENERIC,
            a_fn=a_fn,
            b_fn=b_fn,
            c_fn=c_fn,
            state_floor=state_floor,
            state_cap=state_cap,
            riccati_start=riccati_start,
        )

    @property
    def dimension(self):
        return 2 * self.nu + 2

    @property
    def is_bessel3(self):
        return self.kind == BESSEL and self.nu == 0.5

    def drift(self, x):
        """Drift coefficient ``b(x)`` of the generator."""
        if self.kind == GBM:
            return self.mu * x
        if self.kind == BESSEL:
            return (2 * self.nu + 1) / (2 * x)
        return _apply(self.b_fn, x)

    def volatility(self, x):
        """Diffusion coefficient ``a(x)`` of the generator."""
        if self.kind == GBM:
            return self.sigma * x
        if self.kind == BESSEL:
            return np.ones_like(np.asarray(x, dtype=float))
        return _apply(self.a_fn, x)

    def killing(self, x):
        if self.kind == GENERIC and self.c_fn is not None:
            return _apply(self.c_fn, x)
        return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class HittingTransform:
    """``E[exp(-r * tau_a)]`` for a diffusion started at *x* and stopped at
    the first visit to *a*.
    """

    value: float
    log_value: float
    source: str


@dataclass(frozen=True)
class ConditionReport:
    """Result of :func:`check_model_conditions`.

    *a_violations* lists ``(r, x)`` pairs where ``m_r`` decreases in ``x``;
    *b_violations* lists pairs where ``-m_r`` decreases in ``r``.
    """

    cii_a_holds: bool
    cii_b_holds: bool
    a_violations: tuple
    b_violations: tuple
    r_grid: tuple
    x_grid: tuple

    @property
    def holds(self):
        return self.cii_a_holds and self.cii_b_holds

    @property
    def violations(self):
        return self.a_violations + self.b_violations


def _check_rate(r):
    if not isfinite(r) or r < 0:
        raise DomainError(f'Discount rate must be finite and non-negative: {r}')


def _check_exponent(model, exponent):
    if exponent is None:
        return
    if model.kind != GBM:
        raise UnsupportedError('Exponent-space evaluation is only defined for GBM')
    if not isfinite(exponent) or exponent < 0:
        raise DomainError(f'GBM exponent must be finite and non-negative: {exponent}')


def f_gbm(r, mu, sigma):
    """Return the GBM hitting exponent ``f(r)``, so that
    ``E[exp(-r * tau_a)] = (a / x) ** f(r)``:

    * *r* is the discount rate.
    * *mu* is the drift rate.
    * *sigma* is the volatility.

    .. code-block:: python

        from aggregation_stopping.diffusion import f_gbm

        f_gbm(0.02, 0.05, 0.2)  # 2.0
    """
    if not all(isfinite(v) for v in (r, mu, sigma)):
        raise DomainError('f_gbm inputs must be finite')
    if sigma <= 0:
        raise DomainError('f_gbm requires sigma > 0')
    if r < 0:
        raise DomainError('f_gbm requires r >= 0')

    k = mu / sigma**2 - 0.5
    return max(sqrt(k * k + 2 * r / sigma**2) + k, 0.0)


def _gbm_exponents(model, r, exponent):
    # (decreasing exponent f, increasing exponent theta_plus); both are roots of
    # theta**2 + 2 * k * theta = 2 * r / sigma**2, so theta_plus = f - 2 * k.
    # An exponent-space f below 2 * k implies a negative rate: theta_plus < 0.
    k = model.mu / model.sigma**2 - 0.5
    if exponent is not None:
        return exponent, exponent - 2 * k
    f = f_gbm(r, model.mu, model.sigma)
    return f, max(f - 2 * k, 0.0)


def _power_log(theta, x):
    # log(x ** theta), with x ** 0 == 1 even at x == 0
    x = np.asarray(x, dtype=float)
    if theta == 0:
        return np.zeros_like(x)
    with np.errstate(divide='ignore'):
        return theta * np.log(x)


def _half_integer_order(nu):
    twice = 2 * nu
    n = round(twice)
    if abs(twice - n) < 1e-12 and n % 2 == 1:
        return (n - 1) // 2
    return None


def _log_bessel_K(nu, z):
    z = np.asarray(z, dtype=float)
    n = _half_integer_order(nu)
    if n is not None:
        total = sum(
            factorial(n + k) / (factorial(k) * factorial(n - k)) * (2 * z) ** (-k)
            for k in range(n + 1)
        )
        return 0.5 * np.log(np.pi / (2 * z)) - z + np.log(total)
    return np.log(kve(nu, z)) - z


def _bessel_K_integral(nu, z):
    # K_nu(z) = int_0^inf exp(-z cosh t) cosh(nu t) dt
    def integrand(t):
        with np.errstate(over='ignore'):
            zc = z * np.cosh(t)
            return 0.5 * (np.exp(nu * t - zc) + np.exp(-nu * t - zc))

    value, abserr = quad(integrand, 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    if not (value > 0):
        raise NumericError('Bessel integral failed', nu=nu, z=z, abserr=abserr)
    return value


def bessel_K(nu, z, method='auto'):
    """Return the modified Bessel function of the second kind ``K_nu(z)``:

    * *nu* is the order, ``nu >= 0``.
    * *z* is the argument, ``z > 0``.
    * *method* is ``'auto'`` (closed form for half-integer orders,
      ``scipy.special.kv`` otherwise) or ``'integral'`` (quadrature of
      ``int_0^inf exp(-z cosh t) cosh(nu t) dt``).
    """
    if not (isfinite(z) and z > 0):
        raise DomainError(f'bessel_K requires z > 0: {z}')
    if not (isfinite(nu) and nu >= 0):
        raise DomainError(f'bessel_K requires nu >= 0: {nu}')
    if method == 'integral':
        return _bessel_K_integral(nu, z)
    if method != 'auto':
        raise ValueError(f'Unknown method: {method}')

    return float(np.exp(_log_bessel_K(nu, z)))


def _log_sinh(z):
    return z + np.log1p(-np.exp(-2 * z)) - log(2)


@dataclass(frozen=True)
class _RiccatiSolution:
    solution: object
    x_lo: float
    x_hi: float


def _frozen_root(a, b, c, r):
    # Stable (negative) root of 0.5 a^2 m^2 + b m - (c + r) = 0
    return (-b - sqrt(b * b + 2 * a * a * (c + r))) / (a * a)


@lru_cache(maxsize=256)
def _riccati_solution(model, r):
    a_fn = model.a_fn
    b_fn = model.b_fn
    c_fn = model.c_fn or (lambda x: 0.0)

    x_hi = model.riccati_start or 100 * model.state_cap
    x_lo = model.state_floor + LOWER_OFFSET * (model.state_cap - model.state_floor)

    def rhs(x, y):
        m = y[0]
        a = a_fn(x)
        b = b_fn(x)
        return [
            2 * (c_fn(x) + r - b * m) / (a * a) - m * m,
            m,
            -2 * b / (a * a),
        ]

    m0 = _frozen_root(a_fn(x_hi), b_fn(x_hi), c_fn(x_hi), r)
    sol = solve_ivp(
        rhs,
        (x_hi, x_lo),
        [m0, 0.0, 0.0],
        method='DOP853',
        rtol=RICCATI_RTOL,
        atol=RICCATI_ATOL,
        dense_output=True,
    )
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        last = sol.y[:, -1] if sol.y.size else [m0, 0.0, 0.0]
        raise NumericError(
            'Riccati integration failed',
            r=r,
            message=sol.message,
            x=float(sol.t[-1]),
            residual=float(abs(rhs(sol.t[-1], last)[0])),
        )

    logger.debug(
        'Riccati r=%g solved on [%g, %g] with %d steps', r, x_lo, x_hi, len(sol.t)
    )
    return _RiccatiSolution(sol.sol, x_lo, x_hi)


def _generic_states(model, r, x):
    solution = _riccati_solution(model, float(r))
    x = np.asarray(x, dtype=float)
    if np.any(x < solution.x_lo) or np.any(x > solution.x_hi):
        raise DomainError(
            f'State outside the solved range [{solution.x_lo}, {solution.x_hi}]'
        )
    return solution.solution(x)


def _is_scale_degenerate(model, r, exponent):
    # Both fundamental solutions constant at r = 0: use the scale function ln x
    if model.kind == GBM:
        f, theta = _gbm_exponents(model, r, exponent)
        return f == 0 and theta == 0
    if model.kind == BESSEL:
        return r == 0 and model.nu == 0
    return False


def log_phi_dec(model, r, x, exponent=None):
    """Return ``log(phi_r(x))`` for the decreasing fundamental solution.
    Accepts numpy arrays for *x*. For GBM, *exponent* replaces ``f(r)``.
    """
    _check_rate(r)
    _check_exponent(model, exponent)
    x = np.asarray(x, dtype=float)
    if np.any(x < model.state_floor):
        raise DomainError('State below state_floor')

    if model.kind == GBM:
        f, _ = _gbm_exponents(model, r, exponent)
        return -_power_log(f, x)

    if model.kind == BESSEL:
        nu = model.nu
        if r == 0:
            return -_power_log(2 * nu, x)
        with np.errstate(divide='ignore'):
            z = x * sqrt(2 * r)
            result = -_power_log(nu, x) + _log_bessel_K(nu, np.where(z > 0, z, 1.0))
        return np.where(z > 0, result, np.inf)

    return _generic_states(model, r, x)[1]


def phi_dec(model, r, x, exponent=None):
    """Return the decreasing positive solution ``phi_r(x)`` of
    ``0.5 * a**2 * u'' + b * u' - c * u = r * u``:

    * *model* is a :class:`DiffusionSpec`.
    * *r* is the discount rate, ``r >= 0``.
    * *x* is the state (scalar or numpy array).
    * *exponent* (GBM only) is the hitting exponent to use instead of ``f(r)``.

    Normalization: GBM ``x ** -f(r)``; Bessel ``x ** -nu * K_nu(x * sqrt(2r))``
    (``x ** (-2 * nu)`` at ``r = 0``); generic models equal 1 at
    ``riccati_start``. Only ratios are meaningful.
    """
    return np.exp(log_phi_dec(model, r, x, exponent=exponent))


def log_psi_inc(model, r, x, exponent=None):
    """Return ``log(psi_r(x))`` for the increasing fundamental solution."""
    _check_rate(r)
    _check_exponent(model, exponent)
    if _is_scale_degenerate(model, r, exponent):
        raise UnsupportedError('Both fundamental solutions are constant at this rate')
    x = np.asarray(x, dtype=float)

    if model.kind == GBM:
        f, theta = _gbm_exponents(model, r, exponent)
        if theta < 0:
            raise UnsupportedError(
                f'Exponent {f} lies below 2 * k = {f - theta}: the implied rate is '
                'negative and there is no upward hitting transform'
            )
        return _power_log(theta, x)

    if model.kind == BESSEL:
        nu = model.nu
        if r == 0:
            return np.zeros_like(x)
        z = x * sqrt(2 * r)
        with np.errstate(divide='ignore'):
            if nu == 0.5:
                return np.where(
                    z > 0,
                    _log_sinh(np.where(z > 0, z, 1.0)) - np.log(x),
                    0.5 * log(2 * r),
                )
            return -_power_log(nu, x) + np.log(ive(nu, z)) + z

    solution = _riccati_solution(model, float(r))
    log_phi = _generic_states(model, r, x)[1]

    def integrand(y):
        log_phi_y, log_scale_y = solution.solution(y)[1:]
        return np.exp(log_scale_y - 2 * log_phi_y)

    def scaled_integral(point):
        value, _ = quad(integrand, solution.x_lo, point, epsrel=1e-11, limit=200)
        return value

    integrals = np.vectorize(scaled_integral, otypes=[float])(x)
    with np.errstate(divide='ignore'):
        return log_phi + np.log(integrals)


def psi_inc(model, r, x, exponent=None):
    """Return the increasing solution ``psi_r(x)`` paired with :func:`phi_dec`.

    GBM uses ``x ** theta_plus`` with ``theta_plus`` the positive root of
    ``0.5 * sigma**2 * theta * (theta - 1) + mu * theta = r``. In exponent
    space that root is ``f - 2k`` with ``k = mu / sigma**2 - 1/2``, and
    exponents below ``2k`` raise :class:`UnsupportedError`. Bessel uses
    ``x ** -nu * I_nu(x * sqrt(2r))``, which is ``sinh(x * sqrt(2r)) / x`` up
    to a constant for ``nu = 1/2``. Generic
    models use ``phi(x) * int s'(y) / phi(y)**2 dy`` from the lower end of the
    solved range.

    When both solutions are constant (GBM at zero exponent, Bessel ``nu = 0``
    at ``r = 0``) the pair is ``(1, ln x)``.
    """
    if _is_scale_degenerate(model, r, exponent):
        return np.log(np.asarray(x, dtype=float))
    return np.exp(log_psi_inc(model, r, x, exponent=exponent))


def m_log_derivative(model, r, x, exponent=None):
    """Return ``m_r(x) = phi_r'(x) / phi_r(x)``.

    GBM gives ``-f(r) / x``; Bessel gives
    ``-sqrt(2r) * K_{nu+1}(x sqrt(2r)) / K_nu(x sqrt(2r))``; generic models
    read the backward Riccati solution.
    """
    _check_rate(r)
    _check_exponent(model, exponent)
    x = np.asarray(x, dtype=float)
    if np.any(x <= model.state_floor):
        raise DomainError('m_log_derivative requires x > state_floor')

    if model.kind == GBM:
        f, _ = _gbm_exponents(model, r, exponent)
        return -f / x

    if model.kind == BESSEL:
        nu = model.nu
        if r == 0:
            return -2 * nu / x
        root = sqrt(2 * r)
        z = x * root
        return -root * np.exp(_log_bessel_K(nu + 1, z) - _log_bessel_K(nu, z))

    return _generic_states(model, r, x)[0]


def _source(model):
    return ODE_NUMERIC if model.kind == GENERIC else CLOSED_FORM


def log_hit(model, r, x, a, exponent=None):
    """Vectorized ``log E[exp(-r * tau_a)]`` for ``a <= x``; ``-inf`` when the
    barrier sits on an unreachable floor.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    same = x == a
    # Coincident points are evaluated at state_cap and overwritten below
    log_x = log_phi_dec(model, r, np.where(same, model.state_cap, x), exponent)
    log_a = log_phi_dec(model, r, np.where(same, model.state_cap, a), exponent)
    with np.errstate(invalid='ignore'):
        result = np.where(np.isinf(log_a) & (log_a > 0), -np.inf, log_x - log_a)
    return np.where(same, 0.0, result)


def hit_transform(model, r, x, a, exponent=None):
    """Return the :class:`HittingTransform` ``phi_r(x) / phi_r(a)``:

    * *model* is a :class:`DiffusionSpec`.
    * *r* is the discount rate.
    * *x* is the starting state.
    * *a* is the lower barrier, ``state_floor <= a <= x``.
    * *exponent* (GBM only) replaces ``f(r)``.

    .. code-block:: python

        from aggregation_stopping.diffusion import DiffusionSpec, hit_transform

        model = DiffusionSpec.bessel(nu=0.5)
        hit_transform(model, 0.5, 1.0, 0.5).value  # 0.5 * exp(-0.5)
    """
    _check_rate(r)
    if not (isfinite(x) and isfinite(a)):
        raise DomainError('States must be finite')
    if a > x:
        raise DomainError(f'Barrier {a} lies above the starting state {x}')
    if a < model.state_floor:
        raise DomainError(f'Barrier {a} lies below state_floor')

    if x == a:
        return HittingTransform(1.0, 0.0, _source(model))
    log_value = float(log_hit(model, r, x, a, exponent))
    return HittingTransform(float(np.exp(log_value)), log_value, _source(model))


def log_hit_up(model, r, x, u, exponent=None):
    """Vectorized ``log E[exp(-r * tau_u)]`` for an upper barrier ``u >= x``."""
    x, u = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(u, dtype=float))
    if _is_scale_degenerate(model, r, exponent):
        return np.zeros_like(x)
    same = x == u
    log_x = log_psi_inc(model, r, np.where(same, model.state_cap, x), exponent)
    log_u = log_psi_inc(model, r, np.where(same, model.state_cap, u), exponent)
    return np.where(same, 0.0, log_x - log_u)


def hit_transform_up(model, r, x, u, exponent=None):
    """Return the upward :class:`HittingTransform` ``psi_r(x) / psi_r(u)`` for
    ``x <= u``.
    """
    _check_rate(r)
    if x > u:
        raise DomainError(f'Barrier {u} lies below the starting state {x}')
    log_value = float(log_hit_up(model, r, x, u, exponent))
    return HittingTransform(float(np.exp(log_value)), log_value, _source(model))


def exit_parts(model, r, x, l, u, exponent=None):
    """Vectorized two-sided exit transforms ``(to_lower, to_upper)`` for
    ``l <= x <= u``; see :func:`exit_transform`.
    """
    x, l, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, l, u)))

    if _is_scale_degenerate(model, r, exponent):
        with np.errstate(divide='ignore', invalid='ignore'):
            s_x, s_l, s_u = np.log(x), np.log(l), np.log(u)
            to_lower = np.where(l > 0, (s_u - s_x) / (s_u - s_l), 0.0)
            to_upper = np.where(l > 0, (s_x - s_l) / (s_u - s_l), 1.0)
        return np.clip(to_lower, 0, 1), np.clip(to_upper, 0, 1)

    lphi_x = log_phi_dec(model, r, x, exponent)
    lphi_l = log_phi_dec(model, r, l, exponent)
    lphi_u = log_phi_dec(model, r, u, exponent)
    lpsi_x = log_psi_inc(model, r, x, exponent)
    lpsi_l = log_psi_inc(model, r, l, exponent)
    lpsi_u = log_psi_inc(model, r, u, exponent)

    # Divide the two-solution formula through by phi(l) * psi(u)
    with np.errstate(invalid='ignore', over='ignore'):
        phi_x = np.where(np.isinf(lphi_l), 0.0, np.exp(lphi_x - lphi_l))
        phi_u = np.where(np.isinf(lphi_l), 0.0, np.exp(lphi_u - lphi_l))
        psi_x = np.exp(lpsi_x - lpsi_u)
        psi_l = np.exp(lpsi_l - lpsi_u)
        denominator = 1 - phi_u * psi_l
        to_lower = (phi_x - phi_u * psi_x) / denominator
        to_upper = (psi_x - phi_x * psi_l) / denominator

    to_lower = np.where(x <= l, 1.0, np.where(x >= u, 0.0, to_lower))
    to_upper = np.where(x <= l, 0.0, np.where(x >= u, 1.0, to_upper))
    return np.clip(to_lower, 0, 1), np.clip(to_upper, 0, 1)


def exit_transform(model, r, x, l, u, exponent=None):
    """Return ``(to_lower, to_upper)`` where *to_lower* is
    ``E[exp(-r * tau_l); tau_l < tau_u]`` and *to_upper* is
    ``E[exp(-r * tau_u); tau_u < tau_l]`` for a start *x* between the lower
    barrier *l* and the upper barrier *u*.
    """
    _check_rate(r)
    if u - l <= 1e-12 * max(1.0, abs(u)):
        raise DomainError(f'Degenerate bracket [{l}, {u}]')
    if not (l <= x <= u):
        raise DomainError(f'State {x} outside the bracket [{l}, {u}]')

    to_lower, to_upper = exit_parts(model, r, x, l, u, exponent)
    return float(to_lower), float(to_upper)


def check_model_conditions(model, r_grid, x_grid, exponents=False):
    """Scan ``m_r(x)`` on a grid and report whether it is increasing in ``x``
    and whether ``-m_r(x)`` is increasing in ``r``:

    * *model* is a :class:`DiffusionSpec`.
    * *r_grid* is a sorted sequence of rates (GBM exponents when *exponents*
      is true).
    * *x_grid* is a sorted sequence of states above ``state_floor``.

    Return value: a :class:`ConditionReport`.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(r_grid) < 0) or np.any(np.diff(x_grid) < 0):
        raise DomainError('Condition grids must be sorted')

    rows = []
    for r in r_grid:
        if exponents:
            rows.append(m_log_derivative(model, 0.0, x_grid, exponent=float(r)))
        else:
            rows.append(m_log_derivative(model, float(r), x_grid))
    m = np.vstack(rows)

    a_violations = tuple(
        (float(r_grid[j]), float(x_grid[i]))
        for j, i in zip(*np.nonzero(np.diff(m, axis=1) < -MONOTONE_SLACK))
    )
    b_violations = tuple(
        (float(r_grid[j]), float(x_grid[i]))
        for j, i in zip(*np.nonzero(np.diff(m, axis=0) > MONOTONE_SLACK))
    )
    report = ConditionReport(
        cii_a_holds=not a_violations,
        cii_b_holds=not b_violations,
        a_violations=a_violations,
        b_violations=b_violations,
        r_grid=tuple(r_grid.tolist()),
        x_grid=tuple(x_grid.tolist()),
    )
    if not report.holds:
        logger.info(
            'Model conditions fail: %d x-violations, %d r-violations',
            len(a_violations),
            len(b_violations),
        )
    return report
