"""
Normal and truncated normal distributions.

All truncated-normal quantities are evaluated through log-probability masses
so that intervals deep in either tail (the usual situation for one-sided
selection events) keep full relative precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfcx, log_ndtr, ndtr, ndtri

from .errors import ConfigError, DomainError, TruncationMassError
from .rootfind import solve_root

LOG_MASS_FLOOR = math.log(1e-300)
SQRT2 = math.sqrt(2.0)
SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# tail-gap fractions use quadrature below this decay exponent, closed form above
GAP_QUAD_SWITCH = 0.5
GAP_QUAD_ORDER = 20
# standardized lower bound beyond which sampling switches to exponential rejection
RVS_TAIL_SWITCH = 4.0


@dataclass(frozen=True)
class NormalParams:
    mu: float = 0.0
    sigma2: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class TruncNormParams:
    mu: float
    sigma2: float
    a: float = -math.inf
    b: float = math.inf

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.a < self.b:
            raise DomainError(f"need a < b, got a={self.a}, b={self.b}")


def _check_sigma2(sigma2):
    if np.any(~(np.asarray(sigma2) > 0)):
        raise DomainError("sigma2 must be positive")


def norm_cdf(x, mu=0.0, sigma2=1.0):
    """Normal CDF with mean ``mu`` and variance ``sigma2``."""
    _check_sigma2(sigma2)
    return ndtr((np.asarray(x, dtype=float) - mu) / np.sqrt(sigma2))


def norm_sf(x, mu=0.0, sigma2=1.0):
    _check_sigma2(sigma2)
    return ndtr(-(np.asarray(x, dtype=float) - mu) / np.sqrt(sigma2))


def norm_ppf(p, mu=0.0, sigma2=1.0):
    _check_sigma2(sigma2)
    return mu + np.sqrt(sigma2) * ndtri(p)


_gl_x, _gl_w = np.polynomial.legendre.leggauss(GAP_QUAD_ORDER)
_GL_NODES, _GL_WEIGHTS = 0.5 * (_gl_x + 1.0), 0.5 * _gl_w
_GL_PAIRS = tuple(zip(_GL_NODES.tolist(), _GL_WEIGHTS.tolist()))


def _narrow(lo, g):
    # the integrand of the narrow-interval rule varies by at most exp(GAP_QUAD_SWITCH)
    return g * (np.abs(lo) + 0.5 * g) < GAP_QUAD_SWITCH


def _narrow_log_mass(lo, g):
    """``log(Phi(lo + g) - Phi(lo))`` as ``log phi(lo) + log int_0^g exp(-t (lo + t/2)) dt``."""
    t = g[..., None] * _GL_NODES
    integral = g * (np.exp(-t * (lo[..., None] + 0.5 * t)) @ _GL_WEIGHTS)
    return -0.5 * lo * lo - HALF_LOG_2PI + np.log(integral)


def log_mass(lo, hi):
    """``log(Phi(hi) - Phi(lo))`` for standardized bounds, stable in both tails."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    out = np.full(lo.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        right = lo > 0
        left = hi < 0
        mid = ~(right | left)
        if np.any(right):
            lql, lqh = log_ndtr(-lo[right]), log_ndtr(-hi[right])
            out[right] = lql + np.log(-np.expm1(lqh - lql))
        if np.any(left):
            lph, lpl = log_ndtr(hi[left]), log_ndtr(lo[left])
            out[left] = lph + np.log(-np.expm1(lpl - lph))
        if np.any(mid):
            # lo <= 0 <= hi: both erf terms are nonnegative, no cancellation
            out[mid] = np.log(0.5 * (erf(hi[mid] / SQRT2) - erf(lo[mid] / SQRT2)))
        # narrow intervals lose digits in every difference above
        g = hi - lo
        narrow = np.isfinite(lo) & np.isfinite(hi) & (g > 0) & _narrow(lo, g)
        if np.any(narrow):
            out[narrow] = _narrow_log_mass(lo[narrow], g[narrow])
    # nan arises from (-inf) - (-inf) when lo == hi or both tails underflow; both mean zero mass
    out[np.isnan(out)] = -np.inf
    return out[()] if out.ndim == 0 else out


def _narrow_log_mass_scalar(lo: float, g: float) -> float:
    acc = 0.0
    for node, weight in _GL_PAIRS:
        t = g * node
        acc += weight * math.exp(-t * (lo + 0.5 * t))
    return -0.5 * lo * lo - HALF_LOG_2PI + math.log(g * acc)


def log_mass_scalar(lo: float, hi: float) -> float:
    """Float-only :func:`log_mass`."""
    if not lo < hi:
        return -math.inf
    g = hi - lo
    if g * (abs(lo) + 0.5 * g) < GAP_QUAD_SWITCH:
        return _narrow_log_mass_scalar(lo, g)
    if lo > 0:
        lql, lqh = float(log_ndtr(-lo)), float(log_ndtr(-hi))
        d = lqh - lql
    elif hi < 0:
        lql, lqh = float(log_ndtr(hi)), float(log_ndtr(lo))
        d = lqh - lql
    else:
        diff = 0.5 * (math.erf(hi / SQRT2) - math.erf(lo / SQRT2))
        return math.log(diff) if diff > 0 else -math.inf
    # d is nan when both tail logs are -inf, i.e. no representable mass
    if d == 0.0 or math.isnan(d):
        return -math.inf
    return lql + math.log(-math.expm1(d))


def mass(lo, hi):
    """``Phi(hi) - Phi(lo)`` computed from :func:`log_mass`."""
    return np.exp(log_mass(lo, hi))


def _standardize(x, mu, sigma2, a, b):
    _check_sigma2(sigma2)
    sd = np.sqrt(sigma2)
    za = (np.asarray(a, dtype=float) - mu) / sd
    zb = (np.asarray(b, dtype=float) - mu) / sd
    zx = (np.asarray(x, dtype=float) - mu) / sd
    if np.any(~(za < zb)):
        raise DomainError("truncation requires a < b")
    return zx, za, zb, sd


def _tn_log_total(za, zb):
    lt = log_mass(za, zb)
    if np.any(np.isneginf(lt)):
        raise TruncationMassError("truncation interval has zero representable mass")
    return lt


def _log_mass_gap(za, zhi, g):
    """``log_mass(za, zhi)`` where ``g = zhi - za`` was formed from unstandardized values.

    Far from the mean ``zhi - za`` cancels; the narrow rule needs the exact gap.
    """
    out = np.array(log_mass(za, zhi), dtype=float)
    za, g = np.broadcast_arrays(np.asarray(za, dtype=float), np.asarray(g, dtype=float))
    with np.errstate(invalid="ignore"):
        narrow = np.isfinite(za) & np.isfinite(g) & (g > 0) & _narrow(za, g)
    if np.any(narrow):
        out = np.broadcast_to(out, za.shape).copy()
        out[narrow] = _narrow_log_mass(za[narrow], g[narrow])
    return out[()] if out.ndim == 0 else out


def tnorm_cdf(x, mu, sigma2, a=-np.inf, b=np.inf):
    """CDF of ``TN(mu, sigma2, a, b)``; exactly 0 below ``a`` and 1 above ``b``."""
    zx, za, zb, sd = _standardize(x, mu, sigma2, a, b)
    zx = np.clip(zx, za, zb)
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    gx = (np.clip(np.asarray(x, dtype=float), a_arr, b_arr) - a_arr) / sd
    _tn_log_total(za, zb)
    lt = _log_mass_gap(za, zb, (b_arr - a_arr) / sd)
    out = np.exp(_log_mass_gap(za, zx, gx) - lt)
    return np.clip(out, 0.0, 1.0)


def _gap_fraction(z: float, g: float) -> float:
    """``P(z < Z <= z + g) / P(Z > z)`` for standard normal ``Z`` and ``g >= 0``."""
    if g == math.inf:
        return 1.0
    decay = g * (z + 0.5 * g)
    if abs(decay) >= GAP_QUAD_SWITCH:
        return -math.expm1(_log_q_shift(z, g))
    # the integrand exp(-t (z + t/2)) varies by at most exp(0.5) on [0, g]
    acc = 0.0
    for node, weight in _GL_PAIRS:
        t = g * node
        acc += weight * math.exp(-t * (z + 0.5 * t))
    mills = erfcx(z / SQRT2) * SQRT_HALF_PI
    return g * acc / mills


def _log_q_shift(z: float, g: float) -> float:
    """``log Q(z + g) - log Q(z)`` for ``g >= 0``; exact in ``g`` even when ``z`` is huge."""
    if g == math.inf:
        return -math.inf
    return -g * (z + 0.5 * g) + math.log(erfcx((z + g) / SQRT2) / erfcx(z / SQRT2))


def tnorm_cdf_scalar(x: float, mu: float, sigma2: float, a: float = -math.inf, b: float = math.inf) -> float:
    """Float-only :func:`tnorm_cdf` for root-finding loops.

    When the whole interval lies in one tail the CDF is built from the gaps
    ``x - a`` and ``b - a`` (or ``b - x``) rather than from separately
    standardized points, so it stays accurate for means millions of standard
    deviations away, as confidence-interval searches can require.
    """
    sd = math.sqrt(sigma2)
    za, zb = (a - mu) / sd, (b - mu) / sd
    x = min(max(x, a), b)
    if za > 0:
        den = _gap_fraction(za, (b - a) / sd)
        if den == 0.0:
            raise TruncationMassError("truncation interval has zero representable mass")
        return min(1.0, _gap_fraction(za, (x - a) / sd) / den)
    if zb < 0:
        den = _gap_fraction(-zb, (b - a) / sd)
        if den == 0.0:
            raise TruncationMassError("truncation interval has zero representable mass")
        if x == a:
            return 0.0
        # Phi(x) / Phi(b) times [1 - Phi(a)/Phi(x)] / [1 - Phi(a)/Phi(b)]
        head = math.exp(_log_q_shift(-zb, (b - x) / sd))
        return min(1.0, head * _gap_fraction((mu - x) / sd, (x - a) / sd) / den)
    zx = (x - mu) / sd
    lt = log_mass_scalar(za, zb)
    if lt == -math.inf:
        raise TruncationMassError("truncation interval has zero representable mass")
    g = (x - a) / sd
    if 0 < g and g * (abs(za) + 0.5 * g) < GAP_QUAD_SWITCH:
        return min(1.0, math.exp(_narrow_log_mass_scalar(za, g) - lt))
    return min(1.0, math.exp(log_mass_scalar(za, zx) - lt))


def tnorm_sf(x, mu, sigma2, a=-np.inf, b=np.inf):
    """Survival function ``1 - tnorm_cdf``, accurate when the CDF is near one."""
    zx, za, zb, _ = _standardize(x, mu, sigma2, a, b)
    zx = np.clip(zx, za, zb)
    out = np.exp(log_mass(zx, zb) - _tn_log_total(za, zb))
    return np.clip(out, 0.0, 1.0)


def tnorm_pdf(x, mu, sigma2, a=-np.inf, b=np.inf):
    zx, za, zb, sd = _standardize(x, mu, sigma2, a, b)
    inside = (zx >= za) & (zx <= zb)
    logpdf = -0.5 * zx**2 - HALF_LOG_2PI - np.log(sd) - _tn_log_total(za, zb)
    return np.where(inside, np.exp(logpdf), 0.0)


def tnorm_ppf(q, mu, sigma2, a=-np.inf, b=np.inf):
    """Quantile function of the truncated normal.

    Accurate while the nearer standardized bound is within ~37 of the mean;
    beyond that the tail probabilities underflow and results clip to a bound.
    """
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise DomainError("quantile level must lie in [0, 1]")
    _, za, zb, sd = _standardize(0.0, mu, sigma2, a, b)
    za, zb, q = np.broadcast_arrays(za, zb, q)
    z = np.empty(q.shape)
    # right tail: invert the survival side, Q(x) = Q(za) - q (Q(za) - Q(zb))
    right = za > 0
    left = ~right
    if np.any(right):
        qa, qb = ndtr(-za[right]), ndtr(-zb[right])
        z[right] = -ndtri(qa - q[right] * (qa - qb))
    if np.any(left):
        pa, pb = ndtr(za[left]), ndtr(zb[left])
        z[left] = ndtri(pa + q[left] * (pb - pa))
    z = np.clip(z, za, zb)
    out = mu + sd * z
    return out[()] if out.ndim == 0 else out


def tnorm_mean(mu, sigma2, a=-np.inf, b=np.inf):
    """Closed-form mean of the truncated normal."""
    _, za, zb, sd = _standardize(0.0, mu, sigma2, a, b)
    lt = _tn_log_total(za, zb)
    phi_a = np.exp(-0.5 * za**2 - HALF_LOG_2PI - lt)
    phi_b = np.exp(-0.5 * zb**2 - HALF_LOG_2PI - lt)
    return mu + sd * (phi_a - phi_b)


def _exp_rejection(rng, lo, hi, n):
    """Standard normal restricted to [lo, hi] with lo > 0, via shifted-exponential proposals."""
    alpha = 0.5 * (lo + math.sqrt(lo * lo + 4.0))
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 64)
        z = lo + rng.exponential(1.0 / alpha, size=m)
        accept = rng.random(m) <= np.exp(-0.5 * (z - alpha) ** 2)
        accept &= z <= hi
        z = z[accept][: n - filled]
        out[filled: filled + z.size] = z
        filled += z.size
    return out


def _uniform_rejection(rng, lo, hi, n):
    """Standard normal on a narrow [lo, hi] with lo >= 0, by uniform proposals."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 64)
        z = rng.uniform(lo, hi, size=m)
        accept = rng.random(m) <= np.exp(-0.5 * (z * z - lo * lo))
        z = z[accept][: n - filled]
        out[filled: filled + z.size] = z
        filled += z.size
    return out


def tnorm_rvs(mu, sigma2, a=-np.inf, b=np.inf, n=1, seed=None):
    """Draw ``n`` i.i.d. samples from ``TN(mu, sigma2, a, b)``.

    Moderate truncation uses the inverse CDF. When the standardized interval
    starts beyond 4 (or ends below -4) samples come from exponential-proposal
    rejection, switching to uniform proposals for very narrow intervals.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    p = TruncNormParams(float(mu), float(sigma2), float(a), float(b))
    sd = math.sqrt(p.sigma2)
    za, zb = (p.a - p.mu) / sd, (p.b - p.mu) / sd
    if float(log_mass(za, zb)) < LOG_MASS_FLOOR:
        raise TruncationMassError(f"truncation mass below 1e-300 for [{za:.3g}, {zb:.3g}] (standardized)")
    rng = np.random.default_rng(seed)
    flip = zb < -RVS_TAIL_SWITCH
    if flip:
        za, zb = -zb, -za
    if za > RVS_TAIL_SWITCH:
        alpha = 0.5 * (za + math.sqrt(za * za + 4.0))
        if (zb - za) * alpha < 0.5:
            z = _uniform_rejection(rng, za, zb, n)
        else:
            z = _exp_rejection(rng, za, zb, n)
        if flip:
            z = -z
    else:
        z = tnorm_ppf(rng.random(n), 0.0, 1.0, za, zb)
    return p.mu + sd * z


def tnorm_ci(x_obs, sigma2, a=-np.inf, b=np.inf, alpha=0.05, tol=1e-8):
    """Equal-tailed confidence interval for the mean of a truncated normal.

    ``lo`` solves ``F_mu(x_obs) = 1 - alpha/2`` and ``hi`` solves
    ``F_mu(x_obs) = alpha/2``; the CDF decreases strictly in ``mu`` so both
    roots are unique.
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if not a < x_obs < b:
        raise DomainError(f"x_obs={x_obs} must lie strictly inside ({a}, {b})")
    _check_sigma2(sigma2)
    sd = math.sqrt(sigma2)

    x_obs, sigma2, a, b = float(x_obs), float(sigma2), float(a), float(b)

    def f(mu):
        return tnorm_cdf_scalar(x_obs, mu, sigma2, a, b)

    lo = solve_root(f, 1 - alpha / 2, x_obs, scale=sd, tol=tol)
    hi = solve_root(f, alpha / 2, x_obs, scale=sd, tol=tol)
    return lo, hi


def tnorm_pvalue(x_obs, mu0, sigma2, a=-np.inf, b=np.inf, tail="two-sided"):
    left = float(tnorm_cdf(x_obs, mu0, sigma2, a, b))
    right = float(tnorm_sf(x_obs, mu0, sigma2, a, b))
    return _tail_pvalue(left, right, tail)


def _tail_pvalue(left, right, tail):
    if tail == "left":
        return left
    if tail == "right":
        return right
    if tail == "two-sided":
        return min(1.0, 2.0 * min(left, right))
    raise ConfigError(f"unknown tail {tail!r}")
