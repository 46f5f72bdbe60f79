"""
The SNTN distribution: ``Z = c1 X1 + c2 X2`` with ``X1 ~ N(mu1, tau1^2)``
independent of ``X2 ~ TN(mu2, tau2^2, a, b)``.

With ``theta1 = c1 mu1 + c2 mu2``, ``sigma1^2 = c1^2 tau1^2 + c2^2 tau2^2``,
``rho = c2 tau2 / sigma1``, ``omega = (a - mu2) / tau2`` and
``delta = (b - mu2) / tau2`` the CDF is a ratio of bivariate normal CDFs::

    F(z) = [B_rho(m(z), delta) - B_rho(m(z), omega)] / [Phi(delta) - Phi(omega)]

where ``m(z) = (z - theta1) / sigma1``. Equivalently
``F(z) = P(U1 <= m(z) | omega <= U2 <= delta)`` for a standard bivariate
normal pair with correlation ``rho``, which is how the degenerate and
deep-tail branches below are derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import log_ndtr, ndtr

from .bvn import MC_METHODS, bvn_cdf, bvn_owen_scalar, gauss_legendre
from .dists import _tail_pvalue, log_mass, log_mass_scalar, norm_ppf, tnorm_cdf, tnorm_pdf, tnorm_rvs, tnorm_sf
from .errors import ConfigError, DomainError, TruncationMassError
from .rootfind import solve_root

RHO_ONE = 1e-10
RHO_ZERO = 1e-14
# the Owen ratio's relative error grows like 1/(mass * F); with these two switches
# it stays below 1e-10, and the relative-precision quadrature covers the rest
MASS_SWITCH = 1e-3
# the tail quadrature drops the region where the integrand is below exp(-45) of its peak
TAIL_LOG_SPAN = 45.0
CDF_SWITCH = 1e-4
TAIL_PANELS = 44
# points per vectorized quadrature block; bounds memory to a few MB
TAIL_CHUNK = 2048
TAIL_ORDER = 16
MODE_MAX_ITER = 100
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
# floor for log-probabilities in quantile searches
TINY = 5e-324


@dataclass(frozen=True)
class SntnInputs:
    mu1: float
    tau1_2: float
    mu2: float
    tau2_2: float
    a: float = -math.inf
    b: float = math.inf
    c1: float = 0.5
    c2: float = 0.5

    def __post_init__(self):
        if not self.tau1_2 > 0 or not self.tau2_2 > 0:
            raise DomainError("tau1_2 and tau2_2 must be positive")
        if not self.a < self.b:
            raise DomainError(f"need a < b, got a={self.a}, b={self.b}")
        if self.c1 == 0 and self.c2 == 0:
            raise DomainError("c1 and c2 cannot both be zero")


@dataclass(frozen=True)
class SntnCanonical:
    """Canonical parameters. Fields may hold broadcastable numpy arrays.

    ``degenerate`` is ``"normal"`` when ``c2 == 0`` (no truncated part),
    ``"tnorm"`` when ``c1 == 0`` (``rho = +-1``), else ``None``.
    """

    theta1: float
    sigma1_2: float
    theta2: float
    sigma2_2: float
    rho: float
    lam: float
    gamma: float
    omega: float
    delta: float
    degenerate: str | None = None

    @property
    def sigma1(self):
        return np.sqrt(self.sigma1_2)

    @property
    def sigma2(self):
        return np.sqrt(self.sigma2_2)


def canonicalize(inp) -> SntnCanonical:
    """Map the eight user parameters to the canonical SNTN parameters.

    Idempotent: a :class:`SntnCanonical` is returned unchanged.
    """
    if isinstance(inp, SntnCanonical):
        return inp
    c1, c2 = np.asarray(inp.c1, dtype=float), np.asarray(inp.c2, dtype=float)
    mu2, tau2_2 = np.asarray(inp.mu2, dtype=float), np.asarray(inp.tau2_2, dtype=float)
    theta1 = c1 * inp.mu1 + c2 * mu2
    sigma1_2 = c1 * c1 * inp.tau1_2 + c2 * c2 * tau2_2
    tau2 = np.sqrt(tau2_2)
    rho = np.clip(c2 * tau2 / np.sqrt(sigma1_2), -1.0, 1.0)
    one_m = (1.0 - rho) * (1.0 + rho)
    with np.errstate(divide="ignore"):
        gamma = 1.0 / np.sqrt(one_m)
    lam = np.where(one_m > 0, rho * gamma, np.copysign(np.inf, rho))
    if np.all(c2 == 0):
        degenerate = "normal"
    elif np.all(c1 == 0):
        degenerate = "tnorm"
    else:
        degenerate = None

    def _out(v):
        v = np.asarray(v, dtype=float)
        return float(v) if v.ndim == 0 else v

    return SntnCanonical(
        theta1=_out(theta1), sigma1_2=_out(sigma1_2), theta2=_out(mu2), sigma2_2=_out(tau2_2),
        rho=_out(rho), lam=_out(lam), gamma=_out(gamma),
        omega=_out((inp.a - mu2) / tau2), delta=_out((inp.b - mu2) / tau2),
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# standardized kernels: F = P(U1 <= m | omega <= U2 <= delta), corr(U1, U2) = rho

def _log_integrand(x, m, s, rho):
    # log of phi(x) * Phi((m - rho x) / s), without the 1/sqrt(2 pi)
    return -0.5 * x * x + log_ndtr((m - rho * x) / s)


def _integrand_mode(m, rho, s, lo, hi):
    """Maximizer of the log-concave integrand on ``[lo, hi]`` and its local width."""
    a = rho / s
    # unconstrained mode lies between rho*m and 0; pad generously
    left = np.minimum(rho * m, 0.0) - 10.0
    right = np.maximum(rho * m, 0.0) + 10.0
    x = np.clip(rho * m, left, right)
    for _ in range(MODE_MAX_ITER):
        t = (m - rho * x) / s
        lam = np.exp(-0.5 * t * t - HALF_LOG_2PI - log_ndtr(t))
        d1 = -x - a * lam
        d2 = -1.0 - a * a * lam * (lam + t)
        left = np.where(d1 > 0, x, left)
        right = np.where(d1 < 0, x, right)
        step = -d1 / d2
        x_new = x + step
        bad = ~((x_new > left) & (x_new < right))
        x_new = np.where(bad, 0.5 * (left + right), x_new)
        done = np.abs(x_new - x) <= 1e-13 * (1.0 + np.abs(x))
        x = x_new
        if np.all(done):
            break
    x = np.clip(x, lo, hi)
    t = (m - rho * x) / s
    lam = np.exp(-0.5 * t * t - HALF_LOG_2PI - log_ndtr(t))
    d1 = -x - a * lam
    d2 = -1.0 - a * a * lam * (lam + t)
    width = 1.0 / np.maximum(np.sqrt(-d2), np.abs(d1))
    return x, width


def _tail_quadrature(m, rho, omega, delta):
    m, rho, omega, delta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m, rho, omega, delta)))
    if m.size <= TAIL_CHUNK:
        return _tail_block(m, rho, omega, delta)
    flat = [v.ravel() for v in (m, rho, omega, delta)]
    out = np.concatenate([_tail_block(*(v[i:i + TAIL_CHUNK] for v in flat))
                          for i in range(0, m.size, TAIL_CHUNK)])
    return out.reshape(m.shape)


def _tail_block(m, rho, omega, delta):
    """``P(U1 <= m | omega <= U2 <= delta)`` with full relative precision.

    Integrates ``phi(x) Phi((m - rho x) / s)`` over ``[omega, delta]`` in log
    space. The integrand is log-concave, so Gauss-Legendre panels of
    geometrically growing width are laid out on both sides of its mode,
    starting at a quarter of the local width and stopping once the integrand
    has fallen below ``exp(-TAIL_LOG_SPAN)`` of its peak.
    """
    m, rho, omega, delta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m, rho, omega, delta)))
    s = np.sqrt((1.0 - rho) * (1.0 + rho))
    reach = math.sqrt(2.0 * TAIL_LOG_SPAN)
    # infinite m makes the mode search produce nan; those points resolve to 0 or 1 below
    with np.errstate(invalid="ignore"):
        x0, width = _integrand_mode(m, rho, s, omega, delta)
    g0 = _log_integrand(x0, m, s, rho)
    # panels past the reach have zero width; keep only as many as the block needs
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.max(np.minimum(reach, np.maximum(delta - x0, x0 - omega)) / (0.25 * width), initial=1.0)
    # infinite m gives a nan width; keep every panel as before
    n_pan = TAIL_PANELS
    if math.isfinite(ratio):
        n_pan = min(TAIL_PANELS, int(math.ceil(math.log2(max(ratio, 1.0)))) + 1)
    edges = 0.25 * width[..., None] * np.concatenate([[0.0], 2.0 ** np.arange(n_pan)])
    nodes, weights = gauss_legendre(TAIL_ORDER)
    total = np.zeros(m.shape)
    for side, room in ((1.0, delta - x0), (-1.0, x0 - omega)):
        lim = np.minimum(room, reach)[..., None]
        e = np.minimum(edges, lim)
        lo, hw = e[..., :-1], np.diff(e, axis=-1)
        u = lo[..., None] + hw[..., None] * nodes
        x = x0[..., None, None] + side * u
        g = _log_integrand(x, m[..., None, None], s[..., None, None], rho[..., None, None])
        total += np.sum(hw[..., None] * weights * np.exp(g - g0[..., None, None]), axis=(-1, -2))
    log_num = g0 + np.log(total) - HALF_LOG_2PI
    return np.exp(log_num - log_mass(omega, delta))


def _std_cdf_scalar(m: float, rho: float, omega: float, delta: float, upper: bool = True) -> float:
    lt = log_mass_scalar(omega, delta)
    if lt == -math.inf:
        raise TruncationMassError("Phi(delta) - Phi(omega) has no representable mass")
    if rho >= 1.0 - RHO_ONE or rho <= -1.0 + RHO_ONE or abs(rho) <= RHO_ZERO:
        return float(_std_cdf_vec(m, rho, omega, delta))
    m0, rho0, omega0, delta0 = m, rho, omega, delta
    if omega >= 0:
        rho, omega, delta = -rho, -delta, -omega
    v = -1.0
    if lt >= math.log(MASS_SWITCH):
        v = (bvn_owen_scalar(m, delta, rho) - bvn_owen_scalar(m, omega, rho)) / math.exp(lt)
    if v < CDF_SWITCH:
        v = float(_tail_quadrature(m, rho, omega, delta))
    elif v > 0.5 and upper:
        # the ratio's absolute error is scaled up by 1/mass; the complement is relatively accurate
        v = 1.0 - _std_cdf_scalar(-m0, -rho0, omega0, delta0, upper=False)
    return min(1.0, max(0.0, v))


def _std_cdf(m, rho, omega, delta, method="owen"):
    if method == "owen" and all(isinstance(v, float) for v in (m, rho, omega, delta)):
        return _std_cdf_scalar(m, rho, omega, delta)
    return _std_cdf_vec(m, rho, omega, delta, method)


def _std_cdf_vec(m, rho, omega, delta, method="owen", upper=True):
    m, rho, omega, delta = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m, rho, omega, delta)))
    out = np.empty(m.shape)
    lt = log_mass(omega, delta)
    if np.any(np.isneginf(lt)):
        raise TruncationMassError("Phi(delta) - Phi(omega) has no representable mass")

    pos = rho >= 1.0 - RHO_ONE
    neg = rho <= -1.0 + RHO_ONE
    zero = np.abs(rho) <= RHO_ZERO
    if np.any(pos):
        out[pos] = tnorm_cdf(m[pos], 0.0, 1.0, omega[pos], delta[pos])
    if np.any(neg):
        out[neg] = tnorm_sf(-m[neg], 0.0, 1.0, omega[neg], delta[neg])
    if np.any(zero):
        out[zero] = ndtr(m[zero])
    core = ~(pos | neg | zero)
    if np.any(core):
        mc, rc, oc, dc, lc = m[core], rho[core], omega[core], delta[core], lt[core]
        # put the interval on the non-positive side so the B_rho values are small
        flip = oc >= 0
        rc = np.where(flip, -rc, rc)
        oc, dc = np.where(flip, -dc, oc), np.where(flip, -oc, dc)
        res = np.full(mc.shape, -1.0)
        ok = lc >= math.log(MASS_SWITCH)
        if np.any(ok):
            num = bvn_cdf(mc[ok], dc[ok], rc[ok], method) - bvn_cdf(mc[ok], oc[ok], rc[ok], method)
            res[ok] = num / np.exp(lc[ok])
        # small masses and small CDF values go to the relative-precision quadrature;
        # Monte Carlo backends keep their own estimate
        tail = ~ok | ((res < CDF_SWITCH) & (getattr(method, "tag", method) not in MC_METHODS))
        if np.any(tail):
            res[tail] = _tail_quadrature(mc[tail], rc[tail], oc[tail], dc[tail])
        hi = (res > 0.5) & upper & (getattr(method, "tag", method) not in MC_METHODS)
        if np.any(hi):
            res[hi] = 1.0 - _std_cdf_vec(-mc[hi], -rho[core][hi], omega[core][hi], delta[core][hi], method,
                                         upper=False)
        out[core] = res
    out = np.clip(out, 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def _std_sf(m, rho, omega, delta, method="owen"):
    # P(U1 > m | .) = P(-U1 < -m | .) and corr(-U1, U2) = -rho
    if isinstance(m, float) and isinstance(rho, float):
        return _std_cdf(-m, -rho, omega, delta, method)
    return _std_cdf(-np.asarray(m, dtype=float), -np.asarray(rho, dtype=float), omega, delta, method)


def _m1(z, c: SntnCanonical):
    if isinstance(z, (float, int)) and isinstance(c.theta1, float):
        return (float(z) - c.theta1) / math.sqrt(c.sigma1_2)
    return (np.asarray(z, dtype=float) - c.theta1) / c.sigma1


def sntn_cdf(z, c, method="owen"):
    """CDF of the SNTN distribution; broadcasts over ``z`` and array-valued parameters."""
    c = canonicalize(c)
    return _std_cdf(_m1(z, c), c.rho, c.omega, c.delta, method)


def sntn_sf(z, c, method="owen"):
    """``1 - sntn_cdf``, evaluated directly for accuracy in the upper tail."""
    c = canonicalize(c)
    return _std_sf(_m1(z, c), c.rho, c.omega, c.delta, method)


def sntn_pdf(z, c):
    """Density of the SNTN distribution."""
    c = canonicalize(c)
    m = _m1(z, c)
    rho = np.asarray(c.rho, dtype=float)
    if np.all(np.abs(rho) <= RHO_ZERO):
        return np.exp(-0.5 * m * m) / (math.sqrt(2 * math.pi) * c.sigma1)
    if np.all(np.abs(rho) >= 1.0 - RHO_ONE):
        s = np.where(rho > 0, 1.0, -1.0)
        return tnorm_pdf(s * m, 0.0, 1.0, c.omega, c.delta) / c.sigma1
    lam, gamma = np.asarray(c.lam), np.asarray(c.gamma)
    with np.errstate(invalid="ignore"):
        lo = gamma * c.omega - lam * m
        hi = gamma * c.delta - lam * m
    lo = np.where(np.isneginf(c.omega), -np.inf, lo)
    hi = np.where(np.isposinf(c.delta), np.inf, hi)
    log_ratio = log_mass(lo, hi) - log_mass(c.omega, c.delta)
    out = np.exp(-0.5 * m * m + log_ratio) / (math.sqrt(2 * math.pi) * c.sigma1)
    return out[()] if np.ndim(out) == 0 else out


def sntn_ppf(p, c, method="owen", tol=1e-8):
    """Quantile function; solves ``sntn_cdf(z) = p`` for each ``p``.

    Below the median the root is taken on ``log F`` and above it on
    ``log(1 - F)``, so ``tol`` acts as a relative tolerance on the smaller
    tail probability. That keeps tail quantiles accurate and implies
    ``|F(z) - p| <= tol``.
    """
    c = canonicalize(c)
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)):
        raise DomainError("p must lie in (0, 1)")
    sd = float(c.sigma1)
    x0 = float(c.theta1)

    def log_cdf(z):
        return math.log(max(float(sntn_cdf(z, c, method)), TINY))

    def log_sf(z):
        return math.log(max(float(sntn_sf(z, c, method)), TINY))

    out = np.array([
        solve_root(log_cdf, math.log(pi), x0, scale=sd, tol=tol) if pi <= 0.5
        else solve_root(log_sf, math.log1p(-pi), x0, scale=sd, tol=tol)
        for pi in p_arr.ravel().tolist()
    ])
    return float(out[0]) if p_arr.ndim == 0 else out.reshape(p_arr.shape)


def sntn_pvalue(z_obs, c, tail="two-sided", method="owen"):
    """P-value of ``z_obs`` under the SNTN null encoded in ``c``."""
    left = float(sntn_cdf(z_obs, c, method))
    right = float(sntn_sf(z_obs, c, method))
    return _tail_pvalue(left, right, tail)


class _MeanFamily:
    """Canonical parameters as a function of the common mean ``mu = mu1 = mu2``."""

    def __init__(self, template: SntnInputs):
        t = template
        if not math.isclose(t.c1 + t.c2, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ConfigError(f"confidence intervals need c1 + c2 = 1, got {t.c1 + t.c2}")
        base = canonicalize(replace(t, mu1=0.0, mu2=0.0))
        self.base = base
        self.sigma1 = math.sqrt(base.sigma1_2)
        self.tau2 = math.sqrt(t.tau2_2)
        self.a, self.b = t.a, t.b

    def at(self, mu: float) -> SntnCanonical:
        b = self.base
        return replace(b, theta1=mu, theta2=mu,
                       omega=(self.a - mu) / self.tau2, delta=(self.b - mu) / self.tau2)

    def cdf(self, z, mu, method="owen"):
        return float(_std_cdf((z - mu) / self.sigma1, self.base.rho,
                              (self.a - mu) / self.tau2, (self.b - mu) / self.tau2, method))


def sntn_cdf_in_mean(z, template: SntnInputs, mu, method="owen"):
    """``F_mu(z)`` with ``mu1 = mu2 = mu`` substituted into ``template``; vectorized in ``mu``."""
    fam = _MeanFamily(template)
    mu = np.asarray(mu, dtype=float)
    return _std_cdf((z - mu) / fam.sigma1, fam.base.rho, (fam.a - mu) / fam.tau2,
                    (fam.b - mu) / fam.tau2, method)


def sntn_ci(z_obs, template: SntnInputs, alpha=0.05, method="owen", tol=1e-8):
    """Equal-tailed interval for the common mean ``mu = mu1 = mu2``.

    Requires ``c1 + c2 = 1`` so that ``theta1 = theta2 = mu``. ``lo`` solves
    ``F_mu(z_obs) = 1 - alpha/2``, ``hi`` solves ``F_mu(z_obs) = alpha/2``.
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if not math.isfinite(z_obs):
        raise DomainError("z_obs must be finite")
    fam = _MeanFamily(template)

    def f(mu):
        return fam.cdf(z_obs, mu, method)

    lo = solve_root(f, 1 - alpha / 2, z_obs, scale=fam.sigma1, tol=tol)
    hi = solve_root(f, alpha / 2, z_obs, scale=fam.sigma1, tol=tol)
    return lo, hi


def z_interval(z_obs, sigma, alpha):
    """Classical interval ``z_obs +- z_{1-alpha/2} sigma``."""
    q = float(norm_ppf(1 - alpha / 2))
    return z_obs - q * sigma, z_obs + q * sigma


def sntn_rvs(inp: SntnInputs, n, seed=None):
    """Simulate ``c1 X1 + c2 X2`` directly (for oracles and examples)."""
    rng = np.random.default_rng(seed)
    x1 = rng.normal(inp.mu1, math.sqrt(inp.tau1_2), size=n)
    x2 = tnorm_rvs(inp.mu2, inp.tau2_2, inp.a, inp.b, n=n, seed=rng)
    return inp.c1 * x1 + inp.c2 * x2
