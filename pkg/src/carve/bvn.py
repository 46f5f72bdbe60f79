"""
Standard bivariate normal CDF ``B_rho(x1, x2) = P(X1 <= x1, X2 <= x2)``.

Six interchangeable methods are provided:

========  ==============================================================
owen      Owen's T decomposition (default, exact to ~1e-16)
drezner1  Gauss-Legendre quadrature over theta in [0, arcsin(rho)]
drezner2  Gauss-Legendre quadrature of the Plackett density identity in r
cox1      Cox & Wermuth first-order conditional-mean approximation
cox2_mc   conditional Monte Carlo with X1 drawn from a truncated normal
mc_genz   direct Monte Carlo over the bivariate density
========  ==============================================================

Only ``owen`` is used on the inference paths; the others exist for the
runtime/accuracy benchmark in :func:`bvn_benchmark`.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, DomainError

METHODS = ("owen", "cox1", "cox2_mc", "drezner1", "drezner2", "mc_genz")
MC_METHODS = ("cox2_mc", "mc_genz")
QUAD_METHODS = ("drezner1", "drezner2")

RHO_EDGE = 1e-12
OWENS_T_ORDER = 40
# integrand of T(h, a) is below exp(-40.5) of its peak past t = 9 / |h|
OWENS_T_CUTOFF = 9.0
TWO_PI = 2.0 * math.pi


@lru_cache(maxsize=None)
def gauss_legendre(order: int):
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class BvnQuery:
    x1: float
    x2: float
    rho: float

    def __post_init__(self):
        if math.isnan(self.x1) or math.isnan(self.x2):
            raise DomainError("coordinates must not be NaN")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError(f"rho must lie in [-1, 1], got {self.rho}")


@dataclass(frozen=True)
class BvnMethod:
    """Method tag plus its tuning knobs.

    ``mc_samples`` applies to the Monte Carlo tags, ``quad_points`` to the
    Drezner quadratures, ``seed`` seeds the counter-based (Philox) generator.
    """

    tag: str = "owen"
    mc_samples: int = 10_000
    quad_points: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.tag not in METHODS:
            raise ConfigError(f"unknown BVN method {self.tag!r}; expected one of {METHODS}")
        if self.tag in MC_METHODS and self.mc_samples < 100:
            raise ConfigError(f"{self.tag} needs mc_samples >= 100, got {self.mc_samples}")
        if self.tag in QUAD_METHODS and self.quad_points < 8:
            raise ConfigError(f"{self.tag} needs quad_points >= 8, got {self.quad_points}")


def _as_method(method) -> BvnMethod:
    if isinstance(method, BvnMethod):
        return method
    return BvnMethod(tag=method)


# ---------------------------------------------------------------------------
# Owen's T

def _owens_t_unit(h, a):
    """T(h, a) for h >= 0 and 0 <= a <= 1 by fixed-order Gauss-Legendre."""
    nodes, weights = gauss_legendre(OWENS_T_ORDER)
    with np.errstate(divide="ignore", over="ignore"):
        upper = np.minimum(a, np.where(h > 0, OWENS_T_CUTOFF / h, np.inf))
    t = upper[..., None] * nodes
    hh = (h * h)[..., None]
    vals = np.exp(-0.5 * hh * (1.0 + t * t)) / (1.0 + t * t)
    return upper * (vals @ weights) / TWO_PI


def owens_t(h, a):
    """Owen's T function ``(1/2pi) int_0^a exp(-h^2 (1+t^2)/2) / (1+t^2) dt``.

    For ``|a| > 1`` the reciprocal identity
    ``T(h, a) = [Phi(h) Q(ah) + Phi(ah) Q(h)] / 2 - T(ah, 1/a)`` (h >= 0)
    reduces the integral to the unit interval, which the 40-point rule
    handles to double precision. ``a = +-inf`` is accepted and gives
    ``Q(|h|) / 2`` with the sign of ``a``.
    """
    h = np.asarray(h, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(~np.isfinite(h)) or np.any(np.isnan(a)):
        raise DomainError("owens_t needs finite h and non-NaN a")
    h, a = np.broadcast_arrays(np.abs(h), a)
    sign = np.sign(a)
    a = np.abs(a)
    out = np.empty(h.shape)
    small = a <= 1.0
    if np.any(small):
        out[small] = _owens_t_unit(h[small], a[small])
    big = ~small
    if np.any(big):
        hb, ab = h[big], a[big]
        with np.errstate(invalid="ignore"):
            ah = np.where(np.isinf(ab), np.inf, ab * hb)
            ah = np.where(hb == 0, np.where(np.isinf(ab), 0.0, ah), ah)
        half = 0.5 * (ndtr(hb) * ndtr(-ah) + ndtr(ah) * ndtr(-hb))
        # T(inf, .) = 0 and T(0, inf) = 1/4 are handled through half
        finite = np.isfinite(ah)
        corr = np.zeros_like(hb)
        if np.any(finite):
            corr[finite] = _owens_t_unit(ah[finite], 1.0 / ab[finite])
        inf_a_zero_h = np.isinf(ab) & (hb == 0)
        half = np.where(inf_a_zero_h, 0.25, half)
        out[big] = half - corr
    out = sign * out
    return out[()] if out.ndim == 0 else out


_GL_T = tuple(zip(*(v.tolist() for v in gauss_legendre(OWENS_T_ORDER))))
_SQRT2 = math.sqrt(2.0)


def _ndtr(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def _owens_t_unit_scalar(h: float, a: float) -> float:
    if a == 0.0:
        return 0.0
    upper = a if h == 0.0 else min(a, OWENS_T_CUTOFF / h)
    hh = h * h
    acc = 0.0
    for node, weight in _GL_T:
        t2 = (upper * node) ** 2
        acc += weight * math.exp(-0.5 * hh * (1.0 + t2)) / (1.0 + t2)
    return upper * acc / TWO_PI


def owens_t_scalar(h: float, a: float) -> float:
    """Pure-float twin of :func:`owens_t` for hot scalar loops."""
    h = abs(h)
    sign = 1.0 if a >= 0 else -1.0
    a = abs(a)
    if a <= 1.0:
        return sign * _owens_t_unit_scalar(h, a)
    if math.isinf(a):
        return sign * (0.25 if h == 0.0 else 0.5 * _ndtr(-h))
    ah = a * h
    half = 0.5 * (_ndtr(h) * _ndtr(-ah) + _ndtr(ah) * _ndtr(-h))
    return sign * (half - _owens_t_unit_scalar(ah, 1.0 / a))


def bvn_owen_scalar(h: float, k: float, rho: float) -> float:
    """Owen-method B_rho(h, k) for floats; same branches as :func:`bvn_cdf`."""
    if rho > 1.0 - RHO_EDGE:
        return _ndtr(min(h, k))
    if rho < -1.0 + RHO_EDGE:
        return max(0.0, _ndtr(h) - _ndtr(-k))
    if h == -math.inf or k == -math.inf:
        return 0.0
    if h == math.inf:
        return _ndtr(k)
    if k == math.inf:
        return _ndtr(h)
    if h == 0.0 and k == 0.0:
        return 0.25 + math.asin(rho) / TWO_PI
    s = math.sqrt((1.0 - rho) * (1.0 + rho))
    # ratio form keeps rho * h from underflowing for subnormal h
    a1 = (k / h - rho) / s if h != 0.0 else math.copysign(math.inf, k)
    a2 = (h / k - rho) / s if k != 0.0 else math.copysign(math.inf, h)
    # sign test, not h * k < 0, which underflows for tiny coordinates
    if (h < 0) != (k < 0):
        base = 0.5 * (_ndtr(min(h, k)) - _ndtr(-max(h, k)))
    else:
        base = 0.5 * (_ndtr(h) + _ndtr(k))
    out = base - owens_t_scalar(h, a1) - owens_t_scalar(k, a2)
    return min(1.0, max(0.0, out))


# ---------------------------------------------------------------------------
# kernels on finite coordinates with |rho| < 1

def _owen(h, k, rho):
    s = np.sqrt((1.0 - rho) * (1.0 + rho))
    out = np.empty(h.shape)
    both0 = (h == 0) & (k == 0)
    out[both0] = 0.25 + np.arcsin(rho[both0]) / TWO_PI
    r = ~both0
    h, k, rho, s = h[r], k[r], rho[r], s[r]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a1 = np.where(h != 0, (k / h - rho) / s, np.copysign(np.inf, k))
        a2 = np.where(k != 0, (h / k - rho) / s, np.copysign(np.inf, h))
    t1 = owens_t(h, a1)
    t2 = owens_t(k, a2)
    opposite = (h < 0) != (k < 0)
    lo, hi = np.minimum(h, k), np.maximum(h, k)
    # Phi(h)/2 + Phi(k)/2 - 1/2 rewritten without cancellation
    base = np.where(opposite, 0.5 * (ndtr(lo) - ndtr(-hi)), 0.5 * (ndtr(h) + ndtr(k)))
    out[r] = base - t1 - t2
    return out


def _drezner1(h, k, rho, order):
    nodes, weights = gauss_legendre(order)
    upper = np.arcsin(rho)
    th = upper[..., None] * nodes
    sin, cos2 = np.sin(th), np.cos(th) ** 2
    hh, kk = h[..., None], k[..., None]
    vals = np.exp(-(hh * hh + kk * kk - 2.0 * hh * kk * sin) / (2.0 * cos2))
    return ndtr(h) * ndtr(k) + upper * (vals @ weights) / TWO_PI


def _drezner2(h, k, rho, order):
    # d B / d rho equals the bivariate density (Plackett), integrated in r
    nodes, weights = gauss_legendre(order)
    r = rho[..., None] * nodes
    one_m = 1.0 - r * r
    hh, kk = h[..., None], k[..., None]
    vals = np.exp(-(hh * hh + kk * kk - 2.0 * hh * kk * r) / (2.0 * one_m)) / np.sqrt(one_m)
    return ndtr(h) * ndtr(k) + rho * (vals @ weights) / TWO_PI


def _cox1(h, k, rho):
    # upper orthant L(a, b) ~ Q(a) Phi((rho m(a) - b) / sqrt(1 - rho^2)), m = inverse Mills
    a, b = -h, -k
    qa = ndtr(-a)
    with np.errstate(divide="ignore", invalid="ignore"):
        mills = np.exp(-0.5 * a * a) / math.sqrt(TWO_PI) / qa
    mills = np.where(qa > 0, mills, a)
    return qa * ndtr((rho * mills - b) / np.sqrt(1.0 - rho * rho))


def _rng(seed, index):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def _cox2_mc(h, k, rho, n, seed):
    from .dists import tnorm_rvs

    out = np.empty(h.shape)
    for i, (hi, ki, ri) in enumerate(zip(h.ravel(), k.ravel(), rho.ravel())):
        rng = _rng(seed, i)
        x1 = tnorm_rvs(0.0, 1.0, -hi, np.inf, n=n, seed=rng)
        s = math.sqrt(1.0 - ri * ri)
        out.flat[i] = ndtr(hi) * np.mean(ndtr((ri * x1 + ki) / s))
    return out


def _mc_genz(h, k, rho, n, seed):
    out = np.empty(h.shape)
    for i, (hi, ki, ri) in enumerate(zip(h.ravel(), k.ravel(), rho.ravel())):
        z = _rng(seed, i).standard_normal((2, n))
        x2 = ri * z[0] + math.sqrt(1.0 - ri * ri) * z[1]
        out.flat[i] = np.count_nonzero((z[0] <= hi) & (x2 <= ki)) / n
    return out


def bvn_cdf(x1, x2, rho, method="owen"):
    """Standard bivariate normal CDF, broadcasting over its three arguments.

    ``x1`` and ``x2`` may be infinite. For ``|rho| > 1 - 1e-12`` the exact
    perfect-correlation limits are returned.
    """
    m = _as_method(method)
    x1, x2, rho = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x1, x2, rho)))
    if np.any(np.isnan(x1)) or np.any(np.isnan(x2)) or np.any(np.isnan(rho)):
        raise DomainError("bvn_cdf arguments must not be NaN")
    if np.any(np.abs(rho) > 1.0):
        raise DomainError("|rho| must not exceed 1")
    out = np.empty(x1.shape)

    p1, p2 = ndtr(x1), ndtr(x2)
    upper = rho > 1.0 - RHO_EDGE
    lower = rho < -1.0 + RHO_EDGE
    out[upper] = np.minimum(p1, p2)[upper]
    out[lower] = np.maximum(0.0, p1 - ndtr(-x2))[lower]

    inf1, inf2 = np.isinf(x1), np.isinf(x2)
    rest = ~(upper | lower)
    marg = rest & (inf1 | inf2)
    # B(-inf, .) = 0, B(inf, x2) = Phi(x2), B(x1, inf) = Phi(x1)
    out[marg] = np.where(inf1 & (x1 > 0), p2, np.where(inf2 & (x2 > 0), p1, 0.0))[marg]
    core = rest & ~(inf1 | inf2)
    if np.any(core):
        h, k, r = x1[core], x2[core], rho[core]
        if m.tag == "owen":
            v = _owen(h, k, r)
        elif m.tag == "drezner1":
            v = _drezner1(h, k, r, m.quad_points)
        elif m.tag == "drezner2":
            v = _drezner2(h, k, r, m.quad_points)
        elif m.tag == "cox1":
            v = _cox1(h, k, r)
        elif m.tag == "cox2_mc":
            v = _cox2_mc(h, k, r, m.mc_samples, m.seed)
        else:
            v = _mc_genz(h, k, r, m.mc_samples, m.seed)
        out[core] = v
    out = np.clip(out, 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def bvn_query_cdf(q: BvnQuery, method="owen") -> float:
    return float(bvn_cdf(q.x1, q.x2, q.rho, method))


# ---------------------------------------------------------------------------
# benchmark

@dataclass
class BenchRow:
    method: str
    n_evals: int
    total_seconds: float
    cum_abs_error: float
    seed: int = 0
    oracle_samples: int = 0


@dataclass
class BvnBenchmark:
    rows: list[BenchRow]
    oracle: np.ndarray
    estimates: dict[str, np.ndarray] = field(default_factory=dict)

    def by_method(self) -> dict[str, BenchRow]:
        return {r.method: r for r in self.rows}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "n_evals", "total_seconds", "cum_abs_error", "seed", "oracle_samples"])
            for r in self.rows:
                w.writerow([r.method, r.n_evals, f"{r.total_seconds:.12g}", f"{r.cum_abs_error:.12g}",
                            r.seed, r.oracle_samples])


def random_grid(size: int, seed: int = 0) -> list[BvnQuery]:
    """Random queries: coordinates ~ N(0, 1.5^2), rho ~ U(-0.99, 0.99)."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.5, size=(size, 2))
    rho = rng.uniform(-0.99, 0.99, size=size)
    return [BvnQuery(float(a), float(b), float(r)) for (a, b), r in zip(x, rho)]


def empirical_oracle(grid: Sequence[BvnQuery], samples: int, seed: int = 0, chunk: int = 1_000_000):
    """Empirical CDF of each query from ``samples`` bivariate draws.

    One pool of independent normal pairs is shared across queries and
    rotated to each query's correlation.
    """
    out = np.zeros(len(grid))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0xB7])))
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        z = rng.standard_normal((2, m))
        for i, q in enumerate(grid):
            x2 = q.rho * z[0] + math.sqrt(max(0.0, 1.0 - q.rho * q.rho)) * z[1]
            out[i] += np.count_nonzero((z[0] <= q.x1) & (x2 <= q.x2))
        done += m
    return out / samples


def bvn_benchmark(grid: Sequence[BvnQuery], methods: Iterable, oracle_samples: int = 1_000_000,
                  seed: int = 0, oracle: np.ndarray | None = None) -> BvnBenchmark:
    """Time every method query-by-query and score it against an empirical oracle.

    Each query is evaluated by a separate call so that total wall time
    reflects per-evaluation cost, as a CDF inside a root finder would see it.
    """
    grid = list(grid)
    if not grid:
        raise ConfigError("benchmark grid must not be empty")
    if oracle is None:
        if oracle_samples < 1_000_000:
            raise ConfigError("oracle_samples must be at least 1e6")
        oracle = empirical_oracle(grid, oracle_samples, seed)
    rows, est = [], {}
    for method in methods:
        m = _as_method(method)
        vals = np.empty(len(grid))
        t0 = time.perf_counter()
        for i, q in enumerate(grid):
            vals[i] = bvn_cdf(q.x1, q.x2, q.rho, m)
        elapsed = time.perf_counter() - t0
        est[m.tag] = vals
        rows.append(BenchRow(m.tag, len(grid), elapsed, float(np.sum(np.abs(vals - oracle))),
                             seed=m.seed, oracle_samples=oracle_samples))
    return BvnBenchmark(rows=rows, oracle=np.asarray(oracle), estimates=est)
