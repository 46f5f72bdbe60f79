from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from carve.dists import tnorm_cdf, tnorm_pvalue
from carve.errors import ConfigError, DomainError, TruncationMassError
from carve.sntn import (SntnCanonical, SntnInputs, canonicalize, sntn_cdf, sntn_cdf_in_mean, sntn_ci, sntn_pdf,
                        sntn_ppf, sntn_pvalue, sntn_rvs, sntn_sf)


def mp_sntn_cdf(z, inp: SntnInputs):
    """P(U1 <= m | omega <= U2 <= delta) by direct integration at 30 digits."""
    c = canonicalize(inp)
    with mpmath.workdps(30):
        m = (mpmath.mpf(z) - c.theta1) / mpmath.sqrt(c.sigma1_2)
        r = mpmath.mpf(c.rho)
        s = mpmath.sqrt(1 - r * r)
        f = lambda x: mpmath.npdf(x) * mpmath.ncdf((m - r * x) / s)
        lo = c.omega if np.isfinite(c.omega) else -mpmath.inf
        hi = c.delta if np.isfinite(c.delta) else mpmath.inf
        # split at the bounds of the bulk so the quadrature sees the peak
        pts = [lo] + [p for p in (-8, -4, -1, 0, 1, 4, 8, float(r * m)) if lo < p < hi] + [hi]
        # far-out intervals put all mass against one edge; fine panels resolve it
        steps = [2.0 ** k / 256 for k in range(13) if 2.0 ** k / 256 < float(hi - lo)]
        if np.isfinite(c.omega):
            pts += [lo + d for d in steps]
        if np.isfinite(c.delta):
            pts += [hi - d for d in steps]
        pts = sorted(set(pts), key=float)
        # upper-side intervals use the complement so the difference does not cancel
        den = mpmath.ncdf(-lo) - mpmath.ncdf(-hi) if lo >= 0 else mpmath.ncdf(hi) - mpmath.ncdf(lo)
        # integrate the smaller of F and 1 - F; quadrature error is relative to what it integrates
        low = mpmath.quad(f, pts) / den
        if low <= 0.5:
            return float(low)
        g = lambda x: mpmath.npdf(x) * mpmath.ncdf((r * x - m) / s)
        return float(1 - mpmath.quad(g, pts) / den)


@st.composite
def sntn_inputs(draw, finite_both=None):
    mu1, mu2 = draw(st.floats(-3, 3)), draw(st.floats(-3, 3))
    tau1_2, tau2_2 = draw(st.floats(0.1, 4)), draw(st.floats(0.1, 4))
    c1 = draw(st.floats(0.05, 0.95))
    kind = draw(st.sampled_from(["two", "left", "right", "none"])) if finite_both is None else "two"
    a = draw(st.floats(-4, 3))
    w = draw(st.floats(0.1, 5))
    a, b = {"two": (a, a + w), "left": (a, math.inf), "right": (-math.inf, a), "none": (-math.inf, math.inf)}[kind]
    return SntnInputs(mu1, tau1_2, mu2, tau2_2, a, b, c1, 1 - c1)


class TestCanonicalize:
    def test_direct_arithmetic(self):
        c = canonicalize(SntnInputs(0, 1, 0, 1, c1=0.5, c2=0.5))
        assert c.theta1 == 0 and c.sigma1_2 == pytest.approx(0.5)
        assert c.rho == pytest.approx(0.70710678, abs=1e-8)
        assert c.gamma == pytest.approx(1 / math.sqrt(1 - c.rho**2))
        assert c.lam == pytest.approx(c.rho * c.gamma)

    def test_tnorm_degenerate(self):
        c = canonicalize(SntnInputs(0.3, 2.0, 1.1, 0.7, 0.0, 2.0, c1=0.0, c2=1.0))
        assert c.degenerate == "tnorm"
        assert c.rho == 1.0 and c.sigma1_2 == pytest.approx(0.7) and c.theta1 == pytest.approx(1.1)

    def test_normal_degenerate(self):
        c = canonicalize(SntnInputs(0.3, 2.0, 1.1, 0.7, 0.0, 2.0, c1=1.0, c2=0.0))
        assert c.degenerate == "normal" and c.rho == 0.0

    def test_equal_blocks(self):
        # equal halves with identical design blocks: tau1 = tau2 and c1 = c2 = 1/2
        tau2 = 0.37
        c = canonicalize(SntnInputs(0, tau2, 0, tau2, 1.0, math.inf, 0.5, 0.5))
        assert c.rho == pytest.approx(1 / math.sqrt(2), abs=1e-15)

    def test_idempotent(self):
        c = canonicalize(SntnInputs(0.2, 1.0, 0.1, 2.0, -1.0, 1.0, 0.3, 0.7))
        assert canonicalize(c) is c

    @given(sntn_inputs())
    def test_invariants(self, inp):
        c = canonicalize(inp)
        assert abs(c.rho) <= 1
        assert c.omega < c.delta
        assert c.sigma1_2 >= inp.c2**2 * inp.tau2_2

    @pytest.mark.parametrize("kw", [dict(tau1_2=0.0), dict(tau2_2=-1.0), dict(a=1.0, b=1.0), dict(c1=0.0, c2=0.0)])
    def test_validation(self, kw):
        base = dict(mu1=0.0, tau1_2=1.0, mu2=0.0, tau2_2=1.0, a=0.0, b=2.0, c1=0.5, c2=0.5) | kw
        with pytest.raises(DomainError):
            SntnInputs(**base)


class TestPdf:
    def test_untruncated_is_normal(self):
        inp = SntnInputs(0.4, 1.5, 0.4, 0.6, c1=0.3, c2=0.7)
        c = canonicalize(inp)
        z = np.linspace(-4, 5, 37)
        np.testing.assert_allclose(sntn_pdf(z, c), stats.norm.pdf(z, c.theta1, c.sigma1), rtol=1e-12, atol=1e-300)

    @pytest.mark.parametrize("a,b", [(-1.0, 1.0), (1.0, np.inf), (-np.inf, -0.5), (2.0, 2.3)])
    def test_normalization(self, a, b):
        c = canonicalize(SntnInputs(0.1, 1.0, -0.2, 2.0, a, b, 0.4, 0.6))
        s = math.sqrt(c.sigma1_2)
        # support of Z is shifted by the truncated part; integrate wide enough to contain it
        lo = c.theta1 - 10 * s + (0.6 * a if np.isfinite(a) else 0.0) - 10
        hi = c.theta1 + 10 * s + (0.6 * b if np.isfinite(b) else 0.0) + 10
        val, _ = integrate.quad(lambda z: sntn_pdf(z, c), lo, hi, limit=400, epsabs=1e-13, epsrel=1e-13)
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_tnorm_limit(self):
        inp = SntnInputs(0.0, 1.0, 0.5, 2.0, -1.0, 2.0, 0.0, 1.0)
        z = np.linspace(-0.9, 1.9, 9)
        from carve.dists import tnorm_pdf

        np.testing.assert_allclose(sntn_pdf(z, inp), tnorm_pdf(z, 0.5, 2.0, -1.0, 2.0), rtol=1e-12)

    @pytest.mark.slow
    def test_histogram(self):
        inp = SntnInputs(0.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.5, 0.5)
        n = 10_000_000
        z = sntn_rvs(inp, n, seed=17)
        edges = np.linspace(-2.5, 2.5, 51)
        counts, _ = np.histogram(z, edges)
        prob = np.diff(sntn_cdf(edges, inp))
        err = np.sqrt(prob * (1 - prob) / n)
        assert np.max(np.abs(counts / n - prob) / err) <= 4.0
        # density integrated over each bin reproduces the CDF increments
        binned = [integrate.fixed_quad(lambda z: sntn_pdf(z, inp), lo, hi, n=10)[0]
                  for lo, hi in zip(edges[:-1], edges[1:])]
        np.testing.assert_allclose(binned, prob, rtol=1e-9)


class TestCdf:
    def test_untruncated_median(self):
        c = canonicalize(SntnInputs(1.2, 2.0, -0.4, 0.5, c1=0.4, c2=0.6))
        assert sntn_cdf(c.theta1, c) == pytest.approx(0.5, abs=1e-15)

    def test_tnorm_reduction(self):
        inp = SntnInputs(3.0, 1.0, 0.5, 2.0, -1.0, 2.0, 0.0, 1.0)
        z = np.linspace(-1.5, 2.5, 41)
        np.testing.assert_allclose(sntn_cdf(z, inp), tnorm_cdf(z, 0.5, 2.0, -1.0, 2.0), atol=1e-10)

    def test_normal_reduction_grid(self):
        for c1 in (0.2, 0.5, 0.9):
            inp = SntnInputs(0.3, 1.1, 0.3, 0.8, c1=c1, c2=1 - c1)
            c = canonicalize(inp)
            z = np.linspace(-5, 5, 101)
            np.testing.assert_allclose(sntn_cdf(z, inp), stats.norm.cdf(z, c.theta1, c.sigma1), atol=1e-10)

    def test_monte_carlo(self):
        inp = SntnInputs(0.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.5, 0.5)
        n = 10_000_000
        z = sntn_rvs(inp, n, seed=5)
        emp = np.count_nonzero(z <= 0.2) / n
        p = float(sntn_cdf(0.2, inp))
        assert abs(p - emp) <= 3 * math.sqrt(p * (1 - p) / n)

    @settings(max_examples=60, deadline=None)
    @given(sntn_inputs(), st.floats(-3, 3))
    def test_against_integral(self, inp, u):
        c = canonicalize(inp)
        z = c.theta1 + u * math.sqrt(c.sigma1_2)
        ref = mp_sntn_cdf(z, inp)
        got = float(sntn_cdf(z, inp))
        assert got == pytest.approx(ref, rel=1e-8, abs=1e-13)
        assert float(sntn_sf(z, inp)) == pytest.approx(1 - ref, rel=1e-8, abs=1e-13)

    @pytest.mark.parametrize("z", [-12.0, -8.0, 6.0, 9.0])
    @pytest.mark.parametrize("ab", [(-1.0, 1.0), (3.0, np.inf), (8.0, 8.5), (-np.inf, -6.0)])
    def test_tails_relative(self, z, ab):
        inp = SntnInputs(0.0, 1.0, 0.0, 1.0, *ab, 0.5, 0.5)
        ref = mp_sntn_cdf(z, inp)
        got = float(sntn_cdf(z, inp))
        if ref > 1e-300:
            assert got == pytest.approx(ref, rel=1e-7)
        ref_sf = 1 - ref if ref < 0.5 else None
        if ref_sf is not None:
            assert float(sntn_sf(z, inp)) == pytest.approx(ref_sf, rel=1e-9)

    def test_scalar_and_vector_agree(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            a = rng.normal(0, 3)
            inp = SntnInputs(rng.normal(), rng.uniform(0.2, 3), rng.normal(), rng.uniform(0.2, 3),
                             a, a + rng.exponential(2) + 0.01, c1=(c1 := rng.uniform(0.05, 0.95)), c2=1 - c1)
            z = rng.normal(0, 3)
            s = sntn_cdf(float(z), inp)
            v = sntn_cdf(np.array([z]), inp)[0]
            assert s == pytest.approx(v, rel=1e-9, abs=1e-15)

    def test_broadcast_parameters(self):
        mu = np.linspace(-1, 1, 5)
        c = SntnCanonical(theta1=mu, sigma1_2=1.0, theta2=mu, sigma2_2=1.0, rho=0.5, lam=0.5 / math.sqrt(0.75),
                          gamma=1 / math.sqrt(0.75), omega=0.0 - mu, delta=np.inf)
        out = sntn_cdf(0.3, c)
        assert out.shape == (5,)
        assert np.all(np.diff(out) < 0)

    def test_limits(self):
        inp = SntnInputs(0.0, 1.0, 0.0, 1.0, -1.0, 2.0, 0.5, 0.5)
        assert sntn_cdf(-np.inf, inp) == 0.0
        assert sntn_cdf(np.inf, inp) == 1.0

    def test_mass_error(self):
        inp = SntnInputs(0.0, 1.0, 0.0, 1.0, 1e200, np.inf, 0.5, 0.5)
        with pytest.raises(TruncationMassError):
            sntn_cdf(0.0, inp)
        with pytest.raises(TruncationMassError):
            sntn_cdf(np.array([0.0, 1.0]), inp)

    @settings(max_examples=100, deadline=None)
    @given(sntn_inputs())
    def test_monotone_in_z(self, inp):
        c = canonicalize(inp)
        z = c.theta1 + np.linspace(-8, 8, 161) * math.sqrt(c.sigma1_2) + 0.5 * (
            inp.c2 * inp.a if np.isfinite(inp.a) else 0)
        f = sntn_cdf(z, inp)
        assert np.all(np.diff(f) >= -1e-14)
        assert np.all((f >= 0) & (f <= 1))

    @settings(max_examples=100, deadline=None)
    @given(sntn_inputs(), st.floats(-2, 2))
    def test_decreasing_in_mean(self, inp, u):
        c = canonicalize(inp)
        z = c.theta1 + u * math.sqrt(c.sigma1_2)
        mus = np.linspace(-3, 3, 61) + z
        f = np.array([sntn_cdf_in_mean(z, inp, float(m)) for m in mus])
        informative = (f > 1e-12) & (f < 1 - 1e-12)
        d = np.diff(f)[informative[:-1] & informative[1:]]
        assert np.all(d < 0)

    def test_pdf_is_derivative(self):
        inp = SntnInputs(0.2, 0.8, -0.1, 1.7, -0.5, 1.5, 0.35, 0.65)
        z = np.linspace(-2, 2, 41)
        h = 1e-5
        fd = (sntn_cdf(z + h, inp) - sntn_cdf(z - h, inp)) / (2 * h)
        np.testing.assert_allclose(fd, sntn_pdf(z, inp), atol=1e-6)


class TestPpf:
    def test_normal_median(self):
        inp = SntnInputs(0.7, 1.0, 0.7, 2.0, c1=0.5, c2=0.5)
        assert sntn_ppf(0.5, inp) == pytest.approx(0.7, abs=1e-8)

    def test_roundtrip(self):
        inp = SntnInputs(0.0, 1.0, 0.5, 2.0, 0.0, 3.0, 0.4, 0.6)
        z = np.linspace(-2, 3, 21)
        np.testing.assert_allclose(sntn_ppf(sntn_cdf(z, inp), inp), z, atol=1e-6)

    def test_file_drawer_critical_value(self):
        # null mean 0, sigma2 = 4, n = 100, n_A = 50, truncation (1, inf) on the A-block mean
        n, n_a, s2 = 100, 50, 4.0
        inp = SntnInputs(0.0, s2 / (n - n_a), 0.0, s2 / n_a, 1.0, np.inf, (n - n_a) / n, n_a / n)
        crit = sntn_ppf(0.9, inp)
        grid = np.linspace(0.0, 3.0, 300_001)
        f = sntn_cdf(grid, inp)
        grid_root = grid[np.searchsorted(f, 0.9)]
        assert crit == pytest.approx(grid_root, abs=1e-5 + 1e-6)
        assert abs(float(sntn_cdf(crit, inp)) - 0.9) <= 1e-8

    def test_array_shape(self):
        inp = SntnInputs(0.0, 1.0, 0.0, 1.0, -1.0, 1.0, 0.5, 0.5)
        assert sntn_ppf(np.array([[0.1, 0.9]]), inp).shape == (1, 2)

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.2])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            sntn_ppf(p, SntnInputs(0.0, 1.0, 0.0, 1.0))


class TestPvalue:
    def test_median_two_sided(self):
        inp = SntnInputs(0.0, 1.0, 0.0, 1.0, -1.0, 2.0, 0.5, 0.5)
        med = sntn_ppf(0.5, inp, tol=1e-14)
        assert sntn_pvalue(med, inp) == pytest.approx(1.0, abs=1e-12)

    def test_tails(self):
        inp = SntnInputs(0.0, 1.0, 0.0, 1.0, 1.0, np.inf, 0.5, 0.5)
        left, right = sntn_pvalue(1.7, inp, "left"), sntn_pvalue(1.7, inp, "right")
        assert left + right == pytest.approx(1.0, abs=1e-14)
        assert sntn_pvalue(1.7, inp) == pytest.approx(2 * min(left, right))

    def test_tnorm_reduction(self):
        inp = SntnInputs(0.0, 1.0, 0.3, 1.5, 0.5, 4.0, 0.0, 1.0)
        for x in (0.6, 1.0, 2.5, 3.9):
            assert sntn_pvalue(x, inp) == pytest.approx(tnorm_pvalue(x, 0.3, 1.5, 0.5, 4.0), abs=1e-10)

    def test_null_uniformity(self):
        inp = SntnInputs(0.0, 0.04, 0.0, 0.02, 0.1, np.inf, 1 / 3, 2 / 3)
        z = sntn_rvs(inp, 100_000, seed=21)
        p = sntn_sf(z, inp)
        assert stats.kstest(p, "uniform").pvalue > 1e-3

    def test_bad_tail(self):
        with pytest.raises(ConfigError):
            sntn_pvalue(0.0, SntnInputs(0.0, 1.0, 0.0, 1.0), "both")


class TestCi:
    def test_z_interval(self):
        # sigma1^2 = 0.5^2 * 2 + 0.5^2 * 2 = 1
        inp = SntnInputs(0.0, 2.0, 0.0, 2.0, c1=0.5, c2=0.5)
        lo, hi = sntn_ci(0.0, inp, 0.05)
        assert lo == pytest.approx(-1.959964, abs=1e-6)
        assert hi == pytest.approx(1.959964, abs=1e-6)

    @settings(max_examples=60, deadline=None)
    @given(sntn_inputs(), st.floats(-2, 2), st.sampled_from([0.05, 0.1, 0.2]))
    def test_residuals(self, inp, u, alpha):
        c = canonicalize(inp)
        z = c.theta1 + u * math.sqrt(c.sigma1_2)
        lo, hi = sntn_ci(z, inp, alpha)
        assert lo < hi
        assert abs(sntn_cdf_in_mean(z, inp, lo) - (1 - alpha / 2)) <= 1e-8
        assert abs(sntn_cdf_in_mean(z, inp, hi) - alpha / 2) <= 1e-8

    def test_coverage(self):
        truth = 0.3
        inp = SntnInputs(truth, 0.05, truth, 0.02, 0.2, np.inf, 0.3, 0.7)
        draws = sntn_rvs(inp, 2000, seed=33)
        covered = sum(lo <= truth <= hi for lo, hi in (sntn_ci(float(z), inp, 0.1) for z in draws))
        lo_b, hi_b = stats.binom.interval(0.99, 2000, 0.9)
        assert lo_b <= covered <= hi_b

    def test_requires_convex_weights(self):
        with pytest.raises(ConfigError):
            sntn_ci(0.0, SntnInputs(0.0, 1.0, 0.0, 1.0, c1=0.5, c2=0.6))

    @pytest.mark.parametrize("kw,err", [(dict(alpha=0.0), ConfigError), (dict(z_obs=math.inf), DomainError)])
    def test_errors(self, kw, err):
        args = dict(z_obs=0.0, template=SntnInputs(0.0, 1.0, 0.0, 1.0), alpha=0.1) | kw
        with pytest.raises(err):
            sntn_ci(**args)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(-3, 3))
    def test_vacuous_truncation_is_pooled_z(self, c1, z):
        inp = SntnInputs(0.0, 1.3, 0.0, 0.4, c1=c1, c2=1 - c1)
        sd = math.sqrt(canonicalize(inp).sigma1_2)
        lo, hi = sntn_ci(z, inp, 0.1)
        q = stats.norm.ppf(0.95)
        assert lo == pytest.approx(z - q * sd, abs=1e-7)
        assert hi == pytest.approx(z + q * sd, abs=1e-7)
