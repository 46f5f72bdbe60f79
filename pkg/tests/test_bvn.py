from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr, owens_t as scipy_owens_t
from scipy.stats import multivariate_normal

from carve.bvn import (METHODS, BvnMethod, BvnQuery, bvn_benchmark, bvn_cdf, bvn_owen_scalar, bvn_query_cdf,
                       owens_t, owens_t_scalar, random_grid)
from carve.errors import ConfigError, DomainError

EXACT = ("owen", "drezner1")
coord = st.floats(-6, 6, allow_nan=False)
corr = st.floats(-0.999, 0.999, allow_nan=False)


def mp_owens_t(h, a):
    f = lambda t: mpmath.exp(-h * h * (1 + t * t) / 2) / (1 + t * t)
    return float(mpmath.quad(f, [0, a]) / (2 * mpmath.pi))


def scipy_bvn(x1, x2, rho):
    return multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).cdf([x1, x2])


class TestOwensT:
    def test_zero_width(self):
        assert owens_t(1.5, 0.0) == 0.0

    def test_unit_slope_at_origin(self):
        assert owens_t(0.0, 1.0) == pytest.approx(0.125, abs=1e-15)

    def test_quadrature_oracle(self):
        assert owens_t(0.5, 2.0) == pytest.approx(mp_owens_t(0.5, 2.0), abs=1e-12)

    @pytest.mark.parametrize("h", [0.0, 0.1, 1.0, 2.5, 5.0, 8.5, 12.0])
    @pytest.mark.parametrize("a", [0.05, 0.5, 0.999, 1.0, 1.5, 7.0, 80.0])
    def test_against_scipy(self, h, a):
        np.testing.assert_allclose(owens_t(h, a), scipy_owens_t(h, a), rtol=1e-12, atol=1e-16)

    def test_infinite_slope(self):
        # T(h, inf) = Q(|h|) / 2
        assert owens_t(1.3, np.inf) == pytest.approx(0.5 * ndtr(-1.3), abs=1e-15)
        assert owens_t(1.3, -np.inf) == pytest.approx(-0.5 * ndtr(-1.3), abs=1e-15)

    @pytest.mark.parametrize("bad", [(np.inf, 1.0), (np.nan, 1.0), (0.3, np.nan)])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            owens_t(*bad)

    @given(st.floats(-10, 10), st.floats(-50, 50))
    def test_odd_in_a_and_bounded(self, h, a):
        t = float(owens_t(h, a))
        assert abs(t) <= 0.25
        assert float(owens_t(h, -a)) == pytest.approx(-t, abs=1e-16)
        assert float(owens_t(-h, a)) == t

    @given(st.floats(0, 10), st.floats(-50, 50))
    def test_scalar_matches_vector(self, h, a):
        assert owens_t_scalar(h, a) == pytest.approx(float(owens_t(h, a)), rel=1e-13, abs=1e-17)


class TestBvnCdf:
    def test_independent_origin(self):
        assert bvn_cdf(0, 0, 0) == pytest.approx(0.25, abs=1e-15)

    def test_orthant_identity(self):
        assert bvn_cdf(0, 0, 0.5) == pytest.approx(1 / 3, abs=1e-10)

    def test_perfect_correlation(self):
        assert bvn_cdf(1.2, -0.3, 1.0) == pytest.approx(ndtr(-0.3), abs=1e-15)
        assert bvn_cdf(1.2, -0.3, -1.0) == pytest.approx(max(0.0, ndtr(1.2) + ndtr(-0.3) - 1), abs=1e-15)

    def test_marginalization(self):
        assert bvn_cdf(np.inf, 0.7, -0.4) == pytest.approx(ndtr(0.7), abs=1e-15)
        assert bvn_cdf(0.7, np.inf, -0.4) == pytest.approx(ndtr(0.7), abs=1e-15)
        assert bvn_cdf(-np.inf, 0.7, 0.2) == 0.0

    @pytest.mark.parametrize("method", EXACT + ("drezner2",))
    def test_against_scipy_grid(self, method):
        grid = random_grid(60, seed=3)
        got = np.array([bvn_query_cdf(q, method) for q in grid])
        ref = np.array([scipy_bvn(q.x1, q.x2, q.rho) for q in grid])
        np.testing.assert_allclose(got, ref, atol=1e-7)

    def test_owen_tight_against_mpmath(self):
        # reference: integral of phi(x) Phi((k - rho x)/sqrt(1-rho^2)) over x <= h
        rng = np.random.default_rng(11)
        for _ in range(25):
            h, k = rng.normal(0, 2, 2)
            r = rng.uniform(-0.98, 0.98)
            s = mpmath.sqrt(1 - mpmath.mpf(r) ** 2)
            f = lambda x: mpmath.npdf(x) * mpmath.ncdf((k - r * x) / s)
            ref = float(mpmath.quad(f, [-mpmath.inf, min(h, 0), h]))
            assert bvn_cdf(h, k, r) == pytest.approx(ref, abs=1e-14, rel=1e-11)

    def test_scalar_path_matches(self):
        for q in random_grid(200, seed=5):
            assert bvn_owen_scalar(q.x1, q.x2, q.rho) == pytest.approx(bvn_query_cdf(q), abs=1e-15)

    def test_broadcasting(self):
        out = bvn_cdf(np.linspace(-1, 1, 5)[:, None], [0.0, 1.0], 0.3)
        assert out.shape == (5, 2)

    @pytest.mark.parametrize("method", ["cox2_mc", "mc_genz"])
    def test_mc_methods_reproducible_and_close(self, method):
        m = BvnMethod(method, mc_samples=200_000, seed=4)
        a, b = bvn_cdf(0.4, -0.2, 0.6, m), bvn_cdf(0.4, -0.2, 0.6, m)
        assert a == b
        ref = scipy_bvn(0.4, -0.2, 0.6)
        assert abs(a - ref) <= 4 * math.sqrt(ref * (1 - ref) / 200_000)

    def test_cox1_is_rough_approximation(self):
        # no accuracy contract; just sane values
        grid = random_grid(50, seed=1)
        v = np.array([bvn_query_cdf(q, "cox1") for q in grid])
        assert np.all((v >= 0) & (v <= 1))

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            bvn_cdf(0, 0, 1.2)
        with pytest.raises(DomainError):
            bvn_cdf(np.nan, 0, 0.1)
        with pytest.raises(DomainError):
            BvnQuery(0.0, 0.0, -1.01)

    @pytest.mark.parametrize("kw", [dict(tag="mc_genz", mc_samples=0), dict(tag="cox2_mc", mc_samples=99),
                                    dict(tag="drezner1", quad_points=7), dict(tag="nope")])
    def test_config_errors(self, kw):
        with pytest.raises(ConfigError):
            BvnMethod(**kw)


class TestBvnProperties:
    @settings(max_examples=200)
    @given(coord, coord, corr)
    def test_symmetry(self, x1, x2, rho):
        for method in EXACT:
            assert bvn_cdf(x1, x2, rho, method) == pytest.approx(bvn_cdf(x2, x1, rho, method), abs=1e-12)

    @settings(max_examples=200)
    @given(coord, coord, corr)
    def test_frechet_bounds(self, x1, x2, rho):
        p1, p2 = ndtr(x1), ndtr(x2)
        v = bvn_cdf(x1, x2, rho)
        assert max(0.0, p1 + p2 - 1) - 1e-10 <= v <= min(p1, p2) + 1e-10

    @settings(max_examples=200)
    @given(coord, coord)
    def test_independence_reduction(self, x1, x2):
        assert bvn_cdf(x1, x2, 0.0) == pytest.approx(ndtr(x1) * ndtr(x2), abs=1e-12)

    @settings(max_examples=100)
    @given(coord, corr)
    def test_monotone_grid(self, x2, rho):
        xs = np.linspace(-8, 8, 401)
        v = bvn_cdf(xs, x2, rho)
        assert np.all(np.diff(v) >= -1e-12)
        v = bvn_cdf(x2, xs, rho)
        assert np.all(np.diff(v) >= -1e-12)


class TestBenchmark:
    def test_single_origin_query(self):
        n = 1_000_000
        bench = bvn_benchmark([BvnQuery(0.0, 0.0, 0.0)], METHODS, oracle_samples=n, seed=2)
        tol = 3 * math.sqrt(0.25 * 0.75 / n)
        rows = bench.by_method()
        assert set(rows) == set(METHODS)
        for tag in EXACT + ("drezner2",):
            assert rows[tag].cum_abs_error <= tol + 1e-12
        for tag in ("cox2_mc", "mc_genz"):
            # estimator and oracle are both noisy
            assert rows[tag].cum_abs_error <= 2 * tol + 3 * math.sqrt(0.25 * 0.75 / 10_000)

    def test_independent_grid_all_methods(self):
        grid = [BvnQuery(float(a), float(b), 0.0) for a, b in np.random.default_rng(0).normal(size=(20, 2))]
        truth = np.array([ndtr(q.x1) * ndtr(q.x2) for q in grid])
        bench = bvn_benchmark(grid, ["owen", "drezner1", "drezner2", "cox1"], oracle=truth)
        for tag, est in bench.estimates.items():
            np.testing.assert_allclose(est, truth, atol=1e-6, err_msg=tag)

    def test_owen_beats_mc(self):
        grid = random_grid(100, seed=9)
        bench = bvn_benchmark(grid, ["owen", "mc_genz"], oracle_samples=1_000_000, seed=9)
        rows = bench.by_method()
        assert rows["owen"].cum_abs_error <= rows["mc_genz"].cum_abs_error

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            bvn_benchmark([], ["owen"])

    def test_small_oracle_rejected(self):
        with pytest.raises(ConfigError):
            bvn_benchmark(random_grid(2), ["owen"], oracle_samples=1000)

    def test_csv(self, tmp_path):
        bench = bvn_benchmark(random_grid(3), ["owen"], oracle=np.zeros(3))
        bench.to_csv(tmp_path / "b.csv")
        header = (tmp_path / "b.csv").read_text().splitlines()[0]
        assert header.startswith("method,n_evals,total_seconds,cum_abs_error")
