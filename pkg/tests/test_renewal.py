"""Renewal tables, weighted integrals and the measures built from them."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from expwalk import Flavor, Gaussian, Lattice, MuMeasure, Provenance, RenewalTable
from expwalk.renewal import (
    expected_tau_minus,
    is_skipfree_down,
    laplace_weighted_integral,
    mu_sampler,
    renewal_estimate,
    renewal_exact_skipfree,
    skipfree_table,
)


def flat_table(x_max: float = 10.0, points: int = 64) -> RenewalTable:
    g = np.linspace(0.0, x_max, points)
    return RenewalTable(Flavor.DESCENDING, g, np.ones(points), np.zeros(points),
                        Provenance.EXACT_MEAN_FORMULA, False, 0.0)


def linear_table(x_max: float = 8.0, points: int = 64, slope: float = 0.7) -> RenewalTable:
    g = np.linspace(0.0, x_max, points)
    return RenewalTable(Flavor.DESCENDING, g, 1.0 + slope * g, np.zeros(points),
                        Provenance.EXACT_MEAN_FORMULA, False, slope)


class TestTable:
    def test_rejects_bad_grid(self):
        with pytest.raises(ValueError):
            RenewalTable(Flavor.DESCENDING, np.array([0.5, 1.0]), np.array([1.0, 2.0]),
                         np.zeros(2), Provenance.MONTE_CARLO, False, 0.0)

    def test_rejects_v0_not_one(self):
        with pytest.raises(ValueError):
            RenewalTable(Flavor.DESCENDING, np.array([0.0, 1.0]), np.array([2.0, 2.0]),
                         np.zeros(2), Provenance.MONTE_CARLO, False, 0.0)

    def test_zero_below_origin(self):
        assert skipfree_table(1.0, 10.0)(-0.5) == 0.0

    def test_staircase_continuation(self):
        t = skipfree_table(0.5, 10.0)
        x = np.linspace(0, 200, 4001)
        np.testing.assert_array_equal(t(x), renewal_exact_skipfree(0.5, x))

    def test_rows_shape(self):
        rows = skipfree_table(1.0, 5.0).rows()
        assert rows[0] == (0.0, 1.0, 0.0) and len(rows) >= 64


class TestSkipFree:
    @pytest.mark.parametrize("x,v", [(0.0, 1.0), (0.99, 1.0), (1.0, 2.0), (7.5, 8.0), (-1.0, 0.0)])
    def test_floor_formula(self, x, v):
        assert renewal_exact_skipfree(1.0, x) == v

    def test_detection(self, symmetric, skewed, drifting_lattice):
        assert is_skipfree_down(symmetric) and is_skipfree_down(skewed)
        assert is_skipfree_down(drifting_lattice)
        assert not is_skipfree_down(Lattice(1.0, (-2, 1), (1 / 3, 2 / 3)))
        assert not is_skipfree_down(Gaussian(0.0, 1.0))

    def test_harmonic(self, skewed):
        # E_x[V(x + X); x + X >= 0] = V(x) for the mean-zero skip-free walk
        x = np.arange(0, 40, dtype=float)
        values, probs = skewed.atoms()
        y = x[:, None] + values[None, :]
        lhs = (renewal_exact_skipfree(1.0, y) * (y >= 0) * probs).sum(axis=1)
        np.testing.assert_allclose(lhs, renewal_exact_skipfree(1.0, x), atol=1e-12)


class TestMonteCarlo:
    def test_lattice_matches_exact(self, skewed):
        t = renewal_estimate(skewed, Flavor.DESCENDING, 20.0, 4000, 100_000, 11)
        assert t.step_mode and t.provenance is Provenance.MONTE_CARLO
        exact = renewal_exact_skipfree(1.0, t.grid)
        # skip-free heights are deterministic so the estimate is exact
        np.testing.assert_allclose(t.values, exact, atol=1e-12)

    def test_ascending_harmonic_for_dual(self, skewed):
        # V_hat is harmonic for the negated walk killed below zero
        t = renewal_estimate(skewed, Flavor.ASCENDING, 12.0, 20_000, 100_000, 5)
        assert t.flavor is Flavor.ASCENDING and np.all(np.diff(t.values) >= 0)
        values, probs = skewed.atoms()
        for x in range(0, 8):
            y = x - values
            lhs = float(np.sum(t(y) * (y >= 0) * probs))
            se = float(np.max(t.stderr[: x + 3]))
            assert abs(lhs - float(t(x))) < 5 * se + 1e-12

    def test_gaussian_linear_growth(self):
        t = renewal_estimate(Gaussian(0.0, 1.0), Flavor.DESCENDING, 10.0, 4000, 100_000, 3)
        # mean descending ladder height of a standard Gaussian walk is 1/sqrt(2)
        assert t.slope == pytest.approx(math.sqrt(2.0), rel=0.1)
        assert not t.step_mode and t.censored_fraction < 0.05

    def test_seeded_reproducible(self, skewed):
        a = renewal_estimate(Gaussian(0.0, 1.0), "Descending", 5.0, 500, 10_000, 99)
        b = renewal_estimate(Gaussian(0.0, 1.0), "Descending", 5.0, 500, 10_000, 99)
        np.testing.assert_array_equal(a.values, b.values)

    def test_worker_invariance(self):
        m = Gaussian(0.0, 1.0)
        a = renewal_estimate(m, "Descending", 5.0, 500, 10_000, 4, workers=1)
        b = renewal_estimate(m, "Descending", 5.0, 500, 10_000, 4, workers=4)
        np.testing.assert_array_equal(a.values, b.values)

    def test_rejects_bad_arguments(self, symmetric):
        with pytest.raises(ValueError):
            renewal_estimate(symmetric, "Descending", -1.0, 100, 100, 0)
        with pytest.raises(ValueError):
            renewal_estimate(symmetric, "Sideways", 1.0, 100, 100, 0)

    def test_gaussian_harmonic(self):
        t = renewal_estimate(Gaussian(0.0, 1.0), Flavor.DESCENDING, 12.0, 20_000, 100_000, 8)
        for x in (0.5, 2.0, 4.0):
            val, _ = integrate.quad(lambda y: float(t(x + y)) * stats.norm.pdf(y), -x, 12.0,
                                    limit=200)
            assert val == pytest.approx(float(t(x)), rel=0.03)


class TestWeightedIntegral:
    def test_constant_one(self):
        val, err = laplace_weighted_integral(flat_table(), 1.0)
        # the error is a trapezoid-gap proxy, not the error of the exact cell sum
        assert val == pytest.approx(1.0, abs=1e-12) and err < 1e-2

    def test_zero_upper_limit(self):
        assert laplace_weighted_integral(skipfree_table(1.0, 10.0), 1.0, 0.0) == (0.0, 0.0)

    def test_staircase_closed_form(self):
        val, _ = laplace_weighted_integral(skipfree_table(1.0, 10.0), 1.0)
        assert val == pytest.approx(1.58198, abs=1e-5)
        assert val == pytest.approx(1.0 / (1.0 - math.exp(-1.0)), abs=1e-12)

    def test_linear_closed_form(self):
        t = linear_table()
        val, _ = laplace_weighted_integral(t, 0.5)
        assert val == pytest.approx(1.0 / 0.5 + 0.7 / 0.25, rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(lam=st.floats(0.05, 5.0), y=st.floats(0.0, 60.0))
    def test_against_quadrature(self, lam, y):
        t = skipfree_table(0.5, 12.0)
        val, _ = laplace_weighted_integral(t, lam, y)
        k = np.arange(int(y / 0.5) + 1)
        a, b = 0.5 * k, np.minimum(0.5 * (k + 1), y)
        ref = math.fsum((k + 1) * (np.exp(-lam * a) - np.exp(-lam * b)) / lam)
        assert val == pytest.approx(ref, rel=1e-7, abs=1e-10)

    def test_monotone_in_y(self):
        t = linear_table()
        vals = [laplace_weighted_integral(t, 0.8, y)[0] for y in np.linspace(0, 30, 31)]
        assert np.all(np.diff(vals) >= 0)

    def test_infinite_needs_positive_lambda(self):
        with pytest.raises(ValueError):
            laplace_weighted_integral(flat_table(), 0.0)

    def test_mc_error_is_propagated(self):
        t = flat_table()
        noisy = RenewalTable(t.flavor, t.grid, t.values, np.full(t.grid.size, 0.01),
                             Provenance.MONTE_CARLO, False, 0.0)
        assert laplace_weighted_integral(noisy, 1.0)[1] > 0


class TestMuMeasure:
    def test_cdf_limits(self):
        mu = MuMeasure(skipfree_table(1.0, 10.0), 1.0)
        assert mu.cdf(0.0) == 0.0
        assert mu.cdf(math.inf) == pytest.approx(1.0)
        assert mu.cdf(200.0) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("table", [skipfree_table(1.0, 10.0), linear_table(), flat_table()],
                             ids=["staircase", "linear", "flat"])
    def test_ks(self, table, rng):
        mu = MuMeasure(table, 1.3)
        x = mu_sampler(table, 1.3, rng, 20_000)
        assert x.min() >= 0
        assert stats.kstest(x, mu.cdf).pvalue > 0.01

    def test_flat_is_exponential_mean(self, rng):
        x = mu_sampler(flat_table(), 2.0, rng, 200_000)
        assert abs(x.mean() - 0.5) < 4 * 0.5 / math.sqrt(x.size)

    def test_staircase_mean(self, rng):
        lam = 0.9
        t = skipfree_table(1.0, 10.0)
        ref, _ = integrate.quad(lambda z: z * math.exp(-lam * z) * float(t(z)), 0, 80,
                                points=np.arange(1, 80), limit=400)
        ref /= MuMeasure(t, lam).total
        x = mu_sampler(t, lam, rng, 200_000)
        assert abs(x.mean() - ref) < 4 * x.std() / math.sqrt(x.size)

    def test_requires_positive_lambda(self):
        with pytest.raises(ValueError):
            MuMeasure(flat_table(), 0.0)

    def test_scalar_draw(self, rng):
        assert isinstance(MuMeasure(flat_table(), 1.0).sample(rng), float)


class TestExpectedTau:
    def test_always_down(self):
        from expwalk import TwoPoint

        est = expected_tau_minus(TwoPoint(1.0, -1.0, 0.0), 0.0, 100, 10, 0)
        assert est.value == 1.0 and est.info["censored_fraction"] == 0.0

    def test_skip_free_wald(self, drifting_lattice):
        # E_x[tau] = (floor(x) + 1) / |E X| for a downward skip-free walk with negative drift
        est = expected_tau_minus(drifting_lattice, 3.0, 50_000, 100_000, 1)
        assert est.agrees_with(4.0 / 0.1, k=4)
