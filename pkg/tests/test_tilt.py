"""Optimal tilt, Esscher transform and regime classification."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expwalk import (
    Boundary,
    ExpTilted,
    FSpec,
    Gaussian,
    Lattice,
    Reflected,
    RegimeTag,
    ShiftedPareto,
    TwoPoint,
    esscher,
    find_lambda,
    regime_classify,
)
from expwalk.steps import laplace
from expwalk.walk import enumerate_paths


class TestFSpec:
    def test_bound_and_lipschitz(self):
        f = FSpec(2.0, 1.5, 0.5)
        assert f.bound == pytest.approx(2.0 * 0.5**-1.5)
        x = np.linspace(0, 50, 2001)
        slopes = np.abs(np.diff(f(x)) / np.diff(x))
        assert slopes.max() <= f.lipschitz * (1 + 1e-9)

    def test_power_asymptote(self):
        f = FSpec(3.0, 2.0, 1.0)
        assert 1e12**2 * f(1e12) == pytest.approx(3.0, rel=1e-9)

    def test_from_log_matches_direct(self):
        f = FSpec(1.3, 0.7, 2.0)
        logs = np.linspace(-30, 30, 61)
        np.testing.assert_allclose(f.from_log(logs), f(np.exp(logs)), rtol=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            FSpec(1.0, 0.0, 1.0)


class TestFindLambda:
    def test_gaussian_interior(self):
        r = find_lambda(Gaussian(-1.0, 1.0), 2.0)
        assert r.lambda_star == pytest.approx(1.0, abs=1e-8)
        assert r.rho_factor == pytest.approx(math.exp(-0.5), rel=1e-12)
        assert r.boundary is Boundary.INTERIOR
        assert r.tilted_mean == pytest.approx(0.0, abs=1e-6)

    def test_gaussian_at_theta(self, gauss_drift):
        r = find_lambda(gauss_drift, 1.0)
        assert r.lambda_star == pytest.approx(1.0, abs=1e-8)
        assert r.rho_factor == pytest.approx(math.exp(-1.5), abs=1e-8)
        assert r.boundary is Boundary.AT_THETA_F
        assert r.tilted_mean == pytest.approx(-1.0, abs=1e-8)

    def test_pareto_at_zero(self, pareto):
        r = find_lambda(pareto, 2.0)
        assert r.lambda_star == 0.0 and r.rho_factor == 1.0
        assert r.boundary is Boundary.AT_ZERO

    def test_tilted_pareto_domain_sup(self):
        m = ExpTilted(ShiftedPareto(3.0, 1.0, -2.0), -0.5)
        r = find_lambda(m, 1.0)
        assert r.boundary is Boundary.AT_DOMAIN_SUP
        assert r.lambda_star == pytest.approx(0.5)

    @pytest.mark.parametrize("model,theta", [
        (Gaussian(-1.0, 1.0), 2.0),
        (Lattice(1.0, (-1, 1, 2), (0.6, 0.3, 0.1)), 3.0),
        (TwoPoint(1.0, -2.0, 0.7), 5.0),
    ])
    def test_report_consistency(self, model, theta):
        r = find_lambda(model, theta)
        assert r.rho_factor == pytest.approx(laplace(model, r.lambda_star), rel=1e-10)
        assert r.phi_at_lambda == pytest.approx(math.log(r.rho_factor))
        assert r.rho_factor <= 1.0
        if r.boundary is Boundary.INTERIOR:
            assert abs(r.tilted_mean) < 1e-6

    @settings(max_examples=30, deadline=None)
    @given(mu=st.floats(-3, 1), sigma=st.floats(0.3, 2), t1=st.floats(0.05, 3),
           t2=st.floats(0.05, 3))
    def test_monotone_in_theta(self, mu, sigma, t1, t2):
        m = Gaussian(mu, sigma)
        lo, hi = sorted((t1, t2))
        assert find_lambda(m, hi).rho_factor <= find_lambda(m, lo).rho_factor + 1e-12

    @settings(max_examples=30, deadline=None)
    @given(mu=st.floats(-3, 3), sigma=st.floats(0.2, 3), theta=st.floats(0.05, 4))
    def test_gaussian_closed_form(self, mu, sigma, theta):
        lam = min(max(-mu / sigma**2, 0.0), theta)
        r = find_lambda(Gaussian(mu, sigma), theta)
        assert r.lambda_star == pytest.approx(lam, abs=1e-7)


class TestEsscher:
    def test_zero_is_identity(self, symmetric):
        assert esscher(symmetric, 0.0) is symmetric

    def test_gaussian_shift(self):
        assert esscher(Gaussian(-1.0, 1.0), 1.0) == Gaussian(0.0, 1.0)

    def test_lattice_reweighting(self):
        m = Lattice(1.0, (-1, 1), (0.75, 0.25))
        # weights 3**x / L: (0.75 / 3, 0.25 * 3) normalised
        np.testing.assert_allclose(esscher(m, math.log(3.0)).probs, (0.25, 0.75), atol=1e-15)
        np.testing.assert_allclose(esscher(m, math.log(3.0) / 2).probs, (0.5, 0.5), atol=1e-15)

    def test_pareto_positive_tilt_fails(self, pareto):
        with pytest.raises(ValueError):
            esscher(pareto, 0.1)

    @pytest.mark.parametrize("model", [
        Lattice(1.0, (-1, 1, 2), (0.6, 0.3, 0.1)),
        Gaussian(-0.5, 1.5),
        TwoPoint(1.0, -2.0, 0.7),
        ShiftedPareto(3.0, 1.0, -2.0),
    ], ids=lambda m: type(m).__name__)
    def test_laplace_composition(self, model):
        rng = np.random.default_rng(7)
        for _ in range(20):
            if isinstance(model, ShiftedPareto):
                l0, l1 = -rng.uniform(0, 2), -rng.uniform(0, 2)
            else:
                l0, l1 = rng.uniform(-1.5, 1.5, 2)
            t = esscher(model, l0)
            assert laplace(t, l1) * laplace(model, l0) == pytest.approx(
                laplace(model, l0 + l1), rel=1e-8)

    @pytest.mark.parametrize("h", ["one", "s", "exp"])
    def test_finite_path_change_of_measure(self, drifting_lattice, h):
        fun = {"one": lambda p: np.ones(len(p)), "s": lambda p: p[:, -1],
               "exp": lambda p: np.exp(-p[:, -1])}[h]
        for lam in (0.4, 1.1):
            t = esscher(drifting_lattice, lam)
            rho = laplace(drifting_lattice, lam)
            for n in (1, 5, 12):
                left = enumerate_paths(drifting_lattice, n, fun)
                right = rho**n * enumerate_paths(t, n, lambda p: np.exp(-lam * p[:, -1]) * fun(p))
                assert abs(left - right) <= 1e-10 * max(1.0, abs(left))


class TestRegime:
    def test_osc_interior(self):
        assert regime_classify(Gaussian(-1.0, 1.0), FSpec(1, 2, 1)).tag is RegimeTag.OSC_INTERIOR

    def test_osc_lambda_zero(self, symmetric):
        assert regime_classify(symmetric, FSpec()).tag is RegimeTag.OSC_LAMBDA_ZERO

    def test_heavy_drift(self, pareto):
        assert regime_classify(pareto, FSpec()).tag is RegimeTag.DRIFT_LAMBDA_ZERO_HEAVY

    def test_drift_at_theta(self, gauss_drift):
        assert regime_classify(gauss_drift, FSpec()).tag is RegimeTag.DRIFT_LAMBDA_EQ_THETA

    def test_osc_at_theta(self):
        m = Lattice(1.0, (-1, 1), (0.75, 0.25))
        tag = regime_classify(m, FSpec(1.0, math.log(3.0) / 2, 1.0)).tag
        assert tag is RegimeTag.OSC_LAMBDA_EQ_THETA

    def test_interior_heavy(self):
        m = ExpTilted(ShiftedPareto(3.0, 1.0, -2.0), -0.5)
        assert regime_classify(m, FSpec()).tag is RegimeTag.DRIFT_INTERIOR_HEAVY

    def test_positive_drift(self):
        assert regime_classify(Gaussian(0.5, 1.0), FSpec()).tag is RegimeTag.DRIFTS_TO_INFINITY

    def test_reflected_pareto_is_drift_at_theta(self):
        m = Reflected(ShiftedPareto(3.0, 1.0, 0.2))
        reg = regime_classify(m, FSpec())
        assert reg.tag is RegimeTag.DRIFT_LAMBDA_EQ_THETA
        assert reg.report.rho_factor == pytest.approx(laplace(m, 1.0))

    def test_unsupported_has_reason(self):
        # the heavy-tail flag belongs to the variant: an untilted wrapper does not carry it
        reg = regime_classify(ExpTilted(ShiftedPareto(3.0, 1.0, -2.0), 0.0), FSpec())
        assert reg.tag is RegimeTag.UNSUPPORTED and reg.reason

    def test_tags_are_stable_strings(self):
        assert {t.value for t in RegimeTag} == {
            "Osc_LambdaZero", "Osc_Interior", "Osc_LambdaEqTheta", "Drift_LambdaEqTheta",
            "Drift_LambdaZero_HeavyTail", "Drift_Interior_HeavyTail", "DriftsToInfinity",
            "Unsupported"}

