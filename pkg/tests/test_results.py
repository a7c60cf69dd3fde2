"""The Estimate container."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from expwalk import Estimate


class TestFromSamples:
    def test_mean_and_stderr(self):
        est = Estimate.from_samples([1.0, 2.0, 3.0, 4.0], "t", tag=1)
        assert est.value == 2.5 and est.n_samples == 4
        assert est.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
        assert est.info == {"tag": 1}

    def test_single_sample(self):
        assert math.isinf(Estimate.from_samples([1.0], "t").stderr)

    def test_empty(self):
        with pytest.raises(ValueError):
            Estimate.from_samples([], "t")


class TestTransforms:
    def test_ci_95(self):
        lo, hi = Estimate(1.0, 0.1, 10, "t").ci()
        assert (hi - lo) / 2 == pytest.approx(0.196, abs=1e-3)

    def test_log_round_trip(self):
        est = Estimate(2.0, 0.2, 10, "t")
        back = est.log().linear()
        assert back.value == pytest.approx(2.0) and back.stderr == pytest.approx(0.2)
        assert est.log().stderr == pytest.approx(0.1)

    def test_log_of_nonpositive(self):
        with pytest.raises(ValueError):
            Estimate(0.0, 1.0, 10, "t").log()

    def test_scaled_linear(self):
        est = Estimate(2.0, 0.5, 10, "t").scaled(math.log(3.0))
        assert est.value == pytest.approx(6.0) and est.stderr == pytest.approx(1.5)

    def test_scaled_underflow_moves_to_log(self):
        est = Estimate(0.5, 0.05, 10, "t").scaled(-2000.0)
        assert est.log_domain
        assert est.value == pytest.approx(math.log(0.5) - 2000.0)
        assert est.stderr == pytest.approx(0.1)

    def test_scaled_log_domain(self):
        est = Estimate(-5.0, 0.1, 10, "t", log_domain=True).scaled(-3.0)
        assert est.value == -8.0 and est.log_domain


class TestMerge:
    @settings(max_examples=50, deadline=None)
    @given(a=st.lists(st.floats(-10, 10), min_size=2, max_size=30),
           b=st.lists(st.floats(-10, 10), min_size=2, max_size=30))
    def test_pooled_equals_concatenation(self, a, b):
        ea, eb = Estimate.from_samples(a, "t"), Estimate.from_samples(b, "t")
        both = Estimate.from_samples(a + b, "t")
        m = ea.merge(eb)
        assert m.value == pytest.approx(both.value, abs=1e-9)
        assert m.stderr == pytest.approx(both.stderr, rel=1e-6, abs=1e-9)
        assert m.n_samples == len(a) + len(b)

    def test_merge_rejects_log_domain(self):
        with pytest.raises(ValueError):
            Estimate(0.0, 1.0, 2, "t", log_domain=True).merge(Estimate(0.0, 1.0, 2, "t"))


class TestAgreement:
    def test_scalar(self):
        est = Estimate(1.0, 0.1, 10, "t")
        assert est.agrees_with(1.29) and not est.agrees_with(1.31)

    def test_two_estimates(self):
        a, b = Estimate(1.0, 0.3, 10, "t"), Estimate(2.0, 0.4, 10, "t")
        assert a.agrees_with(b, k=2.0) and not a.agrees_with(b, k=1.9)
