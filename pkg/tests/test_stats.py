"""Paired t-test and the self-contained Student-t CDF."""

import math

import numpy as np
import pytest

from flimsr.stats import (
    betainc_regularized,
    paired_ttest,
    student_t_cdf,
    student_t_two_sided_p,
)


class TestIncompleteBeta:
    def test_endpoints(self):
        assert betainc_regularized(2.0, 3.0, 0.0) == 0.0
        assert betainc_regularized(2.0, 3.0, 1.0) == 1.0

    def test_symmetric_half(self):
        # I_{1/2}(a, a) = 1/2 for any a
        for a in (0.5, 1.0, 2.5, 7.0):
            assert betainc_regularized(a, a, 0.5) == pytest.approx(0.5, abs=1e-12)

    def test_uniform_case(self):
        # I_x(1, 1) = x
        for x in (0.1, 0.35, 0.9):
            assert betainc_regularized(1.0, 1.0, x) == pytest.approx(x, abs=1e-12)

    def test_closed_form_a1(self):
        # I_x(1, b) = 1 - (1-x)^b
        for x, b in ((0.2, 3.0), (0.7, 5.5)):
            assert betainc_regularized(1.0, b, x) == pytest.approx(
                1 - (1 - x) ** b, abs=1e-12
            )

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            betainc_regularized(0.0, 1.0, 0.5)


class TestStudentCdf:
    def test_median(self):
        for df in (1, 4, 30):
            assert student_t_cdf(0.0, df) == 0.5

    def test_symmetry(self):
        for df in (2, 5, 17):
            for t in (0.3, 1.1, 2.7):
                assert student_t_cdf(t, df) + student_t_cdf(-t, df) == pytest.approx(
                    1.0, abs=1e-12
                )

    def test_df1_closed_form(self):
        # Cauchy: CDF = 1/2 + arctan(t)/pi
        for t in (-2.0, -0.5, 0.7, 3.0):
            assert student_t_cdf(t, 1) == pytest.approx(
                0.5 + math.atan(t) / math.pi, abs=1e-12
            )

    def test_monte_carlo_agreement(self):
        rng = np.random.default_rng(42)
        probes = (-3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)
        for df in (4, 30, 127):
            z = rng.standard_normal(100000)
            v = rng.chisquare(df, 100000)
            samples = z / np.sqrt(v / df)
            for t in probes:
                mc = float((samples <= t).mean())
                assert abs(mc - student_t_cdf(t, df)) < 0.005

    def test_two_sided_p(self):
        assert student_t_two_sided_p(0.0, 4) == 1.0
        assert student_t_two_sided_p(math.inf, 4) == 0.0
        p = student_t_two_sided_p(2.0, 10)
        assert p == pytest.approx(2 * (1 - student_t_cdf(2.0, 10)), abs=1e-12)


class TestPairedTtest:
    def test_derived_fixture(self):
        r = paired_ttest([1, 2, 3, 4, 5], [2, 2, 4, 4, 7])
        assert r.df == 4
        assert r.t == pytest.approx(-2.1381, abs=1e-2)
        assert r.p == pytest.approx(0.0993, abs=5e-3)
        assert r.verdict == "not-significant"

    def test_zero_mean_differences(self):
        r = paired_ttest([1, -1, 1, -1], [0, 0, 0, 0])
        assert r.t == 0.0 and r.p == 1.0
        assert r.verdict == "not-significant"

    def test_self_comparison(self):
        a = [0.3, 0.5, 0.9, 0.1]
        r = paired_ttest(a, a)
        assert r.t == 0.0 and r.p == 1.0 and r.verdict == "not-significant"

    def test_zero_variance_sentinel(self):
        with pytest.warns(UserWarning, match="sentinel"):
            r = paired_ttest([2, 3, 4], [1, 2, 3])
        assert r.p == 0.0
        assert r.t == math.inf
        assert r.verdict == "significant-improvement"

    def test_direction_flip_for_lower_better(self):
        a = [1.0, 1.1, 0.9, 1.2, 1.0, 1.15, 0.95, 1.05]
        b = [2.0, 2.2, 1.9, 2.3, 2.1, 2.2, 1.8, 2.0]
        higher = paired_ttest(a, b, "higher_better")
        lower = paired_ttest(a, b, "lower_better")
        assert higher.verdict == "significant-degradation"
        assert lower.verdict == "significant-improvement"
        assert higher.t == lower.t and higher.p == lower.p

    def test_errors(self):
        with pytest.raises(ValueError):
            paired_ttest([1.0], [2.0])
        with pytest.raises(ValueError):
            paired_ttest([1, 2], [1, 2, 3])
        with pytest.raises(ValueError):
            paired_ttest([1, 2], [1, 2], metric_direction="sideways")
