"""Paired two-sided t-test with a self-contained Student-t CDF.

The p-value comes from the regularized incomplete beta function evaluated
by the modified Lentz continued fraction, so no statistics package is
needed and the implementation can be pinned against a Monte-Carlo oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

SIGNIFICANCE_LEVEL = 0.05

_MAX_ITER = 300
_EPS = 3e-16
_FPMIN = 1e-300


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    warnings.warn("incomplete beta continued fraction did not converge")
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    """P(T <= t) for Student's t with df degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    tail = 0.5 * betainc_regularized(df / 2.0, 0.5, df / (df + t * t))
    return 1.0 - tail if t > 0 else tail


def student_t_two_sided_p(t: float, df: float) -> float:
    """Two-sided p-value, i.e. P(|T| >= |t|)."""
    if not math.isfinite(t):
        return 0.0
    if t == 0.0:
        return 1.0
    return betainc_regularized(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int
    verdict: str  # significant-improvement | significant-degradation | not-significant

    def to_dict(self) -> dict:
        return {"t": self.t, "p": self.p, "df": self.df, "verdict": self.verdict}


def paired_ttest(
    a: list[float] | np.ndarray,
    b: list[float] | np.ndarray,
    metric_direction: str = "higher_better",
    alpha: float = SIGNIFICANCE_LEVEL,
) -> TTestResult:
    """Paired two-sided t-test on d = a - b.

    The verdict says whether sample ``a`` is significantly better than
    ``b`` under the metric's direction: for higher-better metrics, p <=
    alpha with t > 0 is an improvement; lower-better metrics flip the sign
    test.  Zero-variance nonzero differences report the p = 0 sentinel.
    """
    if metric_direction not in ("higher_better", "lower_better"):
        raise ValueError(f"unknown metric_direction {metric_direction!r}")
    a_arr = np.asarray(a, dtype=np.float64)
    b_arr = np.asarray(b, dtype=np.float64)
    if a_arr.shape != b_arr.shape:
        raise ValueError(f"length mismatch: {a_arr.shape} vs {b_arr.shape}")
    n = a_arr.size
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    d = a_arr - b_arr
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, df=df, verdict="not-significant")
        warnings.warn("zero-variance differences; reporting p = 0 sentinel")
        t_stat = math.inf if mean > 0 else -math.inf
        p = 0.0
    else:
        t_stat = mean / (sd / math.sqrt(n))
        p = student_t_two_sided_p(t_stat, df)
    if p > alpha:
        verdict = "not-significant"
    else:
        a_is_better = t_stat > 0 if metric_direction == "higher_better" else t_stat < 0
        verdict = "significant-improvement" if a_is_better else "significant-degradation"
    return TTestResult(t=t_stat, p=p, df=df, verdict=verdict)
