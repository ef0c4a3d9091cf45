"""Correlation and regression with significance tests, from first principles.

Pearson r, Spearman rho, and the OLS slope test are implemented directly
from their closed forms; p-values go through Student's t survival
function, computed via the regularized incomplete beta function
(continued fraction, 1e-12 convergence). Spearman p-values for n <= 10
are exact: the full permutation distribution of the rank dot product is
enumerated (see ``_kernels``). No statistics library is used at runtime;
the test suite checks these routines against an independent oracle.

All tests default to two-sided. ``alternative`` accepts "two-sided",
"greater" (statistic > 0), or "less"; the choice is recorded in the
result so reports always show which test was run.

Constant input makes correlation undefined; that is an error here, never
a silent NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import ValidationError

_ALTERNATIVES = ("two-sided", "greater", "less")

# slack when comparing permuted statistics against the observed one
_PERM_EPS = 1e-12

EXACT_PERMUTATION_MAX_N = 10


@dataclass(frozen=True)
class StatResult:
    statistic: float
    p_value: float
    n: int
    method: str  # "pearson" | "spearman-exact" | "spearman-t" | "ols-slope"
    alternative: str = "two-sided"

    def to_json_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n": self.n,
            "method": self.method,
            "alternative": self.alternative,
        }


def _validate_pair(x, y, min_n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    ax = np.asarray(x, dtype=np.float64)
    ay = np.asarray(y, dtype=np.float64)
    if ax.ndim != 1 or ay.ndim != 1:
        raise ValidationError("bad-shape", "inputs must be one-dimensional")
    if ax.size != ay.size:
        raise ValidationError("length-mismatch", f"lengths differ: {ax.size} vs {ay.size}")
    if ax.size < min_n:
        raise ValidationError("too-few-points", f"need at least {min_n} points, got {ax.size}")
    if not (np.all(np.isfinite(ax)) and np.all(np.isfinite(ay))):
        raise ValidationError("non-finite-input", "inputs must be finite")
    return ax, ay


def _check_alternative(alternative: str) -> str:
    if alternative not in _ALTERNATIVES:
        raise ValidationError(
            "bad-alternative", f"alternative must be one of {_ALTERNATIVES}, got {alternative!r}"
        )
    return alternative


def _p_from_t(t: float, df: int, alternative: str) -> float:
    if alternative == "two-sided":
        return min(1.0, 2.0 * student_t_sf(abs(t), df))
    if alternative == "greater":
        return student_t_sf(t, df)
    return 1.0 - student_t_sf(t, df)


def _t_from_r(r: float, n: int) -> float:
    denom = 1.0 - r * r
    if denom <= 0.0:
        return math.inf if r > 0 else -math.inf
    return r * math.sqrt((n - 2) / denom)


def pearson(x, y, alternative: str = "two-sided") -> StatResult:
    """Pearson correlation with a t-test p-value (n-2 degrees of freedom)."""
    alternative = _check_alternative(alternative)
    ax, ay = _validate_pair(x, y)
    dx = ax - ax.mean()
    dy = ay - ay.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValidationError("constant-input", "correlation undefined for constant input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    p = _p_from_t(_t_from_r(r, ax.size), ax.size - 2, alternative)
    return StatResult(statistic=r, p_value=p, n=int(ax.size), method="pearson", alternative=alternative)


def _ranks(a: np.ndarray) -> np.ndarray:
    """Average ranks, 1-based; ties share the mean of their rank block."""
    order = np.argsort(a, kind="stable")
    ranks = np.empty(a.size, dtype=np.float64)
    sorted_a = a[order]
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y, alternative: str = "two-sided") -> StatResult:
    """Spearman correlation: Pearson over average ranks.

    For n <= 10 the p-value enumerates all n! rank permutations exactly;
    beyond that it falls back to the t approximation. The method tag says
    which was used.
    """
    alternative = _check_alternative(alternative)
    ax, ay = _validate_pair(x, y)
    rx = _ranks(ax)
    ry = _ranks(ay)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValidationError("constant-input", "correlation undefined for constant input")
    denom = math.sqrt(sxx * syy)
    rho = float(dx @ dy) / denom
    rho = max(-1.0, min(1.0, rho))
    n = int(ax.size)
    if n <= EXACT_PERMUTATION_MAX_N:
        center = n * float(rx.mean()) * float(ry.mean())
        if alternative == "two-sided":
            count = _kernels.perm_count(rx, ry, center, (abs(rho) - _PERM_EPS) * denom, 0)
        elif alternative == "greater":
            count = _kernels.perm_count(rx, ry, center, (rho - _PERM_EPS) * denom, 1)
        else:
            count = _kernels.perm_count(rx, ry, center, (rho + _PERM_EPS) * denom, 2)
        p = count / math.factorial(n)
        return StatResult(statistic=rho, p_value=p, n=n, method="spearman-exact", alternative=alternative)
    p = _p_from_t(_t_from_r(rho, n), n - 2, alternative)
    return StatResult(statistic=rho, p_value=p, n=n, method="spearman-t", alternative=alternative)


def linregress(x, y, alternative: str = "two-sided") -> tuple[float, float, float, StatResult]:
    """Ordinary least squares y = slope*x + intercept.

    Returns (slope, intercept, slope_p, StatResult). slope_p tests
    slope != 0 via t = slope / stderr with n-2 degrees of freedom, where
    stderr comes from the residual variance. A perfect fit gives p = 0
    (or p = 1 for an exactly constant y).
    """
    alternative = _check_alternative(alternative)
    ax, ay = _validate_pair(x, y)
    dx = ax - ax.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValidationError("constant-input", "regression undefined for constant x")
    slope = float(dx @ (ay - ay.mean())) / sxx
    intercept = float(ay.mean()) - slope * float(ax.mean())
    resid = ay - (slope * ax + intercept)
    rss = float(resid @ resid)
    n = int(ax.size)
    if rss == 0.0:
        t = 0.0 if slope == 0.0 else math.copysign(math.inf, slope)
    else:
        stderr = math.sqrt(rss / (n - 2) / sxx)
        t = slope / stderr
    p = _p_from_t(t, n - 2, alternative)
    result = StatResult(statistic=slope, p_value=p, n=n, method="ols-slope", alternative=alternative)
    return slope, intercept, p, result


def student_t_sf(t: float, df: int) -> float:
    """P(T > t) for Student's t with df degrees of freedom."""
    if df < 1:
        raise ValidationError("bad-df", f"degrees of freedom must be >= 1, got {df}")
    if math.isnan(t):
        raise ValidationError("non-finite-input", "t statistic is NaN")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    if t < 0:
        return 1.0 - student_t_sf(-t, df)
    x = df / (df + t * t)
    return 0.5 * _betainc(0.5 * df, 0.5, x)


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) by Lentz continued fraction."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def _betacf(a: float, b: float, x: float, tol: float = 1e-12, max_iter: int = 500) -> float:
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction failed to converge")
