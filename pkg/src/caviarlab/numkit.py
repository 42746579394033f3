"""Special functions and small dense linear algebra used throughout.

Everything here is a pure function; matrices are plain square numpy
arrays (dimensions in this package never exceed a handful).
"""

import math

import numpy as np
from numba import vectorize

from .errors import SingularMatrixError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

EULER_GAMMA = 0.57721566490153286060651209008240243


@vectorize(["float64(float64)"], cache=True)
def _erfc(x):
    return math.erfc(x)


def std_normal_cdf(x):
    """Standard normal CDF, accurate to machine precision via erfc."""
    return 0.5 * _erfc(-np.asarray(x, dtype=float) / _SQRT2)


def std_normal_pdf(x):
    """Standard normal density exp(-x^2/2)/sqrt(2*pi)."""
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


# Acklam's rational approximation for the inverse normal CDF; one Newton
# step against the erfc-based CDF polishes it to ~1e-15.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def std_normal_quantile(p):
    """Inverse standard normal CDF.

    Raises ValueError outside the open unit interval.
    """
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("probability must lie strictly inside (0, 1)")
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    x = np.empty_like(p)

    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = q * num / den
    def _tail(q):
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den

    if np.any(lo):
        x[lo] = _tail(np.sqrt(-2.0 * np.log(p[lo])))
    if np.any(hi):
        x[hi] = -_tail(np.sqrt(-2.0 * np.log(1.0 - p[hi])))

    # Newton polish: x <- x - (Phi(x) - p)/phi(x)
    err = std_normal_cdf(x) - p
    x = x - err / std_normal_pdf(x)
    return float(x[0]) if scalar else x


@vectorize(["float64(float64)"], cache=True)
def _e1(s):
    # power series below 1, continued fraction (modified Lentz) above
    if s != s or s <= 0.0:
        return math.nan
    if s <= 1.0:
        total = -EULER_GAMMA - math.log(s)
        term = 1.0
        for k in range(1, 60):
            term *= -s / k
            add = -term / k
            total += add
            if abs(add) < 1e-18 * abs(total):
                break
        return total
    tiny = 1e-300
    b = s + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for k in range(1, 200):
        a = -k * k
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h * math.exp(-s)


def exp_integral_e1(s):
    """Exponential integral E1(s) = int_s^inf exp(-x)/x dx for s > 0."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0.0):
        raise ValueError("E1 is only defined for positive arguments")
    out = _e1(s)
    return float(out) if s.ndim == 0 else out


def invert(m):
    """Invert a small square matrix by Gauss-Jordan with partial pivoting.

    Raises SingularMatrixError when a pivot falls below
    1e-12 * max|entry| of the input.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix")
    n = m.shape[0]
    threshold = 1e-12 * max(np.abs(m).max(), 1e-300)
    a = m.copy()
    inv = np.eye(n)
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[pivot_row, col]) < threshold:
            raise SingularMatrixError(f"pivot below threshold at column {col}")
        if pivot_row != col:
            a[[col, pivot_row]] = a[[pivot_row, col]]
            inv[[col, pivot_row]] = inv[[pivot_row, col]]
        pivot = a[col, col]
        a[col] /= pivot
        inv[col] /= pivot
        for row in range(n):
            if row != col and a[row, col] != 0.0:
                factor = a[row, col]
                a[row] -= factor * a[col]
                inv[row] -= factor * inv[col]
    return inv


def empirical_quantile(xs, tau):
    """Order statistic at 1-based index ceil(tau * n) of the sorted sample."""
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("empty sample")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    idx = int(math.ceil(tau * xs.size)) - 1
    return float(np.sort(xs)[max(idx, 0)])


def median_abs_deviation(xs, center="median", scale=1.0):
    """MAD of a sample; raw (unscaled) about the sample median by default.

    `center="zero"` takes deviations about zero instead; `scale`
    multiplies the result (e.g. 1.4826 for normal consistency).
    """
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("empty sample")
    if center == "median":
        c = empirical_quantile(xs, 0.5)
    elif center == "zero":
        c = 0.0
    else:
        raise ValueError(f"unknown center {center!r}")
    return scale * empirical_quantile(np.abs(xs - c), 0.5)
