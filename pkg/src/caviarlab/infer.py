"""Wald tests, parameter reports, exceedance rates and DQ tests."""

import math

import numpy as np

from .errors import SingularMatrixError
from .numkit import invert, std_normal_cdf

STAR_LEVEL = 0.05


class WaldResult:
    """A Wald statistic with its chi-square reference distribution."""

    def __init__(self, statistic, dof, p_value, R, gamma):
        self.statistic = statistic
        self.dof = dof
        self.p_value = p_value
        self.R = R
        self.gamma = gamma


class DqResult:
    """A dynamic-quantile test outcome."""

    def __init__(self, statistic, dof, p_value, mode, instruments_desc):
        self.statistic = statistic
        self.dof = dof
        self.p_value = p_value
        self.mode = mode
        self.instruments_desc = instruments_desc


def chi2_sf(x, dof):
    """Upper tail of the chi-square distribution, accurate to ~1e-12.

    Uses the closed Poisson sum for even degrees of freedom and the
    erfc-seeded recurrence Q(a+1, s) = Q(a, s) + s^a e^-s / Gamma(a+1)
    for odd ones.
    """
    if x < 0.0:
        raise ValueError("statistic must be nonnegative")
    if dof < 1 or int(dof) != dof:
        raise ValueError("degrees of freedom must be a positive integer")
    s = 0.5 * x
    if s == 0.0:
        return 1.0
    if dof % 2 == 0:
        term = math.exp(-s)
        total = term
        for k in range(1, dof // 2):
            term *= s / k
            total += term
        return min(total, 1.0)
    q = math.erfc(math.sqrt(s))
    term = 2.0 * math.exp(-s) * math.sqrt(s) / math.sqrt(math.pi)
    a = 0.5
    for _ in range((dof - 1) // 2):
        q += term
        a += 1.0
        term *= s / a
    return min(q, 1.0)


def wald(beta_hat, sandwich, R, gamma, T):
    """Wald statistic T (R b - g)' [R cov R']^-1 (R b - g).

    cov is the sandwich variance of sqrt(T)(b - beta0); the statistic
    is referred to chi-square with rows(R) degrees of freedom.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    beta_hat = np.asarray(beta_hat, dtype=float)
    if R.shape[1] != beta_hat.size or R.shape[0] != gamma.size:
        raise ValueError("restriction dimensions do not agree")
    diff = R @ beta_hat - gamma
    bracket = R @ sandwich.cov @ R.T
    try:
        binv = invert(bracket)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"restricted covariance bracket is singular: {exc}") from exc
    stat = float(T * diff @ binv @ diff)
    stat = max(stat, 0.0)
    dof = R.shape[0]
    return WaldResult(stat, dof, chi2_sf(stat, dof), R, gamma)


def param_report(fit, sandwich, T):
    """Per-parameter estimates, standard errors and two-sided p-values.

    s.e._k = sqrt(cov_kk / T); p_k = 2 (1 - Phi(|b_k| / s.e._k)); a
    star marks significance at the 5% level.
    """
    var = np.diag(sandwich.cov)
    if np.any(var <= 0.0):
        raise ValueError("sandwich covariance has a nonpositive diagonal")
    rows = []
    for k, b in enumerate(fit.beta):
        se = math.sqrt(var[k] / T)
        p = 2.0 * (1.0 - float(std_normal_cdf(abs(b) / se)))
        rows.append({"param": f"beta{k}", "estimate": float(b), "se": se,
                     "p_value": p, "significant": p < STAR_LEVEL})
    return rows


def exceedance_rate(y, f_hat):
    """Percentage of observations strictly below the fitted quantile."""
    y = np.asarray(y, dtype=float)
    f_hat = np.asarray(f_hat, dtype=float)
    if y.size == 0 or y.shape != f_hat.shape:
        raise ValueError("windows must be nonempty and equal length")
    return 100.0 * float(np.mean(y < f_hat))


def hit_sequence(y, f_hat, tau):
    """Centered violation indicators 1{y <= f} - tau (weak inequality)."""
    return (np.asarray(y, dtype=float) <= np.asarray(f_hat, dtype=float)) - tau


def dq_instruments(hits, f_hat, n_lags=4):
    """Default instrument matrix: constant, lagged hits, fitted quantile.

    Returns (trimmed hits, X) with the first n_lags observations
    dropped so the lags are within sample.
    """
    hits = np.asarray(hits, dtype=float)
    f_hat = np.asarray(f_hat, dtype=float)
    T = hits.size
    if T <= n_lags + 2:
        raise ValueError("sample too short for the lag structure")
    cols = [np.ones(T - n_lags)]
    for lag in range(1, n_lags + 1):
        cols.append(hits[n_lags - lag: T - lag])
    cols.append(f_hat[n_lags:])
    return hits[n_lags:], np.column_stack(cols)


def dq_test(hits, instruments, tau, mode="in_sample"):
    """Dynamic quantile test: Hit'X (X'X)^-1 X'Hit / (tau (1 - tau)).

    Degrees of freedom equal the instrument count; detects violation
    clustering and level errors jointly.
    """
    hits = np.asarray(hits, dtype=float)
    X = np.atleast_2d(np.asarray(instruments, dtype=float))
    if X.shape[0] != hits.size:
        raise ValueError("instrument rows must align with hits")
    xtx = X.T @ X
    try:
        xtx_inv = invert(xtx)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"X'X is singular: {exc}") from exc
    xh = X.T @ hits
    stat = float(xh @ xtx_inv @ xh / (tau * (1.0 - tau)))
    stat = max(stat, 0.0)
    dof = X.shape[1]
    return DqResult(stat, dof, chi2_sf(stat, dof), mode,
                    f"{dof} instruments")
