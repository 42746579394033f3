"""CAViaR model families: fitted quantile paths, gradients, objective.

A model is a recursion for the conditional tau-quantile f_t of y_t.
Parameter vectors are laid out [beta_0, quantile-lag coefs, regressor
coefs].  Pre-sample observations are zero and pre-sample quantiles
equal the fixed initial condition f0.
"""

import numpy as np

from . import _kernels
from .errors import (NegativeRadicandError, NonFinitePathError,
                     UnsupportedFamilyError, ZeroQuantileError)

BASIS_CODES = {"y": 1, "abs": 2, "pos": 3, "neg": 4, "sqrt_pos": 5}


class ModelSpec:
    """A CAViaR family with its lag structure and parameter layout.

    Use the constructors `sav`, `asym_slope`, `igarch`, `adaptive` or
    `generic`.  `kind` selects the jitted recursion; `basis_codes` and
    `basis_lags` describe the regressor terms of linear families.
    """

    def __init__(self, family, tau, kind, q, basis, lags, gslope=0.0):
        if not 0.0 < tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        self.family = family
        self.tau = float(tau)
        self.kind = kind
        self.q = int(q)
        # for linear families, basis[0]/lags[0] describe the term the
        # leading coefficient multiplies (0 means a plain constant)
        self.basis_codes = np.asarray(basis, dtype=np.int64)
        self.basis_lags = np.asarray(lags, dtype=np.int64)
        self.gslope = float(gslope)
        if kind == _kernels.KIND_LINEAR:
            self.param_dim = self.q + self.basis_codes.size
        elif kind == _kernels.KIND_IGARCH:
            self.param_dim = 3
        else:
            self.param_dim = 1

    @classmethod
    def sav(cls, tau):
        """Symmetric absolute value: f_t = b0 + b1 f_{t-1} + b2 |y_{t-1}|."""
        return cls("sav", tau, _kernels.KIND_LINEAR, 1, [0, 2], [0, 1])

    @classmethod
    def asym_slope(cls, tau):
        """Asymmetric slope: f_t = b0 + b1 f_{t-1} + b2 (y_{t-1})+ + b3 (y_{t-1})-."""
        return cls("as", tau, _kernels.KIND_LINEAR, 1, [0, 3, 4], [0, 1, 1])

    @classmethod
    def igarch(cls, tau):
        """Indirect GARCH(1,1): f_t = -sqrt(b0 + b1 f_{t-1}^2 + b2 y_{t-1}^2)."""
        return cls("igarch", tau, _kernels.KIND_IGARCH, 0, [], [])

    @classmethod
    def adaptive(cls, tau, gslope=10.0):
        """Adaptive: f_t = f_{t-1} + b1 ([1 + exp(G (y_{t-1} - f_{t-1}))]^{-1} - tau)."""
        if gslope <= 0.0:
            raise ValueError("logistic slope must be positive")
        return cls("adaptive", tau, _kernels.KIND_ADAPTIVE, 0, [], [],
                   gslope=gslope)

    @classmethod
    def generic(cls, tau, q, terms, lead=None):
        """Linear family with q quantile lags and regressor terms.

        `terms` is a sequence of (basis, lag) pairs with basis one of
        "y", "abs", "pos", "neg", "sqrt_pos" applied to y_{t-lag}.
        `lead` optionally replaces the constant the leading coefficient
        multiplies by such a (basis, lag) pair.
        """
        codes = [0 if lead is None else BASIS_CODES[lead[0]]]
        lags = [0 if lead is None else int(lead[1])]
        if lead is not None and lags[0] < 1:
            raise ValueError("the leading-term lag must be >= 1")
        codes += [BASIS_CODES[b] for b, _ in terms]
        lags += [int(l) for _, l in terms]
        if any(l < 1 for l in lags[1:]):
            raise ValueError("regressor lags must be >= 1")
        return cls("generic", tau, _kernels.KIND_LINEAR, q, codes, lags)


class QuantilePath:
    """A fitted conditional-quantile path with its fixed initial value."""

    def __init__(self, f, f0, grads=None):
        self.f = f
        self.f0 = f0
        self.grads = grads


def _check_beta(spec, beta):
    beta = np.ascontiguousarray(beta, dtype=float)
    if beta.shape != (spec.param_dim,):
        raise ValueError(f"expected {spec.param_dim} parameters, got {beta.shape}")
    if not np.all(np.isfinite(beta)):
        raise ValueError("parameters must be finite")
    return beta


def _raise_status(status):
    if status == 1:
        raise NonFinitePathError("quantile path overflowed")
    if status == 2:
        raise NegativeRadicandError("negative radicand in the square-root recursion")
    if status == 3:
        raise ZeroQuantileError("gradient undefined where the fitted quantile is zero")


def quantile_path(spec, beta, y, f0):
    """Evaluate the family recursion over the sample, starting from f0."""
    beta = _check_beta(spec, beta)
    y = np.ascontiguousarray(y, dtype=float)
    if y.size < 1:
        raise ValueError("need at least one observation")
    if spec.kind == _kernels.KIND_LINEAR:
        f, status = _kernels.linear_path(beta, y, f0, spec.q,
                                         spec.basis_codes, spec.basis_lags)
    elif spec.kind == _kernels.KIND_IGARCH:
        f, status = _kernels.igarch_path(beta, y, f0)
    else:
        f, status = _kernels.adaptive_path(beta, y, f0, spec.gslope, spec.tau)
    _raise_status(status)
    return QuantilePath(f, f0)


def gradient_path(spec, beta, y, f0):
    """Gradient of f_t in each parameter, as a T x param_dim array.

    The initial condition is held fixed, so pre-sample gradients are
    zero and the recursion accumulates only through the sample.
    """
    beta = _check_beta(spec, beta)
    y = np.ascontiguousarray(y, dtype=float)
    if y.size < 1:
        raise ValueError("need at least one observation")
    if spec.kind == _kernels.KIND_LINEAR:
        _, g, status = _kernels.linear_grad(beta, y, f0, spec.q,
                                            spec.basis_codes, spec.basis_lags)
    elif spec.kind == _kernels.KIND_IGARCH:
        _, g, status = _kernels.igarch_grad(beta, y, f0)
    else:
        _, g, status = _kernels.adaptive_grad(beta, y, f0, spec.gslope, spec.tau)
    _raise_status(status)
    return g


def hessian_path(spec, beta, y, f0):
    """Second derivatives of f_t, a T x p x p array (diagnostic only).

    Defined for the one-quantile-lag linear families (sav, as) where
    the only curvature enters through the f_{t-1} coefficient.
    """
    if spec.family not in ("sav", "as"):
        raise UnsupportedFamilyError(
            "hessian_path covers the sav and as families only")
    beta = _check_beta(spec, beta)
    g = gradient_path(spec, beta, y, f0)
    T, p = g.shape
    b1 = beta[1]
    h = np.zeros((T, p, p))
    for t in range(T):
        if t >= 1:
            h[t] = b1 * h[t - 1]
            h[t, 1, :] += g[t - 1]
            h[t, :, 1] += g[t - 1]
    return h


def check_loss(tau, residual):
    """Asymmetric absolute loss x(tau - 1{x<0}) whose minimizer is the tau-quantile."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie in (0, 1)")
    x = np.asarray(residual, dtype=float)
    out = x * (tau - (x < 0.0))
    return float(out) if out.ndim == 0 else out


def objective(spec, beta, y, f0):
    """Sum of check losses along the fitted path; +inf on invalid paths."""
    beta = _check_beta(spec, beta)
    y = np.ascontiguousarray(y, dtype=float)
    return _kernels.objective_value(spec.kind, beta, y, f0, spec.tau,
                                    spec.q, spec.basis_codes,
                                    spec.basis_lags, spec.gslope)
