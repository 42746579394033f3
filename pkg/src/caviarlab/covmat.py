"""Sandwich covariance components for quantile-regression inference.

The asymptotic variance of sqrt(T)(beta_hat - beta0) is D^-1 A D^-1
with A the tau(1-tau)-weighted gradient outer product and D the
density-weighted one.  The conditional density at the quantile, h_t,
is estimated here by four methods (kernel window, finite difference of
quantile fits, adaptive random bandwidth by simulation or in closed
form) plus oracle variants for the Monte Carlo harness.
"""

import json
import math

import numpy as np

from . import estimate, model
from .errors import (BandwidthDomainError, DegenerateGradientError,
                     SingularMatrixError)
from .numkit import (exp_integral_e1, invert, median_abs_deviation,
                     std_normal_pdf, std_normal_quantile)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ArbConfig:
    """Settings for the adaptive-random-bandwidth estimators.

    mode "sim" draws n_draws Gaussian parameter perturbations; mode
    "analytic" uses the exponential-integral closed form.  V_d starts
    at vd_initial (identity by default) and is refreshed to the current
    sandwich vd_updates times after the initial pass.
    """

    def __init__(self, n_draws=10_000, vd_initial=None, vd_updates=2,
                 seed=0, mode="sim"):
        if mode not in ("sim", "analytic"):
            raise ValueError("mode must be 'sim' or 'analytic'")
        self.n_draws = int(n_draws)
        self.vd_initial = vd_initial
        self.vd_updates = int(vd_updates)
        self.seed = int(seed)
        self.mode = mode


class SandwichEstimate:
    """A, D, the h path used, and the implied covariance D^-1 A D^-1."""

    def __init__(self, a_hat, d_hat, method, h_hat_path, cov, vd_final=None,
                 vd_history=None, extra=None):
        self.a_hat = a_hat
        self.d_hat = d_hat
        self.method = method
        self.h_hat_path = h_hat_path
        self.cov = cov
        self.vd_final = vd_final
        self.vd_history = vd_history or []
        self.extra = extra or {}

    def to_dict(self):
        out = {
            "method": self.method,
            "a_hat": self.a_hat.tolist(),
            "d_hat": self.d_hat.tolist(),
            "cov": self.cov.tolist(),
            "h_hat_path": np.asarray(self.h_hat_path).tolist(),
        }
        if self.vd_final is not None:
            out["vd_final"] = self.vd_final.tolist()
        if self.vd_history:
            out["vd_history"] = [v.tolist() for v in self.vd_history]
        for k, v in self.extra.items():
            out[k] = v
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def a_hat(grads, tau):
    """tau(1-tau)/T times the gradient outer-product sum."""
    g = np.asarray(grads, dtype=float)
    return tau * (1.0 - tau) / g.shape[0] * (g.T @ g)


def d_hat(h_hat_path, grads):
    """Density-weighted gradient outer-product average."""
    g = np.asarray(grads, dtype=float)
    h = np.asarray(h_hat_path, dtype=float)
    if h.shape[0] != g.shape[0]:
        raise ValueError("h path and gradients disagree in length")
    return (g * h[:, None]).T @ g / g.shape[0]


def zeroed_indices(residuals, n_zero):
    """Indices of the n_zero smallest absolute residuals (ties by time).

    These positions get h = 0 in both adaptive-random-bandwidth
    variants: a simplex search over n_zero parameters terminates with
    that many residuals at machine zero, and 1/x blows up there.
    """
    res = np.asarray(residuals, dtype=float)
    order = np.lexsort((np.arange(res.size), np.abs(res)))
    return order[:n_zero]


def kernel_bandwidth(residuals, tau, mad_center="median"):
    """The deterministic bandwidth c_T of the indicator-window estimator."""
    res = np.asarray(residuals, dtype=float)
    T = res.size
    if T < 2:
        raise ValueError("need at least two residuals")
    z975 = std_normal_quantile(0.975)
    zt = std_normal_quantile(tau)
    m_t = T ** (-1.0 / 3.0) * z975 ** (2.0 / 3.0) * (
        1.5 * std_normal_pdf(zt) ** 2 / (2.0 * zt * zt + 1.0)) ** (1.0 / 3.0)
    if not (0.0 < tau - m_t and tau + m_t < 1.0):
        raise BandwidthDomainError(
            f"tau +- m_T leaves (0, 1): tau={tau}, m_T={m_t}")
    k_t = median_abs_deviation(res, center=mad_center)
    return k_t * (std_normal_quantile(tau + m_t) - std_normal_quantile(tau - m_t))


def h_hat_kernel(residuals, tau, mad_center="median"):
    """Indicator-window density estimate; returns (h path, bandwidth)."""
    res = np.asarray(residuals, dtype=float)
    c_t = kernel_bandwidth(res, tau, mad_center=mad_center)
    h = (np.abs(res) < c_t) / (2.0 * c_t)
    return h, c_t


def h_hat_fd(spec, y, delta_tau=None, est_cfg=None):
    """Finite-difference density estimate from two neighboring-tau fits.

    Fits the model at tau + and - delta_tau (default 10/T) and forms
    h_t = 2 delta_tau / (f_plus - f_minus); nonpositive denominators
    (quantile crossings) yield h_t = 0.  Returns (h path, crossing
    count, fit_plus, fit_minus).
    """
    y = np.asarray(y, dtype=float)
    T = y.size
    if delta_tau is None:
        delta_tau = 10.0 / T
    tau = spec.tau
    if not (0.0 < tau - delta_tau and tau + delta_tau < 1.0):
        raise ValueError("tau +- delta_tau must stay inside (0, 1)")
    if est_cfg is None:
        est_cfg = estimate.EstimateConfig()
    spec_p = model.ModelSpec(spec.family, tau + delta_tau, spec.kind, spec.q,
                             spec.basis_codes, spec.basis_lags, spec.gslope)
    spec_m = model.ModelSpec(spec.family, tau - delta_tau, spec.kind, spec.q,
                             spec.basis_codes, spec.basis_lags, spec.gslope)
    fit_p = estimate.fit(spec_p, y, est_cfg)
    fit_m = estimate.fit(spec_m, y, est_cfg)
    denom = fit_p.path.f - fit_m.path.f
    good = denom > 0.0
    h = np.where(good, 2.0 * delta_tau / np.where(good, denom, 1.0), 0.0)
    crossings = int(np.count_nonzero(~good))
    return h, crossings, fit_p, fit_m


def h_hat_arb_sim(residuals, grads, vd, n_draws, seed, chunk=64):
    """Adaptive-random-bandwidth density estimate by simulation.

    One shared set of n_draws perturbations delta_i = chol(V_d) z_i /
    sqrt(T) serves every t; for each t the estimate averages indicator
    difference quotients over the draws.  Draws with a zero projection
    are skipped and counted in the returned diagnostics.
    """
    res = np.asarray(residuals, dtype=float)
    g = np.asarray(grads, dtype=float)
    T, p1 = g.shape
    vd = np.asarray(vd, dtype=float)
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.standard_normal((n_draws, p1))
    delta = z @ np.linalg.cholesky(vd).T / math.sqrt(T)

    zero_set = zeroed_indices(res, p1)
    mask_zero = np.zeros(T, dtype=bool)
    mask_zero[zero_set] = True

    h = np.zeros(T)
    skipped = 0
    for start in range(0, T, chunk):
        stop = min(start + chunk, T)
        rows = ~mask_zero[start:stop]
        if not np.any(rows):
            continue
        idx = np.arange(start, stop)[rows]
        proj = g[idx] @ delta.T
        rc = res[idx][:, None]
        num = (rc <= proj).astype(float) - (rc <= 0.0)
        ok = proj != 0.0
        skipped += int(proj.size - np.count_nonzero(ok))
        counts = ok.sum(axis=1)
        ratio = np.where(ok, num / np.where(ok, proj, 1.0), 0.0)
        vals = np.where(counts > 0, ratio.sum(axis=1) / np.maximum(counts, 1),
                        0.0)
        h[idx] = vals
    return h, skipped


def h_hat_arb_analytic(residuals, grads, vd, T=None):
    """Closed-form adaptive-random-bandwidth density estimate.

    h_t = E1(eps_t^2 / (2 d_t^2)) / (2 d_t sqrt(2 pi)) with d_t the
    projected draw scale sqrt(grad' V_d grad / T); the smallest p+1
    absolute residuals map to zero.
    """
    res = np.asarray(residuals, dtype=float)
    g = np.asarray(grads, dtype=float)
    if T is None:
        T = g.shape[0]
    p1 = g.shape[1]
    vd = np.asarray(vd, dtype=float)
    quad = np.einsum("ti,ij,tj->t", g, vd, g) / T
    zero_set = zeroed_indices(res, p1)
    mask = np.ones(res.size, dtype=bool)
    mask[zero_set] = False
    mask &= res != 0.0
    if np.any(quad[mask] <= 0.0):
        raise DegenerateGradientError(
            "gradient quadratic form vanished at a nonzero residual")
    h = np.zeros(res.size)
    d = np.sqrt(quad[mask])
    h[mask] = exp_integral_e1(res[mask] ** 2 / (2.0 * d * d)) / (
        2.0 * d * _SQRT_2PI)
    return h


def h_oracle_r1(beta1, tau):
    """Exact h for the location-scale-free restricted process.

    With a standard-normal-quantile intercept and quantile-lag
    coefficient beta1, h is the constant (1 - beta1) phi(Phi^-1(tau)).
    """
    if not abs(beta1) < 1.0:
        raise ValueError("|beta1| must be below one")
    return (1.0 - beta1) * float(std_normal_pdf(std_normal_quantile(tau)))


def h_oracle_r3(y, beta1, tau, n_lags=200):
    """Exact h path for the sqrt-scaled time-varying process.

    h_t = phi(Phi^-1(tau)) / sum_i beta1^(i-1) sqrt((y_{t-i})+), summed
    over the available history up to n_lags terms; a vanishing sum
    flags the entry as +inf (undefined density).
    """
    if not abs(beta1) < 1.0:
        raise ValueError("|beta1| must be below one")
    y = np.asarray(y, dtype=float)
    T = y.size
    root = np.sqrt(np.maximum(y, 0.0))
    phi = float(std_normal_pdf(std_normal_quantile(tau)))
    h = np.empty(T)
    for t in range(T):
        total = 0.0
        w = 1.0
        for i in range(1, min(t, n_lags) + 1):
            total += w * root[t - i]
            w *= beta1
        h[t] = phi / total if total > 0.0 else np.inf
    return h


def _cov_from(a, d, where=""):
    try:
        d_inv = invert(d)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"singular D hat {where}: {exc}") from exc
    return d_inv @ a @ d_inv


def arb_sandwich(spec, fit, cfg=None):
    """Full adaptive-random-bandwidth sandwich with V_d iteration.

    Runs an initial pass at vd_initial, then refreshes V_d to the
    current D^-1 A D^-1 exactly vd_updates times, redrawing the
    perturbations each pass (sim mode).  The final covariance comes
    from the last pass; the V_d history is recorded.
    """
    if cfg is None:
        cfg = ArbConfig()
    g = fit.path.grads
    res = fit.residuals
    T, p1 = g.shape
    a = a_hat(g, spec.tau)
    vd = np.eye(p1) if cfg.vd_initial is None else \
        np.asarray(cfg.vd_initial, dtype=float)
    history = [vd.copy()]
    skipped = 0
    h = None
    cov = None
    for it in range(cfg.vd_updates + 1):
        if cfg.mode == "sim":
            h, sk = h_hat_arb_sim(res, g, vd, cfg.n_draws, [cfg.seed, it])
            skipped += sk
        else:
            h = h_hat_arb_analytic(res, g, vd, T)
        d = d_hat(h, g)
        cov = _cov_from(a, d, where=f"at iteration {it}")
        vd = cov
        history.append(vd.copy())
    method = (f"arb_sim(n={cfg.n_draws}, vd_updates={cfg.vd_updates})"
              if cfg.mode == "sim"
              else f"arb_analytic(vd_updates={cfg.vd_updates})")
    return SandwichEstimate(a, d, method, h, cov, vd_final=vd,
                            vd_history=history,
                            extra={"skipped_draws": skipped})


def kernel_sandwich(spec, fit, mad_center="median"):
    """Sandwich with the indicator-window density estimate."""
    g = fit.path.grads
    a = a_hat(g, spec.tau)
    h, c_t = h_hat_kernel(fit.residuals, spec.tau, mad_center=mad_center)
    d = d_hat(h, g)
    cov = _cov_from(a, d, where="(kernel)")
    return SandwichEstimate(a, d, "kernel", h, cov,
                            extra={"bandwidth": float(c_t)})


def fd_sandwich(spec, y, fit, delta_tau=None, est_cfg=None):
    """Sandwich with the finite-difference density estimate."""
    g = fit.path.grads
    a = a_hat(g, spec.tau)
    h, crossings, _, _ = h_hat_fd(spec, y, delta_tau=delta_tau,
                                  est_cfg=est_cfg)
    d = d_hat(h, g)
    cov = _cov_from(a, d, where="(finite difference)")
    return SandwichEstimate(a, d, "finite_difference", h, cov,
                            extra={"crossings": crossings})


def oracle_h0_sandwich(spec, fit, h_values):
    """Sandwich with the true density plugged in at the fitted gradients."""
    g = fit.path.grads
    a = a_hat(g, spec.tau)
    h = np.broadcast_to(np.asarray(h_values, dtype=float),
                        (g.shape[0],)).copy()
    d = d_hat(h, g)
    cov = _cov_from(a, d, where="(oracle h)")
    return SandwichEstimate(a, d, "oracle_h0", h, cov)


def oracle_true_beta_sandwich(spec, y, true_beta, f0, h_values):
    """Sandwich with both the density and the parameters at their truth.

    Gradients are evaluated at the true parameter vector rather than
    the estimate; the density is the supplied oracle value.
    """
    g = model.gradient_path(spec, np.asarray(true_beta, dtype=float),
                            np.asarray(y, dtype=float), f0)
    a = a_hat(g, spec.tau)
    h = np.broadcast_to(np.asarray(h_values, dtype=float),
                        (g.shape[0],)).copy()
    d = d_hat(h, g)
    cov = _cov_from(a, d, where="(oracle true beta)")
    return SandwichEstimate(a, d, "oracle_true_beta", h, cov)
