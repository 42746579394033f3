"""Multistart check-loss minimization.

The scheme: draw n uniform initials in a bounds box, run a simplex
search from every one, keep the m best returned vectors, restart the
search a further a times from each survivor, and return the overall
minimizer.  Bounds shape only the initial draws; local searches may
leave the box.
"""

import math

import numpy as np

from . import _kernels, model
from .errors import AllTrialsInvalidError
from .numkit import empirical_quantile

DEFAULT_N_TRIALS = 200
PAPER_N_TRIALS = 10_000


class EstimateConfig:
    """Multistart and simplex-search settings.

    Defaults are desk scale (200 trials); `paper_scale()` restores the
    full 10^4/10/5 configuration.  `bounds_lo`/`bounds_hi` default to a
    box of [-3, 3] for the intercept, [-0.99, 0.99] for quantile-lag
    coefficients and [-2, 2] for regressor coefficients.
    """

    def __init__(self, n_trials=DEFAULT_N_TRIALS, m_keep=10, a_polish=5,
                 bounds_lo=None, bounds_hi=None, ftol=1e-10, maxiter=2000,
                 seed=0):
        if m_keep > n_trials:
            raise ValueError("m_keep cannot exceed n_trials")
        self.n_trials = int(n_trials)
        self.m_keep = int(m_keep)
        self.a_polish = int(a_polish)
        self.bounds_lo = bounds_lo
        self.bounds_hi = bounds_hi
        self.ftol = float(ftol)
        self.maxiter = int(maxiter)
        self.seed = int(seed)

    @classmethod
    def paper_scale(cls, **kw):
        kw.setdefault("n_trials", PAPER_N_TRIALS)
        return cls(**kw)


def default_bounds(spec):
    """The initialization box for a model family, by parameter role."""
    if spec.kind == _kernels.KIND_LINEAR:
        r = spec.basis_codes.size - 1
        lo = [-3.0] + [-0.99] * spec.q + [-2.0] * r
        hi = [3.0] + [0.99] * spec.q + [2.0] * r
    elif spec.kind == _kernels.KIND_IGARCH:
        lo, hi = [-3.0, -0.99, -2.0], [3.0, 0.99, 2.0]
    else:
        lo, hi = [-2.0], [2.0]
    return np.array(lo), np.array(hi)


class FitResult:
    """An estimated model: parameters, fitted path and diagnostics."""

    def __init__(self, beta, rq, path, residuals, f0, trials_summary, seed):
        self.beta = beta
        self.rq = rq
        self.path = path
        self.residuals = residuals
        self.f0 = f0
        self.trials_summary = trials_summary
        self.seed = seed


def fit(spec, y, cfg=None):
    """Estimate the model on a sample by the multistart scheme.

    The initial quantile f0 is the empirical tau-quantile of the first
    floor(0.1 T) observations and stays fixed.  Deterministic given the
    config seed; ties among equal objectives break toward the lowest
    trial index.  Raises AllTrialsInvalidError when every trial ends at
    an infinite objective.
    """
    if cfg is None:
        cfg = EstimateConfig()
    y = np.ascontiguousarray(y, dtype=float)
    T = y.size
    if T < 50:
        raise ValueError("need at least 50 observations")
    f0 = empirical_quantile(y[: T // 10], spec.tau)

    lo = np.asarray(cfg.bounds_lo, dtype=float) if cfg.bounds_lo is not None \
        else default_bounds(spec)[0]
    hi = np.asarray(cfg.bounds_hi, dtype=float) if cfg.bounds_hi is not None \
        else default_bounds(spec)[1]
    p = spec.param_dim
    if lo.shape != (p,) or hi.shape != (p,) or np.any(lo >= hi):
        raise ValueError("bounds must be length-p vectors with lo < hi")

    rng = np.random.Generator(np.random.Philox(cfg.seed))
    initials = lo + (hi - lo) * rng.uniform(size=(cfg.n_trials, p))

    args = (y, f0, spec.tau, spec.q, spec.basis_codes, spec.basis_lags,
            spec.gslope, cfg.ftol, cfg.maxiter)
    xs = np.empty((cfg.n_trials, p))
    fs = np.empty(cfg.n_trials)
    for i in range(cfg.n_trials):
        xs[i], fs[i], _ = _kernels.nm_minimize(spec.kind, initials[i], *args)
    if not np.any(np.isfinite(fs)):
        raise AllTrialsInvalidError(
            "every multistart trial produced an infinite objective")

    keep = np.argsort(fs, kind="stable")[: cfg.m_keep]
    cand_x = xs[keep].copy()
    cand_f = fs[keep].copy()
    for _ in range(cfg.a_polish):
        for j in range(cand_x.shape[0]):
            if not math.isfinite(cand_f[j]):
                continue
            cand_x[j], cand_f[j], _ = _kernels.nm_minimize(
                spec.kind, cand_x[j], *args)
    best = int(np.argmin(cand_f))
    beta = cand_x[best]

    rq = model.objective(spec, beta, y, f0)
    path = model.quantile_path(spec, beta, y, f0)
    path.grads = model.gradient_path(spec, beta, y, f0)
    residuals = y - path.f
    trials_summary = {"trial_objectives": fs, "kept": keep,
                      "polished_objectives": cand_f}
    return FitResult(beta, rq, path, residuals, f0, trials_summary, cfg.seed)


def nelder_mead(objective, x0, ftol=1e-10, maxiter=2000):
    """Simplex search on an arbitrary objective returning finite or +inf.

    Reflection 1, expansion 2, contraction 0.5, shrink 0.5; stops when
    the simplex objective spread falls below ftol or at the iteration
    cap.  Returns (x, value).
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    sim = np.tile(x0, (n + 1, 1))
    for i in range(n):
        sim[i + 1, i] += 0.05 * abs(x0[i]) if x0[i] != 0.0 else 0.00025
    fx = np.array([objective(s) for s in sim], dtype=float)

    for _ in range(maxiter):
        order = np.argsort(fx, kind="stable")
        sim, fx = sim[order], fx[order]
        if not math.isfinite(fx[0]):
            break
        if math.isfinite(fx[-1]) and fx[-1] - fx[0] < ftol:
            break
        cen = sim[:-1].mean(axis=0)
        xr = cen + (cen - sim[-1])
        fr = objective(xr)
        if fr < fx[0]:
            xe = cen + 2.0 * (cen - sim[-1])
            fe = objective(xe)
            if fe < fr:
                sim[-1], fx[-1] = xe, fe
            else:
                sim[-1], fx[-1] = xr, fr
        elif fr < fx[-2]:
            sim[-1], fx[-1] = xr, fr
        else:
            if fr < fx[-1]:
                xc = cen + 0.5 * (xr - cen)
                fc = objective(xc)
                accept = fc <= fr
            else:
                xc = cen + 0.5 * (sim[-1] - cen)
                fc = objective(xc)
                accept = fc < fx[-1]
            if accept:
                sim[-1], fx[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                    fx[i] = objective(sim[i])
    best = int(np.argmin(fx))
    return sim[best].copy(), float(fx[best])
