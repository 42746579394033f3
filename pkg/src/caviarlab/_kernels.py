"""Jit-compiled recursions and the simplex search hot loop.

Family kinds: 0 linear-in-parameters (generic/SAV/AS), 1 indirect
GARCH(1,1), 2 adaptive.  Regressor basis codes: 1 y, 2 |y|, 3 (y)+,
4 (y)-, 5 sqrt((y)+).  Pre-sample y values are zero and pre-sample
quantiles equal the fixed initial condition f0.

Status codes returned by path kernels: 0 ok, 1 non-finite path,
2 negative radicand, 3 zero quantile in the indirect-GARCH gradient.
"""

import math

import numpy as np
from numba import njit

PATH_BOUND = 1e12
LOGISTIC_CLAMP = 40.0

KIND_LINEAR = 0
KIND_IGARCH = 1
KIND_ADAPTIVE = 2


@njit(cache=True)
def _basis(code, v):
    if code == 1:
        return v
    if code == 2:
        return abs(v)
    if code == 3:
        return v if v > 0.0 else 0.0
    if code == 4:
        return -v if v < 0.0 else 0.0
    if code == 5:
        return math.sqrt(v) if v > 0.0 else 0.0
    return 1.0


@njit(cache=True)
def linear_path(beta, y, f0, q, codes, lags):
    # codes[0]/lags[0] describe the term beta[0] multiplies (code 0 is a
    # plain constant); codes[1:] pair with the trailing regressor coefs.
    T = y.shape[0]
    r = codes.shape[0] - 1
    f = np.empty(T)
    for t in range(T):
        k0 = t - lags[0]
        yv0 = y[k0] if k0 >= 0 else 0.0
        v = beta[0] * _basis(codes[0], yv0)
        for i in range(1, q + 1):
            fl = f[t - i] if t - i >= 0 else f0
            v += beta[i] * fl
        for j in range(1, r + 1):
            k = t - lags[j]
            yv = y[k] if k >= 0 else 0.0
            v += beta[q + j] * _basis(codes[j], yv)
        if not abs(v) <= PATH_BOUND:
            return f, 1
        f[t] = v
    return f, 0


@njit(cache=True)
def linear_grad(beta, y, f0, q, codes, lags):
    T = y.shape[0]
    r = codes.shape[0] - 1
    p1 = 1 + q + r
    f = np.empty(T)
    g = np.zeros((T, p1))
    for t in range(T):
        k0 = t - lags[0]
        yv0 = y[k0] if k0 >= 0 else 0.0
        b0 = _basis(codes[0], yv0)
        v = beta[0] * b0
        g[t, 0] = b0
        for i in range(1, q + 1):
            if t - i >= 0:
                fl = f[t - i]
                for k in range(p1):
                    g[t, k] += beta[i] * g[t - i, k]
            else:
                fl = f0
            v += beta[i] * fl
            g[t, i] += fl
        for j in range(1, r + 1):
            k = t - lags[j]
            yv = y[k] if k >= 0 else 0.0
            b = _basis(codes[j], yv)
            v += beta[q + j] * b
            g[t, q + j] += b
        if not abs(v) <= PATH_BOUND:
            return f, g, 1
        f[t] = v
    return f, g, 0


@njit(cache=True)
def igarch_path(beta, y, f0):
    T = y.shape[0]
    f = np.empty(T)
    fprev = f0
    for t in range(T):
        yv = y[t - 1] if t - 1 >= 0 else 0.0
        rad = beta[0] + beta[1] * fprev * fprev + beta[2] * yv * yv
        if rad < 0.0:
            return f, 2
        v = -math.sqrt(rad)
        if not abs(v) <= PATH_BOUND:
            return f, 1
        f[t] = v
        fprev = v
    return f, 0


@njit(cache=True)
def igarch_grad(beta, y, f0):
    T = y.shape[0]
    f = np.empty(T)
    g = np.zeros((T, 3))
    fprev = f0
    gprev = np.zeros(3)
    for t in range(T):
        yv = y[t - 1] if t - 1 >= 0 else 0.0
        rad = beta[0] + beta[1] * fprev * fprev + beta[2] * yv * yv
        if rad < 0.0:
            return f, g, 2
        v = -math.sqrt(rad)
        if not abs(v) <= PATH_BOUND:
            return f, g, 1
        if v == 0.0:
            return f, g, 3
        # d f_t / d beta_k = (d rad / d beta_k) / (2 f_t)
        chain = 2.0 * beta[1] * fprev
        g[t, 0] = (1.0 + chain * gprev[0]) / (2.0 * v)
        g[t, 1] = (fprev * fprev + chain * gprev[1]) / (2.0 * v)
        g[t, 2] = (yv * yv + chain * gprev[2]) / (2.0 * v)
        f[t] = v
        fprev = v
        for k in range(3):
            gprev[k] = g[t, k]
    return f, g, 0


@njit(cache=True)
def adaptive_path(beta, y, f0, gslope, tau):
    T = y.shape[0]
    f = np.empty(T)
    fprev = f0
    for t in range(T):
        yv = y[t - 1] if t - 1 >= 0 else 0.0
        s = gslope * (yv - fprev)
        if s > LOGISTIC_CLAMP:
            s = LOGISTIC_CLAMP
        elif s < -LOGISTIC_CLAMP:
            s = -LOGISTIC_CLAMP
        lgt = 1.0 / (1.0 + math.exp(s))
        v = fprev + beta[0] * (lgt - tau)
        if not abs(v) <= PATH_BOUND:
            return f, 1
        f[t] = v
        fprev = v
    return f, 0


@njit(cache=True)
def adaptive_grad(beta, y, f0, gslope, tau):
    T = y.shape[0]
    f = np.empty(T)
    g = np.zeros((T, 1))
    fprev = f0
    gprev = 0.0
    for t in range(T):
        yv = y[t - 1] if t - 1 >= 0 else 0.0
        s = gslope * (yv - fprev)
        if s > LOGISTIC_CLAMP:
            s = LOGISTIC_CLAMP
        elif s < -LOGISTIC_CLAMP:
            s = -LOGISTIC_CLAMP
        lgt = 1.0 / (1.0 + math.exp(s))
        v = fprev + beta[0] * (lgt - tau)
        if not abs(v) <= PATH_BOUND:
            return f, g, 1
        gv = gprev * (1.0 + beta[0] * gslope * lgt * (1.0 - lgt)) + (lgt - tau)
        f[t] = v
        g[t, 0] = gv
        fprev = v
        gprev = gv
    return f, g, 0


@njit(cache=True)
def objective_value(kind, beta, y, f0, tau, q, codes, lags, gslope):
    if kind == KIND_LINEAR:
        f, status = linear_path(beta, y, f0, q, codes, lags)
    elif kind == KIND_IGARCH:
        f, status = igarch_path(beta, y, f0)
    else:
        f, status = adaptive_path(beta, y, f0, gslope, tau)
    if status != 0:
        return np.inf
    total = 0.0
    for t in range(y.shape[0]):
        x = y[t] - f[t]
        if x < 0.0:
            total += x * (tau - 1.0)
        else:
            total += x * tau
    return total


@njit(cache=True)
def nm_minimize(kind, x0, y, f0, tau, q, codes, lags, gslope, ftol, maxiter):
    """Nelder-Mead on the check-loss objective.

    Coefficients: reflection 1, expansion 2, contraction 0.5, shrink 0.5.
    Stops when the simplex objective spread drops below ftol or at the
    iteration cap; an all-infinite simplex exits immediately.
    """
    n = x0.shape[0]
    sim = np.empty((n + 1, n))
    fx = np.empty(n + 1)
    for k in range(n):
        sim[0, k] = x0[k]
    for i in range(n):
        for k in range(n):
            sim[i + 1, k] = x0[k]
        step = 0.05 * abs(x0[i])
        if step == 0.0:
            step = 0.00025
        sim[i + 1, i] += step
    for i in range(n + 1):
        fx[i] = objective_value(kind, sim[i], y, f0, tau, q, codes, lags, gslope)

    nev = n + 1
    xr = np.empty(n)
    xe = np.empty(n)
    xc = np.empty(n)
    cen = np.empty(n)
    it = 0
    while it < maxiter:
        it += 1
        order = np.argsort(fx)
        best = order[0]
        worst = order[n]
        second = order[n - 1]
        if not np.isfinite(fx[best]):
            break
        if np.isfinite(fx[worst]) and fx[worst] - fx[best] < ftol:
            break
        for k in range(n):
            s = 0.0
            for i in range(n + 1):
                if i != worst:
                    s += sim[i, k]
            cen[k] = s / n
        for k in range(n):
            xr[k] = cen[k] + (cen[k] - sim[worst, k])
        fr = objective_value(kind, xr, y, f0, tau, q, codes, lags, gslope)
        nev += 1
        if fr < fx[best]:
            for k in range(n):
                xe[k] = cen[k] + 2.0 * (cen[k] - sim[worst, k])
            fe = objective_value(kind, xe, y, f0, tau, q, codes, lags, gslope)
            nev += 1
            if fe < fr:
                for k in range(n):
                    sim[worst, k] = xe[k]
                fx[worst] = fe
            else:
                for k in range(n):
                    sim[worst, k] = xr[k]
                fx[worst] = fr
        elif fr < fx[second]:
            for k in range(n):
                sim[worst, k] = xr[k]
            fx[worst] = fr
        else:
            if fr < fx[worst]:
                for k in range(n):
                    xc[k] = cen[k] + 0.5 * (xr[k] - cen[k])
                fc = objective_value(kind, xc, y, f0, tau, q, codes, lags, gslope)
                nev += 1
                accept = fc <= fr
            else:
                for k in range(n):
                    xc[k] = cen[k] + 0.5 * (sim[worst, k] - cen[k])
                fc = objective_value(kind, xc, y, f0, tau, q, codes, lags, gslope)
                nev += 1
                accept = fc < fx[worst]
            if accept:
                for k in range(n):
                    sim[worst, k] = xc[k]
                fx[worst] = fc
            else:
                for i in range(n + 1):
                    if i != best:
                        for k in range(n):
                            sim[i, k] = sim[best, k] + 0.5 * (sim[i, k] - sim[best, k])
                        fx[i] = objective_value(kind, sim[i], y, f0, tau, q,
                                                codes, lags, gslope)
                        nev += n
    best = np.argmin(fx)
    return sim[best].copy(), fx[best], it


@njit(cache=True)
def dgp_run(n_real, qcoef, tcoef, codes, lags, finit, explode):
    """Run the all-quantile recursion for n_real realized steps.

    Column s of the coefficient matrices corresponds to one tracked
    quantile curve; columns 0..n_real-1 are the realized draws u_t (the
    observation at step t is column t), columns beyond n_real are
    passive tracking columns (e.g. a fixed-tau grid).

    Returns (y, tracked, t_explode): y has length n_real, tracked is
    (S - n_real, n_real) giving the passive columns' conditional
    quantile at each realized step, t_explode is -1 when no explosion.
    """
    q = qcoef.shape[0]
    S = qcoef.shape[1]
    k = tcoef.shape[0]
    n_track = S - n_real
    y = np.zeros(n_real)
    tracked = np.empty((n_track, n_real))
    # lag state: flags[i, s] = f_{t-1-i}(beta_{u_s})
    flags = np.empty((q, S))
    for i in range(q):
        for s in range(S):
            flags[i, s] = finit[s]
    fnow = np.empty(S)
    for t in range(n_real):
        # basis values from realized y lags (pre-sample zeros)
        for s in range(S):
            v = 0.0
            for j in range(k):
                idx = t - lags[j]
                yv = y[idx] if idx >= 0 else 0.0
                v += tcoef[j, s] * _basis(codes[j], yv)
            for i in range(q):
                v += qcoef[i, s] * flags[i, s]
            fnow[s] = v
        yt = fnow[t]
        if not abs(yt) <= explode:
            return y, tracked, t
        y[t] = yt
        for g in range(n_track):
            tracked[g, t] = fnow[n_real + g]
        for i in range(q - 1, 0, -1):
            for s in range(S):
                flags[i, s] = flags[i - 1, s]
        if q > 0:
            for s in range(S):
                flags[0, s] = fnow[s]
    return y, tracked, -1
