"""All-quantile CAViaR data generating processes.

A DGP specifies every conditional quantile of y_t: coefficient
functions of u on (0,1) attached to quantile lags and to regressor
basis terms of lagged y.  Simulation realizes y_t as its conditional
u_t-th quantile while tracking, for every future draw, that draw's own
quantile curve, so the recursion is exact (no interpolation of the
conditional quantile function).
"""

import csv
import math

import numpy as np

from . import _kernels
from .errors import ExplosionError
from .numkit import std_normal_quantile

EXPLODE_THRESHOLD = 1e9
DEFAULT_BURNIN = 200

_BASIS_NAMES = {"const": 0, "y": 1, "abs": 2, "pos": 3, "neg": 4, "sqrt_pos": 5}


def student_t3_quantile(u):
    """Inverse CDF of Student's t with 3 degrees of freedom.

    With z = x/sqrt(3) the CDF is 1/2 + [arctan(z) + z/(1+z^2)]/pi;
    the inverse is found by Newton iteration on z (the derivative has
    the closed form 2/(1+z^2)^2), started from a central or tail
    asymptote.  Accurate to ~1e-13 across (0,1).
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("probability must lie strictly inside (0, 1)")
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    target = math.pi * (u - 0.5)
    # initial guess: normal-based in the center, cube-root asymptote in tails
    z = np.asarray(std_normal_quantile(u), dtype=float) / math.sqrt(3.0)
    tail_hi = u > 0.99
    tail_lo = u < 0.01
    if np.any(tail_hi):
        z[tail_hi] = np.cbrt(2.0 / (3.0 * math.pi * (1.0 - u[tail_hi])))
    if np.any(tail_lo):
        z[tail_lo] = -np.cbrt(2.0 / (3.0 * math.pi * u[tail_lo]))
    for _ in range(60):
        g = np.arctan(z) + z / (1.0 + z * z)
        step = (g - target) * (1.0 + z * z) ** 2 / 2.0
        z = z - step
        if np.max(np.abs(step) / (1.0 + np.abs(z))) < 1e-15:
            break
    x = z * math.sqrt(3.0)
    return float(x[0]) if scalar else x


class DgpSpec:
    """An all-quantile CAViaR specification.

    qlag_coefs: one callable u -> coefficient per quantile lag.
    terms: (basis, lag, coef_fn) triples; basis "const" means the term
    is coef_fn(u) itself, other bases apply to y_{t-lag}.
    init_quantile: inverse CDF used for the pre-sample conditional
    quantiles f_{1-i}(beta_u); pre-sample y values are zero.
    """

    def __init__(self, name, qlag_coefs, terms, init_quantile,
                 burnin=DEFAULT_BURNIN):
        self.name = name
        self.qlag_coefs = list(qlag_coefs)
        self.q = len(self.qlag_coefs)
        self.terms = list(terms)
        for basis, lag, _ in self.terms:
            if basis not in _BASIS_NAMES:
                raise ValueError(f"unknown basis {basis!r}")
            if basis != "const" and lag < 1:
                raise ValueError("regressor lags must be >= 1")
        self.init_quantile = init_quantile
        self.burnin = int(burnin)

    def _coef_matrices(self, u):
        """Evaluate all coefficient functions on the draw vector u."""
        S = u.shape[0]
        qcoef = np.empty((self.q, S))
        for i, fn in enumerate(self.qlag_coefs):
            qcoef[i] = fn(u)
        k = len(self.terms)
        tcoef = np.empty((k, S))
        codes = np.empty(k, dtype=np.int64)
        lags = np.empty(k, dtype=np.int64)
        for j, (basis, lag, fn) in enumerate(self.terms):
            tcoef[j] = fn(u)
            codes[j] = _BASIS_NAMES[basis]
            lags[j] = max(int(lag), 0)
        return qcoef, tcoef, codes, lags


class SimOutput:
    """A simulated sample with its draws and a true-quantile evaluator."""

    def __init__(self, y, u, dgp, u_full):
        self.y = y
        self.u = u
        self._dgp = dgp
        self._u_full = u_full

    def true_quantile_path(self, taus):
        """Conditional tau-quantile paths implied by the realized sample.

        Returns an array of shape (len(taus), T) giving f_t(beta_tau)
        for each requested tau, computed by re-running the recursion
        with passive tracking columns (burn-in removed).
        """
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        if np.any(taus <= 0.0) or np.any(taus >= 1.0):
            raise ValueError("taus must lie strictly inside (0, 1)")
        dgp = self._dgp
        n_real = self._u_full.shape[0]
        u_all = np.concatenate([self._u_full, taus])
        qcoef, tcoef, codes, lags = dgp._coef_matrices(u_all)
        finit = np.asarray(dgp.init_quantile(u_all), dtype=float)
        y, tracked, t_explode = _kernels.dgp_run(
            n_real, qcoef, tcoef, codes, lags, finit, EXPLODE_THRESHOLD)
        if t_explode >= 0:
            raise ExplosionError(f"path exploded at step {t_explode}")
        return tracked[:, dgp.burnin:]


def simulate(dgp, T, seed):
    """Draw a length-T sample from the DGP after burn-in.

    Deterministic given (dgp, T, seed); uniforms come from a Philox
    counter-based generator.  Raises ExplosionError when any realized
    observation exceeds the explosion threshold.
    """
    if T < 1:
        raise ValueError("T must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    total = T + dgp.burnin
    u_full = rng.uniform(size=total)
    # clamp away from exact endpoints so inverse CDFs stay defined
    np.clip(u_full, 1e-12, 1.0 - 1e-12, out=u_full)
    qcoef, tcoef, codes, lags = dgp._coef_matrices(u_full)
    finit = np.asarray(dgp.init_quantile(u_full), dtype=float)
    y, _, t_explode = _kernels.dgp_run(
        total, qcoef, tcoef, codes, lags, finit, EXPLODE_THRESHOLD)
    if t_explode >= 0:
        raise ExplosionError(
            f"{dgp.name}: path exploded at step {t_explode} (unstable DGP?)")
    return SimOutput(y[dgp.burnin:].copy(), u_full[dgp.burnin:].copy(),
                     dgp, u_full)


def check_monotone(dgp, sim, grid):
    """Scan the realized sample for conditional-quantile monotonicity.

    Evaluates f_t(beta_u) on the sorted grid for every post-burn-in t
    and returns a list of (t, u_low, u_high) violations (empty when the
    quantile function is increasing in u everywhere on the grid).
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing")
    paths = sim.true_quantile_path(grid)
    violations = []
    for t in range(paths.shape[1]):
        col = paths[:, t]
        bad = np.nonzero(np.diff(col) < 0.0)[0]
        for i in bad:
            violations.append((t, float(grid[i]), float(grid[i + 1])))
    return violations


def write_sample_csv(path, y):
    """Export a simulated sample as a single-column CSV with header y."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"])
        for v in y:
            w.writerow([repr(float(v))])


def _const(c):
    return lambda u: np.full_like(np.asarray(u, dtype=float), c)


def _three_regime_b0(u):
    u = np.asarray(u, dtype=float)
    base = np.asarray(std_normal_quantile(u), dtype=float)
    mult = np.where(u <= 0.4, 3.0, np.where(u <= 0.6, 1.0, 2.0))
    return mult * base


def catalog(name, burnin=DEFAULT_BURNIN):
    """Built-in DGPs from the simulation studies.

    1.a-1.c and 2.a-2.c use t(3) innovations with +-0.5 coefficients;
    R1-R4 are the restricted asymmetric-impact processes used in the
    size studies.  Names are case-insensitive.
    """
    key = name.lower()
    t3 = student_t3_quantile
    nq = std_normal_quantile
    if key == "1.a":
        return DgpSpec(name, [_const(0.5)],
                       [("const", 0, t3), ("abs", 1, _const(-0.5))],
                       t3, burnin)
    if key == "1.b":
        return DgpSpec(name, [_const(0.5)],
                       [("const", 0, t3), ("y", 1, _const(-0.5))],
                       t3, burnin)
    if key == "1.c":
        return DgpSpec(name, [],
                       [("const", 0, t3), ("y", 1, _const(-0.5))],
                       t3, burnin)
    if key == "2.a":
        return DgpSpec(name, [_const(-0.5)],
                       [("const", 0, t3), ("abs", 1, _const(0.5))],
                       t3, burnin)
    if key == "2.b":
        return DgpSpec(name, [_const(-0.5)],
                       [("const", 0, t3), ("y", 1, _const(0.5))],
                       t3, burnin)
    if key == "2.c":
        return DgpSpec(name, [],
                       [("const", 0, t3), ("y", 1, _const(0.5))],
                       t3, burnin)
    if key == "r1":
        return DgpSpec(name, [_const(0.2)],
                       [("const", 0, nq), ("abs", 1, _const(0.3))],
                       nq, burnin)
    if key == "r2":
        return DgpSpec(name, [_const(0.2)],
                       [("const", 0, nq), ("y", 1, _const(0.3))],
                       nq, burnin)
    if key == "r3":
        return DgpSpec(name, [_const(0.2)],
                       [("sqrt_pos", 1, nq), ("abs", 1, _const(0.3))],
                       nq, burnin)
    if key == "r4":
        return DgpSpec(name, [_const(0.2)],
                       [("const", 0, _three_regime_b0),
                        ("abs", 1, _const(0.3))],
                       nq, burnin)
    raise ValueError(f"unknown catalog DGP {name!r}")


CATALOG_NAMES = ("1.a", "1.b", "1.c", "2.a", "2.b", "2.c",
                 "R1", "R2", "R3", "R4")
