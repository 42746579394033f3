"""Stability classification for linear-in-observables CAViaR recursions.

A parameterization with q quantile lags (coefficients b_1..b_q) and r
observable lags (coefficients b_{q+1}..b_{q+r}) passes the necessary
nonexplosiveness conditions when |sum of quantile-lag coefficients| < 1
and the roots of

    g1(x) = 1 - sum_i b_i x^i - sum_j b_{q+j} x^j

together with the common roots of

    g2(x) = 1 - sum_i b_i x^i    and    g3(x) = 1 - sum_j b_{q+j} x^j

all lie strictly outside the unit circle.  Forms with nonlinear bases
(|y|, positive/negative parts, square roots) are outside the scope of
these conditions and are refused.
"""

import numpy as np

from .errors import UnsupportedFormError

UNIT_CIRCLE_MARGIN = 1e-8

STABLE = "Stable"
EXPLOSIVE = "Explosive"
BOUNDARY = "Boundary"


class StabilityVerdict:
    """Outcome of the polynomial root conditions.

    The verdict reports whether the parameterization passes the
    necessary conditions, not a sufficiency claim about stationarity.
    """

    def __init__(self, condition1_ok, g1_roots, g2g3_common_roots, verdict):
        self.condition1_ok = condition1_ok
        self.g1_roots = g1_roots
        self.g2g3_common_roots = g2g3_common_roots
        self.verdict = verdict

    def __repr__(self):
        return (f"StabilityVerdict({self.verdict}, condition1_ok="
                f"{self.condition1_ok}, g1_roots={self.g1_roots}, "
                f"common_roots={self.g2g3_common_roots})")


def find_roots(coefs):
    """Roots of a polynomial given ascending coefficients [c0, c1, ...].

    Computed from companion-matrix eigenvalues; multiplicities appear
    by repetition.  Raises ValueError for the zero polynomial or a
    degree-zero input.
    """
    coefs = np.asarray(coefs, dtype=float)
    if coefs.size == 0 or not np.any(coefs != 0.0):
        raise ValueError("zero polynomial has no well-defined roots")
    trimmed = np.trim_zeros(coefs, "b")
    if trimmed.size < 2:
        raise ValueError("polynomial degree must be at least 1")
    return np.roots(trimmed[::-1])


def _poly_eval(coefs, x):
    out = 0.0 + 0.0j
    for c in coefs[::-1]:
        out = out * x + c
    return out


def classify(betas_quantile_lags, betas_y_lags):
    """Apply the necessary nonexplosiveness conditions to coefficients.

    Returns a StabilityVerdict: Stable when condition 1 holds and all
    relevant roots lie outside the unit circle by more than the margin,
    Boundary when any relevant root modulus falls within the margin of
    one, Explosive otherwise.
    """
    bq = np.atleast_1d(np.asarray(betas_quantile_lags, dtype=float))
    by = np.atleast_1d(np.asarray(betas_y_lags, dtype=float))
    if bq.size and not np.all(np.isfinite(bq)):
        raise ValueError("quantile-lag coefficients must be finite")
    if by.size and not np.all(np.isfinite(by)):
        raise ValueError("observable-lag coefficients must be finite")
    q, r = bq.size, by.size

    cond1 = abs(bq.sum()) < 1.0 if q else True

    # g1 = 1 - sum b_i x^i - sum b_{q+j} x^j (powers overlap additively)
    deg = max(q, r)
    g1 = np.zeros(deg + 1)
    g1[0] = 1.0
    for i in range(q):
        g1[i + 1] -= bq[i]
    for j in range(r):
        g1[j + 1] -= by[j]
    g1_roots = []
    if np.trim_zeros(g1, "b").size >= 2:
        g1_roots = list(find_roots(g1))

    common = []
    if q and np.any(bq != 0.0):
        g2 = np.concatenate([[1.0], -bq])
        g3 = np.concatenate([[1.0], -by]) if r else np.array([1.0])
        scale = 1e-8
        for root in find_roots(g2):
            if abs(_poly_eval(g3, root)) <= scale * (1.0 + abs(root) ** r):
                common.append(root)

    relevant = list(g1_roots) + list(common)
    verdict = STABLE if cond1 else EXPLOSIVE
    for root in relevant:
        m = abs(root)
        if abs(m - 1.0) <= UNIT_CIRCLE_MARGIN:
            verdict = BOUNDARY
            break
        if m < 1.0:
            verdict = EXPLOSIVE
    if verdict == STABLE and not cond1:
        verdict = EXPLOSIVE
    return StabilityVerdict(cond1, g1_roots, common, verdict)


def classify_dgp(spec):
    """Classify a DgpSpec, refusing forms the conditions do not cover.

    Only a constant term plus plain-y regressor lags are admissible;
    anything else (|y|, sign parts, square roots) raises
    UnsupportedFormError and callers should fall back to simulation
    diagnostics.  Coefficient functions are evaluated at u = 0.5; the
    conditions require the lag coefficients to be constants in u, so a
    second probe at u = 0.25 guards against non-constant coefficients.
    """
    probes = np.array([0.25, 0.5])
    bq = []
    for fn in spec.qlag_coefs:
        vals = np.asarray(fn(probes), dtype=float)
        if abs(vals[0] - vals[1]) > 1e-12:
            raise UnsupportedFormError(
                "quantile-lag coefficients must not vary with u")
        bq.append(vals[1])
    max_lag = 0
    for basis, lag, _ in spec.terms:
        if basis == "const":
            continue
        if basis != "y":
            raise UnsupportedFormError(
                f"basis {basis!r} is outside the linear stability conditions")
        max_lag = max(max_lag, lag)
    by = np.zeros(max_lag)
    for basis, lag, fn in spec.terms:
        if basis != "y":
            continue
        vals = np.asarray(fn(probes), dtype=float)
        if abs(vals[0] - vals[1]) > 1e-12:
            raise UnsupportedFormError(
                "observable-lag coefficients must not vary with u")
        by[lag - 1] += vals[1]
    return classify(np.asarray(bq), by)
