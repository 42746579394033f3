"""Model recursions against slow pure-Python oracles and finite differences."""

import numpy as np
import pytest

from caviarlab import model
from caviarlab.errors import (NegativeRadicandError, NonFinitePathError,
                              UnsupportedFamilyError)


def slow_linear_path(beta, y, f0, q, codes, lags):
    """Reference recursion written independently of the jitted kernel."""
    def basis(code, v):
        return {0: 1.0, 1: v, 2: abs(v), 3: max(v, 0.0), 4: max(-v, 0.0),
                5: np.sqrt(v) if v > 0.0 else 0.0}[code]

    T = len(y)
    f = np.zeros(T)
    for t in range(T):
        k0 = t - lags[0]
        v = beta[0] * basis(codes[0], y[k0] if k0 >= 0 else 0.0)
        for i in range(1, q + 1):
            v += beta[i] * (f[t - i] if t - i >= 0 else f0)
        for j in range(1, len(codes)):
            k = t - lags[j]
            v += beta[q + j] * basis(codes[j], y[k] if k >= 0 else 0.0)
        f[t] = v
    return f


def fd_gradient(spec, beta, y, f0, eps=1e-7):
    """Central finite differences of the quantile path in each parameter."""
    g = np.zeros((y.size, beta.size))
    for k in range(beta.size):
        bp, bm = beta.copy(), beta.copy()
        bp[k] += eps
        bm[k] -= eps
        fp = model.quantile_path(spec, bp, y, f0).f
        fm = model.quantile_path(spec, bm, y, f0).f
        g[:, k] = (fp - fm) / (2.0 * eps)
    return g


def sample(T=300, seed=0):
    return np.random.default_rng(seed).standard_t(5, size=T)


SPECS_AND_BETAS = [
    (model.ModelSpec.sav(0.05), np.array([-0.3, 0.6, -0.4])),
    (model.ModelSpec.asym_slope(0.05), np.array([-0.2, 0.5, -0.3, 0.2])),
    (model.ModelSpec.generic(0.5, 2, [("y", 1), ("abs", 2)]),
     np.array([0.1, 0.3, 0.2, -0.2, 0.15])),
    (model.ModelSpec.generic(0.5, 1, [("pos", 1), ("neg", 1)],
                             lead=("sqrt_pos", 1)),
     np.array([0.4, 0.3, 0.25, 0.3])),
    (model.ModelSpec.igarch(0.05), np.array([0.1, 0.5, 0.3])),
    (model.ModelSpec.adaptive(0.05), np.array([0.4])),
]


class TestQuantilePath:
    @pytest.mark.parametrize("spec,beta", SPECS_AND_BETAS[:4])
    def test_linear_families_match_slow_oracle(self, spec, beta):
        y = sample()
        f = model.quantile_path(spec, beta, y, -0.8).f
        ref = slow_linear_path(beta, y, -0.8, spec.q,
                               list(spec.basis_codes), list(spec.basis_lags))
        assert np.allclose(f, ref, rtol=1e-12, atol=1e-12)

    def test_igarch_matches_direct_recursion(self):
        y = sample()
        beta = np.array([0.1, 0.5, 0.3])
        f = model.quantile_path(model.ModelSpec.igarch(0.05), beta, y, -1.0).f
        fprev, ref = -1.0, []
        for t in range(y.size):
            yv = y[t - 1] if t >= 1 else 0.0
            fprev = -np.sqrt(beta[0] + beta[1] * fprev ** 2 + beta[2] * yv ** 2)
            ref.append(fprev)
        assert np.allclose(f, ref, rtol=1e-12)

    def test_adaptive_matches_direct_recursion(self):
        y = sample()
        spec = model.ModelSpec.adaptive(0.05, gslope=10.0)
        beta = np.array([0.4])
        f = model.quantile_path(spec, beta, y, -1.0).f
        fprev, ref = -1.0, []
        for t in range(y.size):
            yv = y[t - 1] if t >= 1 else 0.0
            s = np.clip(10.0 * (yv - fprev), -40.0, 40.0)
            fprev = fprev + beta[0] * (1.0 / (1.0 + np.exp(s)) - 0.05)
            ref.append(fprev)
        assert np.allclose(f, ref, rtol=1e-12)

    def test_explosive_path_raises(self):
        spec = model.ModelSpec.sav(0.05)
        with pytest.raises(NonFinitePathError):
            model.quantile_path(spec, np.array([5.0, 1.5, 2.0]),
                                sample(2000), 1.0)

    def test_negative_radicand_raises(self):
        spec = model.ModelSpec.igarch(0.05)
        with pytest.raises(NegativeRadicandError):
            model.quantile_path(spec, np.array([-1.0, 0.1, 0.1]),
                                sample(), -1.0)

    def test_wrong_beta_length_rejected(self):
        with pytest.raises(ValueError):
            model.quantile_path(model.ModelSpec.sav(0.5), np.zeros(2),
                                sample(), 0.0)


class TestGradientPath:
    @pytest.mark.parametrize("spec,beta", SPECS_AND_BETAS)
    def test_matches_finite_differences(self, spec, beta):
        y = sample()
        g = model.gradient_path(spec, beta, y, -0.8)
        ref = fd_gradient(spec, beta, y, -0.8)
        scale = 1.0 + np.abs(ref)
        assert np.max(np.abs(g - ref) / scale) < 1e-5

    def test_gradient_shape(self):
        spec = model.ModelSpec.asym_slope(0.1)
        g = model.gradient_path(spec, np.array([-0.1, 0.4, -0.2, 0.1]),
                                sample(50), -0.5)
        assert g.shape == (50, 4)


class TestHessianPath:
    def test_matches_finite_differences_of_gradient(self):
        spec = model.ModelSpec.sav(0.1)
        beta = np.array([-0.2, 0.5, -0.3])
        y = sample(120)
        h = model.hessian_path(spec, beta, y, -0.5)
        eps = 1e-6
        for k in range(3):
            bp, bm = beta.copy(), beta.copy()
            bp[k] += eps
            bm[k] -= eps
            gp = model.gradient_path(spec, bp, y, -0.5)
            gm = model.gradient_path(spec, bm, y, -0.5)
            ref = (gp - gm) / (2.0 * eps)
            assert np.max(np.abs(h[:, :, k] - ref)) < 1e-5

    def test_unsupported_family_refused(self):
        with pytest.raises(UnsupportedFamilyError):
            model.hessian_path(model.ModelSpec.igarch(0.1),
                               np.array([0.1, 0.5, 0.3]), sample(50), -1.0)


class TestCheckLoss:
    def test_piecewise_values(self):
        assert model.check_loss(0.3, 2.0) == pytest.approx(0.6)
        assert model.check_loss(0.3, -2.0) == pytest.approx(1.4)
        assert model.check_loss(0.3, 0.0) == 0.0

    def test_minimizer_is_quantile(self):
        # brute force: the sample tau-quantile minimizes the summed loss
        rng = np.random.default_rng(3)
        xs = rng.normal(size=200)
        tau = 0.25
        grid = np.linspace(-3, 3, 1201)
        losses = [model.check_loss(tau, xs - c).sum() for c in grid]
        best = grid[int(np.argmin(losses))]
        assert abs(best - np.quantile(xs, tau)) < 0.02

    def test_objective_is_summed_loss(self):
        spec = model.ModelSpec.sav(0.05)
        beta = np.array([-0.3, 0.6, -0.4])
        y = sample(100)
        f = model.quantile_path(spec, beta, y, -0.8).f
        ref = model.check_loss(0.05, y - f).sum()
        assert model.objective(spec, beta, y, -0.8) == pytest.approx(ref)

    def test_objective_infinite_on_bad_path(self):
        spec = model.ModelSpec.sav(0.05)
        val = model.objective(spec, np.array([5.0, 1.5, 2.0]),
                              sample(2000), 1.0)
        assert val == np.inf


class TestModelSpec:
    def test_param_dims(self):
        assert model.ModelSpec.sav(0.1).param_dim == 3
        assert model.ModelSpec.asym_slope(0.1).param_dim == 4
        assert model.ModelSpec.igarch(0.1).param_dim == 3
        assert model.ModelSpec.adaptive(0.1).param_dim == 1
        spec = model.ModelSpec.generic(0.1, 2, [("abs", 1), ("y", 3)])
        assert spec.param_dim == 5

    def test_tau_validated(self):
        with pytest.raises(ValueError):
            model.ModelSpec.sav(0.0)
        with pytest.raises(ValueError):
            model.ModelSpec.sav(1.0)

    def test_generic_lag_validation(self):
        with pytest.raises(ValueError):
            model.ModelSpec.generic(0.5, 1, [("abs", 0)])
        with pytest.raises(ValueError):
            model.ModelSpec.generic(0.5, 1, [("abs", 1)], lead=("pos", 0))

    def test_adaptive_slope_validated(self):
        with pytest.raises(ValueError):
            model.ModelSpec.adaptive(0.5, gslope=0.0)
