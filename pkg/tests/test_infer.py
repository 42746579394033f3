"""Inference: chi-square tail, Wald invariances, DQ regression oracle."""

import numpy as np
import pytest
import scipy.stats

from caviarlab import covmat, dgp, estimate, infer, model
from caviarlab.errors import SingularMatrixError


class TestChi2Sf:
    def test_matches_scipy(self):
        for dof in range(1, 16):
            for x in (0.0, 0.3, 1.0, 3.84, 10.0, 40.0, 120.0):
                ref = scipy.stats.chi2(dof).sf(x)
                assert infer.chi2_sf(x, dof) == pytest.approx(
                    ref, rel=1e-11, abs=1e-300)

    def test_dof_one_identity(self):
        for x in (0.5, 3.84, 9.0):
            ref = 2.0 * (1.0 - scipy.stats.norm.cdf(np.sqrt(x)))
            assert infer.chi2_sf(x, 1) == pytest.approx(ref, rel=1e-12)

    def test_dof_two_identity(self):
        for x in (0.5, 3.0, 12.0):
            assert infer.chi2_sf(x, 2) == pytest.approx(np.exp(-x / 2),
                                                        rel=1e-13)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            infer.chi2_sf(-1.0, 2)
        with pytest.raises(ValueError):
            infer.chi2_sf(1.0, 0)


def small_sandwich(p=4, seed=0):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(p, p))
    cov = m @ m.T + p * np.eye(p)
    return covmat.SandwichEstimate(np.eye(p), np.eye(p), "stub",
                                   np.ones(10), cov)


class TestWald:
    def test_zero_statistic_when_restriction_holds(self):
        sw = small_sandwich()
        beta = np.array([0.1, 0.2, 0.7, 0.7])
        res = infer.wald(beta, sw, [[0.0, 0.0, 1.0, -1.0]], [0.0], 500)
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    def test_quadratic_form_brute_force(self):
        sw = small_sandwich(seed=1)
        beta = np.array([0.5, -0.3, 0.2, 0.9])
        R = np.array([[1.0, 0, 0, 0], [0, 1.0, 1.0, 0]])
        gamma = np.array([0.2, 0.1])
        T = 321
        res = infer.wald(beta, sw, R, gamma, T)
        diff = R @ beta - gamma
        ref = T * diff @ np.linalg.inv(R @ sw.cov @ R.T) @ diff
        assert res.statistic == pytest.approx(ref, rel=1e-10)
        assert res.dof == 2

    def test_invariance_under_row_recombination(self):
        sw = small_sandwich(seed=2)
        beta = np.array([0.5, -0.3, 0.2, 0.9])
        R = np.array([[1.0, 0, 1.0, 0], [0, 1.0, 0, -1.0]])
        gamma = np.array([0.3, -0.2])
        M = np.array([[2.0, 1.0], [0.5, -1.0]])  # invertible
        a = infer.wald(beta, sw, R, gamma, 200)
        b = infer.wald(beta, sw, M @ R, M @ gamma, 200)
        assert a.statistic == pytest.approx(b.statistic, abs=1e-8)
        assert a.p_value == pytest.approx(b.p_value, abs=1e-8)

    def test_dimension_mismatch(self):
        sw = small_sandwich()
        with pytest.raises(ValueError):
            infer.wald(np.zeros(4), sw, [[1.0, 0.0]], [0.0], 100)

    def test_singular_bracket(self):
        sw = covmat.SandwichEstimate(np.eye(2), np.eye(2), "stub",
                                     np.ones(5), np.zeros((2, 2)))
        with pytest.raises(SingularMatrixError):
            infer.wald(np.zeros(2), sw, [[1.0, 0.0]], [0.0], 100)


class TestParamReport:
    def test_se_and_p_values(self):
        sim = dgp.simulate(dgp.catalog("R1"), 800, 0)
        spec = model.ModelSpec.asym_slope(0.5)
        cfg = estimate.EstimateConfig(n_trials=40, m_keep=8, a_polish=2,
                                      seed=0)
        fit_res = estimate.fit(spec, sim.y, cfg)
        sw = covmat.kernel_sandwich(spec, fit_res)
        rows = infer.param_report(fit_res, sw, 800)
        assert [r["param"] for r in rows] == ["beta0", "beta1", "beta2",
                                              "beta3"]
        for k, row in enumerate(rows):
            se = np.sqrt(sw.cov[k, k] / 800)
            assert row["se"] == pytest.approx(se)
            ref_p = 2 * scipy.stats.norm.sf(abs(fit_res.beta[k]) / se)
            assert row["p_value"] == pytest.approx(ref_p, abs=1e-10)
            assert row["significant"] == (row["p_value"] < 0.05)


class TestExceedance:
    def test_rate_percentage(self):
        y = np.array([1.0, -2.0, 0.5, -1.5])
        f = np.array([0.0, 0.0, 0.0, 0.0])
        assert infer.exceedance_rate(y, f) == 50.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            infer.exceedance_rate(np.array([]), np.array([]))


class TestDq:
    def test_statistic_matches_ols_oracle(self):
        # oracle: lstsq projection of hits on instruments
        rng = np.random.default_rng(1)
        T, tau = 300, 0.1
        y = rng.normal(size=T)
        # a varying fitted path keeps the instrument matrix full rank
        f = np.quantile(y, tau) + 0.05 * np.sin(np.arange(T))
        hits = infer.hit_sequence(y, f, tau)
        trimmed, X = infer.dq_instruments(hits, f)
        proj = X @ np.linalg.lstsq(X, trimmed, rcond=None)[0]
        ref = trimmed @ proj / (tau * (1 - tau))
        res = infer.dq_test(trimmed, X, tau)
        assert res.statistic == pytest.approx(ref, rel=1e-8)
        assert res.dof == X.shape[1]

    def test_instruments_layout(self):
        hits = np.arange(10.0)
        f = np.arange(10.0) + 100.0
        trimmed, X = infer.dq_instruments(hits, f, n_lags=4)
        assert trimmed.shape == (6,)
        assert X.shape == (6, 6)
        assert np.all(X[:, 0] == 1.0)
        # first lag column at row 0 is hits[3]
        assert X[0, 1] == hits[3]
        assert X[0, 4] == hits[0]
        assert np.array_equal(X[:, 5], f[4:])

    def test_well_specified_model_rarely_rejects(self):
        # under a correct constant-quantile model DQ p-values should be
        # roughly uniform; check the rejection rate over 40 draws
        rng = np.random.default_rng(2)
        tau = 0.25
        rejections = 0
        for _ in range(40):
            y = rng.normal(size=400)
            f = np.quantile(y, tau) + 0.01 * np.sin(np.arange(400))
            hits = infer.hit_sequence(y, f, tau)
            trimmed, X = infer.dq_instruments(hits, f)
            if infer.dq_test(trimmed, X, tau).p_value < 0.05:
                rejections += 1
        assert rejections <= 7

    def test_clustered_hits_rejected(self):
        # violations bunched together must drive the statistic up
        tau = 0.1
        T = 400
        y = np.zeros(T)
        f = -1.0 + 0.01 * np.sin(np.arange(T))
        y[:40] = -2.0  # all violations at the start
        hits = infer.hit_sequence(y, f, tau)
        trimmed, X = infer.dq_instruments(hits, f)
        assert infer.dq_test(trimmed, X, tau).p_value < 1e-6

    def test_short_sample_rejected(self):
        with pytest.raises(ValueError):
            infer.dq_instruments(np.ones(5), np.ones(5), n_lags=4)
