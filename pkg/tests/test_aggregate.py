import math

import numpy as np
import pytest
from scipy import stats

from priorpool.aggregate import (
    COVARIATE_NAMES,
    HierarchicalPosterior,
    McmcConfig,
    MissingField,
    TooFewExperts,
    build_mixture,
    encode_covariates,
    fit_hierarchical,
    induced_corr,
    load_samples,
    mixture_summary,
    pseudo_samples,
    sample_mixture,
    save_samples,
)
from priorpool.distfit import BetaParams

from oracles import beta_cdf_oracle


class TestEncodeCovariates:
    def test_bundled_profiles_match_survey_tallies(self, expert_profiles):
        x = encode_covariates(expert_profiles)
        cols = dict(zip(COVARIATE_NAMES, x.T))
        assert x.shape == (12, 6)
        assert cols["prescribed_060"].sum() == 12
        assert cols["prescribed_015"].sum() == 2
        assert cols["trained_trials"].sum() == 10
        assert cols["trained_stats"].sum() == 11
        # standardized continuous columns
        for name in ("years_practice", "max_dose_mg"):
            assert cols[name].mean() == pytest.approx(0.0, abs=1e-12)
            assert cols[name].std(ddof=1) == pytest.approx(1.0, rel=1e-12)

    def test_identical_profiles_zero_continuous_columns(self, expert_profiles):
        same = [p for p in expert_profiles[:1]] * 5
        x = encode_covariates(same)
        assert np.allclose(x[:, 0], 0.0)
        assert np.allclose(x[:, 3], 0.0)

    def test_single_expert_centered_only(self, expert_profiles):
        x = encode_covariates(expert_profiles[:1])
        assert x.shape == (1, 6)
        assert x[0, 0] == 0.0 and x[0, 3] == 0.0

    def test_missing_field(self):
        with pytest.raises(MissingField):
            encode_covariates([])


class TestPseudoSamples:
    def test_uniform_marginal_centers_at_zero(self):
        z = pseudo_samples([(BetaParams(1, 1), BetaParams(1, 1))], K=10_000, seed=3)
        assert abs(z[0, 0].mean()) < 4.0 / math.sqrt(10_000) * 2.0

    def test_seed_reproducible(self):
        experts = [(BetaParams(2, 18), BetaParams(3, 20))]
        a = pseudo_samples(experts, K=500, seed=11)
        b = pseudo_samples(experts, K=500, seed=11)
        assert np.array_equal(a, b)

    def test_logit_mean_matches_quadrature_oracle(self):
        # E[logit theta] for Beta(2, 18), frozen from adaptive quadrature
        expected = -2.4395525226438344
        z = pseudo_samples([(BetaParams(2, 18), BetaParams(2, 18))], K=200_000, seed=5)
        se = z[0, 0].std() / math.sqrt(z.shape[2])
        assert z[0, 0].mean() == pytest.approx(expected, abs=4 * se)

    def test_k_floor(self):
        with pytest.raises(ValueError):
            pseudo_samples([(BetaParams(1, 1), BetaParams(1, 1))], K=50, seed=0)


def simulate_model(rng, n=12, K=500, p=3, sigma=0.5, rho=0.6, tau=0.3):
    alpha = np.array([-2.3, -2.0])
    beta = rng.normal(0, 0.3, size=(2, p))
    x = rng.normal(size=(n, p))
    cov_u = sigma**2 * np.array([[1.0, rho], [rho, 1.0]])
    u = rng.multivariate_normal([0.0, 0.0], cov_u, size=n)
    z = np.empty((n, 2, K))
    for i in range(n):
        for j in range(2):
            z[i, j] = rng.normal(alpha[j] + x[i] @ beta[j] + u[i, j], tau, K)
    return z, x


class TestHierarchicalFit:
    def test_simulation_based_calibration(self):
        rng = np.random.default_rng(2024)
        z, x = simulate_model(rng)
        post = fit_hierarchical(z, x, McmcConfig(seed=5))
        assert post.converged, post.rhat
        for draws, truth in [(post.sigma, 0.5), (post.rho, 0.6), (post.tau, 0.3)]:
            assert abs(draws.mean() - truth) < 3.0 * draws.std(ddof=1)

    def test_posterior_support(self):
        rng = np.random.default_rng(1)
        z, x = simulate_model(rng, n=6, K=200)
        post = fit_hierarchical(z, x, McmcConfig(chains=2, burn_in=300, draws=1000, seed=2))
        assert np.all(post.sigma > 0)
        assert np.all(post.tau > 0)
        assert np.all((post.rho > -1) & (post.rho < 1))

    def test_zero_variance_input_degenerates_visibly(self):
        z = np.zeros((5, 2, 200))
        post = fit_hierarchical(
            z, np.zeros((5, 0)), McmcConfig(chains=2, burn_in=300, draws=600, seed=1)
        )
        # the latent pairs collapse onto a common value: between-expert
        # spread shrinks to the sampling noise floor (or the fit is flagged)
        between_expert_spread = post.u.std(axis=1).max()
        assert (not post.converged) or between_expert_spread < 0.01

    def test_too_few_experts(self):
        z = np.zeros((1, 2, 200))
        with pytest.raises(TooFewExperts):
            fit_hierarchical(z, np.zeros((1, 0)), McmcConfig())

    def test_acceptance_rate_in_tuned_band(self, hierarchical_fit):
        assert 0.1 < hierarchical_fit.rho_acceptance < 0.6

    def test_real_fit_converged(self, hierarchical_fit):
        assert hierarchical_fit.converged, hierarchical_fit.rhat


class TestInducedCorr:
    def test_single_draw_arithmetic(self):
        post = HierarchicalPosterior(
            alpha=np.zeros((1, 2)),
            beta=np.zeros((1, 2, 0)),
            u=np.zeros((1, 3, 2)),
            sigma=np.array([1.0]),
            rho=np.array([0.5]),
            tau=np.array([1.0]),
            chains=1,
            draws_per_chain=1,
            rho_acceptance=1.0,
        )
        assert induced_corr(post) == pytest.approx(0.25)

    def test_zero_rho_gives_zero(self):
        post = HierarchicalPosterior(
            alpha=np.zeros((4, 2)),
            beta=np.zeros((4, 2, 0)),
            u=np.zeros((4, 3, 2)),
            sigma=np.full(4, 0.7),
            rho=np.zeros(4),
            tau=np.full(4, 0.2),
            chains=1,
            draws_per_chain=4,
            rho_acceptance=1.0,
        )
        assert induced_corr(post) == 0.0

    def test_vanishing_tau_limit_is_rho_mean(self):
        rho = np.array([0.2, 0.4, 0.6])
        post = HierarchicalPosterior(
            alpha=np.zeros((3, 2)),
            beta=np.zeros((3, 2, 0)),
            u=np.zeros((3, 3, 2)),
            sigma=np.full(3, 0.9),
            rho=rho,
            tau=np.full(3, 1e-12),
            chains=1,
            draws_per_chain=3,
            rho_acceptance=1.0,
        )
        assert induced_corr(post) == pytest.approx(rho.mean(), abs=1e-9)


class TestMixture:
    def test_single_expert_mixture(self):
        m = build_mixture([(BetaParams(2, 8), BetaParams(3, 9))], r=0.4)
        assert len(m.components) == 1
        assert m.weights[0] == 1.0

    def test_equal_weights_for_twelve(self, round2_marginals):
        m = build_mixture(round2_marginals, r=0.3)
        assert len(m.components) == 12
        assert np.allclose(m.weights, 1.0 / 12.0)

    def test_zero_corr_components_independent(self):
        m = build_mixture([(BetaParams(2, 8), BetaParams(3, 9))], r=0.0)
        s = sample_mixture(m, 200_000, seed=9)
        assert abs(np.corrcoef(s.p1, s.p2)[0, 1]) < 0.01

    def test_copula_preserves_uniform_marginals(self):
        m = build_mixture([(BetaParams(1, 1), BetaParams(1, 1))], r=0.0)
        s = sample_mixture(m, 100_000, seed=21)
        assert stats.kstest(s.p1, "uniform").pvalue > 0.01
        assert stats.kstest(s.p2, "uniform").pvalue > 0.01

    def test_copula_preserves_beta_marginals_high_corr(self):
        m = build_mixture([(BetaParams(2, 18), BetaParams(2, 18))], r=0.99)
        s = sample_mixture(m, 100_000, seed=22)
        assert np.corrcoef(s.p1, s.p2)[0, 1] > 0.9
        grid = np.linspace(0.001, 0.6, 200)
        cdf_ref = beta_cdf_oracle(2, 18, grid)
        empirical = np.searchsorted(np.sort(s.p1), grid) / s.size
        assert np.abs(empirical - cdf_ref).max() < 0.01

    def test_monotone_coupling_in_r(self):
        marginals = [(BetaParams(2, 18), BetaParams(2, 18))]
        corrs = []
        for r in (-0.5, 0.0, 0.5, 0.9):
            s = sample_mixture(build_mixture(marginals, r), 100_000, seed=33)
            corrs.append(np.corrcoef(s.p1, s.p2)[0, 1])
        assert all(a < b for a, b in zip(corrs, corrs[1:]))

    def test_delta_is_exact_difference(self):
        m = build_mixture([(BetaParams(2, 8), BetaParams(3, 9))], r=0.2)
        s = sample_mixture(m, 10_000, seed=4)
        assert np.array_equal(s.delta, s.p2 - s.p1)

    def test_seed_reproducibility(self, round2_marginals):
        m = build_mixture(round2_marginals, r=0.4)
        a = sample_mixture(m, 50_000, seed=77)
        b = sample_mixture(m, 50_000, seed=77)
        assert np.array_equal(a.p1, b.p1) and np.array_equal(a.p2, b.p2)

    def test_mixture_mean_identity(self, round2_marginals):
        m = build_mixture(round2_marginals, r=0.4)
        s = sample_mixture(m, 200_000, seed=55)
        expected_p1 = np.mean([c.marginal_high.alpha / (c.marginal_high.alpha + c.marginal_high.beta) for c in m.components])
        expected_p2 = np.mean([c.marginal_low.alpha / (c.marginal_low.alpha + c.marginal_low.beta) for c in m.components])
        assert abs(s.p1.mean() - expected_p1) < 4 * s.p1.std() / math.sqrt(s.size)
        assert abs(s.p2.mean() - expected_p2) < 4 * s.p2.std() / math.sqrt(s.size)


class TestSummaryAndIO:
    def test_summary_fields(self, round2_marginals):
        s = sample_mixture(build_mixture(round2_marginals, 0.4), 50_000, seed=8)
        summary = mixture_summary(s)
        assert set(summary) == {"p1", "p2", "delta", "corr_p1_p2"}
        assert summary["delta"]["mean"] == pytest.approx(
            summary["p2"]["mean"] - summary["p1"]["mean"], abs=1e-15
        )

    def test_save_load_round_trip(self, tmp_path, round2_marginals):
        s = sample_mixture(build_mixture(round2_marginals, 0.4), 1000, seed=2)
        csv_path = tmp_path / "prior.csv"
        sidecar = save_samples(s, csv_path)
        assert csv_path.exists() and sidecar.exists()
        with open(csv_path) as fh:
            assert fh.readline().strip() == "p1,p2,delta"
        loaded = load_samples(csv_path)
        assert np.allclose(loaded.p1, s.p1)
        assert np.allclose(loaded.delta, s.delta)
        assert loaded.seed == 2 and loaded.components == 12
        assert loaded.copula_corr == pytest.approx(0.4)
