"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured values (run pytest with -s or rely on the
captured output of failures).

The sample-size criterion is implemented exactly as stated and currently
fails: the pooled prior this pipeline produces cannot reach 80% relative
assurance with a 5% null cap inside the stated size band.  The test prints
the measured curve; the decisions ledger carries the full analysis.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats as sstats
from scipy.integrate import quad

from priorpool.aggregate import build_mixture, sample_mixture
from priorpool.assurance import (
    AnalysisPrior,
    GridSpec,
    TargetUnreachable,
    TrialDesign,
    assurance,
    find_sample_size,
    max_assurance,
    ni_posterior_prob,
)
from priorpool.distfit import BetaParams, ElicitedTriplet, beta_cdf, beta_quantile, fit_beta_from_triplet
from priorpool.margin import median_margin, parse_survey
from priorpool.pearson4 import PearsonIVParams, p4_fit_moments, p4_pdf, p4_sample


def report(name: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE[{name}]: {'PASS' if ok else 'FAIL'} - {detail}")


class TestMarginCriterion:
    def test_margin_reproduction(self, survey_csv):
        t0 = time.time()
        value = median_margin(parse_survey(survey_csv))
        elapsed = time.time() - t0
        ok = value == 4.0 and elapsed < 1.0
        report("margin", ok, f"median={value} elapsed={elapsed:.3f}s")
        assert value == 4.0
        assert elapsed < 1.0


@pytest.fixture(scope="module")
def timed_mixture(round2_marginals, induced_r):
    """Fresh timed pool-and-sample run; the criterion bounds this at 10 s."""
    t0 = time.time()
    mixture = build_mixture(round2_marginals, induced_r)
    samples = sample_mixture(mixture, 1_000_000, seed=123)
    return samples, time.time() - t0


class TestMixtureReproduction:
    def test_p1_mean_and_median(self, timed_mixture):
        samples, elapsed = timed_mixture
        mean = float(samples.p1.mean())
        median = float(np.median(samples.p1))
        ok = abs(mean - 0.0801) <= 0.001 and abs(median - 0.0644) <= 0.005 and elapsed < 10.0
        report(
            "table3-p1",
            ok,
            f"mean={mean:.5f} (target 0.0801±0.001) median={median:.5f} "
            f"(target 0.0644±0.005) elapsed={elapsed:.1f}s",
        )
        assert abs(mean - 0.0801) <= 0.001
        assert abs(median - 0.0644) <= 0.005
        assert elapsed < 10.0

    def test_p2_and_delta_consistency(self, timed_mixture):
        samples, _ = timed_mixture
        p2_mean = float(samples.p2.mean())
        delta_mean = float(samples.delta.mean())
        ok = abs(p2_mean - 0.103) <= 0.003 and 0.015 <= delta_mean <= 0.026
        report(
            "table3-p2-delta",
            ok,
            f"p2_mean={p2_mean:.5f} (target 0.103±0.003) "
            f"delta_mean={delta_mean:.5f} (target [0.015, 0.026])",
        )
        assert abs(p2_mean - 0.103) <= 0.003
        assert 0.015 <= delta_mean <= 0.026

    def test_correlation_band(self, timed_mixture, induced_r, hierarchical_fit):
        samples, _ = timed_mixture
        corr = float(np.corrcoef(samples.p1, samples.p2)[0, 1])
        ok = 0.25 <= corr <= 0.55
        report(
            "correlation",
            ok,
            f"corr={corr:.4f} (band [0.25, 0.55]); copula r={induced_r:.4f}, "
            f"mcmc converged={hierarchical_fit.converged}",
        )
        assert 0.25 <= corr <= 0.55


class TestSampleSizeCriterion:
    def test_sample_size_search(self, mixture_samples, analysis_prior):
        template = TrialDesign(
            margin=0.04, n_total=2, sims=1000, decision_threshold=0.95, seed=2027
        )
        t0 = time.time()
        try:
            res = find_sample_size(
                template,
                mixture_samples,
                analysis_prior,
                n_range=(1000, 2600),
                n_step=50,
            )
        except TargetUnreachable as exc:
            elapsed = time.time() - t0
            tail = ", ".join(
                f"n={r.n_total}: rel={r.relative_assurance:.3f} null={r.null_assurance:.3f}"
                for r in exc.curve[-5:]
            )
            report(
                "sample-size",
                False,
                f"TargetUnreachable through n=2600 in {elapsed:.0f}s; curve tail: {tail}. "
                "The pooled prior's relative assurance tops out near 0.78-0.80 inside "
                "the band while null assurance stays ~0.055; see the decisions ledger.",
            )
            pytest.fail(
                "sample-size criterion unattainable for this realization: "
                f"no n in [1000, 2600] meets rel>=0.80 with null<=0.05 ({tail})"
            )
        elapsed = time.time() - t0
        cap = 0.05 + 2.0 * math.sqrt(0.05 * 0.95 / template.sims)
        in_band = 1500 <= res.chosen.n_total <= 2200
        null_ok = res.chosen.null_assurance <= cap
        ok = in_band and null_ok and elapsed <= 600.0
        report(
            "sample-size",
            ok,
            f"n={res.chosen.n_total} rel={res.chosen.relative_assurance:.3f} "
            f"null={res.chosen.null_assurance:.3f} (cap {cap:.4f}) elapsed={elapsed:.0f}s",
        )
        assert in_band
        assert null_ok
        assert elapsed <= 600.0


class TestPropertySuites:
    def test_beta_inversion(self):
        rng = np.random.default_rng(42)
        levels = np.array([0.025, 0.25, 0.5, 0.75, 0.975])
        worst = 0.0
        for _ in range(200):
            a, b = rng.uniform(0.5, 50, 2)
            params = BetaParams(a, b)
            err = np.abs(beta_cdf(params, beta_quantile(params, levels)) - levels).max()
            worst = max(worst, float(err))
        ok = worst < 1e-9
        report("prop-beta-inversion", ok, f"worst |cdf(quantile(q)) - q| = {worst:.2e}")
        assert worst < 1e-9

    def test_triplet_fit_round_trip(self):
        rng = np.random.default_rng(1234)
        worst = 0.0
        for _ in range(100):
            a, b = rng.uniform(1.0001, 50, 2)
            params = BetaParams(a, b)
            mode = (a - 1) / (a + b - 2)
            triplet = ElicitedTriplet(
                beta_quantile(params, 0.025), mode, beta_quantile(params, 0.975)
            )
            fit = fit_beta_from_triplet(triplet)
            worst = max(
                worst, abs(fit.params.alpha - a) / a, abs(fit.params.beta - b) / b
            )
        ok = worst < 0.01
        report("prop-triplet-round-trip", ok, f"worst relative error = {worst:.2e}")
        assert worst < 0.01

    def test_copula_marginal_preservation(self):
        high, low = BetaParams(2.0, 23.0), BetaParams(2.4, 21.0)
        samples = sample_mixture(build_mixture([(high, low)], r=0.6), 100_000, seed=77)
        p1_p = sstats.kstest(samples.p1, lambda x: beta_cdf(high, x)).pvalue
        p2_p = sstats.kstest(samples.p2, lambda x: beta_cdf(low, x)).pvalue
        ok = p1_p > 0.01 and p2_p > 0.01
        report("prop-copula-marginals", ok, f"KS p-values: p1={p1_p:.3f}, p2={p2_p:.3f}")
        assert p1_p > 0.01
        assert p2_p > 0.01

    def test_pearson_normalization(self):
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(50):
            p = PearsonIVParams(
                m=rng.uniform(1.000001, 10.0),
                nu=rng.uniform(-5.0, 5.0),
                lam=rng.uniform(-2.0, 2.0),
                a=rng.uniform(0.05, 3.0),
            )
            lo, hi = p.lam - 50 * p.a, p.lam + 50 * p.a
            head, _ = quad(lambda x: p4_pdf(p, x), -np.inf, lo, limit=400)
            mid, _ = quad(lambda x: p4_pdf(p, x), lo, hi, limit=400, points=[p.lam])
            tail, _ = quad(lambda x: p4_pdf(p, x), hi, np.inf, limit=400)
            worst = max(worst, abs(head + mid + tail - 1.0))
        ok = worst < 1e-6
        report("prop-pearson-normalization", ok, f"worst |integral - 1| = {worst:.2e}")
        assert worst < 1e-6

    def test_pearson_fit_sample_round_trip(self):
        p = PearsonIVParams(m=5.0, nu=1.0, lam=0.0, a=1.0)
        fit = p4_fit_moments(p4_sample(p, 1_000_000, seed=0))
        worst = max(
            abs(fit.m - p.m) / p.m,
            abs(fit.nu - p.nu) / abs(p.nu),
            abs(fit.a - p.a) / p.a,
        )
        ok = worst < 0.05
        report("prop-pearson-round-trip", ok, f"worst relative error = {worst:.3f}")
        assert worst < 0.05

    def test_grid_refinement_stability(self, analysis_prior):
        base = ni_posterior_prob(60, 75, 925, analysis_prior, 0.04)
        fine = ni_posterior_prob(60, 75, 925, analysis_prior, 0.04, GridSpec(1600, 1600))
        diff = abs(base - fine)
        ok = diff < 0.002
        report("prop-grid-stability", ok, f"|800^2 - 1600^2| = {diff:.2e}")
        assert diff < 0.002

    def test_assurance_determinism(self, mixture_samples, analysis_prior):
        design = TrialDesign(margin=0.04, n_total=600, sims=150, seed=12)
        a = assurance(design, mixture_samples, analysis_prior)
        b = assurance(design, mixture_samples, analysis_prior)
        ok = a == b
        report("prop-assurance-determinism", ok, f"rerun identical: {a == b}")
        assert a == b

    def test_assurance_monotone_in_margin(self, mixture_samples, analysis_prior):
        values = []
        for margin in (0.02, 0.04, 0.06):
            design = TrialDesign(margin=margin, n_total=800, sims=250, seed=21)
            values.append(assurance(design, mixture_samples, analysis_prior).assurance)
        ok = all(x <= y for x, y in zip(values, values[1:]))
        report("prop-assurance-monotone", ok, f"assurance at margins 2/4/6%: {values}")
        assert ok

    def test_hierarchical_sbc(self):
        from priorpool.aggregate import McmcConfig, fit_hierarchical

        rng = np.random.default_rng(2024)
        n, K, p = 12, 500, 3
        sigma, rho, tau = 0.5, 0.6, 0.3
        alpha = np.array([-2.3, -2.0])
        beta = rng.normal(0, 0.3, size=(2, p))
        x = rng.normal(size=(n, p))
        u = rng.multivariate_normal(
            [0, 0], sigma**2 * np.array([[1, rho], [rho, 1]]), size=n
        )
        z = np.empty((n, 2, K))
        for i in range(n):
            for j in range(2):
                z[i, j] = rng.normal(alpha[j] + x[i] @ beta[j] + u[i, j], tau, K)
        post = fit_hierarchical(z, x, McmcConfig(seed=5))
        zscores = {
            "sigma": abs(post.sigma.mean() - sigma) / post.sigma.std(ddof=1),
            "rho": abs(post.rho.mean() - rho) / post.rho.std(ddof=1),
            "tau": abs(post.tau.mean() - tau) / post.tau.std(ddof=1),
        }
        ok = all(v < 3.0 for v in zscores.values()) and post.converged
        report(
            "prop-hierarchical-sbc",
            ok,
            f"|z|: " + ", ".join(f"{k}={v:.2f}" for k, v in zscores.items()) + f"; converged={post.converged}",
        )
        assert post.converged
        for v in zscores.values():
            assert v < 3.0


class TestStateMachineSuite:
    def test_ten_thousand_sequences(self):
        from priorpool.elicitation import (
            AlreadyClosed,
            Arm,
            DuplicateExpert,
            ExpertProfile,
            NoSubmissions,
            SessionClosed,
            SessionState,
            UnknownExpert,
            WorkshopSession,
            WrongRoundState,
        )

        triplets = [
            ElicitedTriplet.from_counts(1, 7, 40),
            ElicitedTriplet.from_counts(2, 8, 25),
            ElicitedTriplet.from_counts(5, 12, 30),
        ]

        def profile(i):
            return ExpertProfile(
                expert_id=f"e{i}",
                country="Canada",
                years_practice_band="11-15",
                prescribed_060_last_year=True,
                prescribed_015_last_year=False,
                max_dose_mg=10.0,
                trained_trials=True,
                trained_stats=True,
            )

        rng = np.random.default_rng(314159)
        violations = 0
        t0 = time.time()
        for _ in range(10_000):
            s = WorkshopSession("w")
            registered = []
            for _step in range(int(rng.integers(4, 14))):
                op = int(rng.integers(0, 10))
                before = s.state
                try:
                    if op <= 2 and len(registered) < 3:
                        p = profile(len(registered))
                        s.register_expert(p)
                        registered.append(p.expert_id)
                    elif op <= 5:
                        s.advance()
                    elif op <= 8 and registered:
                        rnd = int(rng.integers(1, 3))
                        arm = Arm.HIGH_DOSE if rng.integers(0, 2) else Arm.LOW_DOSE
                        eid = registered[int(rng.integers(0, len(registered)))]
                        s.submit(eid, rnd, arm, triplets[int(rng.integers(0, 3))])
                        if (rnd == 1) != (before is SessionState.ROUND1_OPEN):
                            violations += 1
                        if (rnd == 2) != (before is SessionState.ROUND2_OPEN):
                            violations += 1
                    elif registered:
                        s.boxplots(1, Arm.HIGH_DOSE)
                        if before.order < SessionState.DISCUSSION.order:
                            violations += 1
                except (
                    WrongRoundState,
                    UnknownExpert,
                    SessionClosed,
                    AlreadyClosed,
                    NoSubmissions,
                    DuplicateExpert,
                ):
                    if s.state is not before:
                        violations += 1
                keys = list(s.submissions)
                if len(keys) != len(set(keys)):
                    violations += 1
        elapsed = time.time() - t0
        ok = violations == 0
        report(
            "state-machine",
            ok,
            f"10000 sequences, {violations} invariant violations, {elapsed:.1f}s",
        )
        assert violations == 0
