import csv
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

DATA_DIR = Path(__file__).parent.parent / "data"


@pytest.fixture(scope="session")
def moments_csv() -> Path:
    return DATA_DIR / "expert_moments_round2.csv"


@pytest.fixture(scope="session")
def profiles_csv() -> Path:
    return DATA_DIR / "expert_profiles.csv"


@pytest.fixture(scope="session")
def survey_csv() -> Path:
    return DATA_DIR / "margin_survey.csv"


@pytest.fixture(scope="session")
def round2_marginals(moments_csv):
    """Per-expert (high, low) beta marginals from the bundled moments table."""
    from priorpool.distfit import beta_from_moments

    per_expert = {}
    with open(moments_csv) as fh:
        for row in csv.DictReader(fh):
            per_expert.setdefault(row["expert_id"], {})[row["arm"]] = beta_from_moments(
                float(row["mean"]), float(row["sd"])
            )
    return [(per_expert[k]["high"], per_expert[k]["low"]) for k in sorted(per_expert)]


@pytest.fixture(scope="session")
def expert_profiles(profiles_csv):
    from priorpool.elicitation import ExpertProfile

    profiles = []
    with open(profiles_csv) as fh:
        for row in csv.DictReader(fh):
            profiles.append(
                ExpertProfile(
                    expert_id=row["expert_id"],
                    country=row["country"],
                    years_practice_band=row["years_practice_band"],
                    prescribed_060_last_year=row["prescribed_060_last_year"] == "yes",
                    prescribed_015_last_year=row["prescribed_015_last_year"] == "yes",
                    max_dose_mg=float(row["max_dose_mg"]),
                    trained_trials=row["trained_trials"] == "yes",
                    trained_stats=row["trained_stats"] == "yes",
                )
            )
    return profiles


@pytest.fixture(scope="session")
def hierarchical_fit(round2_marginals, expert_profiles):
    """The full covariate-adjusted fit on the bundled workshop dataset."""
    from priorpool.aggregate import (
        McmcConfig,
        encode_covariates,
        fit_hierarchical,
        pseudo_samples,
    )

    z = pseudo_samples(round2_marginals, K=500, seed=42)
    x = encode_covariates(expert_profiles)
    return fit_hierarchical(z, x, McmcConfig(seed=7))


@pytest.fixture(scope="session")
def induced_r(hierarchical_fit) -> float:
    from priorpool.aggregate import induced_corr

    return induced_corr(hierarchical_fit)


@pytest.fixture(scope="session")
def mixture_samples(round2_marginals, induced_r):
    """One million joint draws from the pooled prior; shared across tests."""
    from priorpool.aggregate import build_mixture, sample_mixture

    mixture = build_mixture(round2_marginals, induced_r)
    return sample_mixture(mixture, 1_000_000, seed=123)


@pytest.fixture(scope="session")
def analysis_prior(mixture_samples):
    from priorpool.assurance import AnalysisPrior

    return AnalysisPrior.from_samples(mixture_samples)
