"""priorpool: expert elicitation, prior pooling, and assurance sample sizes.

Submodules:
  distfit      beta numerics (triplet fitting, moments, pdf/cdf/quantiles)
  elicitation  workshop sessions, rounds, submissions, boxplots
  aggregate    covariate-adjusted latent-effects pooling, copula mixture
  pearson4     Pearson Type IV density/cdf/sampling/moment fit
  margin       non-inferiority margin survey
  assurance    trial simulation, grid posterior, sample-size search
  service      HTTP facade for live workshops
  cli          batch subcommands
"""

__version__ = "0.1.0"
