"""Pool per-expert beta marginals into a correlated bivariate mixture prior.

Pipeline: draw logit-scale pseudo-samples from each expert's fitted betas,
fit a hierarchical random-effects model with covariate adjustment and a
correlated per-expert latent pair, reduce the posterior to a single induced
correlation, then couple each expert's own marginals through a Gaussian
copula with that correlation and pool the experts with equal weights.

The sampler is Metropolis-within-Gibbs: all blocks are conjugate except the
latent-pair correlation, which takes a tuned random-walk step.  Everything
runs on per-cell sufficient statistics, so iteration cost is independent of
the pseudo-sample count.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .distfit import BetaParams, beta_quantile
from .elicitation import ExpertProfile, band_midpoint
from .errors import SchemaError, ToolkitError

__all__ = [
    "MissingField",
    "TooFewExperts",
    "McmcConfig",
    "HierarchicalPosterior",
    "BivariateExpertPrior",
    "MixturePrior",
    "PriorSampleSet",
    "encode_covariates",
    "pseudo_samples",
    "fit_hierarchical",
    "induced_corr",
    "build_mixture",
    "sample_mixture",
    "mixture_summary",
    "save_samples",
    "load_samples",
]


class MissingField(ToolkitError):
    pass


class TooFewExperts(ToolkitError):
    pass


COVARIATE_NAMES = (
    "years_practice",
    "prescribed_060",
    "prescribed_015",
    "max_dose_mg",
    "trained_trials",
    "trained_stats",
)
_STANDARDIZED = {"years_practice", "max_dose_mg"}


def encode_covariates(profiles: list[ExpertProfile]) -> np.ndarray:
    """Numeric design matrix, one row per expert.

    Continuous columns (years practiced via band midpoints, max dose) are
    standardized to mean 0 / sd 1; binary survey answers stay 0/1.  With a
    single expert, or a constant column, only centering applies.
    """
    if not profiles:
        raise MissingField("no profiles given")
    rows = []
    for p in profiles:
        for name in (
            "country",
            "years_practice_band",
            "prescribed_060_last_year",
            "prescribed_015_last_year",
            "max_dose_mg",
            "trained_trials",
            "trained_stats",
        ):
            if getattr(p, name, None) is None:
                raise MissingField(f"profile {p.expert_id!r} is missing {name}")
        rows.append(
            [
                band_midpoint(p.years_practice_band),
                1.0 if p.prescribed_060_last_year else 0.0,
                1.0 if p.prescribed_015_last_year else 0.0,
                float(p.max_dose_mg),
                1.0 if p.trained_trials else 0.0,
                1.0 if p.trained_stats else 0.0,
            ]
        )
    x = np.asarray(rows, dtype=float)
    for col, name in enumerate(COVARIATE_NAMES):
        if name in _STANDARDIZED:
            x[:, col] -= x[:, col].mean()
            if x.shape[0] > 1:
                sd = x[:, col].std(ddof=1)
                if sd > 0.0:
                    x[:, col] /= sd
    return x


def pseudo_samples(
    experts: list[tuple[BetaParams, BetaParams]], K: int, seed
) -> np.ndarray:
    """Logit-scale draws from each expert's (high, low) marginals.

    Returns an array of shape (n_experts, 2, K); arm index 0 is the high
    dose.  The draws carry each marginal's full shape into the hierarchical
    fit, which only sees this logit-normal-ish cloud.
    """
    if K < 100:
        raise ValueError(f"need K >= 100 pseudo-samples per expert-arm, got {K}")
    rng = np.random.default_rng(seed)
    n = len(experts)
    z = np.empty((n, 2, K))
    for i, (high, low) in enumerate(experts):
        for j, marg in enumerate((high, low)):
            theta = np.clip(rng.beta(marg.alpha, marg.beta, K), 1e-12, 1.0 - 1e-12)
            z[i, j] = np.log(theta) - np.log1p(-theta)
    return z


@dataclass(frozen=True)
class McmcConfig:
    chains: int = 4
    burn_in: int = 2000
    draws: int = 10000
    seed: int = 0
    rho_step: float = 0.3
    rhat_threshold: float = 1.1


@dataclass
class HierarchicalPosterior:
    """Post-burn-in draws, concatenated across chains."""

    alpha: np.ndarray  # (D, 2) logit-scale intercepts
    beta: np.ndarray  # (D, 2, p) covariate effects
    u: np.ndarray  # (D, n, 2) latent expert pairs
    sigma: np.ndarray  # (D,) latent-effect sd
    rho: np.ndarray  # (D,) latent-effect correlation
    tau: np.ndarray  # (D,) residual sd
    chains: int
    draws_per_chain: int
    rho_acceptance: float
    collapsed_acceptance: float = float("nan")
    rhat: dict[str, float] = field(default_factory=dict)
    converged: bool = True


# IG(1, 1) hyperprior (shape, scale) applied to both variances.
_IG_SHAPE = 1.0
_IG_SCALE = 1.0
_ALPHA_PRIOR_VAR = 100.0
_BETA_PRIOR_VAR = 10.0
_COLLAPSED_INNER_STEPS = 20


def _run_chain(z_sum, z_sumsq, x, K, burn_in, keep, rho_step, rng):
    n, _ = z_sum.shape
    p = x.shape[1]
    zbar = z_sum / K
    total_obs = 2.0 * n * K

    alpha = zbar.mean(axis=0)
    u = zbar - alpha
    var_u = max(float(u.var()), 1e-4)
    sigma2 = var_u * (1.0 + 0.2 * rng.uniform())
    within = float(np.mean(z_sumsq / K - zbar**2))
    tau2 = max(within, 1e-4) * (1.0 + 0.2 * rng.uniform())
    if n > 1 and u[:, 0].std() > 0 and u[:, 1].std() > 0:
        rho = float(np.clip(np.corrcoef(u[:, 0], u[:, 1])[0, 1], -0.9, 0.9))
    else:
        rho = 0.0
    beta = np.zeros((2, p))

    out_alpha = np.empty((keep, 2))
    out_beta = np.empty((keep, 2, p))
    out_u = np.empty((keep, n, 2))
    out_sigma2 = np.empty(keep)
    out_rho = np.empty(keep)
    out_tau2 = np.empty(keep)

    rho_prop = rho_acc = 0
    win_prop = win_acc = 0
    marg_prop = marg_acc = 0
    marg_win_prop = marg_win_acc = 0
    marg_step = 0.4

    # joint (alpha_j, beta_j) design and prior precision
    x1 = np.hstack([np.ones((n, 1)), x])
    x1tx1 = x1.T @ x1
    prior_prec = np.diag([1.0 / _ALPHA_PRIOR_VAR] + [1.0 / _BETA_PRIOR_VAR] * p)

    def marginal_loglik(log_s2, arho, scatter):
        # log p(residuals | sigma2, rho, tau2) with the latent pairs
        # integrated out: residual rows are iid BVN(0, sigma2*R + tau2/K I)
        s2 = math.exp(log_s2)
        r = math.tanh(arho)
        m11 = s2 + tau2 / K
        m12 = s2 * r
        det = m11 * m11 - m12 * m12
        if det <= 0.0:
            return -math.inf
        # trace(M^-1 scatter) for symmetric 2x2 M
        tr = (
            m11 * (scatter[0, 0] + scatter[1, 1]) - 2.0 * m12 * scatter[0, 1]
        ) / det
        return -0.5 * n * math.log(det) - 0.5 * tr

    def marginal_logpost(log_s2, arho, scatter):
        s2 = math.exp(log_s2)
        # IG(1,1) prior on sigma2 plus log-scale Jacobian; flat prior on rho
        # in (-1,1) plus atanh Jacobian log(1 - rho^2)
        r = math.tanh(arho)
        return (
            marginal_loglik(log_s2, arho, scatter)
            - (_IG_SHAPE + 1.0) * log_s2
            - _IG_SCALE / s2
            + log_s2
            + math.log1p(-r * r)
        )

    for it in range(burn_in + keep):
        # intercept and covariate effects as one conjugate Gaussian block per
        # arm, so constant or collinear covariate columns cannot trap the
        # chain on an intercept/effect ridge
        for j in range(2):
            a_mat = (K / tau2) * x1tx1 + prior_prec
            b_vec = (K / tau2) * (x1.T @ (zbar[:, j] - u[:, j]))
            chol = np.linalg.cholesky(a_mat)
            mean = np.linalg.solve(a_mat, b_vec)
            noise = np.linalg.solve(chol.T, rng.standard_normal(p + 1))
            coef = mean + noise
            alpha[j] = coef[0]
            beta[j] = coef[1:]

        # latent variance (conjugate inverse gamma)
        s11 = float(u[:, 0] @ u[:, 0])
        s22 = float(u[:, 1] @ u[:, 1])
        s12 = float(u[:, 0] @ u[:, 1])
        q = (s11 - 2.0 * rho * s12 + s22) / (1.0 - rho * rho)
        sigma2 = (_IG_SCALE + 0.5 * q) / rng.gamma(_IG_SHAPE + n)

        # correlation (random-walk Metropolis, uniform prior)
        def rho_logpost(r):
            qr = (s11 - 2.0 * r * s12 + s22) / (1.0 - r * r)
            return -0.5 * n * math.log(1.0 - r * r) - qr / (2.0 * sigma2)

        cur_lp = rho_logpost(rho)
        prop = rho + rho_step * rng.standard_normal()
        rho_prop += 1
        win_prop += 1
        if -1.0 < prop < 1.0:
            prop_lp = rho_logpost(prop)
            if math.log(rng.uniform()) < prop_lp - cur_lp:
                rho = prop
                rho_acc += 1
                win_acc += 1
        if it < burn_in and win_prop >= 50:
            rho_step = float(
                np.clip(rho_step * math.exp(1.2 * (win_acc / win_prop - 0.3)), 1e-3, 2.0)
            )
            win_prop = win_acc = 0

        # collapsed refresh of (sigma2, rho): Metropolis against the
        # marginal likelihood with the latent pairs integrated out, followed
        # below by a fresh conjugate draw of u.  This jumps across the
        # funnel that the u-conditioned blocks walk slowly.
        resid = zbar - alpha[None, :] - x @ beta.T
        scatter = resid.T @ resid
        log_s2 = math.log(sigma2)
        arho = math.atanh(rho)
        cur = marginal_logpost(log_s2, arho, scatter)
        for _ in range(_COLLAPSED_INNER_STEPS):
            prop_ls2 = log_s2 + marg_step * rng.standard_normal()
            prop_ar = arho + marg_step * rng.standard_normal()
            cand = marginal_logpost(prop_ls2, prop_ar, scatter)
            marg_prop += 1
            marg_win_prop += 1
            if math.log(rng.uniform()) < cand - cur:
                log_s2, arho, cur = prop_ls2, prop_ar, cand
                marg_acc += 1
                marg_win_acc += 1
        sigma2 = math.exp(log_s2)
        rho = math.tanh(arho)
        if it < burn_in and marg_win_prop >= 150:
            marg_step = float(
                np.clip(
                    marg_step * math.exp(1.2 * (marg_win_acc / marg_win_prop - 0.3)),
                    1e-3,
                    2.0,
                )
            )
            marg_win_prop = marg_win_acc = 0

        # latent pairs (conjugate bivariate normal, shared posterior cov);
        # must directly follow the collapsed update
        r_inv = np.array([[1.0, -rho], [-rho, 1.0]]) / (1.0 - rho * rho)
        prec_mat = r_inv / sigma2 + (K / tau2) * np.eye(2)
        cov = np.linalg.inv(prec_mat)
        chol_cov = np.linalg.cholesky(cov)
        means = (K / tau2) * resid @ cov.T
        u = means + rng.standard_normal((n, 2)) @ chol_cov.T

        # translation sweep between coefficients and latent effects: the
        # likelihood is invariant under (alpha_j, beta_j) + t_j with
        # u_ij - x~_i.t_j, so Gibbs-sample the group shift from the priors'
        # conditional; without it the chain inches along these ridges and
        # drags the latent scale (hence sigma and rho) with it
        w = r_inv / sigma2
        prec_t = np.kron(w, x1tx1) + np.kron(np.eye(2), prior_prec)
        coef = np.hstack([[alpha[0]], beta[0], [alpha[1]], beta[1]])
        xtu = x1.T @ u  # (1+p, 2)
        b_t = np.concatenate(
            [
                w[0, 0] * xtu[:, 0] + w[0, 1] * xtu[:, 1],
                w[1, 0] * xtu[:, 0] + w[1, 1] * xtu[:, 1],
            ]
        ) - np.kron(np.eye(2), prior_prec) @ coef
        cov_t = np.linalg.inv(prec_t)
        t_shift = cov_t @ b_t + np.linalg.cholesky(cov_t) @ rng.standard_normal(
            2 * (p + 1)
        )
        t1, t2 = t_shift[: p + 1], t_shift[p + 1 :]
        alpha = alpha + np.array([t1[0], t2[0]])
        beta = beta + np.vstack([t1[1:], t2[1:]])
        u = u - np.column_stack([x1 @ t1, x1 @ t2])

        # residual variance (conjugate inverse gamma)
        mu = alpha[None, :] + x @ beta.T + u
        sse = float(np.sum(z_sumsq - 2.0 * mu * z_sum + K * mu * mu))
        tau2 = (_IG_SCALE + 0.5 * sse) / rng.gamma(_IG_SHAPE + 0.5 * total_obs)

        if it >= burn_in:
            k = it - burn_in
            out_alpha[k] = alpha
            out_beta[k] = beta
            out_u[k] = u
            out_sigma2[k] = sigma2
            out_rho[k] = rho
            out_tau2[k] = tau2

    return (
        out_alpha,
        out_beta,
        out_u,
        out_sigma2,
        out_rho,
        out_tau2,
        rho_acc / max(rho_prop, 1),
        marg_acc / max(marg_prop, 1),
    )


def _split_rhat(per_chain: list[np.ndarray]) -> float:
    """Potential scale reduction on half-chains."""
    halves = []
    for c in per_chain:
        m = len(c) // 2
        halves.append(c[:m])
        halves.append(c[m : 2 * m])
    arr = np.asarray(halves, dtype=float)
    n = arr.shape[1]
    if n < 2:
        return float("nan")
    chain_means = arr.mean(axis=1)
    b = n * chain_means.var(ddof=1)
    w = arr.var(axis=1, ddof=1).mean()
    if w <= 0.0:
        return 1.0
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def fit_hierarchical(
    z: np.ndarray, covariates: np.ndarray, config: McmcConfig = McmcConfig()
) -> HierarchicalPosterior:
    """Posterior of the covariate-adjusted latent-effects model.

    z has shape (n_experts, 2, K); covariates (n_experts, p), p may be 0.
    Model per observation: z ~ N(alpha_arm + x.beta_arm + u_latent, tau^2),
    latent pairs bivariate normal with sd sigma and correlation rho.
    Hyperpriors: intercepts N(0, 100), effects N(0, 10), both variances
    IG(1, 1), correlation uniform on (-1, 1).

    Split-chain potential scale reduction and the correlation acceptance
    rate are reported; exceeding the threshold flags (not fails) the result.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 3 or z.shape[1] != 2:
        raise ValueError(f"z must have shape (n, 2, K), got {z.shape}")
    n = z.shape[0]
    if n < 2:
        raise TooFewExperts(
            f"latent-effect scale is unidentifiable with {n} expert(s); need >= 2"
        )
    x = np.asarray(covariates, dtype=float)
    if x.ndim != 2 or x.shape[0] != n:
        raise ValueError(f"covariates must have shape ({n}, p), got {x.shape}")
    K = z.shape[2]
    z_sum = z.sum(axis=2)
    z_sumsq = (z * z).sum(axis=2)

    keep_per_chain = -(-config.draws // config.chains)
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    chains = [
        _run_chain(
            z_sum,
            z_sumsq,
            x,
            K,
            config.burn_in,
            keep_per_chain,
            config.rho_step,
            np.random.default_rng(s),
        )
        for s in seeds
    ]

    alpha = np.concatenate([c[0] for c in chains])
    beta = np.concatenate([c[1] for c in chains])
    u = np.concatenate([c[2] for c in chains])
    sigma2 = np.concatenate([c[3] for c in chains])
    rho = np.concatenate([c[4] for c in chains])
    tau2 = np.concatenate([c[5] for c in chains])
    acc = float(np.mean([c[6] for c in chains]))
    collapsed_acc = float(np.mean([c[7] for c in chains]))

    # Monitor the identified arm locations alpha_j + mean(x).beta_j: with a
    # constant covariate column (e.g. every expert prescribed the standard
    # dose) the raw intercept sits on a prior-identified ridge and its Rhat
    # says nothing about the quantities the model feeds downstream.
    x_mean = x.mean(axis=0) if x.shape[1] else np.zeros(0)
    rhat = {
        "sigma": _split_rhat([c[3] for c in chains]),
        "rho": _split_rhat([c[4] for c in chains]),
        "tau": _split_rhat([c[5] for c in chains]),
        "level_high": _split_rhat(
            [c[0][:, 0] + c[1][:, 0, :] @ x_mean for c in chains]
        ),
        "level_low": _split_rhat(
            [c[0][:, 1] + c[1][:, 1, :] @ x_mean for c in chains]
        ),
    }
    converged = all(
        (not math.isfinite(v)) or v < config.rhat_threshold for v in rhat.values()
    )
    return HierarchicalPosterior(
        alpha=alpha,
        beta=beta,
        u=u,
        sigma=np.sqrt(sigma2),
        rho=rho,
        tau=np.sqrt(tau2),
        chains=config.chains,
        draws_per_chain=keep_per_chain,
        rho_acceptance=acc,
        collapsed_acceptance=collapsed_acc,
        rhat=rhat,
        converged=converged,
    )


def induced_corr(post: HierarchicalPosterior) -> float:
    """Model-implied correlation between an expert's two logit locations.

    Posterior mean of rho * sigma^2 / (sigma^2 + tau^2): the latent pair
    contributes the correlated part, the residual dilutes it.
    """
    sigma2 = post.sigma**2
    tau2 = post.tau**2
    return float(np.mean(post.rho * sigma2 / (sigma2 + tau2)))


@dataclass(frozen=True)
class BivariateExpertPrior:
    """One expert's two beta marginals coupled by a Gaussian copula."""

    marginal_high: BetaParams
    marginal_low: BetaParams
    copula_corr: float

    def __post_init__(self):
        if not (-1.0 < self.copula_corr < 1.0):
            raise ValueError(f"copula correlation must lie in (-1, 1), got {self.copula_corr}")


@dataclass(frozen=True)
class MixturePrior:
    """Equal-weight pool of expert bivariate priors."""

    components: tuple[BivariateExpertPrior, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixture needs at least one component")

    @property
    def weights(self) -> np.ndarray:
        k = len(self.components)
        return np.full(k, 1.0 / k)


@dataclass(frozen=True)
class PriorSampleSet:
    """Joint draws of (p1, p2, delta = p2 - p1) from the mixture."""

    p1: np.ndarray
    p2: np.ndarray
    delta: np.ndarray
    seed: int
    size: int
    copula_corr: float
    components: int

    def __post_init__(self):
        if not (len(self.p1) == len(self.p2) == len(self.delta) == self.size):
            raise ValueError("sample arrays must all have length == size")
        if not np.array_equal(self.delta, self.p2 - self.p1):
            raise ValueError("delta column must equal p2 - p1 exactly")


def build_mixture(
    expert_marginals: list[tuple[BetaParams, BetaParams]], r: float
) -> MixturePrior:
    """Couple each expert's own marginals with the shared copula correlation."""
    if not expert_marginals:
        raise ValueError("need at least one expert")
    return MixturePrior(
        components=tuple(
            BivariateExpertPrior(marginal_high=h, marginal_low=lo, copula_corr=r)
            for h, lo in expert_marginals
        )
    )


def sample_mixture(m: MixturePrior, n: int, seed) -> PriorSampleSet:
    """Draw n rows: pick a component uniformly, then map a correlated
    standard-normal pair through the normal cdf and the component's beta
    quantiles, so each marginal is reproduced exactly in distribution."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    k = len(m.components)
    comp = rng.integers(0, k, size=n)
    e1 = rng.standard_normal(n)
    e2 = rng.standard_normal(n)
    r = m.components[0].copula_corr
    z1 = e1
    z2 = r * e1 + math.sqrt(1.0 - r * r) * e2
    u1 = special.ndtr(z1)
    u2 = special.ndtr(z2)
    p1 = np.empty(n)
    p2 = np.empty(n)
    for c, comp_prior in enumerate(m.components):
        rows = comp == c
        if not np.any(rows):
            continue
        p1[rows] = beta_quantile(comp_prior.marginal_high, u1[rows])
        p2[rows] = beta_quantile(comp_prior.marginal_low, u2[rows])
    return PriorSampleSet(
        p1=p1,
        p2=p2,
        delta=p2 - p1,
        seed=int(seed),
        size=n,
        copula_corr=r,
        components=k,
    )


def mixture_summary(s: PriorSampleSet) -> dict:
    """Sample mean/median/sd per margin plus the (p1, p2) correlation."""
    if s.size < 2:
        raise ValueError("need at least 2 samples to summarize")

    def _one(v):
        return {
            "mean": float(v.mean()),
            "median": float(np.median(v)),
            "sd": float(v.std(ddof=1)),
        }

    return {
        "p1": _one(s.p1),
        "p2": _one(s.p2),
        "delta": _one(s.delta),
        "corr_p1_p2": float(np.corrcoef(s.p1, s.p2)[0, 1]),
    }


def save_samples(s: PriorSampleSet, csv_path) -> Path:
    """Write the sample set as CSV (p1,p2,delta) plus a JSON sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p1", "p2", "delta"])
        for a, b, d in zip(s.p1, s.p2, s.delta):
            writer.writerow([f"{a:.17g}", f"{b:.17g}", f"{d:.17g}"])
    sidecar = csv_path.with_suffix(csv_path.suffix + ".meta.json")
    with open(sidecar, "w") as fh:
        json.dump(
            {
                "seed": s.seed,
                "size": s.size,
                "components": s.components,
                "copula_corr": s.copula_corr,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    return sidecar


def load_samples(csv_path) -> PriorSampleSet:
    """Read a sample-set CSV (and sidecar when present) back into memory."""
    csv_path = Path(csv_path)
    data = np.genfromtxt(csv_path, delimiter=",", names=True)
    if data.size == 0 or not {"p1", "p2", "delta"} <= set(data.dtype.names or ()):
        raise SchemaError(f"{csv_path} is not a p1,p2,delta sample file")
    meta = {"seed": -1, "copula_corr": float("nan"), "components": 0}
    sidecar = csv_path.with_suffix(csv_path.suffix + ".meta.json")
    if sidecar.exists():
        with open(sidecar) as fh:
            meta.update(json.load(fh))
    p1 = np.atleast_1d(data["p1"])
    p2 = np.atleast_1d(data["p2"])
    delta = np.atleast_1d(data["delta"])
    return PriorSampleSet(
        p1=p1,
        p2=p2,
        delta=delta,
        seed=int(meta["seed"]),
        size=len(p1),
        copula_corr=float(meta["copula_corr"]),
        components=int(meta["components"]),
    )
