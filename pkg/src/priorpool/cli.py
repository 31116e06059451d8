"""Batch command-line entry points tying the pipeline together.

Subcommands: fit, aggregate, fit-delta, margin, assurance, serve.  Every
subcommand is deterministic given --seed and rerunning writes byte-identical
output files.  Failures print a machine-readable JSON object on stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .errors import SchemaError, ToolkitError


def _fail(exc: Exception) -> int:
    print(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}),
        file=sys.stderr,
    )
    return 1


def _read_profiles(path) -> list:
    from .elicitation import ExpertProfile

    def as_bool(cell: str, row_id: str) -> bool:
        v = cell.strip().lower()
        if v in ("yes", "true", "1"):
            return True
        if v in ("no", "false", "0"):
            return False
        raise SchemaError(f"profile {row_id!r}: boolean cell must be yes/no, got {cell!r}")

    profiles = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {
            "expert_id",
            "country",
            "years_practice_band",
            "prescribed_060_last_year",
            "prescribed_015_last_year",
            "max_dose_mg",
            "trained_trials",
            "trained_stats",
        }
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise SchemaError(
                f"profiles CSV needs columns {sorted(required)}, got {reader.fieldnames}"
            )
        for row in reader:
            rid = row["expert_id"]
            profiles.append(
                ExpertProfile(
                    expert_id=rid,
                    country=row["country"],
                    years_practice_band=row["years_practice_band"],
                    prescribed_060_last_year=as_bool(row["prescribed_060_last_year"], rid),
                    prescribed_015_last_year=as_bool(row["prescribed_015_last_year"], rid),
                    max_dose_mg=float(row["max_dose_mg"]),
                    trained_trials=as_bool(row["trained_trials"], rid),
                    trained_stats=as_bool(row["trained_stats"], rid),
                )
            )
    if not profiles:
        raise SchemaError(f"no profiles in {path}")
    return profiles


def _read_moments(path):
    """Rows of expert_id,arm,mean,sd (fractions in [0,1]) -> per-expert betas."""
    from .distfit import beta_from_moments

    per_expert: dict[str, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        need = {"expert_id", "arm", "mean", "sd"}
        if reader.fieldnames is None or not need <= set(reader.fieldnames):
            raise SchemaError(
                f"moments CSV needs columns {sorted(need)}, got {reader.fieldnames}"
            )
        for row in reader:
            arm = row["arm"].strip().lower()
            if arm not in ("high", "low"):
                raise SchemaError(f"arm must be 'high' or 'low', got {row['arm']!r}")
            params = beta_from_moments(float(row["mean"]), float(row["sd"]))
            per_expert.setdefault(row["expert_id"], {})[arm] = params
    marginals = []
    for eid in sorted(per_expert):
        arms = per_expert[eid]
        if set(arms) != {"high", "low"}:
            raise SchemaError(f"expert {eid!r} needs one 'high' and one 'low' row")
        marginals.append((arms["high"], arms["low"]))
    if not marginals:
        raise SchemaError(f"no expert rows in {path}")
    return marginals


def _marginals_from_session(path):
    from .elicitation import Arm, import_session

    with open(path) as fh:
        session = import_session(fh.read())
    high = {s.expert_id: s.fitted for s in session.effective_round2(Arm.HIGH_DOSE)}
    low = {s.expert_id: s.fitted for s in session.effective_round2(Arm.LOW_DOSE)}
    experts = sorted(set(high) & set(low))
    if not experts:
        raise SchemaError(f"session {path} has no experts with both arms submitted")
    marginals = [(high[e], low[e]) for e in experts]
    profiles = [session.experts[e] for e in experts if e in session.experts]
    return marginals, (profiles if len(profiles) == len(experts) else None)


def cmd_fit(args) -> int:
    from .distfit import CiLevel, ElicitedTriplet, beta_summary, fit_beta_from_triplet

    triplet = ElicitedTriplet(lower=args.lower, mode=args.mode, upper=args.upper)
    fit = fit_beta_from_triplet(triplet, CiLevel(args.ci))
    summary = beta_summary(fit.params)
    print(
        json.dumps(
            {
                "alpha": fit.params.alpha,
                "beta": fit.params.beta,
                "objective": fit.objective,
                "residuals": {"lower": fit.residual_lower, "upper": fit.residual_upper},
                "summary": {
                    "mean": summary.mean,
                    "sd": summary.sd,
                    "mode": summary.mode,
                    "median": summary.median,
                },
            },
            indent=2,
        )
    )
    return 0


def cmd_aggregate(args) -> int:
    from .aggregate import (
        McmcConfig,
        build_mixture,
        encode_covariates,
        fit_hierarchical,
        induced_corr,
        mixture_summary,
        pseudo_samples,
        sample_mixture,
        save_samples,
    )

    profiles = None
    if args.session:
        marginals, profiles = _marginals_from_session(args.session)
    else:
        marginals = _read_moments(args.from_moments)
    if args.covariates:
        profiles = _read_profiles(args.covariates)
        if len(profiles) != len(marginals):
            raise SchemaError(
                f"{len(profiles)} profiles vs {len(marginals)} experts with marginals"
            )
    if profiles is not None:
        covariates = encode_covariates(profiles)
    else:
        import numpy as np

        covariates = np.zeros((len(marginals), 0))

    z = pseudo_samples(marginals, K=args.pseudo_k, seed=args.seed)
    post = fit_hierarchical(
        z,
        covariates,
        McmcConfig(
            chains=args.chains,
            burn_in=args.burn_in,
            draws=args.mcmc_draws,
            seed=args.seed,
        ),
    )
    r = induced_corr(post)
    mixture = build_mixture(marginals, r)
    samples = sample_mixture(mixture, args.draws, seed=args.seed)
    save_samples(samples, args.out)
    report = {
        "experts": len(marginals),
        "copula_corr": r,
        "mcmc": {
            "rho_acceptance": post.rho_acceptance,
            "rhat": post.rhat,
            "converged": post.converged,
        },
        "summary": mixture_summary(samples),
    }
    text = json.dumps(report, indent=2)
    if args.summary:
        Path(args.summary).write_text(text + "\n")
    print(text)
    return 0


def cmd_fit_delta(args) -> int:
    from .aggregate import load_samples
    from .assurance import AnalysisPrior
    from .pearson4 import p4_fit_moments

    samples = load_samples(args.samples)
    params = p4_fit_moments(samples.delta)
    if args.analysis_prior_out:
        prior = AnalysisPrior.from_samples(samples)
        Path(args.analysis_prior_out).write_text(
            json.dumps(prior.to_json_dict(), indent=2) + "\n"
        )
    print(json.dumps(params.to_json_dict(), indent=2))
    return 0


def cmd_margin(args) -> int:
    from .margin import median_margin, parse_survey

    value = median_margin(parse_survey(args.survey))
    print(f"{value:g}")
    return 0


def cmd_assurance(args) -> int:
    from .aggregate import load_samples
    from .assurance import (
        AnalysisPrior,
        TargetUnreachable,
        TrialDesign,
        find_sample_size,
        save_curve,
    )

    samples = load_samples(args.prior)
    with open(args.analysis_prior) as fh:
        prior = AnalysisPrior.from_json_dict(json.load(fh))
    template = TrialDesign(
        margin=args.margin,
        n_total=max(args.n_min, 2),
        sims=args.sims,
        decision_threshold=args.threshold,
        seed=args.seed,
    )
    try:
        result = find_sample_size(
            template,
            samples,
            prior,
            rel_target=args.rel_target,
            null_cap=args.null_cap,
            n_range=(args.n_min, args.n_max),
            n_step=args.n_step,
        )
        curve, chosen = result.curve, result.chosen
    except TargetUnreachable as exc:
        save_curve(exc.curve, args.out)
        raise
    save_curve(curve, args.out)
    print(
        json.dumps(
            {
                "n_total": chosen.n_total,
                "assurance": chosen.assurance,
                "null_assurance": chosen.null_assurance,
                "max_assurance": chosen.max_assurance,
                "relative_assurance": chosen.relative_assurance,
                "mc_se": chosen.mc_se,
            },
            indent=2,
        )
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, WorkshopService, create_app

    host, _, port = args.bind.rpartition(":")
    service = WorkshopService(ServiceConfig(args.data_dir, args.token_secret))
    print(f"facilitator token: {service.facilitator_token}")
    uvicorn.run(create_app(service), host=host or "127.0.0.1", port=int(port))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="priorpool",
        description="Expert elicitation, prior pooling, and assurance sample sizes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a beta distribution to a (lower, mode, upper) triplet")
    p.add_argument("--lower", type=float, required=True)
    p.add_argument("--mode", type=float, required=True)
    p.add_argument("--upper", type=float, required=True)
    p.add_argument("--ci", type=float, default=0.95)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("aggregate", help="pool expert marginals into a correlated mixture prior")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--session", help="workshop session JSON document")
    src.add_argument("--from-moments", help="CSV of expert_id,arm,mean,sd rows")
    p.add_argument("--covariates", help="CSV of expert profiles for the covariate adjustment")
    p.add_argument("--draws", type=int, default=1_000_000, help="mixture sample rows to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pseudo-k", type=int, default=500)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--burn-in", type=int, default=2000)
    p.add_argument("--mcmc-draws", type=int, default=10000)
    p.add_argument("--out", required=True, help="output CSV (p1,p2,delta)")
    p.add_argument("--summary", help="optional summary JSON path")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("fit-delta", help="fit the risk-difference prior to a Pearson IV")
    p.add_argument("--samples", required=True, help="prior sample CSV from 'aggregate'")
    p.add_argument(
        "--analysis-prior-out",
        help="also write the full analysis prior (moment-matched p1 beta + delta fit)",
    )
    p.set_defaults(func=cmd_fit_delta)

    p = sub.add_parser("margin", help="median non-inferiority margin from a survey CSV")
    p.add_argument("--survey", required=True)
    p.set_defaults(func=cmd_margin)

    p = sub.add_parser("assurance", help="search for the smallest adequate sample size")
    p.add_argument("--prior", required=True, help="prior sample CSV")
    p.add_argument("--analysis-prior", required=True, help="analysis prior JSON")
    p.add_argument("--margin", type=float, required=True)
    p.add_argument("--sims", type=int, default=1000)
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--rel-target", type=float, default=0.80)
    p.add_argument("--null-cap", type=float, default=0.05)
    p.add_argument("--n-min", type=int, required=True)
    p.add_argument("--n-max", type=int, required=True)
    p.add_argument("--n-step", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="assurance curve CSV")
    p.set_defaults(func=cmd_assurance)

    p = sub.add_parser("serve", help="run the workshop HTTP service")
    p.add_argument("--bind", default=os.environ.get("PRIORPOOL_BIND", "127.0.0.1:8080"))
    p.add_argument(
        "--data-dir",
        default=os.environ.get("PRIORPOOL_DATA_DIR"),
        required="PRIORPOOL_DATA_DIR" not in os.environ,
    )
    p.add_argument("--token-secret", default=os.environ.get("PRIORPOOL_TOKEN_SECRET"))
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve" and args.token_secret is None:
        import secrets

        args.token_secret = secrets.token_hex(16)
    try:
        return args.func(args)
    except ToolkitError as exc:
        return _fail(exc)
    except (OSError, ValueError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
