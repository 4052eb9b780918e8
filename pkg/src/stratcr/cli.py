"""Command-line interface: ``stratcr {fit,simulate,gof,verify,summary}``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import GofResult, bayesian_p, summarize
from .model import ModelSpec, ParamState, has_intercept, lambda_of
from .sampler import default_M, run
from .simulate import simulate_dataset

log = logging.getLogger("stratcr")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _add_fit_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value file; command-line flags override it")
    p.add_argument("--encounters", help="encounter CSV (default: bundled example)")
    p.add_argument("--strata", help="strata CSV (default: bundled example)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=["history", "frequency"])
    p.add_argument("--K", type=int, help="occasions (required for frequency format)")
    p.add_argument("--covariates", help="comma-separated numeric strata columns")
    p.add_argument("--categorical", help="comma-separated categorical strata columns (dummy coded)")
    p.add_argument("--abundance", choices=["poisson", "dcm"])
    p.add_argument("--detection", choices=["M0", "Mb"])
    p.add_argument("--constraint", choices=["derived", "free"])
    p.add_argument("--M", type=int, help="augmentation size (default 5x a rough abundance estimate)")
    p.add_argument("--chains", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--adapt-window", dest="adapt_window", type=int)
    p.add_argument("--target-accept", dest="target_accept", type=float)
    p.add_argument("--step-beta", dest="step_beta", type=float)
    p.add_argument("--step-alpha", dest="step_alpha", type=float)
    p.add_argument("--step-joint", dest="step_joint", type=float)
    p.add_argument("--step-eta", dest="step_eta", type=float)
    p.add_argument("--step-a", dest="step_a", type=float)
    p.add_argument("--beta-moves", dest="beta_moves", type=int)
    p.add_argument("--joint-moves", dest="joint_moves", type=int)
    p.add_argument("--ppc", action=argparse.BooleanOptionalAction, default=None,
                   help="record posterior predictive fit statistics (default on)")
    p.add_argument("--check-every", dest="check_every", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--monitor", help="comma-separated monitored names or prefixes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratcr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_fit_args(sub.add_parser("fit", help="fit a model and write draws, summary and fit checks"))

    sim = sub.add_parser("simulate", help="simulate a data set with a truth sidecar")
    sim.add_argument("--strata", help="strata CSV providing covariates (default: bundled example)")
    sim.add_argument("--covariates", default="")
    sim.add_argument("--categorical", default="")
    sim.add_argument("--abundance", choices=["poisson", "dcm"], default="poisson")
    sim.add_argument("--detection", choices=["M0", "Mb"], default="M0")
    sim.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=True)
    sim.add_argument("--beta", type=_floats, required=True, help="comma-separated coefficients")
    sim.add_argument("--a", type=float, default=1.0, help="gamma shape (dcm)")
    sim.add_argument("--p", type=float, default=0.3)
    sim.add_argument("--alpha0", type=float, default=-1.0)
    sim.add_argument("--alpha1", type=float, default=0.0)
    sim.add_argument("--K", type=int, default=10)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)

    gof = sub.add_parser("gof", help="recompute the Bayesian p-value from saved draws")
    gof.add_argument("--draws", required=True, help="draws.csv or gof.csv")
    gof.add_argument("--out", help="write gof.csv here")

    ver = sub.add_parser("verify", help="check the sampler against exact enumeration")
    ver.add_argument("--draws", type=int, default=200_000)
    ver.add_argument("--tolerance", type=float, default=0.02)
    ver.add_argument("--seed", type=int, default=1)

    smry = sub.add_parser("summary", help="recompute summary.csv from draws.csv")
    smry.add_argument("--draws", required=True)
    smry.add_argument("--out", help="output CSV (default: stdout)")
    return parser


def _run_config(args) -> io.RunConfig:
    kwargs = io.load_config(args.config) if args.config else {}
    for key in io.RunConfig.field_types():
        val = getattr(args, key, None)
        if val is not None:
            kwargs[key] = val
    return io.RunConfig(**kwargs)


def cmd_fit(args) -> int:
    cfg = _run_config(args)
    example = io.example_paths()
    strata = io.load_strata(cfg.strata or example["strata"])
    if cfg.encounters is None and cfg.strata is None and not cfg.covariates and not cfg.categorical:
        cfg.categorical = ["trt", "block", "year"]
    design, names = io.build_design(strata, cfg.covariates, cfg.categorical,
                                    intercept=cfg.constraint == "derived")
    data = io.load_encounters(cfg.encounters or example["encounters"], cfg.format, K=cfg.K,
                              S=strata.S, covariates=design, covariate_names=names)
    M = cfg.M or default_M(data)
    spec = ModelSpec(design=design, M=M, abundance=cfg.abundance, detection=cfg.detection,
                     constraint=cfg.constraint, design_names=names)
    sconf = cfg.sampler_config()
    log.info("fitting %s/%s with M=%d to %d individuals in %d strata",
             spec.abundance.value, spec.detection.value, M, data.n_individuals, data.S)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        draws = run(data, spec, sconf)
    for w in {str(w.message): w for w in caught}.values():
        print(f"warning: {w.message}", file=sys.stderr)
    summary = summarize(draws)
    gof = GofResult(draws.flat("x_obs"), draws.flat("x_sim")) if sconf.ppc else None
    pi_means = [float(np.mean(draws.flat(f"pi[{s + 1}]"))) for s in range(spec.S)]
    paths = io.write_outputs(draws, summary, gof, pi_means, cfg.out, monitor=cfg.monitor or None)
    if gof is not None:
        print(f"Bayesian p-value: {bayesian_p(gof):.3f}")
    print(f"N_T posterior mean: {np.mean(draws.flat('N')):.1f}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_simulate(args) -> int:
    strata = io.load_strata(args.strata or io.example_paths()["strata"])
    design, names = io.build_design(strata, [c for c in args.covariates.split(",") if c],
                                    [c for c in args.categorical.split(",") if c],
                                    intercept=args.intercept)
    if len(args.beta) != design.shape[1]:
        raise ValueError(f"--beta needs {design.shape[1]} values for columns {names}")
    beta = np.array(args.beta)
    lam = lambda_of(beta, design)
    if args.abundance == "dcm" and args.intercept:
        # the DCM spec carries no intercept; its scale enters through lam only
        design, names, beta = design[:, 1:], names[1:], beta[1:]
    constraint = "derived" if design.shape[1] and has_intercept(design) else "free"
    spec = ModelSpec(design=design, M=10**9, abundance=args.abundance, detection=args.detection,
                     constraint=constraint, design_names=names)
    params = ParamState(beta=beta, psi=0.5, p=args.p, alpha0=args.alpha0,
                        alpha1=args.alpha1, a=args.a)
    sim = simulate_dataset(spec, params, args.K, np.random.default_rng(args.seed),
                           covariates=design, covariate_names=names, lam=lam)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_encounters(sim.data, out / "encounters.csv", "history")
    _copy_strata(strata, out / "strata.csv")
    io.write_truth(out / "truth.json", sim, spec)
    print(f"simulated N_T={int(sim.N.sum())}, captured n_T={sim.data.n_individuals}; wrote {out}")
    return 0


def _copy_strata(strata: io.StrataTable, path: Path):
    cols = {k: v for k, v in strata.columns.items() if k != "stratum"}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["stratum", *cols]) + "\n")
        for s in range(strata.S):
            fh.write(",".join([str(s + 1)] + [cols[c][s] for c in cols]) + "\n")


def cmd_gof(args) -> int:
    path = Path(args.draws)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if first.startswith("#"):
            first = fh.readline()
    if first.strip().startswith("draw,"):
        gof = io.read_gof(path)
    else:
        draws = io.read_draws(path)
        gof = GofResult(draws.flat("x_obs"), draws.flat("x_sim"))
    p = bayesian_p(gof)
    print(f"Bayesian p-value: {p:.3f} ({gof.x_obs.size} draws)")
    if args.out:
        io.write_gof(gof, args.out)
    return 0


def cmd_verify(args) -> int:
    from .oracle import run_gate

    report = run_gate(n_draws=args.draws, tolerance=args.tolerance, seed=args.seed)
    print(report)
    for v, pe, pm in zip(report.nt_values, report.exact_pmf, report.mcmc_pmf):
        print(f"  N_T={v}: exact {pe:.5f}  mcmc {pm:.5f}")
    return 0 if report.passed else 1


def cmd_summary(args) -> int:
    draws = io.read_draws(args.draws)
    summary = summarize(draws)
    lines = ["parameter,mean,sd,q2.5,q50,q97.5,rhat"]
    for j, nm in enumerate(summary.names):
        if nm in io.GOF_COLUMNS:
            continue
        vals = (summary.mean[j], summary.sd[j], summary.q025[j], summary.q50[j],
                summary.q975[j], summary.rhat[j])
        lines.append(",".join([nm] + [io._fmt(v) for v in vals]))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "gof": cmd_gof,
    "verify": cmd_verify,
    "summary": cmd_summary,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"stratcr {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())
