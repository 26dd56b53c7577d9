"""Command line interface.

Exit codes: 0 success, 1 domain violation (a model breaks a regularity
condition or two Levy measures are not equivalent), 2 input error, 3 numeric
failure.
"""
import argparse
import json
import os
import sys

import numpy as np

from ..errors import (
    InputError, NumericBlowupError, SingularWeightError, StageError, SupportViolationError,
    UsageError,
)

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=default(0), help="master random seed")
    parser.add_argument("--config", default=default(None), help="YAML experiment config")
    parser.add_argument("--out", default=default("."), help="output directory")
    parser.add_argument("--threads", type=int, default=default(1),
                        help="worker processes for independent repetitions")
    parser.add_argument("--set", dest="overrides", action="append", default=default([]),
                        metavar="KEY=VALUE", help="override a config entry, e.g. sampler.iterations=200")


def build_parser():
    parser = argparse.ArgumentParser(prog="jumpbayes", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("check", parents=[common], help="check regularity conditions of a model file")
    p.add_argument("model", help="model JSON file")
    p.add_argument("--grid", type=int, default=101, help="grid points per axis")
    p.add_argument("--pairs", type=int, default=4000, help="random pairs for the Lipschitz probe")

    p = sub.add_parser("simulate", parents=[common], help="simulate a path or an observation series")
    p.add_argument("--model", help="model JSON file (default: truth from --config)")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--x0", type=float, nargs="+", help="start point (default: origin)")
    p.add_argument("--observations", type=int, metavar="N",
                   help="emit N transitions sampled every --delta instead of the full path")
    p.add_argument("--delta", type=float, default=0.5)

    p = sub.add_parser("sample-prior", parents=[common], help="write prior draws as model JSON files")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--r", type=float, default=3.0)

    p = sub.add_parser("klbound", parents=[common], help="KL rate bound between two models")
    p.add_argument("--truth", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--samples", type=int, default=2000, help="stationary draws from the truth")
    p.add_argument("--burn-in", type=float, default=None)
    p.add_argument("--delta", type=float, default=0.5)

    p = sub.add_parser("infer", parents=[common], help="run one posterior chain")
    p.add_argument("--data", help="observation CSV (default: simulate from the config truth)")
    p.add_argument("--n", type=int, default=200, help="transitions to simulate when --data is absent")
    p.add_argument("--iterations", type=int)
    p.add_argument("--warmup", type=int)

    sub.add_parser("experiment", parents=[common], help="run the contraction experiment of a config")
    return parser


def _load_cfg(args, required=True):
    from .config import load_config
    if args.config is None:
        if required:
            raise InputError(f"{args.command} needs --config")
        return None
    return load_config(args.config, args.overrides)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_check(args):
    from ..model_core import check_conditions, check_lamperti
    from .config import model_from_file
    model = model_from_file(args.model)
    report = check_conditions(model, grid_resolution=args.grid, probe_pairs=args.pairs, seed=args.seed)
    eye = np.eye(model.d)
    lam = check_lamperti(lambda x: eye, model.domain)
    doc = {"model": args.model, "conditions": report.to_json_dict(), "lamperti": lam.to_json_dict()}
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "check_report.json"), doc)
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK if report.ok and lam.satisfied else EXIT_VIOLATION


def _model_arg(args, name="model"):
    from .config import model_from_file
    path = getattr(args, name, None)
    if path:
        return model_from_file(path)
    cfg = _load_cfg(args)
    if cfg.truth is None:
        raise InputError("config has no truth section")
    return cfg.truth


def cmd_simulate(args):
    from ..simulator import sample_observations, simulate_path, write_path_csv, write_series_csv
    model = _model_arg(args)
    os.makedirs(args.out, exist_ok=True)
    if args.observations:
        init = "stationary" if args.x0 is None else np.asarray(args.x0)
        series = sample_observations(model, args.observations, args.delta, dt=args.dt,
                                     seed=args.seed, init=init)
        path = os.path.join(args.out, "observations.csv")
        write_series_csv(series, path)
    else:
        x0 = np.zeros(model.d) if args.x0 is None else np.asarray(args.x0)
        path = os.path.join(args.out, "path.csv")
        write_path_csv(simulate_path(model, x0, args.horizon, args.dt, seed=args.seed), path)
    print(path)
    return EXIT_OK


def cmd_sample_prior(args):
    from ..model_core import DomainSpec, JumpDiffusionModel
    from ..likelihood import PriorBundle
    from ..priors import DPMixConfig, GaussianPriorConfig, sample_drift_prior, sample_levy_prior
    cfg = _load_cfg(args, required=False)
    if cfg is not None:
        priors = cfg.prior_bundle()
    else:
        dom = DomainSpec(args.d, args.r)
        priors = PriorBundle(GaussianPriorConfig(dom, dom.d + 3.0, 4), DPMixConfig(dom))
    if args.count < 1:
        raise InputError("--count must be positive")
    os.makedirs(args.out, exist_ok=True)
    root = np.random.SeedSequence(args.seed)
    width = max(5, len(str(args.count - 1)))
    for i, ss in enumerate(root.spawn(args.count)):
        rng = np.random.default_rng(ss)
        drift = sample_drift_prior(priors.drift, rng)
        levy = sample_levy_prior(priors.levy, rng)
        model = JumpDiffusionModel(drift.domain, drift, levy)
        _write_json(os.path.join(args.out, f"model_{i:0{width}d}.json"), model.to_json_dict())
    print(f"wrote {args.count} models to {args.out}")
    return EXIT_OK


def cmd_klbound(args):
    from ..likelihood import kl_upper_bound
    from ..simulator import sample_stationary
    from .config import model_from_file
    truth = model_from_file(args.truth)
    cand = model_from_file(args.candidate)
    k = getattr(truth.drift, "k", 1.0)
    burn = 10.0 * (truth.domain.r + 1.0) / k if args.burn_in is None else args.burn_in
    xs = sample_stationary(truth, burn, 0.5, args.samples, seed=args.seed)
    terms = kl_upper_bound(truth, cand, xs, args.delta)
    doc = terms.to_json_dict()
    doc["path_kl_bound"] = args.delta * terms.total
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "klbound.json"), doc)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_infer(args):
    from ..inference import chain_to_jsonl, run_chain
    from ..simulator import read_series_csv, sample_observations
    cfg = _load_cfg(args)
    if args.data:
        data = read_series_csv(args.data)
    else:
        if cfg.truth is None:
            raise InputError("infer needs --data or a config with a truth section")
        data = sample_observations(cfg.truth, args.n, cfg.delta,
                                   dt=float(cfg.data.get("dt", 1e-3 * min(1.0, cfg.delta))),
                                   seed=args.seed)
    iterations = args.iterations or int(cfg.sampler.get("iterations", 2000))
    warmup = args.warmup if args.warmup is not None else int(cfg.sampler.get("warmup", 500))
    chain = run_chain(data, cfg.prior_bundle(), cfg.proposal(), iterations, warmup, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "chain.jsonl")
    chain_to_jsonl(chain, path)
    print(json.dumps({"chain": path, "acceptance_rates": chain.acceptance_rates,
                      "flags": chain.flags}, sort_keys=True))
    return EXIT_OK


def cmd_experiment(args):
    from .experiment import run_experiment
    cfg = _load_cfg(args)
    cfg.seed = args.seed if args.seed else cfg.seed
    out = args.out if args.out != "." else cfg.output
    result = run_experiment(cfg, threads=args.threads, out_dir=out)
    print(result.manifest_path)
    return EXIT_OK


COMMANDS = {
    "check": cmd_check, "simulate": cmd_simulate, "sample-prior": cmd_sample_prior,
    "klbound": cmd_klbound, "infer": cmd_infer, "experiment": cmd_experiment,
}


def exit_code_for(exc):
    if isinstance(exc, StageError):
        return exit_code_for(exc.cause)
    if isinstance(exc, (SupportViolationError,)):
        return EXIT_VIOLATION
    if isinstance(exc, (NumericBlowupError, SingularWeightError, FloatingPointError)):
        return EXIT_NUMERIC
    if isinstance(exc, (InputError, UsageError, ValueError, KeyError, TypeError, OSError)):
        return EXIT_INPUT
    return EXIT_NUMERIC


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:       # noqa: BLE001 - mapped to exit codes
        code = exit_code_for(exc)
        print(f"jumpbayes {args.command}: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
