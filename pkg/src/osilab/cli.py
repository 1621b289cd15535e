"""osilab command line.

    osilab theorem ls-counterexample --rho 0.3 -N 100000 --seed 42
    osilab figure fig3 -N 10000 --out data/
    osilab bounds ls --alpha 0.9 --delta 0 --eta 0.1

Exit status is 0 when the verdict is consistent, 1 when it is violated and
2 for usage errors.
"""
import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds, experiments
from .errors import BadParams, OsilabError, TooFewTrials, UnknownPreset

EXIT_OK, EXIT_VIOLATED, EXIT_USAGE = 0, 1, 2

# CLI flag -> keyword understood by each theorem runner
THEOREM_FLAGS = {
    "ls-counterexample": ["rho"],
    "ls-stronger": ["epsilon", "L"],
    "ls-rescue": ["alpha", "eta"],
    "ose-from-osi": ["s", "alpha", "q", "tau"],
    "osi-sharpness": ["s", "alpha", "q"],
    "rsvd-counterexample": ["tau"],
    "rsvd-rescue": ["eta"],
    "lp-deterministic": ["p"],
    "lp-probabilistic": ["p", "t"],
}

DEFAULT_N = {"rsvd-rescue": 10_000, "lp-deterministic": 1_000, "lp-probabilistic": 1_000}


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _default_seed():
    env = os.environ.get("OSILAB_SEED")
    if env is None:
        return 0
    try:
        return _seed(env)
    except (ValueError, argparse.ArgumentTypeError):
        raise BadParams(f"invalid OSILAB_SEED {env!r}") from None


def _add_run_flags(p):
    p.add_argument("-N", type=_positive_int, default=None, help="number of trials")
    p.add_argument("--seed", type=_seed, default=None, help="master seed (default $OSILAB_SEED or 0)")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--threads", type=_positive_int, default=None)


def _add_param_flags(p, names):
    for name in names:
        kind = int if name in ("s", "q_minus_r") else float
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None)


def build_parser():
    parser = argparse.ArgumentParser(prog="osilab", description="OSI sketching experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    th = sub.add_parser("theorem", help="Monte Carlo check of one theorem preset")
    th.add_argument("name")
    _add_run_flags(th)
    _add_param_flags(th, ["rho", "alpha", "epsilon", "L", "tau", "eta", "p", "t", "q", "s"])

    fig = sub.add_parser("figure", help="data behind one of the figures")
    fig.add_argument("name")
    _add_run_flags(fig)

    bd = sub.add_parser("bounds", help="evaluate a closed-form guarantee")
    bd.add_argument("op", choices=sorted(BOUND_OPS))
    _add_param_flags(bd, ["s", "alpha", "beta", "rho", "tau", "delta", "eta", "p", "t", "q_minus_r"])
    return parser


def _theorem_kwargs(name, args):
    kwargs = {}
    for flag in THEOREM_FLAGS[name]:
        value = getattr(args, flag)
        if value is None:
            continue
        if flag == "eta" and name == "ls-rescue":
            kwargs["etas"] = (value,)
        else:
            kwargs[flag] = value
    return kwargs


def _write_trials(trials, out, name, fmt):
    path = out / f"{name}.trials.{fmt}"
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            trials.to_csv(fh)
    else:
        path.write_text(trials.to_json() + "\n")
    return path


def _report_json(outcome, N, seed):
    out = outcome.to_dict(N, seed)
    # primary report at the top level, all reports under "reports"
    first = next(iter(out["reports"].values()))
    report = {
        "preset": out["preset"],
        "params": out["params"],
        "N": N,
        "seed": seed,
        "claimed": first["claimed"],
        "empirical": first["empirical"],
        "std_error": first["std_error"],
        "verdict": out["verdict"],
    }
    report.update({key: out[key] for key in ("reports", "checks", "extra")})
    return report


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(type(x).__name__)


def cmd_theorem(args):
    name = args.name
    if name not in THEOREM_FLAGS:
        raise UnknownPreset(name)
    N = args.N or DEFAULT_N.get(name, 100_000)
    outcome = experiments.run_theorem(name, N, args.seed, threads=args.threads, **_theorem_kwargs(name, args))
    args.out.mkdir(parents=True, exist_ok=True)
    report = _report_json(outcome, N, args.seed)
    report_path = args.out / f"{name}.report.json"
    report_path.write_text(json.dumps(report, indent=2, default=_jsonable) + "\n")
    trials_path = _write_trials(outcome.trials, args.out, name, args.format)
    print(f"{name}: {report['verdict']}  empirical={report['empirical']:.6g}  claimed={report['claimed']:.6g}")
    for key, ok in outcome.checks.items():
        print(f"  {key}: {'ok' if ok else 'FAILED'}")
    print(f"  wrote {report_path} and {trials_path}")
    return EXIT_OK if outcome.passed else EXIT_VIOLATED


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{v:.17g}"
    return str(v)


def cmd_figure(args):
    fig = experiments.run_figure(args.name, args.N, args.seed, threads=args.threads)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.name}.{args.format}"
    if args.format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fig.columns)
            writer.writerows([[_cell(v) for v in row] for row in fig.rows])
    else:
        data = {"columns": fig.columns, "rows": fig.rows, "summary": fig.summary, "checks": fig.checks}
        path.write_text(json.dumps(data, indent=2, default=_jsonable) + "\n")
    for key, value in fig.summary.items():
        print(f"{key}: {value}")
    for key, ok in fig.checks.items():
        print(f"{key}: {'ok' if ok else 'FAILED'}")
    print(f"wrote {path}")
    return EXIT_OK if fig.passed else EXIT_VIOLATED


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise BadParams("missing " + ", ".join("--" + n.replace("_", "-") for n in missing))
    return [getattr(args, n) for n in names]


def _bound_implied_ose(args):
    s, alpha, rho, tau = _require(args, "s", "alpha", "rho", "tau")
    ose = bounds.implied_ose(s, alpha, rho, tau)
    return f"beta = {ose.beta:.10g}\nrho_out = {ose.rho:.10g}"


def _bound_ose_factor(args):
    alpha, beta = _require(args, "alpha", "beta")
    return f"factor = {bounds.ose_relative_factor(alpha, beta):.10g}"


def _guarantee_text(g):
    kind = "squared" if g.squared else "unsquared"
    return f"factor = {g.factor:.10g} ({kind})\nsuccess_prob = {g.success_prob:.10g}"


def _bound_ls(args):
    return _guarantee_text(bounds.ls_relative_bound(*_require(args, "alpha", "delta", "eta")))


def _bound_rsvd(args):
    return _guarantee_text(bounds.rsvd_relative_bound(*_require(args, "alpha", "rho", "q_minus_r", "eta")))


def _bound_lp_det(args):
    return _guarantee_text(bounds.lp_deterministic_bound(*_require(args, "alpha", "beta", "p")))


def _bound_lp_prob(args):
    if args.delta is not None:
        alpha, delta, p = _require(args, "alpha", "delta", "p")
        return _guarantee_text(bounds.lp_probabilistic_bound_delta(alpha, delta, p, args.rho or 0.0))
    alpha, p, t = _require(args, "alpha", "p", "t")
    return _guarantee_text(bounds.lp_probabilistic_bound(alpha, args.rho or 0.0, p, t))


BOUND_OPS = {
    "implied-ose": _bound_implied_ose,
    "ose-factor": _bound_ose_factor,
    "ls": _bound_ls,
    "rsvd": _bound_rsvd,
    "lp-deterministic": _bound_lp_det,
    "lp-probabilistic": _bound_lp_prob,
}


def cmd_bounds(args):
    print(BOUND_OPS[args.op](args))
    return EXIT_OK


COMMANDS = {"theorem": cmd_theorem, "figure": cmd_figure, "bounds": cmd_bounds}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        if getattr(args, "seed", 0) is None:
            args.seed = _default_seed()
        return COMMANDS[args.command](args)
    except UnknownPreset as exc:
        print(f"osilab: unknown preset {exc.args[0]!r}", file=sys.stderr)
        return EXIT_USAGE
    except (BadParams, TooFewTrials) as exc:
        print(f"osilab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"osilab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OsilabError as exc:
        print(f"osilab: {exc}", file=sys.stderr)
        return EXIT_VIOLATED


if __name__ == "__main__":
    sys.exit(main())
