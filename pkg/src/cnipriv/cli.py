"""Command-line entry point: `account`, `run <experiment>` and `verify`."""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import fields, replace
from typing import Optional, Sequence

from . import accountant as acc
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    HypothesisError,
    report_indices,
    rows_to_csv,
    run_verify,
    write_csv,
)
from .populations import TASKS


def _optional_float(text: str) -> Optional[float]:
    return None if text.lower() in ("", "none") else float(text)


def _optional_str(text: str) -> Optional[str]:
    return None if text.lower() in ("", "none") else text


_CONVERTERS = {
    "task": str, "n": int, "d": int, "k": int, "m_public": int, "R": float,
    "L": _optional_float, "epsilon": float, "delta": float, "trials": int, "seed": int,
    "variant": _optional_str, "output_path": _optional_str, "lam": _optional_float,
}


def read_config_file(path: str) -> dict:
    """Parses `key = value` lines; `#` starts a comment. Keys are ExperimentConfig fields."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _CONVERTERS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _CONVERTERS[key](value)
    return values


def _add_config_flags(p: argparse.ArgumentParser):
    defaults = ExperimentConfig()
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, dest=f.name, type=_CONVERTERS[f.name],
                       default=getattr(defaults, f.name))
    p.set_defaults(task=None)
    p.add_argument("--config", help="key = value file; its entries override flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnipriv", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    acct = sub.add_parser("account", help="print privacy tables for given parameters")
    acct.add_argument("--n", type=int, required=True)
    acct.add_argument("--L", type=float, default=1.0)
    acct.add_argument("--epsilon", type=float, default=1.0)
    acct.add_argument("--delta", type=float, default=0.01)
    acct.add_argument("--sigma", type=float, default=None,
                      help="noise scale; defaults to the local-DP Gaussian calibration")
    acct.add_argument("--eta", type=float, default=0.1)
    acct.add_argument("--order", type=float, default=2.0)
    acct.add_argument("--beta", type=float, default=None,
                      help="loss smoothness; defaults to 2/eta, the largest the step allows")

    run = sub.add_parser("run", help="run one experiment and write a CSV row")
    run.add_argument("experiment", choices=sorted(EXPERIMENTS))
    _add_config_flags(run)
    run.add_argument("--workers", type=int, default=1)

    ver = sub.add_parser("verify", help="run the numerical oracle suites")
    ver.add_argument("--output", default="verify.jsonl")
    ver.add_argument("--pai-count", type=int, default=200)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--suite", action="append", dest="suites",
                     help="restrict to a suite (repeatable)")
    return parser


def _account(args) -> int:
    sigma = args.sigma or acc.gaussian_sigma_for_dp(args.L, args.epsilon, args.delta)
    beta = 2.0 / args.eta if args.beta is None else args.beta
    cfg = acc.SgdPrivacyConfig(args.n, args.L, sigma, args.eta, beta)
    print(f"n={args.n} L={args.L} sigma={sigma!r} eta={args.eta} beta={beta!r} "
          f"delta={args.delta}")
    print("per-index (skip-prefix noisy SGD)")
    print(f"{'index':>8} {'rdp@order':>14} {'eps_nominal':>14} {'eps_certified':>14}")
    for t in report_indices(args.n):
        rdp = acc.per_index_pnsgd_rdp(cfg, t, args.order).epsilon
        curve = lambda a, t=t: 2.0 * a * args.L ** 2 / (sigma ** 2 * (args.n + 1 - t))
        cert = acc.tightest_dp(curve, args.delta).epsilon
        print(f"{t:>8d} {rdp:>14.6g} {args.epsilon / math.sqrt(args.n - t + 1):>14.6g} "
              f"{cert:>14.6g}")
    local = acc.local_rdp(cfg, args.order).epsilon
    print(f"local rdp@{args.order}: {local:.6g}")
    try:
        stated = acc.stop_pnsgd_rdp(cfg, args.order).epsilon
        certified = acc.stop_pnsgd_certified_rdp(cfg, args.order).epsilon
        print(f"random stop rdp@{args.order}: stated {stated:.6g}, certified {certified:.6g}")
    except ValueError as err:
        print(f"random stop: not available ({err})")
    multi = acc.multiepoch_pnmsgd_rdp(cfg, args.order).epsilon
    print(f"multi-epoch rdp@{args.order}: {multi:.6g}")
    return 0


def _run(args) -> int:
    values = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}
    if values["task"] is None:
        values["task"] = "hinge-smoothed" if args.experiment == "smoothing" else "least-squares"
    if args.config:
        values.update(read_config_file(args.config))
    if values["task"] not in TASKS:
        print(f"unknown task {values['task']!r}; choose from {sorted(TASKS)}", file=sys.stderr)
        return 2
    cfg = replace(ExperimentConfig(), **values)
    try:
        row = EXPERIMENTS[args.experiment](cfg, workers=args.workers)
    except HypothesisError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return 2
    if cfg.output_path:
        path = write_csv([row], cfg.output_path)
        print(f"wrote {path}", file=sys.stderr)
    else:
        sys.stdout.write(rows_to_csv([row]))
    return 0 if row.within_bound else 1


def _verify(args) -> int:
    code = run_verify(args.output, pai_count=args.pai_count, seed=args.seed,
                      suites=args.suites)
    print("verification " + ("passed" if code == 0 else "FAILED"), file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return {"account": _account, "run": _run, "verify": _verify}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
