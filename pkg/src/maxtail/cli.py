"""Command line entry point: ``maxtail <subcommand> -c config.json [-o out]``.

Exit codes: 0 success, 1 internal error, 2 config error, 3 a verify-*
subcommand run with ``--assert`` failed its checks.  Data goes to files or
stdout, progress and diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import coefficients as coef
from .config import load_config
from .errors import ConfigError, LrdModel, MaxTailError
from .estimators import Centering, estimate, standardized_statistics, threshold_schedule
from .harness import ExperimentConfig, default_workers, run_experiment
from .models import LagSet, make_model
from .simulate import read_path_binary, simulate_path, write_path_binary

log = logging.getLogger("maxtail")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_ASSERT = 0, 1, 2, 3

_NON_EXPERIMENT_KEYS = ("n", "u", "path_file")


def _emit(text: str, target) -> None:
    if target is None or str(target) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(target).write_text(text, encoding="utf-8", newline="\n")


def _experiment_config(cfg: dict, args, mode: str | None) -> ExperimentConfig:
    d = {k: v for k, v in cfg.items() if k not in _NON_EXPERIMENT_KEYS}
    if "n" in cfg and "n_grid" not in cfg:
        d["n_grid"] = [cfg["n"]]
    if mode is not None:
        d["mode"] = mode
    if args.seed is not None:
        d["seed"] = args.seed
    if args.replicates is not None:
        d["replicates"] = args.replicates
    exp = ExperimentConfig.from_dict(d)
    exp.build_model()
    return exp


def _window(cfg: dict) -> int:
    if "n" in cfg:
        return int(cfg["n"])
    if "n_grid" in cfg:
        return int(cfg["n_grid"][0])
    raise ConfigError("config needs 'n' (or 'n_grid')")


def cmd_simulate(cfg: dict, args) -> int:
    model = make_model(cfg["model"])
    T = LagSet(tuple(cfg.get("lags", [0])))
    n = _window(cfg)
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    path = simulate_path(model, n, T, seed)
    if args.binary:
        if not args.output:
            raise ConfigError("--binary needs --output")
        write_path_binary(path, args.output)
        return EXIT_OK
    lines = ["t,value"] + [f"{i + 1},{float(v)!r}" for i, v in enumerate(path.values)]
    _emit("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_coefficients(cfg: dict, args) -> int:
    model = make_model(cfg["model"])
    T = LagSet(tuple(cfg.get("lags", [0, 1])))
    horizon = int(cfg.get("horizon", coef.DEFAULT_HORIZON))
    table = coef.coefficient_table(model, T, horizon)
    _emit(table.to_csv(), args.output)
    if args.variances:
        if coef.is_lrd(model):
            payload = {"model": table.model, "sigma0_sq": coef.sigma0_sq(model, horizon).to_dict()}
            text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
        else:
            text = coef.sigma_matrix(model, T, horizon).to_json()
        _emit(text, args.variances)
    return EXIT_OK


def _read_path_file(name: str):
    p = Path(name)
    if p.suffix == ".csv":
        data = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
        return data[:, -1]
    values, _, _ = read_path_binary(p)
    return values


def cmd_estimate(cfg: dict, args) -> int:
    model = make_model(cfg["model"])
    T = LagSet(tuple(cfg.get("lags", [0, 1])))
    n = _window(cfg)
    u = cfg.get("u")
    if u is None:
        u = threshold_schedule(n, cfg.get("gamma", 0.5), model.alpha)
    if "path_file" in cfg:
        values = _read_path_file(cfg["path_file"])
    else:
        seed = args.seed if args.seed is not None else cfg.get("seed", 0)
        values = simulate_path(model, n, T, seed).values
    triple = estimate(values, T, u, n=n)
    centering = Centering(cfg.get("centering", "limit"))
    stats = standardized_statistics(triple, n, u, model, T, centering, strict=False)
    payload = {
        "schema": 1,
        "n": n,
        "u": u,
        "lags": list(T.lags),
        "p_hat": triple.p_hat,
        "numerator_hat": triple.numerator_hat,
        "chi_hat": triple.chi_hat,
        "effective_sample": triple.effective_sample,
        "chi_T": coef.chi_direct(model, T.lags),
        "standardized": {
            "denominator": stats.denominator,
            "numerator": stats.numerator,
            "ratio": stats.ratio,
            "centering": centering.value,
        },
    }
    _emit(json.dumps(payload, sort_keys=True, indent=2) + "\n", args.output)
    return EXIT_OK


def _run_verify(cfg: dict, args, mode: str | None) -> int:
    exp = _experiment_config(cfg, args, mode)
    workers = args.workers if args.workers is not None else default_workers()
    report = run_experiment(exp, workers)
    log.info("%s finished in %.2fs (passed=%s)", report.mode, report.timing.get("seconds", 0.0), report.passed)
    _emit(report.to_json(include_timing=args.timing), args.output)
    if args.csv:
        _emit(report.to_csv(), args.csv)
    if args.do_assert and not report.passed:
        failed = [k for k, v in report.body.get("checks", {}).items() if not v]
        log.error("checks failed: %s", ", ".join(failed))
        return EXIT_ASSERT
    return EXIT_OK


def cmd_verify_clt(cfg, args):
    return _run_verify(cfg, args, "clt")


def cmd_verify_bounds(cfg, args):
    return _run_verify(cfg, args, "bound_audit")


def cmd_phase_transition(cfg, args):
    mode = cfg.get("mode")
    return _run_verify(cfg, args, mode if mode in ("variance_scaling", "lrd_sweep") else "variance_scaling")


COMMANDS = {
    "simulate": cmd_simulate,
    "coefficients": cmd_coefficients,
    "estimate": cmd_estimate,
    "verify-clt": cmd_verify_clt,
    "verify-bounds": cmd_verify_bounds,
    "phase-transition": cmd_phase_transition,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxtail", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", required=True, help="JSON config file")
        p.add_argument("-o", "--output", help="output file (default: stdout)")
        p.add_argument("--seed", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--workers", type=int, help="worker threads (env MAXTAIL_WORKERS)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "simulate":
            p.add_argument("--binary", action="store_true", help="write a little-endian float64 dump")
        if name == "coefficients":
            p.add_argument("--variances", help="also write asymptotic variances as JSON")
        if name.startswith("verify") or name == "phase-transition":
            p.add_argument("--csv", help="also write one CSV row per (n, statistic)")
            p.add_argument("--assert", dest="do_assert", action="store_true",
                           help="exit 3 when any check fails")
            p.add_argument("--timing", action="store_true",
                           help="include wall-clock timing in the JSON report")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"maxtail: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, LrdModel) as exc:
        print(f"maxtail: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MaxTailError as exc:
        print(f"maxtail: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
