"""Command line front end: sweep, validate, oracle, fit.

Exit codes: 0 on pass, 2 on a verdict failure, 1 on any error.  A JSON
config file (--config) overrides built-in defaults; flags override both.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import _kernel
from .analysis import (GENERIC_N_GRID, DEGENERATE_N_GRID,
                       InsufficientRowsError, SweepSpec, fit_power_law,
                       rows_from_csv, rows_to_csv, rows_to_json, run_sweep,
                       run_validators)
from .config import RunConfig, load_config
from .engine import Engine
from .fock import load_pair

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_VERDICT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the CLI contract wants 1
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple:
    return tuple(int(part) for part in text.replace(" ", "").split(",") if part)


def build_parser() -> _Parser:
    p = _Parser(prog="lodisc",
                description="adaptive tap/displace/count receiver simulator "
                            f"(kernel backend: {_kernel.backend_name()})")
    p.add_argument("--config", help="JSON config file overriding defaults")
    sub = p.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="error probability vs N, with scaling fit")
    sw.add_argument("--pair", required=True, help="pair JSON file")
    sw.add_argument("--n", type=_int_list, default=None,
                    help="comma-separated strictly increasing N values "
                         "(default: 8..128 geometric, or perfect cubes for a "
                         "degenerate pair so delta = N^-Delta is exact)")
    sw.add_argument("--samples", type=int, default=None,
                    help="MC samples per point (default max(1e4, 100N))")
    sw.add_argument("--seed", type=int, default=1234)
    sw.add_argument("--mode", choices=("exact", "mc", "auto"), default="auto")
    sw.add_argument("--delta-exp", type=float, default=None,
                    help="perturbation exponent Delta for degenerate pairs")
    sw.add_argument("--out", default=None, help="output path (default stdout)")
    sw.add_argument("--format", choices=("csv", "json"), default="csv")

    va = sub.add_parser("validate", help="run every bound-validation grid")
    va.add_argument("--out", default=None)

    orc = sub.add_parser("oracle", help="replay one detection record")
    orc.add_argument("--pair", required=True)
    orc.add_argument("--n", type=int, required=True)
    orc.add_argument("--record", type=_int_list, default=(),
                     help="comma-separated counts, e.g. 0,0,1,0")

    ft = sub.add_parser("fit", help="power-law fit of a sweep CSV")
    ft.add_argument("--csv", required=True)
    ft.add_argument("--expected", type=float, required=True,
                    help="expected log-log slope, e.g. -1.0")
    ft.add_argument("--tol", type=float, default=None,
                    help="slope tolerance (default from config)")
    return p


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_sweep(args, cfg: RunConfig) -> int:
    pair, discarded = load_pair(args.pair, cutoff=cfg.cutoff,
                                trunc_budget=cfg.trunc_budget,
                                ortho_tol=cfg.ortho_tol)
    n_values = args.n
    if n_values is None:
        probe = Engine(pair, GENERIC_N_GRID[-1], cfg)
        n_values = DEGENERATE_N_GRID if probe.degenerate else GENERIC_N_GRID
    spec = SweepSpec(n_values=n_values, samples=args.samples, mode=args.mode,
                     seed=args.seed, delta_exp=args.delta_exp,
                     pair_path=args.pair, out_path=args.out)
    rows, fit = run_sweep(pair, spec, cfg, discarded)
    if args.format == "csv":
        _emit(rows_to_csv(rows, fit), args.out)
    else:
        _emit(rows_to_json(rows, fit) + "\n", args.out)
    if args.out is not None:
        sys.stdout.write(fit.to_json() + "\n")
    if fit.verdict == "insufficient":
        sys.stderr.write("lodisc: all sweep rows are CI-dominated; "
                         "no usable fit\n")
        return EXIT_ERROR
    return EXIT_PASS if fit.verdict in ("pass", "exact-zero") else EXIT_VERDICT


def _cmd_validate(args, cfg: RunConfig) -> int:
    report = run_validators(cfg)
    _emit(json.dumps(report, sort_keys=True) + "\n", args.out)
    if args.out is not None:
        sys.stdout.write(f"validate: {report['violations']} violations\n")
    return EXIT_PASS if report["pass"] else EXIT_VERDICT


def _cmd_oracle(args, cfg: RunConfig) -> int:
    pair, discarded = load_pair(args.pair, cutoff=cfg.cutoff,
                                trunc_budget=cfg.trunc_budget,
                                ortho_tol=cfg.ortho_tol)
    eng = Engine(pair, args.n, cfg, discarded)
    header = {"N": args.n, "record": list(args.record),
              "cutoff": pair.cutoff, "degenerate": eng.degenerate,
              "delta": eng.delta}
    sys.stdout.write(json.dumps(header, sort_keys=True) + "\n")
    for row in eng.replay(args.record):
        sys.stdout.write(json.dumps(row, sort_keys=True) + "\n")
    return EXIT_PASS


def _cmd_fit(args, cfg: RunConfig) -> int:
    rows, _ = rows_from_csv(Path(args.csv).read_text())
    tol = args.tol if args.tol is not None else cfg.slope_tol_generic
    fit = fit_power_law(rows, args.expected, tol, cfg)
    sys.stdout.write(fit.to_json() + "\n")
    if fit.verdict == "exact-zero":
        return EXIT_PASS
    return EXIT_PASS if fit.verdict == "pass" else EXIT_VERDICT


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "sweep":
            return _cmd_sweep(args, cfg)
        if args.command == "validate":
            return _cmd_validate(args, cfg)
        if args.command == "oracle":
            return _cmd_oracle(args, cfg)
        if args.command == "fit":
            return _cmd_fit(args, cfg)
        raise ValueError(f"unknown command {args.command!r}")
    except InsufficientRowsError as exc:
        sys.stderr.write(f"lodisc: {exc}\n")
        return EXIT_ERROR
    except (OSError, ValueError, RuntimeError) as exc:
        sys.stderr.write(f"lodisc: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
