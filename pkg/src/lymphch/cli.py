"""Command line entry point.

    lymphch run <config.json> [--out DIR]
    lymphch cascade <config.json> --param delta --values 1e-2,1e-3,1e-4 [--out DIR]
    lymphch mms <config.json> --levels 4 [--out DIR]
    lymphch resume <checkpoint> --until T

Exit codes: 0 ok, 2 config error, 3 solver failure, 4 I/O error.
``LCH_THREADS`` caps the number of parallel cascade rows.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments
from .config import ConfigError, load_config
from .galerkin import StepUnderflow
from .io import CheckpointError
from .stepper import SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("lymphch")


def _values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lymphch", description=__doc__.splitlines()[0] if __doc__ else None)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single run to T_final")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (default: output.dir of the config)")

    p = sub.add_parser("cascade", help="sweep delta, epsilon or N")
    p.add_argument("config")
    p.add_argument("--param", required=True, choices=experiments.CASCADE_PARAMS)
    p.add_argument("--values", required=True, type=_values)
    p.add_argument("--out")

    p = sub.add_parser("mms", help="manufactured-solution convergence study")
    p.add_argument("config")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--out")

    p = sub.add_parser("resume", help="continue from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--until", type=float, required=True)
    return ap


def _run(args) -> int:
    cfg = load_config(args.config)
    res = experiments.run(cfg, args.out)
    last = res.records[-1]
    print(f"t={last.t:.6g} E={last.E:.10g} S={last.S:.6g} "
          f"phi in [{last.min_phi:.6g}, {last.max_phi:.6g}] min c={last.min_c:.3g} -> {res.out_dir}")
    return EXIT_OK


def _cascade(args) -> int:
    cfg = load_config(args.config)
    summary = experiments.cascade(cfg, args.param, args.values, args.out)
    failed = 0
    for row in summary["rows"]:
        if row["status"] != "ok":
            failed += 1
            print(f"{args.param}={row['value']:g}: {row['status']}")
            continue
        print(f"{args.param}={row['value']:g}: phi in [{row['min_phi_run']:.6g}, {row['max_phi_run']:.6g}] "
              f"S(T)={row['S_T']:.6g} meas(phi>=1.01)={row['meas_upper_0.01']:g} "
              f"dist_prev={row['dist_prev_final']:.3g}")
    if "K" in summary:
        print(f"excess fit: K={summary['K']:.4g} trend_ok={summary['trend_ok']}")
    return EXIT_SOLVER if failed else EXIT_OK


def _mms(args) -> int:
    cfg = load_config(args.config)
    table = experiments.mms(cfg, args.levels)
    for r in table["rows"]:
        orders = f" order phi={r['order_phi']:.3f} c={r['order_c']:.3f}" if "order_phi" in r else ""
        print(f"n={r['n']:5d} dt={r['dt']:.3e} err phi={r['err_phi']:.3e} c={r['err_c']:.3e}{orders}")
    experiments.write_mms(args.out or cfg.output.dir, table)
    print(json.dumps({"min_order_phi": table["min_order_phi"], "min_order_c": table["min_order_c"]}))
    return EXIT_OK


def _resume(args) -> int:
    res = experiments.resume(args.checkpoint, args.until)
    last = res.records[-1]
    print(f"t={last.t:.6g} E={last.E:.10g} -> {res.out_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    handler = {"run": _run, "cascade": _cascade, "mms": _mms, "resume": _resume}[args.command]
    try:
        return handler(args)
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print("config error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, StepUnderflow) as exc:
        print(f"solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
