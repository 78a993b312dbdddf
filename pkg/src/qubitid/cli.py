"""Command-line interface.

Subcommands: design, run-once, rmse, convergence, regions, adaptive.
Outputs go to stdout, or to ``<out>/<command>.<format>`` with ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .bloch import PARAMETER_NAMES
from .errors import InversionDomainError, NoSurvivorError, ValidationError
from .estimator import confidence_region
from .experiments import (
    ExperimentConfig,
    load_config,
    run_adaptive,
    run_convergence,
    run_design,
    run_once,
    run_regions,
    run_rmse,
)
from .measurement import FileSource, empirical_frequencies, measure_all

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DOMAIN = 3
EXIT_AMBIGUOUS = 4
EXIT_NO_SURVIVOR = 5

log = logging.getLogger("qubitid")


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return x


def _csv_text(command: str, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# qubitid {__version__} {command}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _json_text(command: str, payload: dict) -> str:
    doc = {"version": __version__, "command": command}
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _emit(args, name: str, text: str):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{name}.{args.format}"
        path.write_text(text)
        log.info("wrote %s", path)
    else:
        sys.stdout.write(text)


def _config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    for key in ("n", "u_max", "trials", "alpha"):
        value = getattr(args, key, None)
        if value is not None:
            updates[key] = value
    return replace(config, **updates) if updates else config


def cmd_design(args) -> int:
    config = _config(args)
    result = run_design(config)
    if args.format == "json":
        _emit(args, "design", _json_text("design", result))
    else:
        t, d = result["times"], result["diagnostics"]
        rows = [(k, v) for k, v in t.items()]
        rows += [("min_shots", result["min_shots"]), ("ok", d["ok"]),
                 ("pulse_below_pi", d["pulse_below_pi"]),
                 ("omega_branch_contained", d["omega_branch_contained"]),
                 ("psi_det_sign_constant", d["psi_det_sign_constant"])]
        _emit(args, "design", _csv_text("design", ["quantity", "value"], rows))
    for msg in result["diagnostics"]["messages"]:
        log.warning("%s", msg)
    return EXIT_OK if result["diagnostics"]["ok"] else EXIT_VALIDATION


def _report_csv(report) -> str:
    header = ["parameter", "theta_hat", "standard_error", "bias_half_width"]
    header += [f"sigma_{name}" for name in PARAMETER_NAMES]
    se = report.standard_errors()
    rows = []
    for i, name in enumerate(PARAMETER_NAMES):
        rows.append([name, report.theta_hat[i], se[i], report.bias_box[i], *report.sigma_hat[i]])
    return _csv_text("run-once", header, rows)


def cmd_run_once(args) -> int:
    config = _config(args)
    if args.counts:
        times = config.resolved_times()
        counts = measure_all(FileSource(args.counts), times, 0)
        report = confidence_region(empirical_frequencies(counts), times, counts.n, config.alpha,
                                   config.box, config.u_max, config.grid_points)
    else:
        report = run_once(config)
    if args.format == "json":
        _emit(args, "run-once", _json_text("run-once", report.as_dict()))
    else:
        _emit(args, "run-once", _report_csv(report))
    return EXIT_OK


def cmd_rmse(args) -> int:
    rows = run_rmse(_config(args))
    if args.format == "json":
        _emit(args, "rmse", _json_text("rmse", {"rows": rows}))
    else:
        header = list(rows[0])
        _emit(args, "rmse", _csv_text("rmse", header, [[r[h] for h in header] for r in rows]))
    return EXIT_OK


def cmd_convergence(args) -> int:
    config = _config(args)
    if args.n_sweep:
        config = replace(config, n_sweep=[float(x) for x in args.n_sweep.split(",")])
    rows = run_convergence(config)
    if args.format == "json":
        _emit(args, "convergence", _json_text("convergence", {"rows": rows}))
    else:
        header = list(rows[0])
        _emit(args, "convergence",
              _csv_text("convergence", header, [[r[h] for h in header] for r in rows]))
    return EXIT_OK


def cmd_regions(args) -> int:
    config = _config(args)
    if args.u_max_pair:
        config = replace(config, u_max_pair=tuple(float(x) for x in args.u_max_pair.split(",")))
    if len(config.u_max_pair) < 2:
        raise ValidationError("regions needs two u_max values")
    result = run_regions(config)
    if args.format == "json":
        payload = {
            "reports": [rep.as_dict() for rep in result["reports"].values()],
            "nesting": result["nesting"],
            "polylines": [dict(zip(("u_max", "pair", "component", "index", "x", "y"), p))
                          for p in result["polylines"]],
        }
        _emit(args, "regions", _json_text("regions", payload))
    else:
        _emit(args, "regions", _csv_text("regions", ["u_max", "pair", "component", "index", "x", "y"],
                                         result["polylines"]))
        header = ["inner_u_max", "outer_u_max", "pair", "nested", "contained", "margin"]
        _emit(args, "regions_nesting", _csv_text(
            "regions", header, [[r[h] for h in header] for r in result["nesting"]]))
    return EXIT_OK


def cmd_adaptive(args) -> int:
    config = _config(args)
    updates = {}
    if args.epsilon0 is not None:
        updates["epsilon0"] = args.epsilon0
    if args.max_rounds is not None:
        updates["max_rounds"] = args.max_rounds
    if args.search_interval:
        updates["search_interval"] = tuple(float(x) for x in args.search_interval.split(","))
    if args.seed is not None:
        updates["seed"] = args.seed
    if updates:
        config = replace(config, adaptive=replace(config.adaptive, **updates))
    try:
        result = run_adaptive(config)
    except NoSurvivorError as exc:
        rounds = [r.as_dict() for r in exc.diagnostics]
        _emit(args, "adaptive", _json_text("adaptive", {"survivors": [], "rounds": rounds,
                                                        "error": str(exc)})
              if args.format == "json" else
              _csv_text("adaptive", [*PARAMETER_NAMES], []))
        log.error("%s", exc)
        return EXIT_NO_SURVIVOR
    rounds = [r.as_dict() for r in result.rounds]
    if args.format == "json":
        payload = {"survivors": [dict(zip(PARAMETER_NAMES, map(float, s))) for s in result.survivors],
                   "ambiguous": result.ambiguous, "rounds": rounds}
        _emit(args, "adaptive", _json_text("adaptive", payload))
    else:
        _emit(args, "adaptive", _csv_text("adaptive", [*PARAMETER_NAMES], result.survivors))
        header = ["round", "t1", "tau2", "t3", "candidates_in", "survivors"]
        rows = [[r["round"], r["times"]["t1"], r["times"]["tau2"], r["times"]["t3"],
                 r["candidates_in"], r["survivors"]] for r in rounds]
        _emit(args, "adaptive_rounds", _csv_text("adaptive", header, rows))
    return EXIT_AMBIGUOUS if result.ambiguous else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qubitid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qubitid {__version__} ({BACKEND})")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment configuration (default: built-in reference setup)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("design", parents=[common], help="protocol times and validity checks")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("run-once", parents=[common], help="one simulated (or file) estimate")
    p.add_argument("--n", type=float)
    p.add_argument("--u-max", dest="u_max", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--counts", help="CSV of observable_index,s,n to invert instead of simulating")
    p.set_defaults(func=cmd_run_once)

    p = sub.add_parser("rmse", parents=[common], help="Monte Carlo RMSE table")
    p.add_argument("--n", type=float)
    p.add_argument("--u-max", dest="u_max", type=float)
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_rmse)

    p = sub.add_parser("convergence", parents=[common], help="RMSE against shot count")
    p.add_argument("--u-max", dest="u_max", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--n-sweep", help="comma-separated shot counts")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("regions", parents=[common], help="2-d marginal confidence regions")
    p.add_argument("--n", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--u-max-pair", help="comma-separated u_max values, e.g. 1e5,1e7")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("adaptive", parents=[common], help="branch disambiguation over rounds")
    p.add_argument("--n", type=float)
    p.add_argument("--u-max", dest="u_max", type=float)
    p.add_argument("--epsilon0", type=float)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--search-interval", help="omega search interval lo,hi")
    p.set_defaults(func=cmd_adaptive)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except InversionDomainError as exc:
        log.error("%s", exc)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
