"""Command-line interface.

Exit codes: 0 success, 2 validation error (bad input, config or files,
or a failed ``verify``), 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import pipeline
from .config import load_config
from .dataio import read_directory, write_data
from .errors import SchemaError, SolverError, ValidationError
from .report import load_reference, reference_aggregate
from .tomography import miscalibration_demo

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="flat key = value config file")
    p.add_argument("--theta", metavar="LIST", help="angles in degrees, comma separated")
    p.add_argument("--trials", metavar="N", help="trials per setting")
    p.add_argument("--seed", metavar="N")
    p.add_argument("--mode", choices=("simulate", "ingest"))
    p.add_argument("--input", metavar="DIR", help="data directory for ingest mode")
    p.add_argument("--infinite-sample", action="store_true", default=None,
                   help="use exact Born probabilities instead of sampled counts")
    p.add_argument("--eps-grid", metavar="LIST", help="epsilon values for robustness curves")
    p.add_argument("--tol", metavar="X", help="relative duality-gap tolerance")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--workers", metavar="N", help="worker processes for independent angles")


_FLAG_KEYS = {
    "theta": "thetas_deg", "trials": "trials_per_setting", "seed": "seed", "mode": "mode",
    "input": "input_dir", "infinite_sample": "infinite_sample", "eps_grid": "eps_grid",
    "tol": "tol", "out": "out_dir", "workers": "workers",
}


def _config(args, **extra):
    overrides = {key: getattr(args, flag) for flag, key in _FLAG_KEYS.items()
                 if getattr(args, flag, None) is not None}
    if overrides.get("input_dir") and "mode" not in overrides:
        overrides["mode"] = "ingest"
    overrides.update(extra)
    return load_config(args.config, overrides)


def _items(config):
    """Data for each angle: from files in ingest mode, simulated in memory otherwise."""
    if config.mode == "ingest":
        return read_directory(config.input_dir)
    return [(pipeline.simulate_data(config, t), None) for t in sorted(config.thetas_deg)]


def cmd_simulate(args) -> int:
    config = _config(args, mode="simulate")
    directory = os.path.join(config.out_dir, pipeline.DATA_SUBDIR)
    for t in sorted(config.thetas_deg):
        print(write_data(pipeline.simulate_data(config, t), directory))
    return EXIT_OK


def cmd_certify(args) -> int:
    config = _config(args)
    out = []
    for data, _ in _items(config):
        row = pipeline.analyze(data, config.tol)
        cert = row.details["certificate"]
        out.append({"theta_deg": row.theta_deg, "f_s": row.f_s, "nqa2_distance": row.nqa2_distance,
                    "deficit_raw": row.deficit_raw, "deficit_nqa2": row.deficit_nqa2, "certificate": cert})
        print(f"theta={row.theta_deg:g}  f_s={row.f_s:.6f}  s={row.nqa2_distance:.3e}  "
              f"status={row.solver_status}")
    _dump(config.out_dir, "certificates.json", out)
    return EXIT_OK


def cmd_tomo(args) -> int:
    config = _config(args)
    out = []
    for data, _ in _items(config):
        expectations, f_t = pipeline.tomography_estimate(data)
        out.append({"theta_deg": data.theta_deg, "f_t": f_t, "pauli_expectations": expectations.as_dict()})
        print(f"theta={data.theta_deg:g}  f_t={f_t:.6f}")
    _dump(config.out_dir, "tomography.json", out)
    return EXIT_OK


def cmd_curve(args) -> int:
    config = _config(args)
    if not config.eps_grid:
        raise ValidationError("eps_grid is empty")
    for theta, eps, f in pipeline.emit_robust_curves(config):
        print(f"theta={theta:g}  eps={eps:g}  f_s={f:.6f}")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.reference is not None:
        return _reference(args)
    config = _config(args)
    report = pipeline.run(config)
    for r in report.rows:
        print(f"theta={r.theta_deg:g}  I={r.I_value:.4f}/{r.quantum_max:.4f}  "
              f"f_t={r.f_t:.4f}  f_s={r.f_s:.4f}  ratio={r.ratio:.4f}")
    agg = report.aggregate
    if agg["mean_ratio"] is not None:
        print(f"mean ratio over theta >= {agg['min_theta_deg']:g}: {agg['mean_ratio']:.4f}")
    return EXIT_OK


def _reference(args) -> int:
    config = _config(args)
    rows = load_reference(args.reference or None)
    agg = reference_aggregate(rows, config.aggregate_min_theta_deg)
    for r in rows:
        print(f"theta={r.theta_deg}  f_t={r.f_t}  f_s={r.f_s}  ratio={r.ratio:.4f}")
    print(f"mean ratio over theta >= {config.aggregate_min_theta_deg:g}: "
          f"{agg.get('mean_ratio_printed', '')} (printed ratios), {agg['mean_ratio']:.6f} (f_s/f_t)")
    _dump(config.out_dir, "reference_aggregate.json", agg)
    return EXIT_OK


def cmd_demo(args) -> int:
    demo = miscalibration_demo(args.p, math.radians(args.xi_deg))
    print(f"p={demo.p:g}  xi={args.xi_deg:g} deg")
    print(f"F_true     = {demo.F_true:.10f}")
    print(f"F_reported = {demo.F_reported:.10f}")
    if demo.absurd:
        print("F_reported > 1: absurd, a false positive from miscalibrated axes")
    elif demo.F_reported > demo.F_true:
        print("F_reported overestimates the true fidelity")
    else:
        print("no false positive")
    if args.json:
        print(json.dumps(demo.as_dict(), indent=2))
    return EXIT_OK


def cmd_verify(args) -> int:
    out_dir = args.out or "swapcert-out"
    problems = pipeline.verify(out_dir)
    for msg in problems:
        print(f"MISMATCH {msg}")
    if problems:
        return EXIT_VALIDATION
    print(f"verified {out_dir}: all rows re-derived from data files")
    return EXIT_OK


def _dump(out_dir: str, name: str, payload) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, indent=2) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swapcert", description="Certify two-qubit entangled sources by tomography and SWAP-method self-testing.",
        epilog="Exit codes: 0 success, 2 validation error, 3 solver failure.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, fn, text in (
        ("simulate", cmd_simulate, "write simulated data files"),
        ("certify", cmd_certify, "NQA2 regularisation and SWAP fidelity bounds"),
        ("tomo", cmd_tomo, "tomographic fidelities"),
        ("curve", cmd_curve, "fidelity bound against deviation from maximal violation"),
        ("report", cmd_report, "full run with all report and plot-data files"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.set_defaults(func=fn)
        if name == "report":
            p.add_argument("--reference", nargs="?", const="", metavar="CSV",
                           help="aggregate a reference fidelity table (packaged one if no path)")

    p = sub.add_parser("demo-miscalibration", help="tomography false positive from rotated axes")
    p.add_argument("--p", type=float, default=1.0, help="mixing weight of the target state")
    p.add_argument("--xi-deg", type=float, default=45.0, help="miscalibration angle in degrees")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("verify", help="re-derive a report from its data files")
    p.add_argument("--out", metavar="DIR", help="directory holding report.json")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValidationError, SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
