"""Certification reports and plot-ready CSV files."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from dataclasses import dataclass, field
from decimal import Decimal
from importlib import resources

from .errors import ValidationError

REPORT_VERSION = 1

# scalar columns of report.csv, in order
ROW_COLUMNS = (
    "theta_deg", "alpha", "I_value", "local_bound", "quantum_max", "epsilon", "stderr",
    "A0_y0", "A0_y1", "f_t", "f_s", "ratio", "primal_objective", "certificate_valid",
    "deficit_raw", "deficit_nqa2", "nqa2_distance", "solver_status", "solver_iterations",
    "nqa2_status", "data_file",
)
FIDELITY_COLUMNS = ("theta_deg", "f_t", "f_s", "ratio")
VIOLATION_COLUMNS = ("theta_deg", "I_value", "local_bound", "quantum_max", "stderr", "A0_y0", "A0_y1")
CURVE_COLUMNS = ("theta_deg", "epsilon", "f_s")


@dataclass(frozen=True)
class ReportRow:
    theta_deg: float
    alpha: float
    I_value: float
    local_bound: float
    quantum_max: float
    epsilon: float
    stderr: float
    A0_y0: float
    A0_y1: float
    f_t: float
    f_s: float
    ratio: float
    primal_objective: float
    certificate_valid: bool
    deficit_raw: float
    deficit_nqa2: float
    nqa2_distance: float
    solver_status: str
    solver_iterations: int
    nqa2_status: str
    data_file: str | None = None
    details: dict = field(default_factory=dict, compare=False)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class CertificationReport:
    config: dict
    rows: tuple[ReportRow, ...]
    aggregate: dict
    conventions: dict
    curves: tuple[tuple[float, float, float], ...] = ()

    def as_dict(self) -> dict:
        return {
            "report_version": REPORT_VERSION,
            "config": self.config,
            "conventions": self.conventions,
            "rows": [r.as_dict() for r in self.rows],
            "aggregate": self.aggregate,
            "robust_curves": [list(c) for c in self.curves],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CertificationReport":
        try:
            rows = tuple(ReportRow(**r) for r in d["rows"])
            return cls(d["config"], rows, d["aggregate"], d["conventions"],
                       tuple(tuple(c) for c in d.get("robust_curves", [])))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed report: {exc}") from None


def aggregate_rows(rows, min_theta_deg: float) -> dict:
    """Mean ratio (and fidelities) over rows with ``theta_deg >= min_theta_deg``."""
    sel = [r for r in rows if r.theta_deg >= min_theta_deg]
    out = {"min_theta_deg": min_theta_deg, "thetas_deg": [r.theta_deg for r in sel], "count": len(sel)}
    if sel:
        out["mean_ratio"] = math.fsum(r.ratio for r in sel) / len(sel)
        out["mean_f_t"] = math.fsum(r.f_t for r in sel) / len(sel)
        out["mean_f_s"] = math.fsum(r.f_s for r in sel) / len(sel)
    else:
        out["mean_ratio"] = out["mean_f_t"] = out["mean_f_s"] = None
    return out


# -- files -----------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _csv(columns, records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([_cell(rec[c]) for c in columns])
    return buf.getvalue()


def report_json(report: CertificationReport) -> str:
    return json.dumps(report.as_dict(), indent=2) + "\n"


def report_csv(report: CertificationReport) -> str:
    return _csv(ROW_COLUMNS, [r.as_dict() for r in report.rows])


def fidelities_csv(rows) -> str:
    return _csv(FIDELITY_COLUMNS, [r.as_dict() for r in rows])


def violation_csv(rows) -> str:
    return _csv(VIOLATION_COLUMNS, [r.as_dict() for r in rows])


def curves_csv(curves) -> str:
    return _csv(CURVE_COLUMNS, [dict(zip(CURVE_COLUMNS, c)) for c in curves])


def _write(path: str, text: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_report(report: CertificationReport, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        _write(os.path.join(out_dir, "report.json"), report_json(report)),
        _write(os.path.join(out_dir, "report.csv"), report_csv(report)),
        _write(os.path.join(out_dir, "fidelities.csv"), fidelities_csv(report.rows)),
        _write(os.path.join(out_dir, "violation.csv"), violation_csv(report.rows)),
    ]
    if report.curves:
        paths.append(write_curves(report.curves, out_dir))
    return paths


def write_curves(curves, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return _write(os.path.join(out_dir, "robust_curves.csv"), curves_csv(curves))


def read_report(out_dir: str) -> CertificationReport:
    path = os.path.join(out_dir, "report.json")
    try:
        with open(path, encoding="utf-8") as fh:
            return CertificationReport.from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None


def read_csv(path: str, columns) -> list[dict]:
    """Read a CSV and check its header; numeric-looking cells become floats."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if rows and tuple(rows[0].keys())[:len(columns)] != tuple(columns):
        raise ValidationError(f"{path}: expected columns {list(columns)}")
    out = []
    for r in rows:
        rec = {}
        for k, v in r.items():
            try:
                rec[k] = float(v)
            except (TypeError, ValueError):
                rec[k] = v
        out.append(rec)
    return out


# -- reference table ingest -------------------------------------------------------

@dataclass(frozen=True)
class ReferenceRow:
    theta_deg: Decimal
    f_t: Decimal
    f_s: Decimal
    ratio_printed: Decimal | None

    @property
    def ratio(self) -> float:
        return float(self.f_s) / float(self.f_t)


def load_reference(path: str | None = None) -> list[ReferenceRow]:
    """Fidelity table ``theta_deg,f_t,f_s[,ratio]``; defaults to the packaged reference values."""
    if path is None:
        text = resources.files("swapcert").joinpath("data/reference_fidelities.csv").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(line for line in text.splitlines() if line and not line.startswith("#"))
    rows = []
    for i, r in enumerate(reader):
        try:
            ratio = r.get("ratio")
            rows.append(ReferenceRow(Decimal(r["theta_deg"]), Decimal(r["f_t"]), Decimal(r["f_s"]),
                                     Decimal(ratio) if ratio not in (None, "") else None))
        except (KeyError, ArithmeticError) as exc:
            raise ValidationError(f"reference row {i + 1}: {exc!r}") from None
    if not rows:
        raise ValidationError("reference table is empty")
    return rows


def reference_aggregate(rows, min_theta_deg: float = 35.0) -> dict:
    """Mean ratio over ``theta >= min_theta_deg``.

    ``mean_ratio_printed`` averages the printed ratio column in exact decimal
    arithmetic; ``mean_ratio`` averages ``f_s/f_t`` recomputed in floating point.
    """
    sel = [r for r in rows if r.theta_deg >= Decimal(str(min_theta_deg))]
    out = {"min_theta_deg": min_theta_deg, "thetas_deg": [float(r.theta_deg) for r in sel],
           "count": len(sel)}
    if not sel:
        raise ValidationError(f"no reference rows with theta >= {min_theta_deg}")
    out["mean_ratio"] = math.fsum(r.ratio for r in sel) / len(sel)
    if all(r.ratio_printed is not None for r in sel):
        out["mean_ratio_printed"] = str(sum(r.ratio_printed for r in sel) / len(sel))
    return out
