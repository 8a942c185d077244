"""End-to-end runs: data generation or ingest, both fidelity estimates, reports."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import sdp
from .bell import (Behavior, alpha_for_theta, local_bound, quantum_max, signaling_deficit,
                   tilted_chsh, to_correlators)
from .certify import certify_behavior, robust_curve
from .config import RunConfig
from .dataio import ExperimentData, read_data, read_directory, write_data
from .errors import SolverError, ValidationError
from .quantum import (NoiseModel, TrialPlan, apply_depolarizing, born_behavior, ideal_measurements,
                      sample_counts, target_state)
from .report import (ROW_COLUMNS, CertificationReport, ReportRow, aggregate_rows, fidelities_csv,
                     read_report, violation_csv, write_curves, write_report)
from .tomography import (expectations_from_counts, expectations_from_probabilities, reconstruct,
                         sample_tomography, tomography_fidelity, tomography_probabilities)

DATA_SUBDIR = "data"

CONVENTIONS = {
    "moment_matrix": "real symmetric; a word and its reversal share one variable",
    "localizing": "symmetrised polynomial plus Hermiticity equalities",
    "epsilon_constraint": ">=",
    "marginal_estimator": "uniform average over the partner setting",
    "nqa2_blocks": "moment matrix only; localizing blocks added when the fidelity SDP cannot be certified otherwise",
    "fidelity_cross_coefficient": "cos(theta) * sin(theta)",
    "tomography": "linear inversion then Frobenius-nearest density matrix",
    "solver": {
        "method": "primal-dual interior point, HKM direction, Mehrotra corrector",
        "max_iter": sdp.DEFAULT_MAX_ITER,
        "step_fraction": sdp.STEP_FRACTION,
        "centering_power": sdp.CENTERING_POWER,
        "stall_iterations": sdp.STALL_ITERATIONS,
    },
}


def theta_seed(seed: int, theta_deg: float) -> int:
    """Per-angle seed so different angles never share sample streams."""
    ss = np.random.SeedSequence([seed, int(round(theta_deg * 1000))])
    return int(ss.generate_state(1, np.uint64)[0])


def noise_model(config: RunConfig) -> NoiseModel:
    return NoiseModel(
        depolarizing_p=config.depolarizing_p,
        offsets_A=tuple(math.radians(v) for v in config.offsets_a_deg),
        offsets_B=tuple(math.radians(v) for v in config.offsets_b_deg),
        xi=math.radians(config.xi_deg),
    )


def simulate_data(config: RunConfig, theta_deg: float) -> ExperimentData:
    """Bell and tomography data for the configured source at one angle."""
    th = math.radians(theta_deg)
    noise = noise_model(config)
    rho = apply_depolarizing(target_state(th).density(), noise.depolarizing_p)
    behavior = born_behavior(rho, noise.perturb(ideal_measurements(th)))
    tomo = tomography_probabilities(rho, noise.xi)
    if config.infinite_sample:
        return ExperimentData(theta_deg, config.trials_per_setting, config.counting_mode, None,
                              exact_behavior=behavior, exact_tomo=tomo)
    plan = TrialPlan(config.trials_per_setting, config.counting_mode, theta_seed(config.seed, theta_deg))
    return ExperimentData(
        theta_deg, plan.trials_per_setting, plan.counting_mode, plan.seed,
        selftest=sample_counts(behavior, plan, theta_deg), tomo=sample_tomography(tomo, plan))


def chsh_stderr(b: Behavior, alpha: float, totals: np.ndarray) -> float:
    """Plug-in standard error of the tilted-CHSH estimate from independent settings.

    Each setting contributes the sample mean of ``Z = (alpha/2) a + s ab``
    (``x = 0``) or ``Z = s ab`` (``x = 1``), with ``s = -1`` only for ``(1, 1)``.
    """
    sa = np.array([1.0, -1.0])
    var = 0.0
    for x in range(2):
        for y in range(2):
            s = -1.0 if (x, y) == (1, 1) else 1.0
            z = s * np.outer(sa, sa)
            if x == 0:
                z = z + alpha / 2 * sa[:, None]
            p = b.p[:, :, x, y]
            var += (float(np.sum(p * z * z)) - float(np.sum(p * z)) ** 2) / totals[x, y]
    return math.sqrt(max(var, 0.0))


def tomography_estimate(data: ExperimentData):
    """Pauli expectations and the fidelity of the reconstructed state with the target."""
    if data.infinite_sample:
        expectations = expectations_from_probabilities(data.exact_tomo)
    else:
        expectations = expectations_from_counts(data.tomo)
    return expectations, tomography_fidelity(reconstruct(expectations), math.radians(data.theta_deg))


def analyze(data: ExperimentData, tol: float = sdp.DEFAULT_TOL, data_file: str | None = None) -> ReportRow:
    """Tomographic fidelity and certified self-testing bound for one angle."""
    th = math.radians(data.theta_deg)
    alpha = alpha_for_theta(th)
    raw = data.behavior()
    cf_raw = to_correlators(raw)
    value = tilted_chsh(cf_raw, alpha)
    qmax = quantum_max(alpha)
    marg = raw.marginal_a()
    try:
        result = certify_behavior(raw, th, tol)
    except SolverError as exc:
        raise SolverError(f"theta={data.theta_deg:g} deg: {exc}", exc.solution) from exc

    expectations, f_t = tomography_estimate(data)
    cert = result.certificate
    details = {
        "raw_correlators": cf_raw.as_dict(),
        "regularized_correlators": result.correlators.as_dict(),
        "certificate": cert.as_dict(),
        "nqa2": result.nqa2.diagnostics,
        "pauli_expectations": expectations.as_dict(),
    }
    return ReportRow(
        theta_deg=data.theta_deg, alpha=alpha, I_value=value, local_bound=local_bound(alpha),
        quantum_max=qmax, epsilon=qmax - value, stderr=chsh_stderr(raw, alpha, data.setting_totals()),
        A0_y0=float(marg[0, 0]), A0_y1=float(marg[0, 1]),
        f_t=f_t, f_s=cert.f_s, ratio=cert.f_s / f_t, primal_objective=cert.primal_objective,
        certificate_valid=cert.certificate_valid,
        deficit_raw=signaling_deficit(raw).max_deficit,
        deficit_nqa2=signaling_deficit(result.nqa2.regularized).max_deficit,
        nqa2_distance=result.nqa2.distance,
        solver_status=cert.diagnostics["status"], solver_iterations=cert.diagnostics["iterations"],
        nqa2_status=result.nqa2.diagnostics["status"], data_file=data_file, details=details,
    )


def _analyze_job(args):
    data, tol, name = args
    return analyze(data, tol, name)


def _curve_job(args):
    theta_deg, eps_grid, tol = args
    return [(theta_deg, e, f) for e, f in robust_curve(math.radians(theta_deg), eps_grid, tol)]


def _map(fn, jobs, workers: int):
    """Ordered map; a bounded process pool when ``workers > 1``."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def collect_data(config: RunConfig) -> list[tuple[ExperimentData, str]]:
    """Data per angle with the path of its file relative to ``out_dir``."""
    if config.mode == "ingest":
        return [(d, os.path.relpath(path, config.out_dir)) for d, path in read_directory(config.input_dir)]
    out = []
    data_dir = os.path.join(config.out_dir, DATA_SUBDIR)
    for t in sorted(config.thetas_deg):
        d = simulate_data(config, t)
        path = write_data(d, data_dir)
        out.append((d, os.path.relpath(path, config.out_dir)))
    return out


def emit_robust_curves(config: RunConfig, thetas_deg=None) -> list[tuple[float, float, float]]:
    thetas = sorted(thetas_deg if thetas_deg is not None else config.thetas_deg)
    jobs = [(t, tuple(config.eps_grid), config.tol) for t in thetas]
    rows = [r for chunk in _map(_curve_job, jobs, config.workers) for r in chunk]
    write_curves(rows, config.out_dir)
    return rows


def emit_violation_data(config: RunConfig, rows) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    path = os.path.join(config.out_dir, "violation.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(violation_csv(rows))
    return path


def embedded_config(config: RunConfig) -> dict:
    """The resolved config as stored in reports; ``out_dir`` is left out so reports relocate."""
    d = config.as_dict()
    d.pop("out_dir")
    return d


def run(config: RunConfig) -> CertificationReport:
    items = collect_data(config)
    jobs = [(d, config.tol, name) for d, name in items]
    rows = tuple(_map(_analyze_job, jobs, config.workers))
    curves = ()
    if config.robust_curves and config.eps_grid:
        curves = tuple(emit_robust_curves(config, [r.theta_deg for r in rows]))
    report = CertificationReport(
        config=embedded_config(config), rows=rows,
        aggregate=aggregate_rows(rows, config.aggregate_min_theta_deg),
        conventions=CONVENTIONS, curves=curves)
    write_report(report, config.out_dir)
    return report


def _close(a, b, tol) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        if a is None or b is None:
            return a is b
        if math.isnan(a) and math.isnan(b):
            return True
        return abs(a - b) <= tol * (1 + abs(a))
    return a == b


def verify(out_dir: str, tol: float = 1e-9) -> list[str]:
    """Re-derive every report row from the stored data files; return mismatch messages."""
    report = read_report(out_dir)
    cfg = report.config
    problems = []
    for row in report.rows:
        if not row.data_file:
            problems.append(f"theta={row.theta_deg:g}: no data file recorded")
            continue
        data = read_data(os.path.join(out_dir, row.data_file))
        fresh = analyze(data, cfg["tol"], row.data_file).as_dict()
        stored = row.as_dict()
        for key in ROW_COLUMNS:
            if not _close(stored[key], fresh[key], tol):
                problems.append(f"theta={row.theta_deg:g}: {key} stored {stored[key]!r}, re-derived {fresh[key]!r}")
        if abs(row.ratio - row.f_s / row.f_t) > 1e-12:
            problems.append(f"theta={row.theta_deg:g}: ratio differs from f_s/f_t")
    agg = aggregate_rows(report.rows, cfg["aggregate_min_theta_deg"])
    if agg != report.aggregate:
        problems.append(f"aggregate mismatch: stored {report.aggregate}, recomputed {agg}")
    for name, text in (("fidelities.csv", fidelities_csv(report.rows)), ("violation.csv", violation_csv(report.rows))):
        path = os.path.join(out_dir, name)
        if not os.path.exists(path):
            problems.append(f"{name} missing")
            continue
        with open(path, encoding="utf-8") as fh:
            if fh.read() != text:
                problems.append(f"{name} does not match the report rows")
    return problems


def config_from_report(out_dir: str) -> RunConfig:
    cfg = dict(read_report(out_dir).config)
    cfg["out_dir"] = out_dir
    try:
        return RunConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()})
    except TypeError as exc:
        raise ValidationError(f"report config is malformed: {exc}") from None
