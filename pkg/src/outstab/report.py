"""Orchestration of analyze / simulate / oracle-check runs and their serialization.

Report JSON schema (``schema_version`` 1), fixed key order::

    schema_version, tool{name, version}, command,
    verdict, verdict_literal, verdict_refined, reading,
    witnesses{literal: [{cluster, mu}], refined: [...]},
    approx_controllability{status, mode, clusters_checked},
    modes: [{cluster, mu, multiplicity, mode_indices, rank_B, kernel_dim,
             observable_uncontrollable_dim, in_J, in_K_literal, in_K_refined, B, T}],
    truncation{...}, tolerances{...}, conventions{...}, config{...}

Errors are reported as ``{"schema_version", "tool", "command", "error": {type, message, ...}}``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from outstab import __version__
from outstab.config import RunConfig, config_to_dict
from outstab.fd_oracle import discretize, integrate_lti, pbh_output_stab_check, sample_initial_state
from outstab.mode_analysis import (
    StabilizabilityReport,
    TruncationError,
    analyze_mode,
    analyze_system,
    mode_matrices_for,
    rank_margin,
)
from outstab.simulator import (
    FeedbackRefused,
    InitialState,
    TimeSeries,
    default_times,
    design_modal_feedback,
    estimate_decay_rate,
    output_uncontrollable,
    project_initial_state,
    simulate_closed_loop,
)
from outstab.spectral_core import Domain, clusters_in_index_box, enumerate_clusters

SCHEMA_VERSION = 1

EXIT_STABILIZABLE = 0
EXIT_NOT_STABILIZABLE = 1
EXIT_CONFIG_ERROR = 2
EXIT_INTERNAL_ERROR = 3
EXIT_DISAGREEMENT = 4
EXIT_INCONCLUSIVE = 5

CONVENTIONS = {
    "uncontrollable_condition": "B_n v = 0 with B_n the p x r_n matrix of <g_i, phi_nj>",
    "controllable_subspace": "row space of B_n",
    "observable_uncontrollable_subspace": "ker B_n minus (ker B_n intersect ker T_n)",
    "K_literal": "T_n != 0 and ker B_n != {0}",
    "K_refined": "T_n nonzero on ker B_n",
    "zero_eigenvalue": "mu >= -zero_tolerance counts as not stable",
}


def _clean(value: Any) -> Any:
    """JSON-ready copy: numpy to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return value


def dumps(doc: dict) -> str:
    # repr-based float output is the shortest round-trip form (<= 17 digits)
    return json.dumps(_clean(doc), indent=2, ensure_ascii=False) + "\n"


def _header(command: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "tool": {"name": "outstab", "version": __version__}, "command": command}


def error_document(command: str, kind: str, message: str, **extra) -> dict:
    doc = _header(command)
    doc["error"] = {"type": kind, "message": message, **extra}
    return doc


def report_to_dict(report: StabilizabilityReport, cfg: RunConfig | None = None, command: str = "analyze") -> dict:
    doc = _header(command)
    doc.update(
        verdict=report.verdict,
        verdict_literal=report.verdict_literal,
        verdict_refined=report.verdict_refined,
        reading=report.reading,
        witnesses={
            "literal": [{"cluster": n, "mu": mu} for n, mu in report.witnesses_literal],
            "refined": [{"cluster": n, "mu": mu} for n, mu in report.witnesses_refined],
        },
        approx_controllability=report.approx_controllability.as_dict(),
    )
    modes = []
    for m in sorted(report.modes, key=lambda a: a.cluster_index):
        mm = report.mode_matrices.get(m.cluster_index)
        modes.append({
            "cluster": m.cluster_index,
            "mu": m.mu,
            "multiplicity": m.multiplicity,
            "mode_indices": [list(ix) for ix in m.mode_indices],
            "rank_B": m.rank_B,
            "kernel_dim": m.kernel_dim,
            "observable_uncontrollable_dim": m.observable_uncontrollable_basis.shape[1],
            "in_J": m.in_J,
            "in_K_literal": m.in_K_literal,
            "in_K_refined": m.in_K_refined,
            "B": mm.B if mm is not None else None,
            "T": mm.T if mm is not None else None,
        })
    doc["modes"] = modes
    doc["truncation"] = dict(report.truncation_info)
    if cfg is not None:
        doc["tolerances"] = config_to_dict(cfg)["tolerances"]
    doc["conventions"] = CONVENTIONS
    if cfg is not None:
        doc["config"] = config_to_dict(cfg)
    return doc


def analyze(cfg: RunConfig) -> StabilizabilityReport:
    return analyze_system(cfg.domain, cfg.k, cfg.actuators, cfg.sensors, cfg.analysis_settings())


def run_analysis(cfg: RunConfig) -> tuple[dict, int]:
    """Analysis report document and exit code."""
    try:
        report = analyze(cfg)
    except TruncationError as exc:
        return error_document("analyze", "truncation", str(exc), missing_clusters=exc.missing), EXIT_INTERNAL_ERROR
    code = EXIT_STABILIZABLE if report.verdict else EXIT_NOT_STABILIZABLE
    return report_to_dict(report, cfg), code


# -- simulation ---------------------------------------------------------------

def simulation_clusters(cfg: RunConfig):
    t = cfg.truncation
    if cfg.domain.dim == 1:
        clusters = enumerate_clusters(cfg.domain, cfg.k, count=t.simulation_modes, tolerance=cfg.tolerances.cluster)
    else:
        clusters = clusters_in_index_box(cfg.domain, cfg.k, t.simulation_max_index, cfg.tolerances.cluster)
    # the verdict's unstable clusters must all be simulated
    unstable = enumerate_clusters(cfg.domain, cfg.k, threshold=-cfg.tolerances.zero, tolerance=cfg.tolerances.cluster)
    return clusters if len(clusters) >= len(unstable) else unstable


def default_initial_state(domain: Domain) -> InitialState:
    if domain.dim == 1:
        L = domain.lengths[0]
        return InitialState.polynomial([0.0, L, -1.0])
    a, b = domain.lengths
    return InitialState.polynomial(np.outer([0.0, a, -1.0], [0.0, b, -1.0]))


@dataclass
class SimulationResult:
    series: TimeSeries
    uncontrollable: TimeSeries
    rate: float
    residual: float
    window: tuple[float, float]
    report: StabilizabilityReport
    gain_poles: list
    notes: list[str]


def simulate(cfg: RunConfig, x0: InitialState | None = None, strict: bool = False) -> SimulationResult:
    s = cfg.simulation
    domain = cfg.domain
    clusters = simulation_clusters(cfg)
    settings = cfg.analysis_settings()
    report = analyze_system(domain, cfg.k, cfg.actuators, cfg.sensors, settings, clusters=clusters)
    matrices = report.mode_matrices
    analyses = report.modes
    x0 = x0 or s.initial_state or default_initial_state(domain)
    coeffs = project_initial_state(x0, clusters, domain, cfg.quadrature)
    times = default_times(s.sigma, s.horizon, s.points)
    notes = list(coeffs.warnings)
    gain = None
    if s.feedback and cfg.actuators:
        gain = design_modal_feedback(clusters, matrices, analyses, s.sigma, settings.zero_tol, settings.rank_tol, strict=strict)
        if not report.verdict_refined:
            notes.append("not output stabilizable: feedback shifts only the controllable content")
    if not cfg.sensors:
        series = TimeSeries(times, np.zeros((len(times), 0)))
    else:
        series = simulate_closed_loop(clusters, matrices, gain, coeffs, times, settings.rank_tol)
    sensors_T = {n: mm.T for n, mm in matrices.items()}
    y2 = output_uncontrollable(coeffs, analyses, sensors_T, report.K_set(cfg.k_reading), times)
    window = (0.2 * times[-1], float(times[-1]))
    rate, residual = estimate_decay_rate(series, window)
    poles = [] if gain is None else list(gain.closed_loop_poles)
    return SimulationResult(series, y2, rate, residual, window, report, poles, notes)


def series_to_csv(series: TimeSeries, labels: list[str]) -> str:
    buf = io.StringIO()
    buf.write(",".join(["t"] + [f"y_{i + 1}:{lab}" if lab else f"y_{i + 1}" for i, lab in enumerate(labels)] + ["norm_y"]) + "\n")
    norms = series.norms
    for i, t in enumerate(series.times):
        row = [repr(float(t))] + [repr(float(v)) for v in series.outputs[i]] + [repr(float(norms[i]))]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def run_simulation(cfg: RunConfig) -> tuple[str, dict, int]:
    """``(csv text, decay summary document, exit code)``."""
    try:
        res = simulate(cfg)
    except (TruncationError, FeedbackRefused) as exc:
        return "", error_document("simulate", type(exc).__name__, str(exc)), EXIT_INTERNAL_ERROR
    csv_text = series_to_csv(res.series, [d.label for d in cfg.sensors])
    y2_rate, _ = estimate_decay_rate(res.uncontrollable, res.window)
    doc = _header("simulate")
    doc.update(
        verdict_refined=res.report.verdict_refined,
        verdict_literal=res.report.verdict_literal,
        k_reading=cfg.k_reading,
        sigma=cfg.simulation.sigma,
        fitted_rate=res.rate,
        fit_residual=res.residual,
        window=list(res.window),
        uncontrollable_output_rate=y2_rate,
        closed_loop_poles=[{"re": float(np.real(p)), "im": float(np.imag(p))} for p in res.gain_poles],
        clusters_simulated=len(res.report.modes),
        notes=res.notes,
    )
    doc["config"] = config_to_dict(cfg)
    code = EXIT_STABILIZABLE if res.report.verdict else EXIT_NOT_STABILIZABLE
    return csv_text, doc, code


# -- oracle check -------------------------------------------------------------

def trajectory_deviation(spectral: TimeSeries, oracle: TimeSeries, floor: float = 1e-300) -> float:
    """Max over time of ``||y_series - y_fd|| / ||y_fd||``."""
    diff = TimeSeries(spectral.times, spectral.outputs - oracle.outputs).norms
    ref = oracle.norms
    mask = ref > floor
    if not np.any(mask):
        return float(np.max(diff)) if diff.size else 0.0
    return float(np.max(diff[mask] / ref[mask]))


def oracle_check(cfg: RunConfig, with_trajectory: bool = True) -> dict:
    report = analyze(cfg)
    o = cfg.oracle
    sys = discretize(cfg.domain, cfg.k, cfg.actuators, cfg.sensors, o.resolution)
    ov = pbh_output_stab_check(sys, cfg.tolerances.zero, o.cluster, o.rank, o.guard_factor)

    spectral_unstable = [(c.mu, c.multiplicity) for c in report.clusters if c.mu >= -cfg.tolerances.zero]
    table = []
    for i in range(max(len(spectral_unstable), len(ov.eigenvalues))):
        row = {"index": i + 1}
        if i < len(spectral_unstable):
            row.update(mu_spectral=spectral_unstable[i][0], multiplicity_spectral=spectral_unstable[i][1])
        if i < len(ov.eigenvalues):
            row.update(mu_oracle=ov.eigenvalues[i], multiplicity_oracle=ov.multiplicities[i])
        table.append(row)
    structure_match = [r for _, r in spectral_unstable] == ov.multiplicities

    deviation = None
    if with_trajectory and cfg.sensors:
        x0 = cfg.simulation.initial_state or default_initial_state(cfg.domain)
        times = np.linspace(0.0, o.t_max, o.points)
        clusters = simulation_clusters(cfg)
        matrices = mode_matrices_for(clusters, cfg.domain, cfg.actuators, cfg.sensors, cfg.quadrature)
        coeffs = project_initial_state(x0, clusters, cfg.domain, cfg.quadrature)
        series = simulate_closed_loop(clusters, matrices, None, coeffs, times)
        fd = integrate_lti(sys, None, sample_initial_state(x0, sys), times)
        deviation = trajectory_deviation(series, fd)

    # the grid cannot resolve rank decisions finer than its spacing
    margin = rank_margin(report, cfg.tolerances.zero, cfg.tolerances.rank)
    margin_floor = max(sys.h)
    margin_ok = margin >= margin_floor

    selected = report.verdict
    if not ov.conclusive or not structure_match or not margin_ok:
        agreement: Any = "inconclusive"
    else:
        agreement = bool(ov.stabilizable == report.verdict_refined)
    doc = _header("oracle-check")
    doc.update(
        agreement=agreement,
        verdict_spectral=selected,
        verdict_refined=report.verdict_refined,
        verdict_literal=report.verdict_literal,
        verdict_oracle=ov.stabilizable,
        oracle_witnesses=ov.witnesses,
        eigenvalues=table,
        unstable_structure_match=structure_match,
        trajectory_max_relative_deviation=deviation,
        guard_band={
            "conclusive": ov.conclusive and margin_ok,
            "factor": o.guard_factor,
            "violations": ov.guard_violations,
            "resolution": sys.shape[0],
            "rank_margin": margin,
            "rank_margin_floor": margin_floor,
        },
    )
    doc["config"] = config_to_dict(cfg)
    return doc


def run_oracle_check(cfg: RunConfig) -> tuple[dict, int]:
    try:
        doc = oracle_check(cfg)
    except TruncationError as exc:
        return error_document("oracle-check", "truncation", str(exc), missing_clusters=exc.missing), EXIT_INTERNAL_ERROR
    if doc["agreement"] == "inconclusive":
        return doc, EXIT_INCONCLUSIVE
    if not doc["agreement"]:
        return doc, EXIT_DISAGREEMENT
    return doc, EXIT_STABILIZABLE if doc["verdict_spectral"] else EXIT_NOT_STABILIZABLE
