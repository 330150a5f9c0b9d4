"""Per-mode linear algebra and the output-stabilizability verdict.

Coefficient-space conventions
-----------------------------
For a cluster with eigenfunctions ``phi_1..phi_r`` a state component is a
vector ``v`` in R^r.  With ``B`` the ``p x r`` actuator matrix, ``v`` is
uncontrollable iff ``B v = 0``: the actuators see ``sum_j v_j <phi_j, g_i>``.
The controllable part of the mode is the row space of ``B``, the orthogonal
complement of its kernel.  The observable-uncontrollable part is the
projection of the row space of ``T`` onto ``ker B``.

Two readings of the index set K are computed:

* ``literal``: ``T != 0`` and ``ker B != {0}``;
* ``refined``: ``T`` is nonzero on ``ker B``.

``refined`` is always a subset of ``literal`` and drives the default verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from outstab.devices import (
    Device,
    QuadratureSettings,
    assemble_actuator_matrix,
    assemble_sensor_matrix,
    device_scale,
    validate_device_set,
)
from outstab.spectral_core import (
    DEFAULT_CLUSTER_TOL,
    DEFAULT_ZERO_TOL,
    Domain,
    EigenCluster,
    enumerate_clusters,
    unstable_cluster_set,
)

DEFAULT_RANK_TOL = 1e-10
K_READINGS = ("literal", "refined")


class TruncationError(RuntimeError):
    """An unstable cluster was left out of the analysed set."""

    def __init__(self, missing: Sequence[int]):
        self.missing = list(missing)
        super().__init__(f"clusters {self.missing} have mu >= -zero_tolerance but were not analysed")


@dataclass(frozen=True)
class ModeMatrices:
    """Actuator and sensor matrices of one cluster.

    ``B_scale``/``T_scale`` are reference magnitudes (device-norm bounds) for
    rank decisions; ``None`` falls back to the largest singular value.
    """

    cluster_index: int
    B: np.ndarray
    T: np.ndarray
    B_scale: float | None = None
    T_scale: float | None = None

    def __post_init__(self) -> None:
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        T = np.atleast_2d(np.asarray(self.T, dtype=float))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "T", T)
        if B.shape[1] != T.shape[1]:
            raise ValueError("B and T must have the same number of columns (the multiplicity)")

    @property
    def multiplicity(self) -> int:
        return self.B.shape[1]


def _svd_threshold(s: np.ndarray, rank_tolerance: float, scale: float | None) -> float:
    ref = float(s[0]) if s.size else 0.0
    if scale is not None:
        ref = max(ref, scale)
    return rank_tolerance * ref


def _split(M: np.ndarray, rank_tolerance: float, scale: float | None) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (row space, kernel) bases of ``M`` as columns."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    r = M.shape[1]
    if M.shape[0] == 0 or r == 0:
        return np.zeros((r, 0)), np.eye(r)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    thr = _svd_threshold(s, rank_tolerance, scale)
    rank = int(np.sum(s > thr)) if thr > 0 else int(np.sum(s > 0))
    return Vt[:rank].T.copy(), Vt[rank:].T.copy()


def kernel_basis(M: np.ndarray, rank_tolerance: float = DEFAULT_RANK_TOL, scale: float | None = None) -> np.ndarray:
    """Orthonormal basis (columns) of ``ker M``.

    Singular values at or below ``rank_tolerance * max(sigma_max, scale)``
    count as zero; an all-zero matrix has the whole space as kernel.
    """
    if rank_tolerance <= 0:
        raise ValueError("rank tolerance must be positive")
    return _split(M, rank_tolerance, scale)[1]


def rank(M: np.ndarray, rank_tolerance: float = DEFAULT_RANK_TOL, scale: float | None = None) -> int:
    return _split(M, rank_tolerance, scale)[0].shape[1]


def mode_subspaces(mm: ModeMatrices, rank_tolerance: float = DEFAULT_RANK_TOL) -> tuple[np.ndarray, np.ndarray]:
    """``(uncontrollable basis, controllable basis)`` of one cluster."""
    row, ker = _split(mm.B, rank_tolerance, mm.B_scale)
    return ker, row


def observable_uncontrollable_basis(mm: ModeMatrices, rank_tolerance: float = DEFAULT_RANK_TOL) -> np.ndarray:
    ker = kernel_basis(mm.B, rank_tolerance, mm.B_scale)
    if ker.shape[1] == 0 or mm.T.shape[0] == 0:
        return np.zeros((mm.multiplicity, 0))
    TK = mm.T @ ker
    scale = mm.T_scale if mm.T_scale is not None else float(np.linalg.norm(mm.T, 2))
    if scale == 0.0:
        return np.zeros((mm.multiplicity, 0))
    row, _ = _split(TK, rank_tolerance, scale)
    return ker @ row


@dataclass(frozen=True)
class ModeAnalysis:
    cluster_index: int
    mu: float
    multiplicity: int
    mode_indices: tuple[tuple[int, ...], ...]
    rank_B: int
    kernel_B_basis: np.ndarray
    rowspace_B_basis: np.ndarray
    observable_uncontrollable_basis: np.ndarray
    T_nonzero: bool
    in_J: bool
    in_K_literal: bool
    in_K_refined: bool

    @property
    def kernel_dim(self) -> int:
        return self.kernel_B_basis.shape[1]

    def in_K(self, reading: str) -> bool:
        return self.in_K_literal if reading == "literal" else self.in_K_refined


def analyze_mode(cluster: EigenCluster, mm: ModeMatrices, rank_tolerance: float = DEFAULT_RANK_TOL) -> ModeAnalysis:
    if mm.multiplicity != cluster.multiplicity:
        raise ValueError("mode matrices do not match the cluster multiplicity")
    ker, row = mode_subspaces(mm, rank_tolerance)
    obs = observable_uncontrollable_basis(mm, rank_tolerance)
    t_rank = rank(mm.T, rank_tolerance, mm.T_scale) if mm.T.shape[0] else 0
    in_J, lit, ref = membership_sets(ker.shape[1], t_rank > 0, obs.shape[1])
    return ModeAnalysis(
        cluster_index=cluster.cluster_index,
        mu=cluster.mu,
        multiplicity=cluster.multiplicity,
        mode_indices=tuple(m.mode_indices for m in cluster.members),
        rank_B=row.shape[1],
        kernel_B_basis=ker,
        rowspace_B_basis=row,
        observable_uncontrollable_basis=obs,
        T_nonzero=t_rank > 0,
        in_J=in_J,
        in_K_literal=lit,
        in_K_refined=ref,
    )


def membership_sets(kernel_dim: int, T_nonzero: bool, observable_uncontrollable_dim: int) -> tuple[bool, bool, bool]:
    """``(in_J, in_K_literal, in_K_refined)`` from the per-mode dimensions."""
    in_J = kernel_dim > 0
    return in_J, bool(T_nonzero and in_J), observable_uncontrollable_dim > 0


@dataclass(frozen=True)
class ApproxControllability:
    status: str  # holds_up_to_truncation | fails_at_mode | not_applicable
    mode: int | None = None
    clusters_checked: int = 0

    def as_dict(self) -> dict:
        return {"status": self.status, "mode": self.mode, "clusters_checked": self.clusters_checked}


@dataclass
class StabilizabilityReport:
    modes: list[ModeAnalysis]
    verdict_literal: bool
    verdict_refined: bool
    witnesses_literal: list[tuple[int, float]]
    witnesses_refined: list[tuple[int, float]]
    reading: str = "refined"
    approx_controllability: ApproxControllability = field(default_factory=lambda: ApproxControllability("not_applicable"))
    truncation_info: dict = field(default_factory=dict)
    mode_matrices: dict[int, ModeMatrices] = field(default_factory=dict)
    clusters: list[EigenCluster] = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return self.verdict_literal if self.reading == "literal" else self.verdict_refined

    @property
    def witnesses(self) -> list[tuple[int, float]]:
        return self.witnesses_literal if self.reading == "literal" else self.witnesses_refined

    def mode(self, cluster_index: int) -> ModeAnalysis:
        for m in self.modes:
            if m.cluster_index == cluster_index:
                return m
        raise KeyError(cluster_index)

    def K_set(self, reading: str | None = None) -> list[int]:
        reading = reading or self.reading
        return [m.cluster_index for m in self.modes if m.in_K(reading)]


def stabilizability_verdict(
    clusters: Sequence[EigenCluster],
    analyses: Sequence[ModeAnalysis],
    zero_tolerance: float = DEFAULT_ZERO_TOL,
    reading: str = "refined",
) -> StabilizabilityReport:
    """Output stabilizable iff every cluster in K has ``mu < -zero_tolerance``."""
    if reading not in K_READINGS:
        raise ValueError(f"reading must be one of {K_READINGS}")
    by_index = {a.cluster_index: a for a in analyses}
    missing = [n for n in unstable_cluster_set(clusters, zero_tolerance) if n not in by_index]
    if missing:
        raise TruncationError(missing)
    witnesses: dict[str, list[tuple[int, float]]] = {"literal": [], "refined": []}
    for a in sorted(analyses, key=lambda a: a.cluster_index):
        if a.mu < -zero_tolerance:
            continue
        for r in K_READINGS:
            if a.in_K(r):
                witnesses[r].append((a.cluster_index, a.mu))
    return StabilizabilityReport(
        modes=list(analyses),
        verdict_literal=not witnesses["literal"],
        verdict_refined=not witnesses["refined"],
        witnesses_literal=witnesses["literal"],
        witnesses_refined=witnesses["refined"],
        reading=reading,
        clusters=list(clusters),
    )


def rank_margin(report: StabilizabilityReport, zero_tolerance: float = DEFAULT_ZERO_TOL, rank_tolerance: float = DEFAULT_RANK_TOL) -> float:
    """Smallest singular value counted as nonzero in a verdict-relevant rank decision.

    Covers ``B_n`` and ``T_n`` restricted to ``ker B_n`` on every cluster with
    ``mu >= -zero_tolerance``, each relative to its rank reference.  A small
    margin means a slightly perturbed device layout could flip the verdict.
    """
    margin = math.inf
    for a in report.modes:
        if a.mu < -zero_tolerance:
            continue
        mm = report.mode_matrices[a.cluster_index]
        pairs = [(mm.B, mm.B_scale)]
        if a.kernel_dim and mm.T.shape[0]:
            pairs.append((mm.T @ a.kernel_B_basis, mm.T_scale))
        for M, scale in pairs:
            if M.size == 0:
                continue
            s = np.linalg.svd(M, compute_uv=False)
            ref = max(float(s[0]), scale or 0.0)
            if ref == 0.0:
                continue
            kept = s[s > rank_tolerance * ref] / ref
            if kept.size:
                margin = min(margin, float(kept.min()))
    return margin


def approx_controllability_check(clusters: Sequence[EigenCluster], analyses: Sequence[ModeAnalysis], p: int) -> ApproxControllability:
    """Sufficient condition ``p >= max r_n`` and ``rank B_n = r_n``, over the enumerated clusters only."""
    by_index = {a.cluster_index: a for a in analyses}
    checked = [c for c in clusters if c.cluster_index in by_index]
    if not checked:
        return ApproxControllability("not_applicable")
    for c in checked:
        if p < c.multiplicity or by_index[c.cluster_index].rank_B < c.multiplicity:
            return ApproxControllability("fails_at_mode", c.cluster_index, len(checked))
    return ApproxControllability("holds_up_to_truncation", None, len(checked))


@dataclass(frozen=True)
class AnalysisSettings:
    """Tolerances and truncation for :func:`analyze_system`.

    ``policy``: ``auto`` takes every cluster with ``mu >= -zero_tol`` and at
    least ``modes`` raw modes; ``count`` takes exactly the first ``modes``
    (and may miss unstable clusters); ``threshold`` takes only the unstable
    clusters.
    """

    cluster_tol: float = DEFAULT_CLUSTER_TOL
    rank_tol: float = DEFAULT_RANK_TOL
    zero_tol: float = DEFAULT_ZERO_TOL
    policy: str = "auto"
    modes: int = 20
    reading: str = "refined"
    quadrature: QuadratureSettings = QuadratureSettings()

    def __post_init__(self) -> None:
        if min(self.cluster_tol, self.rank_tol) <= 0 or self.zero_tol < 0:
            raise ValueError("tolerances must be positive")
        if self.policy not in ("auto", "count", "threshold"):
            raise ValueError(f"unknown truncation policy {self.policy!r}")
        if self.modes < 1:
            raise ValueError("modes must be positive")
        if self.reading not in K_READINGS:
            raise ValueError(f"reading must be one of {K_READINGS}")


def verdict_clusters(domain: Domain, k: float, settings: AnalysisSettings) -> list[EigenCluster]:
    tol = settings.cluster_tol
    if settings.policy == "count":
        return enumerate_clusters(domain, k, count=settings.modes, tolerance=tol)
    unstable = enumerate_clusters(domain, k, threshold=-settings.zero_tol, tolerance=tol)
    if settings.policy == "threshold":
        return unstable
    n_raw = sum(c.multiplicity for c in unstable)
    if n_raw >= settings.modes:
        return unstable
    return enumerate_clusters(domain, k, count=settings.modes, tolerance=tol)


def mode_matrices_for(
    clusters: Sequence[EigenCluster],
    domain: Domain,
    actuators: Sequence[Device],
    sensors: Sequence[Device],
    quadrature: QuadratureSettings = QuadratureSettings(),
) -> dict[int, ModeMatrices]:
    b_scale = device_scale(actuators, domain, quadrature)
    t_scale = device_scale(sensors, domain, quadrature)
    return {
        c.cluster_index: ModeMatrices(
            c.cluster_index,
            assemble_actuator_matrix(c, actuators, domain, quadrature),
            assemble_sensor_matrix(c, sensors, domain, quadrature),
            B_scale=b_scale,
            T_scale=t_scale,
        )
        for c in clusters
    }


def analyze_system(
    domain: Domain,
    k: float,
    actuators: Sequence[Device],
    sensors: Sequence[Device],
    settings: AnalysisSettings = AnalysisSettings(),
    clusters: Sequence[EigenCluster] | None = None,
) -> StabilizabilityReport:
    """Run the full criterion for one configuration."""
    check = validate_device_set(domain, list(actuators) + list(sensors))
    if not check.ok:
        raise ValueError("invalid device set: " + "; ".join(check.errors))
    if clusters is None:
        clusters = verdict_clusters(domain, k, settings)
    matrices = mode_matrices_for(clusters, domain, actuators, sensors, settings.quadrature)
    analyses = [analyze_mode(c, matrices[c.cluster_index], settings.rank_tol) for c in clusters]
    # both enumerations are prefixes of the same descending order, so the
    # longer one is the reference for the truncation check
    unstable = enumerate_clusters(domain, k, threshold=-settings.zero_tol, tolerance=settings.cluster_tol)
    reference = unstable if len(unstable) > len(clusters) else clusters
    report = stabilizability_verdict(reference, analyses, settings.zero_tol, settings.reading)
    report.clusters = list(clusters)
    report.approx_controllability = approx_controllability_check(clusters, analyses, len(actuators))
    report.mode_matrices = matrices
    report.truncation_info = {
        "policy": settings.policy,
        "modes": settings.modes,
        "clusters": len(clusters),
        "raw_modes": sum(c.multiplicity for c in clusters),
        "lowest_mu": clusters[-1].mu if clusters else None,
    }
    return report
