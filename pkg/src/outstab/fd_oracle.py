"""Finite-difference referee for the spectral analysis.

The PDE is discretized with central differences on a uniform grid (boundary
nodes eliminated).  Verdicts come from a PBH-style test on the eigenspaces
of the symmetric matrix ``A_h``; trajectories from exact integration of the
finite LTI system.  Nothing here uses the analytic eigenfunctions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from outstab.devices import Device
from outstab.simulator import InitialState, TimeSeries
from outstab.spectral_core import DEFAULT_ZERO_TOL, Domain

MIN_RESOLUTION = 16
DEFAULT_RESOLUTION_1D = 511
DEFAULT_RESOLUTION_2D = 63
DEFAULT_ORACLE_RANK_TOL = 1e-8
DEFAULT_ORACLE_CLUSTER_TOL = 1e-6
GUARD_FACTOR = 10.0
DENSE_LIMIT = 1500


@dataclass
class DiscreteSystem:
    A: sp.csr_matrix  # N x N
    B: np.ndarray  # N x p
    C: np.ndarray  # q x N
    h: tuple[float, ...]
    domain: Domain
    k: float
    shape: tuple[int, ...]
    grid: tuple[np.ndarray, ...]
    weights: np.ndarray  # quadrature weight per node

    @property
    def size(self) -> int:
        return self.A.shape[0]


def laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    """Three-point Dirichlet Laplacian on ``n`` interior nodes."""
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    return (sp.diags([off, main, off], [-1, 0, 1]) / h**2).tocsr()


def _zone_mask(nodes: np.ndarray, lo: float, hi: float, h: float) -> np.ndarray:
    # 1 inside, 1/2 on a zone edge that falls on a node, 0 outside
    eps = 1e-9 * h
    mask = ((nodes > lo + eps) & (nodes < hi - eps)).astype(float)
    mask[np.abs(nodes - lo) <= eps] = 0.5
    mask[np.abs(nodes - hi) <= eps] = 0.5
    return mask


def _sample_device(dev: Device, sys_grid: tuple[np.ndarray, ...], h: tuple[float, ...], domain: Domain) -> np.ndarray:
    masks = [_zone_mask(x, lo, hi, hh) for x, (lo, hi), hh in zip(sys_grid, dev.zone.bounds, h)]
    if domain.dim == 1:
        vals = dev.profile.evaluate(domain, sys_grid[0]) * masks[0]
    else:
        X, Y = np.meshgrid(sys_grid[0], sys_grid[1], indexing="ij")
        vals = dev.profile.evaluate(domain, X, Y) * np.outer(masks[0], masks[1])
    return np.asarray(vals, dtype=float).ravel()


def discretize(
    domain: Domain,
    k: float,
    actuators: Sequence[Device],
    sensors: Sequence[Device],
    resolution: int | None = None,
) -> DiscreteSystem:
    """Central-difference discretization with ``resolution`` interior nodes per axis.

    ``B`` columns are the actuator profiles sampled at the nodes (the forcing
    term); ``C`` rows are sensor profiles times the node weight, so
    ``C @ z`` approximates the sensor integrals.
    """
    if resolution is None:
        resolution = DEFAULT_RESOLUTION_1D if domain.dim == 1 else DEFAULT_RESOLUTION_2D
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be at least {MIN_RESOLUTION} points per axis")
    n = int(resolution)
    h = tuple(L / (n + 1) for L in domain.lengths)
    grid = tuple(np.arange(1, n + 1) * hh for hh in h)
    if domain.dim == 1:
        A = laplacian_1d(n, h[0])
    else:
        I = sp.identity(n, format="csr")
        A = sp.kron(laplacian_1d(n, h[0]), I) + sp.kron(I, laplacian_1d(n, h[1]))
    A = (A + k * sp.identity(A.shape[0])).tocsr()
    cell = float(np.prod(h))
    weights = np.full(A.shape[0], cell)
    B = np.column_stack([_sample_device(d, grid, h, domain) for d in actuators]) if actuators else np.zeros((A.shape[0], 0))
    C = np.vstack([_sample_device(d, grid, h, domain) * weights for d in sensors]) if sensors else np.zeros((0, A.shape[0]))
    return DiscreteSystem(A, B, C, h, domain, float(k), (n,) * domain.dim, grid, weights)


def top_eigenpairs(sys: DiscreteSystem, floor: float) -> tuple[np.ndarray, np.ndarray]:
    """All eigenpairs of ``A_h`` with eigenvalue ``>= floor``, descending.

    Dense ``eigh`` for small systems; otherwise Lanczos on the top of the
    spectrum, widened until an eigenvalue below ``floor`` is seen.
    """
    A = sys.A
    if (A != A.T).nnz:
        raise ValueError("oracle requires a symmetric system matrix")
    N = A.shape[0]
    if N <= DENSE_LIMIT:
        w, V = np.linalg.eigh(A.toarray())
    else:
        count = 16
        while True:
            count = min(count, N - 2)
            w, V = spla.eigsh(A, k=count, which="LA", tol=1e-13)
            if w.min() < floor or count >= N - 2:
                break
            count *= 2
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    keep = w >= floor
    return w[keep], V[:, keep]


def _group(values: np.ndarray, rtol: float) -> list[np.ndarray]:
    groups: list[list[int]] = []
    for i, v in enumerate(values):
        if groups and abs(v - values[groups[-1][0]]) <= rtol * max(1.0, abs(values[groups[-1][0]])):
            groups[-1].append(i)
        else:
            groups.append([i])
    return [np.array(g) for g in groups]


def _null_space(M: np.ndarray, rtol: float, scale: float) -> np.ndarray:
    d = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(d)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    thr = rtol * max(scale, s[0] if s.size else 0.0)
    r = int(np.sum(s > thr))
    return Vt[r:].T


def discretization_error(sys: DiscreteSystem, eigenvalue: float) -> float:
    """Estimated eigenvalue error of the 3/5-point stencil, ``lam^2 h^2 / 12``."""
    lam = max(sys.k - eigenvalue, 0.0)
    return lam**2 * max(sys.h) ** 2 / 12.0


@dataclass
class OracleVerdict:
    stabilizable: bool
    witnesses: list[float]
    eigenvalues: list[float]  # all eigenvalues >= the guard floor, descending
    multiplicities: list[int]
    guard_ok: bool
    guard_violations: list[float] = field(default_factory=list)

    @property
    def conclusive(self) -> bool:
        return self.guard_ok


def pbh_output_stab_check(
    sys: DiscreteSystem,
    zero_tolerance: float = DEFAULT_ZERO_TOL,
    cluster_tolerance: float = DEFAULT_ORACLE_CLUSTER_TOL,
    rank_tolerance: float = DEFAULT_ORACLE_RANK_TOL,
    guard_factor: float = GUARD_FACTOR,
) -> OracleVerdict:
    """PBH output-stabilizability test of the discrete system.

    An eigenspace with eigenvalue ``>= -zero_tolerance`` defeats the verdict
    when it contains a direction orthogonal to every actuator column that the
    sensors still see.  Eigenvalues within ``guard_factor`` discretization
    errors of zero make the run inconclusive.
    """
    # look a little below zero so the guard band can inspect near-zero modes
    probe = -zero_tolerance - guard_factor * discretization_error(sys, 0.0) - 1.0
    w, V = top_eigenpairs(sys, probe)
    b_scale = float(np.linalg.norm(sys.B)) if sys.B.size else 0.0
    c_scale = float(np.linalg.norm(sys.C)) if sys.C.size else 0.0
    witnesses, eigs, mults, violations = [], [], [], []
    for g in _group(w, cluster_tolerance):
        lam = float(np.mean(w[g]))
        err = discretization_error(sys, lam)
        if abs(lam) <= guard_factor * err + zero_tolerance:
            violations.append(lam)
        if lam < -zero_tolerance:
            continue
        eigs.append(lam)
        mults.append(len(g))
        E = V[:, g]
        kernel = _null_space(sys.B.T @ E, rank_tolerance, b_scale) if sys.B.shape[1] else np.eye(len(g))
        if kernel.shape[1] == 0 or sys.C.shape[0] == 0 or c_scale == 0.0:
            continue
        seen = sys.C @ (E @ kernel)
        if np.linalg.svd(seen, compute_uv=False)[0] > rank_tolerance * c_scale:
            witnesses.append(lam)
    return OracleVerdict(not witnesses, witnesses, eigs, mults, not violations, violations)


def sample_initial_state(x0: InitialState, sys: DiscreteSystem) -> np.ndarray:
    if sys.domain.dim == 1:
        return np.asarray(x0.evaluate(sys.domain, sys.grid[0]), dtype=float).ravel()
    X, Y = np.meshgrid(sys.grid[0], sys.grid[1], indexing="ij")
    return np.asarray(x0.evaluate(sys.domain, X, Y), dtype=float).ravel()


def integrate_lti(sys: DiscreteSystem, gain: np.ndarray | None, x0_grid: np.ndarray, times: np.ndarray) -> TimeSeries:
    """Exact solution of ``x' = (A_h + B_h G) x`` by eigendecomposition, ``y = C_h x``."""
    times = np.asarray(times, dtype=float)
    x0 = np.asarray(x0_grid, dtype=float)
    A = sys.A.toarray()
    if gain is None or not np.any(gain):
        w, V = np.linalg.eigh(A)
        a = V.T @ x0
        CV = sys.C @ V
        y = (np.exp(np.outer(times, w)) * a[None, :]) @ CV.T
    else:
        M = A + sys.B @ np.atleast_2d(gain)
        w, V = np.linalg.eig(M)
        a = np.linalg.solve(V, x0.astype(complex))
        CV = sys.C @ V
        y = np.real((np.exp(np.outer(times, w)) * a[None, :]) @ CV.T)
    return TimeSeries(times, y, meta={"oracle": "fd", "N": sys.size})
