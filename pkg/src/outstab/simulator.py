"""Modal simulation: projections, the uncontrollable output series, modal
feedback design and exact closed-loop integration.

The truncated modal system is

    d/dt v_n = mu_n v_n + B_n^T u,      y = sum_n T_n v_n,

with ``v_n`` the coefficients of cluster ``n``.  Feedback ``u = sum_n G_n v_n``
acts only on slow clusters, so the closed loop is block lower-triangular.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.signal

from outstab.devices import Profile, QuadratureSettings, Zone, Device, device_eigen_inner_product
from outstab.mode_analysis import (
    DEFAULT_RANK_TOL,
    ModeAnalysis,
    ModeMatrices,
    mode_subspaces,
    observable_uncontrollable_basis,
)
from outstab.quadrature import integrate_box
from outstab.spectral_core import DEFAULT_ZERO_TOL, Domain, EigenCluster, eigenfunction_eval

INITIAL_KINDS = ("eigenfunction", "combination", "polynomial", "tabulated", "function")


class FeedbackRefused(RuntimeError):
    """An unstable, uncontrollable and output-visible cluster exists."""

    def __init__(self, witnesses: Sequence[tuple[int, float]]):
        self.witnesses = list(witnesses)
        super().__init__(f"no feedback can stabilize the output; witnesses {self.witnesses}")


@dataclass(frozen=True)
class InitialState:
    """Initial field ``z0``.

    ``eigenfunction``  ``terms = {mode_indices: 1.0}`` for a single mode
    ``combination``    ``terms = {mode_indices: coefficient}``
    ``polynomial``     ``coefficients`` as for :class:`~outstab.devices.Profile`
    ``tabulated``      ``positions``/``values`` on a grid
    ``function``       ``func(*coords)``, Python API only
    """

    kind: str
    terms: tuple[tuple[tuple[int, ...], float], ...] = ()
    coefficients: tuple = ()
    positions: tuple[tuple[float, ...], ...] = ()
    values: tuple = ()
    func: Callable[..., np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.kind not in INITIAL_KINDS:
            raise ValueError(f"unknown initial state kind {self.kind!r}")

    @classmethod
    def eigenfunction(cls, mode_indices) -> "InitialState":
        modes = (int(mode_indices),) if np.ndim(mode_indices) == 0 else tuple(int(m) for m in mode_indices)
        return cls("eigenfunction", terms=((modes, 1.0),))

    @classmethod
    def combination(cls, terms: Mapping) -> "InitialState":
        items = []
        for modes, coef in terms.items():
            modes = (int(modes),) if np.ndim(modes) == 0 else tuple(int(m) for m in modes)
            items.append((modes, float(coef)))
        return cls("combination", terms=tuple(sorted(items)))

    @classmethod
    def polynomial(cls, coefficients) -> "InitialState":
        return cls("polynomial", coefficients=Profile.polynomial(coefficients).coefficients)

    @classmethod
    def tabulated(cls, positions, values) -> "InitialState":
        prof = Profile.tabulated(positions, values)
        return cls("tabulated", positions=prof.positions, values=prof.values)

    @classmethod
    def function(cls, func: Callable[..., np.ndarray]) -> "InitialState":
        return cls("function", func=func)

    def evaluate(self, domain: Domain, *coords: np.ndarray) -> np.ndarray:
        """Field values at grid coordinates (used by the finite-difference oracle)."""
        if self.kind in ("eigenfunction", "combination"):
            from outstab.spectral_core import EigenFunctionDescriptor

            out = 0.0
            for modes, coef in self.terms:
                d = EigenFunctionDescriptor.for_domain(modes, domain)
                out = out + coef * np.asarray(eigenfunction_eval(d, domain, coords[0] if domain.dim == 1 else coords))
            return np.broadcast_to(out, np.broadcast_shapes(*(np.shape(c) for c in coords)))
        if self.kind == "polynomial":
            return Profile("polynomial", coefficients=self.coefficients).evaluate(domain, *coords)
        if self.kind == "tabulated":
            return Profile("tabulated", positions=self.positions, values=self.values).evaluate(domain, *coords)
        return np.asarray(self.func(*coords), dtype=float)


@dataclass
class ModalCoefficients:
    values: dict[int, np.ndarray]
    state_norm_sq: float | None = None
    warnings: list[str] = field(default_factory=list)

    def __getitem__(self, n: int) -> np.ndarray:
        return self.values[n]

    @property
    def energy(self) -> float:
        return float(sum(np.dot(v, v) for v in self.values.values()))


@dataclass
class TimeSeries:
    times: np.ndarray
    outputs: np.ndarray  # shape (len(times), q)
    states: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float).reshape(len(self.times), -1)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be a strictly increasing 1-D array")

    @property
    def norms(self) -> np.ndarray:
        # scaled to survive exp(mu t) growth past sqrt(max float)
        peak = np.max(np.abs(self.outputs), axis=1, initial=0.0)
        safe = np.where(peak > 0, peak, 1.0)
        return peak * np.linalg.norm(self.outputs / safe[:, None], axis=1)


def project_initial_state(
    x0: InitialState,
    clusters: Sequence[EigenCluster],
    domain: Domain,
    quadrature: QuadratureSettings = QuadratureSettings(),
) -> ModalCoefficients:
    """Coefficients ``<x0, phi_nj>`` for every member of every cluster."""
    out: dict[int, np.ndarray] = {}
    notes: list[str] = []
    norm_sq = None
    if x0.kind in ("eigenfunction", "combination"):
        terms = dict(x0.terms)
        for c in clusters:
            out[c.cluster_index] = np.array([terms.get(m.mode_indices, 0.0) for m in c.members])
        known = {m.mode_indices for c in clusters for m in c.members}
        dropped = [m for m in terms if m not in known]
        if dropped:
            notes.append(f"initial-state modes {dropped} lie outside the simulation truncation")
        norm_sq = float(sum(v * v for v in terms.values()))
        return ModalCoefficients(out, norm_sq, notes)

    if x0.kind == "polynomial":
        dev = Device("sensor", Zone(domain.bounds), Profile("polynomial", coefficients=x0.coefficients), "x0")
        for c in clusters:
            out[c.cluster_index] = np.array([device_eigen_inner_product(dev, m, domain) for m in c.members])
        norm_sq = integrate_box(lambda *xs: x0.evaluate(domain, *xs) ** 2, domain.bounds, quadrature.order, quadrature.cells)
        return ModalCoefficients(out, norm_sq, notes)

    if x0.kind == "tabulated":
        max_mode = max((max(m.mode_indices[d] for c in clusters for m in c.members) for d in range(domain.dim)), default=1)
        for axis, L in zip(x0.positions, domain.lengths):
            h = float(np.max(np.diff(axis)))
            if (L / max_mode) / h < 4:
                notes.append(
                    f"tabulated initial state too coarse: {L / max_mode / h:.2f} points per half-wavelength "
                    f"of the highest retained mode (need >= 4)"
                )
        for msg in notes:
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        # finer quadrature so that the cells resolve the interpolation kinks
        quadrature = QuadratureSettings(quadrature.order, max(quadrature.cells, max(len(a) for a in x0.positions)))

    for c in clusters:
        vec = []
        for m in c.members:
            vec.append(integrate_box(
                lambda *xs, m=m: x0.evaluate(domain, *xs) * eigenfunction_eval(m, domain, xs[0] if domain.dim == 1 else xs),
                domain.bounds, quadrature.order, quadrature.cells,
            ))
        out[c.cluster_index] = np.array(vec)
    norm_sq = integrate_box(lambda *xs: x0.evaluate(domain, *xs) ** 2, domain.bounds, quadrature.order, quadrature.cells)
    return ModalCoefficients(out, norm_sq, notes)


def uncontrollable_projection(v: np.ndarray, analysis: ModeAnalysis) -> np.ndarray:
    K = analysis.kernel_B_basis
    return K @ (K.T @ v)


def output_uncontrollable(
    coeffs: ModalCoefficients,
    analyses: Sequence[ModeAnalysis],
    sensor_matrices: Mapping[int, np.ndarray],
    K_set: Sequence[int],
    times: np.ndarray,
    project: bool = True,
) -> TimeSeries:
    """Uncontrollable output ``y2(t) = sum_{n in K} exp(mu_n t) T_n w_n``.

    ``w_n`` is ``v_n`` projected onto ``ker B_n``; ``project=False`` uses the
    raw coefficients instead (debug only, it double-counts controllable content).
    """
    times = np.asarray(times, dtype=float)
    by_index = {a.cluster_index: a for a in analyses}
    q = next(iter(sensor_matrices.values())).shape[0] if sensor_matrices else 0
    y = np.zeros((len(times), q))
    for n in sorted(K_set):
        a = by_index[n]
        v = coeffs[n]
        w = uncontrollable_projection(v, a) if project else v
        T = np.atleast_2d(sensor_matrices[n])
        if T.shape[0] == 0:
            continue
        y += np.exp(a.mu * times)[:, None] * (T @ w)[None, :]
    return TimeSeries(times, y, meta={"K": list(sorted(K_set)), "projected": project})


@dataclass
class FeedbackGain:
    """Modal gain blocks ``G_n`` (``p x r_n``), ``u = sum_n G_n v_n``."""

    blocks: dict[int, np.ndarray]
    sigma: float
    p: int
    closed_loop_poles: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def block(self, n: int, multiplicity: int) -> np.ndarray:
        return self.blocks.get(n, np.zeros((self.p, multiplicity)))

    @property
    def is_zero(self) -> bool:
        return all(not np.any(b) for b in self.blocks.values())


def _target_poles(count: int, sigma: float) -> np.ndarray:
    return -sigma * (1.0 + 0.5 * np.arange(count))


def design_modal_feedback(
    clusters: Sequence[EigenCluster],
    mode_matrices: Mapping[int, ModeMatrices],
    analyses: Sequence[ModeAnalysis],
    sigma: float = 1.0,
    zero_tolerance: float = DEFAULT_ZERO_TOL,
    rank_tolerance: float = DEFAULT_RANK_TOL,
    strict: bool = True,
) -> FeedbackGain:
    """State feedback moving every slow controllable direction left of ``-sigma``.

    Clusters with ``mu > -sigma`` are slow.  Their controllable coefficient
    subspaces (row spaces of ``B_n``) are stacked into one finite system and
    poles are placed at ``-sigma, -1.5 sigma, -2 sigma, ...``; with a single slow
    direction this is the scalar shift ``mu - b g = -sigma``.  Gains vanish on
    every uncontrollable subspace.  With ``strict`` an unstable cluster that
    is uncontrollable and visible (refined K) raises :class:`FeedbackRefused`.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    by_index = {a.cluster_index: a for a in analyses}
    witnesses = [(a.cluster_index, a.mu) for a in analyses if a.mu >= -zero_tolerance and a.in_K_refined]
    if witnesses and strict:
        raise FeedbackRefused(witnesses)
    p = next(iter(mode_matrices.values())).B.shape[0] if mode_matrices else 0

    slow = [c for c in clusters if c.mu > -sigma]
    pieces = []  # (cluster, controllable basis)
    for c in slow:
        mm = mode_matrices[c.cluster_index]
        _, row = mode_subspaces(mm, rank_tolerance)
        if row.shape[1]:
            pieces.append((c, row))
    dim = sum(row.shape[1] for _, row in pieces)
    if dim == 0 or p == 0:
        return FeedbackGain({}, sigma, p)

    # reduced system in controllable coordinates w_n = R_n^T v_n
    A = np.zeros((dim, dim))
    Bc = np.zeros((dim, p))
    offsets = []
    pos = 0
    for c, row in pieces:
        r = row.shape[1]
        A[pos:pos + r, pos:pos + r] = c.mu * np.eye(r)
        Bc[pos:pos + r] = row.T @ mode_matrices[c.cluster_index].B.T
        offsets.append(pos)
        pos += r
    poles = _target_poles(dim, sigma)
    if dim == 1:
        # minimum-norm gain for the single direction
        b = Bc[0]
        K = ((A[0, 0] - poles[0]) * b / np.dot(b, b))[:, None]
    else:
        K = scipy.signal.place_poles(A, Bc, poles).gain_matrix
    G = -K  # u = G w
    closed = np.linalg.eigvals(A + Bc @ G)

    blocks = {}
    for (c, row), off in zip(pieces, offsets):
        r = row.shape[1]
        blocks[c.cluster_index] = G[:, off:off + r] @ row.T
    return FeedbackGain(blocks, sigma, p, np.sort_complex(closed))


def _cluster_frame(mm: ModeMatrices, rank_tolerance: float) -> tuple[np.ndarray, int, int]:
    """Orthonormal ``[controllable | observable-uncontrollable | hidden]`` basis."""
    ker, row = mode_subspaces(mm, rank_tolerance)
    obs = observable_uncontrollable_basis(mm, rank_tolerance)
    if obs.shape[1] < ker.shape[1]:
        # hidden part: complement of obs inside ker
        coords = ker.T @ obs
        _, _, Vt = np.linalg.svd(coords.T, full_matrices=True) if obs.shape[1] else (None, None, np.eye(ker.shape[1]))
        hidden = ker @ Vt[obs.shape[1]:].T
    else:
        hidden = np.zeros((mm.multiplicity, 0))
    return np.hstack([row, obs, hidden]), row.shape[1], obs.shape[1]


def _assemble_system(
    clusters: Sequence[EigenCluster],
    mode_matrices: Mapping[int, ModeMatrices],
    gain: FeedbackGain | None,
    rank_tolerance: float,
):
    """Rotated modal system with structural zeros made exact.

    In each cluster's frame the input only reaches the controllable block,
    gains only read it, and the hidden block never reaches the output; the
    rank decisions of the analysis are enforced instead of left to roundoff,
    which ``exp(mu t)`` would amplify.
    """
    first = next(iter(mode_matrices.values()))
    p, q = first.B.shape[0], first.T.shape[0]
    total = sum(c.multiplicity for c in clusters)
    mus = np.zeros(total)
    Bw = np.zeros((total, p))
    Cw = np.zeros((q, total))
    Gw = np.zeros((p, total))
    frames = []
    pos = 0
    for c in clusters:
        mm = mode_matrices[c.cluster_index]
        Q, nc, no = _cluster_frame(mm, rank_tolerance)
        r = c.multiplicity
        sl = slice(pos, pos + r)
        mus[sl] = c.mu
        Bw[pos:pos + nc] = Q[:, :nc].T @ mm.B.T
        Cw[:, pos:pos + nc + no] = mm.T @ Q[:, :nc + no]
        if gain is not None:
            Gw[:, pos:pos + nc] = gain.block(c.cluster_index, r) @ Q[:, :nc]
        frames.append((sl, Q))
        pos += r
    return mus, Bw @ Gw, Cw, frames


def simulate_closed_loop(
    clusters: Sequence[EigenCluster],
    mode_matrices: Mapping[int, ModeMatrices],
    gain: FeedbackGain | None,
    coeffs: ModalCoefficients,
    times: np.ndarray,
    rank_tolerance: float = DEFAULT_RANK_TOL,
) -> TimeSeries:
    """Exact solution of the truncated modal closed loop at ``times``.

    Zero gain gives per-mode exponentials.  Otherwise the gained coordinates
    form a closed block solved through its eigendecomposition, and every
    other coordinate is a diagonal mode driven by that block, integrated in
    closed form.
    """
    times = np.asarray(times, dtype=float)
    mus, BG, C, frames = _assemble_system(clusters, mode_matrices, gain, rank_tolerance)
    v0 = np.concatenate([coeffs.values.get(c.cluster_index, np.zeros(c.multiplicity)) for c in clusters])
    w0 = np.zeros_like(v0)
    for sl, Q in frames:
        w0[sl] = Q.T @ v0[sl]

    active = np.flatnonzero(np.any(BG != 0, axis=0))
    if active.size == 0:
        w = np.exp(np.outer(times, mus)) * w0[None, :]
        meta = {"gain": "zero"}
    else:
        w = _driven_solution(mus, BG, w0, active, times)
        meta = {"gain": "modal", "slow_dim": int(active.size)}
    states = np.zeros_like(w)
    for sl, Q in frames:
        states[:, sl] = w[:, sl] @ Q.T
    return TimeSeries(times, w @ C.T, states, meta=meta)


def _driven_solution(mus: np.ndarray, BG: np.ndarray, w0: np.ndarray, active: np.ndarray, times: np.ndarray) -> np.ndarray:
    # gained coordinates form a closed block; the rest never feed back
    slow = active
    fast = np.setdiff1d(np.arange(len(mus)), slow)
    M = np.diag(mus[slow]) + BG[np.ix_(slow, slow)]
    coupling = BG[np.ix_(fast, slow)]
    out = np.zeros((len(times), len(mus)))
    lam, V = np.linalg.eig(M)
    if np.linalg.cond(V) > 1e8:
        # defective slow block: propagate the whole system by expm
        Afull = np.diag(mus) + BG
        for i, t in enumerate(times):
            out[i] = scipy.linalg.expm(Afull * t) @ w0
        return out
    a = np.linalg.solve(V, w0[slow].astype(complex))
    out[:, slow] = np.real((np.exp(np.outer(times, lam)) * a[None, :]) @ V.T)
    d = mus[fast]
    e_d = np.exp(np.outer(times, d))
    forced = np.zeros((len(times), len(fast)), dtype=complex)
    cV = coupling @ V
    for li in range(len(lam)):
        drive = cV[:, li] * a[li]
        if not np.any(drive):
            continue
        dl = lam[li] - d
        small = np.abs(dl) < 1e-12
        safe = np.where(small, 1.0, dl)
        e_l = np.exp(lam[li] * times)[:, None]
        term = np.where(small[None, :], times[:, None] * e_d, (e_l - e_d) / safe[None, :])
        forced += term * drive[None, :]
    out[:, fast] = e_d * w0[fast][None, :] + np.real(forced)
    return out


def estimate_decay_rate(series: TimeSeries, window: tuple[float, float] | None = None, floor: float = 1e-280) -> tuple[float, float]:
    """Least-squares slope of ``log ||y(t)||`` over ``window``.

    Returns ``(rate, residual)``; negative rates mean decay.  An output that
    is identically zero on the window gives ``(-inf, 0.0)``.
    """
    t = series.times
    if window is None:
        window = (0.2 * t[-1], t[-1])
    t1, t2 = window
    if t1 >= t2 or t1 < t[0] - 1e-12 or t2 > t[-1] + 1e-12:
        raise ValueError(f"window {window} not inside the series [{t[0]}, {t[-1]}]")
    mask = (t >= t1) & (t <= t2)
    norms = series.norms[mask]
    tw = t[mask]
    keep = norms > floor
    if not np.any(keep):
        return -math.inf, 0.0
    if keep.sum() < 2:
        raise ValueError("fewer than two non-negligible samples in the fit window")
    tw, logs = tw[keep], np.log(norms[keep])
    coef, res, *_ = np.polyfit(tw, logs, 1, full=True)
    residual = float(math.sqrt(res[0] / len(tw))) if len(res) else 0.0
    return float(coef[0]), residual


def default_times(sigma: float = 1.0, t_max: float | None = None, points: int = 400) -> np.ndarray:
    if t_max is None:
        t_max = 10.0 / sigma
    return np.linspace(0.0, t_max, points)
