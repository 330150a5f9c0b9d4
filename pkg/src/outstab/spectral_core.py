"""Closed-form spectrum of A = Laplacian + k on intervals and rectangles.

Eigenpairs are enumerated analytically, sorted by descending eigenvalue and
grouped into clusters of (numerically) equal eigenvalues.  A cluster carries
the eigenvalue ``mu``, its multiplicity and the orthonormal eigenfunctions
spanning the eigenspace, ordered lexicographically by mode index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CLUSTER_TOL = 1e-9
DEFAULT_ZERO_TOL = 1e-9


@dataclass(frozen=True)
class Domain:
    """Interval ``(0, L)`` or rectangle ``(0, a) x (0, b)`` with Dirichlet boundary."""

    kind: str
    lengths: tuple[float, ...]

    def __post_init__(self) -> None:
        lengths = tuple(float(v) for v in self.lengths)
        object.__setattr__(self, "lengths", lengths)
        expected = {"interval": 1, "rectangle": 2}.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if len(lengths) != expected:
            raise ValueError(f"{self.kind} needs {expected} length(s), got {len(lengths)}")
        if not all(math.isfinite(v) and v > 0 for v in lengths):
            raise ValueError("domain lengths must be finite and strictly positive")

    @classmethod
    def interval(cls, length: float) -> "Domain":
        return cls("interval", (length,))

    @classmethod
    def rectangle(cls, a: float, b: float) -> "Domain":
        return cls("rectangle", (a, b))

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def bounds(self) -> tuple[tuple[float, float], ...]:
        return tuple((0.0, L) for L in self.lengths)

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))


@dataclass(frozen=True)
class EigenFunctionDescriptor:
    """Sine-product eigenfunction ``normalization * prod_d sin(m_d pi x_d / L_d)``."""

    mode_indices: tuple[int, ...]
    normalization: float

    @classmethod
    def for_domain(cls, mode_indices: Sequence[int], domain: Domain) -> "EigenFunctionDescriptor":
        modes = tuple(int(m) for m in mode_indices)
        if len(modes) != domain.dim or any(m < 1 for m in modes):
            raise ValueError(f"invalid mode indices {mode_indices!r} for {domain.kind}")
        return cls(modes, math.sqrt(2.0**domain.dim / domain.measure))


@dataclass(frozen=True)
class EigenCluster:
    mu: float
    multiplicity: int
    members: tuple[EigenFunctionDescriptor, ...]
    cluster_index: int

    def __post_init__(self) -> None:
        if self.multiplicity != len(self.members) or self.multiplicity < 1:
            raise ValueError("cluster multiplicity must equal the member count")


def laplacian_eigenvalue(mode_indices: Sequence[int], domain: Domain) -> float:
    """Eigenvalue of -Laplacian for the given sine mode."""
    return float(sum((m * math.pi / L) ** 2 for m, L in zip(mode_indices, domain.lengths)))


def _mode_bound(length: float, lam_max: float) -> int:
    # largest m with (m pi / L)^2 <= lam_max; +1 absorbs floor roundoff
    if lam_max <= 0:
        return 0
    return int(math.floor(length * math.sqrt(lam_max) / math.pi)) + 1


def _sorted_modes(domain: Domain, k: float, candidates: Iterable[tuple[int, ...]]) -> list[tuple[tuple[int, ...], float]]:
    out = [(modes, k - laplacian_eigenvalue(modes, domain)) for modes in candidates]
    out.sort(key=lambda item: (-item[1], item[0]))
    return out


def raw_eigenvalues(
    domain: Domain,
    k: float,
    count: int | None = None,
    threshold: float | None = None,
    tie_tolerance: float = DEFAULT_CLUSTER_TOL,
) -> list[tuple[tuple[int, ...], float]]:
    """Enumerate ``(mode_indices, mu_raw)`` pairs sorted by descending ``mu_raw``.

    Exactly one policy must be given: ``count`` (the first N modes) or
    ``threshold`` (every mode with ``mu_raw >= threshold``).  Under the count
    policy, modes tied with the N-th one (within ``tie_tolerance``) are also
    returned so that no eigenvalue cluster is cut in half.
    """
    if not math.isfinite(k):
        raise ValueError("reaction coefficient must be finite")
    if (count is None) == (threshold is None):
        raise ValueError("give exactly one of count= or threshold=")

    if threshold is not None:
        if not math.isfinite(threshold):
            raise ValueError("threshold must be finite")
        lam_max = k - threshold
        bounds = [_mode_bound(L, lam_max) for L in domain.lengths]
        if min(bounds) < 1:
            return []
        grids = np.meshgrid(*[np.arange(1, b + 1) for b in bounds], indexing="ij")
        candidates = [tuple(int(v) for v in idx) for idx in zip(*(g.ravel() for g in grids))]
        modes = _sorted_modes(domain, k, candidates)
        return [item for item in modes if item[1] >= threshold]

    if count is None or count < 1:
        raise ValueError("count must be a positive integer")
    if domain.dim == 1:
        # one extra so the tie check below has a successor to look at
        candidates = [(m,) for m in range(1, count + 2)]
    else:
        # the first N modes all lie in the N x N index box: (1,1)..(N,1) are
        # already N modes below anything with m > N, and likewise for n
        grid = range(1, count + 2)
        candidates = [(m, n) for m in grid for n in grid]
    modes = _sorted_modes(domain, k, candidates)
    cut = count
    last = modes[count - 1][1]
    while cut < len(modes) and abs(modes[cut][1] - last) <= tie_tolerance * max(1.0, abs(last)):
        cut += 1
    return modes[:cut]


def cluster_eigenvalues(
    raw: Sequence[tuple[tuple[int, ...], float]],
    domain: Domain,
    tolerance: float = DEFAULT_CLUSTER_TOL,
) -> list[EigenCluster]:
    """Group descending raw eigenvalues into clusters of equal ``mu``.

    A mode joins the current cluster when its eigenvalue is within
    ``tolerance * max(1, |mu|)`` of the cluster's leading eigenvalue.
    """
    if tolerance <= 0:
        raise ValueError("cluster tolerance must be positive")
    groups: list[tuple[float, list[tuple[int, ...]]]] = []
    for modes, mu in raw:
        if groups and abs(mu - groups[-1][0]) <= tolerance * max(1.0, abs(groups[-1][0])):
            groups[-1][1].append(tuple(modes))
        else:
            if groups and mu > groups[-1][0]:
                raise ValueError("raw eigenvalues must be sorted in descending order")
            groups.append((float(mu), [tuple(modes)]))
    clusters = []
    for n, (mu, modes) in enumerate(groups, start=1):
        members = tuple(EigenFunctionDescriptor.for_domain(m, domain) for m in sorted(modes))
        clusters.append(EigenCluster(mu, len(members), members, n))
    return clusters


def flatten_clusters(clusters: Sequence[EigenCluster], domain: Domain, k: float) -> list[tuple[tuple[int, ...], float]]:
    """Inverse of :func:`cluster_eigenvalues`: the raw ``(modes, mu)`` list."""
    return _sorted_modes(domain, k, [d.mode_indices for c in clusters for d in c.members])


def enumerate_clusters(
    domain: Domain,
    k: float,
    count: int | None = None,
    threshold: float | None = None,
    tolerance: float = DEFAULT_CLUSTER_TOL,
) -> list[EigenCluster]:
    raw = raw_eigenvalues(domain, k, count=count, threshold=threshold, tie_tolerance=tolerance)
    return cluster_eigenvalues(raw, domain, tolerance)


def _check_inside(domain: Domain, coords: Sequence[np.ndarray], slack: float = 1e-12) -> None:
    for x, L in zip(coords, domain.lengths):
        if np.any(x < -slack * L) or np.any(x > L * (1 + slack)):
            raise ValueError("evaluation point outside the closed domain")


def eigenfunction_eval(descriptor: EigenFunctionDescriptor, domain: Domain, point) -> float | np.ndarray:
    """Evaluate an eigenfunction at ``point``.

    ``point`` is a scalar (interval) or a coordinate tuple; array coordinates
    broadcast.  Boundary values are exactly zero.
    """
    coords = [np.asarray(point, dtype=float)] if domain.dim == 1 else [np.asarray(c, dtype=float) for c in point]
    if len(coords) != domain.dim:
        raise ValueError("point dimension does not match the domain")
    _check_inside(domain, coords)
    value = descriptor.normalization
    for x, m, L in zip(coords, descriptor.mode_indices, domain.lengths):
        s = np.sin(m * np.pi * x / L)
        s = np.where((x <= 0) | (x >= L), 0.0, s)
        value = value * s
    if np.ndim(value) == 0:
        return float(value)
    return value


def unstable_cluster_set(clusters: Sequence[EigenCluster], zero_tolerance: float = DEFAULT_ZERO_TOL) -> list[int]:
    """Indices of clusters whose ``mu`` is not safely negative."""
    if zero_tolerance < 0:
        raise ValueError("zero tolerance must be non-negative")
    return [c.cluster_index for c in clusters if c.mu >= -zero_tolerance]


def clusters_in_index_box(domain: Domain, k: float, max_index: int, tolerance: float = DEFAULT_CLUSTER_TOL) -> list[EigenCluster]:
    """Clusters of every mode with all indices ``<= max_index``.

    Degenerate partners outside the box are not added; this policy is meant
    for simulation truncation, not for verdicts.
    """
    if max_index < 1:
        raise ValueError("max_index must be positive")
    grids = np.meshgrid(*[np.arange(1, max_index + 1)] * domain.dim, indexing="ij")
    candidates = [tuple(int(v) for v in idx) for idx in zip(*(g.ravel() for g in grids))]
    return cluster_eigenvalues(_sorted_modes(domain, k, candidates), domain, tolerance)
