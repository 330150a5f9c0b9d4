"""Zone actuators and sensors, and their inner products with eigenfunctions.

A device is a box-shaped zone plus a profile supported on it (extended by
zero outside).  Constant, polynomial and sine-product profiles integrate
against the sine eigenfunctions in closed form; tabulated profiles are
linearly interpolated and integrated by composite Gauss-Legendre.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from outstab.quadrature import integrate_box
from outstab.spectral_core import Domain, EigenCluster, EigenFunctionDescriptor

PROFILE_KINDS = ("constant", "polynomial", "sine_product", "tabulated")
ROLES = ("actuator", "sensor")


@dataclass(frozen=True)
class QuadratureSettings:
    order: int = 16
    cells: int = 8

    def __post_init__(self) -> None:
        if self.order < 1 or self.cells < 1:
            raise ValueError("quadrature order and cells must be positive")


@dataclass(frozen=True)
class Zone:
    """Axis-aligned box, one ``(lo, hi)`` pair per axis."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if not bounds:
            raise ValueError("zone needs at least one axis")
        for lo, hi in bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"zone bounds must satisfy lo < hi, got ({lo}, {hi})")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def measure(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.bounds]))

    def inside(self, domain: Domain) -> bool:
        if self.dim != domain.dim:
            return False
        return all(lo >= 0.0 and hi <= L for (lo, hi), L in zip(self.bounds, domain.lengths))

    def overlaps(self, other: "Zone") -> bool:
        # open boxes: touching faces do not overlap
        return all(lo < ohi and olo < hi for (lo, hi), (olo, ohi) in zip(self.bounds, other.bounds))


@dataclass(frozen=True)
class Profile:
    """Spatial profile of a device.

    ``constant``      value
    ``polynomial``    coefficients in absolute coordinates, ascending powers;
                      a 1-D list for intervals, a nested list ``c[i][j]`` of
                      ``x**i * y**j`` for rectangles
    ``sine_product``  ``amplitude * prod_d sin(modes[d] pi x_d / L_d)`` with
                      ``L_d`` the domain lengths
    ``tabulated``     ``positions`` (one strictly increasing array per axis)
                      and ``values``; linear interpolation
    """

    kind: str
    value: float = 1.0
    coefficients: tuple = ()
    modes: tuple[int, ...] = ()
    amplitude: float = 1.0
    positions: tuple[tuple[float, ...], ...] = ()
    values: tuple = ()

    def __post_init__(self) -> None:
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "polynomial":
            coeffs = np.asarray(self.coefficients, dtype=float)
            if coeffs.size == 0 or coeffs.ndim not in (1, 2):
                raise ValueError("polynomial needs a non-empty 1-D or 2-D coefficient array")
        if self.kind == "sine_product":
            if not self.modes or any(int(m) < 1 for m in self.modes):
                raise ValueError("sine_product needs positive mode indices")
        if self.kind == "tabulated":
            if not self.positions:
                raise ValueError("tabulated profile needs sample positions")
            for axis in self.positions:
                if len(axis) < 2:
                    raise ValueError("tabulated profile needs at least 2 samples per axis")
                if np.any(np.diff(np.asarray(axis, dtype=float)) <= 0):
                    raise ValueError("tabulated positions must be strictly increasing")
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != tuple(len(a) for a in self.positions):
                raise ValueError("tabulated values do not match the position grid")

    @classmethod
    def constant(cls, value: float = 1.0) -> "Profile":
        return cls("constant", value=float(value))

    @classmethod
    def polynomial(cls, coefficients) -> "Profile":
        arr = np.asarray(coefficients, dtype=float)
        return cls("polynomial", coefficients=_freeze(arr))

    @classmethod
    def sine_product(cls, modes: Sequence[int], amplitude: float = 1.0) -> "Profile":
        return cls("sine_product", modes=tuple(int(m) for m in modes), amplitude=float(amplitude))

    @classmethod
    def tabulated(cls, positions, values) -> "Profile":
        if np.ndim(positions[0]) == 0:
            positions = [positions]
        pos = tuple(tuple(float(v) for v in axis) for axis in positions)
        return cls("tabulated", positions=pos, values=_freeze(np.asarray(values, dtype=float)))

    @classmethod
    def from_csv(cls, path: str | Path) -> "Profile":
        """Read a two-column ``position,value`` CSV (header row optional)."""
        xs, ys = [], []
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    x, y = float(row[0]), float(row[1])
                except ValueError:
                    if not xs:
                        continue  # header
                    raise
                xs.append(x)
                ys.append(y)
        return cls.tabulated(xs, ys)

    def scaled(self, factor: float) -> "Profile":
        if self.kind == "constant":
            return Profile.constant(self.value * factor)
        if self.kind == "polynomial":
            return Profile.polynomial(np.asarray(self.coefficients) * factor)
        if self.kind == "sine_product":
            return Profile.sine_product(self.modes, self.amplitude * factor)
        return Profile.tabulated(self.positions, np.asarray(self.values) * factor)

    def evaluate(self, domain: Domain, *coords: np.ndarray) -> np.ndarray:
        """Profile values at broadcastable coordinate arrays (no zone cut-off)."""
        coords = tuple(np.asarray(c, dtype=float) for c in coords)
        shape = np.broadcast_shapes(*(c.shape for c in coords))
        if self.kind == "constant":
            return np.full(shape, self.value)
        if self.kind == "polynomial":
            coeffs = np.asarray(self.coefficients, dtype=float)
            if coeffs.ndim == 1:
                if len(coords) != 1:
                    raise ValueError("1-D polynomial on a 2-D domain")
                return np.broadcast_to(np.polynomial.polynomial.polyval(coords[0], coeffs), shape)
            x, y = (np.broadcast_to(c, shape) for c in coords)
            return np.polynomial.polynomial.polyval2d(x, y, coeffs)
        if self.kind == "sine_product":
            out = np.full(shape, self.amplitude)
            for x, m, L in zip(coords, self.modes, domain.lengths):
                out = out * np.sin(m * np.pi * x / L)
            return out
        return _interpolate(self.positions, np.asarray(self.values, dtype=float), coords, shape)

    def l2_norm(self, zone: Zone, domain: Domain, quadrature: QuadratureSettings = QuadratureSettings()) -> float:
        if self.kind == "constant":
            return abs(self.value) * math.sqrt(zone.measure)
        sq = integrate_box(lambda *c: self.evaluate(domain, *c) ** 2, zone.bounds, quadrature.order, quadrature.cells)
        return math.sqrt(max(sq, 0.0))


def _freeze(arr: np.ndarray):
    if arr.ndim == 0:
        return float(arr)
    return tuple(_freeze(a) for a in arr)


def _interpolate(positions, values: np.ndarray, coords, shape) -> np.ndarray:
    if len(positions) == 1:
        return np.broadcast_to(np.interp(coords[0], positions[0], values, left=0.0, right=0.0), shape)
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(positions, values, bounds_error=False, fill_value=0.0)
    pts = np.stack([np.broadcast_to(c, shape) for c in coords], axis=-1)
    return interp(pts)


@dataclass(frozen=True)
class Device:
    role: str
    zone: Zone
    profile: Profile
    label: str = ""

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"device role must be one of {ROLES}, got {self.role!r}")


def actuator(zone, profile: Profile | None = None, label: str = "") -> Device:
    return Device("actuator", zone if isinstance(zone, Zone) else Zone(zone), profile or Profile.constant(), label)


def sensor(zone, profile: Profile | None = None, label: str = "") -> Device:
    return Device("sensor", zone if isinstance(zone, Zone) else Zone(zone), profile or Profile.constant(), label)


# -- closed-form 1-D integrals ------------------------------------------------

def _sine_integral(lo: float, hi: float, omega: float) -> float:
    """int_lo^hi sin(omega x) dx."""
    return (math.cos(omega * lo) - math.cos(omega * hi)) / omega


def _power_trig_moments(lo: float, hi: float, omega: float, degree: int) -> np.ndarray:
    """``S[j] = int_lo^hi x**j sin(omega x) dx`` for ``j = 0..degree``."""
    s_lo, s_hi = math.sin(omega * lo), math.sin(omega * hi)
    c_lo, c_hi = math.cos(omega * lo), math.cos(omega * hi)
    S = np.zeros(degree + 1)
    C = np.zeros(degree + 1)
    S[0] = (c_lo - c_hi) / omega
    C[0] = (s_hi - s_lo) / omega
    for j in range(1, degree + 1):
        S[j] = -(hi**j * c_hi - lo**j * c_lo) / omega + j / omega * C[j - 1]
        C[j] = (hi**j * s_hi - lo**j * s_lo) / omega - j / omega * S[j - 1]
    return S


def _sine_sine_integral(lo: float, hi: float, a: float, b: float) -> float:
    """int_lo^hi sin(a x) sin(b x) dx."""

    def cos_int(w: float) -> float:
        if w == 0.0:
            return hi - lo
        return (math.sin(w * hi) - math.sin(w * lo)) / w

    return 0.5 * (cos_int(a - b) - cos_int(a + b))


def _omegas(descriptor: EigenFunctionDescriptor, domain: Domain) -> list[float]:
    return [m * math.pi / L for m, L in zip(descriptor.mode_indices, domain.lengths)]


def device_eigen_inner_product(
    device: Device,
    descriptor: EigenFunctionDescriptor,
    domain: Domain,
    quadrature: QuadratureSettings = QuadratureSettings(),
) -> float:
    """``int_zone profile * phi`` for one device and one eigenfunction."""
    zone, prof = device.zone, device.profile
    if zone.dim != domain.dim:
        raise ValueError(f"device {device.label!r}: zone dimension does not match the domain")
    omegas = _omegas(descriptor, domain)
    norm = descriptor.normalization

    if prof.kind == "constant":
        return norm * prof.value * math.prod(_sine_integral(lo, hi, w) for (lo, hi), w in zip(zone.bounds, omegas))

    if prof.kind == "polynomial":
        coeffs = np.asarray(prof.coefficients, dtype=float)
        if coeffs.ndim == 1 and domain.dim == 2:
            raise ValueError("1-D polynomial on a 2-D domain")
        if coeffs.ndim == 1:
            (lo, hi), w = zone.bounds[0], omegas[0]
            return norm * float(coeffs @ _power_trig_moments(lo, hi, w, len(coeffs) - 1))
        (lx, hx), (ly, hy) = zone.bounds
        Sx = _power_trig_moments(lx, hx, omegas[0], coeffs.shape[0] - 1)
        Sy = _power_trig_moments(ly, hy, omegas[1], coeffs.shape[1] - 1)
        return norm * float(Sx @ coeffs @ Sy)

    if prof.kind == "sine_product":
        if len(prof.modes) != domain.dim:
            raise ValueError("sine_product mode count does not match the domain")
        total = norm * prof.amplitude
        for (lo, hi), w, m, L in zip(zone.bounds, omegas, prof.modes, domain.lengths):
            total *= _sine_sine_integral(lo, hi, m * math.pi / L, w)
        return total

    if len(prof.positions) != domain.dim:
        raise ValueError("tabulated grid dimension does not match the domain")

    def integrand(*c):
        phi = norm
        for x, w in zip(c, omegas):
            phi = phi * np.sin(w * x)
        return prof.evaluate(domain, *c) * phi

    return integrate_box(integrand, zone.bounds, quadrature.order, quadrature.cells)


def _assemble(cluster: EigenCluster, devices: Sequence[Device], role: str, domain: Domain, quadrature: QuadratureSettings) -> np.ndarray:
    out = np.zeros((len(devices), cluster.multiplicity))
    for i, dev in enumerate(devices):
        if dev.role != role:
            raise ValueError(f"device {dev.label!r} has role {dev.role!r}, expected {role!r}")
        for j, member in enumerate(cluster.members):
            out[i, j] = device_eigen_inner_product(dev, member, domain, quadrature)
    return out


def assemble_actuator_matrix(cluster: EigenCluster, actuators: Sequence[Device], domain: Domain, quadrature: QuadratureSettings = QuadratureSettings()) -> np.ndarray:
    """``p x r_n`` matrix of actuator/eigenfunction inner products."""
    return _assemble(cluster, actuators, "actuator", domain, quadrature)


def assemble_sensor_matrix(cluster: EigenCluster, sensors: Sequence[Device], domain: Domain, quadrature: QuadratureSettings = QuadratureSettings()) -> np.ndarray:
    """``q x r_n`` matrix of sensor/eigenfunction inner products."""
    return _assemble(cluster, sensors, "sensor", domain, quadrature)


def device_scale(devices: Sequence[Device], domain: Domain, quadrature: QuadratureSettings = QuadratureSettings()) -> float:
    """Root-sum-square of the devices' L2 norms.

    By Bessel's inequality this bounds the Frobenius norm of every mode
    matrix assembled from ``devices``; rank decisions are taken relative to it.
    """
    return math.sqrt(sum(d.profile.l2_norm(d.zone, domain, quadrature) ** 2 for d in devices))


@dataclass
class ValidationReport:
    containment: list[str] = field(default_factory=list)
    overlaps: list[str] = field(default_factory=list)
    other: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.containment or self.overlaps or self.other)

    @property
    def errors(self) -> list[str]:
        return self.containment + self.overlaps + self.other


def validate_device_set(domain: Domain, devices: Sequence[Device]) -> ValidationReport:
    """Check zone containment for all devices and disjointness of actuator zones."""
    report = ValidationReport()
    for dev in devices:
        if dev.zone.dim != domain.dim:
            report.containment.append(f"{dev.role} {dev.label!r}: zone dimension {dev.zone.dim} != domain dimension {domain.dim}")
        elif not dev.zone.inside(domain):
            report.containment.append(f"{dev.role} {dev.label!r}: zone {list(dev.zone.bounds)} not inside domain {list(domain.bounds)}")
        prof = dev.profile
        if prof.kind == "sine_product" and len(prof.modes) != domain.dim:
            report.other.append(f"{dev.role} {dev.label!r}: sine_product needs {domain.dim} mode indices")
        if prof.kind == "tabulated":
            if len(prof.positions) != domain.dim:
                report.other.append(f"{dev.role} {dev.label!r}: tabulated grid dimension mismatch")
            elif any(axis[0] > lo or axis[-1] < hi for axis, (lo, hi) in zip(prof.positions, dev.zone.bounds)):
                report.other.append(f"{dev.role} {dev.label!r}: tabulated grid does not cover the zone")
        if prof.kind == "polynomial" and np.asarray(prof.coefficients).ndim != domain.dim:
            report.other.append(f"{dev.role} {dev.label!r}: polynomial coefficient rank must equal domain dimension")
    acts = [d for d in devices if d.role == "actuator"]
    for i, a in enumerate(acts):
        for b in acts[i + 1:]:
            if a.zone.dim == b.zone.dim and a.zone.overlaps(b.zone):
                report.overlaps.append(f"actuators {a.label!r} and {b.label!r} have overlapping zones")
    return report
