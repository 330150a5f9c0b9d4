"""Randomized configuration suites for analyzer/oracle agreement runs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from outstab.config import RunConfig
from outstab.devices import Device, Profile, Zone
from outstab.report import oracle_check
from outstab.spectral_core import Domain


def _snap(x: np.ndarray, rng: np.random.Generator, grid: float = 0.25) -> np.ndarray:
    # half of the configurations sit on a coarse lattice so that exact
    # symmetry cancellations (uncontrollable or invisible modes) show up
    if rng.random() < 0.5:
        return np.round(x / grid) * grid
    return x


def _disjoint_zones(rng: np.random.Generator, count: int, length: float) -> list[tuple[float, float]]:
    for _ in range(100):
        pts = np.sort(_snap(rng.uniform(0.0, length, 2 * count), rng))
        pairs = [(float(pts[2 * i]), float(pts[2 * i + 1])) for i in range(count)]
        if all(hi - lo > 1e-3 * length for lo, hi in pairs) and all(
            pairs[i][1] <= pairs[i + 1][0] for i in range(count - 1)
        ):
            return pairs
    raise RuntimeError("could not draw disjoint zones")


def _zone(rng: np.random.Generator, length: float) -> tuple[float, float]:
    while True:
        lo, hi = np.sort(_snap(rng.uniform(0.0, length, 2), rng))
        if hi - lo > 1e-3 * length:
            return float(lo), float(hi)


def random_config_1d(rng: np.random.Generator, k_range: tuple[float, float] = (0.0, 60.0)) -> RunConfig:
    """Unit interval, 1-3 constant actuators on disjoint zones, 1-2 constant sensors.

    A quarter of the draws use one actuator centred at 1/2, which leaves every
    even mode uncontrollable.
    """
    domain = Domain.interval(1.0)
    q = int(rng.integers(1, 3))
    if rng.random() < 0.25:
        c = float(rng.uniform(0.0, 0.45))
        zones = [(c, 1.0 - c)]
    else:
        zones = _disjoint_zones(rng, int(rng.integers(1, 4)), 1.0)
    acts = tuple(Device("actuator", Zone((z,)), Profile.constant(), f"a{i + 1}") for i, z in enumerate(zones))
    sens = tuple(Device("sensor", Zone((_zone(rng, 1.0),)), Profile.constant(), f"s{i + 1}") for i in range(q))
    return RunConfig(domain=domain, k=float(rng.uniform(*k_range)), actuators=acts, sensors=sens)


def random_config_square(rng: np.random.Generator, k_range: tuple[float, float] = (0.0, 60.0)) -> RunConfig:
    """Unit square with swap-symmetric or generic constant devices.

    Symmetric zones ``(c, d) x (c, d)`` make degenerate clusters rank
    deficient, which exercises multiplicity handling and the two K readings.
    """
    domain = Domain.rectangle(1.0, 1.0)

    def box(sym: bool) -> Zone:
        x = _zone(rng, 1.0)
        return Zone((x, x if sym else _zone(rng, 1.0)))

    p = int(rng.integers(1, 3))
    acts = []
    while len(acts) < p:
        z = box(rng.random() < 0.7)
        if all(not z.overlaps(a.zone) for a in acts):
            acts.append(Device("actuator", z, Profile.constant(), f"a{len(acts) + 1}"))
    q = int(rng.integers(1, 3))
    sens = tuple(Device("sensor", box(rng.random() < 0.7), Profile.constant(), f"s{i + 1}") for i in range(q))
    return RunConfig(domain=domain, k=float(rng.uniform(*k_range)), actuators=tuple(acts), sensors=sens)


@dataclass
class SuiteOutcome:
    config: RunConfig
    document: dict

    @property
    def agreement(self):
        return self.document["agreement"]


def agreement_suite(seed: int, trials_1d: int = 50, trials_2d: int = 0, trajectory: bool = False) -> list[SuiteOutcome]:
    rng = np.random.default_rng(seed)
    configs = [random_config_1d(rng) for _ in range(trials_1d)]
    configs += [random_config_square(rng) for _ in range(trials_2d)]
    return [SuiteOutcome(cfg, oracle_check(cfg, with_trajectory=trajectory)) for cfg in configs]


def with_actuators(cfg: RunConfig, actuators) -> RunConfig:
    return replace(cfg, actuators=tuple(actuators))
