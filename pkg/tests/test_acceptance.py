"""End-to-end acceptance criteria; each test logs one PASS/FAIL line."""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from outstab.cli import main
from outstab.config import RunConfig, Truncation, parse_config, serialize_config
from outstab.devices import Device, Profile, Zone
from outstab.report import analyze, dumps, oracle_check, run_analysis, simulate, simulation_clusters
from outstab.simulator import InitialState
from outstab.spectral_core import Domain
from outstab.suites import random_config_1d, random_config_square

pytestmark = pytest.mark.acceptance

SEED = 3
TRIALS_1D = 50
TRIALS_2D = 10


def _act(label, *axes):
    return Device("actuator", Zone(tuple(axes)), Profile.constant(), label)


def _sen(label, *axes):
    return Device("sensor", Zone(tuple(axes)), Profile.constant(), label)


def square_single():
    return RunConfig(
        Domain.rectangle(1.0, 1.0), 60.0,
        (_act("a1", (0.0, 0.5), (0.0, 0.5)),),
        (_sen("s1", (0.1, 0.4), (0.5, 0.9)),),
    )


def square_double():
    cfg = square_single()
    return replace(cfg, actuators=cfg.actuators + (_act("a2", (0.5, 1.0), (0.0, 0.5)),))


@pytest.fixture(scope="module")
def suite():
    rng = np.random.default_rng(SEED)
    configs_1d = [random_config_1d(rng) for _ in range(TRIALS_1D)]
    configs_2d = [random_config_square(rng) for _ in range(TRIALS_2D)]
    t0 = time.perf_counter()
    docs_1d = [oracle_check(cfg, with_trajectory=False) for cfg in configs_1d]
    elapsed = time.perf_counter() - t0
    docs_2d = [oracle_check(cfg, with_trajectory=False) for cfg in configs_2d]
    return {"1d": list(zip(configs_1d, docs_1d)), "2d": list(zip(configs_2d, docs_2d)), "elapsed_1d": elapsed}


def test_criterion_1_agreement_with_oracle(suite, record_criterion):
    rows = suite["1d"]
    conclusive = [d for _, d in rows if d["agreement"] != "inconclusive"]
    agree = sum(1 for d in conclusive if d["agreement"] is True)
    not_stab = sum(1 for d in conclusive if not d["verdict_refined"])
    elapsed = suite["elapsed_1d"]
    ok = len(rows) >= 50 and len(conclusive) > 0 and agree == len(conclusive) and elapsed < 120.0
    record_criterion(
        1, ok,
        f"{agree}/{len(conclusive)} conclusive agree ({len(rows)} configs, {not_stab} not stabilizable), {elapsed:.1f} s",
    )
    assert ok


def test_criterion_2_multiplicity(record_criterion):
    t0 = time.perf_counter()
    single = analyze(square_single())
    c2 = single.mode(2)
    doc1 = oracle_check(square_single(), with_trajectory=False)
    double = analyze(square_double())
    doc2 = oracle_check(square_double(), with_trajectory=False)
    elapsed = time.perf_counter() - t0
    checks = {
        "mu": abs(c2.mu - (60 - 5 * math.pi**2)) < 1e-12,
        "multiplicity": c2.multiplicity == 2,
        "rank": c2.rank_B == 1,
        "verdict": single.verdict_refined is False and [n for n, _ in single.witnesses_refined] == [2],
        "flip": double.verdict_refined is True and double.mode(2).rank_B == 2,
        "oracle": doc1["agreement"] is True and doc2["agreement"] is True,
        "time": elapsed < 30.0,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record_criterion(
        2, ok,
        f"mu_2={c2.mu:.4f} r=2 rank B=1 witness={single.witnesses_refined}; two actuators stabilizable; "
        f"oracle agrees; {elapsed:.1f} s" + (f" failed={failed}" if failed else ""),
    )
    assert ok


def test_criterion_3_series_vs_fd(record_criterion):
    cfg = RunConfig(
        Domain.interval(1.0), 0.0, (), (_sen("s1", (0.2, 0.7)),),
        truncation=Truncation(simulation_modes=200),
    )
    cfg = replace(
        cfg,
        simulation=replace(cfg.simulation, initial_state=InitialState.polynomial([0.0, 1.0, -1.0])),
        oracle=replace(cfg.oracle, resolution=511, t_max=1.0, points=101),
    )
    doc = oracle_check(cfg)
    dev = doc["trajectory_max_relative_deviation"]
    ok = dev is not None and dev <= 1e-3
    record_criterion(3, ok, f"max relative deviation {dev:.3e} over t in [0, 1] (200 modes vs 511 nodes)")
    assert ok


def _decay_cases():
    rng = np.random.default_rng(SEED)
    configs = [random_config_1d(rng) for _ in range(TRIALS_1D)]
    configs += [random_config_square(rng) for _ in range(TRIALS_2D)]
    return configs + [square_single(), square_double()]


def test_criterion_4_decay_dichotomy(record_criterion):
    worst_stab, worst_wit = -math.inf, math.inf
    n_stab = n_wit = 0
    bad = []
    for i, cfg in enumerate(_decay_cases()):
        clusters = simulation_clusters(cfg)
        x0 = InitialState.combination({m.mode_indices: 1.0 for c in clusters[:6] for m in c.members})
        res = simulate(cfg, x0)
        rep = res.report
        if rep.verdict_refined:
            n_stab += 1
            worst_stab = max(worst_stab, res.rate)
            if not res.rate <= -0.5:
                bad.append((i, "stabilizable", res.rate))
            continue
        n, _ = rep.witnesses_refined[0]
        a = rep.mode(n)
        members = next(c for c in clusters if c.cluster_index == n).members
        w = a.observable_uncontrollable_basis[:, 0]
        res = simulate(cfg, InitialState.combination({m.mode_indices: float(v) for m, v in zip(members, w)}))
        n_wit += 1
        worst_wit = min(worst_wit, res.rate)
        if not res.rate >= -1e-6:
            bad.append((i, "witness", res.rate))
    ok = not bad and n_stab > 0 and n_wit > 0
    record_criterion(
        4, ok,
        f"{n_stab} stabilizable (max rate {worst_stab:.3f} <= -0.5), "
        f"{n_wit} witness states (min rate {worst_wit:.3f} >= -1e-6)" + (f" failures={bad}" if bad else ""),
    )
    assert ok


def test_criterion_5_subspace_algebra(suite, record_criterion):
    modes_checked = 0
    worst_orth = 0.0
    rank_nullity = inclusion = True
    strict = []
    configs = [cfg for cfg, _ in suite["1d"] + suite["2d"]]
    for i, cfg in enumerate(configs):
        rep = analyze(cfg)
        for a in rep.modes:
            modes_checked += 1
            rank_nullity &= a.rank_B + a.kernel_dim == a.multiplicity
            Q = np.hstack([a.kernel_B_basis, a.rowspace_B_basis])
            worst_orth = max(worst_orth, float(np.max(np.abs(Q.T @ Q - np.eye(a.multiplicity)), initial=0.0)))
        lit, ref = set(rep.K_set("literal")), set(rep.K_set("refined"))
        inclusion &= ref <= lit
        if ref < lit:
            strict.append(i)
    # the [1, 1] / [1, 1] pattern: symmetric actuator and symmetric sensor on the square
    sym = replace(square_single(), sensors=(_sen("s1", (0.5, 1.0), (0.5, 1.0)),))
    rep = analyze(sym)
    B, T = rep.mode_matrices[2].B[0], rep.mode_matrices[2].T[0]
    pattern = abs(B[0] - B[1]) < 1e-14 and abs(T[0] - T[1]) < 1e-14 and 2 in rep.K_set("literal") and 2 not in rep.K_set("refined")
    ok = rank_nullity and worst_orth <= 1e-10 and inclusion and bool(strict) and pattern
    record_criterion(
        5, ok,
        f"{modes_checked} modes: rank-nullity exact, orthonormality error {worst_orth:.1e}, "
        f"K_refined <= K_literal everywhere, strict in generated configs {strict}, symmetric pattern {pattern}",
    )
    assert ok


def test_criterion_6_approx_controllability(record_criterion):
    c = 1 / math.sqrt(2)
    one_d = RunConfig(
        Domain.interval(1.0), 0.0, (_act("a1", (0.0, c)),), (),
        truncation=Truncation(verdict_policy="count", verdict_modes=100),
    )
    ac1 = analyze(one_d).approx_controllability
    sq = analyze(square_single())
    ac2 = sq.approx_controllability
    first_double = next(cl.cluster_index for cl in sq.clusters if cl.multiplicity == 2)
    ok = (
        ac1.status == "holds_up_to_truncation" and ac1.clusters_checked == 100
        and ac2.status == "fails_at_mode" and ac2.mode == first_double == 2
    )
    record_criterion(6, ok, f"c/L=1/sqrt(2): {ac1.status} over {ac1.clusters_checked} clusters; square: {ac2.status} at cluster {ac2.mode}")
    assert ok


def test_criterion_7_determinism_and_round_trip(suite, tmp_path, record_criterion):
    configs = [cfg for cfg, _ in suite["1d"] + suite["2d"]] + [square_single(), square_double()]
    round_trip = all(parse_config(serialize_config(cfg)) == cfg for cfg in configs)
    identical = all(dumps(run_analysis(cfg)[0]) == dumps(run_analysis(cfg)[0]) for cfg in configs[:20] + configs[-2:])
    path = tmp_path / "square.toml"
    path.write_text(serialize_config(square_single()), encoding="utf-8")
    files = []
    for i in range(2):
        main(["analyze", "--config", str(path), "--out", str(tmp_path / f"run{i}")])
        files.append((tmp_path / f"run{i}" / "report.json").read_bytes())
    cli_identical = files[0] == files[1] and json.loads(files[0])["verdict"] is False
    ok = round_trip and identical and cli_identical
    record_criterion(7, ok, f"round-trip identity on {len(configs)} configs: {round_trip}; byte-identical reports: {identical and cli_identical}")
    assert ok
