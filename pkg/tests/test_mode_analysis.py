import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from outstab.devices import Profile, actuator, sensor
from outstab.mode_analysis import (
    AnalysisSettings,
    ModeMatrices,
    TruncationError,
    analyze_mode,
    analyze_system,
    approx_controllability_check,
    kernel_basis,
    membership_sets,
    mode_subspaces,
    observable_uncontrollable_basis,
    rank,
    rank_margin,
    stabilizability_verdict,
)
from outstab.spectral_core import Domain, EigenCluster, EigenFunctionDescriptor, enumerate_clusters


def cluster(mu, r, index=1):
    members = tuple(EigenFunctionDescriptor((i + 1, 1), 2.0) for i in range(r))
    return EigenCluster(mu, r, members, index)


def test_kernel_examples():
    assert np.allclose(np.abs(kernel_basis(np.array([[1.0, 0.0]]))), [[0.0], [1.0]])
    K = kernel_basis(np.array([[1.0, 1.0]]))
    assert K.shape == (2, 1)
    assert np.allclose(np.abs(K[:, 0]), [1 / math.sqrt(2)] * 2, atol=1e-15)
    assert K[0, 0] == pytest.approx(-K[1, 0], abs=1e-15)
    assert kernel_basis(np.eye(2)).shape == (2, 0)
    assert np.allclose(kernel_basis(np.zeros((1, 2))), np.eye(2))
    assert np.allclose(kernel_basis(np.zeros((0, 2))), np.eye(2))
    with pytest.raises(ValueError):
        kernel_basis(np.eye(2), 0.0)


def test_rank_tolerance_uses_scale_floor():
    M = np.array([[1e-13, 0.0]])
    assert rank(M) == 1
    assert rank(M, scale=1.0) == 0


def test_subspaces_of_symmetric_pair():
    ker, row = mode_subspaces(ModeMatrices(1, [[1.0, 1.0]], [[1.0, 0.0]]))
    assert np.allclose(np.abs(row[:, 0]), [1 / math.sqrt(2)] * 2)
    assert abs(row[:, 0] @ ker[:, 0]) < 1e-15


def test_observable_uncontrollable_examples():
    assert observable_uncontrollable_basis(ModeMatrices(1, [[1.0, 1.0]], [[1.0, 1.0]])).shape == (2, 0)
    obs = observable_uncontrollable_basis(ModeMatrices(1, [[1.0, 1.0]], [[1.0, 0.0]]))
    assert obs.shape == (2, 1)
    assert np.allclose(np.abs(obs[:, 0]), [1 / math.sqrt(2)] * 2)
    obs = observable_uncontrollable_basis(ModeMatrices(1, [[0.0]], [[2.0]]))
    assert np.allclose(np.abs(obs), [[1.0]])
    assert observable_uncontrollable_basis(ModeMatrices(1, [[0.0]], np.zeros((0, 1)))).shape == (1, 0)


def test_membership_disagreement_example():
    a = analyze_mode(cluster(5.0, 2), ModeMatrices(1, [[1.0, 1.0]], [[1.0, 1.0]]))
    assert a.in_J and a.in_K_literal and not a.in_K_refined
    assert a.rank_B == 1 and a.kernel_dim == 1
    assert membership_sets(0, True, 0) == (False, False, False)
    assert membership_sets(1, False, 0) == (True, False, False)
    assert membership_sets(1, True, 1) == (True, True, True)


def test_verdict_examples():
    # mu = 40.13, B = 0, T != 0: not stabilizable
    a1 = analyze_mode(cluster(40.13, 1, 1), ModeMatrices(1, [[0.0]], [[0.45]]))
    a2 = analyze_mode(cluster(10.5, 1, 2), ModeMatrices(2, [[0.3]], [[0.0]]))
    rep = stabilizability_verdict([cluster(40.13, 1, 1), cluster(10.5, 1, 2)], [a1, a2])
    assert not rep.verdict and rep.witnesses == [(1, 40.13)]
    # stable uncontrollable mode does not matter
    b1 = analyze_mode(cluster(-3.0, 1, 1), ModeMatrices(1, [[0.0]], [[1.0]]))
    assert stabilizability_verdict([cluster(-3.0, 1, 1)], [b1]).verdict
    # a marginal mode counts as unstable
    c1 = analyze_mode(cluster(0.0, 1, 1), ModeMatrices(1, [[0.0]], [[1.0]]))
    assert not stabilizability_verdict([cluster(0.0, 1, 1)], [c1]).verdict
    # invisible unstable mode is harmless
    d1 = analyze_mode(cluster(3.0, 1, 1), ModeMatrices(1, [[0.0]], [[0.0]]))
    assert stabilizability_verdict([cluster(3.0, 1, 1)], [d1]).verdict


def test_missing_unstable_cluster_raises():
    cl = [cluster(4.0, 1, 1), cluster(2.0, 1, 2)]
    a = analyze_mode(cl[0], ModeMatrices(1, [[1.0]], [[1.0]]))
    with pytest.raises(TruncationError) as err:
        stabilizability_verdict(cl, [a])
    assert err.value.missing == [2]


def test_system_examples(sine_counterexample, half_actuator):
    dom, k, acts, sens = sine_counterexample
    rep = analyze_system(dom, k, acts, sens)
    assert not rep.verdict
    assert rep.witnesses == [(1, pytest.approx(50 - math.pi**2, abs=1e-12))]
    assert rep.witnesses[0][1] == pytest.approx(40.1304, abs=1e-4)
    dom, k, acts, sens = half_actuator
    assert analyze_system(dom, k, acts, sens).verdict


def test_count_policy_truncation_error(unit):
    settings_ = AnalysisSettings(policy="count", modes=1)
    with pytest.raises(TruncationError):
        analyze_system(unit, 50.0, [actuator([(0.0, 0.5)])], [sensor([(0.0, 1.0)])], settings_)


def test_invalid_devices_rejected(unit):
    with pytest.raises(ValueError):
        analyze_system(unit, 1.0, [actuator([(0.0, 0.5)]), actuator([(0.4, 0.8)])], [])


def test_approx_controllability_examples(unit, square):
    c = 1 / math.sqrt(2)
    clusters = enumerate_clusters(unit, 0.0, count=100)
    rep = analyze_system(unit, 0.0, [actuator([(0.0, c)])], [], clusters=clusters)
    assert rep.approx_controllability.status == "holds_up_to_truncation"
    assert rep.approx_controllability.clusters_checked == 100
    rep = analyze_system(unit, 0.0, [actuator([(0.0, 0.5)])], [], clusters=clusters)
    assert rep.approx_controllability.as_dict() == {"status": "fails_at_mode", "mode": 4, "clusters_checked": 100}
    rep = analyze_system(square, 0.0, [actuator([(0.0, 0.5), (0.0, 0.5)])], [], clusters=enumerate_clusters(square, 0.0, count=10))
    assert rep.approx_controllability.status == "fails_at_mode"
    assert rep.approx_controllability.mode == 2
    assert approx_controllability_check([], [], 1).status == "not_applicable"


def mode_pair(draw_r, p, q):
    return st.tuples(
        arrays(np.float64, (p, draw_r), elements=st.floats(-2, 2)),
        arrays(np.float64, (q, draw_r), elements=st.floats(-2, 2)),
    )


@st.composite
def random_modes(draw):
    r = draw(st.integers(1, 4))
    p = draw(st.integers(0, 3))
    q = draw(st.integers(0, 3))
    B, T = draw(mode_pair(r, p, q))
    # exact rank deficiency is the interesting case: repeat a column sometimes
    if r > 1 and draw(st.booleans()):
        B[:, 1] = B[:, 0]
        T[:, 1] = T[:, 0] * draw(st.sampled_from([1.0, -1.0, 0.5]))
    return ModeMatrices(1, B.reshape(p, r), T.reshape(q, r))


@settings(max_examples=150, deadline=None)
@given(mm=random_modes())
def test_subspace_algebra_properties(mm):
    r = mm.multiplicity
    ker, row = mode_subspaces(mm)
    assert ker.shape[1] + row.shape[1] == r
    Q = np.hstack([ker, row])
    assert np.allclose(Q.T @ Q, np.eye(r), atol=1e-10)
    if mm.B.size:
        assert np.linalg.norm(mm.B @ ker) <= 1e-9 * max(1.0, np.linalg.norm(mm.B))
    obs = observable_uncontrollable_basis(mm)
    assert obs.shape[1] <= ker.shape[1]
    if obs.shape[1]:
        # lies in the kernel
        assert np.allclose(ker @ (ker.T @ obs), obs, atol=1e-10)
    a = analyze_mode(cluster(1.0, r), mm)
    assert (not a.in_K_refined) or a.in_K_literal


@settings(max_examples=100, deadline=None)
@given(mm=random_modes(), perm_seed=st.integers(0, 1000), scale=st.floats(0.01, 100.0))
def test_invariance_under_row_permutation_and_scaling(mm, perm_seed, scale):
    rng = np.random.default_rng(perm_seed)
    base = analyze_mode(cluster(1.0, mm.multiplicity), mm)
    pb = rng.permutation(mm.B.shape[0])
    pt = rng.permutation(mm.T.shape[0])
    other = ModeMatrices(1, mm.B[pb] * scale, mm.T[pt] / scale)
    a = analyze_mode(cluster(1.0, mm.multiplicity), other)
    assert (a.rank_B, a.in_J, a.in_K_literal, a.in_K_refined) == (base.rank_B, base.in_J, base.in_K_literal, base.in_K_refined)


@settings(max_examples=15, deadline=None)
@given(k=st.floats(0.0, 60.0), lo=st.floats(0.0, 0.4), width=st.floats(0.05, 0.15), extra_lo=st.floats(0.55, 0.9))
def test_adding_an_actuator_never_hurts(k, lo, width, extra_lo):
    dom = Domain.interval(1.0)
    one = [actuator([(lo, lo + width)])]
    two = one + [actuator([(extra_lo, min(extra_lo + 0.08, 1.0))])]
    sens = [sensor([(0.1, 0.7)])]
    r1 = analyze_system(dom, k, one, sens)
    r2 = analyze_system(dom, k, two, sens)
    assert set(r2.K_set()) <= set(r1.K_set())
    assert r2.verdict or not r1.verdict


def test_settings_validation():
    with pytest.raises(ValueError):
        AnalysisSettings(rank_tol=0.0)
    with pytest.raises(ValueError):
        AnalysisSettings(policy="first")
    with pytest.raises(ValueError):
        AnalysisSettings(reading="loose")


def test_rank_margin(square):
    sens = [sensor([(0.06, 0.39), (0.25, 0.5)])]
    first = actuator([(0.75, 1.0), (0.0, 0.75)])
    # a zone centred a hair off 1/2 barely reaches the (1,2)-(2,1) difference
    nearly = actuator([(0.4245, 0.5757), (0.4245, 0.5757)])
    rep = analyze_system(square, 56.82, [first, nearly], sens)
    assert rep.verdict_refined
    assert rank_margin(rep) < 1e-3
    rep = analyze_system(square, 60.0, [actuator([(0.0, 0.5), (0.0, 0.5)]), actuator([(0.5, 1.0), (0.0, 0.5)])], sens)
    assert rank_margin(rep) > 0.1
    rep = analyze_system(square, 0.0, [first], sens)
    assert rank_margin(rep) == math.inf
