from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from qcausal.errors import PreconditionError, UnsupportedSizeError
from qcausal.execution import quantum_distribution
from qcausal.polytope import (
    DeterministicStrategy,
    Scenario,
    enumerate_deterministic,
    family_vector,
    game_score,
    gyni_game,
    iter_strategies,
    membership,
    raw_strategy_count,
    signalling_distribution,
)
from qcausal.simplex import phase_one

BINARY = Scenario((2, 2), ((0, 1), (0, 1)))

# frozen regression constants for the binary two-party scenario
RAW_STRATEGIES = 2048
DISTINCT_VERTICES = 112
GYNI_AVERAGE_BOUND = 0.75
GYNI_JOINT_BOUND = 0.5


@pytest.fixture(scope="module")
def vs():
    return enumerate_deterministic(BINARY)


def scipy_feasible(V, p) -> bool:
    A = np.vstack([V.T, np.ones((1, len(V)))])
    b = np.concatenate([p, [1.0]])
    res = linprog(np.zeros(len(V)), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    return res.status == 0


def marginal(p4, party):
    """p(a_party | x, y) summed over the other outcome."""
    return p4.sum(axis=3) if party == 1 else p4.sum(axis=2)


def test_counts(vs):
    assert raw_strategy_count(BINARY) == RAW_STRATEGIES == sum(1 for _ in iter_strategies(BINARY))
    assert vs.raw_count == RAW_STRATEGIES
    assert len(vs) == DISTINCT_VERTICES
    assert len({v.tobytes() for v in vs.vertices}) == DISTINCT_VERTICES


def test_vertices_are_deterministic_and_one_way(vs):
    for v in vs.vertices:
        p4 = v.reshape(BINARY.shape)
        assert set(np.unique(v)) <= {0.0, 1.0}
        np.testing.assert_array_equal(p4.sum(axis=(2, 3)), np.ones((2, 2)))
        # whoever goes first cannot depend on the other's setting
        a_blind = np.array_equal(marginal(p4, 1)[:, 0], marginal(p4, 1)[:, 1])
        b_blind = np.array_equal(marginal(p4, 2)[0], marginal(p4, 2)[1])
        assert a_blind or b_blind


def test_strategy_distribution_by_hand():
    # Alice first outputs her setting; Bob outputs Alice's outcome XOR his setting
    second = tuple(a ^ y for a in (0, 1) for x in (0, 1) for y in (0, 1))
    p = DeterministicStrategy(1, (0, 1), second).distribution(BINARY).reshape(BINARY.shape)
    for x, y in itertools.product((0, 1), repeat=2):
        assert p[x, y, x, x ^ y] == 1.0


def test_vertices_are_members(vs):
    for i in (0, 17, 111):
        cert = membership(vs.vertices[i], vs)
        assert cert.status == "inside" and cert.residual <= 1e-12
        assert sum(cert.weights.values()) == pytest.approx(1.0)


def test_mixture_is_inside(vs):
    p = 0.3 * vs.vertices[5] + 0.7 * vs.vertices[80]
    cert = membership(p, vs)
    assert cert.status == "inside" and cert.residual <= 1e-9
    assert cert.as_dict()["status"] == "inside"


def test_signalling_point_certified_outside(vs):
    p = signalling_distribution(BINARY)
    cert = membership(p, vs)
    assert cert.status == "outside" and cert.margin > 0
    g = cert.functional
    assert np.max(np.abs(g)) == pytest.approx(1.0)
    assert np.max(vs.vertices @ g) == pytest.approx(cert.bound, abs=1e-12)
    assert g @ p == pytest.approx(cert.value, abs=1e-12)
    assert not scipy_feasible(vs.vertices, p)
    d = cert.as_dict()
    assert d["status"] == "outside" and len(d["functional"]) == 16


def test_gyni_scores(vs):
    zero = DeterministicStrategy(1, (0, 0), (0,) * 8).distribution(BINARY)
    sig = signalling_distribution(BINARY)
    avg, joint = gyni_game(BINARY), gyni_game(BINARY, "joint")
    assert game_score(zero, avg).score == pytest.approx(0.5)
    assert game_score(zero, joint).score == pytest.approx(0.25)
    for game, bound in [(avg, GYNI_AVERAGE_BOUND), (joint, GYNI_JOINT_BOUND)]:
        gs = game_score(sig, game, vs)
        assert gs.score == pytest.approx(1.0)
        assert gs.causal_bound == pytest.approx(bound, abs=1e-12)
        assert vs.vertices[gs.optimal_vertex] @ game.payoff_vector() == gs.causal_bound
    with pytest.raises(PreconditionError):
        gyni_game(BINARY, "other")


def test_gyni_bound_matches_raw_strategies():
    payoff = gyni_game(BINARY).payoff_vector()
    best = max(s.distribution(BINARY) @ payoff for s in iter_strategies(BINARY))
    assert best == GYNI_AVERAGE_BOUND


def test_quantum_distributions_inside(vs, suite_specs):
    two = [s for _, s in suite_specs if s.n_parties == 2][:6]
    for spec in two:
        p = family_vector(BINARY, lambda x, spec=spec: quantum_distribution(spec, x))
        cert = membership(p, vs)
        assert cert.status == "inside" and cert.residual <= 1e-7
        assert scipy_feasible(vs.vertices, p)
        assert game_score(p, gyni_game(BINARY)).score <= GYNI_AVERAGE_BOUND + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0))
def test_membership_agrees_with_scipy(vs, seed, mix):
    rng = np.random.default_rng(seed)
    noise = rng.dirichlet(np.ones(4), size=4).reshape(-1)
    p = mix * signalling_distribution(BINARY) + (1 - mix) * noise
    cert = membership(p, vs)
    assert cert.status != "indeterminate" or abs(cert.margin) <= 1e-6
    if cert.status != "indeterminate":
        assert (cert.status == "inside") == scipy_feasible(vs.vertices, p)


def test_phase_one_small_systems():
    res = phase_one(np.array([[1.0, 1.0]]), np.array([1.0]))
    assert res.status == "feasible" and res.x.sum() == pytest.approx(1.0)
    res = phase_one(np.array([[1.0, 1.0], [1.0, -1.0]]), np.array([1.0, -3.0]))
    assert res.status == "infeasible"
    A = np.array([[1.0, 1.0], [1.0, -1.0]])
    assert np.all(res.farkas @ A <= 1e-12) and res.farkas @ np.array([1.0, -3.0]) > 0
    capped = phase_one(np.eye(3), np.ones(3), max_iter=1)
    assert capped.status == "indeterminate" and "cap" in capped.message


def test_family_vector_layout():
    dists = {x: np.full((2, 2), 0.25) for x in itertools.product((0, 1), repeat=2)}
    assert family_vector(BINARY, dists).shape == (16,)
    with pytest.raises(PreconditionError):
        family_vector(BINARY, lambda x: np.ones(3))


def test_size_limits():
    with pytest.raises(UnsupportedSizeError):
        enumerate_deterministic(Scenario((2, 2, 2), ((0, 1),) * 3))
    with pytest.raises(UnsupportedSizeError):
        enumerate_deterministic(Scenario((3, 3), ((0, 1, 2),) * 2))
    with pytest.raises(PreconditionError):
        Scenario((2,), ((0, 1), (0, 1)))
    with pytest.raises(PreconditionError):
        game_score(np.ones(3), gyni_game(BINARY))


def test_single_setting_scenario():
    scen = Scenario((2, 2), ((0,), (0,)))
    vs1 = enumerate_deterministic(scen)
    assert len(vs1) == 4
    assert membership(np.full(4, 0.25), vs1).status == "inside"
