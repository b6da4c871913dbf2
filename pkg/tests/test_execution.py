from __future__ import annotations

import itertools

import numpy as np
import pytest

from qcausal import tensor as tz
from qcausal.errors import CapacityError, HistoryError, InvalidProtocolError, PreconditionError
from qcausal.execution import (
    EMPTY,
    PHI_BAR,
    PSI,
    PSI_BAR,
    Event,
    History,
    ProtocolRun,
    evolve_to_end,
    history_contents,
    history_projector,
    iter_histories,
    phi_state,
    psi_state,
    quantum_distribution,
    total_unitary,
)
from qcausal.protocol import build_U, build_V, initial_state, make_spec, run_protocol


def all_contents(run):
    return [h for k in range(run.layout.n_parties + 1) for h in history_contents(run.layout, run.x, k)]


def dense_pre_states(spec, x):
    """State just before each V, from dense operators."""
    psi = initial_state(spec.layout)
    out = [None]
    for t in range(1, spec.T + 1):
        psi = build_U(spec, t) @ psi
        out.append(psi)
        psi = build_V(spec, x) @ psi
    return out


def dense_psi(spec, pre, l, t, h):
    lay = spec.layout
    pc = np.zeros((lay.d_c, lay.d_c))
    pc[l, l] = 1
    proj = np.kron(np.kron(np.eye(lay.d_s), pc), history_projector(lay, h))
    return proj @ pre[t]


def test_history_basics():
    h = History(((1, 0, "a"), (2, 1, "b")))
    assert h.acted == {1, 2} and h.last == Event(2, 1, "b")
    assert h.outcome_of(2) == 1 and h.outcome_of(3) is None
    assert h.parent == History(((1, 0, "a"),))
    assert h.extend(3, 0, "c").acted == {1, 2, 3}
    assert h.content == History(((2, 1, "b"), (1, 0, "a"))).content
    with pytest.raises(HistoryError):
        History(((1, 0, 0), (1, 1, 0)))


def test_iter_histories_order_and_count(switch):
    hs = list(iter_histories(switch.layout, (0, 1, 1)))
    assert hs[0] == EMPTY
    assert hs[1] == History(((1, 0, 0),))
    # 1 + 3*2 + 6*4 + 6*8 histories of length 0..3
    assert len(hs) == 1 + 6 + 24 + 48
    assert len(set(hs)) == len(hs)
    assert len(list(iter_histories(switch.layout, (0, 1, 1), max_len=1))) == 7


def test_history_projector(switch):
    lay = switch.layout
    d_rf = int(np.prod(lay.dims[2:]))
    for h, rank in [(EMPTY, 8), (History(((2, 1, 1),)), 4), (History(((1, 0, 0), (3, 1, 1), (2, 0, 1))), 1)]:
        p = history_projector(lay, h)
        assert p.shape == (d_rf, d_rf)
        np.testing.assert_array_equal(p @ p, p)
        np.testing.assert_array_equal(p, p.conj().T)
        assert round(np.trace(p).real) == rank


def test_switch_headline_probability(switch):
    assert quantum_distribution(switch, (0, 1, 1))[(0, 0, 0)] == pytest.approx(5 / 16, abs=1e-12)
    for x in switch.setting_vectors():
        assert quantum_distribution(switch, x).total() == pytest.approx(1.0, abs=1e-12)


def test_density_matrix_oracle(small_spec):
    lay = small_spec.layout
    n = lay.n_parties
    for x in small_spec.setting_vectors():
        rho = np.outer(initial_state(lay), initial_state(lay).conj())
        for t in range(1, small_spec.T + 1):
            w = build_V(small_spec, x) @ build_U(small_spec, t)
            rho = w @ rho @ w.conj().T
        diag = np.real(np.diag(rho)).reshape(lay.dims)
        expected = diag.sum(axis=(0, 1) + tuple(range(2 + n, 2 + 2 * n)))
        np.testing.assert_allclose(quantum_distribution(small_spec, x).probs, expected, atol=1e-12)


def test_total_unitary(small_spec):
    for x in small_spec.setting_vectors():
        u = total_unitary(small_spec, x)
        assert tz.unitarity_error(u) <= 1e-12
        np.testing.assert_allclose(u[:, 0], run_protocol(small_spec, x)[0], atol=1e-12)


def test_total_unitary_capacity(switch):
    with pytest.raises(CapacityError):
        total_unitary(switch, (0, 0, 0))


def test_psi_matches_dense_projection(small_spec):
    for x in small_spec.setting_vectors():
        run = ProtocolRun(small_spec, x)
        pre = dense_pre_states(small_spec, x)
        for t in range(1, small_spec.T + 1):
            for h in all_contents(run):
                for l in range(small_spec.n_parties + 1):
                    expected = dense_psi(small_spec, pre, l, t, h)
                    assert run.psi_norm2(l, t, h) == pytest.approx(tz.norm2(expected), abs=1e-12)
                    if l == 0 or l not in h.acted:
                        np.testing.assert_allclose(run.psi(l, t, h).state, expected, atol=1e-12)


@pytest.mark.parametrize("which", ["switch", "small"])
def test_resolution_of_identity_per_step(which, switch, small_spec):
    spec = switch if which == "switch" else small_spec
    for x in itertools.islice(spec.setting_vectors(), 3):
        run = ProtocolRun(spec, x)
        contents = all_contents(run)
        for t in range(1, spec.T + 1):
            total = sum(run.psi_norm2(l, t, h) for l in range(spec.n_parties + 1) for h in contents)
            assert total == pytest.approx(1.0, abs=1e-12)


def test_phi_splits_psi_by_outcome(small_spec):
    lay = small_spec.layout
    for x in small_spec.setting_vectors():
        run = ProtocolRun(small_spec, x)
        for t in range(1, small_spec.T + 1):
            for h in all_contents(run):
                for l in lay.parties:
                    if l in h.acted:
                        continue
                    parts = [run.phi(l, t, h.extend(l, a, x[l - 1])) for a in range(lay.alphabets[l - 1])]
                    assert sum(p.norm2 for p in parts) == pytest.approx(run.psi_norm2(l, t, h), abs=1e-12)
                    for p in parts:
                        assert p.norm2 == pytest.approx(run.phi_norm2(l, t, p.history), abs=1e-12)


def test_phi_depends_on_content_only(switch):
    run = ProtocolRun(switch, (0, 1, 1))
    a, b, c = Event(1, 0, 0), Event(2, 0, 1), Event(3, 0, 1)
    for t in (1, 2, 3):
        s1 = run.phi(3, t, History((a, b, c))).state
        s2 = run.phi(3, t, History((b, a, c))).state
        np.testing.assert_array_equal(s1, s2)


def test_charlie_final_weight_is_joint_probability(switch):
    run = ProtocolRun(switch, (0, 1, 1))
    h = History(((1, 0, 0), (2, 0, 1), (3, 0, 1)))
    assert sum(run.phi_norm2(3, t, h) for t in (1, 2, 3)) == pytest.approx(5 / 16, abs=1e-12)


def test_first_step_weights_of_switch(switch):
    run = ProtocolRun(switch, (0, 1, 1))
    assert run.psi_norm2(1, 1, EMPTY) == pytest.approx(0.5)
    assert run.psi_norm2(2, 1, EMPTY) == pytest.approx(0.5)
    assert run.psi_norm2(3, 1, EMPTY) == pytest.approx(0.0)


def test_evolution_preserves_norm(switch):
    x = (0, 1, 1)
    run = ProtocolRun(switch, x)
    ps = psi_state(switch, x, 1, 1, EMPTY, run=run)
    bar = evolve_to_end(switch, x, ps, run=run)
    assert bar.kind == PSI_BAR and bar.norm2 == pytest.approx(ps.norm2, abs=1e-12)
    ph = phi_state(switch, x, 2, 1, History(((2, 1, 1),)), run=run)
    assert run.evolve_to_end(ph).kind == PHI_BAR
    assert run.evolve_to_end(ph).norm2 == pytest.approx(ph.norm2, abs=1e-12)
    with pytest.raises(PreconditionError):
        run.evolve_to_end(bar)


def test_psi_at_last_step_gets_one_more_V(switch):
    x = (1, 0, 1)
    run = ProtocolRun(switch, x)
    ps = run.psi(3, 3, History(((1, 0, 1), (2, 1, 0))))
    fired = run.evolve_batch(ps.state[:, None], 3, PSI)[:, 0]
    np.testing.assert_allclose(fired, run.evolve_to_end(ps).state)
    assert not np.allclose(fired, ps.state)
    np.testing.assert_array_equal(run.evolve_batch(ps.state[:, None], 3, "phi")[:, 0], ps.state)


def test_precondition_errors(switch):
    run = ProtocolRun(switch, (0, 1, 1))
    h = History(((1, 0, 0),))
    with pytest.raises(PreconditionError):
        run.psi(1, 1, h)
    with pytest.raises(PreconditionError):
        run.psi(1, 4, EMPTY)
    with pytest.raises(PreconditionError):
        run.psi(4, 1, EMPTY)
    with pytest.raises(HistoryError):
        run.phi(2, 1, h)
    with pytest.raises(HistoryError):
        run.psi(2, 1, History(((1, 0, 1),)))
    with pytest.raises(HistoryError):
        run.psi(2, 1, History(((1, 5, 0),)))
    with pytest.raises(PreconditionError):
        quantum_distribution(switch, (0, 0, 0), run=run)


def test_invalid_protocol_refused():
    spec = make_spec(2, (2,), [np.eye(4)], [{0: np.eye(4)}])
    with pytest.raises(InvalidProtocolError) as info:
        quantum_distribution(spec, (0,))
    assert "outside the all-flags-raised subspace" in str(info.value)
    assert quantum_distribution(spec, (0,), check=False).total() == pytest.approx(1.0)


def test_psi_kind_tag(switch):
    assert ProtocolRun(switch, (0, 0, 0)).psi(0, 2, EMPTY).kind == PSI
