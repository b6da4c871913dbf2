from __future__ import annotations

import numpy as np
import pytest

from qcausal.execution import PHI, PSI, History, ProtocolRun, history_contents
from qcausal.proofchecks import (
    ProofCheckReport,
    _max_offdiag,
    check_all_settings,
    check_proof_identities,
    barred_overlaps,
)


def test_switch_identities_hold(switch):
    reps = check_all_settings(switch)
    assert len(reps) == 8
    for rep in reps:
        assert rep.passed, rep.failures
        assert max(rep.psi_overlap, rep.phi_overlap, rep.outcome_split, rep.first_stage, rep.final_stage, rep.stage_balance) <= 1e-12
        assert not rep.sampled and rep.histories_checked == rep.histories_total


def test_report_dict(switch):
    d = check_proof_identities(switch, (0, 1, 1)).as_dict()
    assert d["status"] == "pass" and d["x"] == [0, 1, 1]
    assert d["tolerances"] == {"overlaps": 1e-10, "outcome_split": 1e-10, "identities": 1e-9}


def test_sampling_is_seeded(switch):
    a = check_proof_identities(switch, (1, 0, 1), seed=4, max_histories=5)
    b = check_proof_identities(switch, (1, 0, 1), seed=4, max_histories=5)
    assert a.sampled and a.histories_checked == 10 < a.histories_total
    assert (a.psi_overlap, a.phi_overlap) == (b.psi_overlap, b.phi_overlap)
    assert a.passed


def test_random_specs(suite_specs):
    for seed, spec in suite_specs[:3]:
        assert all(r.passed for r in check_all_settings(spec, seed=seed))


def test_finalize_flags_large_gaps():
    rep = ProofCheckReport((0,), psi_overlap=1e-3, stage_balance=2e-9).finalize()
    assert not rep.passed
    assert [f.split(":")[0] for f in rep.failures] == ["psi_overlap", "stage_balance"]
    assert rep.as_dict()["status"] == "fail"


def test_gram_detector_sees_overlap():
    v = np.array([[1, 1], [0, 1]], dtype=complex) / np.array([1, np.sqrt(2)])
    assert _max_offdiag(v) == pytest.approx(1 / np.sqrt(2))
    assert _max_offdiag(np.eye(3)) == 0.0
    assert _max_offdiag(np.ones((3, 1))) == 0.0


def test_barred_states_orthogonal_across_steps(switch):
    run = ProtocolRun(switch, (0, 1, 1))
    psi_h = [h for k in range(3) for h in history_contents(run.layout, run.x, k)]
    phi_h = [h for k in range(1, 4) for h in history_contents(run.layout, run.x, k)]
    assert barred_overlaps(run, psi_h, PSI) <= 1e-12
    assert barred_overlaps(run, phi_h, PHI) <= 1e-12


def test_idle_label_is_not_orthogonal(suite_specs):
    # seed 1 has T > N, so the control idles on some steps; adding the idle
    # label to the psi state set produces large overlaps
    seed, spec = suite_specs[1]
    assert seed == 1 and spec.T > spec.n_parties
    x = next(iter(spec.setting_vectors()))
    run = ProtocolRun(spec, x)
    worst = 0.0
    for k in range(spec.n_parties + 1):
        for h in history_contents(run.layout, x, k):
            labels = [0] + [l for l in run.layout.parties if l not in h.acted]
            cols = [
                run.evolve_batch(np.stack([run.psi(l, t, h).state for l in labels], axis=1), t, PSI)
                for t in range(1, spec.T + 1)
            ]
            worst = max(worst, _max_offdiag(np.concatenate(cols, axis=1)))
    assert worst > 0.1
    assert all(r.passed for r in check_all_settings(spec))
