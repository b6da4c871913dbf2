"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

from __future__ import annotations

import time

import numpy as np
import pytest

from qcausal import errors
from qcausal.cli import switch_demo_report
from qcausal.equivalence import (
    individual_sector_deviation,
    ladder_sector_deviation,
    random_circuit,
    rewrite_circuit,
    simulate_circuit,
)
from qcausal.execution import ProtocolRun, iter_histories, quantum_distribution
from qcausal.extraction import check_history_locality, verify_theorem1
from qcausal.polytope import (
    Scenario,
    enumerate_deterministic,
    family_vector,
    game_score,
    gyni_game,
    membership,
    signalling_distribution,
)
from qcausal.proofchecks import check_all_settings
from qcausal.protocol import make_spec, validate_protocol

N_SUBSET = 20

pytestmark = pytest.mark.slow


def report(capsys, number: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")


def test_criterion_1_switch_reproduction(capsys):
    start = time.perf_counter()
    rep = switch_demo_report()
    elapsed = time.perf_counter() - start
    worst = max(c["deviation"] for c in rep["checks"])
    ok = rep["status"] == "pass" and len(rep["checks"]) == 15 and worst <= 1e-10
    report(capsys, 1, ok, f"15 switch values, worst deviation {worst:.2e} (tol 1e-10), {elapsed:.2f} s")
    assert ok


def test_criterion_2_extraction_at_desk_scale(capsys, suite_specs):
    start = time.perf_counter()
    worst, seeds = 0.0, []
    for seed, spec in suite_specs:
        worst = max(worst, verify_theorem1(spec).max_deviation)
        seeds.append(seed)
    elapsed = time.perf_counter() - start
    shapes = {(s.n_parties, s.layout.d_s, s.T) for _, s in suite_specs}
    ok = len(suite_specs) == 100 and worst <= 1e-9
    report(
        capsys, 2, ok,
        f"{len(suite_specs)} specs (seeds {seeds[0]}..{seeds[-1]}, {len(shapes)} (N,d_s,T) shapes), "
        f"max |p_quantum - p_causal| = {worst:.2e} (tol 1e-9), {elapsed:.1f} s",
    )
    assert ok


def test_criterion_3_proof_identities(capsys, suite_specs):
    keys = ("psi_overlap", "phi_overlap", "outcome_split", "first_stage", "final_stage", "stage_balance")
    worst = dict.fromkeys(keys, 0.0)
    sampled = 0
    failures = []
    for seed, spec in suite_specs[:N_SUBSET]:
        for rep in check_all_settings(spec, seed=seed):
            for k in keys:
                worst[k] = max(worst[k], getattr(rep, k))
            sampled += rep.sampled
            failures += [f"seed {seed} x={rep.x}: {f}" for f in rep.failures]
    ok = not failures
    summary = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(capsys, 3, ok, f"{N_SUBSET} specs, {summary}; {sampled} sampled settings")
    assert ok, failures[:5]


def test_criterion_4_history_locality(capsys, suite_specs):
    worst, n_checks = 0.0, 0
    for _, spec in suite_specs[:N_SUBSET]:
        runs = {x: ProtocolRun(spec, x) for x in spec.setting_vectors()}
        for x in runs:
            for h in iter_histories(spec.layout, x, max_len=spec.n_parties - 1):
                for x_alt in runs:
                    if x_alt == x or any(x_alt[e.party - 1] != x[e.party - 1] for e in h):
                        continue
                    worst = max(worst, check_history_locality(spec, x, x_alt, h, runs=runs))
                    n_checks += 1
    ok = worst <= 1e-10
    report(capsys, 4, ok, f"{n_checks} (history, x, x') triples on {N_SUBSET} specs, max change {worst:.2e} (tol 1e-10)")
    assert ok


def test_criterion_5_gate_equivalence(capsys, switch, suite_specs):
    specs = [switch] + [s for _, s in suite_specs[:10]]
    single, ladder = 0.0, 0.0
    for spec in specs:
        for x in spec.setting_vectors():
            ladder = max(ladder, ladder_sector_deviation(spec, x))
            for l in spec.layout.parties:
                single = max(single, individual_sector_deviation(spec, l, x))
    rewrite = 0.0
    for seed in range(10):
        circuit = random_circuit(seed)
        spec = rewrite_circuit(circuit)
        for x in circuit.setting_vectors():
            direct, _ = simulate_circuit(circuit, x)
            rewrite = max(rewrite, quantum_distribution(spec, x).max_deviation(direct))
    ok = single <= 1e-12 and ladder <= 1e-12 and rewrite <= 1e-9
    report(
        capsys, 5, ok,
        f"single-gate sector gap {single:.1e}, ladder sector gap {ladder:.1e} (tol 1e-12) on {len(specs)} specs; "
        f"rewrite vs direct {rewrite:.1e} (tol 1e-9) on 10 circuits",
    )
    assert ok


def test_criterion_6_polytope_cross_check(capsys, suite_specs):
    scen = Scenario((2, 2), ((0, 1), (0, 1)))
    vs = enumerate_deterministic(scen)
    two_party = [s for _, s in suite_specs if s.n_parties == 2]
    worst_residual, statuses = 0.0, []
    for spec in two_party:
        p = family_vector(scen, lambda x, spec=spec: quantum_distribution(spec, x))
        cert = membership(p, vs)
        statuses.append(cert.status)
        if cert.status == "inside":
            worst_residual = max(worst_residual, cert.residual)
    game = gyni_game(scen)
    gs = game_score(signalling_distribution(scen), game, vs)
    attained = float(vs.vertices[gs.optimal_vertex] @ game.payoff_vector())
    sig = membership(signalling_distribution(scen), vs)
    inside_ok = all(s == "inside" for s in statuses) and worst_residual <= 1e-7
    ok = inside_ok and attained == gs.causal_bound and sig.status == "outside" and sig.margin > 0
    report(
        capsys, 6, ok,
        f"{statuses.count('inside')}/{len(two_party)} two-party distributions inside (residual {worst_residual:.1e}); "
        f"GYNI causal bound {gs.causal_bound} attained by vertex {gs.optimal_vertex}; "
        f"signalling point {sig.status} with margin {sig.margin:.3f}",
    )
    assert ok


def test_criterion_7_validity_guard(capsys, suite_specs):
    ident = make_spec(2, (2, 2), [np.eye(6), np.eye(6)], [{0: np.eye(4)}, {0: np.eye(4)}])
    leak = validate_protocol(ident).max_leak
    with pytest.raises(errors.StructureError, match="T >= N"):
        make_spec(2, (2, 2, 2), [np.eye(8), np.eye(8)], [{0: np.eye(4)}] * 3)
    wrap = max(validate_protocol(s).max_wrap for _, s in suite_specs)
    ok = abs(leak - 1.0) <= 1e-12 and wrap <= 1e-12
    report(capsys, 7, ok, f"identity protocol leak {leak:.3f}; T<N rejected structurally; max flag wrap {wrap:.1e} over 100 specs")
    assert ok
