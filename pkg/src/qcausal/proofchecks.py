"""Numerical checks of the orthogonality lemmas and norm identities behind the extraction.

All identities are per setting vector.  Projected states depend on a
history only through its unordered content, so every check iterates over
contents (one representative per set of events).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .execution import PHI, PSI, History, ProtocolRun, _run, history_contents
from .protocol import ProtocolSpec

OVERLAP_TOL = 1e-10
SPLIT_TOL = 1e-10
IDENTITY_TOL = 1e-9
MAX_EXHAUSTIVE = 10_000


@dataclass
class ProofCheckReport:
    """Worst deviations found for one setting vector.

    ``psi_overlap``/``phi_overlap`` are the largest ``|<a|b>|`` between
    distinct barred states sharing a history.  The rest are absolute gaps:
    ``outcome_split`` compares a party's next-weight with the sum of its
    outcome weights, ``first_stage`` is the distance of the empty-history
    next-weights from 1, ``final_stage`` compares full-history weights with
    the Born probabilities, and ``stage_balance`` compares the weight
    arriving at a partial history with the weight leaving it.
    """

    x: tuple
    psi_overlap: float = 0.0
    phi_overlap: float = 0.0
    outcome_split: float = 0.0
    first_stage: float = 0.0
    final_stage: float = 0.0
    stage_balance: float = 0.0
    histories_checked: int = 0
    histories_total: int = 0
    sampled: bool = False
    seed: int | None = None
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def finalize(self) -> "ProofCheckReport":
        limits = {
            "psi_overlap": OVERLAP_TOL,
            "phi_overlap": OVERLAP_TOL,
            "outcome_split": SPLIT_TOL,
            "first_stage": IDENTITY_TOL,
            "final_stage": IDENTITY_TOL,
            "stage_balance": IDENTITY_TOL,
        }
        self.failures = [f"{k}: {getattr(self, k):.3e} > {v:.0e}" for k, v in limits.items() if getattr(self, k) > v]
        return self

    def as_dict(self) -> dict:
        return {
            "x": list(self.x),
            "status": "pass" if self.passed else "fail",
            "psi_max_overlap": self.psi_overlap,
            "phi_max_overlap": self.phi_overlap,
            "outcome_split_max_gap": self.outcome_split,
            "first_stage_gap": self.first_stage,
            "final_stage_max_gap": self.final_stage,
            "stage_balance_max_gap": self.stage_balance,
            "histories_checked": self.histories_checked,
            "histories_total": self.histories_total,
            "sampled": self.sampled,
            "seed": self.seed,
            "tolerances": {
                "overlaps": OVERLAP_TOL,
                "outcome_split": SPLIT_TOL,
                "identities": IDENTITY_TOL,
            },
        }


def _max_offdiag(cols: np.ndarray) -> float:
    if cols.shape[1] < 2:
        return 0.0
    gram = cols.conj().T @ cols
    np.fill_diagonal(gram, 0)
    return float(np.max(np.abs(gram)))


def _contents(run: ProtocolRun, sizes: range) -> list[History]:
    out = []
    for k in sizes:
        out.extend(history_contents(run.layout, run.x, k))
    return out


def _select(items: list, limit: int, rng: np.random.Generator) -> tuple[list, bool]:
    if len(items) <= limit:
        return items, False
    keep = np.sort(rng.choice(len(items), size=limit, replace=False))
    return [items[i] for i in keep], True


def barred_overlaps(run: ProtocolRun, histories: Sequence[History], kind: str) -> float:
    """Largest overlap between barred states ``(l, t) != (l', t')`` with a shared history.

    ``kind`` is ``PSI`` (pairs over parties outside the history) or ``PHI``
    (pairs over parties inside it, each taken as the last to act).  The
    do-nothing label 0 is excluded from both: a ``psi``/``phi`` state with the
    control idle is generally not orthogonal to the others.
    """
    T = run.spec.T
    worst = 0.0
    for h in histories:
        if kind == PSI:
            parties = [l for l in run.layout.parties if l not in h.acted]
            make = run.psi
            hist_for = {l: h for l in parties}
        else:
            parties = sorted(h.acted)
            make = run.phi
            hist_for = {l: History(tuple(e for e in h if e.party != l) + tuple(e for e in h if e.party == l)) for l in parties}
        if not parties:
            continue
        cols = []
        for t in range(1, T + 1):
            batch = np.stack([make(l, t, hist_for[l]).state for l in parties], axis=1)
            cols.append(run.evolve_batch(batch, t, kind))
        worst = max(worst, _max_offdiag(np.concatenate(cols, axis=1)))
    return worst


def _psi_sum(run: ProtocolRun, party: int, h: History) -> float:
    return sum(run.psi_norm2(party, t, h) for t in range(1, run.spec.T + 1))


def _phi_sum(run: ProtocolRun, party: int, h: History) -> float:
    return sum(run.phi_norm2(party, t, h) for t in range(1, run.spec.T + 1))


def check_proof_identities(
    spec: ProtocolSpec,
    x: Sequence,
    *,
    seed: int = 0,
    max_histories: int = MAX_EXHAUSTIVE,
    run: ProtocolRun | None = None,
) -> ProofCheckReport:
    """Run both lemma checks and the four norm identities at one setting vector.

    Norm identities are always exhaustive.  The barred-state lemmas draw a
    seeded sample of ``max_histories`` contents once there are more.
    """
    run = _run(spec, x, run)
    lay = run.layout
    n = lay.n_parties
    rep = ProofCheckReport(run.x, seed=seed)

    rng = np.random.default_rng(seed)
    psi_hist = _contents(run, range(0, n))
    phi_hist = _contents(run, range(1, n + 1))
    rep.histories_total = len(psi_hist) + len(phi_hist)
    psi_sel, s1 = _select(psi_hist, max_histories, rng)
    phi_sel, s2 = _select(phi_hist, max_histories, rng)
    rep.sampled = s1 or s2
    rep.histories_checked = len(psi_sel) + len(phi_sel)
    rep.psi_overlap = barred_overlaps(run, psi_sel, PSI)
    rep.phi_overlap = barred_overlaps(run, phi_sel, PHI)

    rep.first_stage = abs(sum(_psi_sum(run, l, History()) for l in lay.parties) - 1.0)

    for h in psi_hist:
        for l in lay.parties:
            if l in h.acted:
                continue
            num = _psi_sum(run, l, h)
            den = sum(_phi_sum(run, l, h.extend(l, a, run.x[l - 1])) for a in range(lay.alphabets[l - 1]))
            rep.outcome_split = max(rep.outcome_split, abs(num - den))

    dist = run.distribution()
    for h in phi_hist:
        lhs = sum(_phi_sum(run, l, h) for l in h.acted)
        if len(h) == n:
            outcome = tuple(h.outcome_of(l) for l in lay.parties)
            rep.final_stage = max(rep.final_stage, abs(lhs - dist[outcome]))
        else:
            rhs = sum(_psi_sum(run, l, h) for l in lay.parties if l not in h.acted)
            rep.stage_balance = max(rep.stage_balance, abs(lhs - rhs))
    return rep.finalize()


def check_all_settings(spec: ProtocolSpec, *, seed: int = 0, max_histories: int = MAX_EXHAUSTIVE) -> list[ProofCheckReport]:
    return [check_proof_identities(spec, x, seed=seed, max_histories=max_histories) for x in spec.setting_vectors()]
