"""Classical causal model extracted from a quantum protocol.

For a fixed setting vector the model is a pair of table families:

* ``next_tables[H]``: probability that each not-yet-acted party acts next,
* ``result_tables[(H, l)]``: outcome probabilities of party ``l`` acting
  after ``H``,

both obtained from norms of history-projected states summed over time.
Their product over the stages of every ordering reproduces the quantum
outcome distribution exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import HistoryError, InvalidProtocolError, PreconditionError, UnreachableHistory, UnsupportedSizeError
from .execution import (
    EMPTY,
    History,
    OutcomeDistribution,
    ProtocolRun,
    _run,
    check_history,
    iter_histories,
    quantum_distribution,
)
from .protocol import LEAK_TOL, ProtocolSpec, apply_U_tensor, apply_V_tensor, initial_state, to_tensor

log = logging.getLogger(__name__)

REACH_EPS = 1e-12
ROW_TOL = 1e-10
EQUALITY_TOL = 1e-9
CLAMP_WARN = 1e-10
MAX_SETTING_VECTORS = 4096


def _clamp(p: float, what: str) -> float:
    if p < -CLAMP_WARN or p > 1 + CLAMP_WARN:
        log.warning("clamping %s = %.3e into [0, 1]", what, p)
    return min(max(p, 0.0), 1.0)


def next_weight(run: ProtocolRun, history: History, party: int) -> float:
    """``sum_t |psi_(l,t,H)|^2``."""
    return sum(run.psi_norm2(party, t, history) for t in range(1, run.spec.T + 1))


def result_weight(run: ProtocolRun, history: History, party: int, outcome: int) -> float:
    """``sum_t |phi_(l,t,(H,(l,a,x_l)))|^2``."""
    h = history.extend(party, outcome, run.x[party - 1])
    return sum(run.phi_norm2(party, t, h) for t in range(1, run.spec.T + 1))


def _candidates(run: ProtocolRun, history: History) -> list[int]:
    return [l for l in run.layout.parties if l not in history.acted]


def _check_party(run: ProtocolRun, history: History, party: int) -> None:
    check_history(run.layout, history, run.x)
    if party not in run.layout.parties:
        raise PreconditionError(f"unknown party {party}")
    if party in history.acted:
        raise PreconditionError(f"party {party} already acted in {history!r}")


def prob_next(spec: ProtocolSpec, x: Sequence, history: History, party: int, *, run: ProtocolRun | None = None) -> float:
    """Probability that ``party`` acts next after ``history``.

    Raises :class:`UnreachableHistory` when the normalising weight is at most
    ``REACH_EPS``.
    """
    run = _run(spec, x, run)
    _check_party(run, history, party)
    denom = sum(next_weight(run, history, l) for l in _candidates(run, history))
    if denom <= REACH_EPS:
        raise UnreachableHistory(f"history {history!r} has weight {denom:.3e}")
    return _clamp(next_weight(run, history, party) / denom, f"p(next={party}|{history!r})")


def prob_result(
    spec: ProtocolSpec, x: Sequence, history: History, party: int, outcome: int, *, run: ProtocolRun | None = None
) -> float:
    """Probability that ``party``, acting after ``history``, obtains ``outcome``."""
    run = _run(spec, x, run)
    _check_party(run, history, party)
    weights = [result_weight(run, history, party, a) for a in range(run.layout.alphabets[party - 1])]
    denom = sum(weights)
    if denom <= REACH_EPS:
        raise UnreachableHistory(f"party {party} after {history!r} has weight {denom:.3e}")
    return _clamp(weights[outcome] / denom, f"p(a_{party}={outcome}|{history!r})")


@dataclass
class CausalModel:
    """Next-party and result tables for one setting vector.

    Unreachable rows hold uniform placeholder distributions and are listed
    in ``placeholders``; they only ever enter with vanishing weight.
    """

    x: tuple
    alphabets: tuple[int, ...]
    next_tables: dict[History, dict[int, float]] = field(default_factory=dict)
    result_tables: dict[tuple[History, int], np.ndarray] = field(default_factory=dict)
    placeholders: set = field(default_factory=set)

    @property
    def n_parties(self) -> int:
        return len(self.alphabets)

    @property
    def reachable(self) -> set[History]:
        return {h for h in self.next_tables if ("next", h) not in self.placeholders}

    def p_next(self, history: History, party: int) -> float:
        return self.next_tables[history][party]

    def p_result(self, history: History, party: int, outcome: int) -> float:
        return float(self.result_tables[(history, party)][outcome])

    def row_errors(self) -> float:
        errs = [abs(sum(row.values()) - 1) for row in self.next_tables.values()]
        errs += [abs(float(np.sum(row)) - 1) for row in self.result_tables.values()]
        return max(errs, default=0.0)


def extract_causal_model(spec: ProtocolSpec, x: Sequence, *, run: ProtocolRun | None = None, check: bool = True) -> CausalModel:
    """Tabulate both conditional families for every history prefix consistent with ``x``."""
    run = _run(spec, x, run)
    if check and run.leak() > LEAK_TOL:
        raise InvalidProtocolError(f"protocol is not valid at x={run.x}: leak {run.leak():.3e}", run.leak())
    lay = run.layout
    model = CausalModel(run.x, lay.alphabets)
    for h in iter_histories(lay, run.x, max_len=lay.n_parties - 1):
        cands = _candidates(run, h)
        nw = {l: next_weight(run, h, l) for l in cands}
        denom = sum(nw.values())
        if denom > REACH_EPS:
            model.next_tables[h] = {l: _clamp(w / denom, f"p(next={l}|{h!r})") for l, w in nw.items()}
        else:
            model.next_tables[h] = {l: 1.0 / len(cands) for l in cands}
            model.placeholders.add(("next", h))
        for l in cands:
            k = lay.alphabets[l - 1]
            rw = np.array([result_weight(run, h, l, a) for a in range(k)])
            tot = rw.sum()
            if tot > REACH_EPS:
                row = np.array([_clamp(w / tot, f"p(a_{l}={a}|{h!r})") for a, w in enumerate(rw)])
            else:
                row = np.full(k, 1.0 / k)
                model.placeholders.add(("result", h, l))
            model.result_tables[(h, l)] = row
    return model


def causal_distribution(model: CausalModel) -> OutcomeDistribution:
    """Sum over orderings of the products of next-party and result probabilities."""
    probs = np.zeros(model.alphabets)
    n = model.n_parties
    x = model.x

    def rec(h: History, weight: float):
        if len(h) == n:
            probs[tuple(h.outcome_of(l) for l in range(1, n + 1))] += weight
            return
        for l, pl in model.next_tables[h].items():
            if pl == 0.0:
                continue
            row = model.result_tables[(h, l)]
            for a, pa in enumerate(row):
                if pa != 0.0:
                    rec(h.extend(l, a, x[l - 1]), weight * pl * pa)

    rec(EMPTY, 1.0)
    return OutcomeDistribution(tuple(x), probs)


@dataclass
class SettingCheck:
    x: tuple
    max_deviation: float
    quantum: OutcomeDistribution
    causal: OutcomeDistribution


@dataclass
class VerificationReport:
    passed: bool
    max_deviation: float
    tolerance: float
    per_setting: list[SettingCheck]

    def as_dict(self) -> dict:
        return {
            "status": "pass" if self.passed else "fail",
            "max_deviation": self.max_deviation,
            "tolerance": {"tier": "end-to-end distribution equality", "value": self.tolerance},
            "per_setting": [{"x": list(c.x), "max_deviation": c.max_deviation} for c in self.per_setting],
        }


def verify_theorem1(spec: ProtocolSpec, *, tol: float = EQUALITY_TOL, allow_large: bool = False) -> VerificationReport:
    """Compare the quantum distribution with the extracted model's distribution at every ``x``."""
    if spec.n_setting_vectors > MAX_SETTING_VECTORS and not allow_large:
        raise UnsupportedSizeError(
            f"{spec.n_setting_vectors} setting vectors exceed {MAX_SETTING_VECTORS}; pass allow_large to override"
        )
    checks = []
    for x in spec.setting_vectors():
        run = ProtocolRun(spec, x)
        q = quantum_distribution(spec, x, run=run)
        c = causal_distribution(extract_causal_model(spec, x, run=run, check=False))
        checks.append(SettingCheck(tuple(x), q.max_deviation(c), q, c))
    worst = max(c.max_deviation for c in checks)
    return VerificationReport(worst <= tol, worst, tol, checks)


def check_history_locality(
    spec: ProtocolSpec,
    x: Sequence,
    x_alt: Sequence,
    history: History,
    *,
    runs: dict | None = None,
) -> float:
    """Largest change of the stage-``k`` probabilities when settings outside ``history`` change.

    Compares ``prob_next`` for every candidate party, and ``prob_result`` for
    every candidate party with its own setting held at ``x``'s value.
    A branch unreachable under one setting vector but not the other counts
    as an infinite deviation.
    """
    x = spec.check_settings(x)
    x_alt = spec.check_settings(x_alt)
    for e in history:
        if x[e.party - 1] != x_alt[e.party - 1]:
            raise PreconditionError(f"setting vectors disagree on party {e.party}, which is in the history")
    runs = {} if runs is None else runs

    def get(xv):
        if xv not in runs:
            runs[xv] = ProtocolRun(spec, xv)
        return runs[xv]

    def safe(fn, *args):
        try:
            return fn(*args)
        except UnreachableHistory:
            return None

    def diff(p, q):
        if p is None and q is None:
            return 0.0
        if p is None or q is None:
            return float("inf")
        return abs(p - q)

    r1 = get(x)
    dev = 0.0
    for l in _candidates(r1, history):
        r2 = get(x_alt)
        dev = max(dev, diff(safe(lambda: prob_next(spec, x, history, l, run=r1)), safe(lambda: prob_next(spec, x_alt, history, l, run=r2))))
        x_same = tuple(x[l - 1] if m == l else v for m, v in enumerate(x_alt, start=1))
        r3 = get(x_same)
        for a in range(spec.layout.alphabets[l - 1]):
            p = safe(lambda: prob_result(spec, x, history, l, a, run=r1))
            q = safe(lambda: prob_result(spec, x_same, history, l, a, run=r3))
            dev = max(dev, diff(p, q))
    return dev


def naive_mixture_distribution(spec: ProtocolSpec, x: Sequence, prune: float = 1e-30) -> OutcomeDistribution:
    """Outcome distribution when the control is fully dephased after every ``U_t``.

    The dephasing channel has Kraus operators ``|c><c|``; the mixed state is
    carried as an ensemble of un-normalised pure branches, one per sequence
    of control values, which is exact.
    """
    x = spec.check_settings(x)
    lay = spec.layout
    branches = [to_tensor(initial_state(lay), lay)]
    for step in range(1, spec.T + 1):
        nxt = []
        for b in branches:
            b = apply_U_tensor(spec, step, b)
            for c in range(lay.d_c):
                piece = np.zeros_like(b)
                piece[:, c] = b[:, c]
                if np.sum(np.abs(piece) ** 2) > prune:
                    nxt.append(apply_V_tensor(spec, x, piece))
        branches = nxt
    n = lay.n_parties
    probs = np.zeros(lay.alphabets)
    for b in branches:
        axes = (0, 1) + tuple(range(2 + n, 2 + 2 * n)) + (b.ndim - 1,)
        probs += np.sum(np.abs(b) ** 2, axis=axes)
    return OutcomeDistribution(x, probs)
