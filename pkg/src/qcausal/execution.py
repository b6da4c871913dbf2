"""Protocol execution and history-projected states.

:class:`ProtocolRun` performs one forward pass for a fixed setting vector and
caches the state just before every application of ``V``.  Every projected
state ``psi``/``phi`` is a masked slice of one of those cached states, so
norms for all histories come from a single pass.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Hashable, Iterator, NamedTuple, Sequence

import numpy as np

from . import tensor as tz
from .errors import CapacityError, HistoryError, InvalidProtocolError, PreconditionError
from .protocol import (
    LEAK_TOL,
    ProtocolSpec,
    SpaceLayout,
    all_flags_raised_weight,
    apply_U_tensor,
    apply_V_tensor,
    fire_party,
    from_tensor,
    initial_state,
    to_tensor,
)


class Event(NamedTuple):
    """One entry of a history: ``party`` acted with ``setting`` and saw ``outcome``."""

    party: int
    outcome: int
    setting: Hashable


@dataclass(frozen=True)
class History:
    """Ordered list of events; parties are distinct."""

    entries: tuple[Event, ...] = ()

    def __post_init__(self):
        entries = tuple(Event(*e) for e in self.entries)
        parties = [e.party for e in entries]
        if len(set(parties)) != len(parties):
            raise HistoryError(f"a party appears twice in history {parties}")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __repr__(self) -> str:
        return "H(" + ", ".join(f"({e.party},{e.outcome},{e.setting!r})" for e in self.entries) + ")"

    @property
    def acted(self) -> frozenset[int]:
        return frozenset(e.party for e in self.entries)

    @property
    def content(self) -> frozenset[Event]:
        """Order-free content; projected states only depend on this."""
        return frozenset(self.entries)

    @property
    def last(self) -> Event:
        return self.entries[-1]

    @property
    def parent(self) -> "History":
        return History(self.entries[:-1])

    def extend(self, party: int, outcome: int, setting: Hashable) -> "History":
        return History(self.entries + (Event(party, outcome, setting),))

    def outcome_of(self, party: int) -> int | None:
        for e in self.entries:
            if e.party == party:
                return e.outcome
        return None


EMPTY = History()


def check_history(layout: SpaceLayout, history: History, x: Sequence | None = None) -> None:
    for e in history:
        if e.party not in layout.parties:
            raise HistoryError(f"unknown party {e.party}")
        if not 0 <= e.outcome < layout.alphabets[e.party - 1]:
            raise HistoryError(f"outcome {e.outcome} out of range for party {e.party}")
        if x is not None and x[e.party - 1] != e.setting:
            raise HistoryError(f"history records setting {e.setting!r} for party {e.party}, run uses {x[e.party - 1]!r}")


def iter_histories(layout: SpaceLayout, x: Sequence, max_len: int | None = None) -> Iterator[History]:
    """All histories consistent with ``x``, depth first.

    Stages in order, candidate parties ascending, outcomes ascending; the
    empty history comes first.
    """
    max_len = layout.n_parties if max_len is None else max_len

    def rec(h: History):
        yield h
        if len(h) == max_len:
            return
        for l in layout.parties:
            if l in h.acted:
                continue
            for a in range(layout.alphabets[l - 1]):
                yield from rec(h.extend(l, a, x[l - 1]))

    yield from rec(EMPTY)


def history_contents(layout: SpaceLayout, x: Sequence, size: int) -> Iterator[History]:
    """One representative (parties ascending) per unordered history of ``size`` events."""
    for parties in itertools.combinations(layout.parties, size):
        for outcomes in itertools.product(*(range(layout.alphabets[l - 1]) for l in parties)):
            yield History(tuple(Event(l, a, x[l - 1]) for l, a in zip(parties, outcomes)))


def rf_index(layout: SpaceLayout, history: History | frozenset) -> tuple:
    """Index into the ``(r_1..r_N, f_1..f_N)`` axes selecting ``pi^H_rf``."""
    content = history.content if isinstance(history, History) else history
    outcome = {e.party: e.outcome for e in content}
    r_idx = tuple(outcome.get(l, slice(None)) for l in layout.parties)
    f_idx = tuple(1 if l in outcome else 0 for l in layout.parties)
    return r_idx + f_idx


def history_projector(layout: SpaceLayout, history: History) -> tz.COperator:
    """``pi^H_rf`` as a dense (diagonal) operator on ``H_r (x) H_f``."""
    check_history(layout, history)
    rf_dims = layout.dims[2:]
    mask = np.zeros(rf_dims, dtype=bool)
    mask[rf_index(layout, history)] = True
    return np.diag(mask.reshape(-1).astype(complex))


@dataclass(frozen=True)
class OutcomeDistribution:
    """``p(a|x)`` for one setting vector; ``probs`` has shape ``alphabets``."""

    x: tuple
    probs: np.ndarray

    def __getitem__(self, outcome: Sequence[int]) -> float:
        return float(self.probs[tuple(outcome)])

    def items(self):
        for a in itertools.product(*(range(k) for k in self.probs.shape)):
            yield a, float(self.probs[a])

    def total(self) -> float:
        return float(self.probs.sum())

    def max_deviation(self, other: "OutcomeDistribution") -> float:
        return float(np.max(np.abs(self.probs - other.probs)))


PSI, PHI, PSI_BAR, PHI_BAR = "psi", "phi", "psi_bar", "phi_bar"


@dataclass(frozen=True)
class ProjectedState:
    """An un-normalised history-projected state with its ``(l, t, H, kind)`` tag."""

    state: np.ndarray
    party: int
    step: int
    history: History
    kind: str

    @property
    def norm2(self) -> float:
        return tz.norm2(self.state)


class ProtocolRun:
    """Forward pass of one protocol at one setting vector, with cached slices."""

    def __init__(self, spec: ProtocolSpec, x: Sequence):
        self.spec = spec
        self.x = spec.check_settings(x)
        self.layout = spec.layout
        t = to_tensor(initial_state(self.layout), self.layout)
        self.pre: list[np.ndarray | None] = [None]
        for step in range(1, spec.T + 1):
            t = apply_U_tensor(spec, step, t)
            self.pre.append(t)
            t = apply_V_tensor(spec, self.x, t)
        self.final = t
        self._weights: dict = {}
        self._fired: dict = {}

    # -- bookkeeping --------------------------------------------------------

    def _check(self, party: int, step: int, history: History) -> None:
        if not 1 <= step <= self.spec.T:
            raise PreconditionError(f"step {step} outside 1..{self.spec.T}")
        if not 0 <= party <= self.layout.n_parties:
            raise PreconditionError(f"party {party} outside 0..{self.layout.n_parties}")
        check_history(self.layout, history, self.x)

    def _weight_table(self, party: int, step: int) -> np.ndarray:
        key = (party, step)
        w = self._weights.get(key)
        if w is None:
            branch = self.pre[step][:, party]
            w = np.sum(np.abs(branch) ** 2, axis=(0, branch.ndim - 1))
            self._weights[key] = w
        return w

    def _masked_branch(self, party: int, step: int, history: History) -> np.ndarray:
        """``pre[step]`` restricted to control ``party`` and ``pi^H``, keeping the control axis."""
        src = self.pre[step]
        index = (slice(None), slice(party, party + 1)) + rf_index(self.layout, history)
        out = np.zeros_like(src[:, party : party + 1])
        sub = (slice(None), slice(None)) + rf_index(self.layout, history)
        out[sub] = src[index]
        return out

    def _fired_branch(self, party: int, step: int, parent: History) -> np.ndarray:
        key = (party, step, parent.content)
        fired = self._fired.get(key)
        if fired is None:
            lay = self.layout
            v = self.spec.measurement(party, self.x[party - 1])
            fired = fire_party(self._masked_branch(party, step, parent), v, 0, lay.r_axis(party), lay.f_axis(party))
            self._fired[key] = fired
        return fired

    def _embed_branch(self, party: int, branch: np.ndarray) -> np.ndarray:
        full = np.zeros_like(self.final)
        full[:, party : party + 1] = branch
        return full

    # -- norms ----------------------------------------------------------------

    def psi_norm2(self, party: int, step: int, history: History) -> float:
        w = self._weight_table(party, step)
        return float(np.sum(w[rf_index(self.layout, history)]))

    def phi_norm2(self, party: int, step: int, history: History) -> float:
        if party == 0:
            return self.psi_norm2(0, step, history)
        parent, outcome = self._split(party, history)
        fired = self._fired_branch(party, step, parent)
        index = [slice(None)] * fired.ndim
        index[self.layout.r_axis(party)] = outcome
        return float(np.sum(np.abs(fired[tuple(index)]) ** 2))

    def _split(self, party: int, history: History) -> tuple[History, int]:
        if len(history) == 0 or party not in history.acted:
            raise HistoryError(f"history {history!r} does not contain party {party}")
        outcome = history.outcome_of(party)
        parent = History(tuple(e for e in history if e.party != party))
        return parent, outcome

    # -- states -----------------------------------------------------------------

    def psi(self, party: int, step: int, history: History) -> ProjectedState:
        self._check(party, step, history)
        if party != 0 and party in history.acted:
            raise PreconditionError(f"party {party} already acted in {history!r}")
        vec = self._embed_branch(party, self._masked_branch(party, step, history))
        return ProjectedState(vec.reshape(-1), party, step, history, PSI)

    def phi(self, party: int, step: int, history: History) -> ProjectedState:
        self._check(party, step, history)
        if party == 0:
            ps = self.psi(0, step, history)
            return ProjectedState(ps.state, 0, step, history, PHI)
        if len(history) == 0 or history.last.party != party:
            raise HistoryError(f"last entry of {history!r} does not name party {party}")
        parent, outcome = self._split(party, history)
        fired = self._fired_branch(party, step, parent).copy()
        index = [slice(None)] * fired.ndim
        keep = np.zeros(self.layout.alphabets[party - 1], dtype=bool)
        keep[outcome] = True
        index[self.layout.r_axis(party)] = ~keep
        fired[tuple(index)] = 0
        return ProjectedState(self._embed_branch(party, fired).reshape(-1), party, step, history, PHI)

    def evolve_to_end(self, ps: ProjectedState) -> ProjectedState:
        barred = {PSI: PSI_BAR, PHI: PHI_BAR}
        if ps.kind not in barred:
            raise PreconditionError(f"cannot evolve a state of kind {ps.kind!r}")
        states = self.evolve_batch(ps.state[:, None], ps.step, ps.kind)
        return ProjectedState(states[:, 0], ps.party, ps.step, ps.history, barred[ps.kind])

    def evolve_batch(self, states: np.ndarray, step: int, kind: str) -> np.ndarray:
        """Evolve columns of ``states`` (taken at ``step``) to the end of the protocol.

        ``psi`` states still have the step's ``V`` ahead of them; ``phi``
        states already went through it.
        """
        t = to_tensor(states, self.layout)
        if kind == PSI:
            t = apply_V_tensor(self.spec, self.x, t)
        for s in range(step + 1, self.spec.T + 1):
            t = apply_U_tensor(self.spec, s, t)
            t = apply_V_tensor(self.spec, self.x, t)
        return from_tensor(t, self.layout, batched=True)

    # -- outputs ----------------------------------------------------------------

    def leak(self) -> float:
        return max(0.0, 1.0 - all_flags_raised_weight(self.layout, self.final))

    def distribution(self) -> OutcomeDistribution:
        n = self.layout.n_parties
        axes = (0, 1) + tuple(range(2 + n, 2 + 2 * n)) + (self.final.ndim - 1,)
        probs = np.sum(np.abs(self.final) ** 2, axis=axes)
        return OutcomeDistribution(self.x, probs)


def _run(spec, x, run):
    if run is None:
        return ProtocolRun(spec, x)
    if run.spec is not spec or run.x != tuple(x):
        raise PreconditionError("cached run belongs to a different protocol or setting vector")
    return run


def total_unitary(spec: ProtocolSpec, x: Sequence) -> tz.COperator:
    """Dense ``V U_T ... V U_1``; only for layouts up to ``tensor.MAX_DENSE_DIM``."""
    x = spec.check_settings(x)
    lay = spec.layout
    if lay.dim > tz.MAX_DENSE_DIM:
        raise CapacityError(f"dense total unitary of dimension {lay.dim} exceeds {tz.MAX_DENSE_DIM}")
    t = to_tensor(np.eye(lay.dim, dtype=complex), lay)
    for step in range(1, spec.T + 1):
        t = apply_U_tensor(spec, step, t)
        t = apply_V_tensor(spec, x, t)
    return from_tensor(t, lay, batched=True)


def quantum_distribution(
    spec: ProtocolSpec, x: Sequence, *, check: bool = True, run: ProtocolRun | None = None
) -> OutcomeDistribution:
    """Born-rule probabilities of the result registers at the end of the protocol.

    With ``check`` set, a protocol whose final state leaks outside the
    all-flags-raised subspace by more than ``LEAK_TOL`` is refused.
    """
    run = _run(spec, x, run)
    if check:
        leak = run.leak()
        if leak > LEAK_TOL:
            raise InvalidProtocolError(
                f"protocol is not valid at x={tuple(x)}: weight {leak:.3e} outside the all-flags-raised subspace",
                leak,
            )
    return run.distribution()


def psi_state(spec, x, party: int, step: int, history: History, run: ProtocolRun | None = None) -> ProjectedState:
    return _run(spec, x, run).psi(party, step, history)


def phi_state(spec, x, party: int, step: int, history: History, run: ProtocolRun | None = None) -> ProjectedState:
    return _run(spec, x, run).phi(party, step, history)


def evolve_to_end(spec, x, ps: ProjectedState, run: ProtocolRun | None = None) -> ProjectedState:
    return _run(spec, x, run).evolve_to_end(ps)
