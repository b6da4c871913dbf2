"""Individual controlled lab gates and their equivalence with the single-control ``V``.

Three auxiliary layouts are used:

* individual: ``q, s, r_1..r_N, f_1..f_N`` with a qubit ``q`` controlling one lab,
* single-from-V: ``q, s, c, r.., f..`` (an individual gate built from ``V``),
* V-from-singles: ``q_1..q_N, s, c, r.., f..`` (``V`` built from a ladder).

Each construction has a matrix-free ``apply_*`` form, a dense builder for
small layouts, and a sparse builder assembled independently from embedded
Kronecker blocks.  Sector checks use the sparse forms, which stay small
where the dense operators would not fit.

Individual-gate circuits act on ``s, q_1..q_N`` plus results and flags.
:func:`rewrite_circuit` turns such a circuit into a :class:`ProtocolSpec`.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import named_gates as ng
from . import tensor as tz
from .errors import CapacityError, StructureError
from .execution import OutcomeDistribution
from .protocol import LEAK_TOL, ProtocolSpec, apply_V_tensor, fire_party, flag_shift, make_spec

log = logging.getLogger(__name__)


def control_prep_matrix(d_c: int, party: int) -> np.ndarray:
    """``W_l``: the two-level permutation exchanging ``|0>`` and ``|l>``."""
    return ng.control_prep(d_c, party)


def _qubit_controlled(t: np.ndarray, ctrl: int, fn) -> np.ndarray:
    return tz.apply_controlled(t, ctrl, 1, fn)


# -- individual gate --------------------------------------------------------------


def individual_dims(spec: ProtocolSpec) -> tuple[int, ...]:
    lay = spec.layout
    return (2, lay.d_s) + lay.alphabets + (lay.flag_dim,) * lay.n_parties


def apply_individual(spec: ProtocolSpec, party: int, setting, t: np.ndarray) -> np.ndarray:
    """Fire ``party`` on the branch where the leading qubit is ``|1>``."""
    n = spec.n_parties
    v = spec.measurement(party, setting)
    return _qubit_controlled(t, 0, lambda b: fire_party(b, v, 1, 1 + party, 1 + n + party))


def individual_gate(spec: ProtocolSpec, party: int, setting) -> tz.COperator:
    """Dense ``|0><0|_q (x) I + |1><1|_q (x) V_(s,r_l)(x_l) (x) Gamma_(f_l)``."""
    dims = individual_dims(spec)
    return _dense(dims, lambda t: apply_individual(spec, party, setting, t))


# -- individual gate from V ------------------------------------------------------


def single_from_v_dims(spec: ProtocolSpec) -> tuple[int, ...]:
    lay = spec.layout
    return (2,) + lay.dims


def apply_individual_from_V(spec: ProtocolSpec, party: int, x: Sequence, t: np.ndarray) -> np.ndarray:
    """Controlled-``W_l``, then ``V``, then controlled-``W_l^dag``, on ``q, s, c, r, f``."""
    w = control_prep_matrix(spec.layout.d_c, party)
    t = _qubit_controlled(t, 0, lambda b: tz.apply_local(b, w, [2]))
    t = apply_V_tensor(spec, x, t, offset=1)
    return _qubit_controlled(t, 0, lambda b: tz.apply_local(b, w.conj().T, [2]))


def individual_from_V(spec: ProtocolSpec, party: int, x: Sequence) -> tz.COperator:
    x = spec.check_settings(x)
    return _dense(single_from_v_dims(spec), lambda t: apply_individual_from_V(spec, party, x, t))


# -- V from individual gates -----------------------------------------------------


def ladder_dims(spec: ProtocolSpec) -> tuple[int, ...]:
    return (2,) * spec.n_parties + spec.layout.dims


def apply_V_from_individuals(spec: ProtocolSpec, x: Sequence, t: np.ndarray) -> np.ndarray:
    """For each party: flip ancilla ``l`` when the control reads ``|l>``, fire lab ``l`` on it, unflip.

    (The sparse builder instead does all flips, all gates, then all unflips;
    the two orderings agree because the flips commute with the other parties' gates.)
    """
    n = spec.n_parties
    s_ax, c_ax = n, n + 1
    for l in range(1, n + 1):
        v = spec.measurement(l, x[l - 1])
        r_ax, f_ax = n + 1 + l, 2 * n + 1 + l

        def flip(b, a=l - 1):
            return tz.apply_local(b, ng.X, [a])

        t = tz.apply_controlled(t, c_ax, l, flip)
        t = tz.apply_controlled(t, l - 1, 1, lambda b, v=v, r=r_ax, f=f_ax: fire_party(b, v, s_ax, r, f))
        t = tz.apply_controlled(t, c_ax, l, flip)
    return t


def V_from_individuals(spec: ProtocolSpec, x: Sequence) -> tz.COperator:
    x = spec.check_settings(x)
    return _dense(ladder_dims(spec), lambda t: apply_V_from_individuals(spec, x, t))


# -- dense helpers and sector checks ---------------------------------------------


def _dense(dims: tuple[int, ...], apply) -> tz.COperator:
    dim = int(np.prod(dims))
    if dim > tz.MAX_DENSE_DIM:
        raise CapacityError(f"dense operator of dimension {dim} exceeds {tz.MAX_DENSE_DIM}")
    eye = np.eye(dim, dtype=complex).reshape(dims + (dim,))
    return apply(eye).reshape(dim, dim)


def _proj(dim: int, k: int) -> np.ndarray:
    p = np.zeros((dim, dim), dtype=complex)
    p[k, k] = 1.0
    return p


def _controlled_block(d_ctrl: int, level: int, op: np.ndarray) -> np.ndarray:
    """``|level><level| (x) op + (I - |level><level|) (x) I``, control first."""
    p = _proj(d_ctrl, level)
    return np.kron(p, op) + np.kron(np.eye(d_ctrl) - p, np.eye(op.shape[0]))


def _sparse_V(spec: ProtocolSpec, x: Sequence, dims: tuple[int, ...], offset: int):
    lay = spec.layout
    n = lay.n_parties
    gamma = flag_shift(lay.flag_dim)
    total = tz.sparse_embed(_proj(lay.d_c, 0), dims, [offset + 1])
    for l in lay.parties:
        local = tz.kron_all(_proj(lay.d_c, l), spec.measurement(l, x[l - 1]), gamma)
        total = total + tz.sparse_embed(local, dims, [offset + 1, offset, offset + 1 + l, offset + 1 + n + l])
    return total


def _lab_block(spec: ProtocolSpec, party: int, setting) -> np.ndarray:
    return np.kron(spec.measurement(party, setting), flag_shift(spec.layout.flag_dim))


def individual_gate_sparse(spec: ProtocolSpec, party: int, setting):
    """Sparse form of :func:`individual_gate`, assembled from embedded Kronecker blocks."""
    n = spec.n_parties
    block = _controlled_block(2, 1, _lab_block(spec, party, setting))
    return tz.sparse_embed(block, individual_dims(spec), [0, 1, 1 + party, 1 + n + party])


def individual_from_V_sparse(spec: ProtocolSpec, party: int, x: Sequence):
    x = spec.check_settings(x)
    dims = single_from_v_dims(spec)
    cw = tz.sparse_embed(_controlled_block(2, 1, control_prep_matrix(spec.layout.d_c, party)), dims, [0, 2])
    return cw.conj().T @ _sparse_V(spec, x, dims, 1) @ cw


def V_from_individuals_sparse(spec: ProtocolSpec, x: Sequence):
    x = spec.check_settings(x)
    n = spec.n_parties
    dims = ladder_dims(spec)
    flips = None
    for l in range(1, n + 1):
        f = tz.sparse_embed(_controlled_block(spec.layout.d_c, l, ng.X), dims, [n + 1, l - 1])
        flips = f if flips is None else f @ flips
    out = flips
    for l in range(1, n + 1):
        block = _controlled_block(2, 1, _lab_block(spec, l, x[l - 1]))
        out = tz.sparse_embed(block, dims, [l - 1, n, n + 1 + l, 2 * n + 1 + l]) @ out
    return flips @ out


def build_V_sparse(spec: ProtocolSpec, x: Sequence):
    x = spec.check_settings(x)
    return _sparse_V(spec, x, spec.layout.dims, 0)


def _sector_gap(big, small, sector: np.ndarray) -> float:
    """Max entrywise gap between ``big`` restricted to the sector columns and ``small`` placed in the sector.

    Entries of ``big`` leading out of the sector count in full.
    """
    from scipy import sparse

    k = len(sector)
    place = sparse.csr_matrix((np.ones(k), (sector, np.arange(k))), shape=(big.shape[0], k))
    diff = (big.tocsc()[:, sector] - place @ small).tocoo()
    return float(np.max(np.abs(diff.data), initial=0.0))


def individual_sector_deviation(spec: ProtocolSpec, party: int, x: Sequence) -> float:
    """Gap between the ``V``-built individual gate on the ``|0>_c`` sector and the direct gate."""
    x = spec.check_settings(x)
    small_dims = individual_dims(spec)
    digits = list(np.unravel_index(np.arange(int(np.prod(small_dims))), small_dims))
    digits.insert(2, np.zeros_like(digits[0]))
    sector = np.ravel_multi_index(tuple(digits), single_from_v_dims(spec))
    return _sector_gap(individual_from_V_sparse(spec, party, x), individual_gate_sparse(spec, party, x[party - 1]), sector)


def ladder_sector_deviation(spec: ProtocolSpec, x: Sequence) -> float:
    """Gap between the ladder on the all-``|0>`` ancilla sector and ``V``.

    Ancillas are the leading factors, so the sector is the first ``dim`` indices.
    """
    x = spec.check_settings(x)
    return _sector_gap(V_from_individuals_sparse(spec, x), build_V_sparse(spec, x), np.arange(spec.layout.dim))


# -- individual-gate circuits ----------------------------------------------------


@dataclass(frozen=True)
class UnitaryElement:
    """A unitary on the named factors, in the listed order (``"s"``, ``"c1"``, ``"c2"``, ...)."""

    factors: tuple[str, ...]
    matrix: np.ndarray


@dataclass(frozen=True)
class LabGate:
    """Party ``party``'s lab, fired when its control qubit ``c<party>`` is ``|1>``."""

    party: int


Element = Union[UnitaryElement, LabGate]


@dataclass(frozen=True)
class IndividualGateCircuit:
    """A circuit of unitaries and individually controlled lab gates.

    The circuit starts in ``|0>`` on the system and all control qubits.
    ``measurements[l-1][x]`` is party ``l``'s unitary on ``H_s (x) H_{r_l}``.
    """

    d_s: int
    alphabets: tuple[int, ...]
    measurements: tuple[dict, ...]
    settings: tuple[tuple, ...]
    elements: tuple[Element, ...]
    notes: str = ""

    def __post_init__(self):
        n = len(self.alphabets)
        object.__setattr__(self, "alphabets", tuple(int(a) for a in self.alphabets))
        object.__setattr__(self, "settings", tuple(tuple(d) for d in self.settings))
        if len(self.measurements) != n or len(self.settings) != n:
            raise StructureError(f"need measurements and settings for each of the {n} parties")
        dims = self.factor_dims
        elements = []
        for i, el in enumerate(self.elements):
            if isinstance(el, LabGate):
                if not 1 <= el.party <= n:
                    raise StructureError(f"element {i}: lab gate for undeclared party {el.party}")
                elements.append(el)
                continue
            factors = tuple(el.factors)
            unknown = [f for f in factors if f not in dims]
            if unknown:
                raise StructureError(f"element {i}: unknown factors {unknown}; declared {list(dims)}")
            if len(set(factors)) != len(factors):
                raise StructureError(f"element {i}: repeated factor")
            d = int(np.prod([dims[f] for f in factors]))
            m = np.array(el.matrix, dtype=complex)
            if m.shape != (d, d):
                raise StructureError(f"element {i}: matrix shape {m.shape}, expected {(d, d)}")
            err = tz.unitarity_error(m)
            if err > tz.UNITARY_ATOL:
                raise StructureError(f"element {i}: matrix is not unitary (error {err:.3e})")
            m.setflags(write=False)
            elements.append(UnitaryElement(factors, m))
        object.__setattr__(self, "elements", tuple(elements))
        for l in range(1, n + 1):
            if not any(isinstance(e, LabGate) and e.party == l for e in elements):
                raise StructureError(f"party {l} has no lab gate in the circuit")

    @property
    def n_parties(self) -> int:
        return len(self.alphabets)

    @property
    def factor_dims(self) -> dict[str, int]:
        dims = {"s": self.d_s}
        dims.update({f"c{l}": 2 for l in range(1, self.n_parties + 1)})
        return dims

    @property
    def n_lab_gates(self) -> int:
        return sum(isinstance(e, LabGate) for e in self.elements)

    def setting_vectors(self):
        return itertools.product(*self.settings)


def _circuit_axes(circuit: IndividualGateCircuit) -> dict[str, int]:
    axes = {"s": 0}
    axes.update({f"c{l}": l for l in range(1, circuit.n_parties + 1)})
    return axes


def simulate_circuit(circuit: IndividualGateCircuit, x: Sequence) -> tuple[OutcomeDistribution, float]:
    """Direct state-vector simulation of the circuit.

    Returns the result-register distribution and the weight whose flags do
    not all end at exactly 1 (non-zero when a lab can fire twice or never).
    """
    n = circuit.n_parties
    F = circuit.n_lab_gates + 1
    dims = (circuit.d_s,) + (2,) * n + circuit.alphabets + (F,) * n
    t = np.zeros(dims + (1,), dtype=complex)
    t[(0,) * len(dims)] = 1.0
    axes = _circuit_axes(circuit)
    for el in circuit.elements:
        if isinstance(el, LabGate):
            l = el.party
            v = circuit.measurements[l - 1][x[l - 1]]
            t = tz.apply_controlled(t, l, 1, lambda b, v=v, l=l: fire_party(b, v, 0, n + l, 2 * n + l))
        else:
            t = tz.apply_local(t, el.matrix, [axes[f] for f in el.factors])
    flags = [slice(None)] * t.ndim
    for l in range(1, n + 1):
        flags[2 * n + l] = 1
    good = float(np.sum(np.abs(t[tuple(flags)]) ** 2))
    probs = np.sum(np.abs(t) ** 2, axis=(0,) + tuple(range(1, n + 1)) + tuple(range(2 * n + 1, 3 * n + 2)))
    return OutcomeDistribution(tuple(x), probs), max(0.0, 1.0 - good)


def flag_defect(circuit: IndividualGateCircuit) -> float:
    """Worst weight, over setting vectors, whose flags do not all end at exactly 1."""
    return max(simulate_circuit(circuit, x)[1] for x in circuit.setting_vectors())


def rewrite_circuit(circuit: IndividualGateCircuit) -> ProtocolSpec:
    """Map an individual-gate circuit onto the single-control framework.

    The new system is ``s (x) c_1 (x) ... (x) c_N``.  Each lab gate becomes
    one step: the unitaries since the previous lab gate, followed by
    controlled-``W_l`` (from ``c_l`` into the big control), form ``U_t``; the
    matching controlled-``W_l^dag`` opens the next step.  Unitaries after the
    last lab gate are dropped because they cannot change the result
    registers.  A circuit that can fire some lab twice (or never) is still
    rewritten, but logged and marked in the spec notes; the result then
    fails :func:`validate_protocol`.
    """
    n = circuit.n_parties
    d_c = n + 1
    sys_dims = (circuit.d_s,) + (2,) * n
    d_sys = int(np.prod(sys_dims))
    full_dims = sys_dims + (d_c,)
    if d_sys * d_c > tz.MAX_DENSE_DIM:
        raise CapacityError(f"rewritten step unitaries of dimension {d_sys * d_c} exceed {tz.MAX_DENSE_DIM}")
    defect = flag_defect(circuit)
    flagged = defect > LEAK_TOL
    if flagged:
        log.warning("circuit leaves weight %.3e with a lab fired twice or never", defect)

    axes = _circuit_axes(circuit)
    c_ax = n + 1

    def cw(l: int) -> np.ndarray:
        w = control_prep_matrix(d_c, l)
        ctrl = np.zeros((2 * d_c, 2 * d_c), dtype=complex)
        ctrl[:d_c, :d_c] = np.eye(d_c)
        ctrl[d_c:, d_c:] = w
        return tz.embed(ctrl, full_dims, [axes[f"c{l}"], c_ax])

    pending = np.eye(d_sys * d_c, dtype=complex)
    steps = []
    for el in circuit.elements:
        if isinstance(el, LabGate):
            gate = cw(el.party)
            steps.append(gate @ pending)
            pending = gate.conj().T
        else:
            pending = tz.embed(el.matrix, full_dims, [axes[f] for f in el.factors]) @ pending

    meas = []
    for l in range(1, n + 1):
        table = {}
        for xl, v in circuit.measurements[l - 1].items():
            table[xl] = tz.embed(v, sys_dims + (circuit.alphabets[l - 1],), [0, n + 1])
        meas.append(table)
    notes = "rewritten from an individual-gate circuit; system factors s, " + ", ".join(f"c{l}" for l in range(1, n + 1))
    if flagged:
        notes += f"; FLAGGED: weight {defect:.3e} fires a lab twice or never"
    return make_spec(d_sys, circuit.alphabets, steps, meas, circuit.settings, notes=notes)


# -- fixture circuits --------------------------------------------------------------


def _gates_on(dims: tuple[int, ...], gates: Sequence[tuple[np.ndarray, Sequence[int]]]) -> np.ndarray:
    out = np.eye(int(np.prod(dims)), dtype=complex)
    for m, fac in gates:
        out = tz.embed(m, dims, list(fac)) @ out
    return out


def switch_circuit() -> IndividualGateCircuit:
    """The three-party switch written with one control qubit per lab.

    ``c1`` in ``(|0>+|1>)/sqrt2`` decides the order, ``c2`` holds its
    negation; after both rounds the order bit is moved into ``s1`` (after
    shifting ``s1`` into ``s2``) and Charlie is fired unconditionally.
    """
    order = _gates_on((2, 2), [(ng.CNOT, [0, 1]), (ng.X, [1])])
    # factors (s1, s2, c1, c2) with s = (s1, s2) grouped as one factor of dimension 4
    transfer = _gates_on(
        (2, 2, 2, 2),
        [(ng.SWAP, [0, 1]), (ng.SWAP, [0, 3]), (ng.CNOT, [0, 2]), (ng.X, [2])],
    )
    meas = {0: ng.computational_readout(4), 1: ng.fourier_readout(4)}
    elements = (
        UnitaryElement(("c1",), ng.H),
        UnitaryElement(("c1", "c2"), order),
        LabGate(1),
        LabGate(2),
        UnitaryElement(("c1", "c2"), np.kron(ng.X, ng.X)),
        LabGate(1),
        LabGate(2),
        UnitaryElement(("s", "c1", "c2"), transfer),
        UnitaryElement(("c3",), ng.X),
        LabGate(3),
    )
    return IndividualGateCircuit(4, (2, 2, 2), (meas, dict(meas), dict(meas)), ((0, 1),) * 3, elements, "switch")


def random_circuit(seed: int, d_s: int = 2, alphabet: int = 2, n_settings: int = 2) -> IndividualGateCircuit:
    """Seeded two-party circuit with a coherently controlled order.

    ``c1`` is Haar-entangled with the system; the lab gates fire in the
    order A,B on one branch and B,A on the other, with a control-dependent
    system unitary in between and a Haar unitary before the system leaves.
    """
    rng = np.random.default_rng(seed)
    order = _gates_on((2, 2), [(ng.CNOT, [0, 1]), (ng.X, [1])])
    mid = ng.controlled_system([tz.haar_unitary(d_s, rng) for _ in range(2)])
    meas = tuple({x: tz.haar_unitary(d_s * alphabet, rng) for x in range(n_settings)} for _ in range(2))
    elements = (
        UnitaryElement(("s", "c1"), tz.haar_unitary(2 * d_s, rng)),
        UnitaryElement(("c1", "c2"), order),
        LabGate(1),
        LabGate(2),
        UnitaryElement(("s", "c1"), mid),
        UnitaryElement(("c1", "c2"), np.kron(ng.X, ng.X)),
        LabGate(1),
        LabGate(2),
        UnitaryElement(("s",), tz.haar_unitary(d_s, rng)),
    )
    return IndividualGateCircuit(
        d_s, (alphabet, alphabet), meas, (tuple(range(n_settings)),) * 2, elements, f"random circuit, seed {seed}"
    )
