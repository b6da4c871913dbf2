"""JSON document formats for protocols, circuits, distributions and extracted models.

Complex matrices are nested lists of ``[re, im]`` pairs.  A matrix may also
be a named gate (``{"gate": "CNOT"}``, ``{"gate": "kron", "factors": [...]}``,
...), which is expanded once at parse time; serialised documents always
contain explicit matrices.  Numbers parse to the nearest double, so dyadic
rationals are exact and writing a parsed document back reproduces it bit
for bit.
"""

from __future__ import annotations

import json
from typing import Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import named_gates as ng
from .equivalence import IndividualGateCircuit, LabGate, UnitaryElement
from .errors import QCausalError, StructureError
from .execution import Event, History
from .extraction import CausalModel
from .polytope import Scenario, family_vector
from .protocol import ProtocolSpec, SpaceLayout

PARSE_MODE = "nearest-double"
PROTOCOL_FORMAT = "qcausal-protocol/1"
CIRCUIT_FORMAT = "qcausal-circuit/1"
DISTRIBUTION_FORMAT = "qcausal-distribution/1"
MODEL_FORMAT = "qcausal-causal-model/1"

Scalar = Union[int, str]


class DocumentError(QCausalError):
    """A document failed to parse or validate; ``str()`` carries the location."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NamedGate(_Strict):
    gate: Literal[
        "identity",
        "X",
        "H",
        "CNOT",
        "SWAP",
        "permutation",
        "control_permutation",
        "level_swap",
        "controlled_system",
        "computational_readout",
        "fourier_readout",
        "kron",
        "product",
    ]
    dim: int | None = None
    d_s: int | None = None
    perm: list[int] | None = None
    levels: tuple[int, int] | None = None
    alphabet: int | None = None
    sub_dim: int | None = None
    factors: list["MatrixSpec"] | None = None

    def expand(self) -> np.ndarray:
        g = self.gate

        def need(*names):
            missing = [n for n in names if getattr(self, n) is None]
            if missing:
                raise ValueError(f"gate {g!r} needs {missing}")

        if g in ("X", "H", "CNOT", "SWAP"):
            return getattr(ng, g).copy()
        if g == "identity":
            need("dim")
            return ng.identity(self.dim)
        if g == "permutation":
            need("perm")
            return ng.permutation(self.perm)
        if g == "control_permutation":
            need("d_s", "perm")
            return ng.control_permutation(self.d_s, self.perm)
        if g == "level_swap":
            need("dim", "levels")
            return ng.level_swap(self.dim, *self.levels)
        if g == "computational_readout":
            need("d_s")
            return ng.computational_readout(self.d_s, self.alphabet or 2, self.sub_dim or 2)
        if g == "fourier_readout":
            need("d_s")
            return ng.fourier_readout(self.d_s)
        need("factors")
        mats = [to_matrix(f) for f in self.factors]
        if g == "controlled_system":
            return ng.controlled_system(mats)
        if g == "kron":
            out = np.ones((1, 1), dtype=complex)
            for m in mats:
                out = np.kron(out, m)
            return out
        # product: factors listed in the order they act
        out = np.eye(mats[0].shape[0], dtype=complex)
        for m in mats:
            out = m @ out
        return out


MatrixSpec = Union[list[list[tuple[float, float]]], NamedGate]
NamedGate.model_rebuild()


def to_matrix(m: MatrixSpec) -> np.ndarray:
    if isinstance(m, NamedGate):
        return m.expand()
    arr = np.array(m, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"matrix must be a square array of [re, im] pairs, got shape {arr.shape}")
    out = np.empty(arr.shape[:2], dtype=complex)
    out.real = arr[..., 0]
    out.imag = arr[..., 1]
    return out


def from_matrix(m: np.ndarray) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


class SettingUnitary(_Strict):
    setting: Scalar
    unitary: MatrixSpec


class ProtocolDocument(_Strict):
    format: Literal["qcausal-protocol/1"] = PROTOCOL_FORMAT
    d_s: int = Field(ge=1)
    n_parties: int = Field(ge=1)
    alphabets: list[int]
    settings: list[list[Scalar]]
    T: int = Field(ge=1)
    flag_dim: int | None = None
    steps: list[MatrixSpec]
    measurements: list[list[SettingUnitary]]
    notes: str = ""

    @model_validator(mode="after")
    def _counts(self):
        if len(self.steps) != self.T:
            raise ValueError(f"T={self.T} but {len(self.steps)} step unitaries are listed")
        for name in ("alphabets", "settings", "measurements"):
            if len(getattr(self, name)) != self.n_parties:
                raise ValueError(f"{name} has {len(getattr(self, name))} entries for {self.n_parties} parties")
        return self


class ElementDoc(_Strict):
    factors: list[str] | None = None
    unitary: MatrixSpec | None = None
    lab: int | None = None

    @model_validator(mode="after")
    def _one_kind(self):
        is_lab = self.lab is not None
        is_unitary = self.unitary is not None
        if is_lab == is_unitary:
            raise ValueError("an element is either {'lab': party} or {'factors': [...], 'unitary': matrix}")
        if is_unitary and not self.factors:
            raise ValueError("a unitary element needs a non-empty 'factors' list")
        return self


class CircuitDocument(_Strict):
    format: Literal["qcausal-circuit/1"] = CIRCUIT_FORMAT
    d_s: int = Field(ge=1)
    alphabets: list[int]
    settings: list[list[Scalar]]
    measurements: list[list[SettingUnitary]]
    elements: list[ElementDoc]
    notes: str = ""


class DistributionEntry(_Strict):
    x: list[Scalar]
    probs: list


class DistributionDocument(_Strict):
    format: Literal["qcausal-distribution/1"] = DISTRIBUTION_FORMAT
    alphabets: list[int]
    settings: list[list[Scalar]]
    entries: list[DistributionEntry]


def _location(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<document>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def _parse(model: type[BaseModel], data: Any, what: str):
    if isinstance(data, (str, bytes)):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise DocumentError(f"{what}: not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from exc
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        raise DocumentError(f"{what}: {_location(exc)}") from exc


def _measurement_tables(doc_meas: list[list[SettingUnitary]], where: str) -> list[dict]:
    tables = []
    for l, rows in enumerate(doc_meas, start=1):
        table = {}
        for i, row in enumerate(rows):
            if row.setting in table:
                raise DocumentError(f"{where}.{l - 1}.{i}.setting: duplicate setting {row.setting!r}")
            try:
                table[row.setting] = to_matrix(row.unitary)
            except ValueError as exc:
                raise DocumentError(f"{where}.{l - 1}.{i}.unitary: {exc}") from exc
        tables.append(table)
    return tables


def parse_protocol(data: Any) -> ProtocolSpec:
    """Parse a protocol document (JSON text or decoded object) into a validated spec."""
    doc = _parse(ProtocolDocument, data, "protocol document")
    steps = []
    for t, m in enumerate(doc.steps):
        try:
            steps.append(to_matrix(m))
        except ValueError as exc:
            raise DocumentError(f"protocol document: steps.{t}: {exc}") from exc
    meas = _measurement_tables(doc.measurements, "protocol document: measurements")
    flag_dim = doc.flag_dim if doc.flag_dim is not None else doc.T + 1
    try:
        layout = SpaceLayout(doc.d_s, doc.n_parties, tuple(doc.alphabets), flag_dim)
        return ProtocolSpec(layout, tuple(steps), tuple(meas), tuple(tuple(s) for s in doc.settings), doc.notes)
    except StructureError as exc:
        raise DocumentError(f"protocol document: {exc}") from exc


def protocol_to_document(spec: ProtocolSpec) -> dict:
    lay = spec.layout
    return {
        "format": PROTOCOL_FORMAT,
        "d_s": lay.d_s,
        "n_parties": lay.n_parties,
        "alphabets": list(lay.alphabets),
        "settings": [list(d) for d in spec.settings],
        "T": spec.T,
        "flag_dim": lay.flag_dim,
        "steps": [from_matrix(u) for u in spec.steps],
        "measurements": [
            [{"setting": x, "unitary": from_matrix(table[x])} for x in dom]
            for dom, table in zip(spec.settings, spec.measurements)
        ],
        "notes": spec.notes,
    }


def parse_circuit(data: Any) -> IndividualGateCircuit:
    doc = _parse(CircuitDocument, data, "circuit document")
    meas = _measurement_tables(doc.measurements, "circuit document: measurements")
    elements = []
    for i, el in enumerate(doc.elements):
        if el.lab is not None:
            elements.append(LabGate(el.lab))
            continue
        try:
            elements.append(UnitaryElement(tuple(el.factors), to_matrix(el.unitary)))
        except ValueError as exc:
            raise DocumentError(f"circuit document: elements.{i}.unitary: {exc}") from exc
    try:
        return IndividualGateCircuit(
            doc.d_s, tuple(doc.alphabets), tuple(meas), tuple(tuple(s) for s in doc.settings), tuple(elements), doc.notes
        )
    except StructureError as exc:
        raise DocumentError(f"circuit document: {exc}") from exc


def circuit_to_document(circuit: IndividualGateCircuit) -> dict:
    elements = []
    for el in circuit.elements:
        if isinstance(el, LabGate):
            elements.append({"lab": el.party})
        else:
            elements.append({"factors": list(el.factors), "unitary": from_matrix(el.matrix)})
    return {
        "format": CIRCUIT_FORMAT,
        "d_s": circuit.d_s,
        "alphabets": list(circuit.alphabets),
        "settings": [list(d) for d in circuit.settings],
        "measurements": [
            [{"setting": x, "unitary": from_matrix(table[x])} for x in dom]
            for dom, table in zip(circuit.settings, circuit.measurements)
        ],
        "elements": elements,
        "notes": circuit.notes,
    }


def parse_distribution(data: Any) -> tuple[Scenario, np.ndarray]:
    """Return the scenario and the flat family vector (settings outermost)."""
    doc = _parse(DistributionDocument, data, "distribution document")
    try:
        scenario = Scenario(tuple(doc.alphabets), tuple(tuple(s) for s in doc.settings))
    except QCausalError as exc:
        raise DocumentError(f"distribution document: {exc}") from exc
    table = {}
    for i, e in enumerate(doc.entries):
        x = tuple(e.x)
        if len(x) != scenario.n_parties or any(v not in dom for v, dom in zip(x, scenario.settings)):
            raise DocumentError(f"distribution document: entries.{i}.x: {list(x)} is not a setting vector of the scenario")
        probs = np.array(e.probs, dtype=float)
        if probs.shape != scenario.alphabets:
            raise DocumentError(f"distribution document: entries.{i}.probs: shape {probs.shape}, expected {scenario.alphabets}")
        if x in table:
            raise DocumentError(f"distribution document: entries.{i}.x: duplicate setting vector {list(x)}")
        table[x] = probs
    missing = [list(x) for x in scenario.setting_vectors() if tuple(x) not in table]
    if missing:
        raise DocumentError(f"distribution document: entries: missing setting vectors {missing}")
    return scenario, family_vector(scenario, table)


def distribution_to_document(scenario: Scenario, dists: dict) -> dict:
    entries = []
    for x in scenario.setting_vectors():
        probs = np.asarray(getattr(dists[tuple(x)], "probs", dists[tuple(x)]), dtype=float)
        entries.append({"x": list(x), "probs": probs.tolist()})
    return {
        "format": DISTRIBUTION_FORMAT,
        "alphabets": list(scenario.alphabets),
        "settings": [list(d) for d in scenario.settings],
        "entries": entries,
    }


def _history_doc(h: History) -> list:
    return [[e.party, e.outcome, e.setting] for e in h]


def model_to_document(model: CausalModel) -> dict:
    nxt = []
    for h, row in model.next_tables.items():
        nxt.append(
            {
                "history": _history_doc(h),
                "probs": {str(l): p for l, p in sorted(row.items())},
                "placeholder": ("next", h) in model.placeholders,
            }
        )
    res = []
    for (h, l), row in model.result_tables.items():
        res.append(
            {
                "history": _history_doc(h),
                "party": l,
                "probs": [float(p) for p in row],
                "placeholder": ("result", h, l) in model.placeholders,
            }
        )
    return {
        "format": MODEL_FORMAT,
        "x": list(model.x),
        "alphabets": list(model.alphabets),
        "next": nxt,
        "result": res,
    }


class _NextRow(_Strict):
    history: list[tuple[int, int, Scalar]]
    probs: dict[str, float]
    placeholder: bool = False


class _ResultRow(_Strict):
    history: list[tuple[int, int, Scalar]]
    party: int
    probs: list[float]
    placeholder: bool = False


class CausalModelDocument(_Strict):
    format: Literal["qcausal-causal-model/1"] = MODEL_FORMAT
    x: list[Scalar]
    alphabets: list[int]
    next: list[_NextRow]
    result: list[_ResultRow]


def parse_model(data: Any) -> CausalModel:
    """Rebuild a :class:`CausalModel` so it can be re-checked without simulation."""
    doc = _parse(CausalModelDocument, data, "causal-model document")
    model = CausalModel(tuple(doc.x), tuple(doc.alphabets))
    for row in doc.next:
        h = History(tuple(Event(*e) for e in row.history))
        model.next_tables[h] = {int(k): v for k, v in row.probs.items()}
        if row.placeholder:
            model.placeholders.add(("next", h))
    for row in doc.result:
        h = History(tuple(Event(*e) for e in row.history))
        model.result_tables[(h, row.party)] = np.array(row.probs)
        if row.placeholder:
            model.placeholders.add(("result", h, row.party))
    return model


def dumps(doc: dict) -> str:
    """Deterministic JSON text (sorted keys, shortest round-trip floats)."""
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"
