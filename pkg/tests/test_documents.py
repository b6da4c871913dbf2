from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcausal import documents as docs
from qcausal import named_gates as ng
from qcausal.equivalence import random_circuit, simulate_circuit, switch_circuit
from qcausal.execution import quantum_distribution
from qcausal.extraction import causal_distribution, extract_causal_model
from qcausal.fixtures import random_protocol
from qcausal.polytope import Scenario, family_vector


def test_switch_round_trip_is_byte_identical(switch):
    text = docs.dumps(docs.protocol_to_document(switch))
    spec = docs.parse_protocol(text)
    assert docs.dumps(docs.protocol_to_document(spec)) == text
    for a, b in zip(spec.steps, switch.steps):
        np.testing.assert_array_equal(a, b)
    assert quantum_distribution(spec, (0, 1, 1))[(0, 0, 0)] == pytest.approx(5 / 16, abs=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_random_round_trip_is_exact(seed):
    spec = random_protocol(seed, n_parties=2, d_s=2, T=2)
    text = docs.dumps(docs.protocol_to_document(spec))
    again = docs.parse_protocol(json.loads(text))
    for a, b in zip(again.steps, spec.steps):
        np.testing.assert_array_equal(a, b)
    assert docs.dumps(docs.protocol_to_document(again)) == text


def test_negative_zero_survives():
    m = np.array([[complex(-0.0, 1.0), 0], [0, complex(1.0, -0.0)]])
    back = docs.to_matrix(docs.from_matrix(m))
    assert np.signbit(back[0, 0].real) and np.signbit(back[1, 1].imag)


def named(gate, **kw):
    return docs.NamedGate(gate=gate, **kw).expand()


def test_named_gates_expand():
    np.testing.assert_array_equal(named("X"), ng.X)
    np.testing.assert_array_equal(named("identity", dim=3), np.eye(3))
    np.testing.assert_array_equal(named("permutation", perm=[1, 2, 0]), ng.permutation([1, 2, 0]))
    np.testing.assert_array_equal(named("level_swap", dim=3, levels=(0, 2)), ng.level_swap(3, 0, 2))
    np.testing.assert_array_equal(named("control_permutation", d_s=2, perm=[0, 2, 1]), ng.control_permutation(2, [0, 2, 1]))
    np.testing.assert_array_equal(named("fourier_readout", d_s=4), ng.fourier_readout(4))
    np.testing.assert_array_equal(named("computational_readout", d_s=2), ng.CNOT)
    np.testing.assert_array_equal(named("kron", factors=[{"gate": "X"}, {"gate": "identity", "dim": 2}]), np.kron(ng.X, np.eye(2)))
    # product lists factors in the order they act: H then X gives X @ H
    np.testing.assert_allclose(named("product", factors=[{"gate": "H"}, {"gate": "X"}]), ng.X @ ng.H)
    np.testing.assert_array_equal(named("controlled_system", factors=[{"gate": "identity", "dim": 2}, {"gate": "X"}]), ng.controlled_system([np.eye(2), ng.X]))
    with pytest.raises(ValueError, match="needs"):
        named("identity")


def minimal_protocol():
    return {
        "d_s": 2,
        "n_parties": 1,
        "alphabets": [2],
        "settings": [[0]],
        "T": 1,
        "steps": [{"gate": "kron", "factors": [{"gate": "identity", "dim": 2}, {"gate": "X"}]}],
        "measurements": [[{"setting": 0, "unitary": {"gate": "CNOT"}}]],
    }


def test_named_gate_protocol_parses():
    spec = docs.parse_protocol(minimal_protocol())
    assert spec.T == 1 and spec.layout.flag_dim == 2
    assert quantum_distribution(spec, (0,)).probs.tolist() == [1.0, 0.0]


@pytest.mark.parametrize(
    "mutate, where",
    [
        (lambda d: d.update(T=2), "T=2 but 1 step"),
        (lambda d: d.update(extra=1), "extra"),
        (lambda d: d.update(alphabets=[2, 2]), "alphabets has 2 entries"),
        (lambda d: d["steps"].__setitem__(0, [[[1, 0]]]), "protocol document"),
        (lambda d: d["measurements"][0].append({"setting": 0, "unitary": {"gate": "CNOT"}}), "measurements.0.1.setting"),
        (lambda d: d["steps"].__setitem__(0, {"gate": "nope"}), "steps.0"),
        (lambda d: d.update(format="other/1"), "format"),
    ],
)
def test_protocol_errors_carry_location(mutate, where):
    d = minimal_protocol()
    mutate(d)
    with pytest.raises(docs.DocumentError, match=where.replace(".", r"\.")):
        docs.parse_protocol(d)


def test_bad_json_and_structure_errors():
    with pytest.raises(docs.DocumentError, match="line 1"):
        docs.parse_protocol("{not json")
    d = minimal_protocol()
    d["n_parties"] = 2
    d["alphabets"] = [2, 2]
    d["settings"] = [[0], [0]]
    d["measurements"] = [d["measurements"][0]] * 2
    with pytest.raises(docs.DocumentError, match="T >= N"):
        docs.parse_protocol(d)


def test_circuit_round_trip():
    circ = switch_circuit()
    text = docs.dumps(docs.circuit_to_document(circ))
    again = docs.parse_circuit(text)
    assert docs.dumps(docs.circuit_to_document(again)) == text
    np.testing.assert_array_equal(simulate_circuit(again, (0, 1, 1))[0].probs, simulate_circuit(circ, (0, 1, 1))[0].probs)


def test_circuit_errors():
    d = docs.circuit_to_document(random_circuit(0))
    d["elements"].append({"lab": 1, "factors": ["s"]})
    d["elements"][-1]["unitary"] = {"gate": "X"}
    with pytest.raises(docs.DocumentError, match="elements.9"):
        docs.parse_circuit(d)
    d = docs.circuit_to_document(random_circuit(0))
    d["elements"][0]["factors"] = ["q"]
    with pytest.raises(docs.DocumentError, match="unknown factors"):
        docs.parse_circuit(d)


def test_distribution_round_trip(switch):
    scen = Scenario((2, 2, 2), switch.settings)
    dists = {x: quantum_distribution(switch, x) for x in switch.setting_vectors()}
    doc = docs.distribution_to_document(scen, dists)
    scen2, p = docs.parse_distribution(docs.dumps(doc))
    assert scen2 == scen
    np.testing.assert_array_equal(p, family_vector(scen, dists))


def test_distribution_errors():
    scen = Scenario((2, 2), ((0, 1), (0, 1)))
    doc = docs.distribution_to_document(scen, {x: np.full((2, 2), 0.25) for x in scen.setting_vectors()})
    missing = dict(doc, entries=doc["entries"][:3])
    with pytest.raises(docs.DocumentError, match="missing setting vectors"):
        docs.parse_distribution(missing)
    dup = dict(doc, entries=doc["entries"] + doc["entries"][:1])
    with pytest.raises(docs.DocumentError, match="duplicate"):
        docs.parse_distribution(dup)
    bad = json.loads(json.dumps(doc))
    bad["entries"][1]["probs"] = [0.5, 0.5]
    with pytest.raises(docs.DocumentError, match=r"entries\.1\.probs"):
        docs.parse_distribution(bad)
    bad = json.loads(json.dumps(doc))
    bad["entries"][2]["x"] = [0, 7]
    with pytest.raises(docs.DocumentError, match=r"entries\.2\.x"):
        docs.parse_distribution(bad)


def test_model_round_trip(switch):
    model = extract_causal_model(switch, (0, 1, 1))
    text = docs.dumps(docs.model_to_document(model))
    again = docs.parse_model(text)
    assert docs.dumps(docs.model_to_document(again)) == text
    assert again.placeholders == model.placeholders
    assert causal_distribution(again)[(0, 0, 0)] == pytest.approx(5 / 16, abs=1e-12)
