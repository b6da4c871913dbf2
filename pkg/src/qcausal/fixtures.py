"""Ready-made protocols: the quantum switch and seeded random protocols."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import named_gates as ng
from . import tensor as tz
from .protocol import ProtocolSpec, make_spec

ALICE, BOB, CHARLIE = 1, 2, 3

SWITCH_U3_NOTE = (
    "U_3 is fixed on |c in {1,2}>|psi>_s1|0>_s2 by the switch construction; the remaining "
    "basis states are mapped in ascending order onto the unused output basis states "
    "(a permutation matrix)."
)


def switch_u3() -> np.ndarray:
    """Move ``s1`` into ``s2``, record the control branch in ``s1``, set control to ``|3>``.

    Index convention on ``H_s (x) H_c``: ``((s1 * 2 + s2) * 4 + c)``.
    """

    def idx(s1, s2, c):
        return (s1 * 2 + s2) * 4 + c

    mapping = {}
    for a in range(2):
        mapping[idx(a, 0, 1)] = idx(0, a, 3)
        mapping[idx(a, 0, 2)] = idx(1, a, 3)
    free_in = [i for i in range(16) if i not in mapping]
    free_out = sorted(set(range(16)) - set(mapping.values()))
    mapping.update(zip(free_in, free_out))
    return ng.permutation([mapping[i] for i in range(16)])


def build_switch_protocol() -> ProtocolSpec:
    """Three parties; Alice and Bob act in a superposition of orders, Charlie reads the order.

    The system is two qubits ``s1 s2``.  Setting 0 reads ``s1`` in the
    computational basis, setting 1 in the ``|+>, |->`` basis.
    """
    d_s = 4
    prep = np.zeros((4, 4), dtype=complex)
    r = ng.SQRT_HALF
    prep[:, 0] = [0, r, r, 0]
    prep[:, 1] = [0, r, -r, 0]
    prep[:, 2] = [1, 0, 0, 0]
    prep[:, 3] = [0, 0, 0, 1]
    u1 = np.kron(ng.identity(d_s), prep)
    u2 = ng.control_permutation(d_s, [0, 2, 1, 3])
    u3 = switch_u3()
    meas = {0: ng.computational_readout(d_s), 1: ng.fourier_readout(d_s)}
    return make_spec(
        d_s=d_s,
        alphabets=(2, 2, 2),
        steps=[u1, u2, u3],
        measurements=[dict(meas), dict(meas), dict(meas)],
        settings=[(0, 1)] * 3,
        notes=SWITCH_U3_NOTE,
    )


# -- random protocols ----------------------------------------------------------


@dataclass(frozen=True)
class Routing:
    """Control routing skeleton of a random protocol.

    ``start`` lists the control levels ``U_1`` may populate.  For ``t >= 2``
    ``perms[t-2][j]`` permutes the control levels on the part of the system
    selected by projector ``j`` (one or two projectors per step).
    """

    start: tuple[int, ...]
    perms: tuple[tuple[tuple[int, ...], ...], ...]


def _routing_is_valid(n: int, start, perms) -> bool:
    """Every classical path through the routing fires each party exactly once."""
    states = {(c, (0,) * n) for c in start}
    for step in range(len(perms) + 1):
        if step > 0:
            states = {(p[c], counts) for c, counts in states for p in perms[step - 1]}
        fired = set()
        for c, counts in states:
            if c:
                counts = list(counts)
                counts[c - 1] += 1
                if counts[c - 1] > 1:
                    return False
                counts = tuple(counts)
            fired.add((c, counts))
        states = fired
    return all(all(k == 1 for k in counts) for _, counts in states)


def sample_routing(rng: np.random.Generator, n: int, T: int, split_prob: float = 0.4, max_tries: int = 20000) -> Routing:
    levels = n + 1
    for _ in range(max_tries):
        perms = []
        for _t in range(2, T + 1):
            p0 = tuple(int(v) for v in rng.permutation(levels))
            if rng.random() < split_prob:
                p1 = tuple(int(v) for v in rng.permutation(levels))
                perms.append((p0, p1) if p1 != p0 else (p0,))
            else:
                perms.append((p0,))
        start = tuple(c for c in range(levels) if _routing_is_valid(n, (c,), perms))
        if start:
            return Routing(start, tuple(perms))
    raise RuntimeError("no valid routing found")


def random_protocol(
    seed: int,
    n_parties: int | None = None,
    d_s: int | None = None,
    T: int | None = None,
    alphabet: int = 2,
    n_settings: int = 2,
) -> ProtocolSpec:
    """Seeded random protocol built from Haar-random pieces on a valid routing.

    Parameters left as ``None`` are drawn from the seed: ``N in {2, 3}``,
    ``d_s in {2, 3}``, ``T in {N, ..., N+2}``.  ``U_1`` sends ``|0>_s|0>_c`` to
    a Haar-random unit vector on the allowed starting levels; each later
    ``U_t`` applies Haar-random system unitaries per control level, then
    permutes control levels, possibly differently on two complementary
    system subspaces (coherent, system-dependent routing).  Measurement
    unitaries are Haar-random on ``H_s (x) H_r``.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.choice([2, 3])) if n_parties is None else n_parties
    ds = int(rng.choice([2, 3])) if d_s is None else d_s
    steps_T = int(rng.integers(n, n + 3)) if T is None else T
    routing = sample_routing(rng, n, steps_T, split_prob=0.4 if ds > 1 else 0.0)
    d_c = n + 1

    first = np.zeros((ds, d_c), dtype=complex)
    start = list(routing.start)
    amps = rng.standard_normal((ds, len(start))) + 1j * rng.standard_normal((ds, len(start)))
    first[:, start] = amps
    first /= np.linalg.norm(first)
    u1 = tz.complete_isometry(first.reshape(-1, 1), rng)
    steps = [u1]
    for perms in routing.perms:
        local = ng.controlled_system([tz.haar_unitary(ds, rng) for _ in range(d_c)])
        if len(perms) == 1:
            route = ng.control_permutation(ds, perms[0])
        else:
            basis = tz.haar_unitary(ds, rng)
            rank = int(rng.integers(1, ds))
            proj0 = basis[:, :rank] @ basis[:, :rank].conj().T
            proj1 = np.eye(ds) - proj0
            route = np.kron(proj0, ng.permutation(perms[0])) + np.kron(proj1, ng.permutation(perms[1]))
        steps.append(route @ local)
    meas = []
    for _ in range(n):
        meas.append({x: tz.haar_unitary(ds * alphabet, rng) for x in range(n_settings)})
    return make_spec(
        d_s=ds,
        alphabets=(alphabet,) * n,
        steps=steps,
        measurements=meas,
        settings=[tuple(range(n_settings))] * n,
        notes=f"random protocol, seed {seed}",
    )


def sample_valid_protocols(count: int, first_seed: int = 0, **kwargs) -> list[tuple[int, ProtocolSpec]]:
    """Draw ``random_protocol(seed)`` for consecutive seeds, keeping the valid ones."""
    from .protocol import validate_protocol

    found = []
    for seed in itertools.count(first_seed):
        spec = random_protocol(seed, **kwargs)
        if validate_protocol(spec).valid:
            found.append((seed, spec))
            if len(found) == count:
                return found
    raise AssertionError("unreachable")
