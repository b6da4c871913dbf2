"""Small library of named gates for building fixtures and documents.

Every gate here returns a plain matrix; documents expand names at parse time.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

SQRT_HALF = 1 / np.sqrt(2)

X = np.array([[0, 1], [1, 0]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def identity(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex)


def permutation(perm: Sequence[int]) -> np.ndarray:
    """Matrix sending basis state ``|i>`` to ``|perm[i]>``."""
    n = len(perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{list(perm)} is not a permutation of 0..{n - 1}")
    m = np.zeros((n, n), dtype=complex)
    m[list(perm), list(range(n))] = 1.0
    return m


def control_permutation(d_s: int, perm: Sequence[int]) -> np.ndarray:
    """Permute control levels, identity on the system (``s`` major, ``c`` minor)."""
    return np.kron(identity(d_s), permutation(perm))


def level_swap(dim: int, a: int, b: int) -> np.ndarray:
    """Two-level permutation exchanging ``|a>`` and ``|b>``."""
    perm = list(range(dim))
    perm[a], perm[b] = perm[b], perm[a]
    return permutation(perm)


def control_prep(d_c: int, level: int) -> np.ndarray:
    """``W_l`` with ``W_l|0> = |l>``, realised as the ``0 <-> l`` swap."""
    return level_swap(d_c, 0, level)


def controlled_system(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_c W_c (x) |c><c|`` on ``H_s (x) H_c``: system unitary chosen by control level."""
    d_c = len(blocks)
    d_s = blocks[0].shape[0]
    out = np.zeros((d_s * d_c, d_s * d_c), dtype=complex)
    for c, w in enumerate(blocks):
        pc = np.zeros((d_c, d_c))
        pc[c, c] = 1.0
        out += np.kron(np.asarray(w, dtype=complex), pc)
    return out


def computational_readout(d_s: int, alphabet: int = 2, sub_dim: int = 2) -> np.ndarray:
    """Copy the leading ``sub_dim``-level factor of the system into the result register.

    ``|j, rest>_s |r> -> |j, rest>_s |r + j mod alphabet>``; with ``sub_dim =
    alphabet = 2`` this is a CNOT from the first qubit of the system.
    """
    rest = d_s // sub_dim
    d = d_s * alphabet
    m = np.zeros((d, d), dtype=complex)
    for j in range(sub_dim):
        for k in range(rest):
            for r in range(alphabet):
                s = j * rest + k
                m[s * alphabet + (r + j) % alphabet, s * alphabet + r] = 1.0
    return m


def fourier_readout(d_s: int) -> np.ndarray:
    """Record the ``|+>/|->`` value of the first qubit of the system in a bit.

    ``|+><+| (x) I_r + |-><-| (x) X_r`` on the first qubit, identity on the rest.
    """
    rest = d_s // 2
    plus = np.array([[1, 1], [1, 1]], dtype=complex) / 2
    minus = np.array([[1, -1], [-1, 1]], dtype=complex) / 2
    q = np.kron(plus, np.eye(2)) + np.kron(minus, X)
    # reorder (q1, r) (x) rest into (q1, rest, r)
    full = np.kron(q, np.eye(rest)).reshape(2, 2, rest, 2, 2, rest)
    return full.transpose(0, 2, 1, 3, 5, 4).reshape(2 * rest * 2, 2 * rest * 2)
