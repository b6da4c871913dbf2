"""Dense complex linear algebra on mixed-radix tensor-product spaces.

States are 1-d complex arrays and operators are 2-d complex arrays.  A
composite space is described by a tuple of factor dimensions; flattening is
row-major (the first factor is the most significant digit), which matches
``numpy.reshape`` with C ordering.

Most of the simulator works matrix-free: a batch of states is viewed as a
tensor of shape ``dims + (batch,)`` and local operators are applied to a
subset of axes with :func:`apply_local`.  Dense builders (:func:`kron`,
:func:`embed`) are kept for small spaces and as independent cross-checks.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np

from .errors import CapacityError, DimensionError

#: Largest total dimension accepted for a state vector or a kron result.
MAX_DIM = 2**22
#: Largest dimension for which a dense ``dim x dim`` operator is materialised.
MAX_DENSE_DIM = 4096

UNITARY_ATOL = 1e-12

CState = np.ndarray
COperator = np.ndarray


def _check_capacity(dim: int, limit: int, what: str) -> None:
    if dim > limit:
        raise CapacityError(f"{what} dimension {dim} exceeds the configured maximum {limit}")


def kron(a: COperator, b: COperator, *, max_dim: int = MAX_DIM) -> COperator:
    """Kronecker product with a capacity guard on the result's row count."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    _check_capacity(a.shape[0] * b.shape[0], max_dim, "kron result")
    return np.kron(a, b)


def kron_all(*ops: COperator, max_dim: int = MAX_DIM) -> COperator:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = kron(out, op, max_dim=max_dim)
    return out


def apply_local(tensor: np.ndarray, op: COperator, axes: Sequence[int]) -> np.ndarray:
    """Apply ``op`` to ``axes`` of ``tensor``.

    The operator's row/column index is the mixed-radix flattening of the named
    axes *in the order given*.  All other axes (including a trailing batch
    axis, if any) are untouched.
    """
    axes = list(axes)
    k = len(axes)
    moved = np.moveaxis(tensor, axes, list(range(k)))
    shape = moved.shape
    local = int(np.prod(shape[:k]))
    if op.shape != (local, local):
        raise DimensionError(f"operator of shape {op.shape} cannot act on axes of total dimension {local}")
    out = (op @ moved.reshape(local, -1)).reshape(shape)
    return np.moveaxis(out, list(range(k)), axes)


def apply_controlled(
    tensor: np.ndarray,
    ctrl_axis: int,
    value: int,
    fn: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    """Apply ``fn`` only to the slice where ``ctrl_axis`` equals ``value``.

    The slice handed to ``fn`` keeps the control axis (with length one), so
    axis numbers are the same inside and outside.
    """
    index = [slice(None)] * tensor.ndim
    index[ctrl_axis] = slice(value, value + 1)
    index = tuple(index)
    out = tensor.copy()
    out[index] = fn(tensor[index])
    return out


def embed(op: COperator, dims: Sequence[int] | object, factors: Sequence[int], *, max_dim: int = MAX_DENSE_DIM) -> COperator:
    """Return ``op`` acting on ``factors`` tensored with identity elsewhere.

    ``dims`` is a sequence of factor dimensions or any object with a ``dims``
    attribute (e.g. :class:`~qcausal.protocol.SpaceLayout`).  ``op`` is
    indexed in the order the factors are listed; pass ``sorted(factors)`` for
    the canonical order.
    """
    dims = tuple(getattr(dims, "dims", dims))
    factors = list(factors)
    if len(set(factors)) != len(factors):
        raise DimensionError(f"repeated factor in {factors}")
    for f in factors:
        if not 0 <= f < len(dims):
            raise DimensionError(f"factor index {f} out of range for {len(dims)} factors")
    local = int(np.prod([dims[f] for f in factors]))
    op = np.asarray(op, dtype=complex)
    if op.shape != (local, local):
        raise DimensionError(f"operator of shape {op.shape} does not match factor dimension {local}")
    total = int(np.prod(dims))
    _check_capacity(total, max_dim, "dense operator")
    eye = np.eye(total, dtype=complex).reshape(dims + (total,))
    return apply_local(eye, op, factors).reshape(total, total)


def sparse_embed(op: COperator, dims: Sequence[int] | object, factors: Sequence[int], *, max_dim: int = MAX_DIM):
    """:func:`embed` as a CSR matrix, built by index arithmetic.

    Used where the dense ``dim x dim`` operator would not fit but the
    operator is sparse (one non-zero block per spectator basis state).
    """
    from scipy import sparse

    dims = tuple(getattr(dims, "dims", dims))
    factors = list(factors)
    if len(set(factors)) != len(factors):
        raise DimensionError(f"repeated factor in {factors}")
    if any(not 0 <= f < len(dims) for f in factors):
        raise DimensionError(f"factor index out of range in {factors}")
    total = int(np.prod(dims))
    _check_capacity(total, max_dim, "sparse operator")
    fdims = [dims[f] for f in factors]
    local = int(np.prod(fdims))
    op = np.asarray(op, dtype=complex)
    if op.shape != (local, local):
        raise DimensionError(f"operator of shape {op.shape} does not match factor dimension {local}")
    rest = [i for i in range(len(dims)) if i not in factors]
    rdims = [dims[i] for i in rest]
    ri, ci = np.nonzero(op)
    vals = op[ri, ci]
    r_dig = np.unravel_index(ri, fdims)
    c_dig = np.unravel_index(ci, fdims)
    m_dig = np.unravel_index(np.arange(int(np.prod(rdims))), rdims) if rest else ()
    rows: list = [None] * len(dims)
    cols: list = [None] * len(dims)
    for pos, f in enumerate(factors):
        rows[f] = r_dig[pos][:, None]
        cols[f] = c_dig[pos][:, None]
    for pos, i in enumerate(rest):
        rows[i] = cols[i] = m_dig[pos][None, :]
    shape = (len(vals), int(np.prod(rdims)))
    r = np.ravel_multi_index(tuple(np.broadcast_to(a, shape) for a in rows), dims).ravel()
    c = np.ravel_multi_index(tuple(np.broadcast_to(a, shape) for a in cols), dims).ravel()
    data = np.broadcast_to(vals[:, None], shape).ravel()
    return sparse.csr_matrix((data, (r, c)), shape=(total, total))


def inner(a: CState, b: CState) -> complex:
    """<a|b>, conjugate-linear in ``a``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"inner product of states with shapes {a.shape} and {b.shape}")
    return complex(np.vdot(a, b))


def norm2(a: np.ndarray) -> float:
    return float(np.vdot(a, a).real)


def basis_state(dim: int, index: int = 0) -> CState:
    _check_capacity(dim, MAX_DIM, "state")
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def unitarity_error(u: COperator) -> float:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return float("inf")
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def is_unitary(u: COperator, atol: float = UNITARY_ATOL) -> bool:
    return unitarity_error(u) <= atol


def haar_unitary(dim: int, seed: int | np.random.Generator) -> COperator:
    """Haar-distributed unitary from a Ginibre matrix.

    QR-factorise a matrix of i.i.d. standard complex normals and rescale each
    column of Q by the phase of the matching diagonal entry of R, which makes
    the factorisation unique and the distribution exactly Haar.
    """
    if dim < 1:
        raise ValueError("dim must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    phases = np.where(np.abs(d) > 0, d / np.abs(d), 1.0)
    return q * phases


def complete_isometry(columns: np.ndarray, rng: np.random.Generator | None = None) -> COperator:
    """Extend orthonormal columns to a full unitary.

    The leading columns of the result equal ``columns`` exactly; the rest
    come from Gram-Schmidt on random (or standard-basis) vectors.
    """
    columns = np.asarray(columns, dtype=complex)
    dim, k = columns.shape
    out = np.zeros((dim, dim), dtype=complex)
    out[:, :k] = columns
    if rng is None:
        candidates = np.eye(dim, dtype=complex)
    else:
        candidates = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    j = k
    for v in candidates.T:
        if j == dim:
            break
        w = v - out[:, :j] @ (out[:, :j].conj().T @ v)
        w = w - out[:, :j] @ (out[:, :j].conj().T @ w)
        n = np.linalg.norm(w)
        if n > 1e-8:
            out[:, j] = w / n
            j += 1
    if j != dim:
        raise DimensionError("could not complete isometry to a unitary")
    return out
