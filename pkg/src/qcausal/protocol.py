"""Space layout, protocol description and the lab-activation unitary.

The composite space is ordered ``s, c, r_1..r_N, f_1..f_N``.  Parties are
labelled ``1..N`` so that party ``l`` is fired by control level ``|l>``;
control level ``|0>`` does nothing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterator, Sequence

import numpy as np

from . import tensor as tz
from .errors import CapacityError, DimensionError, SettingError, StructureError

LEAK_TOL = 1e-9
WRAP_TOL = 1e-12

Setting = Hashable
SettingVector = tuple


@dataclass(frozen=True)
class SpaceLayout:
    """Factor dimensions of ``H_s (x) H_c (x) H_r (x) H_f``.

    ``flag_dim`` truncates each party's counter to ``0..flag_dim-1``; the
    flag shift is cyclic on that range.
    """

    d_s: int
    n_parties: int
    alphabets: tuple[int, ...]
    flag_dim: int
    max_dim: int = field(default=tz.MAX_DIM, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "alphabets", tuple(int(a) for a in self.alphabets))
        if self.d_s < 1 or self.n_parties < 1:
            raise StructureError("d_s and the party count must be positive")
        if len(self.alphabets) != self.n_parties:
            raise StructureError(f"expected {self.n_parties} alphabet sizes, got {len(self.alphabets)}")
        if any(a < 1 for a in self.alphabets):
            raise StructureError("every outcome alphabet needs at least one symbol")
        if self.flag_dim < 2:
            raise StructureError("flag dimension must be at least 2")
        if self.dim > self.max_dim:
            raise CapacityError(f"total dimension {self.dim} exceeds the configured maximum {self.max_dim}")

    @property
    def d_c(self) -> int:
        return self.n_parties + 1

    @property
    def dims(self) -> tuple[int, ...]:
        n = self.n_parties
        return (self.d_s, self.d_c) + self.alphabets + (self.flag_dim,) * n

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def d_r(self) -> int:
        return int(np.prod(self.alphabets))

    def r_axis(self, party: int) -> int:
        return 1 + party

    def f_axis(self, party: int) -> int:
        return 1 + self.n_parties + party

    @property
    def parties(self) -> range:
        return range(1, self.n_parties + 1)

    def index(self, s: int, c: int, r: Sequence[int], f: Sequence[int]) -> int:
        """Flat index of a basis state."""
        return int(np.ravel_multi_index((s, c, *r, *f), self.dims))

    def outcome_tuples(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(a) for a in self.alphabets))


def flag_shift(flag_dim: int) -> tz.COperator:
    """Cyclic raising operator ``sum_n |n+1 mod F><n|``."""
    return np.roll(np.eye(flag_dim, dtype=complex), 1, axis=0)


def _as_matrix(m: Any, shape: tuple[int, int], what: str) -> np.ndarray:
    arr = np.array(m, dtype=complex)
    if arr.shape != shape:
        raise StructureError(f"{what} has shape {arr.shape}, expected {shape}")
    err = tz.unitarity_error(arr)
    if err > tz.UNITARY_ATOL:
        raise StructureError(f"{what} is not unitary (max |U^dag U - I| = {err:.3e})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProtocolSpec:
    """An ``N``-party protocol with ``T`` steps.

    ``steps[t-1]`` is ``U_t`` on ``H_s (x) H_c`` (system-major).
    ``measurements[l-1][x]`` is ``V_{s,r_l}(x)`` on ``H_s (x) H_{r_l}``.
    ``settings[l-1]`` is the party's finite settings domain.
    """

    layout: SpaceLayout
    steps: tuple[np.ndarray, ...]
    measurements: tuple[dict, ...]
    settings: tuple[tuple, ...]
    notes: str = ""

    def __post_init__(self):
        lay = self.layout
        n = lay.n_parties
        T = len(self.steps)
        if T < n:
            raise StructureError(
                f"protocol has T={T} steps but N={n} parties; an N party protocol needs T >= N"
            )
        dsc = lay.d_s * lay.d_c
        steps = tuple(_as_matrix(u, (dsc, dsc), f"U_{t + 1}") for t, u in enumerate(self.steps))
        object.__setattr__(self, "steps", steps)
        if len(self.measurements) != n or len(self.settings) != n:
            raise StructureError(f"need measurements and settings for each of the {n} parties")
        settings = tuple(tuple(dom) for dom in self.settings)
        meas = []
        for l, (dom, table) in enumerate(zip(settings, self.measurements), start=1):
            if not dom:
                raise StructureError(f"party {l} has an empty settings domain")
            if len(set(dom)) != len(dom):
                raise StructureError(f"party {l} has repeated setting values")
            if set(table) != set(dom):
                raise StructureError(f"party {l}: measurement unitaries given for {sorted(table, key=str)}, domain is {list(dom)}")
            d = lay.d_s * lay.alphabets[l - 1]
            meas.append({x: _as_matrix(table[x], (d, d), f"V_(s,r_{l})({x!r})") for x in dom})
        object.__setattr__(self, "measurements", tuple(meas))
        object.__setattr__(self, "settings", settings)

    @property
    def n_parties(self) -> int:
        return self.layout.n_parties

    @property
    def T(self) -> int:
        return len(self.steps)

    def check_settings(self, x: Sequence) -> SettingVector:
        x = tuple(x)
        if len(x) != self.n_parties:
            raise SettingError(f"setting vector has {len(x)} entries, expected {self.n_parties}")
        for l, (xl, dom) in enumerate(zip(x, self.settings), start=1):
            if xl not in dom:
                raise SettingError(f"setting {xl!r} for party {l} is not in its domain {list(dom)}")
        return x

    def setting_vectors(self) -> Iterator[SettingVector]:
        return itertools.product(*self.settings)

    @property
    def n_setting_vectors(self) -> int:
        return int(np.prod([len(d) for d in self.settings]))

    def measurement(self, party: int, setting: Setting) -> np.ndarray:
        return self.measurements[party - 1][setting]


def make_spec(
    d_s: int,
    alphabets: Sequence[int],
    steps: Sequence[np.ndarray],
    measurements: Sequence[dict],
    settings: Sequence[Sequence] | None = None,
    flag_dim: int | None = None,
    notes: str = "",
) -> ProtocolSpec:
    """Convenience constructor; flags default to ``T + 1`` levels."""
    n = len(alphabets)
    T = len(steps)
    if settings is None:
        settings = [tuple(sorted(m, key=str)) for m in measurements]
    layout = SpaceLayout(d_s, n, tuple(alphabets), flag_dim if flag_dim is not None else T + 1)
    return ProtocolSpec(layout, tuple(steps), tuple(measurements), tuple(tuple(s) for s in settings), notes)


# -- matrix-free application -------------------------------------------------


def to_tensor(states: np.ndarray, layout: SpaceLayout) -> np.ndarray:
    """View a state (``(D,)``) or a batch of states (``(D, B)``) as ``dims + (B,)``."""
    states = np.asarray(states, dtype=complex)
    if states.shape[0] != layout.dim:
        raise DimensionError(f"state of dimension {states.shape[0]} does not fit layout of dimension {layout.dim}")
    return states.reshape(layout.dims + (-1,))


def from_tensor(t: np.ndarray, layout: SpaceLayout, batched: bool) -> np.ndarray:
    flat = t.reshape(layout.dim, -1)
    return flat if batched else flat[:, 0]


def fire_party(t: np.ndarray, v_local: np.ndarray, s_axis: int, r_axis: int, f_axis: int) -> np.ndarray:
    """Apply a party's measurement unitary on ``(s, r)`` and raise its flag."""
    out = tz.apply_local(t, v_local, [s_axis, r_axis])
    return np.roll(out, 1, axis=f_axis)


def apply_V_tensor(spec: ProtocolSpec, x: SettingVector, t: np.ndarray, offset: int = 0) -> np.ndarray:
    """Apply ``V`` to a tensor whose canonical axes start at ``offset``.

    Axes before ``offset`` (ancillas of a larger layout) are spectators.
    """
    lay = spec.layout
    out = t.copy()
    lead = (slice(None),) * (offset + 1)
    for l in lay.parties:
        v = spec.measurement(l, x[l - 1])
        sl = lead + (slice(l, l + 1),)
        out[sl] = fire_party(t[sl], v, offset, offset + lay.r_axis(l), offset + lay.f_axis(l))
    return out


def apply_U_tensor(spec: ProtocolSpec, step: int, t: np.ndarray) -> np.ndarray:
    """Apply ``U_step`` (1-based) to the ``(s, c)`` axes."""
    return tz.apply_local(t, spec.steps[step - 1], [0, 1])


def apply_V(spec: ProtocolSpec, x: Sequence, states: np.ndarray) -> np.ndarray:
    x = spec.check_settings(x)
    batched = np.ndim(states) == 2
    t = to_tensor(states, spec.layout)
    return from_tensor(apply_V_tensor(spec, x, t), spec.layout, batched)


def flag_wrap_weight(spec: ProtocolSpec, t: np.ndarray) -> float:
    """Weight that the next ``V`` would push from the top flag level to 0."""
    lay = spec.layout
    top = lay.flag_dim - 1
    w = 0.0
    for l in lay.parties:
        index = [slice(None)] * t.ndim
        index[1] = l
        index[lay.f_axis(l)] = top
        w += float(np.sum(np.abs(t[tuple(index)]) ** 2))
    return w


def run_protocol(spec: ProtocolSpec, x: Sequence, state: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Return ``(U_total |state>, max flag-wrap weight)``; ``state`` defaults to ``|0>``."""
    x = spec.check_settings(x)
    lay = spec.layout
    psi = initial_state(lay) if state is None else state
    batched = np.ndim(psi) == 2
    t = to_tensor(psi, lay)
    wrap = 0.0
    for step in range(1, spec.T + 1):
        t = apply_U_tensor(spec, step, t)
        wrap = max(wrap, flag_wrap_weight(spec, t))
        t = apply_V_tensor(spec, x, t)
    return from_tensor(t, lay, batched), wrap


# -- dense operators ---------------------------------------------------------


def build_V(spec: ProtocolSpec, x: Sequence) -> tz.COperator:
    """Dense lab-activation unitary, assembled from embedded local terms."""
    x = spec.check_settings(x)
    lay = spec.layout
    proj = np.zeros((lay.d_c, lay.d_c), dtype=complex)
    proj[0, 0] = 1.0
    total = tz.embed(proj, lay, [1])
    gamma = flag_shift(lay.flag_dim)
    for l in lay.parties:
        pl = np.zeros((lay.d_c, lay.d_c), dtype=complex)
        pl[l, l] = 1.0
        local = tz.kron_all(pl, spec.measurement(l, x[l - 1]), gamma)
        total = total + tz.embed(local, lay, [1, 0, lay.r_axis(l), lay.f_axis(l)])
    return total


def build_U(spec: ProtocolSpec, step: int) -> tz.COperator:
    return tz.embed(spec.steps[step - 1], spec.layout, [0, 1])


def initial_state(layout: SpaceLayout) -> tz.CState:
    return tz.basis_state(layout.dim, 0)


def all_flags_raised_weight(layout: SpaceLayout, t: np.ndarray) -> float:
    index = [slice(None)] * t.ndim
    for l in layout.parties:
        index[layout.f_axis(l)] = 1
    return float(np.sum(np.abs(t[tuple(index)]) ** 2))


@dataclass(frozen=True)
class ValidityReport:
    valid: bool
    leaks: dict
    max_leak: float
    max_wrap: float
    tolerance: float = LEAK_TOL

    def as_dict(self) -> dict:
        return {
            "valid": self.valid,
            "max_leak": self.max_leak,
            "max_wrap": self.max_wrap,
            "tolerance": self.tolerance,
            "leaks": [{"x": list(x), "leak": v} for x, v in self.leaks.items()],
        }


def leak_of(spec: ProtocolSpec, x: Sequence) -> tuple[float, float]:
    final, wrap = run_protocol(spec, x)
    t = to_tensor(final, spec.layout)
    return 1.0 - all_flags_raised_weight(spec.layout, t), wrap


def validate_protocol(spec: ProtocolSpec, tol: float = LEAK_TOL) -> ValidityReport:
    """Run every setting vector and measure amplitude outside ``|1...1>_f``.

    Structural problems never reach here: :class:`ProtocolSpec` raises
    :class:`~qcausal.errors.StructureError` on construction.
    """
    leaks = {}
    wrap = 0.0
    for x in spec.setting_vectors():
        leak, w = leak_of(spec, x)
        leaks[x] = max(leak, 0.0)
        wrap = max(wrap, w)
    max_leak = max(leaks.values())
    return ValidityReport(max_leak <= tol and wrap <= WRAP_TOL, leaks, max_leak, wrap, tol)
