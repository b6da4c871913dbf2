"""Two-party causal polytope: deterministic vertices, membership certificates, game scores.

A distribution family ``p(a|x)`` over all setting vectors is a flat vector
indexed ``(x_1, x_2, a_1, a_2)`` with settings outermost (settings by their
position in each party's domain).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import PreconditionError, UnsupportedSizeError
from .simplex import FEAS_TOL, phase_one

MAX_RAW_STRATEGIES = 2_000_000


@dataclass(frozen=True)
class Scenario:
    """Outcome alphabet sizes and settings domains of a two-party test."""

    alphabets: tuple[int, ...]
    settings: tuple[tuple, ...]

    def __post_init__(self):
        object.__setattr__(self, "alphabets", tuple(int(a) for a in self.alphabets))
        object.__setattr__(self, "settings", tuple(tuple(d) for d in self.settings))
        if len(self.alphabets) != len(self.settings):
            raise PreconditionError("alphabets and settings describe different party counts")

    @property
    def n_parties(self) -> int:
        return len(self.alphabets)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.settings) + self.alphabets

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def setting_vectors(self):
        return itertools.product(*self.settings)

    def x_index(self, x: Sequence) -> tuple[int, ...]:
        return tuple(dom.index(v) for dom, v in zip(self.settings, x))


def family_vector(scenario: Scenario, dists: Mapping | Callable) -> np.ndarray:
    """Flatten ``{x: OutcomeDistribution or array}`` (or a callable ``x -> probs``) into one vector."""
    out = np.zeros(scenario.shape)
    for x in scenario.setting_vectors():
        d = dists(x) if callable(dists) else dists[tuple(x)]
        probs = np.asarray(getattr(d, "probs", d), dtype=float)
        if probs.shape != scenario.alphabets:
            raise PreconditionError(f"distribution at x={x} has shape {probs.shape}, expected {scenario.alphabets}")
        out[scenario.x_index(x)] = probs
    return out.reshape(-1)


@dataclass(frozen=True)
class DeterministicStrategy:
    """Two-party deterministic causal strategy as explicit lookup tables.

    ``first`` acts first and answers ``first_output[x_first]``; the other
    party answers ``second_output[(a_first, x_first, x_second)]`` (settings by
    index).  Stage two has a single candidate, so no second order decision.
    """

    first: int
    first_output: tuple[int, ...]
    second_output: tuple[int, ...]

    def distribution(self, scenario: Scenario) -> np.ndarray:
        f = self.first - 1
        s = 1 - f
        nx = [len(d) for d in scenario.settings]
        out = np.zeros(scenario.shape)
        for xi in itertools.product(range(nx[0]), range(nx[1])):
            a = [0, 0]
            a[f] = self.first_output[xi[f]]
            a[s] = self.second_output[(a[f] * nx[f] + xi[f]) * nx[s] + xi[s]]
            out[xi + tuple(a)] = 1.0
        return out.reshape(-1)


@dataclass
class VertexSet:
    scenario: Scenario
    vertices: np.ndarray
    strategies: list[DeterministicStrategy]
    raw_count: int

    def __len__(self) -> int:
        return len(self.vertices)


def iter_strategies(scenario: Scenario):
    nx = [len(d) for d in scenario.settings]
    al = scenario.alphabets
    for first in (1, 2):
        f, s = first - 1, 2 - first
        for fo in itertools.product(range(al[f]), repeat=nx[f]):
            for so in itertools.product(range(al[s]), repeat=al[f] * nx[f] * nx[s]):
                yield DeterministicStrategy(first, fo, so)


def raw_strategy_count(scenario: Scenario) -> int:
    nx = [len(d) for d in scenario.settings]
    al = scenario.alphabets
    total = 0
    for f, s in ((0, 1), (1, 0)):
        total += al[f] ** nx[f] * al[s] ** (al[f] * nx[f] * nx[s])
    return total


def enumerate_deterministic(scenario: Scenario, *, max_raw: int = MAX_RAW_STRATEGIES) -> VertexSet:
    """Distinct distributions of all deterministic causal strategies (two parties only)."""
    if scenario.n_parties != 2:
        raise UnsupportedSizeError(
            f"exhaustive vertex enumeration supports 2 parties, got {scenario.n_parties}; "
            "certify larger protocols through the extracted causal model instead"
        )
    raw = raw_strategy_count(scenario)
    if raw > max_raw:
        raise UnsupportedSizeError(f"{raw} raw deterministic strategies exceed the limit {max_raw}")
    seen: dict[bytes, int] = {}
    vertices, reps = [], []
    for strat in iter_strategies(scenario):
        v = strat.distribution(scenario)
        key = v.astype(np.uint8).tobytes()
        if key not in seen:
            seen[key] = len(vertices)
            vertices.append(v)
            reps.append(strat)
    return VertexSet(scenario, np.array(vertices), reps, raw)


@dataclass
class PolytopeCertificate:
    """Outcome of a membership test.

    ``inside``: ``weights`` maps vertex index to convex weight and
    ``residual`` is ``max |sum lam v - p|``.  ``outside``: ``functional`` is a
    coefficient vector with ``functional . v <= bound`` on every vertex and
    ``functional . p = value``; ``margin = value - bound > 0``.
    """

    status: str
    weights: dict[int, float] = field(default_factory=dict)
    residual: float = float("nan")
    functional: np.ndarray | None = None
    bound: float = float("nan")
    value: float = float("nan")
    margin: float = float("nan")
    iterations: int = 0
    tolerance: float = FEAS_TOL
    message: str = ""

    def as_dict(self) -> dict:
        out = {"status": self.status, "tolerance": self.tolerance, "iterations": self.iterations}
        if self.status == "inside":
            out["weights"] = {str(k): v for k, v in sorted(self.weights.items())}
            out["residual"] = self.residual
        elif self.status == "outside":
            out["functional"] = [float(c) for c in self.functional]
            out["bound"] = self.bound
            out["value"] = self.value
            out["margin"] = self.margin
        if self.message:
            out["message"] = self.message
        return out


def membership(p: np.ndarray, vertex_set: VertexSet | np.ndarray, *, tol: float = FEAS_TOL) -> PolytopeCertificate:
    """Decide whether ``p`` is a convex combination of the vertices."""
    V = vertex_set.vertices if isinstance(vertex_set, VertexSet) else np.asarray(vertex_set, dtype=float)
    p = np.asarray(p, dtype=float).reshape(-1)
    if V.shape[1] != p.size:
        raise PreconditionError(f"distribution has {p.size} entries, vertices have {V.shape[1]}")
    A = np.vstack([V.T, np.ones((1, len(V)))])
    b = np.concatenate([p, [1.0]])
    res = phase_one(A, b, feas_tol=tol)
    if res.status == "indeterminate":
        return PolytopeCertificate("indeterminate", iterations=res.iterations, tolerance=tol, message=res.message)
    if res.status == "feasible":
        lam = res.x
        residual = float(np.max(np.abs(V.T @ lam - p)))
        weight_gap = abs(float(lam.sum()) - 1.0)
        if max(residual, weight_gap) > tol:
            return PolytopeCertificate(
                "indeterminate", residual=residual, iterations=res.iterations, tolerance=tol,
                message="phase one reported feasibility but the weights do not reproduce p",
            )
        weights = {int(i): float(w) for i, w in enumerate(lam) if w > 0}
        return PolytopeCertificate("inside", weights, residual, iterations=res.iterations, tolerance=tol)
    g = res.farkas[:-1]
    scale = float(np.max(np.abs(g)))
    if scale == 0.0:
        return PolytopeCertificate("indeterminate", iterations=res.iterations, tolerance=tol, message="degenerate dual")
    g = g / scale
    bound = float(np.max(V @ g))
    value = float(g @ p)
    margin = value - bound
    if margin <= tol:
        return PolytopeCertificate(
            "indeterminate", functional=g, bound=bound, value=value, margin=margin, iterations=res.iterations,
            tolerance=tol, message="infeasible by phase one but the separating margin is within tolerance",
        )
    return PolytopeCertificate("outside", functional=g, bound=bound, value=value, margin=margin,
                               iterations=res.iterations, tolerance=tol)


# -- games --------------------------------------------------------------------------


@dataclass(frozen=True)
class Game:
    """Linear game: ``sum_x w(x) sum_a c(a, x) p(a|x)``; arrays use the family-vector layout."""

    scenario: Scenario
    coefficients: np.ndarray
    setting_weights: np.ndarray
    name: str = ""

    def payoff_vector(self) -> np.ndarray:
        nx = int(np.prod([len(d) for d in self.scenario.settings]))
        w = np.asarray(self.setting_weights, dtype=float).reshape(nx, 1)
        c = np.asarray(self.coefficients, dtype=float).reshape(nx, -1)
        return (w * c).reshape(-1)


@dataclass
class GameScore:
    score: float
    causal_bound: float | None
    optimal_vertex: int | None


def game_score(p: np.ndarray, game: Game, vertex_set: VertexSet | None = None) -> GameScore:
    """Score of ``p``; with a vertex set, also the causal bound and a vertex attaining it."""
    payoff = game.payoff_vector()
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size != payoff.size:
        raise PreconditionError(f"distribution has {p.size} entries, game has {payoff.size}")
    score = float(payoff @ p)
    if vertex_set is None:
        return GameScore(score, None, None)
    if vertex_set.scenario.n_parties != 2:
        raise UnsupportedSizeError("causal bounds are only computed for two parties")
    values = vertex_set.vertices @ payoff
    best = int(np.argmax(values))
    return GameScore(score, float(values[best]), best)


def gyni_game(scenario: Scenario, variant: str = "average") -> Game:
    """Guess-your-neighbour's-input with uniform setting weights.

    ``average`` rewards each correct guess with 1/2 (``a = y`` and ``b = x``
    scored separately); ``joint`` rewards only when both guesses are right.
    Outcome ``k`` stands for the neighbour's ``k``-th setting.
    """
    if scenario.n_parties != 2:
        raise UnsupportedSizeError("the guessing game is defined here for two parties")
    nx = [len(d) for d in scenario.settings]
    if scenario.alphabets[0] < nx[1] or scenario.alphabets[1] < nx[0]:
        raise PreconditionError("each party needs an outcome for every setting of its neighbour")
    c = np.zeros(scenario.shape)
    for xi in itertools.product(range(nx[0]), range(nx[1])):
        for a in itertools.product(*(range(k) for k in scenario.alphabets)):
            hit_a, hit_b = a[0] == xi[1], a[1] == xi[0]
            if variant == "average":
                c[xi + a] = 0.5 * (hit_a + hit_b)
            elif variant == "joint":
                c[xi + a] = float(hit_a and hit_b)
            else:
                raise PreconditionError(f"unknown variant {variant!r}")
    w = np.full(nx, 1.0 / (nx[0] * nx[1]))
    return Game(scenario, c.reshape(-1), w.reshape(-1), f"gyni-{variant}")


def signalling_distribution(scenario: Scenario) -> np.ndarray:
    """Both parties output their neighbour's setting index: perfect two-way signalling."""
    nx = [len(d) for d in scenario.settings]
    out = np.zeros(scenario.shape)
    for xi in itertools.product(range(nx[0]), range(nx[1])):
        out[xi + (xi[1], xi[0])] = 1.0
    return out.reshape(-1)
