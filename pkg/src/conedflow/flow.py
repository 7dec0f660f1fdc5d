"""Slices, the flow step T_a and masks, in exact rational arithmetic.

Measures are plain dicts mapping vertex ids to positive ``Fraction`` weights.
Any geometric question the ball cannot settle raises :class:`Uncertified`;
the flow never proceeds on approximate geometry.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .graph import ConstantsProfile, Graph

Measure = dict  # vertex id -> Fraction


class Uncertified(RuntimeError):
    """The truncated ball cannot decide a geometric predicate."""


class StepKind(enum.Enum):
    INITIAL = "initial"
    REGULAR = "regular"
    ENDING = "ending"
    STATIONARY = "stationary"


def dirac(v: int) -> Measure:
    return {v: Fraction(1)}


def uniform(vertices: Iterable[int]) -> Measure:
    vs = sorted(set(vertices))
    if not vs:
        raise ValueError("uniform measure on an empty set")
    w = Fraction(1, len(vs))
    return {v: w for v in vs}


def mass(eta: Measure) -> Fraction:
    return sum(eta.values(), Fraction(0))


def combine(terms: Iterable[tuple[Fraction, Measure]]) -> Measure:
    out: dict[int, Fraction] = {}
    for coeff, eta in terms:
        for v, w in eta.items():
            out[v] = out.get(v, Fraction(0)) + coeff * w
    return {v: w for v, w in sorted(out.items()) if w != 0}


def push_forward(eta: Measure, phi) -> Measure:
    """Image measure under a vertex map (returning None makes the push fail)."""
    out: dict = {}
    for v, w in eta.items():
        u = phi(v)
        if u is None:
            raise KeyError(v)
        out[u] = out.get(u, Fraction(0)) + w
    return dict(sorted(out.items()))


@dataclass
class Mask:
    a: int
    x: int
    measure: Measure
    R: int  # number of steps until stationary
    r: int  # largest r with step * r < d(a, x)
    trace: list = field(default_factory=list)  # (kind of first step from each iterate, support)


class Flow:
    """Flow toward fixed targets inside one graph, with memoised slices and steps."""

    def __init__(self, graph: Graph, profile: ConstantsProfile):
        self.graph = graph
        self.profile = profile
        self._slices: dict = {}
        self._steps: dict = {}
        self._masks: dict = {}

    # -- geometry ----------------------------------------------------------
    def _require_interval(self, a: int, x: int) -> int:
        g = self.graph
        d = g.distances(a).dist[x]
        if d < 0:
            raise Uncertified(f"{a} and {x} are disconnected in the ball")
        if not g.interval_certified(a, x):
            raise Uncertified(f"geodesics between {a} and {x} may leave the ball")
        return int(d)

    def slice(self, a: int, x: int, rho: int) -> frozenset:
        """S_{a,x}(rho): vertices of U_alpha[a,x] at distance rho from a."""
        key = (a, x, rho)
        if key in self._slices:
            return self._slices[key]
        g, p = self.graph, self.profile
        d = self._require_interval(a, x)
        if not 0 <= rho <= d:
            raise ValueError(f"slice radius {rho} outside [0, {d}]")
        if d == 0:
            out = frozenset([a])
            self._slices[key] = out
            return out
        edges = g.geodesic_edges(a, x, rho)
        cand = None
        for e in edges:
            cone = g.cone(e, p.slice_cone)
            if not cone.certified:
                raise Uncertified(f"cone around {e}: {cone.witness}")
            cand = set(cone.vertices) if cand is None else cand & cone.vertices
        da, dx = g.distances(a), g.distances(x)
        out = set()
        for t in cand:
            if da.dist[t] != rho:
                if da.dist[t] < rho or da.lower(t) > rho:
                    continue
                raise Uncertified(f"distance from {a} to {t} not certified")
            if rho + dx.dist[t] <= d + p.alpha:
                out.add(t)
            elif rho + dx.lower(t) <= d + p.alpha:
                raise Uncertified(f"distance from {t} to {x} not certified")
        out = frozenset(out)
        self._slices[key] = out
        return out

    def conical_interval(self, a: int, x: int) -> frozenset:
        d = self._require_interval(a, x)
        out: set = set()
        for rho in range(d + 1):
            out |= self.slice(a, x, rho)
        return frozenset(out)

    def r_index(self, d: int) -> int:
        """Largest r with step * r < d (0 when d = 0)."""
        if d <= 0:
            return 0
        return (d - 1) // self.profile.step

    def _angle_candidates(self, a: int, x: int) -> list[int]:
        """Vertices strictly between a and x on geodesics, ordered by distance from a."""
        g = self.graph
        da = g.distances(a).dist
        inner = [c for c in g.interval(a, x).tolist() if c != a and c != x]
        return sorted(inner, key=lambda c: (da[c], c))

    def classify(self, a: int, x: int) -> StepKind:
        g, p = self.graph, self.profile
        if a == x:
            return StepKind.STATIONARY
        d = self._require_interval(a, x)
        if d > p.step:
            return StepKind.REGULAR if d % p.step == 0 else StepKind.INITIAL
        if g.is_cone[a]:
            return StepKind.ENDING if d > 1 else StepKind.STATIONARY
        for c in self._angle_candidates(a, x):
            verdict = g.vertex_angle_exceeds(c, a, x, p.ending_classify)
            if verdict is None:
                raise Uncertified(f"angle at {c} between {a} and {x} vs {p.ending_classify}")
            if verdict:
                return StepKind.ENDING
        return StepKind.STATIONARY

    def ending_vertex(self, a: int, x: int) -> int:
        """The unique c closest to a with angle at c between a and x above the selection threshold."""
        g, p = self.graph, self.profile
        da = g.distances(a).dist
        found: list[int] = []
        layer = None
        for c in self._angle_candidates(a, x):
            if layer is not None and da[c] > layer:
                break
            verdict = g.vertex_angle_exceeds(c, a, x, p.ending_select)
            if verdict is None:
                raise Uncertified(f"angle at {c} between {a} and {x} vs {p.ending_select}")
            if verdict:
                found.append(c)
                layer = da[c]
        if len(found) != 1:
            raise AssertionError(f"ending step from {x} toward {a}: candidates {found}")
        return found[0]

    # -- the flow step --------------------------------------------------------
    def step_dirac(self, a: int, x: int) -> tuple[StepKind, Measure]:
        key = (a, x)
        if key in self._steps:
            return self._steps[key]
        kind = self.classify(a, x)
        if kind in (StepKind.INITIAL, StepKind.REGULAR):
            d = int(self.graph.distances(a).dist[x])
            out = uniform(self.slice(a, x, self.profile.step * self.r_index(d)))
        elif kind is StepKind.ENDING:
            if self.graph.is_cone[a]:
                out = uniform(self.slice(a, x, 1))
            else:
                out = dirac(self.ending_vertex(a, x))
        else:
            out = dirac(x)
        self._steps[key] = (kind, out)
        return kind, out

    def step(self, a: int, eta: Measure) -> Measure:
        return combine((w, self.step_dirac(a, x)[1]) for x, w in sorted(eta.items()))

    def mask(self, a: int, x: int) -> Mask:
        key = (a, x)
        if key in self._masks:
            return self._masks[key]
        d = self._require_interval(a, x)
        r = self.r_index(d)
        eta = dirac(x)
        trace = []
        for k in range(r + 3):
            nxt = self.step(a, eta)
            kinds = sorted({self.step_dirac(a, v)[0].value for v in eta})
            trace.append((kinds, tuple(sorted(eta))))
            if nxt == eta:
                m = Mask(a, x, eta, k, r, trace)
                if k > r + 1:
                    raise AssertionError(f"mask of {a} for {x} needed {k} > r+1 = {r + 1} steps")
                self._masks[key] = m
                return m
            eta = nxt
        raise AssertionError(f"flow toward {a} from {x} not stationary after {r + 2} steps")

    # -- focus bounds -------------------------------------------------------------
    def focus_check(self, a: int, x: int, x2: int) -> dict:
        """Measured diameter of flowed supports for two sources, against the focus bounds.

        The item follows from the hypotheses: one source (item 1, the
        iterates while they stay initial or regular); neighbours inside one
        open band between multiples of the step (item 2); equal distances
        with regular steps and d(x, x2) <= 8 delta (item 3); neighbours beyond
        one step, brought to a common sphere by zero or one step each (item 4).
        """
        g, p = self.graph, self.profile
        dlt, step = p.delta, p.step
        d1, d2 = self._require_interval(a, x), self._require_interval(a, x2)
        kinds = []
        if x == x2:
            eta, supports = dirac(x), []
            while True:
                kind, _ = self.step_dirac(a, min(eta))
                if kind not in (StepKind.INITIAL, StepKind.REGULAR):
                    break
                eta = self.step(a, eta)
                kinds.append(kind.value)
                supports.append(set(eta))
            item, bound, sets = 1, 5 * dlt, supports or [{x}]
        else:
            near = int(g.distances(x).dist[x2])
            k1, s1 = self.step_dirac(a, x)
            k2, s2 = self.step_dirac(a, x2)
            kinds = [k1.value, k2.value]
            band = d1 % step and d2 % step and (d1 - 1) // step == (d2 - 1) // step
            if near == 1 and d1 > step and d2 > step and band:
                item, bound, sets = 2, 8 * dlt + 1, [set(s1) | set(s2)]
            elif d1 == d2 and near <= 8 * dlt and k1 is k2 is StepKind.REGULAR:
                item, bound, sets = 3, 8 * dlt, [set(s1) | set(s2)]
            elif near == 1 and d1 > step and d2 > step:
                options1 = ([(d1, {x})] if d1 % step == 0 else []) + [(step * self.r_index(d1), set(s1))]
                options2 = ([(d2, {x2})] if d2 % step == 0 else []) + [(step * self.r_index(d2), set(s2))]
                common = [(u | v) for r1, u in options1 for r2, v in options2 if r1 == r2]
                if not common:
                    return {"item": 4, "kinds": kinds, "witness": "no common sphere within one step", "passed": False}
                item, bound, sets = 4, 8 * dlt + 2, common[:1]
            else:
                return {"item": None, "kinds": kinds, "skipped": "no focus bound applies"}
        diam = 0
        for s in sets:
            for u in s:
                du = g.distances(u).dist
                diam = max(diam, max(int(du[v]) for v in s))
        out = {"item": item, "kinds": kinds, "diameter": diam, "bound": bound, "passed": diam <= bound}
        if item == 3:
            out["intersect"] = bool(set(s1) & set(s2))
            out["passed"] = out["passed"] and out["intersect"]
        return out


def mask_record(graph: Graph, m: Mask) -> dict:
    """Structured dump of a mask with weights as "num/den" strings."""
    return {
        "a": graph.label(m.a) if graph.labels is None else str(graph.label(m.a)),
        "x": graph.label(m.x) if graph.labels is None else str(graph.label(m.x)),
        "R": m.R,
        "r": m.r,
        "support": [
            {"vertex": v, "weight": f"{w.numerator}/{w.denominator}"} for v, w in sorted(m.measure.items())
        ],
    }
