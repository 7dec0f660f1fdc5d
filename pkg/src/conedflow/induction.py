"""Random coset representatives and the induced cocycle C_gamma.

Measures on a coset are dicts mapping group elements to ``Fraction`` weights.
Vectors of the peripheral representation are dicts mapping indices to
``Fraction`` coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .flow import Flow, Uncertified, combine
from .graph import ConeVertex, GroupVertex
from .groups import (
    CoordinatePeripheral,
    CosetKey,
    FactorPeripheral,
    FiniteGroup,
    FiniteSubgroupPeripheral,
    FreeAbelianGroup,
    FreeGroup,
    FreeProduct,
    GroupModel,
    Peripheral,
    PeripheralStructure,
    SubsetPeripheral,
)

Vector = dict


def _norm(v: dict) -> Fraction:
    return sum((abs(w) for w in v.values()), Fraction(0))


# -- peripheral cocycles --------------------------------------------------------------
class HCocycleModel:
    """A cocycle of Z^d (d = 0 for a finite group) for the translation action on Z^d-indexed
    vectors: c(n) is the signed indicator of the box between 0 and n, coordinate by coordinate."""

    def __init__(self, kind: str, dim: int, p: float = 2.0):
        self.kind = kind
        self.dim = dim
        self.p = p

    def identity(self) -> tuple:
        return (0,) * self.dim

    def multiply(self, m: tuple, n: tuple) -> tuple:
        return tuple(a + b for a, b in zip(m, n))

    def invert(self, n: tuple) -> tuple:
        return tuple(-a for a in n)

    def c(self, n: tuple) -> Vector:
        out = {}
        for k, a in enumerate(n):
            if a > 0:
                for i in range(a):
                    out[(k, i)] = Fraction(1)
            elif a < 0:
                for i in range(a, 0):
                    out[(k, i)] = Fraction(-1)
        return out

    def act(self, n: tuple, v: Vector) -> Vector:
        """pi_H(n): translate coordinate k of each index by n_k."""
        return {(k, i + n[k]): w for (k, i), w in v.items()}

    def length(self, n: tuple) -> int:
        return sum(abs(a) for a in n)


def builtin_h_cocycle(kind: str, p: float = 2.0, dim: int | None = None) -> HCocycleModel:
    """``finite`` (zero cocycle), ``integers``, or ``free-abelian`` with ``dim`` coordinates."""
    if kind == "finite":
        return HCocycleModel("finite", 0, p)
    if kind == "integers":
        return HCocycleModel("integers", 1, p)
    if kind == "free-abelian":
        if not dim or dim < 1:
            raise ValueError("free-abelian cocycle needs a positive dimension")
        return HCocycleModel("free-abelian", dim, p)
    raise ValueError(f"unsupported peripheral cocycle {kind!r}")


def h_coordinates(P: Peripheral) -> tuple[Callable, int]:
    """Isomorphism from the peripheral subgroup onto Z^d (d = 0 when finite)."""
    model = P.model
    if P.finite or isinstance(P, FiniteSubgroupPeripheral):
        return (lambda h: ()), 0
    if isinstance(P, SubsetPeripheral):
        if len(P.gens) != 1:
            raise ValueError("only cyclic subgroups of free groups are modelled as Z^d")
        return (lambda h: (sum(e for _, e in h),)), 1
    if isinstance(P, CoordinatePeripheral):
        order = sorted(P.coords)
        return (lambda h: tuple(h[i] for i in order)), len(order)
    if isinstance(P, FactorPeripheral):
        factor = model.factors[P.factor]
        if isinstance(factor, FiniteGroup):
            return (lambda h: ()), 0
        if isinstance(factor, FreeAbelianGroup):
            return (lambda h: tuple(h[0][1]) if h else (0,) * len(factor.labels)), len(factor.labels)
        if isinstance(factor, FreeGroup) and len(factor.labels) == 1:
            return (lambda h: (sum(e for _, e in h[0][1]),) if h else (0,)), 1
    raise ValueError(f"no Z^d model for peripheral {P.name!r}")


# -- random representatives -------------------------------------------------------------
class RandomCosetReps:
    """A section gH -> probability measure on gH, evaluated lazily and memoised."""

    def __init__(self, peripherals: PeripheralStructure, index: int, provider: Callable, name: str = ""):
        self.peripherals = peripherals
        self.model: GroupModel = peripherals.model
        self.index = index
        self.P = peripherals[index]
        self._provider = provider
        self._cache: dict = {}
        self.name = name
        self.support_bound = 0
        self.diameter_bound = 0

    def key(self, g) -> CosetKey:
        return self.peripherals.coset_key(self.index, g)

    def get(self, key: CosetKey) -> dict:
        if key not in self._cache:
            meas = self._provider(key)
            for x in meas:
                if self.key(x) != key:
                    raise AssertionError(f"representative {x!r} of {key} lies outside its coset")
            self._cache[key] = meas
            self.support_bound = max(self.support_bound, len(meas))
            elems = list(meas)
            for x in elems:
                for y in elems:
                    d = self.P.h_length(self.model.multiply(self.model.invert(x), y))
                    self.diameter_bound = max(self.diameter_bound, d)
        return self._cache[key]

    def translated(self, gamma, key: CosetKey) -> dict:
        """gamma . nu^{gamma^-1 gH}, a measure on gH."""
        m = self.model
        src = self.key(m.multiply(m.invert(gamma), key.rep))
        return {m.multiply(gamma, z): w for z, w in self.get(src).items()}


def coset_reps_from_flow(flow: Flow, index: int) -> RandomCosetReps:
    """nu^{gH} = mask at the cone vertex of gH for the source 1, restricted to group vertices."""
    graph = flow.graph

    def provider(key: CosetKey) -> dict:
        cv = graph.index.get(ConeVertex(key))
        if cv is None:
            raise Uncertified(f"cone vertex of {key} is outside the ball")
        meas = flow.mask(cv, graph.basepoint).measure
        out = {}
        for v, w in meas.items():
            lab = graph.labels[v]
            if not isinstance(lab, GroupVertex):
                raise AssertionError(f"mask at {key} charges a cone vertex")
            out[lab.element] = w
        return out

    return RandomCosetReps(graph.peripherals, index, provider, "flow")


def free_product_baseline(model: FreeProduct, peripherals: PeripheralStructure, index: int) -> RandomCosetReps:
    """Dirac masses at normal-form representatives (trailing H-syllable removed)."""
    if not isinstance(model, FreeProduct) or not isinstance(peripherals[index], FactorPeripheral):
        raise ValueError("the baseline needs a free product with a factor peripheral")
    return RandomCosetReps(peripherals, index, lambda key: {key.rep: Fraction(1)}, "normal-form")


def bass_serre_cosets(model: FreeProduct, peripherals: PeripheralStructure, index: int, gamma) -> set:
    """H-cosets that are vertices of the Bass-Serre geodesic from the base edge to its gamma-translate."""
    factor = peripherals[index].factor
    out = set()
    prefix = model.identity()
    for i, x in gamma:
        if i == factor:
            out.add(peripherals.coset_key(index, prefix))
        prefix = model.multiply(prefix, model.syllable(i, x))
    return out


def cosets_near(model: GroupModel, peripherals: PeripheralStructure, index: int, radius: int) -> list:
    keys = {peripherals.coset_key(index, g) for g in model.ball(radius)}
    return sorted(keys, key=lambda k: (model.word_length(k.rep), repr(k.rep)))


def almost_invariance_report(reps: RandomCosetReps, gamma, p: float, keys: Iterable[CosetKey]) -> dict:
    rows, missing = [], []
    for key in keys:
        try:
            dev = _norm(combine([(Fraction(1), reps.get(key)), (Fraction(-1), reps.translated(gamma, key))]))
        except Uncertified as exc:
            missing.append((key, str(exc)))
            continue
        rows.append((key, dev))
    nonzero = [k for k, d in rows if d != 0]
    psum = math.fsum(float(d) ** p for _, d in rows)
    return {"rows": rows, "nonzero": nonzero, "p_sum": psum, "uncertified": missing}


# -- induced cocycle --------------------------------------------------------------------
@dataclass
class InducedCocycleValue:
    gamma: object
    values: dict  # CosetKey -> Vector at the canonical representative
    p: float
    uncertified: list = field(default_factory=list)

    def norm(self) -> float:
        return math.fsum(float(_norm(v)) ** self.p for v in self.values.values()) ** (1 / self.p)


class InducedCocycle:
    """C_gamma(g) from a random set of representatives and a peripheral cocycle."""

    def __init__(self, reps: RandomCosetReps, hmodel: HCocycleModel):
        self.reps = reps
        self.h = hmodel
        self.coords, dim = h_coordinates(reps.P)
        if dim != hmodel.dim:
            raise ValueError(f"peripheral has dimension {dim}, cocycle model has {hmodel.dim}")

    def _offset(self, g, x) -> tuple:
        m = self.reps.model
        h = m.multiply(m.invert(g), x)
        if not self.reps.P.contains(h):
            raise AssertionError(f"{x!r} is not in the coset of {g!r}")
        return self.coords(h)

    def _average(self, g, meas: dict) -> Vector:
        return combine((w, self.h.c(self._offset(g, x))) for x, w in sorted(meas.items(), key=repr))

    def potential(self, g) -> Vector:
        """d(g) = sum_x nu^{gH}(x) c(g^-1 x)."""
        return self._average(g, self.reps.get(self.reps.key(g)))

    def value(self, gamma, g) -> Vector:
        key = self.reps.key(g)
        return combine([
            (Fraction(1), self._average(g, self.reps.get(key))),
            (Fraction(-1), self._average(g, self.reps.translated(gamma, key))),
        ])

    def reconstruct(self, gamma, g) -> Vector:
        """C_gamma(g) from the stored value at the canonical representative: C(rep h) = pi_H(h^-1) C(rep)."""
        m = self.reps.model
        key = self.reps.key(g)
        h = self._offset(key.rep, g)
        return self.h.act(self.h.invert(h), self.value(gamma, key.rep))

    def evaluate(self, gamma, keys: Iterable[CosetKey]) -> InducedCocycleValue:
        values, bad = {}, []
        for key in keys:
            try:
                v = self.value(gamma, key.rep)
            except Uncertified as exc:
                bad.append((key, str(exc)))
                continue
            if v:
                values[key] = v
        return InducedCocycleValue(gamma, values, self.h.p, bad)


def induced_cocycle(reps: RandomCosetReps, hmodel: HCocycleModel, gamma, keys) -> InducedCocycleValue:
    return InducedCocycle(reps, hmodel).evaluate(gamma, keys)


def verify_induced_identities(
    reps: RandomCosetReps, hmodel: HCocycleModel, g1, g2, keys: Iterable[CosetKey], h_samples: Sequence = ()
) -> dict:
    """Cocycle relation, H-equivariance and the coboundary form C = d - pi(gamma) d, key by key."""
    ic = InducedCocycle(reps, hmodel)
    m = reps.model
    g12 = m.multiply(g1, g2)
    g1inv = m.invert(g1)
    checked, witness = 0, ""
    ok = {"cocycle": True, "equivariance": True, "potential": True}
    for key in keys:
        g = key.rep
        try:
            lhs = ic.value(g12, g)
            c1 = ic.value(g1, g)
            c2 = ic.reconstruct(g2, m.multiply(g1inv, g))
            c2_direct = ic.value(g2, m.multiply(g1inv, g))
            pot = combine([(Fraction(1), ic.potential(g)), (Fraction(-1), ic.potential(m.multiply(g1inv, g)))])
            eq_rows = [(ic.value(g1, m.multiply(g, h)), ic.reconstruct(g1, m.multiply(g, h))) for h in h_samples]
        except Uncertified:
            continue
        checked += 1
        if lhs != combine([(Fraction(1), c1), (Fraction(1), c2)]):
            ok["cocycle"] = False
            witness = witness or f"cocycle relation fails at {key}"
        if c2 != c2_direct or any(a != b for a, b in eq_rows):
            ok["equivariance"] = False
            witness = witness or f"equivariance fails at {key}"
        if c1 != pot:
            ok["potential"] = False
            witness = witness or f"C != d - pi(gamma) d at {key}"
    return {**ok, "checked": checked, "witness": witness}


def contribution(reps: RandomCosetReps, gamma, keys: Iterable[CosetKey]) -> tuple[Fraction, list, dict]:
    """Max over the given cosets of the expected d_H distance between nu^{gH} and gamma nu^{gamma^-1 gH}."""
    m, P = reps.model, reps.P
    table = {}
    for key in keys:
        try:
            a, b = reps.get(key), reps.translated(gamma, key)
        except Uncertified:
            continue
        total = Fraction(0)
        for x, wx in a.items():
            xinv = m.invert(x)
            for y, wy in b.items():
                total += wx * wy * P.h_length(m.multiply(xinv, y))
        table[key] = total
    if not table:
        return Fraction(0), [], table
    best = max(table.values())
    return best, [k for k, v in table.items() if v == best], table


def h_properness_probe(reps: RandomCosetReps, hmodel: HCocycleModel, gammas: Sequence, keys: Sequence) -> dict:
    """Rows (gamma, contribution, N(C_gamma)) and the lower bound of the properness argument.

    D bounds support diameters, D_c bounds ||c(h)|| over d_H(h) <= 2D, and R is
    chosen with ||c(h)|| > 5 D_c beyond it (||c(h)|| = d_H(h) for the builtin models).
    """
    ic = InducedCocycle(reps, hmodel)
    m, P = reps.model, reps.P
    rows = []
    for gamma in gammas:
        contrib, involved, _ = contribution(reps, gamma, keys)
        val = ic.evaluate(gamma, keys)
        rows.append({"gamma": gamma, "contribution": contrib, "norm": val.norm(), "involved": involved,
                     "value": val})
    D = reps.diameter_bound
    Dc = max([1] + [int(_norm(hmodel.c(ic.coords(h)))) for h in P.h_ball(2 * D)])
    R = max(2 * D + 1, 5 * Dc)
    bound_ok = True
    for row in rows:
        for key in row["involved"]:
            a, b = reps.get(key), reps.translated(row["gamma"], key)
            pairs = [(x, y) for x in sorted(set(a) | set(b), key=repr) for y in sorted(set(a) | set(b), key=repr)]
            x0, y0 = max(pairs, key=lambda xy: P.h_length(m.multiply(m.invert(xy[0]), xy[1])))
            if P.h_length(m.multiply(m.invert(x0), y0)) <= R:
                continue
            lhs = _norm(row["value"].values.get(key, {}))
            rhs = _norm(hmodel.c(ic.coords(m.multiply(m.invert(y0), x0)))) - 2 * Dc
            if lhs < rhs:
                bound_ok = False
    norms = [r["norm"] for r in rows]
    ups = sum(1 for u, v in zip(norms, norms[1:]) if v >= u)
    return {"rows": rows, "D": D, "D_c": Dc, "R": R, "bound_ok": bound_ok,
            "nondecreasing_fraction": ups / max(1, len(norms) - 1)}
