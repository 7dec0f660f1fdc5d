"""Group models with canonical normal forms, and peripheral coset bookkeeping.

Elements are plain hashable values in canonical form, so element equality is
Python equality:

* finite groups given by a table: ``int`` indices into the table,
* free groups: tuples of ``(generator_index, sign)`` letters, freely reduced,
* free abelian groups: tuples of exponents,
* free products: tuples of ``(factor_index, factor_element)`` syllables, no
  syllable is trivial and consecutive syllables come from different factors.
"""
from __future__ import annotations

import re
from collections import deque
from itertools import product
from typing import Any, Hashable, Iterable, NamedTuple, Sequence

Element = Hashable


class GroupSpecError(ValueError):
    """Raised for malformed group or peripheral specifications."""


class GroupModel:
    """Base class. Subclasses implement the arithmetic on canonical forms."""

    kind = "abstract"
    labels: tuple[str, ...] = ()

    def identity(self) -> Element:
        raise NotImplementedError

    def multiply(self, g: Element, h: Element) -> Element:
        raise NotImplementedError

    def invert(self, g: Element) -> Element:
        raise NotImplementedError

    def word_length(self, g: Element) -> int:
        raise NotImplementedError

    def generators(self) -> list[Element]:
        """Symmetric generating set (closed under inversion, no identity)."""
        raise NotImplementedError

    def gen(self, label: str) -> Element:
        raise NotImplementedError

    def format(self, g: Element) -> str:
        raise NotImplementedError

    # A free splitting G = F_0 * F_1 * ... lets a truncated Cayley graph know
    # that whatever lies beyond a missing neighbour hangs off one factor coset.
    def free_factor_of(self, s: Element) -> int | None:
        """Index of the free factor containing generator s (None: no splitting known)."""
        return None

    def factor_coset(self, g: Element, f: int) -> tuple[Element, Any]:
        """(canonical representative of g F_f, the F_f-part of g)."""
        raise NotImplementedError

    def factor_shape(self, f: int) -> str | None:
        """"line" for infinite cyclic factors, "finite" for finite ones."""
        return None

    def factor_position(self, f: int, x) -> int:
        """Signed exponent of an element of an infinite cyclic factor."""
        raise NotImplementedError

    def ball(self, radius: int) -> list[Element]:
        """All elements of word length <= radius, sorted by (length, repr)."""
        seen = {self.identity(): 0}
        frontier = [self.identity()]
        for r in range(1, radius + 1):
            nxt = []
            for g in frontier:
                for s in self.generators():
                    h = self.multiply(g, s)
                    if h not in seen:
                        seen[h] = r
                        nxt.append(h)
            frontier = nxt
            if not frontier:
                break
        return sorted(seen, key=lambda g: (seen[g], repr(g)))

    def power(self, g: Element, n: int) -> Element:
        if n < 0:
            g, n = self.invert(g), -n
        out = self.identity()
        for _ in range(n):
            out = self.multiply(out, g)
        return out

    def product(self, elements: Iterable[Element]) -> Element:
        out = self.identity()
        for g in elements:
            out = self.multiply(out, g)
        return out

    def parse(self, text: str) -> Element:
        """Parse a word such as ``"a b^-1 a^3"`` or ``"aB"`` (capital = inverse)."""
        text = text.strip()
        if text in ("", "1", "e", "id"):
            return self.identity()
        labels = sorted(self.labels, key=len, reverse=True)
        pattern = "|".join(re.escape(lab) for lab in labels)
        caps = [lab.upper() for lab in labels if lab.upper() not in self.labels and lab.upper() != lab]
        cap_pattern = "|".join(re.escape(c) for c in sorted(caps, key=len, reverse=True))
        tok = re.compile(
            rf"\s*(?:(?P<lab>{pattern})" + (rf"|(?P<cap>{cap_pattern})" if caps else "") + r")(?:\^(?P<exp>-?\d+))?"
        )
        pos, out = 0, self.identity()
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            m = tok.match(text, pos)
            if not m:
                raise GroupSpecError(f"cannot parse word {text!r} at position {pos}")
            exp = int(m.group("exp")) if m.group("exp") else 1
            if m.group("lab"):
                g = self.gen(m.group("lab"))
            else:
                g = self.invert(self.gen(m.group("cap").lower()))
            out = self.multiply(out, self.power(g, exp))
            pos = m.end()
        return out


class FiniteGroup(GroupModel):
    """Finite group from a multiplication table ``table[i][j] = i*j``."""

    kind = "finite"

    def __init__(self, table: Sequence[Sequence[int]], generators: dict[str, int], name: str = ""):
        n = len(table)
        if n == 0 or any(len(row) != n for row in table):
            raise GroupSpecError("group table must be a non-empty square array")
        self.table = [list(map(int, row)) for row in table]
        if any(not 0 <= v < n for row in self.table for v in row):
            raise GroupSpecError("table entries out of range")
        ids = [i for i in range(n) if all(self.table[i][j] == j and self.table[j][i] == j for j in range(n))]
        if len(ids) != 1:
            raise GroupSpecError("table has no two-sided identity")
        self._id = ids[0]
        for i, j, k in product(range(n), repeat=3):
            if self.table[self.table[i][j]][k] != self.table[i][self.table[j][k]]:
                raise GroupSpecError(f"table is not associative at ({i},{j},{k})")
        self._inv = []
        for i in range(n):
            inv = [j for j in range(n) if self.table[i][j] == self._id]
            if len(inv) != 1:
                raise GroupSpecError(f"element {i} has no unique inverse")
            self._inv.append(inv[0])
        self.order = n
        self.name = name
        self.labels = tuple(generators)
        self._gens_by_label = dict(generators)
        gens = set()
        for g in generators.values():
            if not 0 <= g < n:
                raise GroupSpecError("generator index out of range")
            if g != self._id:
                gens.add(g)
                gens.add(self._inv[g])
        self._gens = sorted(gens)
        self._length = self._lengths(self._gens)
        if len(self._length) != n:
            raise GroupSpecError("generators do not generate the group")

    def _lengths(self, gens: Sequence[int]) -> dict[int, int]:
        dist = {self._id: 0}
        queue = deque([self._id])
        while queue:
            g = queue.popleft()
            for s in gens:
                h = self.table[g][s]
                if h not in dist:
                    dist[h] = dist[g] + 1
                    queue.append(h)
        return dist

    @classmethod
    def cyclic(cls, n: int, label: str = "t") -> "FiniteGroup":
        table = [[(i + j) % n for j in range(n)] for i in range(n)]
        return cls(table, {label: 1 % n}, name=f"Z/{n}")

    def identity(self):
        return self._id

    def multiply(self, g, h):
        return self.table[g][h]

    def invert(self, g):
        return self._inv[g]

    def word_length(self, g):
        return self._length[g]

    def generators(self):
        return list(self._gens)

    def gen(self, label):
        return self._gens_by_label[label]

    def format(self, g):
        if g == self._id:
            return "1"
        # shortest word in the labelled generators, deterministic
        back = {self._id: None}
        queue = deque([self._id])
        labelled = sorted(
            [(lab, s, 1) for lab, s in self._gens_by_label.items()]
            + [(lab, self._inv[s], -1) for lab, s in self._gens_by_label.items() if self._inv[s] != s]
        )
        while queue:
            x = queue.popleft()
            if x == g:
                break
            for lab, s, e in labelled:
                y = self.table[x][s]
                if y not in back:
                    back[y] = (x, lab, e)
                    queue.append(y)
        letters = []
        while back[g] is not None:
            g, lab, e = back[g]
            letters.append(lab if e == 1 else lab + "^-1")
        return " ".join(reversed(letters))


class FreeGroup(GroupModel):
    kind = "free"

    def __init__(self, labels: Sequence[str]):
        if not labels:
            raise GroupSpecError("free group needs at least one generator")
        self.labels = tuple(labels)

    def identity(self):
        return ()

    def multiply(self, g, h):
        out = list(g)
        for letter in h:
            if out and out[-1][0] == letter[0] and out[-1][1] == -letter[1]:
                out.pop()
            else:
                out.append(letter)
        return tuple(out)

    def invert(self, g):
        return tuple((i, -s) for i, s in reversed(g))

    def word_length(self, g):
        return len(g)

    def generators(self):
        return [((i, s),) for i in range(len(self.labels)) for s in (1, -1)]

    def gen(self, label):
        return ((self.labels.index(label), 1),)

    def free_factor_of(self, s):
        return s[0][0]

    def factor_coset(self, g, f):
        k = len(g)
        while k and g[k - 1][0] == f:
            k -= 1
        return g[:k], g[k:]

    def factor_shape(self, f):
        return "line"

    def factor_position(self, f, x):
        return sum(e for _, e in x)

    def format(self, g):
        if not g:
            return "1"
        parts = []
        for i, s in g:
            if parts and parts[-1][0] == i and (parts[-1][1] > 0) == (s > 0):
                parts[-1][1] += s
            else:
                parts.append([i, s])
        return " ".join(self.labels[i] + ("" if e == 1 else f"^{e}") for i, e in parts)


class FreeAbelianGroup(GroupModel):
    kind = "free-abelian"

    def __init__(self, labels: Sequence[str]):
        if not labels:
            raise GroupSpecError("free abelian group needs at least one generator")
        self.labels = tuple(labels)

    def identity(self):
        return (0,) * len(self.labels)

    def multiply(self, g, h):
        return tuple(a + b for a, b in zip(g, h))

    def invert(self, g):
        return tuple(-a for a in g)

    def word_length(self, g):
        return sum(abs(a) for a in g)

    def generators(self):
        d = len(self.labels)
        return [tuple(s if j == i else 0 for j in range(d)) for i in range(d) for s in (1, -1)]

    def gen(self, label):
        i = self.labels.index(label)
        return tuple(1 if j == i else 0 for j in range(len(self.labels)))

    def format(self, g):
        parts = [lab + ("" if e == 1 else f"^{e}") for lab, e in zip(self.labels, g) if e]
        return " ".join(parts) or "1"


class FreeProduct(GroupModel):
    """Free product of component models, in alternating-syllable normal form.

    Word length is the sum of the syllable lengths measured in the factors.
    """

    kind = "free-product"

    def __init__(self, factors: Sequence[GroupModel]):
        if len(factors) < 2:
            raise GroupSpecError("free product needs at least two factors")
        self.factors = list(factors)
        labels: list[str] = []
        for f in factors:
            labels.extend(f.labels)
        if len(set(labels)) != len(labels):
            raise GroupSpecError("factor generator labels must be distinct")
        self.labels = tuple(labels)

    def identity(self):
        return ()

    def syllable(self, i: int, x) -> tuple:
        return () if x == self.factors[i].identity() else ((i, x),)

    def multiply(self, g, h):
        out = list(g)
        for i, x in h:
            if out and out[-1][0] == i:
                y = self.factors[i].multiply(out[-1][1], x)
                out.pop()
                if y != self.factors[i].identity():
                    out.append((i, y))
            else:
                out.append((i, x))
        return tuple(out)

    def invert(self, g):
        return tuple((i, self.factors[i].invert(x)) for i, x in reversed(g))

    def word_length(self, g):
        return sum(self.factors[i].word_length(x) for i, x in g)

    def generators(self):
        return [((i, s),) for i, f in enumerate(self.factors) for s in f.generators()]

    def gen(self, label):
        for i, f in enumerate(self.factors):
            if label in f.labels:
                return ((i, f.gen(label)),)
        raise KeyError(label)

    def format(self, g):
        return " ".join(self.factors[i].format(x) for i, x in g) or "1"

    def free_factor_of(self, s):
        return s[0][0]

    def factor_coset(self, g, f):
        if g and g[-1][0] == f:
            return g[:-1], g[-1][1]
        return g, self.factors[f].identity()

    def factor_shape(self, f):
        F = self.factors[f]
        if isinstance(F, FiniteGroup):
            return "finite"
        if isinstance(F, (FreeGroup, FreeAbelianGroup)) and len(F.labels) == 1:
            return "line"
        return None

    def factor_position(self, f, x):
        F = self.factors[f]
        if isinstance(F, FreeGroup):
            return sum(e for _, e in x)
        return x[0]


class CosetKey(NamedTuple):
    """Canonical name of the left coset ``rep * H_index``."""

    index: int
    rep: Any


class Peripheral:
    """One peripheral subgroup H_i with membership, coset keys and d_H.

    ``pendant`` records that H is a free factor with convex word-metric balls:
    coset members beyond any truncation depth only lead into regions of the
    coned-off graph attached at that member, so omitting them never shortens
    a path between retained vertices.
    """

    pendant = False
    finite = False

    def __init__(self, model: GroupModel, name: str = ""):
        self.model = model
        self.name = name

    def contains(self, g) -> bool:
        raise NotImplementedError

    def rep(self, g):
        """Canonical coset representative of gH."""
        raise NotImplementedError

    def h_length(self, h) -> int:
        """Word length d_H(1, h) of an element of H."""
        raise NotImplementedError

    def h_ball(self, radius: int) -> list:
        """Elements of H with d_H <= radius (as elements of G)."""
        raise NotImplementedError

    def h_generators(self) -> list:
        raise NotImplementedError


class FactorPeripheral(Peripheral):
    """A designated factor of a free product."""

    pendant = True

    def __init__(self, model: FreeProduct, factor: int, name: str = ""):
        super().__init__(model, name or f"factor{factor}")
        self.factor = factor
        self.finite = isinstance(model.factors[factor], FiniteGroup)

    def contains(self, g):
        return len(g) == 0 or (len(g) == 1 and g[0][0] == self.factor)

    def rep(self, g):
        if g and g[-1][0] == self.factor:
            return g[:-1]
        return g

    def h_length(self, h):
        return self.model.word_length(h)

    def h_ball(self, radius):
        f = self.model.factors[self.factor]
        return [self.model.syllable(self.factor, x) for x in f.ball(radius)]

    def h_generators(self):
        f = self.model.factors[self.factor]
        return [self.model.syllable(self.factor, s) for s in f.generators()]


class SubsetPeripheral(Peripheral):
    """Subgroup of a free group generated by a subset of the basis (a free factor)."""

    pendant = True

    def __init__(self, model: FreeGroup, gens: Sequence[int], name: str = ""):
        super().__init__(model, name or "<" + ",".join(model.labels[i] for i in gens) + ">")
        self.gens = frozenset(gens)

    def contains(self, g):
        return all(i in self.gens for i, _ in g)

    def rep(self, g):
        k = len(g)
        while k and g[k - 1][0] in self.gens:
            k -= 1
        return g[:k]

    def h_length(self, h):
        return len(h)

    def h_ball(self, radius):
        sub = FreeGroup([self.model.labels[i] for i in sorted(self.gens)])
        order = sorted(self.gens)
        return [tuple((order[i], s) for i, s in w) for w in sub.ball(radius)]

    def h_generators(self):
        return [((i, s),) for i in sorted(self.gens) for s in (1, -1)]


class CoordinatePeripheral(Peripheral):
    """Coordinate subgroup of a free abelian group."""

    def __init__(self, model: FreeAbelianGroup, coords: Sequence[int], name: str = ""):
        super().__init__(model, name or "<" + ",".join(model.labels[i] for i in coords) + ">")
        self.coords = frozenset(coords)

    def contains(self, g):
        return all(a == 0 for i, a in enumerate(g) if i not in self.coords)

    def rep(self, g):
        return tuple(0 if i in self.coords else a for i, a in enumerate(g))

    def h_length(self, h):
        return sum(abs(a) for a in h)

    def h_ball(self, radius):
        sub = FreeAbelianGroup([self.model.labels[i] for i in sorted(self.coords)])
        order = sorted(self.coords)
        d = len(self.model.labels)
        out = []
        for w in sub.ball(radius):
            v = [0] * d
            for i, a in zip(order, w):
                v[i] = a
            out.append(tuple(v))
        return out

    def h_generators(self):
        d = len(self.model.labels)
        return [tuple(s if j == i else 0 for j in range(d)) for i in sorted(self.coords) for s in (1, -1)]


class FiniteSubgroupPeripheral(Peripheral):
    """Finite subgroup of a finite group given by an element list."""

    finite = True

    def __init__(self, model: FiniteGroup, elements: Sequence[int], name: str = ""):
        super().__init__(model, name or "H")
        elems = set(elements) | {model.identity()}
        for a in elems:
            for b in elems:
                if model.multiply(a, b) not in elems:
                    raise GroupSpecError("peripheral element list is not a subgroup")
        self.elements = sorted(elems)
        gens = [s for s in model.generators() if s in elems]
        lengths = model._lengths(gens) if gens else {}
        if len(lengths) != len(elems):
            gens = [h for h in self.elements if h != model.identity()]
            lengths = model._lengths(gens)
        self._gens = gens
        self._length = lengths

    def contains(self, g):
        return g in self._length

    def rep(self, g):
        return min(self.model.multiply(g, h) for h in self.elements)

    def h_length(self, h):
        return self._length[h]

    def h_ball(self, radius):
        return sorted((h for h in self.elements if self._length[h] <= radius), key=lambda h: (self._length[h], h))

    def h_generators(self):
        return list(self._gens)


class PeripheralStructure:
    """The family H_1, ..., H_k of a group model."""

    def __init__(self, model: GroupModel, subgroups: Sequence[Peripheral]):
        self.model = model
        self.subgroups = list(subgroups)

    def __len__(self):
        return len(self.subgroups)

    def __getitem__(self, i) -> Peripheral:
        return self.subgroups[i]

    def coset_key(self, i: int, g) -> CosetKey:
        return CosetKey(i, self.subgroups[i].rep(g))

    def canonical_rep(self, key: CosetKey):
        return key.rep

    def coset_offset(self, key: CosetKey, g):
        """h in H_i with g = rep * h (g must lie in the coset)."""
        return self.model.multiply(self.model.invert(key.rep), g)


def coset_key(model: GroupModel, peripherals: PeripheralStructure, i: int, g) -> CosetKey:
    return peripherals.coset_key(i, g)


def canonical_rep(key: CosetKey):
    return key.rep


def make_model(spec: dict) -> GroupModel:
    """Build a model from a config mapping.

    Supported kinds: ``cyclic`` (order, label), ``finite`` (table, generators),
    ``free`` (generators), ``free-abelian`` (generators), ``free-product``
    (factors: list of specs).
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise GroupSpecError("group spec must be a mapping with a 'kind'")
    kind = spec["kind"]
    if kind == "cyclic":
        return FiniteGroup.cyclic(int(spec["order"]), spec.get("label", "t"))
    if kind == "finite":
        gens = spec.get("generators")
        if not isinstance(gens, dict):
            raise GroupSpecError("finite group needs a generators mapping label -> index")
        return FiniteGroup(spec["table"], {str(k): int(v) for k, v in gens.items()}, spec.get("name", ""))
    if kind == "free":
        return FreeGroup([str(x) for x in spec["generators"]])
    if kind == "free-abelian":
        return FreeAbelianGroup([str(x) for x in spec["generators"]])
    if kind == "free-product":
        return FreeProduct([make_model(f) for f in spec["factors"]])
    raise GroupSpecError(f"unsupported group kind {kind!r}")


def make_peripherals(model: GroupModel, specs: Sequence[dict] | None) -> PeripheralStructure:
    """Peripheral designations: ``{factor: i}``, ``{generators: [labels]}`` or ``{elements: [ids]}``."""
    subgroups: list[Peripheral] = []
    for spec in specs or []:
        if "factor" in spec:
            if not isinstance(model, FreeProduct):
                raise GroupSpecError("factor peripherals need a free product")
            subgroups.append(FactorPeripheral(model, int(spec["factor"]), spec.get("name", "")))
        elif "generators" in spec:
            if isinstance(model, FreeGroup):
                idx = [model.labels.index(x) for x in spec["generators"]]
                subgroups.append(SubsetPeripheral(model, idx, spec.get("name", "")))
            elif isinstance(model, FreeAbelianGroup):
                idx = [model.labels.index(x) for x in spec["generators"]]
                subgroups.append(CoordinatePeripheral(model, idx, spec.get("name", "")))
            else:
                raise GroupSpecError("generator-subset peripherals need a free or free abelian group")
        elif "elements" in spec:
            if not isinstance(model, FiniteGroup):
                raise GroupSpecError("element-list peripherals need a finite group")
            subgroups.append(FiniteSubgroupPeripheral(model, [int(x) for x in spec["elements"]], spec.get("name", "")))
        else:
            raise GroupSpecError(f"unrecognised peripheral spec {spec!r}")
    return PeripheralStructure(model, subgroups)


def word_length(model: GroupModel, g) -> int:
    return model.word_length(g)
