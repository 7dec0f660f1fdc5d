"""Finite balls of coned-off Cayley graphs and synthetic graphs.

Every metric quantity is computed inside a finite graph and returned together
with what can be certified about the infinite graph it approximates.  The
ball is a subgraph, so ball distances are upper bounds.  Lower bounds come
from "hard" boundary vertices: vertices with a missing neighbour through which
a shorter path could leave and re-enter the ball.

Coset members omitted at a ``pendant`` peripheral (a free factor with convex
balls) are not hard: they only lead into regions attached at that member, so
they never shorten a path between retained vertices.  They still count as
omitted for searches that must enumerate neighbours (cones, first edges).
"""
from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Any, Hashable, Iterable, NamedTuple, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .groups import CosetKey, GroupModel, PeripheralStructure

INF = math.inf

# above this size the adjacency stays in CSR form only
_LIST_ADJ_LIMIT = 300_000


class BallOverflow(RuntimeError):
    """The vertex budget was exhausted while building a ball."""


class GroupVertex(NamedTuple):
    element: Any


class ConeVertex(NamedTuple):
    key: CosetKey


class Angle(NamedTuple):
    """Certified interval [lower, upper] for an angle (a punctured distance)."""

    lower: float
    upper: float

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    @property
    def kind(self) -> str:
        if self.lower == self.upper:
            return "infinite" if self.upper == INF else "finite"
        return "bounded"

    @property
    def value(self):
        return self.upper if self.exact else None

    def exceeds(self, theta) -> bool | None:
        """Three-valued ``angle > theta``."""
        if self.lower > theta:
            return True
        if self.upper <= theta:
            return False
        return None


@dataclass
class Distances:
    """BFS layers from one source.

    A path of the full graph that is not in the ball runs from the source to a
    hard vertex, leaves, and re-enters at a hard vertex, so it is at least
    ``hdist[source] + 1 + hdist[v]`` long.
    """

    source: int
    dist: np.ndarray  # -1 where unreachable inside the graph
    hdist: np.ndarray  # distance of each vertex to the nearest hard vertex

    @property
    def hard_radius(self) -> float:
        return self.hdist[self.source]

    def __getitem__(self, v: int) -> int:
        return int(self.dist[v])

    def escape(self, v: int) -> float:
        return self.hdist[self.source] + self.hdist[v] + 1

    def exact(self, v: int) -> bool:
        d = self.dist[v]
        return d >= 0 and d <= self.escape(v)

    def lower(self, v: int) -> float:
        d = self.dist[v]
        if d < 0:
            return self.escape(v)
        return min(int(d), self.escape(v))


@dataclass
class PuncturedSearch:
    """BFS from ``source`` in the graph minus ``removed``, up to depth ``cap``."""

    removed: int
    source: int
    cap: float
    dist: Any  # dict or ndarray
    hard_radius: float  # smallest layer holding a hard boundary vertex
    leak_radius: float  # smallest layer holding any vertex with omitted neighbours
    exhausted: bool
    hdist: Any = None

    def _escape(self, w: int) -> float:
        return self.hard_radius + 1 + (self.hdist[w] if self.hdist is not None else 0)

    def get(self, w: int):
        if isinstance(self.dist, dict):
            return self.dist.get(w)
        d = int(self.dist[w])
        return None if d < 0 or d > self.cap else d

    def angle_to(self, w: int) -> Angle:
        d = self.get(w)
        if d is not None:
            return Angle(min(d, self._escape(w)), d)
        if self.exhausted:
            return Angle(self._escape(w), INF)
        return Angle(min(self.cap + 1, self._escape(w)), INF)

    def outside_lower(self) -> float:
        """Lower bound on the punctured distance to any vertex missing from the graph."""
        if self.exhausted:
            return self.leak_radius + 1
        return min(self.cap + 1, self.leak_radius + 1)


@dataclass
class Cone:
    edge: tuple[int, int]
    theta: float
    vertices: frozenset
    edges: frozenset
    certified: bool
    witness: str = ""


class Graph:
    """Finite undirected graph on vertices 0..n-1 with cone tags and boundary flags."""

    def __init__(
        self,
        n: int,
        edges: Iterable[tuple[int, int]] | None = None,
        *,
        csr: tuple[np.ndarray, np.ndarray] | None = None,
        labels: Sequence[Hashable] | None = None,
        is_cone: np.ndarray | None = None,
        omitted: np.ndarray | None = None,
        hard: np.ndarray | None = None,
        basepoint: int | None = None,
        radius: int | None = None,
    ):
        self.n = n
        if csr is None:
            pairs = np.asarray(list(edges or []), dtype=np.int64).reshape(-1, 2)
            pairs = pairs[pairs[:, 0] != pairs[:, 1]]
            both = np.concatenate([pairs, pairs[:, ::-1]])
            both = np.unique(both, axis=0) if len(both) else both
            order = np.lexsort((both[:, 1], both[:, 0])) if len(both) else np.zeros(0, dtype=np.int64)
            both = both[order]
            indptr = np.zeros(n + 1, dtype=np.int64)
            if len(both):
                np.add.at(indptr, both[:, 0] + 1, 1)
            indptr = np.cumsum(indptr)
            indices = both[:, 1].astype(np.int64) if len(both) else np.zeros(0, dtype=np.int64)
        else:
            indptr, indices = csr
        self.indptr = indptr
        self.indices = indices
        self.labels = list(labels) if labels is not None else None
        self.index = {lab: i for i, lab in enumerate(self.labels)} if self.labels is not None else None
        self.is_cone = is_cone if is_cone is not None else np.zeros(n, dtype=bool)
        self.omitted = omitted if omitted is not None else np.zeros(n, dtype=bool)
        self.hard = hard if hard is not None else np.zeros(n, dtype=bool)
        self.basepoint = basepoint
        self.radius = radius
        self.model: GroupModel | None = None
        self.peripherals: PeripheralStructure | None = None
        self.coset_depth: int | None = None
        self.gates: list[list[int]] = []
        self.pendant_groups: dict[int, list[int]] = {}
        self._adj = None
        if n <= _LIST_ADJ_LIMIT:
            self._adj = [indices[indptr[i]:indptr[i + 1]].tolist() for i in range(n)]
        self._matrix = None
        self._dist_cache: dict[int, Distances] = {}
        self._punct_cache: dict[tuple[int, int], PuncturedSearch] = {}
        self._cone_cache: dict[tuple[tuple[int, int], float], Cone] = {}
        self.hdist = self._hard_distances()

    def _hard_distances(self) -> np.ndarray:
        out = np.full(self.n, INF)
        frontier = np.flatnonzero(self.hard).tolist()
        if not frontier:
            return out
        out[frontier] = 0
        layer = 0
        while frontier:
            layer += 1
            nxt = []
            for u in frontier:
                for w in self.neighbors(u):
                    if out[w] == INF:
                        out[w] = layer
                        nxt.append(w)
            frontier = nxt
        return out

    # -- basic access ---------------------------------------------------
    def neighbors(self, u: int):
        if self._adj is not None:
            return self._adj[u]
        return self.indices[self.indptr[u]:self.indptr[u + 1]].tolist()

    def degree(self, u: int) -> int:
        return int(self.indptr[u + 1] - self.indptr[u])

    def has_edge(self, u: int, v: int) -> bool:
        row = self.indices[self.indptr[u]:self.indptr[u + 1]]
        k = np.searchsorted(row, v)
        return bool(k < len(row) and row[k] == v)

    def edge_count(self) -> int:
        return len(self.indices) // 2

    def label(self, v: int):
        return self.labels[v] if self.labels is not None else v

    def vertex(self, label) -> int:
        if self.index is None:
            return int(label)
        return self.index[label]

    def oriented_edges(self):
        for u in range(self.n):
            for w in self.neighbors(u):
                yield (u, w)

    def matrix(self) -> csr_matrix:
        if self._matrix is None:
            data = np.ones(len(self.indices), dtype=np.float64)
            self._matrix = csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))
        return self._matrix

    @property
    def boundary(self) -> np.ndarray:
        return self.omitted

    # -- distances ------------------------------------------------------
    def distances(self, s: int) -> Distances:
        cached = self._dist_cache.get(s)
        if cached is not None:
            return cached
        if self.n <= 2000:
            dist = np.full(self.n, -1, dtype=np.int64)
            dist[s] = 0
            queue = deque([s])
            while queue:
                u = queue.popleft()
                du = dist[u] + 1
                for w in self._adj[u]:
                    if dist[w] < 0:
                        dist[w] = du
                        queue.append(w)
        else:
            raw = shortest_path(self.matrix(), method="D", unweighted=True, indices=s)
            dist = np.where(np.isinf(raw), -1, raw).astype(np.int64)
        out = Distances(s, dist, self.hdist)
        if len(self._dist_cache) > 4096:
            self._dist_cache.clear()
        self._dist_cache[s] = out
        return out

    def distance(self, u: int, v: int) -> tuple[int, bool]:
        """Ball distance and whether it equals the distance in the full graph."""
        d = self.distances(u)
        if d.dist[v] < 0:
            return -1, False
        return int(d.dist[v]), d.exact(v)

    # -- punctured searches and angles ------------------------------------
    def punctured(self, removed: int, source: int, cap: float = INF) -> PuncturedSearch:
        key = (removed, source)
        cached = self._punct_cache.get(key)
        if cached is not None and (cached.exhausted or cached.cap >= cap):
            return cached
        if self.n > _LIST_ADJ_LIMIT and cap > 10_000:
            res = self._punctured_scipy(removed, source)
        else:
            res = self._punctured_python(removed, source, cap)
        if len(self._punct_cache) > 200_000:
            self._punct_cache.clear()
        self._punct_cache[key] = res
        return res

    def _punctured_python(self, removed, source, cap):
        dist = {source: 0}
        hard_r = 0 if self.hard[source] else INF
        leak_r = 0 if self.omitted[source] else INF
        frontier = [source]
        layer = 0
        exhausted = False
        hard, omitted = self.hard, self.omitted
        while True:
            if not frontier:
                exhausted = True
                break
            if layer >= cap:
                break
            layer += 1
            nxt = []
            for u in frontier:
                for w in self.neighbors(u):
                    if w == removed or w in dist:
                        continue
                    dist[w] = layer
                    nxt.append(w)
                    if hard_r == INF and hard[w]:
                        hard_r = layer
                    if leak_r == INF and omitted[w]:
                        leak_r = layer
            frontier = nxt
        if not exhausted and not frontier:
            exhausted = True
        return PuncturedSearch(removed, source, cap, dist, hard_r, leak_r, exhausted, self.hdist)

    def _punctured_scipy(self, removed, source):
        m = self.matrix().copy()
        m.data[m.indptr[removed]:m.indptr[removed + 1]] = 0
        m.data[m.indices == removed] = 0
        m.eliminate_zeros()
        raw = shortest_path(m, method="D", unweighted=True, indices=source)
        raw[removed] = np.inf
        dist = np.where(np.isinf(raw), -1, raw).astype(np.int64)
        reach_h = dist[self.hard]
        reach_h = reach_h[reach_h >= 0]
        om = dist[self.omitted]
        om = om[om >= 0]
        return PuncturedSearch(
            removed, source, INF, dist,
            float(reach_h.min()) if len(reach_h) else INF,
            float(om.min()) if len(om) else INF,
            True,
            self.hdist,
        )

    def angle(self, v: int, e1: tuple[int, int], e2: tuple[int, int], cap: float = INF) -> Angle:
        """Angle at v between e1 (ending at v) and e2 (starting at v)."""
        if e1[1] != v or e2[0] != v:
            raise ValueError("angle needs t(e1) = o(e2) = v")
        if e2[1] == e1[0]:
            return Angle(0, 0)
        return self.punctured(v, e1[0], cap).angle_to(e2[1])

    def first_edges(self, c: int, x: int) -> tuple[list[int], bool]:
        """Neighbours w of c with d(w,x) = d(c,x) - 1, and whether the list is certified."""
        dx = self.distances(x)
        dc = dx.dist[c]
        if dc <= 0:
            return [], dc == 0
        # neighbours of c are then certified too: hdist changes by at most one per edge
        ok = dc <= self.hdist[c] + self.hdist[x] and not self.hard[c]
        out = [w for w in self.neighbors(c) if dx.dist[w] == dc - 1]
        return out, ok

    def vertex_angle_exceeds(self, c: int, x1: int, x2: int, theta: float) -> bool | None:
        """Three-valued test of "angle at c between x1 and x2 exceeds theta".

        True if some pair of geodesic first edges certifiably makes an angle
        above theta; False if every pair certifiably stays at most theta.
        """
        if c == x1 or c == x2:
            raise ValueError("vertex angle needs c distinct from x1, x2")
        us, ok1 = self.first_edges(c, x1)
        ws, ok2 = self.first_edges(c, x2)
        unknown = not (ok1 and ok2)
        for u in us:
            ps = self.punctured(c, u, theta + 1)
            for w in ws:
                verdict = (Angle(0, 0) if u == w else ps.angle_to(w)).exceeds(theta)
                if verdict:
                    return True
                if verdict is None:
                    unknown = True
        return None if unknown else False

    def max_vertex_angle(self, c: int, x1: int, x2: int, cap: float = INF) -> Angle:
        """Largest angle over geodesic first-edge pairs at c (as an interval)."""
        us, _ = self.first_edges(c, x1)
        ws, _ = self.first_edges(c, x2)
        lo, hi = 0, 0
        for u in us:
            ps = self.punctured(c, u, cap)
            for w in ws:
                a = Angle(0, 0) if u == w else ps.angle_to(w)
                lo, hi = max(lo, a.lower), max(hi, a.upper)
        return Angle(lo, hi)

    def _leak_lower(self, v: int, ps: PuncturedSearch) -> float:
        """Lower bound on the angle at v between ps.source and any omitted neighbour of v."""
        if self.hard[v] or v not in self.pendant_groups:
            return ps.outside_lower()
        lb = INF
        for gid in self.pendant_groups[v]:
            for u in self.gates[gid]:
                if u != v:
                    lb = min(lb, ps.angle_to(u).lower + 1)
        return lb

    # -- cones ------------------------------------------------------------
    def cone(self, e: tuple[int, int], theta: float) -> Cone:
        """Co_theta(e): everything on a path starting with e, of length <= theta,
        with consecutive angles <= theta.  Edges are recorded in both orientations."""
        key = (e, theta)
        cached = self._cone_cache.get(key)
        if cached is not None:
            return cached
        u0, v0 = e
        if not self.has_edge(u0, v0):
            raise ValueError(f"{e} is not an edge")
        best = {e: 1}
        queue = deque([e])
        certified, witness = True, ""
        if theta < 1:
            best = {}
            queue.clear()
        while queue:
            f = queue.popleft()
            length = best[f]
            if length + 1 > theta:
                continue
            p, v = f
            ps = self.punctured(v, p, theta)
            if self.omitted[v] and self._leak_lower(v, ps) <= theta:
                if certified:
                    witness = f"omitted neighbours of vertex {v} reachable within angle {theta}"
                certified = False
            for w in self.neighbors(v):
                verdict = (Angle(0, 0) if w == p else ps.angle_to(w)).exceeds(theta)
                if verdict is None:
                    if certified:
                        witness = f"angle at {v} between {p} and {w} not certified against {theta}"
                    certified = False
                    continue
                if verdict:
                    continue
                g = (v, w)
                if g not in best:
                    best[g] = length + 1
                    queue.append(g)
        verts = {u0, v0}
        edges = set()
        for a, b in best:
            verts.add(a)
            verts.add(b)
            edges.add((a, b))
            edges.add((b, a))
        if theta >= 1:
            edges.add(e)
            edges.add((v0, u0))
        out = Cone(e, theta, frozenset(verts), frozenset(edges), certified, witness)
        self._cone_cache[key] = out
        return out

    # -- geodesics ----------------------------------------------------------
    def interval_certified(self, a: int, x: int) -> bool:
        da, dx = self.distances(a), self.distances(x)
        d = da.dist[x]
        # a geodesic leaving the ball would be at least hdist[a] + hdist[x] + 1 long
        return d >= 0 and d <= self.hdist[a] + self.hdist[x]

    def interval(self, a: int, x: int) -> np.ndarray:
        """Vertices on some geodesic between a and x."""
        da, dx = self.distances(a).dist, self.distances(x).dist
        d = da[x]
        return np.flatnonzero((da >= 0) & (dx >= 0) & (da + dx == d))

    def geodesic_edges(self, a: int, x: int, rho: int) -> list[tuple[int, int]]:
        """E_{a,x}(rho): edges with origin at distance rho from a lying on a
        geodesic from a to x (pointing to x) or from x to a (pointing to a)."""
        da, dx = self.distances(a).dist, self.distances(x).dist
        d = int(da[x])
        if not 0 <= rho <= d:
            return []
        out = []
        for o in np.flatnonzero((da == rho) & (dx == d - rho)).tolist():
            for w in self.neighbors(o):
                if da[w] == rho + 1 and dx[w] == d - rho - 1:
                    out.append((o, w))
                elif da[w] == rho - 1 and dx[w] == d - rho + 1:
                    out.append((o, w))
        return sorted(out)

    def geodesics(self, a: int, x: int, limit: int = 100_000) -> list[list[int]]:
        """All geodesic vertex sequences from a to x (for small instances)."""
        da, dx = self.distances(a).dist, self.distances(x).dist
        d = int(da[x])
        out: list[list[int]] = []

        def walk(path):
            if len(out) >= limit:
                return
            u = path[-1]
            if u == x:
                out.append(list(path))
                return
            for w in self.neighbors(u):
                if da[w] == da[u] + 1 and dx[w] == d - da[w]:
                    path.append(w)
                    walk(path)
                    path.pop()

        walk([a])
        return out

    # -- translations ---------------------------------------------------------
    def translate(self, g, v: int) -> int | None:
        """Index of g.v (left multiplication) if it lies in the ball."""
        lab = translate_label(self.model, self.peripherals, g, self.labels[v])
        return self.index.get(lab)

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.edge_count()}, cones={int(self.is_cone.sum())})"


def translate_label(model: GroupModel, peripherals: PeripheralStructure, g, label):
    if isinstance(label, GroupVertex):
        return GroupVertex(model.multiply(g, label.element))
    key = label.key
    return ConeVertex(peripherals.coset_key(key.index, model.multiply(g, key.rep)))


def format_label(model: GroupModel | None, label) -> str:
    if isinstance(label, GroupVertex):
        return "g:" + model.format(label.element)
    if isinstance(label, ConeVertex):
        return f"c{label.key.index}:" + model.format(label.key.rep)
    return str(label)


# -- construction ---------------------------------------------------------------
def build_ball(
    model: GroupModel,
    peripherals: PeripheralStructure,
    R: int,
    coset_depth: int,
    max_vertices: int = 50_000,
    centers: Sequence | None = None,
    close_cones: bool = False,
) -> Graph:
    """Ball of radius R around the identity in the coned-off Cayley graph.

    Each cone vertex is joined to the members rep*h of its coset with
    d_H(h) <= coset_depth; distances are measured in this truncated graph.
    With ``centers`` the result is the R-neighbourhood of those elements
    (a tube around a path, say); the identity must be among them.

    With ``close_cones`` the cone vertex of every coset met at radius R is
    added as well (at distance R + 1).  When the group splits freely along
    its peripherals this leaves no vertex whose omitted neighbours could
    shorten a path, so every distance in the ball is exact.
    """
    if R < 0:
        raise ValueError("radius must be non-negative")
    gens = model.generators()
    gen_set = set(gens)
    hballs = [P.h_ball(coset_depth) for P in peripherals.subgroups]
    complete = []
    for P, hb in zip(peripherals.subgroups, hballs):
        complete.append(P.finite and len(hb) == len(P.h_ball(10 ** 6 if P.finite else 0)))
    in_h = [[P.contains(s) for s in gens] for P in peripherals.subgroups]
    split = _free_splitting(model, peripherals, gens, in_h)

    def depth_ok(i, g):
        P = peripherals[i]
        off = model.multiply(model.invert(P.rep(g)), g)
        return P.h_length(off) <= coset_depth

    def piece(f, g):
        return ("factor", f, model.factor_coset(g, f)[0])

    def candidates(label):
        """(neighbours as (label, piece or None), pieces with members cut by depth, hard flag).

        The piece of a neighbour names the region a missing neighbour would
        hang from; None means a missing neighbour cannot be accounted for.
        """
        nbrs = []
        cut: set = set()
        hard = False
        if isinstance(label, GroupVertex):
            g = label.element
            for k, s in enumerate(gens):
                h = model.multiply(g, s)
                excluded = [i for i in range(len(peripherals)) if in_h[i][k] and not depth_ok(i, h)]
                if excluded:
                    if split is not None:
                        cut.add(piece(split[0][k], g))
                    elif all(peripherals[i].pendant for i in excluded):
                        cut.update(peripherals.coset_key(i, g) for i in excluded)
                    else:
                        hard = True
                    continue
                nbrs.append((GroupVertex(h), piece(split[0][k], g) if split is not None else None))
            for i in range(len(peripherals)):
                if depth_ok(i, g):
                    nbrs.append((ConeVertex(peripherals.coset_key(i, g)), None))
                else:
                    hard = True
        else:
            key = label.key
            own = piece(split[1][key.index], key.rep) if split is not None else key
            for h in hballs[key.index]:
                nbrs.append((GroupVertex(model.multiply(key.rep, h)), own if split is not None else None))
            if not complete[key.index]:
                if split is not None or peripherals[key.index].pendant:
                    cut.add(own)
                else:
                    hard = True
        return nbrs, cut, hard

    base = GroupVertex(model.identity())
    starts = [base]
    for c in centers or []:
        lab = GroupVertex(c)
        if lab not in starts:
            starts.append(lab)
    dist = {lab: 0 for lab in starts}
    order = list(starts)
    cand: dict = {}
    queue = deque(starts)

    def admit(w, d):
        dist[w] = d
        order.append(w)
        if len(order) > max_vertices:
            raise BallOverflow(f"ball exceeds {max_vertices} vertices (R={R}, depth={coset_depth})")

    while queue:
        lab = queue.popleft()
        cand[lab] = candidates(lab)
        if dist[lab] >= R:
            continue
        for w, _ in cand[lab][0]:
            if w not in dist:
                admit(w, dist[lab] + 1)
                queue.append(w)
    if split is not None and close_cones and R >= 1:
        # cone vertices one step out, so that every retained coset member keeps its cone
        for lab in list(order):
            if dist[lab] == R and isinstance(lab, GroupVertex):
                for w, _ in cand[lab][0]:
                    if isinstance(w, ConeVertex) and w not in dist:
                        admit(w, R + 1)
                        cand[w] = candidates(w)
    index = {lab: i for i, lab in enumerate(order)}
    n = len(order)
    hard_arr = np.zeros(n, dtype=bool)
    edges = []
    gate_of: dict = {}
    for lab in order:
        i = index[lab]
        nb, cut, hard = cand[lab]
        for key in cut:
            gate_of.setdefault(key, set()).add(i)
        for w, pc in nb:
            j = index.get(w)
            if j is None:
                if pc is None:
                    hard = True
                else:
                    gate_of.setdefault(pc, set()).add(i)
            elif i < j:
                edges.append((i, j))
            elif j < i:
                edges.append((j, i))
        hard_arr[i] = hard
    is_cone = np.array([isinstance(lab, ConeVertex) for lab in order], dtype=bool)
    pieces = []
    for key, members in gate_of.items():
        gates = set(members)
        cone = _piece_cone(model, peripherals, split, key)
        j = index.get(cone) if cone is not None else None
        if j is not None:
            gates.add(j)
        if split is not None and not _piece_harmless(model, split, key, gates, order, index, gen_set, cone, j):
            hard_arr[sorted(gates)] = True
            continue
        pieces.append((key, sorted(gates)))
    omitted = hard_arr.copy()
    graph = Graph(n, edges, labels=order, is_cone=is_cone, omitted=omitted, hard=hard_arr, basepoint=0, radius=R)
    # every path into the omitted part of a harmless piece passes one of its gates
    for key, gates in pieces:
        gid = len(graph.gates)
        graph.gates.append(gates)
        for i in gates:
            if i in gate_of[key]:
                graph.omitted[i] = True
                graph.pendant_groups.setdefault(i, []).append(gid)
    graph.model = model
    graph.peripherals = peripherals
    graph.coset_depth = coset_depth
    if split is not None and len(starts) > 1 and (graph.distances(0).dist < 0).any():
        raise ValueError("the neighbourhood of the centers is disconnected")
    return graph


def _free_splitting(model, peripherals, gens, in_h):
    """(factor of each generator, factor of each peripheral) when every peripheral
    is exactly one free factor of a known free splitting; otherwise None."""
    factors = [model.free_factor_of(s) for s in gens]
    if any(f is None for f in factors):
        return None
    per_factor = []
    for i, P in enumerate(peripherals.subgroups):
        fs = {factors[k] for k in range(len(gens)) if in_h[i][k]}
        if not P.pendant or len(fs) != 1:
            return None
        f = fs.pop()
        if any(factors[k] == f and not in_h[i][k] for k in range(len(gens))):
            return None
        per_factor.append(f)
    return factors, per_factor


def _piece_cone(model, peripherals, split, key):
    if split is None:
        return ConeVertex(key) if isinstance(key, CosetKey) else None
    _, f, rep = key
    for i, fi in enumerate(split[1]):
        if fi == f:
            return ConeVertex(peripherals.coset_key(i, rep))
    return None


def _piece_harmless(model, split, key, gates, order, index, gen_set, cone, cone_id) -> bool:
    """No path through the omitted part of a factor coset joins two gates faster
    than the retained graph does, even with one retained vertex deleted."""
    _, f, rep = key
    if cone is not None and cone_id is None:
        return False
    members = [order[i].element for i in gates if i != cone_id]
    shape = model.factor_shape(f)
    if shape == "finite":
        return all(model.multiply(model.invert(u), v) in gen_set for u in members for v in members if u != v)
    if shape != "line":
        return False
    # retained members must form one interval of the line, so the omitted part is two rays
    gen = next(s for s in gen_set if model.free_factor_of(s) == f and model.factor_position(f, model.factor_coset(s, f)[1]) == 1)
    pos = sorted(model.factor_position(f, model.factor_coset(u, f)[1]) for u in members)
    lo, hi = pos[0], pos[0]
    while GroupVertex(model.multiply(rep, model.power(gen, hi + 1))) in index:
        hi += 1
    while GroupVertex(model.multiply(rep, model.power(gen, lo - 1))) in index:
        lo -= 1
    return pos[-1] <= hi


def synthetic(n: int, edges: Iterable[tuple[int, int]], cones: Iterable[int] = (), labels=None) -> Graph:
    is_cone = np.zeros(n, dtype=bool)
    for c in cones:
        is_cone[c] = True
    return Graph(n, edges, labels=labels, is_cone=is_cone, basepoint=0)


def path_graph(n: int) -> Graph:
    """Vertices 0..n joined consecutively."""
    return synthetic(n + 1, [(i, i + 1) for i in range(n)])


def cycle_graph(n: int) -> Graph:
    return synthetic(n, [(i, (i + 1) % n) for i in range(n)])


def tree_graph(branching: int, depth: int) -> Graph:
    edges, frontier, nxt_id = [], [0], 1
    for _ in range(depth):
        new = []
        for u in frontier:
            for _ in range(branching):
                edges.append((u, nxt_id))
                new.append(nxt_id)
                nxt_id += 1
        frontier = new
    return synthetic(nxt_id, edges)


def random_tree(n: int, rng: random.Random) -> Graph:
    return synthetic(n, [(i, rng.randrange(i)) for i in range(1, n)])


def wheel_over_segment(n: int) -> Graph:
    """A path 0..n plus a hub (vertex n+1, tagged as a cone vertex) joined to every path vertex."""
    hub = n + 1
    m = n + 1  # path vertices
    # CSR built directly: this graph may have millions of vertices
    deg = np.full(m + 1, 3, dtype=np.int64)
    deg[0] = deg[n] = 2
    if n == 0:
        deg[0] = 1
    deg[hub] = m
    indptr = np.zeros(m + 2, dtype=np.int64)
    indptr[1:] = np.cumsum(deg)
    indices = np.empty(indptr[-1], dtype=np.int64)
    i = np.arange(m, dtype=np.int64)
    start = indptr[:m]
    # path vertices: [left, right, hub] in sorted order (hub has the largest id)
    pos = start.copy()
    left = i >= 1
    indices[pos[left]] = i[left] - 1
    pos[left] += 1
    right = i < n
    indices[pos[right]] = i[right] + 1
    pos[right] += 1
    indices[pos] = hub
    indices[indptr[hub]:] = i
    is_cone = np.zeros(m + 1, dtype=bool)
    is_cone[hub] = True
    return Graph(m + 1, csr=(indptr, indices), is_cone=is_cone, basepoint=0)


def load_edge_list(text: str) -> Graph:
    """Parse ``u v`` edge lines and ``cone u`` tags; ``#`` starts a comment."""
    names: dict[str, int] = {}
    edges, cones = [], []

    def vid(tok):
        if tok not in names:
            names[tok] = len(names)
        return names[tok]

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "cone" and len(parts) == 2:
            cones.append(vid(parts[1]))
        elif len(parts) == 2:
            edges.append((vid(parts[0]), vid(parts[1])))
        else:
            raise ValueError(f"line {lineno}: expected 'u v' or 'cone u', got {raw!r}")
    labels = list(names)
    return synthetic(len(labels), edges, cones, labels=labels)


def dump_ball(graph: Graph) -> dict:
    """Structured dump: vertex table with flags, and adjacency."""
    base = graph.distances(graph.basepoint).dist if graph.basepoint is not None else None
    verts = []
    for v in range(graph.n):
        verts.append({
            "id": v,
            "label": format_label(graph.model, graph.label(v)),
            "cone": bool(graph.is_cone[v]),
            "dist": int(base[v]) if base is not None else None,
            "boundary": bool(graph.omitted[v]),
            "hard": bool(graph.hard[v]),
        })
    return {
        "format": "conedflow-ball/1",
        "radius": graph.radius,
        "coset_depth": graph.coset_depth,
        "vertices": verts,
        "adjacency": [graph.neighbors(v) for v in range(graph.n)],
    }


# -- hyperbolicity ----------------------------------------------------------------
def _bottleneck(dist_rows: np.ndarray, da: np.ndarray, db: np.ndarray, a: int, b: int, adj) -> np.ndarray:
    """For every p, the max over geodesics [a,b] of min_q d(p,q) (vectorised over p)."""
    d = da[b]
    nodes = np.flatnonzero((da >= 0) & (db >= 0) & (da + db == d))
    nodes = nodes[np.argsort(-da[nodes], kind="stable")]
    val: dict[int, np.ndarray] = {}
    for q in nodes.tolist():
        row = dist_rows[q]
        if q == b:
            val[q] = row
            continue
        best = None
        for w in adj(q):
            if da[w] == da[q] + 1 and w in val:
                best = val[w] if best is None else np.maximum(best, val[w])
        val[q] = np.minimum(row, best)
    return val[a]


def estimate_delta(graph: Graph, mode: str = "exact", samples: int = 2000, seed: int = 0,
                   max_exact: int = 300) -> tuple[int, bool]:
    """Smallest positive integer delta making all examined geodesic triangles delta-thin.

    Every side of a triangle must lie in the delta-neighbourhood of the union
    of the other two sides, for every choice of geodesics.  Returns
    ``(delta, complete)``; ``complete`` is False in sampled mode (the value is
    then a lower bound on the true constant).
    """
    if mode == "exact":
        if graph.n > max_exact:
            raise ValueError(f"exact mode is limited to {max_exact} vertices")
        verts = list(range(graph.n))
        triples = [(x, y, z) for x in verts for y in verts if x < y for z in verts]
    else:
        rng = random.Random(seed)
        triples = [tuple(rng.randrange(graph.n) for _ in range(3)) for _ in range(samples)]
    # rows of the distance matrix, on demand
    rows: dict[int, np.ndarray] = {}

    def row(v):
        if v not in rows:
            r = graph.distances(v).dist.astype(np.int64).copy()
            r[r < 0] = 10 ** 9
            rows[v] = r
        return rows[v]

    bott: dict[tuple[int, int], np.ndarray] = {}

    def bottleneck(a, b):
        key = (a, b) if a <= b else (b, a)
        if key not in bott:
            a2, b2 = key
            ra, rb = row(a2), row(b2)
            nodes = np.flatnonzero(ra + rb == ra[b2])
            dist_rows = {q: row(q) for q in nodes.tolist()}
            bott[key] = _bottleneck(dist_rows, ra, rb, a2, b2, graph.neighbors)
        return bott[key]

    worst = 0
    for x, y, z in triples:
        if x == y:
            continue
        rx, ry = row(x), row(y)
        side = np.flatnonzero(rx + ry == rx[y])
        bx, by = bottleneck(x, z), bottleneck(y, z)
        val = int(np.minimum(bx[side], by[side]).max())
        worst = max(worst, val)
    return max(1, worst), mode == "exact"


# -- constants ---------------------------------------------------------------------
@dataclass(frozen=True)
class ConstantsProfile:
    """Thresholds used by the flow, all derived from an integer delta unless overridden."""

    name: str
    delta: int
    step: int
    alpha: int
    slice_cone: int
    support_cone: int
    ending_select: int
    ending_classify: int
    theta0: int
    checkpoint: int
    nonconfluence: int
    stability_alpha: int
    thin_cone: int

    @classmethod
    def paper(cls, delta: int) -> "ConstantsProfile":
        if delta < 1:
            raise ValueError("delta must be a positive integer")
        d = delta
        return cls("paper", d, 5 * d, 2 * d, 80 * d, 160 * d, 900 * d, 1000 * d, 1160 * d,
                   (2000 * d) ** 2, 10 * (160 * d) ** 2, 4 * d, 50 * d)

    @classmethod
    def desk(cls, delta: int = 1) -> "ConstantsProfile":
        """Reduced thresholds that keep cones and angles certifiable in small balls.

        Steps and metric slack keep their full-size values; every angle and cone
        parameter is shrunk.  Results under this profile are heuristic evidence.
        """
        d = delta
        return cls("desk", d, 5 * d, 2 * d, 3 * d, 6 * d, 2 * d, 3 * d, 6 * d,
                   6 * d, 8 * d, 4 * d, 3 * d)

    @classmethod
    def named(cls, name: str, delta: int, **overrides) -> "ConstantsProfile":
        if name == "paper":
            base = cls.paper(delta)
        elif name == "desk":
            base = cls.desk(delta)
        else:
            raise ValueError(f"unknown profile {name!r}")
        if overrides:
            unknown = set(overrides) - set(cls.__dataclass_fields__)
            if unknown:
                raise ValueError(f"unknown profile fields {sorted(unknown)}")
            fields = {**base.__dict__, **{k: int(v) for k, v in overrides.items()}}
            fields["name"] = f"{name}+override"
            base = cls(**fields)
        return base

    def cap(self, threshold: int = 0) -> int:
        return max(self.support_cone, threshold) + 1

    def as_dict(self) -> dict:
        return dict(self.__dict__)
