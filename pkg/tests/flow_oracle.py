"""Brute-force reimplementation of the flow, straight from its definition.

Deliberately naive: adjacency is a dict of sets, every distance and angle is
a fresh BFS, nothing is cached between calls.  It shares no code with the
package beyond the plain threshold numbers it is handed.
"""
from __future__ import annotations

from collections import deque
from fractions import Fraction

INF = float("inf")


class Oracle:
    def __init__(self, n, edges, cones=(), *, step, alpha, slice_cone, ending_select, ending_classify):
        self.adj = {v: set() for v in range(n)}
        for u, v in edges:
            self.adj[u].add(v)
            self.adj[v].add(u)
        self.cones = set(cones)
        self.step_length = step
        self.alpha = alpha
        self.slice_cone = slice_cone
        self.ending_select = ending_select
        self.ending_classify = ending_classify

    # plain BFS, optionally avoiding one vertex
    def bfs(self, s, avoid=None):
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for w in self.adj[u]:
                if w != avoid and w not in dist:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return dist

    def d(self, u, v):
        return self.bfs(u).get(v, INF)

    def angle(self, v, e1, e2):
        """d_{X minus v}(o(e1), t(e2))."""
        if e1[0] == e2[1]:
            return 0
        return self.bfs(e1[0], avoid=v).get(e2[1], INF)

    def vertex_angle(self, c, x1, x2):
        """Largest angle at c between a first edge towards x1 and one towards x2."""
        best = -1
        for u in self.adj[c]:
            if self.d(u, x1) != self.d(c, x1) - 1:
                continue
            for w in self.adj[c]:
                if self.d(w, x2) != self.d(c, x2) - 1:
                    continue
                best = max(best, self.angle(c, (u, c), (c, w)))
        return best

    def cone_vertices(self, e, theta):
        """Endpoints of edge sequences e = e_1, ..., e_k with k <= theta and
        consecutive angles <= theta."""
        if theta < 1:
            return set(e)
        seen = {e}
        layer = {e}
        for _ in range(int(theta) - 1):
            nxt = set()
            for f in layer:
                p, v = f
                for w in self.adj[v]:
                    if self.angle(v, f, (v, w)) <= theta:
                        nxt.add((v, w))
            layer = nxt - seen
            seen |= nxt
        return {x for f in seen for x in f}

    def geodesic_edges(self, a, x, rho):
        D = self.d(a, x)
        out = set()
        for o in self.adj:
            if self.d(a, o) != rho or self.d(o, x) != D - rho:
                continue
            for w in self.adj[o]:
                if self.d(a, w) == rho + 1 and self.d(w, x) == D - rho - 1:
                    out.add((o, w))
                if self.d(a, w) == rho - 1 and self.d(w, x) == D - rho + 1:
                    out.add((o, w))
        return out

    def slice(self, a, x, rho):
        D = self.d(a, x)
        if D == 0:
            return {a}
        out = set()
        for t in self.adj:
            if self.d(a, t) != rho or rho + self.d(t, x) > D + self.alpha:
                continue
            if all(t in self.cone_vertices(e, self.slice_cone) for e in self.geodesic_edges(a, x, rho)):
                out.add(t)
        return out

    def step_dirac(self, a, x):
        if a == x:
            return {x: Fraction(1)}
        D = self.d(a, x)
        if D > self.step_length:
            r = (D - 1) // self.step_length
            return uniform(self.slice(a, x, self.step_length * r))
        between = [c for c in self.adj if c not in (a, x) and self.d(a, c) + self.d(c, x) == D]
        if a in self.cones:
            if D > 1:
                return uniform(self.slice(a, x, 1))
            return {x: Fraction(1)}
        if not any(self.vertex_angle(c, a, x) > self.ending_classify for c in between):
            return {x: Fraction(1)}
        chosen = [c for c in between if self.vertex_angle(c, a, x) > self.ending_select]
        nearest = min(self.d(a, c) for c in chosen)
        closest = [c for c in chosen if self.d(a, c) == nearest]
        assert len(closest) == 1, closest
        return {closest[0]: Fraction(1)}

    def step(self, a, eta):
        out = {}
        for x, w in eta.items():
            for y, u in self.step_dirac(a, x).items():
                out[y] = out.get(y, 0) + w * u
        return out

    def mask(self, a, x):
        """(measure, number of steps to reach it)."""
        eta = {x: Fraction(1)}
        k = 0
        while True:
            nxt = self.step(a, eta)
            if nxt == eta:
                return eta, k
            eta, k = nxt, k + 1


def uniform(vs):
    w = Fraction(1, len(vs))
    return {v: w for v in vs}


def oracle_for(n, edges, profile, cones=()):
    return Oracle(
        n, edges, cones,
        step=profile.step, alpha=profile.alpha, slice_cone=profile.slice_cone,
        ending_select=profile.ending_select, ending_classify=profile.ending_classify,
    )
