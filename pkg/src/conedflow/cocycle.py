"""Measure algebra, confluence, and the cocycle c(g)(a) = mu_1(a) - mu_g(a)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

from .flow import Flow, Measure, StepKind, Uncertified, combine, push_forward
from .graph import INF, ConeVertex, GroupVertex, Graph

Signed = dict  # vertex id -> nonzero Fraction


# -- measure algebra -----------------------------------------------------------
def meet(eta: Measure, eta2: Measure) -> Measure:
    out = {}
    for v in eta.keys() & eta2.keys():
        w = min(eta[v], eta2[v])
        if w > 0:
            out[v] = w
    return dict(sorted(out.items()))


def sym_diff(eta: Measure, eta2: Measure) -> Measure:
    m = meet(eta, eta2)
    out = combine([(Fraction(1), eta), (Fraction(1), eta2), (Fraction(-2), m)])
    return out


def norm(eta: dict) -> Fraction:
    return sum((abs(w) for w in eta.values()), Fraction(0))


def difference(eta: Measure, eta2: Measure) -> Signed:
    return combine([(Fraction(1), eta), (Fraction(-1), eta2)])


def is_beta_confluent(flow: Flow, a: int, eta: Measure, eta2: Measure, beta) -> bool:
    """Meet gain of one flow step, cross-checked against the symmetric-difference form."""
    beta = Fraction(beta)
    t1, t2 = flow.step(a, eta), flow.step(a, eta2)
    d0 = norm(sym_diff(eta, eta2))
    by_meet = norm(meet(t1, t2)) >= norm(meet(eta, eta2)) + beta * d0
    by_diff = norm(sym_diff(t1, t2)) <= (1 - 2 * beta) * d0
    if by_meet != by_diff:
        raise AssertionError(f"confluence forms disagree at a={a}: meet {by_meet}, difference {by_diff}")
    return by_meet


def max_cone_size(graph: Graph, theta: int, edges: Iterable[tuple[int, int]] | None = None) -> tuple[int, int]:
    """Largest certified cone (counted in vertices) over the given edges; also the number examined."""
    best, seen = 0, 0
    for e in edges if edges is not None else graph.oriented_edges():
        cone = graph.cone(e, theta)
        if cone.certified:
            seen += 1
            best = max(best, len(cone.vertices))
    return best, seen


def confluence_decay_report(flow: Flow, a: int, eta: Measure, eta2: Measure, k: int, C: int) -> dict:
    """Symmetric differences along k regular steps, against the (1 - 2/C)^k bound."""
    g, p = flow.graph, flow.profile
    da = g.distances(a).dist
    radius = p.step * (k + 1)
    supp = sorted(set(eta) | set(eta2))
    if any(da[v] != radius for v in supp):
        return {"skipped": f"supports not on the sphere of radius {radius}"}
    diam = max(int(g.distances(u).dist[v]) for u in supp for v in supp)
    if diam >= 8 * p.delta:
        return {"skipped": f"union of supports has diameter {diam} >= {8 * p.delta}"}
    seq = [norm(sym_diff(eta, eta2))]
    cur, cur2 = eta, eta2
    per_step_ok = True
    for i in range(1, k + 2):
        cur, cur2 = flow.step(a, cur), flow.step(a, cur2)
        seq.append(norm(sym_diff(cur, cur2)))
        if i <= k and seq[i] > (1 - Fraction(2, C)) * seq[i - 1]:
            per_step_ok = False
    bound = (1 - Fraction(2, C)) ** k * seq[0]
    tail_ok = all(s <= bound for s in seq[k:])
    return {
        "sequence": seq,
        "bound": bound,
        "C": C,
        "per_step_ok": per_step_ok,
        "passed": tail_ok and all(seq[i + 1] <= seq[i] for i in range(len(seq) - 1)),
    }


# -- the cocycle ------------------------------------------------------------------
@dataclass
class CocycleValue:
    g: object
    values: dict  # target vertex -> Signed
    uncertified: list = field(default_factory=list)

    def norm_at(self, a: int) -> Fraction:
        return norm(self.values.get(a, {}))


def _source(graph: Graph, g) -> int:
    if graph.labels is None:
        return int(g)
    v = graph.index.get(GroupVertex(g))
    if v is None:
        raise Uncertified(f"element {g!r} is outside the ball")
    return v


def cocycle_value(flow: Flow, g, targets: Iterable[int], base=None) -> CocycleValue:
    """c(g)(a) = mu_1(a) - mu_g(a) on the targets whose masks are certified."""
    graph = flow.graph
    one = graph.basepoint if base is None else base
    src = _source(graph, g)
    values, bad = {}, []
    for a in targets:
        try:
            values[a] = difference(flow.mask(a, one).measure, flow.mask(a, src).measure)
        except Uncertified as exc:
            bad.append((a, str(exc)))
    return CocycleValue(g, values, bad)


def translate_signed(graph: Graph, g, w: Signed) -> Signed:
    return push_forward(w, lambda v: graph.translate(g, v))


def verify_cocycle_identity(flow: Flow, g1, g2, targets: Iterable[int]) -> tuple[bool, int, str]:
    """c(g1 g2)(a) = c(g1)(a) + g1 . c(g2)(g1^-1 a) at every target where all terms are certified.

    Returns (holds, number of targets checked, witness of the first failure).
    """
    graph = flow.graph
    model = graph.model
    g1inv = model.invert(g1)
    g12 = model.multiply(g1, g2)
    checked = 0
    for a in targets:
        b = graph.translate(g1inv, a)
        if b is None:
            continue
        try:
            lhs = cocycle_value(flow, g12, [a])
            c1 = cocycle_value(flow, g1, [a])
            c2 = cocycle_value(flow, g2, [b])
            if lhs.uncertified or c1.uncertified or c2.uncertified:
                continue
            moved = translate_signed(graph, g1, c2.values[b])
        except (Uncertified, KeyError):
            continue
        rhs = combine([(Fraction(1), c1.values[a]), (Fraction(1), moved)])
        checked += 1
        if lhs.values[a] != rhs:
            return False, checked, f"target {a}: {lhs.values[a]} != {rhs}"
    return True, checked, ""


def affine_apply(flow: Flow, g, w: dict, targets: Iterable[int]) -> dict:
    """(g . w)(a) = g_* w(g^-1 a) + c(g)(a), on the given targets."""
    graph = flow.graph
    ginv = graph.model.invert(g)
    out = {}
    for a in targets:
        c = cocycle_value(flow, g, [a])
        if c.uncertified:
            raise Uncertified(f"c({g!r}) at target {a}: {c.uncertified[0][1]}")
        b = graph.translate(ginv, a)
        moved = {}
        if b is not None and b in w:
            moved = translate_signed(graph, g, w[b])
        elif b is None and w:
            raise Uncertified(f"translate of target {a} is outside the ball")
        val = combine([(Fraction(1), moved), (Fraction(1), c.values[a])])
        if val:
            out[a] = val
    return out


# -- angles along geodesics ---------------------------------------------------------
def theta_and_dprime(graph: Graph, u: int, v: int, cap: int = 10 ** 6) -> tuple[int, int, bool]:
    """Minimal sum of angles at cone vertices over geodesics from u to v.

    Returns (Theta, d + Theta, certified).  Angle intervals are propagated
    through the geodesic DAG; the result is certified when the lower and upper
    minima agree.
    """
    if u == v:
        return 0, 0, True
    if not graph.interval_certified(u, v):
        raise Uncertified(f"geodesics between {u} and {v} may leave the ball")
    du, dv = graph.distances(u).dist, graph.distances(v).dist
    d = int(du[v])
    # best[(p, q)]: (lower, upper) minimal angle sum over geodesic prefixes ending with edge p -> q
    best: dict[tuple[int, int], tuple[float, float]] = {}
    for w in graph.neighbors(u):
        if du[w] == 1 and dv[w] == d - 1:
            best[(u, w)] = (0, 0)
    for layer in range(1, d):
        for (p, q), (lo, hi) in sorted((k, val) for k, val in best.items() if du[k[1]] == layer):
            for r in graph.neighbors(q):
                if du[r] != layer + 1 or dv[r] != d - layer - 1:
                    continue
                if graph.is_cone[q]:
                    ang = graph.angle(q, (p, q), (q, r), cap)
                    add_lo, add_hi = ang.lower, ang.upper
                else:
                    add_lo = add_hi = 0
                cand = (lo + add_lo, hi + add_hi)
                old = best.get((q, r))
                best[(q, r)] = cand if old is None else (min(old[0], cand[0]), min(old[1], cand[1]))
    finals = [val for (p, q), val in best.items() if q == v]
    lo = min(f[0] for f in finals)
    hi = min(f[1] for f in finals)
    ok = lo == hi and hi != INF
    theta = int(hi) if hi != INF else int(lo)
    return theta, d + theta, ok


# -- norms -----------------------------------------------------------------------------
@dataclass
class NormReport:
    p: float
    shells: dict  # d' -> sum of ||c(g)(a)||^p
    shell_sizes: dict  # d' -> number of targets
    total: float
    ratio: float | None
    residual: float | None
    fitted_shells: int
    witnesses: int
    witness_floor: float
    lower_bound_ok: bool
    exact_total: Fraction | None = None
    growth: float | None = None
    rows: list = field(default_factory=list)


def geometric_fit(values: list[float]) -> tuple[float | None, float | None]:
    """Least-squares fit of log v_k = log A + k log rho; returns (rho, max relative residual)."""
    ks = [k for k, v in enumerate(values) if v > 0]
    if len(ks) < 2:
        return None, None
    xs = np.array(ks, dtype=float)
    ys = np.log(np.array([values[k] for k in ks], dtype=float))
    slope, icpt = np.polyfit(xs, ys, 1)
    pred = np.exp(icpt + slope * xs)
    obs = np.exp(ys)
    resid = float(np.max(np.abs(pred - obs) / obs))
    return float(math.exp(slope)), resid


def lp_norm(flow: Flow, value: CocycleValue, p: float, dprime: dict | None = None) -> NormReport:
    """Shell sums of ||c(g)(a)||_1^p organised by d'(1, a), a geometric tail fit,
    and the census of non-confluence witnesses on the geodesics from 1 to g."""
    graph = flow.graph
    one = graph.basepoint
    shells: dict[int, float] = {}
    sizes: dict[int, int] = {}
    rows = []
    exact = Fraction(0) if float(p).is_integer() else None
    for a in sorted(value.values):
        nrm = norm(value.values[a])
        if dprime is not None and a in dprime:
            dp = dprime[a]
        else:
            try:
                _, dp, ok = theta_and_dprime(graph, one, a)
            except Uncertified:
                continue
            if not ok:
                continue
        sizes[dp] = sizes.get(dp, 0) + 1
        shells[dp] = shells.get(dp, 0.0) + float(nrm) ** p
        if exact is not None:
            exact += nrm ** int(p)
        rows.append((a, dp, nrm))
    total = math.fsum(shells[k] for k in sorted(shells))
    # tail fit: from the largest shell onward
    keys = sorted(shells)
    ratio = resid = None
    fitted = 0
    if keys:
        peak = max(keys, key=lambda k: (shells[k], -k))
        tail = [shells.get(k, 0.0) for k in range(peak, keys[-1] + 1)]
        while tail and tail[-1] == 0:
            tail.pop()
        fitted = sum(1 for t in tail if t > 0)
        ratio, resid = geometric_fit(tail)
    # witnesses: finite-valence vertices strictly between 1 and g on a geodesic with ||c|| = 2
    src = _source(graph, value.g)
    witnesses = 0
    d1g = int(graph.distances(one).dist[src])
    for a in graph.interval(one, src).tolist():
        if a in (one, src) or graph.is_cone[a]:
            continue
        if value.norm_at(a) == 2:
            witnesses += 1
    lower_ok = (exact >= witnesses * 2 ** int(p)) if exact is not None else total >= witnesses * 2.0 ** p
    size_ratio, _ = geometric_fit([sizes.get(k, 0) for k in range(min(sizes, default=0), max(sizes, default=0) + 1)])
    return NormReport(p, shells, sizes, total, ratio, resid, fitted, witnesses, d1g / 2 - 1,
                      lower_ok, exact, size_ratio, rows)


# -- checkpoint, non-confluence, kappa -------------------------------------------------
def checkpoint_test(flow: Flow, a: int, x: int, x2: int, c: int, threshold: int | None = None) -> dict:
    """mu_x(a) = mu_x2(a) = mu_c(a) when c on [a, x] has angle above the checkpoint threshold."""
    graph = flow.graph
    theta = flow.profile.checkpoint if threshold is None else threshold
    if x != x2 and not graph.has_edge(x, x2):
        return {"status": "skipped", "reason": "x and x' are not neighbours"}
    try:
        if c not in set(graph.interval(a, x).tolist()) or not graph.interval_certified(a, x):
            return {"status": "skipped", "reason": f"{c} not certified on a geodesic [a, x]"}
        verdict = graph.vertex_angle_exceeds(c, a, x, theta)
        if verdict is not True:
            return {"status": "skipped", "reason": f"angle at {c} not certified above {theta}"}
        m1, m2, m3 = (flow.mask(a, s).measure for s in (x, x2, c))
    except Uncertified as exc:
        return {"status": "skipped", "reason": str(exc)}
    ok = m1 == m2 == m3
    return {"status": "pass" if ok else "fail", "masks": (m1, m2, m3), "threshold": theta}


def nonconfluence_hypothesis(flow: Flow, a: int, x: int, x2: int) -> bool | None:
    """Whether (a, x, x2) certifiably satisfies either item of the non-confluence statement."""
    graph, p = flow.graph, flow.profile
    if a in (x, x2):
        return False
    if graph.is_cone[a]:
        return graph.vertex_angle_exceeds(a, x, x2, p.nonconfluence)
    dx = graph.distances(x)
    if not graph.interval_certified(x, x2):
        return None
    if dx.dist[x2] < 10 * p.delta:
        return False
    if a not in set(graph.interval(x, x2).tolist()):
        return False
    da = graph.distances(a).dist
    return bool(da[x] >= 5 * p.delta and da[x2] >= 5 * p.delta)


def nonconfluence_value(flow: Flow, a: int, x: int, x2: int) -> Fraction:
    return norm(sym_diff(flow.mask(a, x).measure, flow.mask(a, x2).measure))


def kappa_fit(samples: list[tuple[int, Fraction]], knee: int = 0) -> dict:
    """Fit log ||mu_x1(a) - mu_x2(a)|| against d + Theta; zero rows are excluded and counted."""
    rows = [(dp, float(v)) for dp, v in samples if dp >= knee]
    zeros = sum(1 for _, v in rows if v == 0)
    pts = [(dp, v) for dp, v in rows if v > 0]
    if len(pts) < 2 or len({dp for dp, _ in pts}) < 2:
        return {"status": "inconclusive", "samples": len(rows), "zero_rows": zeros}
    xs = np.array([dp for dp, _ in pts], dtype=float)
    ys = np.log(np.array([v for _, v in pts]))
    slope, icpt = np.polyfit(xs, ys, 1)
    resid = ys - (icpt + slope * xs)
    return {
        "status": "fitted",
        "kappa": float(math.exp(slope)),
        "intercept": float(icpt),
        "residual_rms": float(np.sqrt(np.mean(resid ** 2))),
        "samples": len(rows),
        "zero_rows": zeros,
    }


def growth_rate(sizes: dict) -> float | None:
    """Exponential growth of shell cardinalities (gamma_G estimate)."""
    keys = sorted(sizes)
    if len(keys) < 2:
        return None
    rho, _ = geometric_fit([sizes.get(k, 0) for k in range(keys[0], keys[-1] + 1)])
    return rho
