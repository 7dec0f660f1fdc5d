"""Experiment orchestration: configuration, suites, deterministic reports.

A run builds one ball from the configuration, executes the requested
suites in a fixed order and writes one JSON report per suite (plus CSV
tables) into the output directory.  Identical configurations produce
byte-identical reports: all randomness flows from the configured seed,
rationals are written as "num/den" strings and nothing time-dependent is
recorded.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

import yaml

from . import cocycle as cc
from . import induction as ind
from . import properties as props
from .flow import Flow, Uncertified, push_forward
from .graph import (
    BallOverflow,
    ConeVertex,
    ConstantsProfile,
    Graph,
    GroupVertex,
    build_ball,
    dump_ball,
    estimate_delta,
    format_label,
    wheel_over_segment,
)
from .groups import FactorPeripheral, FiniteGroup, FreeProduct, GroupSpecError, make_model, make_peripherals

log = logging.getLogger(__name__)

SCHEMA = 1
SUITES = ("ball", "delta", "masks", "cocycle", "confluence", "properties", "checkpoint",
          "coset-reps", "induce", "dichotomy")

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3

DEFAULT_SAMPLES = {
    "masks": 200,
    "translations": 50,
    "cocycle_pairs": 100,
    "induced_pairs": 50,
    "nonconfluence": 300,
    "decay": 100,
    "triangles": 1000,
    "checkpoint": 200,
    "elements": 4,
}


class ConfigError(ValueError):
    """The configuration does not validate; nothing is written."""


@dataclass
class ExperimentConfig:
    group: dict
    peripherals: list
    radius: int
    coset_depth: int
    profile: str = "desk"
    delta: int | str = "auto"
    overrides: dict = field(default_factory=dict)
    p: list = field(default_factory=lambda: [2.0])
    seed: int = 0
    max_vertices: int = 50_000
    centers: list = field(default_factory=list)
    close_cones: bool = True
    suites: list = field(default_factory=lambda: list(SUITES))
    samples: dict = field(default_factory=lambda: dict(DEFAULT_SAMPLES))
    elements: list = field(default_factory=list)
    h_cocycle: str = "auto"
    dichotomy: dict = field(default_factory=dict)
    wheel: dict = field(default_factory=dict)
    name: str = "experiment"
    out: str = "reports"


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a configuration mapping (already loaded from YAML or JSON)."""
    _require(isinstance(raw, dict), "configuration must be a mapping")
    _require(raw.get("schema") == SCHEMA, f"unsupported or missing schema version (expected {SCHEMA})")
    known = {"schema", "name", "group", "peripherals", "ball", "profile", "p", "seed", "caps", "suites",
             "samples", "elements", "h_cocycle", "dichotomy", "wheel", "out"}
    unknown = set(raw) - known
    _require(not unknown, f"unknown configuration keys {sorted(unknown)}")
    _require(isinstance(raw.get("group"), dict), "group must be a mapping")
    ball = raw.get("ball") or {}
    _require(isinstance(ball, dict), "ball must be a mapping")
    radius = ball.get("radius", 0)
    depth = ball.get("coset_depth", 0)
    _require(isinstance(radius, int) and radius >= 0, "ball.radius must be a non-negative integer")
    _require(isinstance(depth, int) and depth >= 0, "ball.coset_depth must be a non-negative integer")
    prof = raw.get("profile") or {}
    if isinstance(prof, str):
        prof = {"name": prof}
    _require(prof.get("name", "desk") in ("desk", "paper"), "profile.name must be 'desk' or 'paper'")
    delta = prof.get("delta", "auto")
    _require(delta == "auto" or (isinstance(delta, int) and delta >= 1), "profile.delta must be 'auto' or >= 1")
    p = raw.get("p", [2])
    p = p if isinstance(p, list) else [p]
    _require(all(isinstance(x, (int, float)) and x > 1 for x in p), "every p must exceed 1")
    suites = raw.get("suites", list(SUITES))
    bad = [s for s in suites if s not in SUITES]
    _require(not bad, f"unknown suites {bad}")
    samples = dict(DEFAULT_SAMPLES)
    samples.update(raw.get("samples") or {})
    caps = raw.get("caps") or {}
    cfg = ExperimentConfig(
        group=raw["group"],
        peripherals=list(raw.get("peripherals") or []),
        radius=radius,
        coset_depth=depth,
        profile=prof.get("name", "desk"),
        delta=delta,
        overrides=dict(prof.get("overrides") or {}),
        p=[float(x) for x in p],
        seed=int(raw.get("seed", 0)),
        max_vertices=int(caps.get("max_vertices", 50_000)),
        centers=list(ball.get("centers") or []),
        close_cones=bool(ball.get("close_cones", True)),
        suites=[s for s in SUITES if s in suites],
        samples=samples,
        elements=list(raw.get("elements") or []),
        h_cocycle=raw.get("h_cocycle", "auto"),
        dichotomy=dict(raw.get("dichotomy") or {}),
        wheel=dict(raw.get("wheel") or {}),
        name=str(raw.get("name", "experiment")),
        out=str(raw.get("out", "reports")),
    )
    # the group and peripheral specs must build; this catches malformed tables early
    try:
        model = make_model(cfg.group)
        make_peripherals(model, cfg.peripherals)
        for w in cfg.elements + cfg.centers:
            model.parse(w)
    except (GroupSpecError, KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid group specification: {exc}") from exc
    try:
        ConstantsProfile.named(cfg.profile, 1, **cfg.overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(raw)


# -- serialisation --------------------------------------------------------------------
def jsonable(obj: Any) -> Any:
    """Fractions become "num/den" strings; tuples become lists; keys become strings."""
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [jsonable(v) for v in obj]
        return sorted(items, key=repr) if isinstance(obj, (set, frozenset)) else items
    if hasattr(obj, "item"):  # numpy scalars
        return jsonable(obj.item())
    return str(obj)


def write_json(path: Path, data: dict):
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows: list):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([jsonable(x) for x in row])


# -- context ------------------------------------------------------------------------------
class Context:
    """Model, peripherals, ball, profile and flow shared by the suites of one run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.model = make_model(cfg.group)
        self.peripherals = make_peripherals(self.model, cfg.peripherals)
        self.rng = random.Random(cfg.seed)
        self.graph: Graph = build_ball(
            self.model, self.peripherals, cfg.radius, cfg.coset_depth,
            max_vertices=cfg.max_vertices,
            centers=[self.model.parse(w) for w in cfg.centers],
            close_cones=cfg.close_cones,
        )
        self.delta_info: dict = {}
        if cfg.delta == "auto":
            delta, complete = self.measure_delta()
        else:
            delta, complete = int(cfg.delta), True
        self.delta = delta
        self.profile = ConstantsProfile.named(cfg.profile, delta, **cfg.overrides)
        self.flow = Flow(self.graph, self.profile)
        self.base_dist = self.graph.distances(self.graph.basepoint).dist

    def measure_delta(self) -> tuple[int, bool]:
        if not self.delta_info:
            g = self.graph
            if g.n <= 300:
                delta, complete = estimate_delta(g, "exact")
                mode = "exact"
            else:
                delta, complete = estimate_delta(g, "sampled", samples=2000, seed=self.cfg.seed)
                mode = "sampled"
            self.delta_info = {"delta": delta, "complete": complete, "mode": mode}
        return self.delta_info["delta"], self.delta_info["complete"]

    def label(self, v: int) -> str:
        return format_label(self.model, self.graph.labels[v])

    def near(self, radius: int) -> list[int]:
        return [v for v in range(self.graph.n) if 0 <= self.base_dist[v] <= radius]

    def elements(self, radius: int) -> list:
        """Group elements of the ball at coned-off distance <= radius from 1, in a fixed order."""
        out = []
        for v in self.near(radius):
            lab = self.graph.labels[v]
            if isinstance(lab, GroupVertex):
                out.append(lab.element)
        return out

    def sample_elements(self, count: int, radius: int = 3) -> list:
        if self.cfg.elements:
            return [self.model.parse(w) for w in self.cfg.elements]
        pool = [g for g in self.elements(radius) if g != self.model.identity()]
        self.rng.shuffle(pool)
        return pool[:count]

    def fmt(self, g) -> str:
        return self.model.format(g)


# -- suites ---------------------------------------------------------------------------------
SuiteResult = dict


def suite_ball(ctx: Context, out: Path) -> SuiteResult:
    g = ctx.graph
    if g.n <= 5000:
        write_json(out / "ball_dump.json", dump_ball(g))
    return {
        "vertices": g.n,
        "edges": g.edge_count(),
        "cone_vertices": int(g.is_cone.sum()),
        "boundary_vertices": int(g.omitted.sum()),
        "hard_vertices": int(g.hard.sum()),
        "radius": g.radius,
        "coset_depth": g.coset_depth,
        "passed": True,
    }


def suite_delta(ctx: Context, out: Path) -> SuiteResult:
    delta, complete = ctx.measure_delta()
    return {**ctx.delta_info, "profile_delta": ctx.delta, "lower_bound_only": not complete, "passed": True}


def suite_masks(ctx: Context, out: Path) -> SuiteResult:
    """Mass, stationarity and the step bound for sampled masks; equivariance under translations."""
    g, flow, rng, n = ctx.graph, ctx.flow, ctx.rng, ctx.cfg.samples
    targets = ctx.near(2)
    rows, computed, uncertified, witness = [], [], 0, ""
    for _ in range(n["masks"]):
        a, x = rng.choice(targets), rng.randrange(g.n)
        try:
            m = flow.mask(a, x)
        except Uncertified:
            uncertified += 1
            continue
        mass_ok = sum(m.measure.values(), Fraction(0)) == 1
        stat_ok = flow.step(a, m.measure) == m.measure
        if not (mass_ok and stat_ok) and not witness:
            witness = f"mask toward {ctx.label(a)} from {ctx.label(x)}: mass {mass_ok}, stationary {stat_ok}"
        computed.append((a, x))
        rows.append([ctx.label(a), ctx.label(x), m.R, m.r, len(m.measure), mass_ok, stat_ok,
                     " ".join(f"{ctx.label(v)}={w}" for v, w in sorted(m.measure.items()))])
    write_csv(out / "masks.csv", ["a", "x", "steps", "r", "support", "mass_ok", "stationary", "measure"], rows)
    elems = [e for e in ctx.elements(2) if e != ctx.model.identity()]
    eq_checked, attempts = 0, 0
    while computed and elems and eq_checked < n["translations"] and attempts < 50 * n["translations"]:
        attempts += 1
        h = rng.choice(elems)
        a, x = rng.choice(computed)
        ha, hx = g.translate(h, a), g.translate(h, x)
        if ha is None or hx is None:
            continue
        try:
            moved = push_forward(flow.mask(a, x).measure, lambda v: g.translate(h, v))
            other = flow.mask(ha, hx).measure
        except (Uncertified, KeyError):
            continue
        eq_checked += 1
        if moved != other and not witness:
            witness = f"translation by {ctx.fmt(h)} of the mask toward {ctx.label(a)} from {ctx.label(x)}"
    focus: dict = {}
    for a, x in computed:
        for x2 in (x, rng.choice(g.neighbors(x) or [x])):
            try:
                rep = flow.focus_check(a, x, x2)
            except Uncertified:
                continue
            if rep["item"] is None:
                continue
            tally = focus.setdefault(str(rep["item"]), {"checked": 0, "failed": 0})
            tally["checked"] += 1
            if not rep["passed"]:
                tally["failed"] += 1
                if not witness:
                    witness = f"focus item {rep['item']} toward {ctx.label(a)} from {ctx.label(x)}, {ctx.label(x2)}"
    return {
        "computed": len(computed),
        "uncertified": uncertified,
        "equivariance_checked": eq_checked,
        "focus": focus,
        "witness": witness,
        "passed": not witness,
    }


def suite_cocycle(ctx: Context, out: Path) -> SuiteResult:
    """Cocycle identity on sampled pairs and l^p norms with shell tables."""
    flow, rng, n = ctx.flow, ctx.rng, ctx.cfg.samples
    elems = ctx.elements(2)
    targets = ctx.near(3)
    pairs_checked, targets_checked, witness = 0, 0, ""
    attempts = 0
    while pairs_checked < n["cocycle_pairs"] and attempts < 10 * n["cocycle_pairs"]:
        attempts += 1
        g1, g2 = rng.choice(elems), rng.choice(elems)
        ok, checked, w = cc.verify_cocycle_identity(flow, g1, g2, targets)
        if checked:
            pairs_checked += 1
            targets_checked += checked
        if not ok and not witness:
            witness = f"g1={ctx.fmt(g1)}, g2={ctx.fmt(g2)}: {w}"
    norm_rows, shell_rows, norms = [], [], []
    dprime: dict = {}
    for gel in ctx.sample_elements(n["elements"]):
        try:
            value = cc.cocycle_value(flow, gel, range(ctx.graph.n))
        except Uncertified:
            continue
        for p in ctx.cfg.p:
            rep = cc.lp_norm(flow, value, p, dprime=dprime)
            for a, dp, _ in rep.rows:
                dprime.setdefault(a, dp)
            norms.append({
                "g": ctx.fmt(gel), "p": p, "total": rep.total, "exact_total": rep.exact_total,
                "ratio": rep.ratio, "residual": rep.residual, "fitted_shells": rep.fitted_shells,
                "witnesses": rep.witnesses, "witness_floor": rep.witness_floor,
                "lower_bound_ok": rep.lower_bound_ok, "growth": rep.growth,
                "uncertified_targets": len(value.uncertified),
            })
            if not rep.lower_bound_ok and not witness:
                witness = f"norm lower bound fails for {ctx.fmt(gel)} at p={p}"
            for k in sorted(rep.shells):
                shell_rows.append([ctx.fmt(gel), p, k, rep.shell_sizes.get(k, 0), rep.shells[k]])
    write_csv(out / "cocycle_shells.csv", ["g", "p", "dprime", "targets", "sum"], shell_rows)
    return {
        "pairs_checked": pairs_checked,
        "targets_checked": targets_checked,
        "norms": norms,
        "witness": witness,
        "passed": not witness,
    }


def measured_cone_constant(ctx: Context, radius: int = 2) -> int:
    edges = [(u, v) for u in ctx.near(radius) for v in ctx.graph.neighbors(u)]
    best, _ = cc.max_cone_size(ctx.graph, ctx.profile.support_cone, edges)
    return max(best, 3)


def suite_confluence(ctx: Context, out: Path) -> SuiteResult:
    """Non-confluence value 2 on certified hypothesis instances; the decay bound on sphere pairs."""
    g, flow, rng, prof, n = ctx.graph, ctx.flow, ctx.rng, ctx.profile, ctx.cfg.samples
    witness = ""
    values, hyp = [], 0
    cones = [v for v in range(g.n) if g.is_cone[v]]
    for i in range(n["nonconfluence"]):
        if i % 2 and cones:
            a = rng.choice(cones)
            x, x2 = rng.randrange(g.n), rng.randrange(g.n)
        else:
            x, x2 = rng.randrange(g.n), rng.randrange(g.n)
            if x == x2 or not g.interval_certified(x, x2):
                continue
            inner = [v for v in g.interval(x, x2).tolist() if v not in (x, x2)]
            if not inner:
                continue
            a = rng.choice(inner)
        try:
            verdict = cc.nonconfluence_hypothesis(flow, a, x, x2)
            if verdict is not True:
                continue
            hyp += 1
            val = cc.nonconfluence_value(flow, a, x, x2)
        except Uncertified:
            continue
        values.append(val)
        if val != 2 and not witness:
            witness = f"non-confluence at a={ctx.label(a)}, x={ctx.label(x)}, x'={ctx.label(x2)}: {val}"
    C = measured_cone_constant(ctx)
    decay_rows, decay_passed, decay_skipped = [], 0, 0
    for _ in range(n["decay"] * 20):
        if len(decay_rows) >= n["decay"]:
            break
        a = rng.randrange(g.n)
        da = g.distances(a).dist
        top = int(da.max())
        ks = [k for k in range(4) if prof.step * (k + 1) <= top]
        if not ks:
            decay_skipped += 1
            continue
        k = rng.choice(ks)
        sphere = [v for v in range(g.n) if da[v] == prof.step * (k + 1)]
        u = rng.choice(sphere)
        du = g.distances(u).dist
        close = [w for w in sphere if 0 < du[w] < 8 * prof.delta]
        if not close:
            decay_skipped += 1
            continue
        w = rng.choice(close)
        try:
            rep = cc.confluence_decay_report(flow, a, {u: Fraction(1)}, {w: Fraction(1)}, k, C)
        except Uncertified:
            decay_skipped += 1
            continue
        if "skipped" in rep:
            decay_skipped += 1
            continue
        decay_rows.append([ctx.label(a), ctx.label(u), ctx.label(w), k, C, rep["passed"],
                           " ".join(str(s) for s in rep["sequence"]), rep["bound"]])
        if rep["passed"]:
            decay_passed += 1
        elif not witness:
            witness = f"decay bound fails toward {ctx.label(a)} from {ctx.label(u)}, {ctx.label(w)} (k={k})"
    write_csv(out / "decay.csv", ["a", "u", "w", "k", "C", "passed", "sequence", "bound"], decay_rows)
    return {
        "nonconfluence_instances": len(values),
        "nonconfluence_hypotheses": hyp,
        "nonconfluence_values": sorted(set(values)),
        "cone_constant": C,
        "decay_instances": len(decay_rows),
        "decay_passed": decay_passed,
        "decay_skipped": decay_skipped,
        "witness": witness,
        "passed": not witness,
    }


def suite_properties(ctx: Context, out: Path) -> SuiteResult:
    g, rng, n = ctx.graph, ctx.rng, ctx.cfg.samples
    edges = None if g.n <= 500 else [(u, v) for u in ctx.near(1) for v in g.neighbors(u)]
    checks = [
        props.cone_composition(g, ctx.profile.slice_cone, ctx.profile.support_cone - ctx.profile.slice_cone, edges),
        props.theta_squared(g, 10, edges),
        props.angle_symmetry(g, 500, seed=ctx.cfg.seed),
        props.goulets(g, ctx.delta, [(rng.randrange(g.n), rng.randrange(g.n), rng.randrange(g.n))
                                     for _ in range(500)]),
        props.conical_thinness(g, 50 * ctx.delta, n["triangles"], seed=ctx.cfg.seed),
    ]
    res = [c.as_dict() for c in checks]
    return {"checks": res, "passed": all(c.passed for c in checks),
            "witness": next((f"{c.name}: {c.failures[0]}" for c in checks if c.failures), "")}


def wheel_checkpoint(segment: int, small: int = 40) -> dict:
    """Checkpoint at full-size constants on a wheel: the hub sits on every geodesic between far path
    vertices with an angle equal to their distance along the path."""
    delta, complete = estimate_delta(wheel_over_segment(small), "exact")
    profile = ConstantsProfile.paper(delta)
    g = wheel_over_segment(segment)
    hub = segment + 1
    flow = Flow(g, profile)
    res = cc.checkpoint_test(flow, 0, segment, segment - 1, hub)
    return {
        "segment": segment,
        "delta": delta,
        "delta_measured_on": small,
        "threshold": profile.checkpoint,
        "status": res["status"],
        "masks": [dict(m) for m in res.get("masks", ())],
        "reason": res.get("reason", ""),
        "passed": res["status"] == "pass",
    }


def suite_checkpoint(ctx: Context, out: Path) -> SuiteResult:
    g, flow, rng, prof = ctx.graph, ctx.flow, ctx.rng, ctx.profile
    counts = {"pass": 0, "fail": 0, "skipped": 0}
    witness = ""
    for _ in range(ctx.cfg.samples["checkpoint"]):
        a, x = rng.randrange(g.n), rng.randrange(g.n)
        if a == x or not g.interval_certified(a, x):
            counts["skipped"] += 1
            continue
        inner = [c for c in g.interval(a, x).tolist() if c not in (a, x)]
        nb = g.neighbors(x)
        if not inner or not nb:
            counts["skipped"] += 1
            continue
        c, x2 = rng.choice(inner), rng.choice(nb)
        if x2 == a:
            counts["skipped"] += 1
            continue
        res = cc.checkpoint_test(flow, a, x, x2, c, prof.checkpoint)
        counts[res["status"]] += 1
        if res["status"] == "fail" and not witness:
            witness = f"a={ctx.label(a)}, x={ctx.label(x)}, x'={ctx.label(x2)}, c={ctx.label(c)}"
    report = {**counts, "threshold": prof.checkpoint, "profile": prof.name}
    if ctx.cfg.wheel.get("segment"):
        report["wheel"] = wheel_checkpoint(int(ctx.cfg.wheel["segment"]))
        if not report["wheel"]["passed"] and not witness:
            witness = f"wheel checkpoint: {report['wheel']['status']} {report['wheel']['reason']}"
    report["witness"] = witness
    report["passed"] = not witness
    return report


def _h_model(ctx: Context, index: int) -> ind.HCocycleModel:
    kind = ctx.cfg.h_cocycle
    P = ctx.peripherals[index]
    _, dim = ind.h_coordinates(P)
    if kind == "auto":
        kind = "finite" if dim == 0 else ("integers" if dim == 1 else "free-abelian")
    return ind.builtin_h_cocycle(kind, ctx.cfg.p[0], dim if kind == "free-abelian" else None)


def _flow_keys(ctx: Context, index: int, radius: int) -> list:
    keys = []
    for v in ctx.near(radius):
        lab = ctx.graph.labels[v]
        if isinstance(lab, ConeVertex) and lab.key.index == index:
            keys.append(lab.key)
    return keys


def suite_coset_reps(ctx: Context, out: Path) -> SuiteResult:
    """Flow-built representatives: certification, support bounds, almost invariance; the
    normal-form baseline against Bass-Serre cosets when the group is a free product."""
    report: dict = {"peripherals": []}
    witness = ""
    C = measured_cone_constant(ctx)
    gammas = ctx.sample_elements(ctx.cfg.samples["elements"], radius=2)
    for i in range(len(ctx.peripherals)):
        reps = ind.coset_reps_from_flow(ctx.flow, i)
        keys = _flow_keys(ctx, i, max(1, (ctx.cfg.radius or 1) - 1))
        ok_keys, bad = [], 0
        for key in keys:
            try:
                reps.get(key)
                ok_keys.append(key)
            except Uncertified:
                bad += 1
        rows = []
        for gam in gammas:
            r = ind.almost_invariance_report(reps, gam, ctx.cfg.p[0], ok_keys)
            rows.append({"gamma": ctx.fmt(gam), "nonzero": len(r["nonzero"]), "p_sum": r["p_sum"],
                         "uncertified": len(r["uncertified"])})
        entry = {"index": i, "keys": len(keys), "certified": len(ok_keys), "uncertified": bad,
                 "support_bound": reps.support_bound, "diameter_bound": reps.diameter_bound,
                 "cone_constant": C, "almost_invariance": rows}
        if reps.support_bound > C and not witness:
            witness = f"representative support {reps.support_bound} exceeds cone constant {C}"
        if isinstance(ctx.model, FreeProduct) and isinstance(ctx.peripherals[i], FactorPeripheral):
            entry["baseline"] = baseline_check(ctx.model, ctx.peripherals, i, max_syllables=4)
            # reported, not asserted: do the flow representatives coincide with the normal-form ones?
            canon = ind.free_product_baseline(ctx.model, ctx.peripherals, i)
            agree = sum(1 for key in ok_keys if reps.get(key) == canon.get(key))
            entry["baseline"]["flow_agrees"] = {"agree": agree, "compared": len(ok_keys)}
            if not entry["baseline"]["passed"] and not witness:
                witness = f"baseline deviation off the Bass-Serre cosets: {entry['baseline']['witness']}"
        report["peripherals"].append(entry)
    report["witness"] = witness
    report["passed"] = not witness
    return report


def syllable_words(model: FreeProduct, max_syllables: int) -> list:
    """All normal forms with at most the given number of syllables."""
    out = [model.identity()]
    frontier = [model.identity()]
    for _ in range(max_syllables):
        nxt = []
        for g in frontier:
            for i, F in enumerate(model.factors):
                if g and g[-1][0] == i:
                    continue
                for x in F.ball(10 ** 6 if isinstance(F, FiniteGroup) else 1):
                    if x == F.identity():
                        continue
                    nxt.append(g + ((i, x),))
        out.extend(nxt)
        frontier = nxt
    return out


def baseline_check(model: FreeProduct, peripherals, index: int, max_syllables: int = 4) -> dict:
    """For every gamma with at most max_syllables syllables, the cosets where the normal-form
    representatives move are exactly the H-cosets on the Bass-Serre geodesic of gamma."""
    reps = ind.free_product_baseline(model, peripherals, index)
    checked, witness = 0, ""
    for gamma in syllable_words(model, max_syllables):
        expected = ind.bass_serre_cosets(model, peripherals, index, gamma)
        radius = model.word_length(gamma) + 1
        keys = ind.cosets_near(model, peripherals, index, radius)
        r = ind.almost_invariance_report(reps, gamma, 2.0, keys)
        got = set(r["nonzero"])
        checked += 1
        if got != expected and not witness:
            witness = f"gamma={model.format(gamma)}: moved {sorted(map(str, got))}, expected {sorted(map(str, expected))}"
    return {"gammas": checked, "witness": witness, "passed": not witness}


def suite_induce(ctx: Context, out: Path) -> SuiteResult:
    """Induced-cocycle identities for sampled pairs and the properness probe."""
    rng, n = ctx.rng, ctx.cfg.samples
    elems = [e for e in ctx.elements(2)]
    report: dict = {"peripherals": []}
    witness = ""
    for i in range(len(ctx.peripherals)):
        P = ctx.peripherals[i]
        try:
            hm = _h_model(ctx, i)
        except ValueError as exc:
            report["peripherals"].append({"index": i, "skipped": str(exc)})
            continue
        reps = ind.coset_reps_from_flow(ctx.flow, i)
        keys = _flow_keys(ctx, i, max(1, ctx.cfg.radius - 1))
        h_samples = [h for h in P.h_ball(2) if h != ctx.model.identity()][:4]
        pairs, keys_checked = 0, 0
        for _ in range(n["induced_pairs"] * 4):
            if pairs >= n["induced_pairs"]:
                break
            g1, g2 = rng.choice(elems), rng.choice(elems)
            res = ind.verify_induced_identities(reps, hm, g1, g2, keys, h_samples)
            if res["checked"]:
                pairs += 1
                keys_checked += res["checked"]
            if res["witness"] and not witness:
                witness = f"g1={ctx.fmt(g1)}, g2={ctx.fmt(g2)}: {res['witness']}"
        gammas = [ctx.model.power(hh, k) for hh in P.h_generators()[:1] for k in range(0, 6)]
        probe = ind.h_properness_probe(reps, hm, gammas, keys)
        report["peripherals"].append({
            "index": i, "h_cocycle": hm.kind, "pairs_checked": pairs, "keys_checked": keys_checked,
            "probe": [{"gamma": ctx.fmt(r["gamma"]), "contribution": r["contribution"], "norm": r["norm"]}
                      for r in probe["rows"]],
            "probe_bound_ok": probe["bound_ok"], "D": probe["D"], "D_c": probe["D_c"], "R": probe["R"],
        })
        if not probe["bound_ok"] and not witness:
            witness = f"properness lower bound fails for peripheral {i}"
    report["witness"] = witness
    report["passed"] = not witness
    return report


# -- the properness dichotomy ------------------------------------------------------------------
@dataclass
class DichotomyRow:
    g: str
    n: int
    word_length: int
    d: int
    theta: int
    dprime: int
    certified: bool
    norm: float
    contribution: Fraction
    branch: str


def _branch(d: int, theta: int) -> str:
    """Since d' = d + Theta, at least one of the two is >= d'/2."""
    if d + theta == 0:
        return "none"
    return "coned-off" if 2 * d >= d + theta else "angles"


def dichotomy_report(model, peripherals, profile: ConstantsProfile, generator, max_n: int, p: float,
                     radius: int, coset_depth: int, tube: bool, max_vertices: int = 50_000) -> dict:
    """Rows for the family g^n, n = 0..max_n: word length, coned-off distance, angle sum,
    coned-off cocycle norm and the largest peripheral contribution; classification into the
    coned-off branch and the angle branch; and a fit of d_w / A - B <= d'."""
    centers = [model.power(generator, j) for j in range(max_n + 1)] if tube else []
    graph = build_ball(model, peripherals, radius, coset_depth, max_vertices=max_vertices,
                       centers=centers, close_cones=True)
    flow = Flow(graph, profile)
    reps = [ind.coset_reps_from_flow(flow, i) for i in range(len(peripherals))]
    keys = [[lab.key for lab in graph.labels if isinstance(lab, ConeVertex) and lab.key.index == i]
            for i in range(len(peripherals))]
    one = graph.basepoint
    rows: list[DichotomyRow] = []
    for n in range(max_n + 1):
        g = model.power(generator, n)
        v = graph.index.get(GroupVertex(g))
        if v is None:
            raise Uncertified(f"{model.format(g)} is outside the family ball")
        d = int(graph.distances(one).dist[v])
        theta, dprime, ok = cc.theta_and_dprime(graph, one, v)
        value = cc.cocycle_value(flow, g, range(graph.n))
        total = math.fsum(float(cc.norm(w)) ** p for _, w in sorted(value.values.items()))
        contrib = max([ind.contribution(r, g, k)[0] for r, k in zip(reps, keys)], default=Fraction(0))
        rows.append(DichotomyRow(model.format(g), n, model.word_length(g), d, theta, dprime, ok,
                                 total ** (1 / p), contrib, _branch(d, theta)))

    def up_fraction(vals):
        steps = list(zip(vals, vals[1:]))
        return sum(1 for u, w in steps if w > u) / max(1, len(steps))

    big = [r for r in rows if r.dprime > 0]
    classified = all(r.branch != "none" for r in big)
    counts = {b: sum(1 for r in big if r.branch == b) for b in ("coned-off", "angles")}
    dominant = max(counts, key=lambda b: (counts[b], b)) if big else "none"
    norm_up = up_fraction([r.norm for r in rows])
    contrib_up = up_fraction([r.contribution for r in rows])
    branch_up = norm_up if dominant == "coned-off" else contrib_up
    # coarse comparison with the word metric: d_w / A - B <= d' with B = 1
    B = 1
    A = max((Fraction(r.word_length, r.dprime + B) for r in rows), default=Fraction(1))
    A = max(A, Fraction(1))
    status = "inconclusive" if max((r.dprime for r in rows), default=0) < 2 else "ok"
    return {
        "generator": model.format(generator),
        "ball": {"vertices": graph.n, "radius": radius, "coset_depth": coset_depth, "tube": tube},
        "rows": [r.__dict__ for r in rows],
        "all_certified": all(r.certified for r in rows),
        "classified": classified,
        "dominant_branch": dominant,
        "norm_increasing_fraction": norm_up,
        "contribution_increasing_fraction": contrib_up,
        "branch_increasing_fraction": branch_up,
        "A": A,
        "B": B,
        "status": status,
        "passed": status == "ok" and classified and branch_up >= 0.8,
    }


def suite_dichotomy(ctx: Context, out: Path) -> SuiteResult:
    fams = ctx.cfg.dichotomy.get("families") or []
    reports, rows, witness = [], [], ""
    for fam in fams:
        gen = ctx.model.parse(str(fam["generator"]))
        rep = dichotomy_report(
            ctx.model, ctx.peripherals, ctx.profile, gen, int(fam.get("max_n", 10)), ctx.cfg.p[0],
            int(fam.get("radius", ctx.cfg.radius)), int(fam.get("coset_depth", ctx.cfg.coset_depth)),
            bool(fam.get("tube", False)), ctx.cfg.max_vertices,
        )
        reports.append(rep)
        for r in rep["rows"]:
            rows.append([rep["generator"], r["n"], r["g"], r["word_length"], r["d"], r["theta"], r["dprime"],
                         r["norm"], r["contribution"], r["branch"]])
        if not rep["passed"] and not witness:
            witness = f"family {rep['generator']}: {rep['status']}, branch increases on " \
                      f"{rep['branch_increasing_fraction']:.2f} of steps"
    write_csv(out / "dichotomy.csv", ["family", "n", "g", "d_w", "d", "theta", "dprime", "norm",
                                      "contribution", "branch"], rows)
    return {"families": reports, "witness": witness, "passed": not witness}


SUITE_FUNCS: dict[str, Callable[[Context, Path], SuiteResult]] = {
    "ball": suite_ball,
    "delta": suite_delta,
    "masks": suite_masks,
    "cocycle": suite_cocycle,
    "confluence": suite_confluence,
    "properties": suite_properties,
    "checkpoint": suite_checkpoint,
    "coset-reps": suite_coset_reps,
    "induce": suite_induce,
    "dichotomy": suite_dichotomy,
}


def run(cfg: ExperimentConfig, out_dir: str | Path | None = None, suites: list[str] | None = None) -> int:
    """Run the configured suites and write reports; returns the exit status."""
    out = Path(out_dir or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    wanted = [s for s in SUITES if s in (suites or cfg.suites)]
    summary: dict = {"name": cfg.name, "schema": SCHEMA, "seed": cfg.seed, "suites": {}}
    try:
        ctx = Context(cfg)
    except BallOverflow as exc:
        summary["error"] = str(exc)
        summary["exit"] = EXIT_RESOURCE
        write_json(out / "summary.json", summary)
        return EXIT_RESOURCE
    summary["profile"] = ctx.profile.as_dict()
    status = EXIT_OK
    for name in wanted:
        log.info("suite %s", name)
        try:
            report = SUITE_FUNCS[name](ctx, out)
        except BallOverflow as exc:
            report = {"passed": False, "error": str(exc), "resource": True}
            status = EXIT_RESOURCE
        except (AssertionError, Uncertified) as exc:
            report = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        report["profile"] = ctx.profile.name
        write_json(out / f"{name}.json", report)
        summary["suites"][name] = {"passed": report["passed"], "witness": report.get("witness", report.get("error", ""))}
        if not report["passed"] and status == EXIT_OK:
            status = EXIT_VIOLATION
    summary["exit"] = status
    write_json(out / "summary.json", summary)
    return status
