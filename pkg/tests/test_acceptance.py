"""Acceptance criteria, one test each. Every test records a one-line verdict that
is printed in the terminal summary, whether it passes or fails."""
import json
import random
import time
from fractions import Fraction

import pytest

from conedflow import harness
from conedflow.flow import Flow
from conedflow.graph import ConstantsProfile, synthetic
from conedflow.groups import make_model, make_peripherals
from conftest import CONFIGS, VERDICTS
from flow_oracle import oracle_for


def record(number, ok, detail):
    VERDICTS[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
    assert ok, VERDICTS[number]


_runs: dict = {}


def run(name, suites, tmp_root, **changes):
    """Run suites on a config once per session and return (reports, seconds)."""
    key = (name, tuple(suites), tuple(sorted(changes.items())))
    if key not in _runs:
        cfg = harness.load_config(CONFIGS / name)
        for k, v in changes.items():
            setattr(cfg, k, v)
        out = tmp_root / f"{name}-{len(_runs)}"
        start = time.perf_counter()
        harness.run(cfg, out, suites)
        took = time.perf_counter() - start
        reports = {s: json.loads((out / f"{s}.json").read_text()) for s in suites}
        _runs[key] = reports, took
    return _runs[key]


@pytest.fixture(scope="module")
def tmp_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


EXACT = ["masks", "cocycle", "confluence", "induce"]


def test_criterion_1_exact_equalities(tmp_root):
    problems, seconds, parts = [], 0.0, []
    for name in ("z2z3.yaml", "f2_rel_a.yaml"):
        rep, took = run(name, EXACT, tmp_root)
        seconds += took
        m, c, conf, ind = (rep[s] for s in EXACT)
        for s in EXACT:
            if not rep[s]["passed"]:
                problems.append(f"{name} {s}: {rep[s].get('witness') or rep[s].get('error')}")
        if m["equivariance_checked"] < 50:
            problems.append(f"{name}: {m['equivariance_checked']} translations")
        if c["pairs_checked"] < 100:
            problems.append(f"{name}: {c['pairs_checked']} cocycle pairs")
        if any(Fraction(v) != 2 for v in conf["nonconfluence_values"]):
            problems.append(f"{name}: non-confluence values {conf['nonconfluence_values']}")
        z_pairs = [p["pairs_checked"] for p in ind["peripherals"] if p.get("h_cocycle") == "integers"]
        if name.startswith("f2") and (not z_pairs or min(z_pairs) < 50):
            problems.append(f"{name}: induced pairs {z_pairs}")
        parts.append(f"{name}: {m['computed']} masks, {m['equivariance_checked']} translations, "
                     f"{c['pairs_checked']} pairs, {conf['nonconfluence_instances']} non-confluence, "
                     f"induced {z_pairs or '-'}")
    if seconds > 300:
        problems.append(f"{seconds:.0f}s")
    record(1, not problems, "; ".join(problems) if problems else f"{'; '.join(parts)}; {seconds:.0f}s")


def test_criterion_2_bounds(tmp_root):
    problems, seconds, decay, thin = [], 0.0, 0, 0
    for name, changes in (("z2z3.yaml", {}), ("f2_rel_a.yaml", {"radius": 4, "coset_depth": 5})):
        rep, took = run(name, ["ball", "confluence", "properties"], tmp_root, **changes)
        seconds += took
        if rep["ball"]["vertices"] > 500:
            problems.append(f"{name}: ball of {rep['ball']['vertices']} vertices is not exhaustive")
        for s in ("confluence", "properties"):
            if not rep[s]["passed"]:
                problems.append(f"{name} {s}: {rep[s].get('witness') or rep[s].get('error')}")
        decay = max(decay, rep["confluence"]["decay_passed"])
        thin = max(thin, next(c["checked"] for c in rep["properties"]["checks"] if c["name"].startswith("conical")))
    if decay < 100:
        problems.append(f"decay on {decay} instances")
    if thin < 1000:
        problems.append(f"thinness on {thin} triangles")
    if seconds > 600:
        problems.append(f"{seconds:.0f}s")
    record(2, not problems, "; ".join(problems) or f"decay {decay}, thinness {thin}, exhaustive cones; {seconds:.0f}s")


def test_criterion_3_wheel_checkpoint(tmp_root):
    rep, took = run("wheel.yaml", ["checkpoint"], tmp_root)
    wheel = rep["checkpoint"].get("wheel", {})
    ok = (rep["checkpoint"]["passed"] and wheel.get("passed") and wheel.get("delta", 99) <= 3
          and wheel.get("segment") == 5_000_000 and took <= 300)
    record(3, bool(ok), f"segment {wheel.get('segment')}, delta {wheel.get('delta')}, "
                        f"status {wheel.get('status')}, {took:.0f}s")


def test_criterion_4_summability(tmp_root):
    rep, _ = run("f2_rel_a.yaml", EXACT, tmp_root)
    by_g: dict = {}
    for row in rep["cocycle"]["norms"]:
        by_g.setdefault(row["g"], []).append(row)
    problems, parts = [], []
    for g, rows in by_g.items():
        rows.sort(key=lambda r: r["p"])
        fit = [r["ratio"] is not None and r["ratio"] < 1 and r["residual"] < 0.1 and r["fitted_shells"] >= 5
               for r in rows]
        # the smallest p from which the fit holds for every larger p in the list
        threshold = next((rows[i]["p"] for i in range(len(rows)) if all(fit[i:])), None)
        bounds = all(r["lower_bound_ok"] and r["witnesses"] >= r["witness_floor"] for r in rows)
        if threshold is None:
            worst = rows[-1]
            problems.append(f"{g}: no p fits (p={worst['p']}: ratio {worst['ratio']}, "
                            f"residual {worst['residual']}, {worst['fitted_shells']} shells)")
        if not bounds:
            problems.append(f"{g}: lower bound or witness count fails")
        parts.append(f"{g}: threshold p={threshold}")
    record(4, bool(by_g) and not problems, "; ".join(problems) or "; ".join(parts))


def test_criterion_5_dichotomy(tmp_root):
    rep, _ = run("f2_rel_a.yaml", ["dichotomy"], tmp_root)
    fams = {f["generator"]: f for f in rep["dichotomy"]["families"]}
    b, a = fams.get("b"), fams.get("a")
    ok = (b is not None and a is not None
          and max(r["n"] for r in b["rows"]) == 30 and max(r["n"] for r in a["rows"]) == 30
          and b["dominant_branch"] == "coned-off" and b["norm_increasing_fraction"] >= 0.8
          and a["dominant_branch"] == "angles" and a["contribution_increasing_fraction"] >= 0.8)
    detail = ", ".join(f"{k}^n: {f['dominant_branch']} {f['branch_increasing_fraction']:.2f}" for k, f in fams.items())
    record(5, ok, detail)


def test_criterion_6_free_product_baseline():
    cfg = harness.load_config(CONFIGS / "z2z3.yaml")
    G = make_model(cfg.group)
    P = make_peripherals(G, cfg.peripherals)
    results = [harness.baseline_check(G, P, i, max_syllables=4) for i in range(len(P))]
    ok = all(r["passed"] for r in results)
    detail = "; ".join(f"peripheral {i}: {r['gammas']} gammas{', ' + r['witness'] if r['witness'] else ''}"
                       for i, r in enumerate(results))
    record(6, ok, detail)


def test_criterion_7_oracle_agreement():
    rng = random.Random(2024)
    agreed, total, first = 0, 0, ""
    while total < 1000:
        n = rng.randrange(2, 40)
        kind = rng.choice(["path", "tree"])
        edges = [(i, i + 1) for i in range(n - 1)] if kind == "path" else [(i, rng.randrange(i)) for i in range(1, n)]
        prof = ConstantsProfile.paper(rng.choice([1, 2])) if rng.random() < 0.5 else ConstantsProfile.desk(1)
        flow = Flow(synthetic(n, edges), prof)
        oracle = oracle_for(n, edges, prof)
        for _ in range(3):
            a, x = rng.randrange(n), rng.randrange(n)
            m = flow.mask(a, x)
            total += 1
            if (m.measure, m.R) == oracle.mask(a, x):
                agreed += 1
            elif not first:
                first = f"{kind} n={n} a={a} x={x}"
    record(7, agreed == total, f"{agreed}/{total} agree" + (f", first mismatch {first}" if first else ""))
