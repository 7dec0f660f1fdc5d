import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conedflow import cocycle as cc
from conedflow.flow import Flow, Uncertified, dirac, uniform
from conedflow.graph import ConstantsProfile, GroupVertex, path_graph, wheel_over_segment
from flow_oracle import oracle_for
from test_flow import ladder

PAPER = ConstantsProfile.paper(1)
half = Fraction(1, 2)

measures = st.dictionaries(st.integers(0, 6), st.integers(1, 5), min_size=1).map(
    lambda d: {k: Fraction(v, sum(d.values())) for k, v in d.items()})


def test_measure_algebra_examples():
    assert cc.meet(dirac(1), dirac(1)) == dirac(1)
    assert cc.meet(dirac(1), dirac(2)) == {}
    assert cc.meet({1: half, 2: half}, dirac(1)) == {1: half}
    assert cc.norm(cc.sym_diff(dirac(3), dirac(3))) == 0
    assert cc.sym_diff(dirac(1), dirac(2)) == {1: 1, 2: 1}
    assert cc.norm(cc.sym_diff({1: half, 2: half}, dirac(1))) == 1


@settings(max_examples=200, deadline=None)
@given(measures, measures)
def test_meet_and_difference_are_complementary(eta, eta2):
    # ||eta - eta2|| = 2 (1 - ||eta meet eta2||) for probability measures
    assert cc.norm(cc.sym_diff(eta, eta2)) == 2 * (1 - cc.norm(cc.meet(eta, eta2)))
    assert cc.meet(eta, eta2) == cc.meet(eta2, eta)


def test_confluence_examples():
    flow = Flow(ladder(11), PAPER)
    C, _ = cc.max_cone_size(flow.graph, PAPER.support_cone)
    beta = Fraction(1, C)
    assert cc.is_beta_confluent(flow, 0, dirac(6), dirac(6), beta)
    assert cc.is_beta_confluent(flow, 0, dirac(6), dirac(16), beta)
    # disjoint stationary measures never get closer
    assert not cc.is_beta_confluent(flow, 0, dirac(1), dirac(11), Fraction(1, 100))


def test_decay_report_examples(z2z3_ctx):
    flow = Flow(ladder(16), PAPER)
    rep = cc.confluence_decay_report(flow, 0, dirac(10), dirac(10), 1, 4)
    assert rep["sequence"] == [0, 0, 0]
    rep = cc.confluence_decay_report(flow, 0, dirac(5), dirac(20), 0, 4)
    assert len(rep["sequence"]) == 2 and rep["passed"]
    ctx = z2z3_ctx
    g, prof = ctx.graph, ctx.profile
    rng = random.Random(4)
    seen = 0
    for _ in range(400):
        a = rng.randrange(g.n)
        da = g.distances(a).dist
        sphere = [v for v in range(g.n) if da[v] == 2 * prof.step]
        if not sphere:
            continue
        x, y = rng.choice(sphere), rng.choice(sphere)
        try:
            rep = cc.confluence_decay_report(ctx.flow, a, dirac(x), dirac(y), 1, 4)
        except Uncertified:
            continue
        if "skipped" in rep:
            continue
        seen += 1
        assert rep["passed"], rep
    assert seen >= 10


def test_cocycle_on_a_path():
    n = 12
    flow = Flow(path_graph(n), PAPER)
    oracle = oracle_for(n + 1, [(i, i + 1) for i in range(n)], PAPER)
    value = cc.cocycle_value(flow, 2, [n], base=0)
    want = cc.difference(oracle.mask(n, 0)[0], oracle.mask(n, 2)[0])
    assert value.values[n] == want
    assert cc.cocycle_value(flow, 0, range(n + 1), base=0).values == {a: {} for a in range(n + 1)}


def test_cocycle_identity_examples(z2z3_ctx):
    ctx = z2z3_ctx
    G, flow = ctx.model, ctx.flow
    targets = ctx.near(3)
    one = G.identity()
    g = G.parse("s t s")
    assert cc.verify_cocycle_identity(flow, g, one, targets)[0]
    ok, checked, _ = cc.verify_cocycle_identity(flow, g, G.invert(g), targets)
    assert ok and checked
    zero = cc.cocycle_value(flow, one, targets)
    assert all(v == {} for v in zero.values.values())


def test_affine_action(z2z3_ctx):
    ctx = z2z3_ctx
    G, flow = ctx.model, ctx.flow
    targets = ctx.near(2)
    g1, g2 = G.parse("t s"), G.parse("s t^-1")
    c2 = {a: v for a, v in cc.cocycle_value(flow, g2, ctx.near(4)).values.items() if v}
    assert cc.affine_apply(flow, G.identity(), c2, targets) == {a: v for a, v in c2.items() if a in targets}
    direct = {a: v for a, v in cc.cocycle_value(flow, g1, targets).values.items() if v}
    assert cc.affine_apply(flow, g1, {}, targets) == direct
    composed = cc.affine_apply(flow, G.multiply(g1, g2), {}, targets)
    assert composed == cc.affine_apply(flow, g1, c2, targets)


def test_norms(z2z3_ctx):
    ctx = z2z3_ctx
    G, flow = ctx.model, ctx.flow
    zero = cc.cocycle_value(flow, G.identity(), range(ctx.graph.n))
    assert cc.lp_norm(flow, zero, 2).total == 0
    value = cc.cocycle_value(flow, G.parse("t s t s"), range(ctx.graph.n))
    reports = {p: cc.lp_norm(flow, value, p) for p in (2, 3, 4)}
    roots = {p: r.total ** (1 / p) for p, r in reports.items()}
    assert roots[4] <= roots[3] + 1e-12 and roots[3] <= roots[2] + 1e-12
    for p, r in reports.items():
        assert r.lower_bound_ok
        assert r.exact_total >= r.witnesses * 2 ** p


def test_theta_and_dprime(f2_small_ctx):
    flow = Flow(path_graph(6), PAPER)
    assert cc.theta_and_dprime(flow.graph, 0, 6) == (0, 6, True)
    assert cc.theta_and_dprime(flow.graph, 3, 3) == (0, 0, True)
    ctx = f2_small_ctx
    F, g = ctx.model, ctx.graph
    for n in (3, 4):
        v = g.vertex(GroupVertex(F.parse(f"a^{n}")))
        assert cc.theta_and_dprime(g, g.basepoint, v) == (n, n + 2, True)


def test_checkpoint_examples():
    n = 60
    w = wheel_over_segment(n)
    # every angle threshold scaled down together, keeping checkpoint > ending thresholds
    flow = Flow(w, ConstantsProfile.named("paper", 1, ending_select=20, ending_classify=30, checkpoint=50))
    rep = cc.checkpoint_test(flow, 0, n, n - 1, n + 1)
    assert rep["status"] == "pass"
    rep = cc.checkpoint_test(flow, 0, n, n, n + 1)
    assert rep["status"] == "pass"


def test_kappa_fit():
    assert cc.kappa_fit([(3, Fraction(1))])["status"] == "inconclusive"
    fit = cc.kappa_fit([(d, Fraction(1, 2 ** d)) for d in range(2, 9)] + [(10, Fraction(0))])
    assert fit["status"] == "fitted" and fit["zero_rows"] == 1
    assert abs(fit["kappa"] - 0.5) < 1e-9


def test_nonconfluence_value_is_two(z2z3_ctx):
    ctx = z2z3_ctx
    g, flow = ctx.graph, ctx.flow
    rng = random.Random(8)
    seen = 0
    for _ in range(2000):
        x, x2 = rng.randrange(g.n), rng.randrange(g.n)
        inner = [v for v in g.interval(x, x2).tolist() if v not in (x, x2)]
        if not inner:
            continue
        a = rng.choice(inner)
        try:
            if cc.nonconfluence_hypothesis(flow, a, x, x2):
                assert cc.nonconfluence_value(flow, a, x, x2) == 2
                seen += 1
        except Uncertified:
            continue
    assert seen
