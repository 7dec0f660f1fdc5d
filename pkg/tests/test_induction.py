import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conedflow import induction as ind
from conedflow.graph import ConeVertex, GroupVertex
from conedflow.groups import make_model, make_peripherals

Z2_Z = {"kind": "free-product", "factors": [{"kind": "cyclic", "order": 2, "label": "s"},
                                            {"kind": "free", "generators": ["h"]}]}


@pytest.fixture(scope="module")
def z2_z():
    G = make_model(Z2_Z)
    return G, make_peripherals(G, [{"factor": 1}])


# -- peripheral cocycles ------------------------------------------------------------------
def test_builtin_models():
    Z = ind.builtin_h_cocycle("integers")
    for n in range(-6, 7):
        assert ind._norm(Z.c((n,))) == abs(n)
    assert ind.builtin_h_cocycle("finite").c(()) == {}
    with pytest.raises(ValueError):
        ind.builtin_h_cocycle("free-abelian")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(-8, 8), min_size=1, max_size=3), st.lists(st.integers(-8, 8), min_size=1, max_size=3))
def test_builtin_cocycle_relation(m, n):
    k = min(len(m), len(n))
    m, n = tuple(m[:k]), tuple(n[:k])
    H = ind.builtin_h_cocycle("free-abelian", dim=k) if k > 1 else ind.builtin_h_cocycle("integers")
    lhs = H.c(H.multiply(m, n))
    rhs = ind.combine([(Fraction(1), H.c(m)), (Fraction(1), H.act(m, H.c(n)))])
    assert lhs == rhs


# -- normal-form baseline -------------------------------------------------------------------
def test_baseline_reps(z2_z):
    G, P = z2_z
    reps = ind.free_product_baseline(G, P, 0)
    assert reps.get(reps.key(G.parse("h^3"))) == {G.identity(): 1}
    g = G.parse("s h^2 s h^-1")
    assert reps.get(reps.key(g)) == {G.parse("s h^2 s"): 1}


def test_baseline_support_is_the_bass_serre_geodesic(z2_z):
    G, P = z2_z
    reps = ind.free_product_baseline(G, P, 0)
    keys = ind.cosets_near(G, P, 0, 6)
    for word in ("s", "h s", "s h s", "h^2 s h^-1 s"):
        gamma = G.parse(word)
        rep = ind.almost_invariance_report(reps, gamma, 2.0, keys)
        assert set(rep["nonzero"]) <= ind.bass_serre_cosets(G, P, 0, gamma)
    assert ind.almost_invariance_report(reps, G.identity(), 2.0, keys)["nonzero"] == []


def test_closed_form_with_dirac_reps(z2_z):
    G, P = z2_z
    reps = ind.free_product_baseline(G, P, 0)
    H = ind.builtin_h_cocycle("integers")
    ic = ind.InducedCocycle(reps, H)
    keys = ind.cosets_near(G, P, 0, 4)
    for word in ("s h", "h s", "s h^-2", "h^3 s"):
        gamma = G.parse(word)
        ginv = G.invert(gamma)
        for key in keys:
            g = key.rep
            moved = G.multiply(gamma, reps.key(G.multiply(ginv, g)).rep)
            offset = G.multiply(G.invert(g), moved)  # an element h^n of H
            n = sum(e for _, e in offset[0][1]) if offset else 0
            want = {k: -w for k, w in H.c((n,)).items()}
            assert ic.value(gamma, g) == want
    zero = ind.induced_cocycle(reps, H, G.identity(), keys)
    assert zero.values == {}


def test_contribution_with_dirac_reps(z2_z):
    G, P = z2_z
    reps = ind.free_product_baseline(G, P, 0)
    keys = ind.cosets_near(G, P, 0, 4)
    assert ind.contribution(reps, G.identity(), keys)[0] == 0
    gamma = G.parse("h^3 s h^-2")
    best, involved, table = ind.contribution(reps, gamma, keys)
    # largest H-syllable of the normal form
    assert best == 3
    assert involved


def test_finite_peripheral_gives_zero(z2z3_ctx):
    ctx = z2z3_ctx
    G = ctx.model
    reps = ind.coset_reps_from_flow(ctx.flow, 1)
    keys = ind.cosets_near(G, ctx.peripherals, 1, 2)
    val = ind.induced_cocycle(reps, ind.builtin_h_cocycle("finite"), G.parse("s t"), keys)
    assert val.values == {} and val.norm() == 0


# -- flow representatives ----------------------------------------------------------------------
def test_flow_reps_base_coset(f2_small_ctx):
    ctx = f2_small_ctx
    F, g = ctx.model, ctx.graph
    reps = ind.coset_reps_from_flow(ctx.flow, 0)
    key = reps.key(F.identity())
    cone = g.vertex(ConeVertex(key))
    meas = reps.get(key)
    assert sum(meas.values()) == 1
    assert len(set(meas.values())) == 1  # uniform
    for x in meas:
        assert g.has_edge(cone, g.vertex(GroupVertex(x)))
    assert meas == {F.identity(): 1}  # the slice at distance 1 is the single vertex 1


def test_flow_identities_with_integer_cocycle(f2_small_ctx):
    ctx = f2_small_ctx
    F = ctx.model
    reps = ind.coset_reps_from_flow(ctx.flow, 0)
    H = ind.builtin_h_cocycle("integers")
    keys = [k for k in ind.cosets_near(F, ctx.peripherals, 0, 2)
            if ConeVertex(k) in ctx.graph.index]
    rng = random.Random(2)
    elems = ctx.elements(1)
    hs = [F.parse("a"), F.parse("a^-2")]
    checked = 0
    for _ in range(20):
        g1, g2 = rng.choice(elems), rng.choice(elems)
        res = ind.verify_induced_identities(reps, H, g1, g2, keys, hs)
        assert res["cocycle"] and res["equivariance"] and res["potential"], res["witness"]
        checked += res["checked"]
    assert checked
    one = F.identity()
    g = F.parse("b a")
    assert ind.verify_induced_identities(reps, H, g, one, keys)["cocycle"]
    assert ind.verify_induced_identities(reps, H, g, F.invert(g), keys)["cocycle"]


def test_properness_probe_on_powers(f2_small_ctx):
    ctx = f2_small_ctx
    F = ctx.model
    reps = ind.coset_reps_from_flow(ctx.flow, 0)
    H = ind.builtin_h_cocycle("integers")
    keys = [reps.key(F.identity())]
    gammas = [F.power(F.gen("a"), k) for k in range(5)]
    probe = ind.h_properness_probe(reps, H, gammas, keys)
    rows = probe["rows"]
    assert (rows[0]["contribution"], rows[0]["norm"]) == (0, 0)
    contribs = [r["contribution"] for r in rows]
    assert contribs == sorted(contribs) and contribs[-1] > contribs[0]
    assert probe["bound_ok"]
    assert probe["nondecreasing_fraction"] == 1
