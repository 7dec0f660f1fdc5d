import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conedflow.groups import (
    FiniteGroup,
    FreeAbelianGroup,
    FreeGroup,
    GroupSpecError,
    canonical_rep,
    coset_key,
    make_model,
    make_peripherals,
    word_length,
)

Z2Z3 = {"kind": "free-product", "factors": [{"kind": "cyclic", "order": 2, "label": "s"},
                                            {"kind": "cyclic", "order": 3, "label": "t"}]}


@pytest.fixture(scope="module")
def z2z3():
    return make_model(Z2Z3)


def test_cyclic_table():
    G = make_model({"kind": "cyclic", "order": 3, "label": "t"})
    t = G.gen("t")
    assert len(G.ball(10)) == 3
    assert G.product([t, t, t]) == G.identity()


def test_free_reduction():
    F = make_model({"kind": "free", "generators": ["a", "b"]})
    assert F.multiply(F.parse("a b"), F.parse("b^-1 a")) == F.parse("a a")


def test_free_product_normal_form(z2z3):
    G = z2z3
    assert G.multiply(G.parse("s t"), G.parse("t^2 s")) == G.identity()


def rewrite(word, orders):
    """Naive normal form: merge equal-factor neighbours, drop trivial syllables, repeat."""
    w = [(f, e % orders[f]) for f, e in word]
    changed = True
    while changed:
        changed = False
        w = [(f, e) for f, e in w if e]
        for i in range(len(w) - 1):
            if w[i][0] == w[i + 1][0]:
                w[i:i + 2] = [(w[i][0], (w[i][1] + w[i + 1][1]) % orders[w[i][0]])]
                changed = True
                break
    return [(f, e) for f, e in w if e]


def test_free_product_matches_rewriting(z2z3):
    G = z2z3
    letters = [(0, 1), (1, 1), (1, 2)]
    gens = {(0, 1): G.gen("s"), (1, 1): G.gen("t"), (1, 2): G.power(G.gen("t"), 2)}
    seen = {}
    for n in range(7):
        for word in itertools.product(letters, repeat=n):
            g = G.product(gens[x] for x in word)
            nf = tuple(rewrite(list(word), {0: 2, 1: 3}))
            # equal normal forms exactly when the model elements agree
            assert seen.setdefault(nf, g) == g
            assert G.word_length(g) == sum(1 if f == 0 else min(e, 3 - e) for f, e in nf)
    assert len(set(map(repr, seen.values()))) == len(seen)


def test_word_lengths():
    F = FreeGroup(["a", "b"])
    A = FreeAbelianGroup(["x", "y"])
    assert word_length(F, F.identity()) == 0
    assert word_length(F, F.parse("abab")) == 4
    assert word_length(A, (3, -2)) == 5


def test_coset_keys(z2z3):
    G = z2z3
    P = make_peripherals(G, [{"factor": 0}, {"factor": 1}])
    t = G.gen("t")
    assert coset_key(G, P, 1, t).rep == G.identity()
    g = G.parse("s t s t")  # k1 h1 k2 h2 with H = <t>
    assert canonical_rep(coset_key(G, P, 1, g)) == G.parse("s t s")
    assert coset_key(G, P, 1, g) == coset_key(G, P, 1, G.multiply(g, t))
    assert canonical_rep(coset_key(G, P, 0, G.identity())) == G.identity()


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["a", "A", "b", "B"]), max_size=10),
       st.lists(st.sampled_from(["a", "A"]), max_size=6))
def test_canonical_rep_is_a_section(word, hword):
    F = FreeGroup(["a", "b"])
    P = make_peripherals(F, [{"generators": ["a"]}])
    g = F.parse("".join(word) or "1")
    h = F.parse("".join(hword) or "1")
    key = coset_key(F, P, 0, g)
    rep = canonical_rep(key)
    assert P[0].contains(F.multiply(F.invert(rep), g))
    assert coset_key(F, P, 0, F.multiply(g, h)) == key


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["s", "t", "T"]), max_size=8), st.lists(st.sampled_from(["s", "t", "T"]), max_size=8),
       st.lists(st.sampled_from(["s", "t", "T"]), max_size=8))
def test_free_product_axioms(u, v, w):
    G = make_model(Z2Z3)
    x, y, z = (G.parse(" ".join("t^-1" if c == "T" else c for c in word) or "1") for word in (u, v, w))
    assert G.multiply(G.multiply(x, y), z) == G.multiply(x, G.multiply(y, z))
    assert G.multiply(x, G.invert(x)) == G.identity()
    assert G.word_length(G.multiply(x, y)) <= G.word_length(x) + G.word_length(y)


def test_finite_table_validation():
    with pytest.raises(GroupSpecError):
        make_model({"kind": "finite", "table": [[0, 1], [0, 0]], "generators": {"s": 1}})
    with pytest.raises(GroupSpecError):
        make_model({"kind": "mystery"})


def test_finite_group_from_table():
    # Klein four group
    table = [[i ^ j for j in range(4)] for i in range(4)]
    G = FiniteGroup(table, {"x": 1, "y": 2})
    assert G.word_length(3) == 2
    assert G.multiply(3, 3) == 0
