import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homogen.core import (CompleteStructure, Language, OrientedSymbol, TrianglePattern, TriangleSet,
                          canonical_form, canonical_key, embeds_forbidden, enumerate_forb, find_isomorphism,
                          triangle_of)
from homogen.errors import InvalidInputError, ResourceLimitError
from homogen.presets import cherlin

from conftest import LANG, structure_from_codes, structures


def brute_isomorphic(A, B):
    if len(A) != len(B):
        return False
    for perm in itertools.permutations(B.vertices):
        f = dict(zip(A.vertices, perm))
        if all(B.code(f[x], f[y]) == c for x, y, c in A.pairs()):
            return True
    return False


def cycle(lang, c01, c12, c20):
    return CompleteStructure.from_edges(lang, (0, 1, 2), {(0, 1): c01, (1, 2): c12, (2, 0): c20})


# ---------------------------------------------------------------- symbols and languages

def test_dual_is_an_involution():
    for text in ("R+", "R-", "X"):
        s = OrientedSymbol.parse(text)
        assert s.dual().dual() == s
    assert OrientedSymbol.parse("R+").dual() == OrientedSymbol.parse("R-")
    assert OrientedSymbol.parse("X").dual() == OrientedSymbol.parse("X")


def test_symbol_equality_needs_base_and_orientation():
    assert OrientedSymbol("R", "+") != OrientedSymbol("G", "+")
    assert OrientedSymbol("R", "+") != OrientedSymbol("R", "-")


def test_language_oriented_symbols():
    lang = Language.parse("R+-,X")
    assert [str(s) for s in lang.oriented] == ["R+", "R-", "X"]
    with pytest.raises(InvalidInputError):
        Language([("R", True), ("R", False)])


# ---------------------------------------------------------------- structures

def test_structure_rejects_incoherent_matrix():
    with pytest.raises(InvalidInputError):
        CompleteStructure(LANG, (0, 1), [[-1, 0], [0, -1]])


def test_structure_needs_every_pair():
    with pytest.raises(InvalidInputError):
        CompleteStructure.from_edges(LANG, (0, 1, 2), {(0, 1): "R+"})


def test_literal_round_trip():
    S = cycle(LANG, "G+", "G+", "R+")
    assert CompleteStructure.from_literal(LANG, S.to_literal()) == S


@given(structures(max_size=5))
def test_coherence_holds_on_every_pair(S):
    for x, y, c in S.pairs():
        assert S.code(y, x) == LANG.dual(c)


# ---------------------------------------------------------------- triangles

def test_triangle_of_the_eight_pattern():
    # x→y G, y→z G, z→x R is the triangle written R+G−G+
    S = cycle(LANG, "G+", "G+", "R+")
    assert triangle_of(S, 0, 1, 2) == TrianglePattern.from_edges(LANG, "R+ G- G+")


def test_triangle_of_symmetric_symbol():
    lang = Language.parse("X")
    S = cycle(lang, "X", "X", "X")
    pats = {triangle_of(S, *p) for p in itertools.permutations(range(3))}
    assert pats == {TrianglePattern.from_edges(lang, "X X X")}


@given(st.lists(st.integers(0, 3), min_size=3, max_size=3))
def test_triangle_pattern_independent_of_vertex_order(codes):
    S = structure_from_codes(LANG, 3, codes)
    assert len({triangle_of(S, *p) for p in itertools.permutations(range(3))}) == 1


def test_triangle_of_rejects_repeated_vertex():
    with pytest.raises(InvalidInputError):
        triangle_of(cycle(LANG, "G+", "G+", "R+"), 0, 0, 1)


def test_embeds_forbidden_finds_eight_triangle():
    hit = embeds_forbidden(cycle(LANG, "G+", "G+", "R+"), cherlin(8))
    assert hit is not None and hit.vertices == (0, 1, 2)


def test_embeds_forbidden_small_structures():
    S = CompleteStructure.from_edges(LANG, (0, 1), {(0, 1): "G+"})
    assert embeds_forbidden(S, cherlin(8)) is None


def test_triangle_set_text_round_trip():
    T = cherlin(11)
    assert TriangleSet.parse(LANG, T.to_text()).patterns == T.patterns


# ---------------------------------------------------------------- isomorphism

def test_identity_isomorphism_with_fixed_vertex():
    S = cycle(LANG, "G+", "G+", "R+")
    f = find_isomorphism(S, S, {0: 0})
    assert f is not None and f.map == {0: 0, 1: 1, 2: 2}


def test_cycle_and_transitive_triple_differ():
    c = cycle(LANG, "G+", "G+", "G+")
    t = CompleteStructure.from_edges(LANG, (0, 1, 2), {(0, 1): "G+", (1, 2): "G+", (0, 2): "G+"})
    assert find_isomorphism(c, t) is None
    assert canonical_form(c) != canonical_form(t)


def test_ggg_and_rgg_cycles_have_different_forms():
    assert canonical_form(cycle(LANG, "G+", "G+", "G+")) != canonical_form(cycle(LANG, "R+", "G+", "G+"))


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_isomorphism_agrees_with_brute_force_in_forb8(data):
    members = enumerate_forb(LANG, cherlin(8), 5)
    A = data.draw(st.sampled_from(members))
    B = data.draw(st.sampled_from(members))
    perm = data.draw(st.permutations(range(5)))
    B = B.relabel(dict(zip(B.vertices, perm)))
    found = find_isomorphism(A, B)
    assert (found is not None) == brute_isomorphic(A, B)


def test_single_vertex_canonical_form():
    S = CompleteStructure(LANG, [7], [[-1]])
    assert canonical_form(S).vertices == (0,)


def test_canonical_form_bound():
    S = structure_from_codes(LANG, 11, [0] * 55)
    with pytest.raises(ResourceLimitError):
        canonical_form(S)


# ---------------------------------------------------------------- enumeration

def test_enumeration_size_one():
    assert len(enumerate_forb(LANG, TriangleSet(LANG), 1)) == 1


def test_enumeration_size_two_matches_brute_force():
    keys = {canonical_key(structure_from_codes(LANG, 2, [c])) for c in range(4)}
    assert len(enumerate_forb(LANG, TriangleSet(LANG), 2)) == len(keys) == 2


def test_enumeration_size_three_drops_the_two_forbidden_classes():
    free = {canonical_key(structure_from_codes(LANG, 3, cs)) for cs in itertools.product(range(4), repeat=3)}
    forb8 = enumerate_forb(LANG, cherlin(8), 3)
    assert len(enumerate_forb(LANG, TriangleSet(LANG), 3)) == len(free)
    assert len(forb8) == len(free) - 2


def test_enumeration_is_sorted_and_free_of_forbidden():
    out = enumerate_forb(LANG, cherlin(8), 4)
    assert all(embeds_forbidden(S, cherlin(8)) is None for S in out)
    keys = [canonical_key(S) for S in out]
    assert keys == sorted(keys) and len(set(keys)) == len(keys)


def test_enumeration_bound():
    with pytest.raises(ResourceLimitError):
        enumerate_forb(LANG, cherlin(8), 8)
