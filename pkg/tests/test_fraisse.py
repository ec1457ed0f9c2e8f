import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homogen.amalgamation import PriorityOrder
from homogen.core import CompleteStructure, TriangleSet, embeds_forbidden
from homogen.errors import InvalidInputError
from homogen.fraisse import (SaturationBudget, Tower, TypeDescriptor, build_tower, dump_tower, homogeneity_audit,
                             load_tower, one_point_extensions, realize_left, realize_right, realizes, same_type,
                             saturate, tp)
from homogen.presets import cherlin, worked_example_8
from homogen.swir import forb_ind

from conftest import LANG

RR = PriorityOrder.parse(LANG, "R+ > R-")


def seeded(S, T=None, pr=RR):
    return Tower.from_structure(S, T or cherlin(8), pr)


def test_budget_must_be_positive():
    with pytest.raises(InvalidInputError):
        SaturationBudget(max_vertices=0)


# ---------------------------------------------------------------- types

def test_algebraic_type_is_flagged():
    S = worked_example_8().A
    p = tp(S, (1,), (0, 1))
    assert p.is_algebraic and p.algebraic == (1,)
    with pytest.raises(InvalidInputError):
        realize_left(seeded(S), p)


def test_singleton_types_over_empty_base_coincide(tower8):
    assert len({tp(tower8, (v,), ()) for v in tower8.universe()}) == 1


def test_type_is_invariant_under_a_witnessing_map():
    # 0 -> 1 G and 0 -> 2 G: swapping 1 and 2 fixes 0 and preserves the structure
    S = CompleteStructure.from_edges(LANG, (0, 1, 2), {(0, 1): "G+", (0, 2): "G+", (1, 2): "R+"})
    assert same_type(S, (1,), (2,), (0,))
    assert not same_type(S, (1, 2), (2, 1), (0,))


def test_type_on_tower_matches_type_on_snapshot(tower8):
    a, B = (5, 9), (0, 3)
    assert tp(tower8, a, B) == tp(tower8.snapshot(), a, B)


def test_tp_rejects_unknown_vertices(tower8):
    with pytest.raises(InvalidInputError):
        tp(tower8, (tower8.n + 3,), ())


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_type_equality_is_an_equivalence(tower8, data):
    vs = list(range(12))
    B = tuple(data.draw(st.lists(st.sampled_from(vs), max_size=2, unique=True)))
    rest = [v for v in vs if v not in B]
    x, y, z = (data.draw(st.sampled_from(rest)) for _ in range(3))
    assert same_type(tower8, (x,), (x,), B)
    assert same_type(tower8, (x,), (y,), B) == same_type(tower8, (y,), (x,), B)
    if same_type(tower8, (x,), (y,), B) and same_type(tower8, (y,), (z,), B):
        assert same_type(tower8, (x,), (z,), B)


def test_pattern_restricts_to_the_base(tower8):
    p = tp(tower8, (7, 8), (1, 2, 3))
    P = p.pattern(tower8)
    assert P.induced((1, 2, 3)) == tower8.induced((1, 2, 3))
    assert embeds_forbidden(P, cherlin(8)) is None


# ---------------------------------------------------------------- one-point extensions

def test_extensions_over_empty_base():
    t = seeded(CompleteStructure(LANG, (0,), [[-1]]))
    assert len(one_point_extensions(t, (), cherlin(8))) == 1


def test_extensions_over_one_point():
    t = seeded(CompleteStructure(LANG, (0,), [[-1]]))
    assert len(one_point_extensions(t, (0,), cherlin(8))) == 4


@pytest.mark.parametrize("colour", ["R+", "R-", "G+", "G-"])
def test_extensions_over_two_points_match_brute_force(colour):
    S = CompleteStructure.from_edges(LANG, (0, 1), {(0, 1): colour})
    T = cherlin(8)
    brute = set()
    for c0, c1 in itertools.product(range(4), repeat=2):
        D = CompleteStructure(LANG, (0, 1, 2), [[-1, S.code(0, 1), LANG.dual(c0)],
                                                [S.code(1, 0), -1, LANG.dual(c1)],
                                                [c0, c1, -1]])
        if embeds_forbidden(D, T) is None:
            brute.add((c0, c1))
    got = {p.to_base[0] for p in one_point_extensions(seeded(S), (0, 1), T)}
    assert got == brute


# ---------------------------------------------------------------- realisation

def test_realise_singleton_in_empty_tower():
    t = Tower(cherlin(8), RR)
    (v,), _ = realize_left(t, TypeDescriptor((), ((),), (), (None,)))
    assert v == 0 and len(t) == 1


def test_worked_example_by_realisation():
    # the stage plays A, so it sits on the left of the completion: M ⫝_b c
    t = seeded(worked_example_8().A)
    p = TypeDescriptor((0,), ((LANG.code("G+"),),), (), (None,))  # c -> b is G
    (c,), _ = realize_right(t, p)
    assert [str(LANG.symbol(t.code(a, c))) for a in (1, 2)] == ["R-", "R+"]


def test_left_realisation_of_worked_example_is_the_mirror_completion():
    t = seeded(worked_example_8().A)
    p = TypeDescriptor((0,), ((LANG.code("G+"),),), (), (None,))
    (c,), _ = realize_left(t, p)
    assert forb_ind(t, (c,), (0,), (1, 2))
    assert embeds_forbidden(t.snapshot(), cherlin(8)) is None


def test_realised_point_is_left_independent(tower8):
    t = tower8.copy()
    B = (0, 4)
    p = tp(t, (9,), B)
    rest = [v for v in t.universe() if v not in B]
    (a,), _ = realize_left(t, p, rest)
    assert realizes(t, (a,), p)
    assert forb_ind(t, (a,), B, tuple(rest))


def test_realised_point_is_right_independent(tower8):
    t = tower8.copy()
    B = (2,)
    p = tp(t, (11,), B)
    rest = [v for v in t.universe() if v not in B]
    (a,), _ = realize_right(t, p, rest)
    assert realizes(t, (a,), p)
    assert forb_ind(t, tuple(rest), B, (a,))


def test_singleton_over_empty_base_same_either_side():
    S = CompleteStructure.from_edges(LANG, (0, 1), {(0, 1): "G+"})
    p = TypeDescriptor((), ((),), (), (None,))
    l, r = seeded(S), seeded(S)
    (x,), _ = realize_left(l, p)
    (y,), _ = realize_right(r, p)
    # with no base nothing blocks R+, so left gets R+ and right gets its mirror
    assert l.code(x, 0) == LANG.code("R+") and r.code(0, y) == LANG.code("R+")


def test_left_and_right_realisation_differ_somewhere():
    found = False
    for S in _small_stages():
        for b in S.vertices:
            for col in range(4):
                p = TypeDescriptor((b,), ((col,),), (), (None,))
                l, r = seeded(S), seeded(S)
                try:
                    (x,), _ = realize_left(l, p)
                    (y,), _ = realize_right(r, p)
                except Exception:
                    continue
                if any(l.code(m, x) != r.code(m, y) for m in S.vertices):
                    found = True
    assert found


def _small_stages():
    from homogen.core import enumerate_forb
    for n in (2, 3):
        yield from enumerate_forb(LANG, cherlin(8), n)


def test_multi_point_realisation_keeps_internal_colours(tower8):
    t = tower8.copy()
    p = tp(t, (3, 6), (1,))
    a, _ = realize_left(t, p)
    assert len(a) == 2 and realizes(t, a, p)


# ---------------------------------------------------------------- saturation

def test_saturated_vertices_see_every_edge_type(tower8):
    done = range(tower8.saturated_upto)
    assert len(done) > 0
    for v in done:
        seen = {tower8.code(x, v) for x in tower8.universe() if x != v}
        assert seen == {0, 1, 2, 3}


def test_every_stage_is_in_the_class(tower8):
    assert embeds_forbidden(tower8.snapshot(), cherlin(8)) is None
    for b in tower8.stage_bounds:
        assert tower8.snapshot(b) == tower8.snapshot().induced(range(b))


def test_saturation_is_monotone():
    small = build_tower(cherlin(8), RR, SaturationBudget(max_vertices=15))
    big = build_tower(cherlin(8), RR, SaturationBudget(max_vertices=30))
    assert big.snapshot().induced(range(len(small))) == small.snapshot()


def test_saturation_reports_budget():
    t = build_tower(cherlin(8), RR, SaturationBudget(max_vertices=10))
    assert t.status == "budget" and len(t) == 10


def test_saturation_reaches_fixpoint_for_a_tiny_class():
    # only R+ between distinct points: the single R-tournament type is realised quickly
    lang_T = TriangleSet(LANG, [])
    t = build_tower(lang_T, PriorityOrder.parse(LANG, "R+"), SaturationBudget(max_vertices=200, max_base=0))
    assert t.status == "fixpoint"


def test_closed_rounds_realise_every_small_extension(tower8):
    for b in range(tower8.saturated_upto):
        for p in one_point_extensions(tower8, (b,), tower8.triangles):
            assert any(realizes(tower8, (x,), p) for x in tower8.universe() if x != b)


def test_audit_improves_with_budget():
    small = build_tower(cherlin(8), RR, SaturationBudget(max_vertices=20))
    big = build_tower(cherlin(8), RR, SaturationBudget(max_vertices=40))
    within = range(6)
    f_small = {(u, v, x) for u, v, x in homogeneity_audit(small, 1, within=within).failures}
    f_big = {(u, v, x) for u, v, x in homogeneity_audit(big, 1, within=within).failures}
    assert f_big <= f_small


def test_audit_size_one_on_saturated_window(tower8):
    assert homogeneity_audit(tower8, 1, within=range(tower8.saturated_upto)).ok


def test_audit_identity_maps_extend(tower8):
    rep = homogeneity_audit(tower8, 0)
    assert rep.ok and rep.maps_checked == 1


def test_removing_a_vertex_breaks_the_audit(tower8):
    window = range(tower8.saturated_upto)
    assert homogeneity_audit(tower8, 1, within=window).ok
    broken = 0
    for gone in window:
        S = tower8.snapshot().induced([v for v in tower8.universe() if v != gone])
        broken += not homogeneity_audit(S, 1, within=[v for v in window if v != gone]).ok
    assert broken > 0


# ---------------------------------------------------------------- dump format

def test_dump_round_trip(tower8):
    text = dump_tower(tower8)
    back = load_tower(text)
    assert back.snapshot() == tower8.snapshot()
    assert back.stage_bounds == tower8.stage_bounds
    assert str(back.priority) == str(tower8.priority)
    assert dump_tower(back) == text


def test_copy_is_independent(tower8):
    t = tower8.copy()
    realize_left(t, TypeDescriptor((), ((),), (), (None,)))
    assert len(t) == len(tower8) + 1
