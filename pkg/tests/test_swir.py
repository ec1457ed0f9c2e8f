import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homogen.amalgamation import PriorityOrder
from homogen.core import Language, TriangleSet
from homogen.errors import InvalidInputError
from homogen.fraisse import SaturationBudget, build_tower, one_point_extensions, realize_left, tp
from homogen.presets import cherlin
from homogen.swir import (AuditBounds, DLOBackend, ForbLimitBackend, LEFT, RIGHT, audit_all, audit_axiom, dlo_ind,
                          forb_ind, forb_ind_by_amalgam, monotonicity_decompose, partial_automorphism_pool, replay)

from conftest import LANG

F = Fraction


def subsets(xs, max_size):
    for k in range(max_size + 1):
        yield from (set(c) for c in itertools.combinations(xs, k))


@pytest.fixture(scope="module")
def dlo():
    return DLOBackend(range(8))


@pytest.fixture(scope="module")
def forb8(tower8):
    return ForbLimitBackend(tower8.copy())


# ---------------------------------------------------------------- ind on DLO

def test_dlo_separated_by_base(dlo):
    assert dlo.ind({F(0)}, {F(1)}, {F(2)})


def test_dlo_symmetry_failure(dlo):
    assert not dlo.ind({F(2)}, {F(1)}, {F(3)})
    assert dlo.ind({F(3)}, {F(1)}, {F(2)})


def test_dlo_overlap_outside_base(dlo):
    assert not dlo.ind({F(1)}, set(), {F(1)})
    assert dlo.ind({F(1)}, {F(1)}, {F(1)})


def test_dlo_rejects_inexact_elements(dlo):
    assert dlo.ind({F(1, 3)}, set(), {F(-2)})
    with pytest.raises(InvalidInputError):
        dlo.ind({0.5}, set(), {F(2)})


def _pl_map(rng):
    """A random increasing piecewise-linear rational map."""
    xs = sorted({F(rng.randint(-20, 20), rng.randint(1, 4)) for _ in range(4)})
    ys = sorted({F(rng.randint(-20, 20), rng.randint(1, 4)) for _ in range(len(xs))})
    while len(ys) < len(xs):
        ys.append(ys[-1] + 1)

    def f(x):
        if x <= xs[0]:
            return ys[0] + (x - xs[0])
        if x >= xs[-1]:
            return ys[-1] + (x - xs[-1])
        for i in range(len(xs) - 1):
            if xs[i] <= x <= xs[i + 1]:
                return ys[i] + (ys[i + 1] - ys[i]) * (x - xs[i]) / (xs[i + 1] - xs[i])
    return f


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10 ** 6),
       st.lists(st.integers(0, 7), max_size=3), st.lists(st.integers(0, 7), max_size=3),
       st.lists(st.integers(0, 7), max_size=3))
def test_dlo_ind_invariant_under_order_automorphisms(seed, A, B, C):
    f = _pl_map(random.Random(seed))
    A, B, C = ({F(x) for x in s} for s in (A, B, C))
    assert dlo_ind(A, B, C) == dlo_ind({f(x) for x in A}, {f(x) for x in B}, {f(x) for x in C})


# ---------------------------------------------------------------- ind on the Forb limit

def test_forb_realised_point_is_independent(tower8):
    t = tower8.copy()
    B = (1, 2)
    p = one_point_extensions(t, B, t.triangles)[0]
    (a,), _ = realize_left(t, p)
    rest = tuple(v for v in t.universe() if v not in B and v != a)
    assert ForbLimitBackend(t).ind((a,), B, rest)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_pairwise_ind_agrees_with_running_the_amalgam(tower8, data):
    pick = st.lists(st.integers(0, 11), max_size=3, unique=True)
    A, B, C = data.draw(pick), data.draw(pick), data.draw(pick)
    assert forb_ind(tower8, A, B, C) == forb_ind_by_amalgam(tower8, A, B, C)


def test_free_amalgamation_with_a_symmetric_solution_is_symmetric():
    lang = Language.parse("R+-,X")
    tower = build_tower(TriangleSet(lang, ["R+ R+ R+"]), PriorityOrder.parse(lang, "X"), SaturationBudget(20, 1))
    b = ForbLimitBackend(tower)
    r = audit_axiom(b, "symmetry", bounds=AuditBounds(max_set=2, window=8))
    assert b.symmetric and r.passed and r.configurations > 0


def test_free_amalgamation_with_an_oriented_solution_is_not_symmetric():
    # a -> c for A ⫝ C but c -> a for C ⫝ A
    tower = build_tower(TriangleSet(LANG, []), PriorityOrder.parse(LANG, "G+"), SaturationBudget(20, 1))
    r = audit_axiom(ForbLimitBackend(tower), "symmetry", bounds=AuditBounds(max_set=2, window=8))
    assert r.status == "expected-fail"


# ---------------------------------------------------------------- audits

@pytest.mark.parametrize("axiom,variant", [("transitivity", "left"), ("transitivity", "right"),
                                           ("monotonicity", "left"), ("monotonicity", "right")])
def test_dlo_axioms_over_six_points(axiom, variant):
    r = audit_axiom(DLOBackend(range(6)), axiom, variant, AuditBounds(max_set=6, window=6))
    assert r.passed and r.configurations == 64 ** 4


def test_dlo_symmetry_is_an_expected_failure():
    r = audit_axiom(DLOBackend(range(6)), "symmetry", bounds=AuditBounds(max_set=3, window=6))
    assert r.status == "expected-fail"
    D = DLOBackend(range(6))
    assert all(replay(D, "symmetry", "left", rec) for rec in r.counterexamples)


def test_literal_monotonicity_reading_fails_and_replays():
    D = DLOBackend(range(5))
    r = audit_axiom(D, "monotonicity", "right-literal", AuditBounds(max_set=2, window=5))
    assert r.status == "expected-fail"
    assert all(replay(D, "monotonicity", "right-literal", rec) for rec in r.counterexamples)


def test_sweep_count_matches_brute_force():
    D = DLOBackend(range(4))
    r = audit_axiom(D, "monotonicity", "right-literal", AuditBounds(max_set=2, window=4, max_counterexamples=10 ** 6))
    es = [F(i) for i in range(4)]
    brute = 0
    for A, B, C, Dd in itertools.product(list(subsets(es, 2)), repeat=4):
        if D.ind(A | Dd, B, C) and not (D.ind(A, B, C) and D.ind(Dd, A | B, Dd)):
            brute += 1
    assert r.violations == brute > 0


def test_forb_stationarity_left_on_eight_point_window(forb8):
    r = audit_axiom(forb8, "stationarity", "left", AuditBounds(max_set=2, window=8, max_arity=1))
    assert r.passed and r.configurations > 0


def test_forb_stationarity_right(forb8):
    r = audit_axiom(forb8, "stationarity", "right", AuditBounds(max_set=2, window=8, max_arity=1))
    assert r.passed


@pytest.mark.parametrize("variant", ["left", "right"])
@pytest.mark.parametrize("n", [8, 9, 10])
def test_existence_over_small_bases(n, variant):
    tower = build_tower(cherlin(n), PriorityOrder.parse(LANG, "R+ > R-"), SaturationBudget(24, 1))
    r = audit_axiom(ForbLimitBackend(tower), "existence", variant, AuditBounds(max_set=2, window=5))
    assert r.passed, r.line()


def test_forb_invariance_against_partial_automorphisms(forb8):
    r = audit_axiom(forb8, "invariance", bounds=AuditBounds(max_set=2, window=8, pool_size=6))
    assert r.passed and r.configurations > 0


def test_partial_automorphisms_are_partial_isomorphisms(forb8):
    for g in partial_automorphism_pool(forb8, list(range(8)), 5, 3, seed=1):
        assert forb8.is_partial_iso(g)


def test_forb_symmetry_fails(forb8):
    r = audit_axiom(forb8, "symmetry", bounds=AuditBounds(max_set=2, window=8))
    assert r.status == "expected-fail"
    assert all(replay(forb8, "symmetry", "left", rec) for rec in r.counterexamples)


def test_audit_rejects_unknown_axiom(dlo):
    with pytest.raises(InvalidInputError):
        audit_axiom(dlo, "reflexivity")
    with pytest.raises(InvalidInputError):
        audit_axiom(dlo, "symmetry", "right-literal")


def test_audit_all_on_dlo():
    reps = audit_all(DLOBackend(range(5)), AuditBounds(max_set=2, window=5))
    bad = [r.line() for r in reps if r.status == "fail" or r.status == "budget"]
    assert not bad
    assert {r.axiom for r in reps if r.status == "expected-fail"} == {"symmetry", "monotonicity"}


# ---------------------------------------------------------------- monotonicity decomposition

def test_decompose_premise_false_is_vacuous():
    D = DLOBackend(range(5))
    facts = dict(monotonicity_decompose(D, {F(2)}, set(), {F(3)}, set()))
    assert facts["A ⫝_B CD"] is False


def test_decompose_true_premise_gives_both_conclusions():
    D = DLOBackend(range(5))
    es = [F(i) for i in range(5)]
    seen = 0
    for A, B, C, Dd in itertools.product(list(subsets(es, 1)), list(subsets(es, 2)), list(subsets(es, 1)),
                                          list(subsets(es, 1))):
        facts = monotonicity_decompose(D, A, B, C, Dd)
        if facts[0][1]:
            seen += 1
            assert facts[1][1] and facts[2][1]
    assert seen > 0


def test_decompose_on_forb(forb8):
    for A, B, C, Dd in [((0,), (1,), (2,), (3,)), ((4,), (), (5,), (6,))]:
        facts = monotonicity_decompose(forb8, A, B, C, Dd)
        if facts[0][1]:
            assert facts[1][1] and facts[2][1]
        if facts[3][1]:
            assert facts[4][1] and facts[5][1]


@pytest.mark.parametrize("axiom,variant", [("symmetry", "left"), ("monotonicity", "right-literal")])
def test_forb_sweep_count_matches_brute_force(forb8, axiom, variant):
    r = audit_axiom(forb8, axiom, variant, AuditBounds(max_set=2, window=5, max_counterexamples=10 ** 6))
    es = list(range(5))
    sets = list(subsets(es, 2))
    ind = forb8.ind
    brute = 0
    if axiom == "symmetry":
        for A, B, C in itertools.product(sets, repeat=3):
            brute += ind(A, B, C) and not ind(C, B, A)
    else:
        for A, B, C, Dd in itertools.product(sets, repeat=4):
            brute += ind(A | Dd, B, C) and not (ind(A, B, C) and ind(Dd, A | B, Dd))
    assert r.violations == brute > 0
