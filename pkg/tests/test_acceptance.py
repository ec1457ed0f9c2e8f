"""Acceptance criteria 1-9, one pass/fail line each.

Runtime limits are the pinned tolerances; a criterion passes only when its
checks hold and it finishes inside its limit.  Run with ``pytest -v`` (the
lines appear in the terminal summary) or directly as a script.
"""

import itertools
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from homogen.amalgamation import (AmalgamProblem, PriorityOrder, check_prioritised_class, condition1_check,
                                  free_amalgam, prioritised_amalgam, problems_isomorphic)
from homogen.core import CompleteStructure, Language, TriangleSet, embeds_forbidden
from homogen.dynamics import (comm, commutator_mover_build, colour_range_certificate, conjugate_product_run,
                              default_schedule, lemma_colourrange_build, mover_certificate, random_chain,
                              random_partial_automorphism, verify_certificate)
from homogen.errors import BudgetExhausted, LogicalFailure
from homogen.fraisse import SaturationBudget, build_tower
from homogen.presets import cherlin, cherlin_language, figure_left, figure_right, worked_example_8
from homogen.swir import AuditBounds, DLOBackend, ForbLimitBackend, audit_all, audit_axiom, replay

LANG = cherlin_language()
RESULTS: list = []   # (criterion, passed, seconds, limit, detail)

LIMITS = {1: 1, 2: 5 * 60, 3: 60, 4: 10 * 60, 5: 60, 6: 60, 7: 15 * 60, 8: 15 * 60, 9: 5 * 60}


def order(text, lang=LANG):
    return PriorityOrder.parse(lang, text)


def report(n, t0, ok, detail):
    """Record the verdict for criterion ``n``, counting the runtime limit, and assert it."""
    secs = time.perf_counter() - t0
    within = secs < LIMITS[n]
    RESULTS.append((n, ok and within, secs, LIMITS[n], detail if within else f"{detail}; over the time limit"))
    assert ok, detail
    assert within, f"criterion {n} took {secs:.1f}s, limit {LIMITS[n]}s"


def summary_lines():
    out = []
    for n, ok, secs, limit, detail in sorted(RESULTS):
        out.append(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({secs:.1f}s of {limit}s) {detail}")
    return out


def test_criterion_1_worked_amalgam():
    t0 = time.perf_counter()
    out = prioritised_amalgam(worked_example_8(), cherlin(8), order("R+ > R-"))
    got = {k: str(LANG.symbol(v)) for k, v in out.choices.items()}
    ok = out.ok and got == {(1, 3): "R-", (2, 3): "R+"}
    report(1, t0, ok, f"r(a1,c)={got.get((1, 3))}, r(a2,c)={got.get((2, 3))}")


_C2_PARTS: list = []


@pytest.mark.parametrize("n", [8, 9, 10])
def test_criterion_2_classification(n):
    t0 = time.perf_counter()
    cond = condition1_check(cherlin(n), ["R+", "R-"])
    v = check_prioritised_class(LANG, cherlin(n), order("R+ > R-"), 6, full=True)
    detail = (f"#{n}: condition 1 {'pass' if cond else 'fail'}, R+ > R- class sweep to size 6 "
              f"{'pass' if v else 'fail'} ({v.problems_checked} problems)")
    secs = time.perf_counter() - t0
    # criterion 2 covers three triangle sets; its line is written once all three ran
    _C2_PARTS.append((bool(cond and v), secs, detail))
    parts = _C2_PARTS
    if len(parts) == 3:
        RESULTS.append((2, all(p[0] and p[1] < LIMITS[2] for p in parts), max(p[1] for p in parts), LIMITS[2],
                        "; ".join(p[2] for p in parts)))
    assert cond and v, detail
    assert secs < LIMITS[2]


def _reversed(p):
    def flip(S):
        return CompleteStructure(LANG, S.vertices, [[LANG.dual(c) if c >= 0 else c for c in row] for row in S.matrix])
    return AmalgamProblem(flip(p.A), flip(p.C), p.B)


def test_criterion_3_eleven_and_twelve_fail():
    t0 = time.perf_counter()
    # figures for the order headed by R+ / G+; the reversed order gives the arrow-reversed figure
    want = {"R+ > R-": figure_left(), "R- > R+": _reversed(figure_left()),
            "G+ > G-": figure_right(), "G- > G+": _reversed(figure_right())}
    ok, parts = True, []
    for n in (11, 12):
        for text, fig in want.items():
            v = check_prioritised_class(LANG, cherlin(n), order(text), 4, collect=10 ** 5, shapes=[fig.shape()])
            hit = any(problems_isomorphic(p, fig) for p, _ in v.counterexamples)
            least = check_prioritised_class(LANG, cherlin(n), order(text), 4)
            ok &= (not v.passed) and hit and not least.passed
            parts.append(f"#{n} {text}: {'figure found' if hit else 'figure missing'}")
    report(3, t0, ok, "; ".join(parts))


def test_criterion_4_forb_audit():
    t0 = time.perf_counter()
    tower = build_tower(cherlin(8), order("R+ > R-"), SaturationBudget(40, 1))
    b = ForbLimitBackend(tower)
    bounds = AuditBounds(max_set=2, window=16, max_arity=2)
    runs = [("monotonicity", "left"), ("monotonicity", "right"), ("transitivity", "left"),
            ("transitivity", "right"), ("stationarity", "left"), ("stationarity", "right"),
            ("existence", "left"), ("existence", "right")]
    reps = [audit_axiom(b, ax, var, bounds) for ax, var in runs]
    bad = [r.line() for r in reps if not r.passed]
    ok = len(tower) >= 30 and not bad
    report(4, t0, ok, f"{len(tower)}-vertex tower, sets from its first 16 vertices: "
                      + ("all zero counterexamples" if not bad else "; ".join(bad)))


def test_criterion_5_dlo_audit():
    t0 = time.perf_counter()
    D = DLOBackend(range(8))
    reps = audit_all(D, AuditBounds(max_set=8, window=8, max_arity=2))
    axioms_ok = all(r.passed for r in reps if r.axiom != "symmetry" and r.variant != "right-literal")
    sym = [r for r in reps if r.axiom == "symmetry"][0]
    sym_ok = sym.status == "expected-fail" and all(replay(D, "symmetry", "left", c) for c in sym.counterexamples)
    example = sym.counterexamples[0] if sym.counterexamples else None
    report(5, t0, axioms_ok and sym_ok,
           f"five axioms pass in both variants over all subsets of 8 points; symmetry fails, e.g. {example}")


def _random_problem(rng, T, lang, max_size=5):
    while True:
        n = rng.randint(2, max_size)
        kB = rng.randint(0, n - 2)
        kA = rng.randint(1, n - kB - 1)
        base, a_new, c_new = list(range(kB)), list(range(kB, kB + kA)), list(range(kB + kA, n))
        edges = {p: rng.randrange(lang.n_colors) for p in itertools.combinations(base + a_new, 2)}
        cedges = {p: edges[p] for p in itertools.combinations(base, 2)}
        cedges.update({p: rng.randrange(lang.n_colors) for p in itertools.combinations(base + c_new, 2)
                       if p not in cedges})
        A = CompleteStructure.from_edges(lang, base + a_new, edges)
        C = CompleteStructure.from_edges(lang, base + c_new, cedges)
        if embeds_forbidden(A, T) is None and embeds_forbidden(C, T) is None:
            return AmalgamProblem(A, C, tuple(base))


def test_criterion_6_free_case():
    t0 = time.perf_counter()
    rng = random.Random(6)
    # oriented singletons over the Cherlin language and a symmetric singleton over R± and X
    sym_lang = Language.parse("R+-,X")
    cases = [(LANG, cherlin(k), s) for k in (8, 9, 10, 11, 12) for s in ("R+", "R-", "G+", "G-")]
    cases += [(sym_lang, TriangleSet(sym_lang, ["R+ R+ R+"]), "X")]
    agree = completed = 0
    for i in range(1000):
        lang, T, sol = cases[i % len(cases)]
        p = _random_problem(rng, T, lang)
        out = prioritised_amalgam(p, T, order(sol, lang))
        free = free_amalgam(p, sol)
        if out.ok:
            completed += 1
            agree += out.completed == free
        else:
            # both fail together: the free completion must contain a forbidden triangle too
            agree += embeds_forbidden(free, T) is not None
    tower = build_tower(TriangleSet(sym_lang, ["R+ R+ R+"]), order("X", sym_lang), SaturationBudget(20, 1))
    b = ForbLimitBackend(tower)
    sym = audit_axiom(b, "symmetry", bounds=AuditBounds(max_set=2, window=12))
    oriented = build_tower(TriangleSet(LANG, []), order("R+"), SaturationBudget(20, 1))
    osym = audit_axiom(ForbLimitBackend(oriented), "symmetry", bounds=AuditBounds(max_set=2, window=8))
    ok = agree == 1000 and sym.passed and b.symmetric
    report(6, t0, ok, f"{agree}/1000 problems agree ({completed} completed); symmetric singleton X: ind symmetric "
                      f"on {sym.configurations} configurations; note: an oriented singleton R+ is not symmetric "
                      f"({osym.violations} violations)")


def test_criterion_7_pipeline_certificates():
    t0 = time.perf_counter()
    tower = build_tower(cherlin(8), order("R+ > R-"), SaturationBudget(60, 1))
    verified = budget = logical = 0
    for seed in range(100):
        rng = random.Random(seed)
        b = ForbLimitBackend(tower.copy())
        gs, Xs = random_chain(b, rng, max_set=2)
        try:
            run = conjugate_product_run(b, gs, Xs, rng=rng)
        except BudgetExhausted:
            budget += 1
            continue
        except LogicalFailure:
            logical += 1
            continue
        ok_ext = verify_certificate(run.extension.certificate.dumps())[0]
        ok_sol = verify_certificate(run.certificate.dumps())[0]
        verified += ok_ext and ok_sol
        logical += not (ok_ext and ok_sol)
    report(7, t0, verified >= 95 and logical == 0,
           f"{verified}/100 runs verified, {budget} budget failures, {logical} logical failures")


def test_criterion_8_commutator_builders():
    t0 = time.perf_counter()
    tower = build_tower(cherlin(8), order("R+ > R-"), SaturationBudget(60, 1))
    b = ForbLimitBackend(tower)
    rng = random.Random(0)
    g = random_partial_automorphism(b, rng.sample(range(60), 3), rng, name="g")
    schedule = default_schedule(b)
    h, crep = lemma_colourrange_build(b, g, schedule)
    cr_cert = colour_range_certificate(b, g, h, crep)
    hg = comm(h, g)
    k, mrep = commutator_mover_build(b, hg, schedule, variant="both-sides")
    mv_cert = mover_certificate(b, hg, k, mrep)
    sides = {"[k,g] R", "[k,g] L", "[g,k] R", "[g,k] L"}
    all_sides = len(mrep.witnesses) == len(schedule) and all(set(ws) == sides for ws in mrep.witnesses.values())
    ok = (crep.ok and len(crep.witnesses) == len(schedule) and verify_certificate(cr_cert.dumps())[0]
          and mrep.ok and all_sides and verify_certificate(mv_cert.dumps())[0])
    report(8, t0, ok, f"{len(schedule)} scheduled types; colour range {'verified' if crep.ok else 'failed'}; "
                      f"[[h,g],k] moves every type on all four sides: {'yes' if ok else 'no'}")


def test_criterion_9_property_suites():
    t0 = time.perf_counter()
    here = Path(__file__).parent
    out = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                          str(here / "test_properties.py")], capture_output=True, text=True, cwd=here.parent)
    last = out.stdout.strip().splitlines()[-1] if out.stdout.strip() else out.stderr.strip()[-200:]
    report(9, t0, out.returncode == 0, last)


if __name__ == "__main__":
    code = pytest.main([__file__, "-q"])
    sys.exit(code)
