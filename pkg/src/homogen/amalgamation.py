"""Prioritised semi-free completion and classification of triangle sets."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (CompleteStructure, Language, OrientedSymbol, TrianglePattern, TriangleSet,
                   Violation, embeds_forbidden, enumerate_forb)
from .errors import InvalidInputError, ResourceLimitError

MAX_CLASS_SIZE = 7
# past this many columns the labelled extension table no longer fits comfortably
_MAX_EXTENSION_COLUMNS = 12


class PriorityOrder:
    """Ordered solution set ``R_1 > ... > R_m``."""

    def __init__(self, language: Language, solutions: Sequence):
        codes = []
        for s in solutions:
            codes.append(s if isinstance(s, int) else language.code(s))
        if not codes:
            raise InvalidInputError("priority order must be non-empty")
        if len(set(codes)) != len(codes):
            raise InvalidInputError("priority order has duplicates")
        if len(codes) >= language.n_colors:
            raise InvalidInputError("solution set must be a proper subset of the oriented symbols")
        self.language = language
        self.codes = tuple(codes)

    @classmethod
    def parse(cls, language: Language, text: str) -> "PriorityOrder":
        parts = text.replace(">", " ").replace(",", " ").split()
        return cls(language, parts)

    @property
    def solutions(self) -> tuple[OrientedSymbol, ...]:
        return tuple(self.language.symbol(c) for c in self.codes)

    @property
    def solution_set(self) -> frozenset:
        return frozenset(self.codes)

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.codes)

    def __eq__(self, other):
        return isinstance(other, PriorityOrder) and (self.language, self.codes) == (other.language, other.codes)

    def __hash__(self):
        return hash((self.language, self.codes))

    def __str__(self):
        return " > ".join(str(s) for s in self.solutions)

    __repr__ = __str__


def all_priority_orders(language: Language) -> list[PriorityOrder]:
    """Every ordering of every non-empty proper subset of the oriented symbols."""
    m = language.n_colors
    out = []
    for k in range(1, m):
        for perm in itertools.permutations(range(m), k):
            out.append(PriorityOrder(language, perm))
    return out


@dataclass(frozen=True)
class AmalgamProblem:
    """Amalgamate ``A`` and ``C`` over their common vertices ``B``."""

    A: CompleteStructure
    C: CompleteStructure
    B: tuple

    def __post_init__(self):
        B = tuple(self.B)
        object.__setattr__(self, "B", B)
        if self.A.language != self.C.language:
            raise InvalidInputError("A and C use different languages")
        sa, sc, sb = set(self.A.vertices), set(self.C.vertices), set(B)
        if not sb <= sa or not sb <= sc:
            raise InvalidInputError("B must be contained in both A and C")
        if sa & sc != sb:
            raise InvalidInputError("A and C may only share the vertices of B")
        for x in B:
            for y in B:
                if x != y and self.A.code(x, y) != self.C.code(x, y):
                    raise InvalidInputError(f"A and C disagree on the base pair {x, y}")

    @property
    def language(self) -> Language:
        return self.A.language

    @property
    def a_new(self) -> tuple:
        bs = set(self.B)
        return tuple(v for v in self.A.vertices if v not in bs)

    @property
    def c_new(self) -> tuple:
        bs = set(self.B)
        return tuple(v for v in self.C.vertices if v not in bs)

    def shape(self) -> tuple[int, int, int]:
        return len(self.B), len(self.a_new), len(self.c_new)

    def mirrored(self) -> "AmalgamProblem":
        return AmalgamProblem(self.C, self.A, self.B)


def problems_isomorphic(p: AmalgamProblem, q: AmalgamProblem) -> bool:
    """Whether some bijection B→B, A∖B→A∖B, C∖B→C∖B carries both sides of p onto q."""
    if p.shape() != q.shape() or p.language != q.language:
        return False
    for fb in itertools.permutations(q.B):
        for fa in itertools.permutations(q.a_new):
            phi = dict(zip(p.B + p.a_new, fb + fa))
            if any(p.A.code(x, y) != q.A.code(phi[x], phi[y]) for x, y in itertools.combinations(phi, 2)):
                continue
            for fc in itertools.permutations(q.c_new):
                psi = dict(zip(p.B + p.c_new, fb + fc))
                if all(p.C.code(x, y) == q.C.code(psi[x], psi[y]) for x, y in itertools.combinations(psi, 2)):
                    return True
    return False


@dataclass(frozen=True)
class NoAdmissibleColor:
    a: int
    c: int
    blocked_by: tuple  # ((colour, b), ...) one blocking base point per solution colour

    def describe(self, language: Language) -> str:
        why = ", ".join(f"{language.symbol(col)} blocked by {b}" for col, b in self.blocked_by)
        return f"no admissible colour for ({self.a}, {self.c}): {why}"


@dataclass(frozen=True)
class ForbiddenTriangleInResult:
    witness: Violation

    def describe(self, language: Language) -> str:
        return f"result embeds forbidden {self.witness.pattern} on {self.witness.vertices}"


@dataclass(frozen=True)
class AmalgamOutcome:
    completed: Optional[CompleteStructure]
    failure: object = None
    choices: dict = field(default_factory=dict)  # (a, c) -> colour code

    @property
    def ok(self) -> bool:
        return self.completed is not None

    def describe(self, language: Language) -> str:
        return "completed" if self.ok else self.failure.describe(language)


def _first_unblocked(T: TriangleSet, pr: PriorityOrder, rab: Sequence[int], rbc: Sequence[int]):
    """Index into ``pr`` of the first colour unblocked by every base point, and blockers."""
    tab = T.table
    blockers = []
    for col in pr.codes:
        for k in range(len(rab)):
            if tab[rab[k], col, rbc[k]]:
                blockers.append((col, k))
                break
        else:
            return col, blockers
    return None, blockers


def amalgam_color(T: TriangleSet, pr: PriorityOrder, rab: Sequence[int], rbc: Sequence[int]) -> Optional[int]:
    """Colour ``r(a,c)`` chosen by the prioritised rule from the base colours alone."""
    return _first_unblocked(T, pr, rab, rbc)[0]


def _assemble(p: AmalgamProblem, choices: dict) -> CompleteStructure:
    lang = p.language
    vertices = list(p.A.vertices) + list(p.c_new)
    edges = {(x, y): c for x, y, c in p.A.pairs()}
    edges.update({(x, y): c for x, y, c in p.C.pairs()})
    edges.update(choices)
    return CompleteStructure.from_edges(lang, vertices, edges)


def prioritised_amalgam(p: AmalgamProblem, T: TriangleSet, pr: PriorityOrder,
                        pair_order: Optional[Iterable] = None) -> AmalgamOutcome:
    """Complete ``A`` and ``C`` over ``B`` with the first unblocked solution colour per pair."""
    if pr.language != p.language or T.language != p.language:
        raise InvalidInputError("problem, triangle set and priority use different languages")
    pairs = list(pair_order) if pair_order is not None else [
        (a, c) for a in p.a_new for c in p.c_new]
    if sorted(pairs) != sorted((a, c) for a in p.a_new for c in p.c_new):
        raise InvalidInputError("pair_order must list every cross pair exactly once")
    B = p.B
    choices = {}
    failures = []
    for a, c in pairs:
        rab = [p.A.code(a, b) for b in B]
        rbc = [p.C.code(b, c) for b in B]
        col, blockers = _first_unblocked(T, pr, rab, rbc)
        if col is None:
            failures.append(NoAdmissibleColor(a, c, tuple((cc, B[k]) for cc, k in blockers)))
        else:
            choices[a, c] = col
    if failures:
        return AmalgamOutcome(None, min(failures, key=lambda f: (f.a, f.c)), choices)
    D = _assemble(p, choices)
    bad = embeds_forbidden(D, T)
    if bad is not None:
        return AmalgamOutcome(None, ForbiddenTriangleInResult(bad), choices)
    return AmalgamOutcome(D, None, choices)


def free_amalgam(p: AmalgamProblem, solution) -> CompleteStructure:
    code = solution if isinstance(solution, int) else p.language.code(solution)
    return _assemble(p, {(a, c): code for a in p.a_new for c in p.c_new})


def semifree_complete(p: AmalgamProblem, T: TriangleSet, solutions: Iterable) -> Optional[CompleteStructure]:
    """Some Forb_c(T) completion using only ``solutions`` on cross pairs, by backtracking."""
    lang = p.language
    sols = sorted({s if isinstance(s, int) else lang.code(s) for s in solutions})
    tab = T.table
    dual = lang.dual_codes
    pairs = [(a, c) for a in p.a_new for c in p.c_new]
    verts = list(p.A.vertices) + list(p.c_new)
    known = {}
    for S in (p.A, p.C):
        for x, y, c in S.pairs():
            known[x, y] = c
            known[y, x] = dual[c]

    def ok(a, c):
        for w in verts:
            if w in (a, c) or (a, w) not in known or (w, c) not in known:
                continue
            if tab[known[a, w], known[a, c], known[w, c]]:
                return False
        return True

    def rec(k):
        if k == len(pairs):
            return True
        a, c = pairs[k]
        for col in sols:
            known[a, c], known[c, a] = col, dual[col]
            if ok(a, c) and rec(k + 1):
                return True
            del known[a, c], known[c, a]
        return False

    if not rec(0):
        return None
    D = _assemble(p, {pc: known[pc] for pc in pairs})
    assert embeds_forbidden(D, T) is None
    return D


# --------------------------------------------------------------------------- classification


def _extension_table(B: CompleteStructure, T: TriangleSet, k: int) -> np.ndarray:
    """All labelled ways to add ``k`` points to ``B`` inside Forb_c(T).

    Columns: ``r(new_i, b_j)`` row-major, then ``r(new_t, new_i)`` for t < i.
    """
    m = B.language.n_colors
    tab = T.table
    nb = len(B)
    bm = np.array(B.matrix, dtype=np.int8).reshape(nb, nb)
    rows = np.zeros((1, 0), dtype=np.int8)
    col_b: dict = {}
    col_n: dict = {}
    for i in range(k):
        width = nb + i
        if rows.shape[1] + width > _MAX_EXTENSION_COLUMNS:
            raise ResourceLimitError("extension table too large for this sweep size")
        # grid[:, j] = r(new_i, b_j); grid[:, nb + t] = r(new_t, new_i)
        if width:
            grid = np.indices((m,) * width, dtype=np.int8).reshape(width, -1).T
        else:
            grid = np.zeros((1, 0), dtype=np.int8)
        keep = np.ones(len(grid), dtype=bool)
        for j in range(nb):
            for j2 in range(j + 1, nb):
                keep &= ~tab[grid[:, j], grid[:, j2], bm[j, j2]]
        grid = grid[keep]
        n_old = len(rows)
        old = np.repeat(rows, len(grid), axis=0)
        g = np.tile(grid, (n_old, 1))
        keep = np.ones(len(old), dtype=bool)
        for t in range(i):
            for j in range(nb):
                keep &= ~tab[g[:, nb + t], old[:, col_b[t, j]], g[:, j]]
            for t2 in range(t + 1, i):
                keep &= ~tab[old[:, col_n[t, t2]], g[:, nb + t], g[:, nb + t2]]
        base = old.shape[1]
        rows = np.concatenate([old, g], axis=1)[keep]
        for j in range(nb):
            col_b[i, j] = base + j
        for t in range(i):
            col_n[t, i] = base + nb + t
    cols = [col_b[i, j] for i in range(k) for j in range(nb)]
    cols += [col_n[t, i] for t in range(k) for i in range(t + 1, k)]
    return rows[:, cols]


def _pair_index(k: int, i: int, j: int) -> int:
    return sum(k - 1 - t for t in range(i)) + (j - i - 1)


def _sweep_block(B, EA, EC, kA, kC, T, pr):
    """Failure mask for the broadcast product of A-extension and C-extension rows."""
    nb = len(B)
    tab = T.table
    dual = np.array(B.language.dual_codes, dtype=np.int8)
    codes = np.array(pr.codes, dtype=np.int8)
    shape = np.broadcast_shapes((EA.shape[0],), (EC.shape[0],))
    cross = {}
    noadm = np.zeros(shape, dtype=bool)
    for a in range(kA):
        for c in range(kC):
            chosen = np.full(shape, -1, dtype=np.int8)
            for col in codes:
                blocked = np.zeros(shape, dtype=bool)
                for j in range(nb):
                    blocked |= tab[EA[:, a * nb + j], col, dual[EC[:, c * nb + j]]]
                free = (~blocked) & (chosen < 0)
                chosen = np.where(free, col, chosen)
            noadm |= chosen < 0
            cross[a, c] = np.where(chosen < 0, 0, chosen)
    fail = noadm.copy()
    offA, offC = kA * nb, kC * nb
    for a in range(kA):
        for a2 in range(a + 1, kA):
            r = EA[:, offA + _pair_index(kA, a, a2)]
            for c in range(kC):
                fail |= tab[r, cross[a, c], cross[a2, c]]
    for c in range(kC):
        for c2 in range(c + 1, kC):
            r = EC[:, offC + _pair_index(kC, c, c2)]
            for a in range(kA):
                fail |= tab[cross[a, c], cross[a, c2], r]
    return fail


def _problem_from_rows(B, rowA, rowC, kA, kC) -> AmalgamProblem:
    lang = B.language
    nb = len(B)
    bverts = list(range(nb))
    averts = list(range(nb, nb + kA))
    cverts = list(range(nb + kA, nb + kA + kC))
    base_edges = {(x, y): c for x, y, c in B.relabel(dict(zip(B.vertices, bverts))).pairs()}

    def build(row, news):
        k = len(news)
        edges = dict(base_edges)
        for i in range(k):
            for j in range(nb):
                edges[news[i], j] = int(row[i * nb + j])
        for i in range(k):
            for i2 in range(i + 1, k):
                edges[news[i], news[i2]] = int(row[k * nb + _pair_index(k, i, i2)])
        return CompleteStructure.from_edges(lang, bverts + news, edges)

    return AmalgamProblem(build(rowA, averts), build(rowC, cverts), tuple(bverts))


@dataclass
class ClassVerdict:
    passed: bool
    priority: PriorityOrder
    problems_checked: int = 0
    problem: Optional[AmalgamProblem] = None
    outcome: Optional[AmalgamOutcome] = None
    counterexamples: list = field(default_factory=list)

    def __bool__(self):
        return self.passed


def _shapes(max_size: int, full: bool, min_base: int):
    for n in range(2, max_size + 1):
        # non-empty bases first, the disjoint union last
        for kB in list(range(max(1, min_base), n - 1)) + ([0] if min_base == 0 else []):
            for kA in range(1, n - kB):
                kC = n - kB - kA
                if kC < 1:
                    continue
                if not full and (kA > 2 or kC > 2):
                    continue
                yield kB, kA, kC


def check_prioritised_class(language: Language, T: TriangleSet, pr: PriorityOrder, max_size: int,
                            full: bool = False, min_base: int = 0, collect: int = 0,
                            shapes: Optional[Iterable[tuple[int, int, int]]] = None) -> ClassVerdict:
    """Test ``A ⊗_B C ∈ Forb_c(T)`` for every amalgam problem with ``|A ∪ C| <= max_size``.

    Problems are taken over every isomorphism type of ``B`` and every labelled
    extension to ``A`` and ``C``. ``full=False`` restricts to at most two new
    points per side, which suffices for triangle constraints. Order: by total
    size, then base size (empty base last), then side sizes. ``collect > 0``
    keeps up to that many counterexamples instead of stopping at the first.
    """
    if max_size < 3:
        raise InvalidInputError("max_size must be at least 3")
    if max_size > MAX_CLASS_SIZE:
        raise ResourceLimitError(f"max_size {max_size} exceeds bound {MAX_CLASS_SIZE}")
    verdict = ClassVerdict(True, pr)
    shape_list = list(shapes) if shapes is not None else list(_shapes(max_size, full, min_base))
    bases = {}
    ext_cache = {}
    for kB, kA, kC in shape_list:
        if kB not in bases:
            bases[kB] = enumerate_forb(language, T, kB)
        for bi, B in enumerate(bases[kB]):
            for k in (kA, kC):
                if (kB, bi, k) not in ext_cache:
                    ext_cache[kB, bi, k] = _extension_table(B, T, k)
            EA, EC = ext_cache[kB, bi, kA], ext_cache[kB, bi, kC]
            if len(EA) == 0 or len(EC) == 0:
                continue
            verdict.problems_checked += len(EA) * len(EC)
            outer_is_a = len(EA) <= len(EC)
            outer = EA if outer_is_a else EC
            for r in range(len(outer)):
                if outer_is_a:
                    fail = _sweep_block(B, EA[r:r + 1], EC, kA, kC, T, pr)
                else:
                    fail = _sweep_block(B, EA, EC[r:r + 1], kA, kC, T, pr)
                if not fail.any():
                    continue
                for idx in np.flatnonzero(fail):
                    ra, rc = (EA[r], EC[idx]) if outer_is_a else (EA[idx], EC[r])
                    prob = _problem_from_rows(B, ra, rc, kA, kC)
                    out = prioritised_amalgam(prob, T, pr)
                    assert not out.ok, "vectorised sweep disagrees with prioritised_amalgam"
                    if verdict.passed:
                        verdict.passed = False
                        verdict.problem, verdict.outcome = prob, out
                    if collect <= 0:
                        return verdict
                    verdict.counterexamples.append((prob, out))
                    if len(verdict.counterexamples) >= collect:
                        return verdict
    return verdict


# --------------------------------------------------------------------------- syntactic conditions


@dataclass
class ConditionVerdict:
    passed: bool
    offending: Optional[TrianglePattern] = None
    detail: str = ""
    counterexample: object = None

    def __bool__(self):
        return self.passed


def _edge_classes(language: Language, codes):
    """Each edge of a triangle as the set {colour, dual colour}."""
    return [frozenset((c, language.dual(c))) for c in codes]


def condition1_check(T: TriangleSet, solutions: Iterable) -> ConditionVerdict:
    """Pass iff no forbidden triangle has two edges whose colour class meets the solutions."""
    lang = T.language
    sols = {s if isinstance(s, int) else lang.code(s) for s in solutions}
    for pat in T.sorted_patterns():
        hits = sum(1 for cls in _edge_classes(lang, pat.codes) if cls & sols)
        if hits >= 2:
            return ConditionVerdict(False, pat, f"{pat} has {hits} edges in the solution set")
    return ConditionVerdict(True)


def maincond_part1(T: TriangleSet, pr: PriorityOrder) -> ConditionVerdict:
    """No forbidden triangle with an ``R_1 R_1`` or ``R_1 R_2`` pair of edges (up to orientation)."""
    lang = T.language
    r1 = frozenset((pr.codes[0], lang.dual(pr.codes[0])))
    r2 = frozenset((pr.codes[1], lang.dual(pr.codes[1]))) if len(pr) > 1 else frozenset()
    for pat in T.sorted_patterns():
        cls = _edge_classes(lang, pat.codes)
        for i, j in itertools.combinations(range(3), 2):
            x, y = cls[i], cls[j]
            if (x & r1 and y & r1) or (x & r1 and y & r2) or (x & r2 and y & r1):
                return ConditionVerdict(False, pat, f"{pat} involves R_1R_1 or R_1R_2")
    return ConditionVerdict(True)


def maincond_check(T: TriangleSet, pr: PriorityOrder, backend=None, max_base: int = 2,
                   window: int = 8) -> ConditionVerdict:
    """Part (i) syntactically; part (ii) exhaustively over a window of a saturated stage.

    Part (ii): for vertices a, b, c and ``|B| <= max_base`` in the window, if
    ``a ⫝_{bB} c`` and ``r(a, b)`` is a solution colour then ``a ⫝_B c``.
    """
    part1 = maincond_part1(T, pr)
    if not part1 or backend is None:
        return part1
    verts = list(backend.universe())[:window]
    sols = pr.solution_set
    for size in range(max_base + 1):
        for Bset in itertools.combinations(verts, size):
            rest = [v for v in verts if v not in Bset]
            for a, b, c in itertools.permutations(rest, 3):
                if backend.code(a, b) not in sols:
                    continue
                if backend.ind((a,), (b,) + Bset, (c,)) and not backend.ind((a,), Bset, (c,)):
                    return ConditionVerdict(False, None, "part (ii) fails",
                                            {"a": a, "b": b, "c": c, "B": list(Bset)})
    return ConditionVerdict(True, detail=f"part (ii) checked on a {len(verts)}-vertex window")


# --------------------------------------------------------------------------- classification


@dataclass
class Classification:
    """Per priority order: the syntactic condition and, when it holds, the class sweep."""

    triangles: TriangleSet
    rows: list = field(default_factory=list)   # (order, ConditionVerdict, ClassVerdict | None)

    @property
    def prioritised(self) -> list[PriorityOrder]:
        return [pr for pr, cond, cls in self.rows if cond and cls is not None and cls.passed]

    def summary(self) -> str:
        lang = self.triangles.language
        out = []
        for pr, cond, cls in self.rows:
            if not cond:
                out.append(f"{pr}: condition 1 fails ({cond.detail})")
            elif cls.passed:
                out.append(f"{pr}: prioritised semi-free ({cls.problems_checked} problems)")
            else:
                out.append(f"{pr}: fails on shape {cls.problem.shape()}: {cls.outcome.describe(lang)}")
        return "\n".join(out)


def classify(T: TriangleSet, max_size: int = 5, full: bool = False,
             orders: Optional[Iterable[PriorityOrder]] = None) -> Classification:
    """Sweep priority orders: proper solution subsets by size, each ordering in lexicographic code order.

    Orders whose solution set fails condition 1 are not swept.
    """
    lang = T.language
    result = Classification(T)
    cond_cache = {}
    for pr in (orders if orders is not None else all_priority_orders(lang)):
        key = pr.solution_set
        if key not in cond_cache:
            cond_cache[key] = condition1_check(T, pr.codes)
        cond = cond_cache[key]
        cls = check_prioritised_class(lang, T, pr, max_size, full=full) if cond else None
        result.rows.append((pr, cond, cls))
    return result
