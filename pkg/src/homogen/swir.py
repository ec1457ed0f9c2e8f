"""The independence relation A ⫝_B C on two backends, and audits of its axioms.

Both backends decompose ``ind`` pairwise: A ⫝_B C holds iff A∩C ⊆ B and every
cross pair (a, c) with a ∈ A∖B, c ∈ C∖B is individually acceptable over B.
The audits exploit this with bitmask tables over a window of elements.
"""

from __future__ import annotations

import bisect
import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .amalgamation import AmalgamProblem, PriorityOrder, prioritised_amalgam
from .core import CompleteStructure, TriangleSet
from .errors import BudgetExhausted, InvalidInputError, LogicalFailure, ResourceLimitError
from .fraisse import Tower, TypeDescriptor, one_point_extensions, tp

LEFT, RIGHT = "L", "R"


# ---------------------------------------------------------------------- plain ind


def _first_free(tab, codes, rab: Sequence[int], rbc: Sequence[int]) -> int:
    for c in codes:
        if not any(tab[x, c, y] for x, y in zip(rab, rbc)):
            return c
    return -1


def forb_ind(M, A: Iterable, B: Iterable, C: Iterable, triangles: Optional[TriangleSet] = None,
             priority: Optional[PriorityOrder] = None) -> bool:
    """A ⫝_B C: A∩C ⊆ B and each cross pair carries the first unblocked priority colour."""
    T = triangles or M.triangles
    pr = priority or M.priority
    A, B, C = set(A), list(dict.fromkeys(B)), set(C)
    Bs = set(B)
    if A & C - Bs:
        return False
    tab = T.table
    for a in A - Bs:
        rab = [M.code(a, b) for b in B]
        for c in C - Bs:
            if M.code(a, c) != _first_free(tab, pr.codes, rab, [M.code(b, c) for b in B]):
                return False
    return True


def forb_ind_by_amalgam(M, A, B, C, triangles=None, priority=None) -> bool:
    """Same relation, re-derived by running the prioritised amalgam of AB and BC over B."""
    T = triangles or M.triangles
    pr = priority or M.priority
    A, B, C = set(A), set(B), set(C)
    if A & C - B:
        return False
    if not (A - B) or not (C - B):
        return True
    AB, BC, ABC = sorted(A | B), sorted(B | C), sorted(A | B | C)
    sub = M.induced(ABC) if isinstance(M, Tower) else M.induced(ABC)
    p = AmalgamProblem(sub.induced(AB), sub.induced(BC), tuple(sorted(B)))
    out = prioritised_amalgam(p, T, pr)
    return out.ok and all(out.completed.code(x, y) == sub.code(x, y) for x, y in itertools.combinations(ABC, 2))


def dlo_ind(A: Iterable, B: Iterable, C: Iterable) -> bool:
    A, B, C = set(A), sorted(set(B)), set(C)
    Bs = set(B)
    if A & C - Bs:
        return False
    for a in A - Bs:
        for c in C - Bs:
            if a <= c and not any(a <= b <= c for b in B):
                return False
    return True


def transport(p: TypeDescriptor, phi) -> TypeDescriptor:
    """The type ``phi · p`` over ``phi(base)``; phi must be a partial isomorphism on the base."""
    return TypeDescriptor(tuple(phi[b] for b in p.base), p.to_base, p.internal, p.algebraic)


def holds(backend, x: tuple, constraints) -> bool:
    """Every ``("L", Y, C)`` gives x ⫝_Y C and every ``("R", Y, C)`` gives C ⫝_Y x."""
    for s, Y, C in constraints:
        if s == LEFT and not backend.ind(x, Y, C):
            return False
        if s == RIGHT and not backend.ind(C, Y, x):
            return False
    return True


# ---------------------------------------------------------------------- backends


class ForbLimitBackend:
    """Independence on a tower approximating the limit of Forb_c(S)."""

    name = "forb-limit"

    def __init__(self, tower: Tower, *, search_nodes: int = 20_000):
        self.tower = tower
        self.search_nodes = search_nodes

    @property
    def triangles(self):
        return self.tower.triangles

    @property
    def priority(self):
        return self.tower.priority

    @property
    def symmetric(self) -> bool:
        """Free amalgamation (one solution colour) is orientation blind."""
        return len(self.priority) == 1 and self.tower.language.dual(self.priority.codes[0]) == self.priority.codes[0]

    def universe(self):
        return list(range(self.tower.n))

    def window(self, size: int) -> list:
        return list(range(min(size, self.tower.n)))

    def code(self, x, y) -> int:
        return self.tower.code(x, y)

    def _check(self, xs):
        for x in xs:
            if not (isinstance(x, (int, np.integer)) and 0 <= x < self.tower.n):
                raise InvalidInputError(f"element {x!r} not in the tower")

    def ind(self, A, B, C) -> bool:
        A, B, C = list(A), list(B), list(C)
        self._check(A + B + C)
        if len(A) * len(C) <= 16:
            return forb_ind(self.tower, A, B, C)
        Bs = set(B)
        if set(A) & set(C) - Bs:
            return False
        L = [a for a in dict.fromkeys(A) if a not in Bs]
        R = [c for c in dict.fromkeys(C) if c not in Bs]
        if not L or not R:
            return True
        return bool(self.pair_ok(L, R, list(dict.fromkeys(B))).all())

    def tp(self, a, B) -> TypeDescriptor:
        return tp(self.tower, a, B)

    def one_point_types(self, B) -> list:
        return one_point_extensions(self.tower, tuple(B), self.triangles)

    def is_partial_iso(self, phi) -> bool:
        items = list(phi.items())
        if len(set(phi.values())) != len(items):
            return False
        return all(self.code(x, y) == self.code(u, v)
                   for (x, u), (y, v) in itertools.permutations(items, 2))

    def encode(self, x):
        return int(x)

    def decode(self, x):
        return int(x)

    def scratch(self) -> "ForbLimitBackend":
        return ForbLimitBackend(self.tower.copy(), search_nodes=self.search_nodes)

    # -- vectorised pair tables

    def first_matrix(self, L: Sequence[int], R: Sequence[int], B: Sequence[int]) -> np.ndarray:
        """``first[i, j]``: ⊗ colour of the cross pair (L[i], R[j]) over B, -1 if blocked."""
        col = self.tower.colors
        tab = self.triangles.table
        L, R, B = np.asarray(L, dtype=int), np.asarray(R, dtype=int), list(B)
        out = np.full((len(L), len(R)), -1, dtype=np.int8)
        done = np.zeros(out.shape, dtype=bool)
        for c in self.priority.codes:
            blocked = np.zeros(out.shape, dtype=bool)
            for b in B:
                blocked |= tab[col[L, b][:, None], c, col[b, R][None, :]]
            take = ~blocked & ~done
            out[take] = c
            done |= take
        return out

    def pair_ok(self, L: Sequence[int], R: Sequence[int], B: Sequence[int]) -> np.ndarray:
        """Acceptability of each cross pair (L[i] on the left, R[j] on the right) over B."""
        col = self.tower.colors
        L, R = np.asarray(L, dtype=int), np.asarray(R, dtype=int)
        ok = col[np.ix_(L, R)] == self.first_matrix(L, R, B)
        inB = np.zeros(self.tower.n, dtype=bool)
        inB[list(B)] = True
        ok |= inB[L][:, None] | inB[R][None, :]
        ok &= L[:, None] != R[None, :]
        ok |= (L[:, None] == R[None, :]) & inB[L][:, None]
        return ok

    def type_codes(self, vertices: Sequence[int], B: Sequence[int]) -> np.ndarray:
        """Integer key of tp(v/B) for each v (colour digits base n_colors+1)."""
        col = self.tower.colors
        m = self.tower.language.n_colors + 1
        key = np.zeros(len(vertices), dtype=np.int64)
        for b in B:
            key = key * m + (col[list(vertices), b].astype(np.int64) + 1)
        return key

    def internal_code(self, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
        return self.tower.colors[v1, v2].astype(np.int64)

    # -- realisation

    def realize(self, p: TypeDescriptor, constraints: Sequence = (), avoid: Iterable = (),
                prefer_existing: bool = True, side: str = LEFT, extra: Iterable = ()) -> tuple:
        """A tuple of type ``p`` satisfying every ``(side, Y, C)`` constraint.

        ``("L", Y, C)`` asks ``x ⫝_Y C``; ``("R", Y, C)`` asks ``C ⫝_Y x``.
        Existing vertices are tried first (tuples of length <= 2); otherwise
        fresh vertices are appended, coloured by the ⊗ completion on ``side``
        and then adjusted per constraint.
        """
        avoid = set(avoid)
        constraints = [(s, tuple(Y), tuple(C)) for s, Y, C in constraints]
        if prefer_existing and p.arity <= 2:
            for hit in self._existing(p, avoid):
                if holds(self, hit, constraints):
                    return hit
        return self._fresh(p, constraints, side)

    def consistent(self, dom: Sequence[int], img: Sequence[int], x: int, y: int) -> bool:
        """Whether adding x -> y keeps dom -> img colour preserving."""
        if not dom:
            return True
        col = self.tower.colors
        return bool(np.array_equal(col[x, list(dom)], col[y, list(img)]))

    def realizations(self, p: TypeDescriptor, avoid: Iterable = (), limit: Optional[int] = None) -> list:
        return list(itertools.islice(self._existing(p, set(avoid)), limit))

    def _existing(self, p: TypeDescriptor, avoid: set):
        """Existing realisations of ``p`` in increasing vertex order (node capped)."""
        col = self.tower.colors
        n = self.tower.n
        base = list(p.base)
        blocked = np.zeros(n, dtype=bool)
        blocked[base] = True
        blocked[[v for v in avoid if isinstance(v, (int, np.integer)) and 0 <= v < n]] = True
        cands = []
        for i in range(p.arity):
            if p.algebraic[i] is not None:
                cands.append([base[p.algebraic[i]]])
                continue
            ok = ~blocked
            if base:
                ok &= np.all(col[:, base] == np.asarray(p.to_base[i], dtype=np.int8), axis=1)
            cands.append(np.flatnonzero(ok).tolist())
        pairs = list(itertools.combinations(range(p.arity), 2))
        nodes = 0
        chosen: list = []

        def rec(i):
            nonlocal nodes
            if i == p.arity:
                yield tuple(chosen)
                return
            for v in cands[i]:
                nodes += 1
                if nodes > self.search_nodes:
                    return
                if p.algebraic[i] is None and v in chosen:
                    continue
                if any(p.internal[k] != (-1 if chosen[a] == v else self.code(chosen[a], v))
                       for k, (a, b) in enumerate(pairs) if b == i):
                    continue
                chosen.append(v)
                yield from rec(i + 1)
                chosen.pop()

        yield from rec(0)

    def _fresh(self, p: TypeDescriptor, constraints, side) -> tuple:
        tower = self.tower
        if p.is_algebraic:
            raise InvalidInputError("fresh realisation of an algebraic type")
        k, n = p.arity, tower.n
        if n + k > tower.max_vertices:
            raise BudgetExhausted(f"tower vertex cap {tower.max_vertices} reached")
        tab = self.triangles.table
        dual = tower.language.dual_codes
        rows = np.full((k, n + k), -1, dtype=np.int8)
        for i in range(k):
            rows[i, :n] = tower.amalgam_colors(p.to_base[i], p.base, "left" if side == LEFT else "right")
        for (i, j), c in zip(itertools.combinations(range(k), 2), p.internal):
            rows[i, n + j] = c
            rows[j, n + i] = dual[c]
        fixed = set(p.base)
        new = set(range(n, n + k))

        def r(u, v):  # colour r(u, v) with fresh vertices read from rows
            if u in new:
                return int(rows[u - n, v])
            if v in new:
                return int(dual[rows[v - n, u]])
            return tower.code(u, v)

        for _ in range(4):
            changed = False
            for s, Y, C in constraints:
                for i in range(k):
                    x = n + i
                    for c in C:
                        if c in fixed or c in Y or c in new:
                            continue
                        if s == LEFT:
                            want = _first_free(tab, self.priority.codes, [r(x, y) for y in Y], [r(y, c) for y in Y])
                            got = want
                        else:
                            want = _first_free(tab, self.priority.codes, [r(c, y) for y in Y], [r(y, x) for y in Y])
                            got = -1 if want < 0 else dual[want]
                        if want < 0:
                            raise LogicalFailure(f"no admissible colour between fresh point and {c}")
                        if rows[i, c] != got:
                            rows[i, c] = got
                            changed = True
            if not changed:
                break
        if (rows[:, :n] < 0).any():
            raise LogicalFailure("⊗ completion blocked: the class is not prioritised on this stage")
        new_ids = tower.append(rows)
        if self.tp(new_ids, p.base) != p or not holds(self, new_ids, constraints):
            tower.truncate(n)
            raise LogicalFailure("fresh realisation failed re-verification", data=(p, constraints))
        return new_ids


class DLOBackend:
    """The dense linear order on exact rationals; the universe is a growing finite pool."""

    name = "dlo"
    symmetric = False

    def __init__(self, elements: Iterable = range(8), *, search_nodes: int = 50_000):
        self._pool = sorted({Fraction(x) for x in elements})
        self._set = set(self._pool)
        self.search_nodes = search_nodes

    def universe(self):
        return list(self._pool)

    def window(self, size: int) -> list:
        return self._pool[:size]

    def add(self, x) -> Fraction:
        x = Fraction(x)
        if x not in self._set:
            self._set.add(x)
            bisect.insort(self._pool, x)
        return x

    def _check(self, xs):
        for x in xs:
            if not isinstance(x, (int, Fraction)) or isinstance(x, bool):
                raise InvalidInputError(f"element {x!r} is not an exact rational")

    def ind(self, A, B, C) -> bool:
        A, B, C = list(A), list(B), list(C)
        self._check(A + B + C)
        return dlo_ind(A, B, C)

    @staticmethod
    def _sign(x, y) -> int:
        return (x > y) - (x < y)

    def tp(self, a, B) -> TypeDescriptor:
        a, B = tuple(a), tuple(B)
        pos = {b: k for k, b in enumerate(B)}
        return TypeDescriptor(B, tuple(tuple(self._sign(x, b) for b in B) for x in a),
                              tuple(self._sign(x, y) for x, y in itertools.combinations(a, 2)),
                              tuple(pos.get(x) for x in a))

    def one_point_types(self, B) -> list:
        B = tuple(B)
        vals = sorted(B)
        cuts = [vals[0] - 1] if vals else [Fraction(0)]
        cuts += [(x + y) / 2 for x, y in zip(vals, vals[1:])]
        if vals:
            cuts.append(vals[-1] + 1)
        return [self.tp((c,), B) for c in cuts]

    def is_partial_iso(self, phi) -> bool:
        items = sorted(phi.items())
        return all(u < v for (_, u), (_, v) in zip(items, items[1:]))

    def encode(self, x):
        return str(Fraction(x))

    def decode(self, x):
        return Fraction(x)

    def scratch(self) -> "DLOBackend":
        return DLOBackend(self._pool, search_nodes=self.search_nodes)

    def pair_ok(self, L, R, B) -> np.ndarray:
        Bs = set(B)
        ok = np.ones((len(L), len(R)), dtype=bool)
        for i, a in enumerate(L):
            for j, c in enumerate(R):
                if a in Bs or c in Bs:
                    continue
                if a == c or (a < c and not any(a <= b <= c for b in Bs)):
                    ok[i, j] = False
        return ok

    def type_codes(self, elements, B) -> np.ndarray:
        key = np.zeros(len(elements), dtype=np.int64)
        for b in B:
            key = key * 3 + np.array([self._sign(x, b) + 1 for x in elements], dtype=np.int64)
        return key

    def internal_code(self, v1, v2) -> np.ndarray:
        pool = self._pool
        return np.array([self._sign(pool[i], pool[j]) for i, j in zip(v1, v2)], dtype=np.int64)

    def _interval(self, p: TypeDescriptor, i: int):
        lo = hi = None
        for b, s in zip(p.base, p.to_base[i]):
            if s > 0 and (lo is None or b > lo):
                lo = b
            if s < 0 and (hi is None or b < hi):
                hi = b
        return lo, hi

    def _cut_points(self, lo, hi, avoid, prefer_existing, extra=()):
        inside = [x for x in self._pool if (lo is None or x > lo) and (hi is None or x < hi)]
        existing = [x for x in inside if x not in avoid] if prefer_existing else []
        seen = sorted(set(inside) | {x for x in extra if (lo is None or x > lo) and (hi is None or x < hi)})
        marks = [Fraction(x) for x in ([lo] if lo is not None else []) + seen + ([hi] if hi is not None else [])]
        fresh = [(x + y) / 2 for x, y in zip(marks, marks[1:])]
        if lo is None:
            fresh.insert(0, (marks[0] - 1) if marks else Fraction(0))
        if hi is None and marks:
            fresh.append(marks[-1] + 1)
        return existing + [x for x in fresh if x not in self._set and x not in avoid]

    def cut_representatives(self, lo, hi, marks) -> list:
        """One point in each cut of ``marks`` inside (lo, hi), plus the marks themselves.

        Unlike :meth:`_cut_points` this ignores the rest of the pool, so the
        answer stays small however far the pool has grown.
        """
        def inside(x):
            return (lo is None or x > lo) and (hi is None or x < hi)
        pts = sorted({Fraction(m) for m in marks if inside(m)})
        ends = ([Fraction(lo)] if lo is not None else []) + pts + ([Fraction(hi)] if hi is not None else [])
        out = [(x + y) / 2 for x, y in zip(ends, ends[1:])]
        if lo is None:
            out.insert(0, (ends[0] - 1) if ends else Fraction(0))
        if hi is None and ends:
            out.append(ends[-1] + 1)
        return out + pts

    def consistent(self, dom, img, x, y) -> bool:
        return all(self._sign(x, d) == self._sign(y, i) for d, i in zip(dom, img))

    def realizations(self, p: TypeDescriptor, avoid: Iterable = (), limit: Optional[int] = None) -> list:
        avoid = set(avoid) | set(p.base)
        cands = [[p.base[p.algebraic[i]]] if p.algebraic[i] is not None else
                 [x for x in self._pool if x not in avoid and self._fits(p, i, x)] for i in range(p.arity)]
        out = []
        for combo in itertools.product(*cands):
            if len(set(combo)) == len(combo) and self.tp(combo, p.base) == p:
                out.append(tuple(combo))
                if limit is not None and len(out) >= limit:
                    break
        return out

    def _realize_sequential(self, p, constraints, avoid, prefer_existing, extra) -> tuple:
        # Constraint regions are open intervals of a dense order, so one
        # coordinate at a time never paints itself into a corner.
        chosen: list = []
        fresh_ids: list = []
        pairs = {pair: k for k, pair in enumerate(itertools.combinations(range(p.arity), 2))}
        for i in range(p.arity):
            if p.algebraic[i] is not None:
                chosen.append(p.base[p.algebraic[i]])
                continue
            prev = [j for j in range(i) if p.algebraic[j] is None]
            q = TypeDescriptor(p.base + tuple(chosen[j] for j in prev),
                               (p.to_base[i] + tuple(-p.internal[pairs[j, i]] for j in prev),),
                               (), (None,))
            (x,) = self.realize(q, constraints, avoid | set(fresh_ids), prefer_existing, extra=extra)
            chosen.append(x)
            fresh_ids.append(x)
        return tuple(chosen)

    def _fits(self, p, i, x) -> bool:
        return all(self._sign(x, b) == s for b, s in zip(p.base, p.to_base[i]))

    def realize(self, p: TypeDescriptor, constraints: Sequence = (), avoid: Iterable = (),
                prefer_existing: bool = True, side: str = LEFT, extra: Iterable = ()) -> tuple:
        """Search one representative per cut of the pool, existing points first.

        ``extra`` adds cut marks beyond the pool, e.g. preimages under a total map.
        """
        avoid = set(avoid) | set(p.base)
        extra = set(avoid) | {Fraction(x) for x in extra}
        for _, Y, C in constraints:
            extra |= set(Y) | set(C)
        if not self.is_partial_iso({b: b for b in p.base}):
            raise InvalidInputError("base is not a set of rationals")
        if p.arity > 2:
            return self._realize_sequential(p, constraints, avoid, prefer_existing, extra)
        cands = []
        for i in range(p.arity):
            if p.algebraic[i] is not None:
                cands.append([p.base[p.algebraic[i]]])
            else:
                cands.append(self._cut_points(*self._interval(p, i), avoid, prefer_existing, extra))
        pairs = list(itertools.combinations(range(p.arity), 2))
        nodes = 0
        for combo in itertools.product(*cands):
            nodes += 1
            if nodes > self.search_nodes:
                raise BudgetExhausted("rational cut search exhausted")
            if len(set(combo)) < p.arity - sum(x is not None for x in p.algebraic) + \
                    len({c for c, g in zip(combo, p.algebraic) if g is not None}):
                continue
            if any(self._sign(combo[a], combo[b]) != p.internal[k] for k, (a, b) in enumerate(pairs)
                   if p.algebraic[a] is None or p.algebraic[b] is None):
                continue
            ok = True
            for s, Y, C in constraints:
                if s == LEFT and not dlo_ind(combo, Y, C):
                    ok = False
                elif s == RIGHT and not dlo_ind(C, Y, combo):
                    ok = False
            if ok:
                for x in combo:
                    self.add(x)
                return tuple(combo)
        raise LogicalFailure("no rational realises the type under the constraints", data=(p, constraints))


# ---------------------------------------------------------------------- audits

AXIOMS = ("invariance", "monotonicity", "transitivity", "existence", "stationarity", "symmetry")


@dataclass(frozen=True)
class AuditBounds:
    max_set: int = 2          # |A|, |B|, |C|, |D|
    window: int = 10          # sets are drawn from the first ``window`` elements
    max_arity: int = 2        # tuple length for stationarity
    pool_size: int = 12       # partial automorphisms for invariance
    pool_domain: int = 5
    extra_vertices: int = 4   # fresh vertices allowed per existence check
    max_counterexamples: int = 5
    seed: int = 0

    def __post_init__(self):
        if min(self.max_set, self.window, self.max_arity, self.pool_size, self.pool_domain) < 1:
            raise InvalidInputError("audit bounds must be positive")


@dataclass
class AxiomReport:
    axiom: str
    variant: str
    backend: str
    configurations: int = 0
    counterexamples: list = field(default_factory=list)
    violations: int = 0       # total violating configurations (counterexamples keeps the first few)
    budget_failures: int = 0
    logical_failures: int = 0
    expected_failure: bool = False
    note: str = ""

    @property
    def passed(self) -> bool:
        return not self.counterexamples and not self.logical_failures and not self.budget_failures

    @property
    def status(self) -> str:
        if self.passed:
            return "pass"
        if self.expected_failure:
            return "expected-fail"
        if self.counterexamples or self.logical_failures:
            return "fail"
        return "budget"

    def record(self) -> dict:
        return {"axiom": self.axiom, "variant": self.variant, "backend": self.backend,
                "status": self.status, "configurations": self.configurations,
                "violations": self.violations, "counterexamples": self.counterexamples, "budget_failures": self.budget_failures,
                "logical_failures": self.logical_failures, "note": self.note}

    def line(self) -> str:
        extra = f" ({self.note})" if self.note else ""
        return (f"{self.axiom:<13} {self.variant:<13} {self.status:<13} configs={self.configurations}"
                f" counterexamples={len(self.counterexamples)} budget={self.budget_failures}{extra}")


def _popcount(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    y = x.copy()
    while y.any():
        out += y & 1
        y >>= 1
    return out


class _WindowTables:
    """Packed ind tables for all subsets of a window up to a size bound.

    ``F`` lists masks of size ``<= 2 * max_set`` (closed under the unions the
    axioms form); ``S`` indexes the masks of size ``<= max_set``.
    """

    def __init__(self, backend, elems: list, max_set: int):
        self.backend = backend
        self.elems = elems
        w = len(elems)
        if w > 16:
            raise ResourceLimitError("audit window larger than 16 elements")
        allm = np.arange(1 << w, dtype=np.int64)
        pc = _popcount(allm)
        order = np.lexsort((allm, pc))
        F = allm[order][pc[order] <= min(2 * max_set, w)]
        self.F = F
        self.pos = np.full(1 << w, -1, dtype=np.int64)
        self.pos[F] = np.arange(len(F))
        self.S = np.flatnonzero(_popcount(F) <= max_set)
        N = len(self.S)
        SF = F[self.S]
        self.U = self.pos[SF[:, None] | SF[None, :]]
        nb = (N + 7) // 8
        self.P = np.zeros((len(F), len(F), nb), dtype=np.uint8)   # [base, X, bits over C in S]
        self.Q = np.zeros((len(F), len(F), nb), dtype=np.uint8)   # [base, X, bits over A in S]
        self.SS = np.zeros((len(F), N, N), dtype=bool)
        self.diag = np.zeros((len(F), len(F)), dtype=bool)
        for bi, bm in enumerate(F):
            I = self._table(int(bm))
            self.P[bi] = np.packbits(I[:, self.S], axis=1)
            self.Q[bi] = np.packbits(I[self.S, :].T, axis=1)
            self.SS[bi] = I[np.ix_(self.S, self.S)]
            self.diag[bi] = np.diagonal(I)

    def members(self, mask: int) -> list:
        return [e for k, e in enumerate(self.elems) if mask >> k & 1]

    def _table(self, bmask: int) -> np.ndarray:
        base = self.members(bmask)
        bad = ~self.backend.pair_ok(self.elems, self.elems, base)
        w = len(self.elems)
        weights = (1 << np.arange(w, dtype=np.int64))
        badrow = (bad.astype(np.int64) * weights[None, :]).sum(axis=1)
        F = self.F
        rowbad = np.zeros(len(F), dtype=np.int64)
        for i in range(w):
            rowbad |= np.where((F >> i) & 1, badrow[i], 0)
        return ((rowbad | F)[:, None] & F[None, :] & ~bmask) == 0


def _sets(tabs: _WindowTables, backend, **idx) -> dict:
    return {k: [backend.encode(x) for x in tabs.members(int(tabs.F[tabs.S[v]]))] for k, v in idx.items()}


def _sweep(tabs: _WindowTables, backend, axiom: str, variant: str, report: AxiomReport, cap: int):
    S, U, P, Q, SS = tabs.S, tabs.U, tabs.P, tabs.Q, tabs.SS
    N = len(S)
    Sv = S  # positions of S inside F
    for bi in range(N):
        b = S[bi]
        if axiom == "transitivity" and variant == "left":
            # A⫝_B C, A⫝_{BC} D ⇒ A⫝_B D ; axes (c, a, bits over d)
            p1 = SS[b].T
            prem = P[U[bi]][:, Sv, :]
            concl = P[b][Sv]
            viol = prem & ~concl[None] & np.where(p1, 255, 0).astype(np.uint8)[:, :, None]
            names = ("C", "A", "D")
        elif axiom == "transitivity":
            # A⫝_B C, D⫝_{AB} C ⇒ D⫝_B C ; axes (a, d, bits over c)
            p1 = P[b][Sv]
            prem = P[U[bi]][:, Sv, :]
            concl = P[b][Sv]
            viol = p1[:, None, :] & prem & ~concl[None]
            names = ("A", "D", "C")
        elif axiom == "monotonicity" and variant == "left":
            # A⫝_B CD ⇒ A⫝_B C, A⫝_{BC} D ; axes (c, d, bits over a)
            prem = Q[b][U]
            c1 = Q[b][Sv]
            c2 = Q[U[bi]][:, Sv, :]
            viol = prem & ~(c1[:, None, :] & c2)
            names = ("C", "D", "A")
        elif axiom == "monotonicity":
            # AD⫝_B C ⇒ A⫝_B C, D⫝_{AB} C  (or D⫝_{AB} D) ; axes (a, d, bits over c)
            prem = P[b][U]
            c1 = P[b][Sv]
            if variant == "right":
                c2 = P[U[bi]][:, Sv, :]
            else:
                lit = tabs.diag[U[bi]][:, Sv]
                c2 = np.where(lit, 255, 0).astype(np.uint8)[:, :, None]
            viol = prem & ~(c1[:, None, :] & c2)
            names = ("A", "D", "C")
        elif axiom == "symmetry":
            I = SS[b]
            viol = np.packbits(I & ~I.T, axis=1)[:, None, :]
            names = ("A", None, "C")
        else:
            raise InvalidInputError(f"no window sweep for {axiom}/{variant}")
        report.configurations += N ** 3 if axiom != "symmetry" else N ** 2
        if not viol.any():
            continue
        bits = np.unpackbits(viol, axis=-1)[..., :N]
        report.violations += int(bits.sum())
        for i, j, k in np.argwhere(bits)[: max(0, cap - len(report.counterexamples))]:
            idx = {"B": bi, names[0]: i, names[2]: k}
            if names[1]:
                idx[names[1]] = j
            report.counterexamples.append(_sets(tabs, backend, **idx))


def _tuple_tables(backend, E: list, W: list, base: list, side: str):
    """Per element of E: bitmask over W of pairs that break ind on ``side``."""
    if side == LEFT:
        bad = ~backend.pair_ok(E, W, base)
    else:
        bad = ~backend.pair_ok(W, E, base).T
    weights = 1 << np.arange(len(W), dtype=np.int64)
    return (bad.astype(np.int64) * weights[None, :]).sum(axis=1)


def _stationarity(backend, tabs: _WindowTables, E: list, variant: str, bounds: AuditBounds, report: AxiomReport):
    S, F = tabs.S, tabs.F
    W = tabs.elems
    widx = {e: k for k, e in enumerate(W)}
    wbit = np.array([(1 << widx[e]) if e in widx else 0 for e in E], dtype=np.int64)
    nE = len(E)
    eidx = np.arange(nE)
    if bounds.max_arity >= 2:
        v1, v2 = np.where(~np.eye(nE, dtype=bool))
        internal = backend.internal_code(v1, v2) if backend.name == "forb-limit" else \
            np.array([backend._sign(E[i], E[j]) + 1 for i, j in zip(v1, v2)], dtype=np.int64)
    side = LEFT if variant == "left" else RIGHT
    for bi in S:
        bm = int(F[bi])
        base = tabs.members(bm)
        badv = _tuple_tables(backend, E, W, base, side)
        inB = (wbit & bm) != 0
        tB = backend.type_codes(E, base)
        for ci in S:
            cm = int(F[ci]) & ~bm
            if not cm:
                continue
            C = tabs.members(cm)
            ok1 = ((badv & cm) == 0) & ((wbit & cm) == 0) & ~inB
            tBC = backend.type_codes(E, base + C)
            groups = [(tB[ok1], tBC[ok1], eidx[ok1], eidx[ok1])]
            report.configurations += int(ok1.sum())
            if bounds.max_arity >= 2:
                ok2 = ok1[v1] & ok1[v2]
                K = int(tBC.max()) + 1
                k1 = (tB[v1] * K + tB[v2]) * 4 + internal
                k2 = (tBC[v1] * K + tBC[v2]) * 4 + internal
                groups.append((k1[ok2], k2[ok2], v1[ok2], v2[ok2]))
                report.configurations += int(ok2.sum())
            for kB, kBC, x1, x2 in groups:
                if len(kB) < 2:
                    continue
                first = {}
                for t in range(len(kB)):
                    prev = first.setdefault(int(kB[t]), t)
                    if kBC[prev] == kBC[t]:
                        continue
                    report.violations += 1
                    if len(report.counterexamples) < bounds.max_counterexamples:
                        single = x1[t] == x2[t]
                        a = [E[x1[prev]]] if single else [E[x1[prev]], E[x2[prev]]]
                        a2 = [E[x1[t]]] if single else [E[x1[t]], E[x2[t]]]
                        report.counterexamples.append({
                            "a": [backend.encode(x) for x in a], "a2": [backend.encode(x) for x in a2],
                            "B": [backend.encode(x) for x in base], "C": [backend.encode(x) for x in C]})


def _existence(backend, tabs: _WindowTables, E: list, variant: str, bounds: AuditBounds, report: AxiomReport):
    S, F = tabs.S, tabs.F
    W = tabs.elems
    widx = {e: k for k, e in enumerate(W)}
    wbit = np.array([(1 << widx[e]) if e in widx else 0 for e in E], dtype=np.int64)
    side = LEFT if variant == "left" else RIGHT
    for bi in S:
        bm = int(F[bi])
        base = tabs.members(bm)
        badv = _tuple_tables(backend, E, W, base, side)
        inB = (wbit & bm) != 0
        tB = backend.type_codes(E, base)
        for p in backend.one_point_types(base):
            key = backend.type_codes([_representative(backend, p)], base)[0] if backend.name == "dlo" else \
                _forb_key(backend, p)
            real = (tB == key) & ~inB
            missing = []
            for ci in S:
                cm = int(F[ci])
                report.configurations += 1
                ok = real & ((badv & cm & ~bm) == 0) & ((wbit & cm & ~bm) == 0)
                if not ok.any():
                    missing.append(tabs.members(cm))
            if not missing:
                continue
            trial = backend.scratch()
            if hasattr(trial, "tower"):
                trial.tower.max_vertices = trial.tower.n + bounds.extra_vertices
            cons = [(side, tuple(base), tuple(C)) for C in missing]
            try:
                a = trial.realize(p, cons, prefer_existing=False, side=side)
            except BudgetExhausted:
                report.budget_failures += len(missing)
                continue
            except LogicalFailure:
                report.logical_failures += len(missing)
                report.violations += len(missing)
                if len(report.counterexamples) < bounds.max_counterexamples:
                    report.counterexamples.append({"B": [backend.encode(x) for x in base],
                                                   "type": [list(r) for r in p.to_base],
                                                   "C": [backend.encode(x) for x in missing[0]]})
                continue
            if trial.tp(a, base) != p or not holds(trial, a, cons):
                report.logical_failures += len(missing)


def _forb_key(backend, p: TypeDescriptor) -> int:
    m = backend.tower.language.n_colors + 1
    key = 0
    for c in p.to_base[0]:
        key = key * m + c + 1
    return key


def _representative(backend, p: TypeDescriptor):
    lo, hi = backend._interval(p, 0)
    if lo is None and hi is None:
        return Fraction(0)
    if lo is None:
        return hi - 1
    if hi is None:
        return lo + 1
    return (lo + hi) / 2


def partial_automorphism_pool(backend, domain_from: list, count: int, size: int, seed: int = 0) -> list[dict]:
    """Random partial isomorphisms with domain inside ``domain_from``, built one point at a time."""
    rng = random.Random(seed)
    U = backend.universe()
    pool = []
    for _ in range(count):
        dom = rng.sample(domain_from, min(size, len(domain_from)))
        g: dict = {}
        for x in dom:
            q = transport(backend.tp((x,), tuple(g)), g)
            taken = set(g.values())
            cands = [y for y in U if y not in taken and backend.tp((y,), q.base) == q]
            if not cands:
                break
            g[x] = rng.choice(cands)
        pool.append(g)
    return pool


def _invariance(backend, tabs: _WindowTables, bounds: AuditBounds, report: AxiomReport):
    W = tabs.elems
    pool = partial_automorphism_pool(backend, W, bounds.pool_size, bounds.pool_domain, bounds.seed)
    if backend.name == "dlo":
        # order-preserving maps of the window into itself
        rng = random.Random(bounds.seed + 1)
        for _ in range(bounds.pool_size):
            k = rng.randint(1, len(W))
            dom, img = sorted(rng.sample(W, k)), sorted(rng.sample(W, k))
            pool.append(dict(zip(dom, img)))
    for g in pool:
        if not backend.is_partial_iso(g):
            raise LogicalFailure("pool map is not a partial isomorphism", data=g)
        dom = list(g)
        widx = {e: k for k, e in enumerate(W)}
        if all(x in widx for x in dom) and all(y in widx for y in g.values()):
            dm = sum(1 << widx[x] for x in dom)
            sub = [i for i, s in enumerate(tabs.S) if int(tabs.F[s]) & ~dm == 0]
            img = []
            for i in sub:
                m = int(tabs.F[tabs.S[i]])
                im = sum(1 << widx[g[W[k]]] for k in range(len(W)) if m >> k & 1)
                img.append(int(np.flatnonzero(tabs.S == tabs.pos[im])[0]))
            sub, img = np.array(sub), np.array(img)
            for bi, bj in zip(sub, img):
                lhs = tabs.SS[tabs.S[bi]][np.ix_(sub, sub)]
                rhs = tabs.SS[tabs.S[bj]][np.ix_(img, img)]
                report.configurations += lhs.size
                report.violations += int((lhs != rhs).sum())
                if (lhs != rhs).any() and len(report.counterexamples) < bounds.max_counterexamples:
                    i, j = np.argwhere(lhs != rhs)[0]
                    report.counterexamples.append({
                        "map": [[backend.encode(x), backend.encode(y)] for x, y in g.items()],
                        **_sets(tabs, backend, A=sub[i], B=bi, C=sub[j])})
            continue
        subsets = [s for k in range(bounds.max_set + 1) for s in itertools.combinations(dom, k)]
        for A in subsets:
            for B in subsets:
                for C in subsets:
                    report.configurations += 1
                    l = backend.ind(A, B, C)
                    r = backend.ind([g[x] for x in A], [g[x] for x in B], [g[x] for x in C])
                    report.violations += l != r
                    if l != r and len(report.counterexamples) < bounds.max_counterexamples:
                        report.counterexamples.append({
                            "map": [[backend.encode(x), backend.encode(y)] for x, y in g.items()],
                            "A": [backend.encode(x) for x in A], "B": [backend.encode(x) for x in B],
                            "C": [backend.encode(x) for x in C]})


_TABLE_CACHE: dict = {}


def window_tables(backend, bounds: AuditBounds) -> _WindowTables:
    W = backend.window(bounds.window)
    key = (id(backend), tuple(W), bounds.max_set, len(backend.universe()))
    hit = _TABLE_CACHE.get(key)
    if hit is None or hit[0] is not backend:
        _TABLE_CACHE.clear()
        hit = (backend, _WindowTables(backend, W, bounds.max_set))
        _TABLE_CACHE[key] = hit
    return hit[1]


def audit_axiom(backend, axiom: str, variant: str = "left", bounds: Optional[AuditBounds] = None) -> AxiomReport:
    """Exhaustive sweep of one axiom variant; counterexamples are replayable records.

    ``variant`` is ``left`` or ``right``; monotonicity also accepts
    ``right-literal`` for the displayed conclusion ``D ⫝_{AB} D``.
    """
    bounds = bounds or AuditBounds()
    if axiom not in AXIOMS:
        raise InvalidInputError(f"unknown axiom {axiom!r}")
    if variant not in ("left", "right", "right-literal") or (variant == "right-literal" and axiom != "monotonicity"):
        raise InvalidInputError(f"unknown variant {variant!r} for {axiom}")
    report = AxiomReport(axiom, variant, backend.name)
    tabs = window_tables(backend, bounds)
    E = backend.universe()
    if axiom == "invariance":
        _invariance(backend, tabs, bounds, report)
    elif axiom == "stationarity":
        _stationarity(backend, tabs, E, variant, bounds, report)
    elif axiom == "existence":
        _existence(backend, tabs, E, variant, bounds, report)
    else:
        _sweep(tabs, backend, axiom, variant, report, bounds.max_counterexamples)
    if axiom == "symmetry":
        report.expected_failure = not getattr(backend, "symmetric", False)
        report.note = "weak relation: symmetry not expected" if report.expected_failure else "symmetric backend"
    if variant == "right-literal":
        report.expected_failure = True
        report.note = "literal reading D ⫝_{AB} D"
    return report


def audit_all(backend, bounds: Optional[AuditBounds] = None) -> list[AxiomReport]:
    out = []
    for axiom in AXIOMS:
        variants = ["left"] if axiom in ("invariance", "symmetry") else ["left", "right"]
        if axiom == "monotonicity":
            variants.append("right-literal")
        for v in variants:
            out.append(audit_axiom(backend, axiom, v, bounds))
    return out


def monotonicity_decompose(backend, A, B, C, D) -> list[tuple[str, bool]]:
    """Premises and conclusions of both monotonicity lines, with both readings of the last."""
    A, B, C, D = set(A), set(B), set(C), set(D)
    ind = backend.ind
    return [("A ⫝_B CD", ind(A, B, C | D)),
            ("A ⫝_B C", ind(A, B, C)),
            ("A ⫝_BC D", ind(A, B | C, D)),
            ("AD ⫝_B C", ind(A | D, B, C)),
            ("A ⫝_B C", ind(A, B, C)),
            ("D ⫝_AB C", ind(D, A | B, C)),
            ("D ⫝_AB D", ind(D, A | B, D))]


def replay(backend, axiom: str, variant: str, rec: dict) -> bool:
    """True iff the recorded configuration is a genuine violation of the axiom variant."""
    dec = {k: [backend.decode(x) for x in v] for k, v in rec.items() if k in "ABCD" or k in ("a", "a2")}
    A, B, C, D = (set(dec.get(k, ())) for k in "ABCD")
    ind = backend.ind
    if axiom == "symmetry":
        return ind(A, B, C) and not ind(C, B, A)
    if axiom == "transitivity":
        if variant == "left":
            return ind(A, B, C) and ind(A, B | C, D) and not ind(A, B, D)
        return ind(A, B, C) and ind(D, A | B, C) and not ind(D, B, C)
    if axiom == "monotonicity":
        if variant == "left":
            return ind(A, B, C | D) and not (ind(A, B, C) and ind(A, B | C, D))
        last = ind(D, A | B, C) if variant == "right" else ind(D, A | B, D)
        return ind(A | D, B, C) and not (ind(A, B, C) and last)
    if axiom == "invariance":
        g = {backend.decode(x): backend.decode(y) for x, y in rec["map"]}
        return ind(A, B, C) != ind({g[x] for x in A}, {g[x] for x in B}, {g[x] for x in C})
    if axiom == "stationarity":
        a, a2, Bl, Cl = dec["a"], dec["a2"], dec["B"], dec["C"]
        if variant == "left":
            both = ind(a, Bl, Cl) and ind(a2, Bl, Cl)
        else:
            both = ind(Cl, Bl, a) and ind(Cl, Bl, a2)
        return (backend.tp(a, Bl) == backend.tp(a2, Bl) and both
                and backend.tp(a, Bl + Cl).shape() != backend.tp(a2, Bl + Cl).shape())
    if axiom == "existence":
        Bl, Cl = dec["B"], dec["C"]
        p = TypeDescriptor(tuple(Bl), tuple(tuple(r) for r in rec["type"]), (), (None,))
        try:
            backend.scratch().realize(p, [(LEFT if variant == "left" else RIGHT, tuple(Bl), tuple(Cl))],
                                      prefer_existing=False, side=LEFT if variant == "left" else RIGHT)
        except LogicalFailure:
            return True
        return False
    raise InvalidInputError(f"unknown axiom {axiom!r}")
