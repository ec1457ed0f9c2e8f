"""Finite approximations of Fraïssé limits of Forb_c(S) classes.

A :class:`Tower` is a growable complete structure on vertices ``0..n-1`` whose
colours live in a numpy matrix; every realisation appends fresh vertices
coloured by the prioritised completion, so each stage stays in Forb_c(S).
"""

from __future__ import annotations

import itertools
import logging
import threading
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .amalgamation import PriorityOrder
from .core import CompleteStructure, Language, TriangleSet, embeds_forbidden
from .errors import BudgetExhausted, InvalidInputError, LogicalFailure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SaturationBudget:
    max_vertices: int = 30
    max_base: int = 1

    def __post_init__(self):
        if self.max_vertices < 1 or self.max_base < 0:
            raise InvalidInputError("saturation budget must be positive")


class Tower:
    """Stages ``M_0 ⊆ M_1 ⊆ ...`` sharing vertex ids; single writer, copyable snapshots."""

    def __init__(self, triangles: TriangleSet, priority: PriorityOrder, *, max_vertices: int = 10_000):
        if triangles.language != priority.language:
            raise InvalidInputError("triangle set and priority use different languages")
        self.language: Language = triangles.language
        self.triangles = triangles
        self.priority = priority
        self.max_vertices = max_vertices
        self._col = np.full((16, 16), -1, dtype=np.int8)
        self.n = 0
        self.stage_bounds: list[int] = []
        self.status = "empty"
        # vertices below this index have every extension the last full round asked for
        self.saturated_upto = 0
        self._lock = threading.Lock()
        self._dual = np.array(self.language.dual_codes, dtype=np.int8)

    # ------------------------------------------------------------------ access

    def __len__(self):
        return self.n

    def universe(self) -> range:
        return range(self.n)

    @property
    def colors(self) -> np.ndarray:
        """Read-only view of the ``n x n`` colour matrix (diagonal -1)."""
        v = self._col[: self.n, : self.n]
        v.flags.writeable = False
        return v

    def code(self, x: int, y: int) -> int:
        if not (0 <= x < self.n and 0 <= y < self.n) or x == y:
            raise InvalidInputError(f"no colour on ({x}, {y})")
        return int(self._col[x, y])

    def stage(self, index: int = -1) -> CompleteStructure:
        size = self.stage_bounds[index] if self.stage_bounds else self.n
        return self.snapshot(size)

    def snapshot(self, size: Optional[int] = None) -> CompleteStructure:
        size = self.n if size is None else size
        mat = self._col[:size, :size].tolist()
        return CompleteStructure(self.language, range(size), mat, check=False)

    def induced(self, vertices: Iterable[int]) -> CompleteStructure:
        vs = list(vertices)
        mat = self._col[np.ix_(vs, vs)].tolist() if vs else []
        return CompleteStructure(self.language, vs, mat, check=False)

    def copy(self) -> "Tower":
        t = Tower(self.triangles, self.priority, max_vertices=self.max_vertices)
        t._col = self._col.copy()
        t.n = self.n
        t.stage_bounds = list(self.stage_bounds)
        t.status = self.status
        t.saturated_upto = self.saturated_upto
        return t

    # ------------------------------------------------------------------ writing

    def _grow(self, extra: int):
        need = self.n + extra
        cap = self._col.shape[0]
        if need <= cap:
            return
        while cap < need:
            cap *= 2
        new = np.full((cap, cap), -1, dtype=np.int8)
        new[: self.n, : self.n] = self._col[: self.n, : self.n]
        self._col = new

    def forbidden_with(self, rows: np.ndarray) -> Optional[tuple]:
        """First forbidden triangle created by appending ``rows`` (new x existing+new)."""
        if not self.triangles.patterns:
            return None
        tab = self.triangles.table
        k, n = rows.shape[0], self.n
        m = n + k
        full = np.empty((m, m), dtype=np.int8)
        full[:n, :n] = self._col[:n, :n]
        full[n:, :] = rows[:, :m]
        full[:n, n:] = self._dual[rows[:, :n]].T
        np.fill_diagonal(full, -1)
        for i in range(k):
            x = n + i
            if x < 2:
                continue
            r = full[x, :x]
            bad = tab[r[:, None], r[None, :], full[:x, :x]]
            bad = np.triu(bad, 1)
            if bad.any():
                u, v = np.argwhere(bad)[0]
                return (x, int(u), int(v))
        return None

    def append(self, rows: np.ndarray, *, check: bool = True) -> tuple[int, ...]:
        """Append ``k`` vertices; ``rows[i, v]`` = r(new_i, v) for v < n + k."""
        rows = np.asarray(rows, dtype=np.int8)
        k = rows.shape[0]
        with self._lock:
            if self.n + k > self.max_vertices:
                raise BudgetExhausted(f"tower vertex cap {self.max_vertices} reached")
            if check:
                bad = self.forbidden_with(rows)
                if bad is not None:
                    raise LogicalFailure(f"appending would embed a forbidden triangle on {bad}", data=bad)
            self._grow(k)
            n = self.n
            for i in range(k):
                self._col[n + i, : n + k] = rows[i, : n + k]
                self._col[: n + k, n + i] = self._dual[rows[i, : n + k]]
                self._col[n + i, n + i] = -1
            self.n += k
        return tuple(range(n, n + k))

    def truncate(self, n: int):
        """Drop vertices ``>= n`` (used to roll back a rejected realisation)."""
        with self._lock:
            if not 0 <= n <= self.n:
                raise InvalidInputError(f"cannot truncate {self.n} vertices to {n}")
            self._col[n:, :] = -1
            self._col[:, n:] = -1
            self.n = n
            self.stage_bounds = [b for b in self.stage_bounds if b <= n]
            self.saturated_upto = min(self.saturated_upto, n)

    def mark_stage(self):
        if not self.stage_bounds or self.stage_bounds[-1] != self.n:
            self.stage_bounds.append(self.n)

    @classmethod
    def from_structure(cls, S: CompleteStructure, triangles: TriangleSet, priority: PriorityOrder,
                       **kw) -> "Tower":
        if list(S.vertices) != list(range(len(S))):
            S = S.relabel({v: i for i, v in enumerate(S.vertices)})
        bad = embeds_forbidden(S, triangles)
        if bad is not None:
            raise InvalidInputError(f"seed structure embeds forbidden {bad.pattern}")
        t = cls(triangles, priority, **kw)
        t._grow(len(S))
        if len(S):
            t._col[: len(S), : len(S)] = np.array(S.matrix, dtype=np.int8)
        t.n = len(S)
        t.mark_stage()
        return t

    # ------------------------------------------------------------------ ⊗ colouring

    def amalgam_colors(self, to_base: Sequence[int], base: Sequence[int], side: str = "left") -> np.ndarray:
        """Colour ``r(x, v)`` for every vertex v of a new point x with colours ``to_base`` to ``base``.

        ``side="left"`` realises ``x ⫝_B M``; ``side="right"`` realises ``M ⫝_B x``.
        Entries for base vertices carry the prescribed colours; -1 marks no admissible colour.
        """
        tab = self.triangles.table
        n = self.n
        base = list(base)
        out = np.full(n, -1, dtype=np.int8)
        chosen = np.zeros(n, dtype=bool)
        xb = np.asarray(to_base, dtype=np.int8)
        for col in self.priority.codes:
            blocked = np.zeros(n, dtype=bool)
            for k, b in enumerate(base):
                if side == "left":
                    blocked |= tab[xb[k], col, self._col[b, :n]]
                else:
                    # r(v, x) = col is blocked by (r(v,b), col, r(b,x))
                    blocked |= tab[self._col[:n, b], col, self._dual[xb[k]]]
            take = ~blocked & ~chosen
            out[take] = col if side == "left" else self._dual[col]
            chosen |= take
        for k, b in enumerate(base):
            out[b] = xb[k]
        return out


# ---------------------------------------------------------------------- types


@dataclass(frozen=True)
class TypeDescriptor:
    """Quantifier-free type of a tuple over an ordered base.

    ``to_base[i][k]`` is r(a_i, base_k); ``internal[(i, j)]`` is r(a_i, a_j)
    for i < j; ``algebraic[i]`` is the base index of a_i when a_i lies in the base.
    """

    base: tuple
    to_base: tuple
    internal: tuple
    algebraic: tuple

    @property
    def arity(self) -> int:
        return len(self.to_base)

    @property
    def is_algebraic(self) -> bool:
        return any(x is not None for x in self.algebraic)

    def shape(self) -> tuple:
        """Everything but the base ids; equal shapes over corresponding bases mean transported types."""
        return (self.to_base, self.internal, self.algebraic)

    def pattern(self, M) -> CompleteStructure:
        """Structure on base ∪ {x_1..x_n}; new points get ids after the largest base id.

        Base edges come from the ambient ``M``; algebraic positions reuse their base vertex.
        """
        start = (max(self.base) + 1) if self.base else 0
        xs = [self.base[g] if g is not None else start + i for i, g in enumerate(self.algebraic)]
        verts = list(self.base) + [x for x, g in zip(xs, self.algebraic) if g is None]
        edges = {}
        for i, j in itertools.combinations(range(len(self.base)), 2):
            edges[self.base[i], self.base[j]] = M.code(self.base[i], self.base[j])
        for i in range(self.arity):
            if self.algebraic[i] is None:
                for k, b in enumerate(self.base):
                    edges[xs[i], b] = self.to_base[i][k]
        for (i, j), c in zip(itertools.combinations(range(self.arity), 2), self.internal):
            if self.algebraic[i] is None and self.algebraic[j] is None and xs[i] != xs[j]:
                edges[xs[i], xs[j]] = c
        return CompleteStructure.from_edges(M.language, verts, edges)

    def designated(self) -> tuple:
        """Vertex ids of the tuple inside :meth:`pattern`."""
        start = (max(self.base) + 1) if self.base else 0
        return tuple(self.base[g] if g is not None else start + i for i, g in enumerate(self.algebraic))


def tp(M, a: Sequence[int], B: Sequence[int]) -> TypeDescriptor:
    """Type of tuple ``a`` over ``B`` in ``M`` (a Tower or CompleteStructure)."""
    a, B = tuple(a), tuple(B)
    if isinstance(M, Tower):
        return _tower_tp(M, a, B)
    universe = set(M.vertices)
    for v in a + B:
        if v not in universe:
            raise InvalidInputError(f"vertex {v} not in structure")
    if len(set(B)) != len(B):
        raise InvalidInputError("base has repeated vertices")
    pos = {b: k for k, b in enumerate(B)}
    to_base = tuple(tuple(-1 if x == b else M.code(x, b) for b in B) for x in a)
    internal = tuple(-1 if x == y else M.code(x, y) for x, y in itertools.combinations(a, 2))
    algebraic = tuple(pos.get(x) for x in a)
    return TypeDescriptor(B, to_base, internal, algebraic)


def _tower_tp(M: Tower, a: tuple, B: tuple) -> TypeDescriptor:
    for v in a + B:
        if not (isinstance(v, (int, np.integer)) and 0 <= v < M.n):
            raise InvalidInputError(f"vertex {v} not in structure")
    if len(set(B)) != len(B):
        raise InvalidInputError("base has repeated vertices")
    col = M.colors
    ai, bi = list(a), list(B)
    to_base = col[np.ix_(ai, bi)].tolist() if bi else [[] for _ in ai]
    pos = {b: k for k, b in enumerate(B)}
    inner = col[np.ix_(ai, ai)] if ai else None
    internal = tuple(int(inner[i, j]) for i, j in itertools.combinations(range(len(ai)), 2))
    return TypeDescriptor(B, tuple(tuple(r) for r in to_base), internal, tuple(pos.get(x) for x in a))


def same_type(M, a, a2, B) -> bool:
    return tp(M, a, B) == tp(M, a2, B)


def one_point_extensions(M, B: Sequence[int], T: TriangleSet) -> list[TypeDescriptor]:
    """Every non-algebraic 1-type over ``B`` consistent with Forb_c(T)."""
    B = tuple(B)
    lang = T.language
    tab = T.table
    out = []
    for cols in itertools.product(range(lang.n_colors), repeat=len(B)):
        if any(tab[cols[i], cols[j], M.code(B[i], B[j])] for i in range(len(B)) for j in range(i + 1, len(B))):
            continue
        out.append(TypeDescriptor(B, (cols,), (), (None,)))
    return out


def realizes(M, a: Sequence[int], p: TypeDescriptor) -> bool:
    return tp(M, a, p.base) == p


# ---------------------------------------------------------------------- realisation


def _realize(tower: Tower, p: TypeDescriptor, side: str) -> tuple[int, ...]:
    if p.is_algebraic:
        raise InvalidInputError("algebraic types are not realised; reduce to the non-algebraic part")
    for b in p.base:
        if not 0 <= b < tower.n:
            raise InvalidInputError(f"base vertex {b} not in tower")
    k = p.arity
    n = tower.n
    rows = np.full((k, n + k), -1, dtype=np.int8)
    for i in range(k):
        cols = tower.amalgam_colors(p.to_base[i], p.base, side)
        if (cols < 0).any():
            v = int(np.flatnonzero(cols < 0)[0])
            raise LogicalFailure(f"no admissible colour between new point and {v}: class not prioritised")
        rows[i, :n] = cols
    dual = tower.language.dual_codes
    for (i, j), c in zip(itertools.combinations(range(k), 2), p.internal):
        rows[i, n + j] = c
        rows[j, n + i] = dual[c]
    return tower.append(rows)


def realize_left(tower: Tower, p: TypeDescriptor, C: Iterable[int] = ()) -> tuple[tuple[int, ...], Tower]:
    """Fresh realisation ``a`` of ``p`` with ``a ⫝_B C`` for every C in the stage."""
    a = _realize(tower, p, "left")
    C = tuple(C)
    if C:
        from .swir import forb_ind
        if not forb_ind(tower, a, p.base, C):
            raise LogicalFailure("realised tuple is not left-independent", data=(a, C))
    return a, tower


def realize_right(tower: Tower, p: TypeDescriptor, C: Iterable[int] = ()) -> tuple[tuple[int, ...], Tower]:
    """Fresh realisation ``a`` of ``p`` with ``C ⫝_B a`` for every C in the stage."""
    a = _realize(tower, p, "right")
    C = tuple(C)
    if C:
        from .swir import forb_ind
        if not forb_ind(tower, C, p.base, a):
            raise LogicalFailure("realised tuple is not right-independent", data=(a, C))
    return a, tower


def _realized_keys(tower: Tower, B: tuple) -> set:
    if not B:
        return {()} if tower.n else set()
    col = tower.colors
    mask = np.ones(tower.n, dtype=bool)
    mask[list(B)] = False
    rows = col[np.ix_(np.flatnonzero(mask), list(B))]
    return {tuple(int(x) for x in r) for r in rows}


def saturate(tower: Tower, budget: SaturationBudget) -> Tower:
    """Realise every missing one-point extension over bases of size ``<= max_base``.

    Works in rounds; each round visits the bases drawn from the vertices present
    at its start, by base size then lexicographically, and closes a stage.
    ``tower.status`` ends as ``"fixpoint"`` or ``"budget"``; vertices below
    ``tower.saturated_upto`` have all their extensions realised.
    """
    if tower.n == 0:
        tower.append(np.zeros((1, 1), dtype=np.int8) - 1, check=False)
        tower.mark_stage()
    while True:
        n0 = tower.n
        added = 0
        for size in range(budget.max_base + 1):
            for B in itertools.combinations(range(n0), size):
                have = _realized_keys(tower, B)
                for p in one_point_extensions(tower, B, tower.triangles):
                    if p.to_base[0] in have:
                        continue
                    if tower.n >= budget.max_vertices:
                        tower.mark_stage()
                        tower.status = "budget"
                        return tower
                    (v,), _ = realize_left(tower, p)
                    have.add(p.to_base[0])
                    added += 1
        tower.mark_stage()
        tower.saturated_upto = n0
        if not added:
            tower.status = "fixpoint"
            return tower


def build_tower(triangles: TriangleSet, priority: PriorityOrder, budget: SaturationBudget,
                seed: Optional[CompleteStructure] = None) -> Tower:
    tower = (Tower.from_structure(seed, triangles, priority) if seed is not None
             else Tower(triangles, priority))
    return saturate(tower, budget)


# ---------------------------------------------------------------------- homogeneity audit


@dataclass
class HomogeneityReport:
    size: int
    maps_checked: int = 0
    failures: list = field(default_factory=list)  # (domain, image, x) triples

    @property
    def ok(self) -> bool:
        return not self.failures


def _partial_isos(M, size: int, vertices: Sequence[int]):
    vs = list(vertices)
    for k in range(size + 1):
        for U in itertools.combinations(vs, k):
            for V in itertools.permutations(vs, k):
                if all(M.code(U[i], U[j]) == M.code(V[i], V[j])
                       for i in range(k) for j in range(k) if i != j):
                    yield U, V


def homogeneity_audit(M, s: int = 1, extension_budget: int = 0,
                      within: Optional[Iterable[int]] = None) -> HomogeneityReport:
    """Partial isomorphisms of size ``<= s`` that have a one-point extension missing in ``M``.

    Maps range over ``within`` (default: all of ``M``); the new point x ranges
    over all of ``M``. With ``extension_budget > 0`` and a Tower, a missing
    image is realised on a copy (up to that many extra vertices) before it
    counts as a failure.
    """
    is_tower = isinstance(M, Tower)
    verts = list(M.universe()) if is_tower else list(M.vertices)
    dom = verts if within is None else sorted(set(within))
    col = (M.colors if is_tower else None)
    report = HomogeneityReport(s)
    scratch = M.copy() if (is_tower and extension_budget > 0) else None
    if scratch is not None:
        scratch.max_vertices = max(scratch.max_vertices, M.n + extension_budget)
    extra = 0
    for U, V in _partial_isos(M, s, dom):
        report.maps_checked += 1
        if is_tower:
            keys = {tuple(int(c) for c in col[y, list(V)]) for y in verts if y not in V} if V else {()}
        else:
            keys = {tuple(M.code(y, v) for v in V) for y in verts if y not in V}
        for x in verts:
            if x in U:
                continue
            key = tuple(M.code(x, u) for u in U)
            if key in keys:
                continue
            if scratch is not None and extra < extension_budget:
                p = TypeDescriptor(tuple(V), (key,), (), (None,))
                realize_left(scratch, p)
                extra += 1
                keys.add(key)
                continue
            report.failures.append((U, V, x))
    return report


# ---------------------------------------------------------------------- dump format


def dump_tower(tower: Tower) -> str:
    lines = ["# homogen tower v1",
             f"language {tower.language.spec_string()}",
             f"priority {tower.priority}",
             f"triangles {tower.triangles.name or 'inline'}"]
    lines += [f"pattern {p}" for p in tower.triangles.sorted_patterns()]
    lines.append("structure")
    lines.append(tower.snapshot().to_literal().rstrip("\n"))
    lines.append("end")
    lines.append("stages " + " ".join(str(b) for b in tower.stage_bounds))
    return "\n".join(lines) + "\n"


def load_tower(text: str) -> Tower:
    lang = prio = name = None
    patterns: list[str] = []
    struct_lines: list[str] = []
    stages: list[int] = []
    in_struct = False
    for raw in text.splitlines():
        line = raw.strip()
        if in_struct:
            if line == "end":
                in_struct = False
            else:
                struct_lines.append(line)
            continue
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "language":
            lang = Language.parse(rest)
        elif key == "priority":
            prio = rest
        elif key == "triangles":
            name = None if rest == "inline" else rest
        elif key == "pattern":
            patterns.append(rest)
        elif key == "structure":
            in_struct = True
        elif key == "stages":
            stages = [int(x) for x in rest.split()]
        else:
            raise InvalidInputError(f"unknown tower dump line {raw!r}")
    if lang is None or prio is None:
        raise InvalidInputError("tower dump lacks language or priority")
    T = TriangleSet(lang, patterns, name=name)
    pr = PriorityOrder.parse(lang, prio)
    S = CompleteStructure.from_literal(lang, "\n".join(struct_lines))
    tower = Tower.from_structure(S, T, pr)
    tower.stage_bounds = stages
    return tower
