"""Complete edge-coloured directed graphs and forbidden triangle patterns.

Colours are held internally as small integer codes (the index of an oriented
symbol in its :class:`Language`); ``OrientedSymbol`` is the public face.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InvalidInputError, ResourceLimitError

FORWARD, BACKWARD, SYMMETRIC = "+", "-", ""

CANONICAL_BOUND = 10
ENUMERATION_BOUND = 7


@dataclass(frozen=True, order=True)
class OrientedSymbol:
    base: str
    orientation: str = SYMMETRIC

    def __post_init__(self):
        if self.orientation not in (FORWARD, BACKWARD, SYMMETRIC):
            raise InvalidInputError(f"bad orientation {self.orientation!r}")
        if not self.base or any(ch in self.base for ch in "+- \t"):
            raise InvalidInputError(f"bad symbol name {self.base!r}")

    def dual(self) -> "OrientedSymbol":
        flip = {FORWARD: BACKWARD, BACKWARD: FORWARD, SYMMETRIC: SYMMETRIC}
        return OrientedSymbol(self.base, flip[self.orientation])

    @classmethod
    def parse(cls, text: str) -> "OrientedSymbol":
        text = text.strip().replace("−", "-")
        if text.endswith(("+", "-")):
            return cls(text[:-1], text[-1])
        return cls(text, SYMMETRIC)

    def __str__(self):
        return self.base + self.orientation


class Language:
    """Binary irreflexive relation symbols, each symmetric or asymmetric.

    An asymmetric symbol ``R`` contributes the oriented symbols ``R+`` and
    ``R-``; a symmetric ``X`` contributes ``X`` alone.  Oriented symbols are
    numbered in declaration order and that numbering is the colour order used
    by every canonical form.
    """

    def __init__(self, symbols: Iterable[tuple[str, bool]]):
        symbols = tuple((str(name), bool(asym)) for name, asym in symbols)
        names = [name for name, _ in symbols]
        if not names:
            raise InvalidInputError("language needs at least one symbol")
        if len(set(names)) != len(names):
            raise InvalidInputError(f"duplicate symbol names in {names}")
        self.symbols = symbols
        oriented = []
        for name, asym in symbols:
            if asym:
                oriented += [OrientedSymbol(name, FORWARD), OrientedSymbol(name, BACKWARD)]
            else:
                oriented.append(OrientedSymbol(name, SYMMETRIC))
        self.oriented = tuple(oriented)
        self._index = {sym: i for i, sym in enumerate(self.oriented)}
        self.dual_codes = tuple(self._index[s.dual()] for s in self.oriented)

    @classmethod
    def parse(cls, text: str) -> "Language":
        """``"R+-,G+-"`` declares two asymmetric symbols; a bare name is symmetric."""
        out = []
        for part in text.replace(" ", "").split(","):
            if not part:
                continue
            if part.endswith("+-") or part.endswith("±"):
                out.append((part.rstrip("+-±"), True))
            else:
                out.append((part, False))
        return cls(out)

    @classmethod
    def two_asymmetric(cls, first="R", second="G") -> "Language":
        return cls([(first, True), (second, True)])

    def spec_string(self) -> str:
        return ",".join(name + ("+-" if asym else "") for name, asym in self.symbols)

    @property
    def n_colors(self) -> int:
        return len(self.oriented)

    def code(self, symbol) -> int:
        if isinstance(symbol, str):
            symbol = OrientedSymbol.parse(symbol)
        try:
            return self._index[symbol]
        except KeyError:
            raise InvalidInputError(f"symbol {symbol} not in language {self.spec_string()}") from None

    def symbol(self, code: int) -> OrientedSymbol:
        return self.oriented[code]

    def dual(self, code: int) -> int:
        return self.dual_codes[code]

    def __eq__(self, other):
        return isinstance(other, Language) and self.symbols == other.symbols

    def __hash__(self):
        return hash(self.symbols)

    def __repr__(self):
        return f"Language({self.spec_string()!r})"


def _triangle_key(language: Language, rab: int, rac: int, rbc: int) -> tuple[int, int, int]:
    """Least (r(p,q), r(p,s), r(q,s)) over the six orderings of a triangle."""
    d = language.dual_codes
    r = {(0, 1): rab, (0, 2): rac, (1, 2): rbc, (1, 0): d[rab], (2, 0): d[rac], (2, 1): d[rbc]}
    return min((r[p, q], r[p, s], r[q, s]) for p, q, s in itertools.permutations(range(3)))


@dataclass(frozen=True)
class TrianglePattern:
    """A triangle ``abc`` read as ``(r(a,b), r(a,c), r(b,c))``, stored canonically."""

    language: Language = field(compare=False, repr=False)
    codes: tuple[int, int, int]

    @classmethod
    def from_edges(cls, language: Language, edges: Sequence) -> "TrianglePattern":
        if isinstance(edges, str):
            edges = edges.split()
        if len(edges) != 3:
            raise InvalidInputError(f"a triangle needs three edges, got {edges!r}")
        codes = [language.code(e) if not isinstance(e, int) else e for e in edges]
        return cls(language, _triangle_key(language, *codes))

    @property
    def edges(self) -> tuple[OrientedSymbol, OrientedSymbol, OrientedSymbol]:
        return tuple(self.language.symbol(c) for c in self.codes)

    def orderings(self) -> set[tuple[int, int, int]]:
        """All ordered-triple readings of this pattern."""
        d = self.language.dual_codes
        rab, rac, rbc = self.codes
        r = {(0, 1): rab, (0, 2): rac, (1, 2): rbc, (1, 0): d[rab], (2, 0): d[rac], (2, 1): d[rbc]}
        return {(r[p, q], r[p, s], r[q, s]) for p, q, s in itertools.permutations(range(3))}

    def __str__(self):
        return " ".join(str(e) for e in self.edges)


class TriangleSet:
    """Isomorphism-closed set of forbidden triangles (only canonical forms stored)."""

    def __init__(self, language: Language, patterns: Iterable = (), name: str | None = None):
        self.language = language
        self.name = name
        pats = set()
        for p in patterns:
            if not isinstance(p, TrianglePattern):
                p = TrianglePattern.from_edges(language, p)
            pats.add(p.codes)
        self.patterns = frozenset(pats)

    @classmethod
    def parse(cls, language: Language, text: str, name: str | None = None) -> "TriangleSet":
        lines = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line)
        return cls(language, lines, name=name)

    def to_text(self) -> str:
        return "".join(f"{p}\n" for p in self.sorted_patterns())

    def sorted_patterns(self) -> list[TrianglePattern]:
        return [TrianglePattern(self.language, c) for c in sorted(self.patterns)]

    def __contains__(self, pattern) -> bool:
        if isinstance(pattern, TrianglePattern):
            return pattern.codes in self.patterns
        return _triangle_key(self.language, *pattern) in self.patterns

    def __len__(self):
        return len(self.patterns)

    def __iter__(self):
        return iter(self.sorted_patterns())

    def __eq__(self, other):
        return (isinstance(other, TriangleSet) and self.language == other.language
                and self.patterns == other.patterns)

    def __hash__(self):
        return hash((self.language, self.patterns))

    @cached_property
    def table(self) -> np.ndarray:
        """``table[x, y, z]`` is True iff r(a,b)=x, r(a,c)=y, r(b,c)=z is forbidden."""
        m = self.language.n_colors
        tab = np.zeros((m, m, m), dtype=bool)
        for codes in self.patterns:
            for o in TrianglePattern(self.language, codes).orderings():
                tab[o] = True
        return tab

    @cached_property
    def forbidden_triples(self) -> frozenset:
        return frozenset(zip(*np.nonzero(self.table))) if self.patterns else frozenset()

    def is_forbidden(self, rab: int, rac: int, rbc: int) -> bool:
        return bool(self.table[rab, rac, rbc])

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<TriangleSet{label}: {', '.join(str(p) for p in self.sorted_patterns())}>"


class CompleteStructure:
    """Finite complete coherent edge-coloured digraph; immutable value.

    ``matrix[i][j]`` holds the colour code of ``(vertices[i], vertices[j])``;
    the diagonal holds -1.
    """

    __slots__ = ("language", "vertices", "matrix", "_pos", "_hash")

    def __init__(self, language: Language, vertices: Sequence[int], matrix, *, check: bool = True):
        self.language = language
        self.vertices = tuple(vertices)
        self.matrix = tuple(tuple(int(c) for c in row) for row in matrix)
        self._pos = {v: i for i, v in enumerate(self.vertices)}
        self._hash = None
        if check:
            self._validate()

    def _validate(self):
        n = len(self.vertices)
        if len(self._pos) != n:
            raise InvalidInputError("duplicate vertex ids")
        if len(self.matrix) != n or any(len(row) != n for row in self.matrix):
            raise InvalidInputError("colour matrix has the wrong shape")
        m, d = self.language.n_colors, self.language.dual_codes
        for i in range(n):
            if self.matrix[i][i] != -1:
                raise InvalidInputError("irreflexivity: diagonal must be uncoloured")
            for j in range(i + 1, n):
                c = self.matrix[i][j]
                if not 0 <= c < m:
                    raise InvalidInputError(f"pair {self.vertices[i], self.vertices[j]} uncoloured")
                if self.matrix[j][i] != d[c]:
                    raise InvalidInputError(
                        f"coherence: colour of {self.vertices[j], self.vertices[i]} is not the dual")

    @classmethod
    def from_edges(cls, language: Language, vertices: Sequence[int], edges: Mapping) -> "CompleteStructure":
        """Build from ``{(x, y): symbol}``; each unordered pair needs one direction."""
        vertices = tuple(vertices)
        pos = {v: i for i, v in enumerate(vertices)}
        n = len(vertices)
        mat = [[-1] * n for _ in range(n)]
        for (x, y), sym in edges.items():
            if x == y:
                raise InvalidInputError(f"loop on {x}")
            if x not in pos or y not in pos:
                raise InvalidInputError(f"edge {x, y} mentions an unknown vertex")
            c = sym if isinstance(sym, int) else language.code(sym)
            i, j = pos[x], pos[y]
            for (p, q, cc) in ((i, j, c), (j, i, language.dual(c))):
                if mat[p][q] not in (-1, cc):
                    raise InvalidInputError(f"conflicting colours on {x, y}")
                mat[p][q] = cc
        for i in range(n):
            for j in range(n):
                if i != j and mat[i][j] == -1:
                    raise InvalidInputError(
                        f"completeness: pair {vertices[i], vertices[j]} has no colour")
        return cls(language, vertices, mat)

    @classmethod
    def empty(cls, language: Language) -> "CompleteStructure":
        return cls(language, (), ())

    def __len__(self):
        return len(self.vertices)

    def __contains__(self, v):
        return v in self._pos

    def index(self, v) -> int:
        try:
            return self._pos[v]
        except KeyError:
            raise InvalidInputError(f"vertex {v!r} not in structure") from None

    def code(self, x, y) -> int:
        return self.matrix[self.index(x)][self.index(y)]

    def color(self, x, y) -> OrientedSymbol:
        if x == y:
            raise InvalidInputError("irreflexive: no colour on a loop")
        return self.language.symbol(self.code(x, y))

    def pairs(self):
        """Forward direction of each unordered pair, in vertex order."""
        vs = self.vertices
        for i in range(len(vs)):
            for j in range(i + 1, len(vs)):
                yield vs[i], vs[j], self.matrix[i][j]

    def induced(self, subset: Iterable[int]) -> "CompleteStructure":
        subset = list(subset)
        idx = [self.index(v) for v in subset]
        mat = [[self.matrix[i][j] for j in idx] for i in idx]
        return CompleteStructure(self.language, subset, mat, check=False)

    def relabel(self, mapping: Mapping[int, int]) -> "CompleteStructure":
        return CompleteStructure(self.language, [mapping[v] for v in self.vertices],
                                 self.matrix, check=True)

    def upper_codes(self) -> tuple[int, ...]:
        n = len(self.vertices)
        return tuple(self.matrix[i][j] for i in range(n) for j in range(i + 1, n))

    def __eq__(self, other):
        return (isinstance(other, CompleteStructure) and self.language == other.language
                and self.vertices == other.vertices and self.matrix == other.matrix)

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.vertices, self.matrix))
        return self._hash

    def __repr__(self):
        body = ", ".join(f"{x}{y}:{self.language.symbol(c)}" for x, y, c in self.pairs())
        return f"CompleteStructure([{', '.join(map(str, self.vertices))}] {body})"

    def to_literal(self) -> str:
        lines = ["vertices " + " ".join(str(v) for v in self.vertices)]
        lines += [f"{x} {y} {self.language.symbol(c)}" for x, y, c in self.pairs()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_literal(cls, language: Language, text: str) -> "CompleteStructure":
        """Parse ``a b SYMBOL`` lines; an optional ``vertices ...`` line fixes the order."""
        vertices: list[int] | None = None
        edges = {}
        seen: list[int] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "vertices":
                vertices = [int(v) for v in parts[1:]]
                continue
            if len(parts) != 3:
                raise InvalidInputError(f"line {lineno}: expected 'a b SYMBOL', got {raw!r}")
            try:
                x, y = int(parts[0]), int(parts[1])
            except ValueError:
                raise InvalidInputError(f"line {lineno}: vertex ids must be integers") from None
            if (x, y) in edges or (y, x) in edges:
                raise InvalidInputError(f"line {lineno}: pair {x, y} listed twice")
            edges[x, y] = parts[2]
            for v in (x, y):
                if v not in seen:
                    seen.append(v)
        if vertices is None:
            vertices = sorted(seen)
        return cls.from_edges(language, vertices, edges)


class Violation(NamedTuple):
    vertices: tuple[int, int, int]
    pattern: TrianglePattern


def triangle_of(S: CompleteStructure, a: int, b: int, c: int) -> TrianglePattern:
    if len({a, b, c}) != 3:
        raise InvalidInputError("triangle vertices must be distinct")
    return TrianglePattern(S.language, _triangle_key(S.language, S.code(a, b), S.code(a, c), S.code(b, c)))


def embeds_forbidden(S: CompleteStructure, T: TriangleSet) -> Optional[Violation]:
    """First triple (in vertex order) whose pattern lies in ``T``, else None."""
    if not T.patterns or len(S) < 3:
        return None
    tab = T.table
    m = S.matrix
    n = len(S)
    for i in range(n):
        mi = m[i]
        for j in range(i + 1, n):
            rij, mj = mi[j], m[j]
            for k in range(j + 1, n):
                if tab[rij, mi[k], mj[k]]:
                    a, b, c = S.vertices[i], S.vertices[j], S.vertices[k]
                    return Violation((a, b, c), triangle_of(S, a, b, c))
    return None


@dataclass(frozen=True)
class StructureEmbedding:
    source: CompleteStructure
    target: CompleteStructure
    map: dict

    def __post_init__(self):
        if len(set(self.map.values())) != len(self.map):
            raise InvalidInputError("embedding is not injective")
        if set(self.map) != set(self.source.vertices):
            raise InvalidInputError("embedding must be total on the source")
        for x, y, c in self.source.pairs():
            if self.target.code(self.map[x], self.map[y]) != c:
                raise InvalidInputError(f"embedding does not preserve colour of {x, y}")

    def __call__(self, v):
        return self.map[v]


def find_isomorphism(A: CompleteStructure, B: CompleteStructure,
                     fixed: Mapping[int, int] | None = None) -> Optional[StructureEmbedding]:
    """Colour-preserving bijection ``A -> B`` extending ``fixed``, searched in vertex-id order."""
    if len(A) != len(B) or A.language != B.language:
        return None
    fixed = dict(fixed or {})
    for x, y in fixed.items():
        if x not in A or y not in B:
            raise InvalidInputError("fixed map mentions unknown vertices")
    if len(set(fixed.values())) != len(fixed):
        return None
    for x, y in fixed.items():
        for x2, y2 in fixed.items():
            if x != x2 and A.code(x, x2) != B.code(y, y2):
                return None
    Am, Bm = A.matrix, B.matrix
    order = [A.index(v) for v in sorted(A.vertices) if v not in fixed]
    assign = {A.index(x): B.index(y) for x, y in fixed.items()}
    used = set(assign.values())
    bcands = sorted(range(len(B)), key=lambda j: B.vertices[j])
    # cheap vertex invariant: multiset of row colours
    inv_a = [sorted(r) for r in Am]
    inv_b = [sorted(r) for r in Bm]

    def extend(k):
        if k == len(order):
            return True
        i = order[k]
        for j in bcands:
            if j in used or inv_a[i] != inv_b[j]:
                continue
            if all(Am[i][p] == Bm[j][q] for p, q in assign.items()):
                assign[i] = j
                used.add(j)
                if extend(k + 1):
                    return True
                del assign[i]
                used.discard(j)
        return False

    if not extend(0):
        return None
    mapping = {A.vertices[i]: B.vertices[j] for i, j in assign.items()}
    return StructureEmbedding(A, B, mapping)


def _canonical_order(S: CompleteStructure) -> list[int]:
    """Vertex positions ordered so the column-wise upper-triangle code is least."""
    n = len(S)
    m = S.matrix
    inv = [tuple(sorted(row)) for row in m]
    slots = sorted(inv)
    best_code: list[int] | None = None
    best_order: list[int] = []
    order: list[int] = []
    code: list[int] = []
    used = [False] * n

    def rec(k):
        nonlocal best_code, best_order
        if k == n:
            if best_code is None or code < best_code:
                best_code = code.copy()
                best_order = order.copy()
            return
        for v in range(n):
            if used[v] or inv[v] != slots[k]:
                continue
            col = [m[u][v] for u in order]
            start = len(code)
            code.extend(col)
            if best_code is not None:
                prefix = best_code[:len(code)]
                if code > prefix:
                    del code[start:]
                    continue
            used[v] = True
            order.append(v)
            rec(k + 1)
            order.pop()
            used[v] = False
            del code[start:]

    rec(0)
    return best_order


def canonical_form(S: CompleteStructure, bound: int = CANONICAL_BOUND) -> CompleteStructure:
    """Relabelling of ``S`` onto ``0..n-1`` that is identical across an isomorphism class."""
    if len(S) > bound:
        raise ResourceLimitError(f"canonical_form bound {bound} exceeded by size {len(S)}")
    order = _canonical_order(S)
    mat = [[S.matrix[i][j] for j in order] for i in order]
    return CompleteStructure(S.language, range(len(S)), mat, check=False)


def canonical_key(S: CompleteStructure) -> tuple:
    c = canonical_form(S)
    return (len(c),) + c.upper_codes()


def enumerate_forb(language: Language, T: TriangleSet, n: int,
                   bound: int = ENUMERATION_BOUND) -> list[CompleteStructure]:
    """One canonical representative per isomorphism class of size-``n`` members of Forb_c(T)."""
    if n > bound:
        raise ResourceLimitError(f"enumeration bound {bound} exceeded by n={n}")
    if n < 0:
        raise InvalidInputError("size must be non-negative")
    if n == 0:
        return [CompleteStructure.empty(language)]
    tab = T.table
    dual = language.dual_codes
    mcol = language.n_colors
    level = {canonical_form(CompleteStructure(language, [0], [[-1]], check=False))}
    for k in range(1, n):
        nxt = {}
        for S in level:
            m = S.matrix
            for cols in itertools.product(range(mcol), repeat=k):
                # cols[i] = r(old_i, new); triangle (i, j, new)
                if any(tab[m[i][j], cols[i], cols[j]] for i in range(k) for j in range(i + 1, k)):
                    continue
                mat = [list(row) + [cols[i]] for i, row in enumerate(m)]
                mat.append([dual[c] for c in cols] + [-1])
                ext = canonical_form(CompleteStructure(language, range(k + 1), mat, check=False))
                nxt.setdefault(ext.upper_codes(), ext)
        level = set(nxt.values())
    return sorted(level, key=lambda s: s.upper_codes())
