"""Partial automorphisms and the constructive conjugation machinery.

Automorphisms of the limit are stood in for by finite partial maps that grow
on demand: asking a map for the image of a point outside its domain realises
the transported type in the backend (reusing an existing point when one fits)
and records the new pair.  Every construction re-verifies its conclusions by
direct application; nothing is trusted from bookkeeping.

Composites are :class:`Word` objects applied right to left, so
``Word(a, g, a.inverse)`` is the conjugate g^a = a g a⁻¹ and
``comm(g, h)`` is g⁻¹h⁻¹gh.
"""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .errors import BudgetExhausted, HomogenError, InvalidInputError, LogicalFailure
from .swir import LEFT, RIGHT, holds, transport


class HypothesisError(HomogenError, ValueError):
    """A lemma was called outside its hypotheses (distinct from budget or logical failure)."""


def _uniq(xs: Iterable) -> tuple:
    return tuple(dict.fromkeys(xs))


# ---------------------------------------------------------------------- maps


class PartialAutomorphism:
    """A finite colour/order-preserving injection that extends itself lazily.

    ``rule`` makes the map total (identity, a rational shift); otherwise an
    undefined point is sent to a realisation of the transported type.  A
    frozen map refuses to extend, which is how certificates are replayed.
    """

    def __init__(self, backend, pairs: Iterable = (), *, name: str = "g",
                 rule: Optional[Callable] = None, rule_inverse: Optional[Callable] = None,
                 frozen: bool = False, check: bool = True):
        self.backend = backend
        self.name = name
        self.fwd: dict = {}
        self.bwd: dict = {}
        self.rule, self.rule_inverse = rule, rule_inverse
        self.frozen = frozen
        self._inv: Optional[PartialAutomorphism] = None
        self._view = False
        self.log: Optional[set] = None
        for x, y in pairs:
            self.assign(x, y, check=check)

    @classmethod
    def identity(cls, backend, name: str = "id") -> "PartialAutomorphism":
        return cls(backend, name=name, rule=lambda x: x, rule_inverse=lambda x: x)

    # -- structure

    @property
    def inverse(self) -> "PartialAutomorphism":
        if self._inv is None:
            inv = PartialAutomorphism.__new__(PartialAutomorphism)
            inv.backend, inv.name = self.backend, _invert_name(self.name)
            inv.fwd, inv.bwd = self.bwd, self.fwd
            inv.rule, inv.rule_inverse = self.rule_inverse, self.rule
            inv.frozen = self.frozen
            inv._inv = self
            inv._view = True
            self._inv = inv
        return self._inv

    def domain(self) -> list:
        return list(self.fwd)

    def image(self) -> list:
        return list(self.bwd)

    def pairs(self) -> list:
        return list(self.fwd.items())

    def __len__(self):
        return len(self.fwd)

    def __repr__(self):
        return f"PartialAutomorphism({self.name}, {len(self.fwd)} pairs)"

    def assign(self, x, y, *, check: bool = True):
        """Record x -> y, refusing anything that would break injectivity or preservation."""
        if x in self.fwd:
            if self.fwd[x] != y:
                raise LogicalFailure(f"{self.name} already sends {x} to {self.fwd[x]}, not {y}")
            return
        if y in self.bwd:
            raise LogicalFailure(f"{self.name} already hits {y}")
        if check and not self.backend.consistent(list(self.fwd), list(self.bwd), x, y):
            raise LogicalFailure(f"{self.name}: {x} -> {y} is not a partial isomorphism")
        self.fwd[x] = y
        self.bwd[y] = x

    def is_defined(self, x) -> bool:
        return x in self.fwd or self.rule is not None

    # -- application

    def __call__(self, x, *, constraints: Sequence = (), avoid: Iterable = (), fresh: bool = False):
        if x not in self.fwd:
            extend_partial(self, (x,), constraints, avoid, prefer_existing=not fresh)
        y = self.fwd[x]
        base = self._inv if self._view else self
        if base.log is not None:
            base.log.add((y, x) if self._view else (x, y))
        return y

    def apply(self, xs: Iterable, *, fresh: bool = False) -> tuple:
        return tuple(self(x, fresh=fresh) for x in xs)

    def freeze(self) -> "PartialAutomorphism":
        self.frozen = True
        if self._inv is not None:
            self._inv.frozen = True
        return self

    def restrict_check(self) -> bool:
        """Replay every colour/order check from scratch."""
        return self.backend.is_partial_iso(dict(self.fwd))


def _invert_name(name: str) -> str:
    return name[:-3] if name.endswith("^-1") else name + "^-1"


def extend_partial(g: PartialAutomorphism, a: Sequence, constraints: Sequence = (),
                   avoid: Iterable = (), *, prefer_existing: bool = True) -> PartialAutomorphism:
    """Extend ``g`` to the points of ``a`` by realising the transported type.

    Constraints are ``(side, Y, C)`` triples on the image tuple, exactly as in
    the backend's ``realize``.  Existing vertices are preferred.
    """
    missing = _uniq(x for x in a if x not in g.fwd)
    if not missing:
        return g
    # a total rule is deterministic, so it may extend even while frozen
    if g.frozen and g.rule is None:
        raise LogicalFailure(f"frozen map {g.name} is undefined at {missing}")
    if g.rule is not None:
        for x in missing:
            y = g.rule(x)
            if hasattr(g.backend, "add"):
                g.backend.add(x)
                y = g.backend.add(y)
            g.assign(x, y, check=False)
        if constraints and not holds(g.backend, g.apply(missing), constraints):
            raise LogicalFailure(f"total map {g.name} misses the requested constraint")
        return g
    dom = tuple(g.fwd)
    p = transport(g.backend.tp(missing, dom), g.fwd)
    image = g.backend.realize(p, constraints, avoid=set(g.bwd) | set(avoid), prefer_existing=prefer_existing)
    for x, y in zip(missing, image):
        g.assign(x, y)
    return g


class Word:
    """Composite f_1 ∘ f_2 ∘ … ∘ f_n, applied right to left."""

    def __init__(self, *factors):
        self.factors = tuple(factors)

    @property
    def inverse(self) -> "Word":
        return Word(*(f.inverse for f in reversed(self.factors)))

    def __call__(self, x, *, constraints: Sequence = (), avoid: Iterable = (), fresh: bool = False):
        for f in reversed(self.factors[1:]):
            x = f(x, fresh=fresh)
        if not self.factors:
            return x
        return self.factors[0](x, constraints=constraints, avoid=avoid, fresh=fresh and not constraints)

    def apply(self, xs: Iterable, *, fresh: bool = False) -> tuple:
        return tuple(self(x, fresh=fresh) for x in xs)

    def flatten(self) -> list[tuple["PartialAutomorphism", int]]:
        """Base maps with exponents ±1, outermost first."""
        out = []
        for f in self.factors:
            if isinstance(f, Word):
                out.extend(f.flatten())
            else:
                out.extend(_base_factor(f))
        return out

    def __repr__(self):
        return "Word(" + " ".join(f.name + ("" if e > 0 else "^-1") for f, e in self.flatten()) + ")"


def _base_factor(f: PartialAutomorphism) -> list:
    if f._view:
        return [(f._inv, -1)]
    return [(f, 1)]


def conj(g, a) -> Word:
    """g^a = a g a⁻¹."""
    return Word(a, g, a.inverse)


def comm(g, h) -> Word:
    """[g, h] = g⁻¹ h⁻¹ g h."""
    return Word(g.inverse, h.inverse, g, h)


def as_word(f) -> Word:
    return f if isinstance(f, Word) else Word(f)


def fixes(f, S: Iterable) -> bool:
    return all(f(x) == x for x in S)


def identity_on(backend, S: Iterable, name: str, extra: Iterable = ()) -> PartialAutomorphism:
    """The map fixing ``S`` pointwise, plus the ``extra`` pairs."""
    return PartialAutomorphism(backend, itertools.chain(((x, x) for x in _uniq(S)), extra), name=name)


def random_partial_automorphism(backend, domain: Sequence, rng: random.Random, *, name: str = "g",
                                candidates: int = 16) -> PartialAutomorphism:
    """A partial isomorphism on ``domain`` whose images are drawn at random.

    Each point goes to a random existing realisation of its transported type
    (a fresh one when none is free), so the map is far from the identity.
    """
    g = PartialAutomorphism(backend, name=name)
    for x in domain:
        if x in g.fwd:
            continue
        dom = tuple(g.fwd)
        p = transport(backend.tp((x,), dom), g.fwd)
        opts = [y for y in backend.realizations(p, avoid=set(g.bwd), limit=candidates) if y[0] != x]
        y = rng.choice(opts) if opts else backend.realize(p, avoid=set(g.bwd), prefer_existing=False)
        g.assign(x, y[0])
    return g


# ---------------------------------------------------------------------- moving witnesses


@dataclass
class MovingMaxWitness:
    """a realises p over X and is moved independently by the map."""

    side: str
    base: tuple
    a: tuple
    image: tuple

    def holds(self, backend) -> bool:
        if self.side == RIGHT:
            return backend.ind(self.a, self.base, self.image)
        return backend.ind(self.image, self.base, self.a)

    def record(self, backend) -> dict:
        enc = backend.encode
        return {"side": self.side, "base": [enc(x) for x in self.base],
                "a": [enc(x) for x in self.a], "image": [enc(x) for x in self.image]}


def _side_constraint(side: str, X: tuple, a: tuple) -> tuple:
    # R: a ⫝_X g(a), i.e. the image is right of a.  L: g(a) ⫝_X a.
    return (RIGHT, X, a) if side == RIGHT else (LEFT, X, a)


def moving_witness(backend, g, X: Sequence, p, side: str, *, max_candidates: int = 64,
                   fresh: bool = True, fresh_tries: int = 8) -> Optional[MovingMaxWitness]:
    """Search realisations a of ``p`` over ``X`` with a ⫝_X g(a) (R) or g(a) ⫝_X a (L).

    Existing realisations come first; for each, the map may be extended at
    a with the side condition imposed on the new image.  A fresh realisation
    is tried last.  ``None`` means the bounded search found nothing, which
    does not prove no witness exists.
    """
    if side not in (LEFT, RIGHT):
        raise InvalidInputError(f"side must be L or R, not {side!r}")
    X = tuple(X)
    if p.is_algebraic:
        raise HypothesisError("moving witnesses are only sought for non-algebraic types")
    g = as_word(g)
    cands = backend.realizations(p, limit=max_candidates)
    for a in cands:
        w = _try_candidate(backend, g, X, p, a, side)
        if w is not None:
            return w
    if fresh:
        marks = ()
        outer = g.factors[-1] if g.factors else None
        if outer is not None and getattr(outer, "rule_inverse", None) is not None:
            marks = tuple(outer.rule_inverse(x) for x in X)
        extra = {"extra": marks} if marks else {}
        # a rational shift needs room: one representative per cut of X ∪ g⁻¹X
        if hasattr(backend, "cut_representatives") and p.arity == 1:
            lo, hi = backend._interval(p, 0)
            for x in backend.cut_representatives(lo, hi, set(marks) | set(X))[:max_candidates]:
                w = _try_candidate(backend, g, X, p, (x,), side)
                if w is not None:
                    return w
        for _ in range(fresh_tries):
            try:
                a = backend.realize(p, [], prefer_existing=False, side=LEFT if side == RIGHT else RIGHT, **extra)
            except LogicalFailure:
                return None
            if a in cands:
                break
            w = _try_candidate(backend, g, X, p, a, side)
            if w is not None:
                return w
    return None


def _try_candidate(backend, g: Word, X, p, a, side) -> Optional[MovingMaxWitness]:
    # Inner factors first reuse existing points, then run through fresh ones;
    # each free factor of the word is tried as the place to impose the side
    # condition.  Maps only ever grow, so a spoiled attempt just moves on.
    if backend.tp(a, X) != p:
        return None
    for fresh in (False, True):
        for target in _targets(g):
            try:
                image = _apply_jointly(g, tuple(a), side, X, fresh=fresh, target=target)
            except (LogicalFailure, BudgetExhausted):
                continue
            w = MovingMaxWitness(side, X, tuple(a), image)
            if w.holds(backend):
                return w
            if target is None:
                break
    return None


def _targets(g: Word) -> list:
    """Factor positions to constrain: maps occurring once first, innermost first, then None."""
    flat = g.flatten()
    counts: dict = {}
    for m, _ in flat:
        counts[id(m)] = counts.get(id(m), 0) + 1
    order = range(len(flat) - 1, -1, -1)
    once = [k for k in order if counts[id(flat[k][0])] == 1]
    return once + [k for k in order if k not in once] + [None]


def _apply_jointly(g: Word, a: tuple, side, X, fresh: bool = False, target: Optional[int] = None) -> tuple:
    """Evaluate g on a, imposing the side condition at factor ``target``.

    The condition is pulled back through the outer factors (invariance: they
    are partial isomorphisms on every point involved) and imposed when the
    target factor is extended.  ``None`` takes the first undefined factor.
    If the target is already defined at its point the image is forced.
    """
    fs = [m if e > 0 else m.inverse for m, e in g.flatten()]
    v = tuple(a)
    for k in range(len(fs) - 1, -1, -1):
        f = fs[k]
        free = f.rule is None and not all(x in f.fwd for x in v)
        if free and (target is None or target == k):
            outer_inv = Word(*fs[:k]).inverse
            # Fresh pull-backs cannot land on v and pre-empt the free choice.
            Xk = outer_inv.apply(X, fresh=True)
            ak = outer_inv.apply(a, fresh=True)
            if f.rule is None and not all(x in f.fwd for x in v):
                extend_partial(f, v, [_side_constraint(side, Xk, ak)], prefer_existing=not fresh)
                return Word(*fs[:k + 1]).apply(v, fresh=fresh)
        v = f.apply(v, fresh=fresh)
    return v


# ---------------------------------------------------------------------- independence lemmas


def lemma_addset_witness(backend, A, B, C, D, side: str = "I") -> tuple:
    """Move D, keeping its type over BC (I) or AB (II), to restore A ⫝_B CD′ (I) or AD″ ⫝_B C (II)."""
    A, B, C, D = map(tuple, (A, B, C, D))
    if not backend.ind(A, B, C):
        raise HypothesisError("addset needs A ⫝_B C")
    base = _uniq(B + C) if side == "I" else _uniq(A + B)
    rest = _uniq(d for d in D if d not in base)
    if not rest:
        return D
    p = backend.tp(rest, base)
    other = A if side == "I" else C
    cons = [(RIGHT, base, other)] if side == "I" else [(LEFT, base, other)]
    moved = backend.realize(p, cons, prefer_existing=True, side=RIGHT if side == "I" else LEFT)
    table = dict(zip(rest, moved))
    Dp = tuple(table.get(d, d) for d in D)
    ok = backend.tp(_uniq(Dp), base).shape() == backend.tp(_uniq(D), base).shape()
    ok = ok and (backend.ind(A, B, C + Dp) if side == "I" else backend.ind(A + Dp, B, C))
    if not ok:
        raise LogicalFailure(f"addset {side}: relocated set fails re-verification", data=(A, B, C, D, Dp))
    return Dp


def lemma_tz31_witness(backend, A, B, C, maps: Sequence, side: str = "I",
                       name: str = "e") -> PartialAutomorphism:
    """e ∈ G_(BC) with A ⫝_B C g_1^e(C)…g_n^e(C) (I), or f ∈ G_(AB) with A g_i^f(A)… ⫝_B C (II)."""
    A, B, C = map(tuple, (A, B, C))
    if not backend.ind(A, B, C):
        raise HypothesisError("the independence lemma needs A ⫝_B C")
    moved = C if side == "I" else A
    fixed = _uniq(B + C) if side == "I" else _uniq(A + B)
    D = _uniq(x for g in maps for x in as_word(g).apply(moved))
    Dp = lemma_addset_witness(backend, A, B, C, D, side)
    e = identity_on(backend, fixed, name, ((d, dp) for d, dp in zip(D, Dp) if d not in fixed))
    images = tuple(x for g in maps for x in conj(g, e).apply(moved))
    ok = fixes(e, fixed) and (backend.ind(A, B, C + images) if side == "I" else backend.ind(A + images, B, C))
    if not ok:
        raise LogicalFailure(f"independence lemma {side}: conjugated images fail re-verification")
    return e


# ---------------------------------------------------------------------- certificates


class _StructureBackend:
    """Replay backend: independence and colours read off a recorded finite structure."""

    name = "forb-limit"

    def __init__(self, structure, triangles, priority):
        from .swir import forb_ind

        self.S, self.triangles, self.priority = structure, triangles, priority
        self._ind = forb_ind

    def code(self, x, y):
        return self.S.code(x, y)

    def ind(self, A, B, C) -> bool:
        return self._ind(self.S, A, B, C, self.triangles, self.priority)

    def consistent(self, dom, img, x, y) -> bool:
        return all(self.code(x, d) == self.code(y, i) for d, i in zip(dom, img) if d != x)

    def is_partial_iso(self, phi) -> bool:
        items = list(phi.items())
        return len(set(phi.values())) == len(items) and all(
            self.code(x, y) == self.code(u, v) for (x, u), (y, v) in itertools.permutations(items, 2))

    def encode(self, x):
        return int(x)

    def decode(self, x):
        return int(x)


def _backend_record(backend, points: Iterable) -> dict:
    if getattr(backend, "name", "") == "dlo":
        return {"name": "dlo"}
    tower = backend.tower
    pts = sorted({int(x) for x in points})
    return {"name": "forb-limit", "language": tower.language.spec_string(),
            "triangles": [str(t) for t in tower.triangles.sorted_patterns()],
            "priority": str(tower.priority), "structure": tower.induced(pts).to_literal()}


def _replay_backend(rec: dict):
    if rec["name"] == "dlo":
        from .swir import DLOBackend

        return DLOBackend(())
    from .amalgamation import PriorityOrder
    from .core import CompleteStructure, Language, TriangleSet

    lang = Language.parse(rec["language"])
    S = CompleteStructure.from_literal(lang, rec["structure"])
    return _StructureBackend(S, TriangleSet(lang, rec["triangles"]), PriorityOrder.parse(lang, rec["priority"]))


@dataclass
class Certificate:
    """A structured, replayable record of maps, sets and the facts they satisfy.

    ``words`` name composites as lists of ``(base map, ±1)`` outermost first;
    ``facts`` pairs each claim with the verdict obtained by direct application.
    """

    kind: str
    backend: dict
    maps: dict
    words: dict
    sets: dict
    facts: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    live: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return all(v for _, v in self.facts)

    def record(self) -> dict:
        return {"kind": self.kind, "backend": self.backend, "maps": self.maps, "words": self.words,
                "sets": self.sets, "facts": [[f, v] for f, v in self.facts], "extra": self.extra}

    def dumps(self) -> str:
        return json.dumps(self.record(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_record(cls, rec: dict) -> "Certificate":
        return cls(rec["kind"], rec["backend"], rec["maps"], rec["words"], rec["sets"],
                   [tuple(f) for f in rec["facts"]], rec.get("extra", {}))

    @classmethod
    def loads(cls, text: str) -> "Certificate":
        return cls.from_record(json.loads(text))


_CHECKS: dict = {}


def _checker(kind):
    def deco(fn):
        _CHECKS[kind] = fn
        return fn
    return deco


def _issue(kind: str, backend, words: dict, sets: dict, extra: Optional[dict] = None) -> Certificate:
    """Freeze every base map, run the checker while tracing, and keep only the pairs used."""
    extra = extra or {}
    bases = {}
    for w in words.values():
        for m, _ in as_word(w).flatten():
            if bases.setdefault(m.name, m) is not m:
                raise InvalidInputError(f"two different maps are both named {m.name!r}")
    saved = {n: m.frozen for n, m in bases.items()}
    for m in bases.values():
        m.log = set()
        m.freeze()
    try:
        facts = _CHECKS[kind](backend, {k: as_word(w) for k, w in words.items()}, sets, extra)
    finally:
        for n, m in bases.items():
            m.frozen = saved[n]
            if m._inv is not None:
                m._inv.frozen = saved[n]
    enc = backend.encode
    used = {n: sorted(m.log, key=lambda xy: (_sort_key(xy[0]), _sort_key(xy[1]))) for n, m in bases.items()}
    for m in bases.values():
        m.log = None
    points = {x for pairs in used.values() for xy in pairs for x in xy}
    points |= {x for v in sets.values() for x in v}
    cert = Certificate(
        kind, _backend_record(backend, points),
        {n: [[enc(x), enc(y)] for x, y in pairs] for n, pairs in sorted(used.items())},
        {k: [[m.name, e] for m, e in as_word(w).flatten()] for k, w in words.items()},
        {k: [enc(x) for x in v] for k, v in sets.items()}, facts, extra, live=dict(words))
    return cert


def _sort_key(x):
    return (0, x) if isinstance(x, (int,)) else (1, x)


def verify_certificate(cert) -> tuple[bool, Certificate]:
    """Rebuild frozen maps from the record and recompute every fact from scratch.

    Returns whether all facts hold and the facts agree with the recorded ones,
    together with the recomputed certificate.
    """
    if isinstance(cert, (str, bytes)):
        cert = Certificate.loads(cert)
    elif isinstance(cert, dict):
        cert = Certificate.from_record(cert)
    if cert.kind not in _CHECKS:
        raise InvalidInputError(f"unknown certificate kind {cert.kind!r}")
    backend = _replay_backend(cert.backend)
    dec = backend.decode
    # built unchecked so that a broken map becomes a false fact rather than an error
    maps = {n: PartialAutomorphism(backend, [(dec(x), dec(y)) for x, y in pairs], name=n, frozen=True,
                                   check=False)
            for n, pairs in cert.maps.items()}
    words = {}
    for k, factors in cert.words.items():
        fs = []
        for n, e in factors:
            m = maps.get(n) or maps.setdefault(n, PartialAutomorphism(backend, name=n, frozen=True))
            fs.append(m if e > 0 else m.inverse)
        words[k] = Word(*fs)
    sets = {k: tuple(dec(x) for x in v) for k, v in cert.sets.items()}
    facts = [("maps are partial isomorphisms", all(m.restrict_check() for m in maps.values()))]
    facts += _CHECKS[cert.kind](backend, words, sets, cert.extra)
    again = Certificate(cert.kind, cert.backend, cert.maps, cert.words, cert.sets, facts[1:], cert.extra)
    same = [tuple(f) for f in cert.facts] == [tuple(f) for f in again.facts]
    return bool(facts[0][1] and again.ok and same), again


def _guard(fn, *args):
    """Evaluate a fact; an undefined frozen map or a broken map makes it false."""
    try:
        return bool(fn(*args))
    except (LogicalFailure, BudgetExhausted):
        return False


def _same_set(f, S, T) -> bool:
    return set(f.apply(S)) == set(T)


@_checker("conjugate-product")
def _check_conjugate_product(backend, w, s, extra) -> list:
    facts = []
    for i in range(1, 5):
        Yp, Y = s[f"Y{i - 1}"], s[f"Y{i}"]
        facts.append((f"a{i} fixes Y{i - 1} and Y{i}", _guard(fixes, w[f"a{i}"], Yp + Y)))
        facts.append((f"g{i}^a{i} maps Y{i - 1} onto Y{i}",
                      _guard(_same_set, conj(w[f"g{i}"], w[f"a{i}"]), Yp, Y)))
    facts.append(("Y0 ⫝_Y1 Y2", _guard(backend.ind, s["Y0"], s["Y1"], s["Y2"])))
    facts.append(("Y4 ⫝_Y3 Y2", _guard(backend.ind, s["Y4"], s["Y3"], s["Y2"])))
    prod = Word(*(conj(w[f"g{i}"], w[f"a{i}"]) for i in (4, 3, 2, 1)))
    facts.append(("g4^a4 g3^a3 g2^a2 g1^a1 (x0) = x4", _guard(lambda: prod.apply(s["x0"]) == s["x4"])))
    return facts


@_checker("extension")
def _check_extension(backend, w, s, extra) -> list:
    facts = []
    for i in range(1, 5):
        X, Xn, Y, Yn = s[f"X{i - 1}"], s[f"X{i}"], s[f"Y{i - 1}"], s[f"Y{i}"]
        facts.append((f"a{i} fixes X{i - 1} and X{i}", _guard(fixes, w[f"a{i}"], X + Xn)))
        facts.append((f"X{i} ⊆ Y{i}", set(Xn) <= set(Yn)))
        facts.append((f"g{i}^a{i} maps Y{i - 1} onto Y{i}", _guard(_same_set, conj(w[f"g{i}"], w[f"a{i}"]), Y, Yn)))
    facts.append(("X0 ⊆ Y0", set(s["X0"]) <= set(s["Y0"])))
    facts.append(("Y0 ⫝_Y1 Y2", _guard(backend.ind, s["Y0"], s["Y1"], s["Y2"])))
    facts.append(("Y4 ⫝_Y3 Y2", _guard(backend.ind, s["Y4"], s["Y3"], s["Y2"])))
    return facts


# ---------------------------------------------------------------------- the Y_i construction


class _Stage:
    """Tag budget and logical failures with the proof step they came from."""

    def __init__(self, tag):
        self.tag = tag

    def __enter__(self):
        return self

    def __exit__(self, typ, exc, tb):
        if exc is None or getattr(exc, "step", None) is not None:
            return False
        if isinstance(exc, BudgetExhausted):
            raise BudgetExhausted(str(exc), step=self.tag) from exc
        if isinstance(exc, LogicalFailure):
            raise LogicalFailure(str(exc), step=self.tag, data=exc.data) from exc
        if isinstance(exc, HypothesisError):
            raise LogicalFailure(f"internal hypothesis failed: {exc}", step=self.tag) from exc
        return False


@dataclass
class ExtensionResult:
    """Conjugators a_i ∈ G_(X_{i-1}X_i) and supersets Y_i ⊇ X_i."""

    a: list
    Y: list
    X: list
    certificate: Certificate


def prop_tz32_pipeline(backend, gs: Sequence, Xs: Sequence, *, prefix: str = "") -> ExtensionResult:
    """Extend X_0…X_4 to Y_0…Y_4 with g_i^{a_i}(Y_{i-1}) = Y_i, Y_0 ⫝_{Y_1} Y_2 and Y_4 ⫝_{Y_3} Y_2.

    Follows the six-step relocation argument; every intermediate
    independence is re-checked and failures name the step.
    """
    if len(gs) != 4 or len(Xs) != 5:
        raise InvalidInputError("need four maps and five sets")
    g1, g2, g3, g4 = (as_word(g) for g in gs)
    X = [tuple(x) for x in Xs]
    for i, g in enumerate((g1, g2, g3, g4), 1):
        if set(g.apply(X[i - 1])) != set(X[i]):
            raise HypothesisError(f"g{i} does not map X{i - 1} onto X{i}")
    P = prefix

    def need(flag, what, step):
        if not flag:
            raise LogicalFailure(f"re-verification failed: {what}", step=step)

    with _Stage("step 1"):
        X1p = _uniq(X[0] + X[1] + X[2] + X[3] + X[4])
        need(backend.ind(X[0], X1p, X[2] + X[3] + X[4]), "X0 ⫝_X1' X2X3X4", "step 1")
    with _Stage("step 2"):
        g32, g432 = Word(g3, g2), Word(g4, g3, g2)
        e = lemma_tz31_witness(backend, X[0], X1p, X1p, [g2, g32, g432], "I", name=P + "e")
        X2p, X3p, X4p = (conj(g, e).apply(X1p) for g in (g2, g32, g432))
        need(backend.ind(X[0], X1p, X2p + X3p + X4p), "X0 ⫝_X1' X2'X3'X4'", "step 2")
    with _Stage("step 3"):
        f = lemma_tz31_witness(backend, X[0] + X1p, X1p, X2p + X3p + X4p, [g1.inverse], "II", name=P + "f")
        X0p = conj(g1.inverse, f).apply(X1p)
        need(backend.ind(X0p, X1p, X2p + X3p + X4p), "X0' ⫝_X1' X2'X3'X4'", "step 3")
    h1, h2, h3, h4 = conj(g1, f), conj(g2, e), conj(g3, e), conj(g4, e)
    with _Stage("step 4"):
        # Y3 := X1'X2'X3'X4' already contains X2'X1', so X2'X1' ⫝_Y3 X4' is trivial.
        Y3 = _uniq(X1p + X2p + X3p + X4p)
        k32 = Word(h2.inverse, h3.inverse)
        a = lemma_tz31_witness(backend, X4p, Y3, Y3, [h3.inverse, k32], "I", name=P + "a")
        Y2 = conj(h3.inverse, a).apply(Y3)
        Y1 = conj(k32, a).apply(Y3)
        need(backend.ind(X4p + Y3, Y3, Y2 + Y1), "X4'Y3 ⫝_Y3 Y2Y1", "step 4")
    with _Stage("step 5"):
        b = lemma_tz31_witness(backend, X4p + Y3, Y3, Y1 + Y2, [h4], "II", name=P + "b")
        Y4 = conj(h4, b).apply(Y3)
        need(backend.ind(Y4, Y3, Y1 + Y2), "Y4 ⫝_Y3 Y1Y2", "step 5")
    with _Stage("step 6"):
        base = _uniq(X1p + X2p + X3p + X4p)
        D = _uniq(Y1 + Y2 + Y3 + Y4)
        Dp = lemma_addset_witness(backend, X0p, X1p, base, D, "I")
        sigma = identity_on(backend, base, P + "s", ((d, dp) for d, dp in zip(D, Dp) if d not in base))
        Y1, Y2, Y3, Y4 = (sigma.apply(Y) for Y in (Y1, Y2, Y3, Y4))
        need(backend.ind(Y4, Y3, Y1 + Y2), "Y4 ⫝_Y3 Y1Y2 after relocation", "step 6")
        need(backend.ind(X0p, Y1, Y2 + Y3 + Y4), "X0' ⫝_Y1 Y2Y3Y4", "step 6")
        # c must fix X0' (not just X0) for the displayed Y0 ⊇ X0' to follow.
        c = lemma_tz31_witness(backend, X0p + Y1, Y1, Y2 + Y3 + Y4, [h1.inverse], "II", name=P + "c")
        Y0 = conj(h1.inverse, c).apply(Y1)
    a_words = [Word(c, f), Word(sigma, a, e), Word(sigma, a, e), Word(sigma, b, e)]
    Y = [Y0, Y1, Y2, Y3, Y4]
    words = {f"g{i}": g for i, g in enumerate((g1, g2, g3, g4), 1)}
    words.update({f"a{i}": w for i, w in enumerate(a_words, 1)})
    sets = {f"X{i}": X[i] for i in range(5)}
    sets.update({f"Y{i}": Y[i] for i in range(5)})
    cert = _issue("extension", backend, words, sets)
    if not cert.ok:
        bad = [f for f, v in cert.facts if not v]
        raise LogicalFailure(f"extension certificate fails: {bad}", step="verify")
    return ExtensionResult(a_words, Y, X, cert)


# ---------------------------------------------------------------------- conjugate products


def lemma_tz35(backend, g, X, Y, C, x, side: str = LEFT, *, name: str = "a"):
    """a ∈ G_(XY) with g^a(x) ⫝_Y C (side L), or C ⫝_Y g^a(x) (side R).

    Needs g(X) = Y and X ⫝_Y C (L) or C ⫝_Y X (R).  Returns (a, g^a(x)).
    """
    g = as_word(g)
    X, Y, C, x = map(tuple, (X, Y, C, x))
    if set(g.apply(X)) != set(Y):
        raise HypothesisError("g does not map X onto Y")
    if not (backend.ind(X, Y, C) if side == LEFT else backend.ind(C, Y, X)):
        raise HypothesisError("X and C are not independent over Y")
    XY = _uniq(X + Y)
    if set(x) & set(XY):
        raise HypothesisError("x must avoid XY")
    w = moving_witness(backend, g, XY, backend.tp(x, XY), side)
    if w is None:
        raise BudgetExhausted("no moving witness found for the type of x")
    a1 = identity_on(backend, XY, name + "1", zip(w.a, x))
    z = conj(g, a1).apply(x)
    base = _uniq(x + XY)
    cons = [(LEFT, base, C)] if side == LEFT else [(RIGHT, base, C)]
    y = backend.realize(backend.tp(z, base), cons, avoid=(), prefer_existing=True, side=side)
    a2 = identity_on(backend, base, name + "2", zip(z, y))
    a = Word(a2, a1)
    ok = fixes(a, XY) and conj(g, a).apply(x) == y
    ok = ok and (backend.ind(y, Y, C) if side == LEFT else backend.ind(C, Y, y))
    if not ok:
        raise LogicalFailure("conjugated image fails re-verification")
    return a, y


def lemma_tz36_witness(backend, g, X, Y, x, y, *, name: str = "a"):
    """a ∈ G_(XY) with g^a(x) = y, given g(tp(x/X)) = tp(y/Y), x ⫝_X yY and y ⫝_Y X."""
    g = as_word(g)
    X, Y, x, y = map(tuple, (X, Y, x, y))
    gX = g.apply(X)
    if set(gX) != set(Y):
        raise HypothesisError("g does not map X onto Y")
    if transport(backend.tp(x, X), dict(zip(X, gX))).shape() != backend.tp(y, gX).shape():
        raise HypothesisError("g does not carry tp(x/X) to tp(y/Y)")
    if not backend.ind(x, X, y + Y):
        raise HypothesisError("x ⫝_X yY fails")
    if not backend.ind(y, Y, X):
        raise HypothesisError("y ⫝_Y X fails")
    XY = _uniq(X + Y)
    gY = g.apply(Y)
    yp = backend.realize(backend.tp(y, XY), [(LEFT, XY, gY)], prefer_existing=True)
    base2 = _uniq(XY + gY)
    w = moving_witness(backend, g, base2, backend.tp(yp, base2), RIGHT)
    if w is None:
        raise BudgetExhausted("no R-moving witness over XYg(Y)")
    b = identity_on(backend, XY, name + "b", zip(y, w.a))
    z = b.inverse.apply(g.inverse.apply(w.a))
    if not backend.ind(z, X, y + Y):
        raise LogicalFailure("relocated preimage is not independent from yY over X")
    by = _uniq(XY + y)
    if backend.tp(z, by).shape() != backend.tp(x, by).shape():
        raise LogicalFailure("stationarity step: tp(z/XYy) differs from tp(x/XYy)")
    c = identity_on(backend, by, name + "c", zip(z, x))
    a = Word(c, b.inverse)
    if not (fixes(a, XY) and conj(g, a).apply(x) == y):
        raise LogicalFailure("g^a(x) = y fails re-verification")
    return a


def prop_tz34_solve(backend, gs: Sequence, Ys: Sequence, x0, x4, *, prefix: str = "") -> Certificate:
    """Conjugators a_i ∈ G_(Y_{i-1}Y_i) with g_4^{a_4}…g_1^{a_1}(x_0) = x_4, as a certificate."""
    g1, g2, g3, g4 = (as_word(g) for g in gs)
    Y = [tuple(v) for v in Ys]
    x0, x4 = tuple(x0), tuple(x4)
    if set(x0) & set(Y[0] + Y[1]) or set(x4) & set(Y[3] + Y[4]):
        raise HypothesisError("x0 must avoid Y0Y1 and x4 must avoid Y3Y4")
    for i, g in enumerate((g1, g2, g3, g4), 1):
        if set(g.apply(Y[i - 1])) != set(Y[i]):
            raise HypothesisError(f"g{i} does not map Y{i - 1} onto Y{i}")
    if not (backend.ind(Y[0], Y[1], Y[2]) and backend.ind(Y[4], Y[3], Y[2])):
        raise HypothesisError("Y0 ⫝_Y1 Y2 and Y4 ⫝_Y3 Y2 are required")
    G = Word(g4, g3, g2, g1)
    GY0 = G.apply(Y[0])
    if transport(backend.tp(x0, Y[0]), dict(zip(Y[0], GY0))).shape() != backend.tp(x4, GY0).shape():
        raise HypothesisError("g4g3g2g1 does not carry tp(x0/Y0) to tp(x4/Y4)")
    P = prefix
    with _Stage("ends"):
        a1, x1 = lemma_tz35(backend, g1, Y[0], Y[1], Y[2], x0, LEFT, name=P + "p")
        a4i, x3 = lemma_tz35(backend, g4.inverse, Y[4], Y[3], Y[2], x4, LEFT, name=P + "q")
    with _Stage("middle"):
        Y1o = Y[1]
        Y2o = g2.apply(Y1o)
        q = transport(backend.tp(x1, Y1o), dict(zip(Y1o, Y2o)))
        x2 = backend.realize(q, [(LEFT, Y2o, _uniq(x1 + Y[1] + x3 + Y[3]))], prefer_existing=True)
        Y2b = g3.inverse.apply(Y[3])
        if transport(backend.tp(x3, Y[3]), dict(zip(Y[3], Y2b))).shape() != backend.tp(x2, Y2b).shape():
            raise LogicalFailure("g2·tp(x1/Y1) and g3⁻¹·tp(x3/Y3) disagree")
    with _Stage("second map"):
        a2 = lemma_tz36_witness(backend, g2.inverse, Y[2], Y[1], x2, x1, name=P + "r")
    with _Stage("third map"):
        a3 = lemma_tz36_witness(backend, g3, Y[2], Y[3], x2, x3, name=P + "t")
    words = {"g1": g1, "g2": g2, "g3": g3, "g4": g4, "a1": a1, "a2": a2, "a3": a3, "a4": a4i}
    sets = {f"Y{i}": Y[i] for i in range(5)}
    sets.update(x0=x0, x4=x4)
    cert = _issue("conjugate-product", backend, words, sets)
    if not cert.ok:
        raise LogicalFailure(f"product certificate fails: {[f for f, v in cert.facts if not v]}", step="verify")
    return cert


# ---------------------------------------------------------------------- density of conjugate products


@dataclass
class DensityResult:
    conjugators: list
    Y: list
    target: dict
    certificate: Certificate


@_checker("density")
def _check_density(backend, w, s, extra) -> list:
    facts = []
    for i in range(1, 5):
        dom, img = s[f"u{i}_dom"], s[f"u{i}_img"]
        facts.append((f"conjugator {i} extends u{i}", _guard(lambda: w[f"c{i}"].apply(dom) == img)))
    prod = Word(*(conj(w["g"], w[f"c{i}"]) for i in (4, 3, 2, 1)))
    facts.append(("the conjugate product extends the target", _guard(lambda: prod.apply(s["w_dom"]) == s["w_img"])))
    return facts


def density_witness(backend, g, us: Sequence[dict], target: Optional[dict] = None,
                    *, rng: Optional[random.Random] = None, prefix: str = "") -> DensityResult:
    """Conjugators c_i b_i a_i extending u_i whose conjugate product extends the target.

    ``us`` are four finite partial isomorphisms.  The product of the
    conjugates restricted to Y_0 is the map w; ``target`` must extend w
    (by default w plus one fresh point).
    """
    if len(us) != 4:
        raise InvalidInputError("need four partial isomorphisms")
    g = as_word(g)
    P = prefix
    a = [PartialAutomorphism(backend, sorted(u.items(), key=lambda xy: _sort_key(xy[0])), name=f"{P}u{i + 1}")
         for i, u in enumerate(us)]
    G = [conj(g, ai) for ai in a]
    with _Stage("choose X"):
        X0 = _uniq(x for i in range(4) for x in Word(*reversed(G[:i + 1])).inverse.apply(tuple(us[i].values())))
        Xs = [X0]
        for Gi in G:
            Xs.append(Gi.apply(Xs[-1]))
    ext = prop_tz32_pipeline(backend, G, Xs, prefix=P + "y")
    H = [conj(Gi, bi) for Gi, bi in zip(G, ext.a)]
    Y = ext.Y
    prod = Word(*reversed(H))
    w = dict(zip(Y[0], prod.apply(Y[0])))
    allY = set().union(*map(set, Y))
    if target is None:
        x = (next(v for v in backend.universe() if v not in allY),)
        q = transport(backend.tp(x, Y[0]), w)
        y = backend.realize(q, [], avoid=allY | set(x), prefer_existing=True)
        target = dict(w)
        target.update(zip(x, y))
    for k, v in w.items():
        if target.get(k) != v:
            raise HypothesisError("the target must extend the map on Y0")
    xs = tuple(k for k in target if k not in w)
    ys = tuple(target[k] for k in xs)
    if xs:
        cert34 = prop_tz34_solve(backend, H, Y, xs, ys, prefix=P + "z")
        cs = [cert34.live[f"a{i}"] for i in range(1, 5)]
    else:
        cs = [PartialAutomorphism.identity(backend, f"{P}id{i}") for i in range(1, 5)]
    conjugators = [Word(ci, bi, ai) for ci, bi, ai in zip(cs, ext.a, a)]
    words = {"g": g}
    words.update({f"c{i}": c for i, c in enumerate(conjugators, 1)})
    sets = {}
    for i, u in enumerate(us, 1):
        sets[f"u{i}_dom"], sets[f"u{i}_img"] = tuple(u), tuple(u.values())
    sets["w_dom"], sets["w_img"] = tuple(target), tuple(target.values())
    cert = _issue("density", backend, words, sets)
    if not cert.ok:
        raise LogicalFailure(f"density certificate fails: {[f for f, v in cert.facts if not v]}", step="verify")
    return DensityResult(conjugators, Y, target, cert)



# ---------------------------------------------------------------------- commutator builders


@dataclass(frozen=True)
class ScheduledType:
    """A type to be handled by a back-and-forth builder: a representative tuple over X."""

    X: tuple
    p: object

    def label(self, backend) -> str:
        enc = backend.encode
        return f"tp over [{', '.join(str(enc(x)) for x in self.X)}] shape {self.p.shape()}"


def default_schedule(backend, max_base: int = 1, window: int = 4, arity: int = 1) -> list[ScheduledType]:
    """Non-algebraic 1-types over every base of size <= ``max_base`` drawn from the first ``window`` points."""
    if arity != 1:
        raise InvalidInputError("the default schedule lists 1-types; build longer tuples explicitly")
    out = []
    pts = backend.window(window)
    for size in range(max_base + 1):
        for X in itertools.combinations(pts, size):
            for p in backend.one_point_types(X):
                if not p.is_algebraic:
                    out.append(ScheduledType(tuple(X), p))
    return out


class _Unverified(LogicalFailure):
    """A finished construction failed its own re-verification; never retried."""


def _retry(step: str, tries: int, fn):
    # search misses (a bad random choice, a budget cap) are retried; _Unverified is not
    last = None
    for _ in range(tries):
        try:
            return fn()
        except _Unverified:
            raise
        except (LogicalFailure, BudgetExhausted) as e:
            last = e
    raise BudgetExhausted(f"no success in {tries} attempts: {last}", step=step)


@dataclass
class ColourWitness:
    item: str
    a: tuple
    colours: list
    passed: bool


@dataclass
class BuildReport:
    """Per scheduled type, the verified witnesses; the schedule is stated, never 'all types'."""

    schedule: list
    witnesses: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)   # budget failures, by step
    logical: dict = field(default_factory=dict)    # constructions that failed re-verification

    @property
    def ok(self) -> bool:
        return not self.failures and not self.logical and all(w.passed for ws in self.witnesses.values() for w in ws.values())


def _moves_something(backend, g: Word) -> bool:
    # only points where the innermost map is already defined are tried, so the check
    # itself never grows g
    flat = g.flatten()
    if not flat:
        return False
    m, e = flat[-1]
    known = list(m.fwd if e > 0 else m.bwd) or (backend.window(16) if m.rule is not None else [])
    return any(_guard(lambda: g(x) != x) for x in known)


def lemma_colourrange_build(backend, g, schedule: Optional[Sequence[ScheduledType]] = None, steps: int = 1,
                            *, tries: int = 8, name: str = "h"):
    """Build h so that each scheduled type has realisations a with r(a_i, [h,g]a_j) ∈ L′.

    Forb backends only (the construction uses the ⊗ completion).  Per type
    p over X: X ⊆ dom h; fresh a with g(a) off aA; b = h(a) fresh with g(b)
    off bB; c realising h⁻¹·tp(gb/bB) ⫝-independent from ga over aA, so
    every pair (c_i, ga_j) carries a solution colour; then h: c ↦ gb.
    Back steps put X inside the range of h as well.
    """
    if not hasattr(backend, "tower"):
        raise InvalidInputError("the colour-range construction needs a Forb backend")
    g = as_word(g)
    if schedule is None:
        schedule = default_schedule(backend)
    if not _moves_something(backend, g):
        raise HypothesisError("g must be non-trivial")
    sols = set(backend.priority.codes)
    h = PartialAutomorphism(backend, name=name)
    report = BuildReport([s.label(backend) for s in schedule])
    hg = comm(h, g)
    for step in range(steps):
        for idx, item in enumerate(schedule):
            key = f"{idx}:{step}"
            h.apply(item.X)

            def attempt():
                A = tuple(h.fwd)
                a = backend.realize(item.p, [], prefer_existing=False)
                ga = tuple(g(x, avoid=set(a + A)) for x in a)
                if set(ga) & set(a + A):
                    raise LogicalFailure("g(a) meets aA")
                b = h.apply(a, fresh=True)
                bB = _uniq(b + tuple(h.fwd[x] for x in A))
                gb = tuple(g(x, avoid=set(bB)) for x in b)
                if set(gb) & set(bB):
                    raise LogicalFailure("g(b) meets bB")
                aA = _uniq(a + A)
                c = _realize_image(backend, gb, bB, {h.fwd[x]: x for x in aA}, [(LEFT, aA, ga)],
                                   avoid=set(h.fwd), prefer_existing=True)
                _assign(h, c, gb)
                moved = hg.apply(a)
                cols = [[backend.code(x, y) if x != y else -1 for y in moved] for x in a]
                ok = all(cc in sols for row in cols for cc in row)
                if not ok:
                    raise _Unverified("a cross colour left the solution set")
                return ColourWitness(item.label(backend), a, cols, ok)

            try:
                report.witnesses.setdefault(idx, {})[key] = _retry(f"type {idx} step {step}", tries, attempt)
            except BudgetExhausted as e:
                report.failures[key] = str(e)
            except _Unverified as e:
                report.logical[key] = str(e)
        # back step: every scheduled base also lies in the range
        for item in schedule:
            h.inverse.apply(item.X)
    return h, report


@dataclass
class SideWitness:
    which: str
    witness: MovingMaxWitness
    passed: bool


def _ensure_base(k: PartialAutomorphism, g: Word, X: tuple):
    # X ∪ gX ⊆ dom k and k X ⊆ g⁻¹ B.
    k.apply(X + g.apply(X))
    k.inverse.apply(g.apply(k.apply(X)))


def _realize_image(backend, y: tuple, base: tuple, phi: dict, constraints=(), avoid=(),
                   prefer_existing: bool = False) -> tuple:
    """A realisation of φ·tp(y/base); coordinates of y inside the base are forced."""
    base = _uniq(base)
    new = _uniq(v for v in y if v not in set(base))
    out = {v: phi[v] for v in y if v in phi and v in set(base)}
    if new:
        q = transport(backend.tp(new, base), phi)
        out.update(zip(new, backend.realize(q, constraints, avoid=avoid, prefer_existing=prefer_existing)))
    return tuple(out[v] for v in y)


def _assign(k, xs, ys):
    # algebraic coordinates are already forced; only new pairs are added
    for x, y in zip(xs, ys):
        if k.fwd.get(x) != y:
            k.assign(x, y)


def _step_kg(backend, g, k, item, side):
    """Steps I/II: [k,g] moves p on ``side``."""
    X, p = item.X, item.p
    A = tuple(k.fwd)
    B = k.apply(A)
    ap = backend.realize(p, [(_constraint_side(side), X, A)], avoid=set(A), prefer_existing=False)
    w = moving_witness(backend, g, A, backend.tp(ap, A), side)
    if w is None:
        raise BudgetExhausted("g has no moving witness over A")
    a, ga = w.a, w.image
    gB = g.inverse.apply(B)
    b = backend.realize(transport(backend.tp(a, A), k.fwd), [(_constraint_side(side), B, gB)],
                        avoid=set(k.bwd), prefer_existing=False)
    _assign(k, a, b)
    gb = g.apply(b)
    bB = _uniq(b + B)
    aA = _uniq(a + A)
    c = _realize_image(backend, gb, bB, {k.fwd[x]: x for x in aA}, [(_constraint_side(side), aA, ga)], avoid=set(k.fwd))
    _assign(k, c, gb)
    image = comm(k, g).apply(a)
    wit = MovingMaxWitness(side, X, a, image)
    if not wit.holds(backend):
        raise _Unverified("[k,g] does not move the witness")
    return wit


def _step_gk(backend, g, k, item, side):
    """Steps III/IV: [g,k] moves p on ``side``."""
    X, p = item.X, item.p
    A = tuple(k.fwd)
    gA = g.inverse.apply(A)
    a = backend.realize(p, [(_constraint_side(side), X, gA)], avoid=set(A), prefer_existing=False)
    B = k.apply(A)
    q = transport(backend.tp(a, A), k.fwd)
    w = moving_witness(backend, g, B, q, side)
    if w is None:
        raise BudgetExhausted("g has no moving witness over B")
    b, gb = w.a, w.image
    if set(b) & set(k.bwd):
        raise LogicalFailure("witness already in the range of k")
    _assign(k, a, b)
    ga = g.apply(a)
    aA = _uniq(a + A)
    bB = _uniq(b + B)
    c = _realize_image(backend, ga, aA, k.fwd, [(_constraint_side(side), bB, gb)], avoid=set(k.bwd))
    _assign(k, ga, c)
    image = comm(g, k).apply(a)
    wit = MovingMaxWitness(side, X, a, image)
    if not wit.holds(backend):
        raise _Unverified("[g,k] does not move the witness")
    return wit


def _constraint_side(side: str) -> str:
    """Constraint side for 'x ⫝ C' (R-moving) vs 'C ⫝ x' (L-moving)."""
    return LEFT if side == RIGHT else RIGHT


def _step_kg_inverse_witness(backend, g, k, item):
    """Second lemma, first stage: [k,g] moves p L-maximally using an L-witness of g⁻¹."""
    X, p = item.X, item.p
    A = tuple(k.fwd)
    B = k.apply(A)
    a = backend.realize(p, [(RIGHT, X, A)], avoid=set(A), prefer_existing=False)
    gB = g.inverse.apply(B)
    bp = backend.realize(transport(backend.tp(a, A), k.fwd), [(RIGHT, B, gB)],
                         avoid=set(k.bwd), prefer_existing=False)
    base = _uniq(B + gB)
    w = moving_witness(backend, g.inverse, base, backend.tp(bp, base), LEFT)
    if w is None:
        raise BudgetExhausted("g⁻¹ has no L-moving witness")
    b = w.a
    if set(b) & set(k.bwd):
        raise LogicalFailure("witness already in the range of k")
    _assign(k, a, b)
    gb = g.apply(b)
    ga = g.apply(a)
    aA = _uniq(a + A)
    bB = _uniq(b + B)
    c = _realize_image(backend, gb, bB, {k.fwd[x]: x for x in aA}, [(RIGHT, aA, ga)], avoid=set(k.fwd))
    _assign(k, c, gb)
    image = comm(k, g).apply(a)
    wit = MovingMaxWitness(LEFT, X, a, image)
    if not wit.holds(backend):
        raise _Unverified("[k,g] does not move the witness")
    return wit


def _step_gk_inverse_witness(backend, g, k, item):
    """Second lemma, second stage: [g,k] moves p L-maximally using an L-witness of g⁻¹."""
    X, p = item.X, item.p
    A = tuple(k.fwd)
    gA = g.inverse.apply(A)
    ap = backend.realize(p, [(RIGHT, X, gA)], avoid=set(A), prefer_existing=False)
    base = _uniq(gA + X)
    w = moving_witness(backend, g.inverse, base, backend.tp(ap, base), LEFT)
    if w is None:
        raise BudgetExhausted("g⁻¹ has no L-moving witness")
    a = w.a
    if set(a) & set(k.fwd):
        raise LogicalFailure("witness already in the domain of k")
    b = k.apply(a, fresh=True)
    ga = g.apply(a)
    gb = g.apply(b)
    aA = _uniq(a + A)
    bB = _uniq(b + k.apply(A))
    if set(gb) & set(k.bwd):
        raise LogicalFailure("g(b) already in the range of k")
    c = _realize_image(backend, gb, bB, {k.fwd[x]: x for x in aA}, [(LEFT, aA, ga)], avoid=set(k.fwd))
    _assign(k, c, gb)
    image = comm(g, k).apply(a)
    wit = MovingMaxWitness(LEFT, X, a, image)
    if not wit.holds(backend):
        raise _Unverified("[g,k] does not move the witness")
    return wit


_SIDES = {
    "both-sides": [("I", "[k,g] R", lambda be, g, k, it: _step_kg(be, g, k, it, RIGHT)),
                   ("II", "[k,g] L", lambda be, g, k, it: _step_kg(be, g, k, it, LEFT)),
                   ("III", "[g,k] R", lambda be, g, k, it: _step_gk(be, g, k, it, RIGHT)),
                   ("IV", "[g,k] L", lambda be, g, k, it: _step_gk(be, g, k, it, LEFT))],
    "mixed": [("I", "[k,g] R", lambda be, g, k, it: _step_kg(be, g, k, it, RIGHT)),
              ("III", "[g,k] R", lambda be, g, k, it: _step_gk(be, g, k, it, RIGHT)),
              ("second lemma, stage 1", "[k,g] L", _step_kg_inverse_witness),
              ("second lemma, stage 2", "[g,k] L", _step_gk_inverse_witness)],
}


def commutator_mover_build(backend, g, schedule: Optional[Sequence[ScheduledType]] = None,
                           variant: str = "both-sides", *, tries: int = 8, name: str = "k"):
    """Back-and-forth k so that [g,k] and its inverse [k,g] move every scheduled type both ways.

    ``both-sides`` runs Steps I–IV (g moves R- and L-maximally);
    ``mixed`` replaces II and IV by the two constructions that use L-witnesses
    of g⁻¹.  Each side's witness is re-verified on the lazily extended maps.
    """
    if variant not in _SIDES:
        raise InvalidInputError(f"variant must be one of {sorted(_SIDES)}")
    g = as_word(g)
    if schedule is None:
        schedule = default_schedule(backend)
    k = PartialAutomorphism(backend, name=name)
    report = BuildReport([s.label(backend) for s in schedule])
    for idx, item in enumerate(schedule):
        for step, which, fn in _SIDES[variant]:
            def attempt():
                _ensure_base(k, g, item.X)
                return fn(backend, g, k, item)
            try:
                wit = _retry(f"type {idx} step {step}", tries, attempt)
                report.witnesses.setdefault(idx, {})[which] = SideWitness(which, wit, wit.holds(backend))
            except BudgetExhausted as e:
                report.failures[f"{idx}:{which}"] = str(e)
            except _Unverified as e:
                report.logical[f"{idx}:{which}"] = str(e)
    return k, report


def _moves(backend, f, X, a, side) -> bool:
    img = f.apply(a)
    return backend.ind(a, X, img) if side == RIGHT else backend.ind(img, X, a)


@_checker("movers")
def _check_movers(backend, w, s, extra) -> list:
    facts = []
    for key in sorted(extra.get("witnesses", {})):
        which, side = extra["witnesses"][key]
        X, a = s[f"{key}_X"], s[f"{key}_a"]
        facts.append((f"{key}: {which} moves the witness {side}",
                      _guard(lambda: _moves(backend, w[which], X, a, side))))
    return facts


def mover_certificate(backend, g, k, report: BuildReport) -> Certificate:
    """Replayable record of every side witness in a commutator build."""
    g = as_word(g)
    words = {"[g,k]": comm(g, k), "[k,g]": comm(k, g)}
    sets, wits = {}, {}
    for idx, ws in report.witnesses.items():
        for which, sw in ws.items():
            key = f"t{idx}-{which.replace(' ', '')}"
            sets[f"{key}_X"], sets[f"{key}_a"] = sw.witness.base, sw.witness.a
            wits[key] = [which.split()[0], sw.witness.side]
    return _issue("movers", backend, words, sets, {"witnesses": wits})


@_checker("colour-range")
def _check_colour_range(backend, w, s, extra) -> list:
    sols = set(extra["solutions"])

    def in_range(a):
        moved = w["[h,g]"].apply(a)
        return all(x != y and backend.code(x, y) in sols for x in a for y in moved)

    return [(f"{key}: cross colours of a and [h,g]a are solutions", _guard(lambda: in_range(s[key])))
            for key in sorted(s)]


def colour_range_certificate(backend, g, h, report: BuildReport) -> Certificate:
    """Replayable record of every colour-range witness."""
    sets = {f"t{idx}-{n}": w.a for idx, ws in report.witnesses.items() for n, w in enumerate(ws.values())}
    return _issue("colour-range", backend, {"[h,g]": comm(h, as_word(g))}, sets,
                  {"solutions": list(backend.priority.codes)})


# ---------------------------------------------------------------------- seeded instances


def shift(backend, k, *, name: str = "g") -> PartialAutomorphism:
    """The total order automorphism x ↦ x + k of a DLO backend."""
    return PartialAutomorphism(backend, name=name, rule=lambda x: x + k, rule_inverse=lambda x: x - k)


def random_chain(backend, rng: random.Random, *, max_set: int = 2, extra: int = 2, prefix: str = "g"):
    """Four random partial automorphisms g_i and sets X_0…X_4 with g_i(X_{i−1}) = X_i."""
    universe = backend.universe()
    Xs = [tuple(rng.sample(universe, rng.randint(1, max_set)))]
    gs = []
    for i in range(4):
        dom = Xs[-1] + tuple(x for x in rng.sample(universe, extra) if x not in Xs[-1])
        g = random_partial_automorphism(backend, dom, rng, name=f"{prefix}{i + 1}")
        Xs.append(g.apply(Xs[-1]))
        gs.append(g)
    return gs, Xs


@dataclass
class ConjugateProductRun:
    extension: ExtensionResult
    certificate: Certificate
    x0: tuple
    x4: tuple


def conjugate_product_run(backend, gs: Sequence, Xs: Sequence, x0: Optional[tuple] = None,
                          rng: Optional[random.Random] = None) -> ConjugateProductRun:
    """Extend X_i to Y_i, then solve g_4^{a_4}…g_1^{a_1}(x_0) = x_4 for a singleton x_0 off every Y_i.

    x_4 realises the image type of x_0 under the conjugated product, outside every Y_i.
    """
    ext = prop_tz32_pipeline(backend, gs, Xs)
    G = [conj(g, a) for g, a in zip(gs, ext.a)]
    Y = ext.Y
    allY = set().union(*map(set, Y))
    if x0 is None:
        free = [v for v in backend.universe() if v not in allY]
        if not free:
            raise BudgetExhausted("no point outside the Y_i", step="choose x_0")
        x0 = ((rng or random.Random(0)).choice(free),)
    image = Word(*reversed(G)).apply(Y[0])
    q = transport(backend.tp(x0, Y[0]), dict(zip(Y[0], image)))
    x4 = backend.realize(q, [], avoid=allY, prefer_existing=True)
    cert = prop_tz34_solve(backend, G, Y, x0, x4)
    return ConjugateProductRun(ext, cert, tuple(x0), tuple(x4))
