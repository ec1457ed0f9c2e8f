"""Cherlin's asymmetric forbidden-triangle lists and the standard amalgam fixtures."""

from .core import CompleteStructure, Language, TriangleSet

CHERLIN = {
    8: ["G+ G- G+", "R+ G- G+"],
    9: ["G+ G+ G+", "R+ G- G+"],
    10: ["G+ G+ G+", "G+ G- G+", "R+ G- G+"],
    11: ["R+ R- R+", "G+ G+ G+", "G+ G- G+", "G+ R+ R+", "G+ R- R-"],
    12: ["R+ R- R+", "G+ G+ G+", "R+ G- G+", "G+ R+ R+", "G+ R- R-", "G+ R+ R-"],
}

# Vertex ids used by the fixture problems below.
B, A1, A2, C = 0, 1, 2, 3


def cherlin_language() -> Language:
    return Language.two_asymmetric("R", "G")


def cherlin(number: int, language: Language | None = None) -> TriangleSet:
    if number not in CHERLIN:
        raise KeyError(f"no preset cherlin-{number}; choose from {sorted(CHERLIN)}")
    return TriangleSet(language or cherlin_language(), CHERLIN[number], name=f"cherlin-{number}")


def preset(name: str, language: Language | None = None) -> TriangleSet:
    """Resolve ``cherlin-N`` (or plain ``N``) to its triangle set."""
    key = name.lower().removeprefix("cherlin-").removeprefix("#")
    return cherlin(int(key), language)


def _problem(edges_a, edges_c):
    from .amalgamation import AmalgamProblem

    lang = cherlin_language()
    A = CompleteStructure.from_edges(lang, (B, A1, A2), edges_a)
    Cs = CompleteStructure.from_edges(lang, (B, C), edges_c)
    return AmalgamProblem(A, Cs, (B,))


def worked_example_8():
    """Amalgamate a1 a2 b with b c over b; b->a1, a2->b, a2->a1, c->b all G."""
    return _problem({(B, A1): "G+", (A2, B): "G+", (A2, A1): "G+"}, {(C, B): "G+"})


def figure_left():
    """Left failure figure: b->a1 R, a2->b G, a2->a1 G, c->b G."""
    return _problem({(B, A1): "R+", (A2, B): "G+", (A2, A1): "G+"}, {(C, B): "G+"})


def figure_right():
    """Right failure figure: a1->b R, b->a2 R, a2->a1 G, b->c G."""
    return _problem({(A1, B): "R+", (B, A2): "R+", (A2, A1): "G+"}, {(B, C): "G+"})
