"""Homogeneous structures with a stationary weak independence relation.

Forbidden-triangle classes of 2-multi-tournaments, their prioritised
semi-free amalgamation, finite approximations of the Fraïssé limit, audits
of the independence axioms, and the constructive steps behind conjugate
products and commutator builders, each emitting a replayable certificate.
"""

from .amalgamation import (AmalgamProblem, PriorityOrder, check_prioritised_class, classify,
                           condition1_check, free_amalgam, maincond_check, prioritised_amalgam)
from .core import CompleteStructure, Language, TrianglePattern, TriangleSet, canonical_form, enumerate_forb
from .errors import BudgetExhausted, HomogenError, InvalidInputError, LogicalFailure, ResourceLimitError
from .fraisse import SaturationBudget, Tower, build_tower, realize_left, realize_right, tp
from .presets import cherlin
from .swir import AuditBounds, DLOBackend, ForbLimitBackend, audit_all, audit_axiom

__version__ = "0.1.0"

__all__ = [
    "AmalgamProblem", "AuditBounds", "BudgetExhausted", "CompleteStructure", "DLOBackend", "ForbLimitBackend",
    "HomogenError", "InvalidInputError", "Language", "LogicalFailure", "PriorityOrder", "ResourceLimitError",
    "SaturationBudget", "Tower", "TrianglePattern", "TriangleSet", "audit_all", "audit_axiom", "build_tower",
    "canonical_form", "check_prioritised_class", "cherlin", "classify", "condition1_check", "enumerate_forb",
    "free_amalgam", "maincond_check", "prioritised_amalgam", "realize_left", "realize_right", "tp",
]
