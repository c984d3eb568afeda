"""Mutual coherence of opinions over argument maps, exact and approximate."""

from .argmap import Argument, ArgumentMap, GenParams, generate, levels, to_cnf
from .coherence import CoherenceEngine, confirmation, doj, mut_coh, one_coh
from .counter import ModelCounter, count_models
from .heuristics import METHODS, approximate_one_coh
from .logic import Clause, CnfFormula, Literal, Position, emit_dimacs, parse_dimacs

__all__ = [
    "Argument",
    "ArgumentMap",
    "Clause",
    "CnfFormula",
    "CoherenceEngine",
    "GenParams",
    "Literal",
    "METHODS",
    "ModelCounter",
    "Position",
    "approximate_one_coh",
    "confirmation",
    "count_models",
    "doj",
    "emit_dimacs",
    "generate",
    "levels",
    "mut_coh",
    "one_coh",
    "parse_dimacs",
    "to_cnf",
]
