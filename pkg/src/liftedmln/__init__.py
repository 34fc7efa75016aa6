"""Lifted weight learning for Markov logic networks with two-variable formulas."""

from .logic import (ModelSpec, ParseError, Vocabulary, WeightedFormula, World, formula_statistic,
                    injective_count, load_database, load_model, parse_database, parse_formula,
                    parse_model, stat_vector)
from .learner import (InfeasibleStatistics, LearnReport, ZeroInteriority, learn)
from .polytope import Polytope, build_polytope, interiority, membership
from .wfomc import (UnsatisfiableTheory, lifted_expectations, lifted_wfomc, lifted_z,
                    log_world_count)

__version__ = "0.1.0"

__all__ = [
    "ModelSpec", "ParseError", "Vocabulary", "WeightedFormula", "World", "formula_statistic",
    "injective_count", "load_database", "load_model", "parse_database", "parse_formula",
    "parse_model", "stat_vector", "InfeasibleStatistics", "LearnReport", "ZeroInteriority",
    "learn", "Polytope", "build_polytope", "interiority", "membership", "UnsatisfiableTheory",
    "lifted_expectations", "lifted_wfomc", "lifted_z", "log_world_count",
]
