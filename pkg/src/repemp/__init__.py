"""Representational empowerment over symbolic melody-program libraries."""

from .dsl import (
    Context, Equivalence, Fingerprinter, Library, Melody, Note, ParamType, ProbeSet, Program,
    evaluate, fingerprint, library_equal, parse_program, parse_programs,
)
from .empowerment import (
    Channel, EmpowermentReport, Policy, capacity, effective_outcomes, enumerate_channel,
    mi_decomposition, rep_emp,
)
from .ops import (
    Operation, OperationTables, OutcomeDistribution, apply_abstraction, apply_crossover,
    apply_mutation, apply_selection, outcome_distribution,
)
from .scenario import Scenario, ScenarioError, data_path, load_scenario

__version__ = "0.1.0"

__all__ = [
    "Context", "Equivalence", "Fingerprinter", "Library", "Melody", "Note", "ParamType",
    "ProbeSet", "Program", "evaluate", "fingerprint", "library_equal", "parse_program",
    "parse_programs", "Channel", "EmpowermentReport", "Policy", "capacity", "effective_outcomes",
    "enumerate_channel", "mi_decomposition", "rep_emp", "Operation", "OperationTables",
    "OutcomeDistribution", "apply_abstraction", "apply_crossover", "apply_mutation",
    "apply_selection", "outcome_distribution", "Scenario", "ScenarioError", "data_path",
    "load_scenario",
]
