"""Explicit-state refinement checking for guarded-event machines.

Typical use::

    from ebfdr import load_machine, explore, LabelMap, check_failure_divergence

    a, c = load_machine("corpus/vending_m0.ebm"), load_machine("corpus/vending_m1.ebm")
    verdict = check_failure_divergence(explore(a), explore(c), LabelMap.from_machines(a, c))
"""
from .model import (
    BoolDomain, EnumDomain, IntRange, LinkError, Machine, SpecificationError,
    build_refinement_link, validate_machine,
)
from .parser import ParseError, load_machine, parse_machine, pretty_print
from .refinement import (
    FAILS, REFINES, VERDICT_SCHEMA, LabelMap, NondeterministicAbstractionWarning, Verdict,
    abs_refusal, check_failure_divergence, check_trace_refinement, is_event_deterministic,
    psi, tau,
)
from .statespace import (
    BoundExceeded, DomainViolation, EventLabel, StateSpace, Trace, divergent_states,
    enabled, explore, export_dot, failures, refusal, stable_states,
)

__version__ = "0.1.0"

__all__ = [
    "BoolDomain", "EnumDomain", "IntRange", "LinkError", "Machine", "SpecificationError",
    "build_refinement_link", "validate_machine", "ParseError", "load_machine",
    "parse_machine", "pretty_print", "FAILS", "REFINES", "VERDICT_SCHEMA", "LabelMap",
    "NondeterministicAbstractionWarning", "Verdict", "abs_refusal",
    "check_failure_divergence", "check_trace_refinement", "is_event_deterministic",
    "psi", "tau", "BoundExceeded", "DomainViolation", "EventLabel", "StateSpace", "Trace",
    "divergent_states", "enabled", "explore", "export_dot", "failures", "refusal",
    "stable_states",
]
