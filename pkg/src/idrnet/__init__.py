"""Interdependency modelling for smart grids: ternary IDRs, cascades,
K-most-vulnerable-entity search and ILP export."""
from .cascade import CascadeTrace, DamageMetrics, UnknownEntityError, damage, initial_state, run_cascade, step
from .network import Diagnostic, EntityClass, JointNetwork, NetworkError, build_network, serialize_network, validate
from .parser import parse_expr, parse_network
from .ternary import (
    FAILED,
    FULL,
    REDUCED,
    Dialect,
    EvalTrace,
    MaxOr,
    MinAnd,
    NewXor,
    Ref,
    eval_expr,
    eval_trace,
    max_or,
    min_and,
    new_xor,
    render,
)

__all__ = [
    "CascadeTrace", "DamageMetrics", "UnknownEntityError", "damage", "initial_state", "run_cascade", "step",
    "Diagnostic", "EntityClass", "JointNetwork", "NetworkError", "build_network", "serialize_network", "validate",
    "parse_expr", "parse_network",
    "FAILED", "FULL", "REDUCED", "Dialect", "EvalTrace", "MaxOr", "MinAnd", "NewXor", "Ref",
    "eval_expr", "eval_trace", "max_or", "min_and", "new_xor", "render",
]

__version__ = "0.1.0"
