"""Gear-plan optimizer and cascade serving simulator.

Inputs and plans travel as the same JSON / JSONL / CSV text the command-line
tool reads and writes.
"""

import json

from ._cascadeserve import (
    Error,
    ParseError,
    UserInfeasible,
    ValidationError,
    certainty,
    constant_trace,
    evaluate_cascade,
    generate_synthetic,
    maybe_switch_gear,
    plan,
    uniform_devices,
)
from ._cascadeserve import simulate as _simulate

__all__ = [
    "Error",
    "ParseError",
    "UserInfeasible",
    "ValidationError",
    "certainty",
    "constant_trace",
    "evaluate_cascade",
    "generate_synthetic",
    "maybe_switch_gear",
    "plan",
    "simulate",
    "uniform_devices",
]


def simulate(plan_json, profiles_json, validation_jsonl, trace_csv, alpha=8.0):
    """Virtual-time replay; returns the run summary as a dict."""
    return json.loads(_simulate(plan_json, profiles_json, validation_jsonl, trace_csv, alpha))
