"""Python access to the mlve library and CLI."""

import json

from ._mlve import (
    REPORT_SCHEMA,
    InvariantError,
    a1,
    a2,
    bell_number,
    cancellation_shared,
    count_trees,
    count_two_level_trees,
    delta_m1,
    delta_m2,
    forest_formula_mismatches,
    q_slice_stats,
)
from . import _mlve


def run(*args):
    """Run a CLI command. Returns (exit_code, report); report is None unless JSON was written."""
    code, out, err = _mlve.run([str(a) for a in args])
    try:
        report = json.loads(out) if out else None
    except json.JSONDecodeError:
        report = None
    return code, report


def classify(graph):
    return _mlve.classify(json.dumps(graph))


def library_graph(name):
    return json.loads(_mlve.library_graph(name))


def secure(diagram, max_nodes=2000000):
    return json.loads(_mlve.secure(json.dumps(diagram), max_nodes))


def spare_check(graph):
    return json.loads(_mlve.spare_check(json.dumps(graph)))


__all__ = [
    "REPORT_SCHEMA",
    "InvariantError",
    "a1",
    "a2",
    "bell_number",
    "cancellation_shared",
    "classify",
    "count_trees",
    "count_two_level_trees",
    "delta_m1",
    "delta_m2",
    "forest_formula_mismatches",
    "library_graph",
    "q_slice_stats",
    "run",
    "secure",
    "spare_check",
]
