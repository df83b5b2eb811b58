"""Generated Jacobian equation toolkit."""

import json

from ._core import (
    Generator,
    GjekitError,
    builtin_ids,
    cost,
    cost_ids,
    monge_ampere,
    perturbed,
)
from . import _core

__all__ = [
    "Generator",
    "GjekitError",
    "builtin_ids",
    "certify",
    "cost",
    "cost_ids",
    "generator",
    "list_builtins",
    "monge_ampere",
    "perturbed",
    "run",
    "schema",
    "solve",
    "validate_config",
]


def generator(block):
    """Generator from a config `generator` block."""
    return _core._generator_from_json(json.dumps(block))


def certify(gen, samples=10000, seed=1):
    """Structure-condition report as a dict."""
    return json.loads(_core._certify(gen, samples, seed))


def list_builtins(samples=2000, seed=1):
    return json.loads(_core._list_builtins(samples, seed))


def schema():
    return json.loads(_core._schema())


def validate_config(config):
    _core._validate_config(json.dumps(config))


def run(command, config, out_dir, seed=None):
    """Runs one CLI command; returns (exit_code, report)."""
    code, report = _core._run(command, json.dumps(config), str(out_dir), seed)
    return code, json.loads(report)


def solve(config, seed=None):
    """Solves the problem in the `generator`, `grid` and `solve` blocks."""
    return json.loads(_core._solve(json.dumps(config), seed))
