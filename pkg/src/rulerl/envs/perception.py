"""Mapping object-centric states to initial valuation vectors.

Each environment exposes a dict of soft predicate evaluators; ``perceive``
walks the state-atom block of a ground-atom table and fills the valuation.
Action atoms always start at zero, falsum at 0 and verum at 1. Atoms that
mention a dead or absent entity evaluate to zero.
"""

from __future__ import annotations

import math

import numpy as np

from .base import EnvError


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


# Relational comparisons (orientation, relative size) are scaled so they
# never saturate to exactly 1.0 in floating point. Proximity predicates stay
# unscaled, which lets a fully satisfied proximity-gated rule outrank any
# orientation-gated one; without the margin the two saturate identically and
# greedy action selection cannot prefer the time-critical rule.
RELATION_CAP = 0.98


def relation(z: float) -> float:
    return RELATION_CAP * sigmoid(z)


def perceive(state, table, evaluators) -> np.ndarray:
    v = np.zeros(table.g)
    v[1] = 1.0
    for offset, atom in enumerate(table.state_atoms()):
        fn = evaluators.get(atom.predicate.name)
        if fn is None:
            raise EnvError(
                f"no evaluator for state predicate {atom.predicate.name}"
            )
        v[table.state_start + offset] = fn(state, [t.symbol for t in atom.terms])
    return v


def make_perceiver(env, table):
    """Bind an environment's evaluators to a table; returns state -> v0."""
    evaluators = env.evaluators()
    for pred in table.language.state_predicates:
        if pred.name not in evaluators:
            raise EnvError(
                f"{env.name} has no evaluator for state predicate {pred.name}"
            )
    return lambda state: perceive(state, table, evaluators)
