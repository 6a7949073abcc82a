"""Rewriting trained policies for environment variants."""

from __future__ import annotations

from ..logic import ActionRule, Atom, LanguageError, Predicate


def swap_predicate(policy, from_pred: Predicate, to_pred: Predicate):
    """Rewrite every body occurrence of one state predicate to another.

    Weights are untouched; the returned policy is recompiled. The two
    predicates must agree on arity and datatypes.
    """
    if from_pred.dtypes != to_pred.dtypes:
        raise LanguageError(
            f"cannot swap {from_pred} for {to_pred}: datatype signatures differ"
        )
    rules = []
    for rule in policy.rules:
        body = tuple(
            Atom(to_pred, a.terms) if a.predicate == from_pred else a
            for a in rule.body
        )
        rules.append(ActionRule(rule.head, body, weight=rule.weight))
    return policy.with_rules(rules, policy.weights)
