"""Shared fixtures: languages, tables, and small reference policies."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rulerl.assets import load_language, load_rules
from rulerl.logic import build_atom_table, parse_rule

from oracles import small_language


@pytest.fixture(scope="session")
def synthetic_language():
    return small_language(n_objects=2)


@pytest.fixture(scope="session")
def synthetic_table(synthetic_language):
    return build_atom_table(synthetic_language)


@pytest.fixture(scope="session")
def jump_rule(synthetic_language):
    return parse_rule(
        "jump(agent):-type(O1,agent),type(O2,enemy),closeby(O1,O2).",
        synthetic_language,
    )


@pytest.fixture(scope="session")
def getout_language():
    return load_language("getout")


@pytest.fixture(scope="session")
def getout_table(getout_language):
    return build_atom_table(getout_language)


@pytest.fixture(scope="session")
def getout_policy_rules(getout_language):
    return load_rules("getout", "policy.rules", getout_language)
