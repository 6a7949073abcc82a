"""Candidate rule generation by guided beam search over rule refinements.

Starting from minimal per-action rules, the search repeatedly adds one
mode-permitted body atom at a time and keeps the refinements whose
single-rule policies best agree with a trained oracle policy on a sample
of visited states. The returned candidate set collects every rule the
search opened.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .logic import (ActionRule, Atom, GroundAtomTable, Language,
                    ModeDeclaration, Variable, canonical_key, canonicalize,
                    enumerate_substitutions, rules_to_text, substitute)
from .reasoning import LogicPolicy, RuleWeights, SmoothingParams


class AbstractionError(Exception):
    pass


SCORE_GUARD = 1e-6


@dataclass
class RefinementConfig:
    modes: list[ModeDeclaration]
    max_body_len: int = 6
    n_beam: int = 3
    t_beam: int = 3

    def __post_init__(self):
        if self.n_beam < 1 or self.t_beam < 1:
            raise AbstractionError("beam width and depth must be >= 1")
        if self.max_body_len < 1:
            raise AbstractionError("max_body_len must be >= 1")


@dataclass
class StateSample:
    """States with cached initial valuations and oracle distributions."""

    states: list
    v0: np.ndarray     # (n, G)
    dists: np.ndarray  # (n, |A|)
    partial: bool = False

    def __post_init__(self):
        if len(self.states) < 1:
            raise AbstractionError("state sample must be nonempty")
        sums = self.dists.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-6):
            raise AbstractionError("cached oracle distributions must sum to 1")

    def __len__(self):
        return len(self.states)


@dataclass
class ScoredRule:
    rule: ActionRule
    score: float
    normalization: float
    guarded: bool = False


# ---------------------------------------------------------------------------
# Refinement operator
# ---------------------------------------------------------------------------

def refine(rule: ActionRule, cfg: RefinementConfig,
           language: Language) -> list[ActionRule]:
    """All one-atom body extensions permitted by the mode declarations.

    Placemarkers: ``+`` reuses an existing variable of the datatype, ``-``
    introduces a fresh one, ``#`` enumerates the datatype's constants.
    Recall bounds the number of body atoms per predicate. Results are
    alpha-canonicalized and deduplicated; ground atoms and atoms already
    present are skipped.
    """
    if len(rule.body) >= cfg.max_body_len:
        return []
    existing = rule.variables()
    used_symbols = {v.symbol for v in existing}
    out = []
    seen = set()
    for mode in cfg.modes:
        if mode.kind != "modeb":
            continue
        count = sum(1 for a in rule.body if a.predicate == mode.predicate)
        if count >= mode.recall:
            continue
        pools = []
        for pos, (pm, dtype) in enumerate(mode.mode_dtypes):
            if pm == "+":
                pools.append([v for v in existing if v.dtype == dtype])
            elif pm == "-":
                fresh = Variable(_fresh_symbol(used_symbols, pos), dtype)
                pools.append([fresh])
            else:  # "#"
                pools.append(language.constants(dtype))
        for combo in _product(pools):
            atom = Atom(mode.predicate, tuple(combo))
            if atom.is_ground or atom in rule.body:
                continue
            refined = canonicalize(
                ActionRule(rule.head, rule.body + (atom,)))
            key = canonical_key(refined)
            if key not in seen:
                seen.add(key)
                out.append(refined)
    return out


def _fresh_symbol(used: set, salt: int) -> str:
    i = salt + 1
    while f"N{i}" in used:
        i += 1
    return f"N{i}"


def _product(pools):
    if any(len(p) == 0 for p in pools):
        return
    yield from itertools.product(*pools)


# ---------------------------------------------------------------------------
# Scoring (oracle agreement with simple-rule normalization)
# ---------------------------------------------------------------------------

def normalization(rule: ActionRule, sample: StateSample,
                  table: GroundAtomTable) -> float:
    """How often the rule's body atoms hold over the sample.

    Sums, over every grounding substitution and every sampled state, the
    product of the initial valuations of the ground body atoms.
    """
    language = table.language
    total = 0.0
    for sub in enumerate_substitutions(rule, language):
        indices = []
        ok = True
        for atom in rule.body:
            ground = substitute(atom, sub)
            if ground not in table:
                ok = False
                break
            idx = table.index(ground)
            if idx not in indices:
                indices.append(idx)
        if not ok:
            continue
        if indices:
            total += float(np.prod(sample.v0[:, indices], axis=1).sum())
        else:
            total += float(len(sample))
    return total


def score_rule(rule: ActionRule, sample: StateSample, table: GroundAtomTable,
               params: SmoothingParams | None = None) -> ScoredRule:
    """Oracle agreement of the single-rule policy, divided by normalization.

    Evaluates the policy built from the rule alone (unit weight) on every
    sampled state, dots its action distribution with the cached oracle
    distribution, sums over states, and divides by the normalization. A
    near-zero normalization returns a guarded zero score.
    """
    norm = normalization(rule, sample, table)
    if norm < SCORE_GUARD:
        return ScoredRule(rule, 0.0, norm, guarded=True)
    if params is None:
        params = SmoothingParams()
    policy = LogicPolicy(table.language, table, [rule],
                         RuleWeights(np.zeros((1, 1))), params)
    probs = np.array([policy.action_probs_from_v0(v) for v in sample.v0])
    agreement = float((probs * sample.dists).sum())
    return ScoredRule(rule, agreement / norm, norm)


# ---------------------------------------------------------------------------
# Beam search
# ---------------------------------------------------------------------------

@dataclass
class BeamResult:
    candidates: list[ActionRule]
    scores: list[ScoredRule]
    exhausted_early: bool = False
    notices: list[str] = field(default_factory=list)


def beam_search(c0: list[ActionRule], sample: StateSample,
                cfg: RefinementConfig, table: GroundAtomTable,
                guided: bool = True) -> BeamResult:
    """Top-k beam search over refinements, one beam per initial rule.

    Each iteration accumulates the current beam into the candidate set,
    refines every beam rule, scores the refinements against the oracle
    sample, and keeps the top ``n_beam``. With ``guided`` off, every
    refinement survives (the no-abstraction baseline) and scoring is
    skipped. Ties break by (score descending, rule text ascending).
    """
    if not c0:
        raise AbstractionError("initial rule set must be nonempty")
    candidates: list[ActionRule] = []
    seen: set[str] = set()
    all_scores: list[ScoredRule] = []
    notices: list[str] = []
    exhausted = False

    def open_rules(rules):
        for rule in rules:
            key = canonical_key(rule)
            if key not in seen:
                seen.add(key)
                candidates.append(rule)

    for initial in c0:
        beam = [canonicalize(initial)]
        for _ in range(cfg.t_beam):
            open_rules(beam)
            refinements = []
            ref_seen = set()
            for rule in beam:
                for ref in refine(rule, cfg, table.language):
                    key = canonical_key(ref)
                    if key not in ref_seen:
                        ref_seen.add(key)
                        refinements.append(ref)
            if not refinements:
                notices.append(
                    f"beam for {initial.head.predicate.name} exhausted early")
                exhausted = True
                break
            if guided:
                scored = [score_rule(r, sample, table) for r in refinements]
                all_scores.extend(scored)
                scored.sort(key=lambda s: (-s.score, str(s.rule)))
                beam = [s.rule for s in scored[:cfg.n_beam]]
            else:
                refinements.sort(key=str)
                beam = refinements
    return BeamResult(candidates, all_scores, exhausted, notices)


def collect_states(oracle, env, n: int, seed: int,
                   perceive_fn) -> StateSample:
    """Rolls out the (stochastic) oracle for n steps, caching everything.

    Stores each visited state with its initial valuation vector and the
    oracle's action distribution. Deterministic given the seed. An
    environment failure mid-rollout returns the partial sample flagged.
    """
    if n < 1:
        raise AbstractionError("n must be >= 1")
    rng = np.random.default_rng(seed)
    states, v0s, dists = [], [], []
    partial = False
    state = env.reset(seed)
    episode = 0
    try:
        while len(states) < n:
            probs = np.asarray(oracle.action_probs(state), dtype=float)
            states.append(state)
            v0s.append(perceive_fn(state))
            dists.append(probs)
            a = int(rng.choice(len(env.actions), p=probs))
            state, _, done = env.step(env.actions[a])
            if done:
                episode += 1
                state = env.reset(seed + episode)
    except Exception:
        if not states:
            raise
        partial = True
    return StateSample(states, np.asarray(v0s), np.asarray(dists),
                       partial=partial)


def scores_to_csv_rows(scores: list[ScoredRule]) -> list[tuple]:
    return [(str(s.rule), f"{s.score:.6g}", f"{s.normalization:.6g}")
            for s in scores]
