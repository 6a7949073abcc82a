"""Differentiable forward reasoning over weighted action rules.

Rules are compiled once into an integer *index tensor* I of shape
(C, G, S, L): for rule i, derivable ground atom j and grounding k, row
I[i, j, k, :] lists the indices of the ground body atoms whose valuations are
multiplied together.  Non-derivable rows point at falsum (index 0) so their
product vanishes; padding slots beyond a rule's body length point at verum
(index 1) so the product is unaffected.

Reasoning is a fixed pipeline of gather, product, smooth-or and weighted
mixing, so gradients are computed by a small hand-rolled reverse pass over a
recorded trace rather than a generic autodiff graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .logic import (
    ActionRule,
    GroundAtomTable,
    Language,
    enumerate_substitutions,
    ground_rule,
    parse_rule,
)


class ReasoningError(RuntimeError):
    pass


@dataclass
class SmoothingParams:
    gamma_reason: float = 0.01
    gamma_action: float = 0.01
    steps: int = 1
    empty_action_value: float = 0.0  # score for actions with no action atoms

    def __post_init__(self):
        if self.gamma_reason <= 0 or self.gamma_action <= 0:
            raise ValueError("smoothing parameters must be positive")
        if self.steps < 1:
            raise ValueError("reasoning steps must be >= 1")


@dataclass
class RuleWeights:
    """M unconstrained weight vectors over C candidate rules."""

    raw: np.ndarray  # (M, C)

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        if self.raw.ndim != 2:
            raise ValueError("rule weights must be an M x C matrix")

    @property
    def m(self) -> int:
        return self.raw.shape[0]

    @property
    def c(self) -> int:
        return self.raw.shape[1]

    def softmax(self) -> np.ndarray:
        z = self.raw - self.raw.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    @classmethod
    def one_hot(cls, selected: list[int], c: int, scale: float = 100.0) -> "RuleWeights":
        raw = np.zeros((len(selected), c))
        for m, i in enumerate(selected):
            raw[m, i] = scale
        return cls(raw)


def softor(xs, gamma: float) -> float:
    """Smooth disjunction of values in [0, 1], clamped to [0, 1].

    Scaled log-sum-exp with a zero-identity correction: entries equal to 0
    act as the neutral element (softor(x, 0) == x exactly), which keeps
    underivable atoms at exactly zero through repeated reasoning steps.  The
    raw value stays within [max(xs), max(xs) + gamma*ln(n)].
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.size == 0:
        raise ValueError("softor needs at least one input")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return float(np.minimum(_softor_raw(xs[None, :], gamma, axis=1)[0], 1.0))


def _softor_raw(x: np.ndarray, gamma: float, axis: int) -> np.ndarray:
    """Unclamped smooth-or along one axis (see :func:`softor`)."""
    n = x.shape[axis]
    m = x.max(axis=axis, keepdims=True)
    s = np.exp((x - m) / gamma).sum(axis=axis, keepdims=True)
    arg = s - (n - 1) * np.exp(-m / gamma)
    # arg >= 1 whenever all inputs are >= 0; guard tiny float dips anyway.
    np.maximum(arg, 1e-300, out=arg)
    return np.squeeze(m + gamma * np.log(arg), axis=axis)


def _softor_weights(x: np.ndarray, gamma: float, axis: int) -> np.ndarray:
    """d(raw softor)/dx along ``axis`` (softmax-of-inputs style weighting)."""
    n = x.shape[axis]
    m = x.max(axis=axis, keepdims=True)
    e = np.exp((x - m) / gamma)
    arg = e.sum(axis=axis, keepdims=True) - (n - 1) * np.exp(-m / gamma)
    np.maximum(arg, 1e-300, out=arg)
    return e / arg


def logsumexp_scaled(x: np.ndarray, gamma: float, axis: int) -> np.ndarray:
    """Plain gamma * log(sum(exp(x / gamma))) along an axis (no correction)."""
    m = x.max(axis=axis, keepdims=True)
    s = np.exp((x - m) / gamma).sum(axis=axis, keepdims=True)
    return np.squeeze(m + gamma * np.log(s), axis=axis)


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

@dataclass
class IndexTensor:
    entries: np.ndarray  # (C, G, S, L) integer indices into the atom table
    body_lengths: list[int]
    sub_counts: list[int]

    @property
    def c(self) -> int:
        return self.entries.shape[0]

    @property
    def g(self) -> int:
        return self.entries.shape[1]

    @property
    def s(self) -> int:
        return self.entries.shape[2]

    @property
    def l(self) -> int:
        return self.entries.shape[3]


def build_index_tensor(
    rules: list[ActionRule],
    table: GroundAtomTable,
    max_body_len: int | None = None,
    max_substitutions: int | None = None,
    distinct_objects: bool = True,
) -> IndexTensor:
    """Compile rules into the (C, G, S, L) body-atom index tensor."""
    if not rules:
        raise ReasoningError("cannot compile an empty rule set")
    language = table.language
    body_lengths = [len(r.body) for r in rules]
    l_dim = max(max(body_lengths), 1)
    if max_body_len is not None and l_dim > max_body_len:
        raise ReasoningError(
            f"rule body length {l_dim} exceeds configured maximum {max_body_len}"
        )
    subs_per_rule = [
        enumerate_substitutions(r, language, distinct_objects=distinct_objects)
        for r in rules
    ]
    sub_counts = [len(s) for s in subs_per_rule]
    s_dim = max(max(sub_counts), 1)
    if max_substitutions is not None and s_dim > max_substitutions:
        raise ReasoningError(
            f"substitution count {s_dim} exceeds configured maximum {max_substitutions}"
        )
    entries = np.zeros((len(rules), table.g, s_dim, l_dim), dtype=np.int64)
    for i, (rule, subs) in enumerate(zip(rules, subs_per_rule)):
        for k, sub in enumerate(subs):
            ground = ground_rule(rule, sub)
            j = table.index(ground.head)
            row = [table.index(atom) for atom in ground.body]
            row += [1] * (l_dim - len(row))  # pad with verum
            entries[i, j, k, :] = row
    return IndexTensor(entries, body_lengths, sub_counts)


@dataclass
class ActionMap:
    """Maps each actual action to the indices of its action atoms within v_A."""

    actions: list[str]
    atom_indices: list[np.ndarray]  # per action, indices into the v_A slice

    @classmethod
    def from_table(cls, table: GroundAtomTable) -> "ActionMap":
        language = table.language
        if not language.actions:
            raise ReasoningError("language declares no actual actions")
        buckets: dict[str, list[int]] = {a: [] for a in language.actions}
        for offset, atom in enumerate(table.action_atoms()):
            action = language.action_of.get(atom.predicate.name)
            if action is None:
                raise ReasoningError(
                    f"action predicate {atom.predicate.name} has no actual action"
                )
            buckets[action].append(offset)
        return cls(
            list(language.actions),
            [np.asarray(buckets[a], dtype=np.int64) for a in language.actions],
        )

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def index(self, action: str) -> int:
        return self.actions.index(action)


# ---------------------------------------------------------------------------
# Forward reasoning
# ---------------------------------------------------------------------------

@dataclass
class ForwardTrace:
    """Per-stage activations of one (unbatched) forward pass."""

    v0: np.ndarray
    steps: list[dict] = field(default_factory=list)
    v_final: np.ndarray | None = None
    v_action: np.ndarray | None = None
    w_star: np.ndarray | None = None
    probs: np.ndarray | None = None
    action_values: np.ndarray | None = None


def init_valuation(table: GroundAtomTable, batch: int | None = None) -> np.ndarray:
    """All-zero valuation with the falsum/verum slots pinned."""
    if batch is None:
        v = np.zeros(table.g)
    else:
        v = np.zeros((batch, table.g))
    v[..., 1] = 1.0
    return v


def _sanitize(v: np.ndarray) -> np.ndarray:
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    v[..., 0] = 0.0
    v[..., 1] = 1.0
    return v


def _leave_one_out(gat: np.ndarray) -> np.ndarray:
    """Products over the L axis with each position left out (robust to zeros)."""
    l_dim = gat.shape[-1]
    out = np.empty_like(gat)
    for l in range(l_dim):
        rest = np.delete(gat, l, axis=-1)
        out[..., l] = rest.prod(axis=-1) if rest.shape[-1] else 1.0
    return out


def forward_reason(
    v0: np.ndarray,
    tensor: IndexTensor,
    weights: RuleWeights,
    params: SmoothingParams,
    g_action: int,
    record_trace: bool = False,
    chunk: int = 256,
) -> tuple[np.ndarray, np.ndarray, ForwardTrace | None]:
    """T-step differentiable forward chaining.

    Accepts a (G,) or (B, G) valuation and returns (v_T, v_A, trace); the
    trace is recorded only for unbatched input.  Raises on NaNs or shape
    mismatch.
    """
    single = np.ndim(v0) == 1
    v = _sanitize(np.atleast_2d(v0))
    if v.shape[1] != tensor.g:
        raise ReasoningError(
            f"valuation length {v.shape[1]} does not match G={tensor.g}"
        )
    if weights.c != tensor.c:
        raise ReasoningError(
            f"weight matrix has C={weights.c}, index tensor has C={tensor.c}"
        )
    if record_trace and not single:
        raise ReasoningError("trace recording supports unbatched input only")
    b_size = v.shape[0]
    if b_size > chunk and not record_trace:
        parts = [
            forward_reason(v[i:i + chunk], tensor, weights, params, g_action)
            for i in range(0, b_size, chunk)
        ]
        v_t = np.concatenate([p[0] for p in parts])
        v_a = np.concatenate([p[1] for p in parts])
        return v_t, v_a, None

    gamma = params.gamma_reason
    w_star = weights.softmax()
    trace = ForwardTrace(v0=v[0].copy(), w_star=w_star) if record_trace else None
    for _ in range(params.steps):
        gat = v[:, tensor.entries]  # (B, C, G, S, L)
        b = gat.prod(axis=4)  # (B, C, G, S)
        c_raw = _softor_raw(b, gamma, axis=3)  # (B, C, G)
        c = np.minimum(c_raw, 1.0)
        h = np.einsum("mc,bcg->bmg", w_star, c)  # (B, M, G)
        r_raw = _softor_raw(h, gamma, axis=1)  # (B, G)
        r = np.minimum(r_raw, 1.0)
        stacked = np.stack([r, v], axis=1)  # (B, 2, G)
        v_raw = _softor_raw(stacked, gamma, axis=1)
        v_new = _sanitize(np.minimum(v_raw, 1.0))
        if trace is not None:
            trace.steps.append(
                dict(v_in=v[0].copy(), gat=gat[0], b=b[0], c_raw=c_raw[0],
                     c=c[0], h=h[0], r_raw=r_raw[0], r=r[0], v_raw=v_raw[0])
            )
        v = v_new
    if np.isnan(v).any():
        raise ReasoningError("NaN encountered during forward reasoning")
    v_a = v[:, 2:2 + g_action]
    if trace is not None:
        trace.v_final = v[0].copy()
        trace.v_action = v_a[0].copy()
    if single:
        return v[0], v_a[0], trace
    return v, v_a, trace


def action_distribution(
    v_a: np.ndarray,
    amap: ActionMap,
    params: SmoothingParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-action smooth-max scores and their softmax distribution.

    Returns (values, probabilities); accepts (G_A,) or (B, G_A) input.
    """
    if amap.n_actions == 0:
        raise ReasoningError("empty action set")
    single = np.ndim(v_a) == 1
    v_a = np.atleast_2d(np.asarray(v_a, dtype=np.float64))
    vals = np.empty((v_a.shape[0], amap.n_actions))
    for a, idx in enumerate(amap.atom_indices):
        if len(idx) == 0:
            vals[:, a] = params.empty_action_value
        else:
            vals[:, a] = logsumexp_scaled(v_a[:, idx], params.gamma_action, axis=1)
    z = vals - vals.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    if single:
        return vals[0], probs[0]
    return vals, probs


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _backprop_steps(
    trace: ForwardTrace,
    tensor: IndexTensor,
    gamma: float,
    d_v_final: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse the T reasoning steps; returns (d_w_star, d_v0)."""
    w_star = trace.w_star
    d_v = d_v_final.copy()
    d_v[0] = 0.0
    d_v[1] = 0.0
    d_w_star = np.zeros_like(w_star)
    for step in reversed(trace.steps):
        d_v_raw = d_v * (step["v_raw"] <= 1.0)
        stacked = np.stack([step["r"], step["v_in"]], axis=0)  # (2, G)
        sw = _softor_weights(stacked, gamma, axis=0)
        d_r = d_v_raw * sw[0]
        d_v = d_v_raw * sw[1]
        d_r_raw = d_r * (step["r_raw"] <= 1.0)
        hw = _softor_weights(step["h"], gamma, axis=0)  # (M, G)
        d_h = d_r_raw[None, :] * hw
        d_w_star += d_h @ step["c"].T  # (M, C)
        d_c = w_star.T @ d_h  # (C, G)
        d_c_raw = d_c * (step["c_raw"] <= 1.0)
        bw = _softor_weights(step["b"], gamma, axis=2)  # (C, G, S)
        d_b = d_c_raw[:, :, None] * bw
        d_gat = d_b[..., None] * _leave_one_out(step["gat"])
        np.add.at(d_v, tensor.entries, d_gat)
        d_v[0] = 0.0
        d_v[1] = 0.0
    return d_w_star, d_v


def backward_pass(
    trace: ForwardTrace,
    tensor: IndexTensor,
    weights: RuleWeights,
    amap: ActionMap,
    params: SmoothingParams,
    action_index: int | None = None,
    want_jacobian: bool = True,
) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Analytic gradients of one traced forward pass.

    Returns ``(grad_w, grad_v0)`` where ``grad_w`` is d ln pi(a|s) / d W for
    the chosen action (``None`` when ``action_index`` is not given) and
    ``grad_v0`` is the (G_A, G) Jacobian d v_A / d v0 of the pre-action-softmax
    action-atom valuations (``None`` when ``want_jacobian`` is false; the
    Jacobian needs one reverse sweep per action atom, which training loops
    that only use ``grad_w`` should skip).
    """
    if trace is None or trace.v_final is None:
        raise ReasoningError("forward trace missing or incomplete")
    gamma = params.gamma_reason
    g = trace.v0.shape[0]
    g_action = trace.v_action.shape[0]

    jac = None
    if want_jacobian:
        jac = np.zeros((g_action, g))
        for j in range(g_action):
            seed = np.zeros(g)
            seed[2 + j] = 1.0
            _, d_v0 = _backprop_steps(trace, tensor, gamma, seed)
            jac[j] = d_v0

    grad_w = None
    if action_index is not None:
        vals, probs = action_distribution(trace.v_action, amap, params)
        d_vals = -probs
        d_vals[action_index] += 1.0
        d_va = np.zeros(g_action)
        for a, idx in enumerate(amap.atom_indices):
            if len(idx) == 0:
                continue
            x = trace.v_action[idx] / params.gamma_action
            e = np.exp(x - x.max())
            d_va[idx] += d_vals[a] * e / e.sum()
        seed = np.zeros(g)
        seed[2:2 + g_action] = d_va
        d_w_star, _ = _backprop_steps(trace, tensor, gamma, seed)
        w_star = trace.w_star
        inner = (d_w_star * w_star).sum(axis=1, keepdims=True)
        grad_w = w_star * (d_w_star - inner)
    return grad_w, jac


# ---------------------------------------------------------------------------
# Logic policy
# ---------------------------------------------------------------------------

class LogicPolicy:
    """A differentiable policy: weighted action rules over a ground-atom table."""

    def __init__(
        self,
        language: Language,
        table: GroundAtomTable,
        rules: list[ActionRule],
        weights: RuleWeights,
        params: SmoothingParams | None = None,
        perceive_fn=None,
    ):
        self.language = language
        self.table = table
        self.rules = list(rules)
        self.weights = weights
        self.params = params or SmoothingParams()
        self.tensor = build_index_tensor(self.rules, table)
        self.action_map = ActionMap.from_table(table)
        self.perceive_fn = perceive_fn

    @property
    def actions(self) -> list[str]:
        return self.action_map.actions

    def reason(self, v0: np.ndarray, record_trace: bool = False):
        return forward_reason(
            v0, self.tensor, self.weights, self.params,
            self.table.g_action, record_trace=record_trace,
        )

    def action_probs_from_v0(self, v0: np.ndarray) -> np.ndarray:
        _, v_a, _ = self.reason(v0)
        _, probs = action_distribution(v_a, self.action_map, self.params)
        return probs

    def perceive(self, state) -> np.ndarray:
        if self.perceive_fn is None:
            raise ReasoningError("no perception function attached to this policy")
        return self.perceive_fn(state)

    def action_probs(self, state) -> np.ndarray:
        return self.action_probs_from_v0(self.perceive(state))

    def gradients(self, trace: ForwardTrace, action_index: int | None = None,
                  want_jacobian: bool = True):
        return backward_pass(trace, self.tensor, self.weights,
                             self.action_map, self.params,
                             action_index=action_index,
                             want_jacobian=want_jacobian)

    def with_rules(self, rules: list[ActionRule], weights: RuleWeights) -> "LogicPolicy":
        return LogicPolicy(self.language, self.table, rules, weights,
                           self.params, self.perceive_fn)


def weights_from_rule_annotations(rules: list[ActionRule]) -> RuleWeights:
    """Reconstruct an M=C weight matrix from per-rule printed weights.

    Each printed weight w is read as the softmax mass the corresponding slot
    puts on its rule, with the remainder spread uniformly over the others.
    Unannotated rules get a one-hot slot.
    """
    c = len(rules)
    raw = np.zeros((c, c))
    for m, rule in enumerate(rules):
        w = rule.weight if rule.weight is not None else 0.999
        w = min(max(w, 1e-4), 1 - 1e-4)
        if c > 1:
            raw[m, m] = np.log(w / (1 - w) * (c - 1))
    return RuleWeights(raw)


def input_attribution(policy: LogicPolicy, v0: np.ndarray,
                      action_index: int):
    """Gradient of one action's aggregated value w.r.t. the initial valuation.

    Returns (gradient over ground atoms, action values, action probabilities,
    forward trace). Atoms that no reachable rule body mentions get exactly
    zero gradient.
    """
    _, v_a, trace = policy.reason(v0, record_trace=True)
    _, jac = policy.gradients(trace)
    vals, probs = action_distribution(v_a, policy.action_map, policy.params)
    grad = np.zeros(v0.shape[0])
    idx = policy.action_map.atom_indices[action_index]
    if len(idx):
        x = v_a[idx] / policy.params.gamma_action
        e = np.exp(x - x.max())
        grad = (e / e.sum()) @ jac[idx]
    return grad, vals, probs, trace


def selected_rules(policy: LogicPolicy, trace: ForwardTrace):
    """Per action atom, the rule contributing most to its final valuation.

    Returns a list of (action atom, rule or None, contribution) using the
    last reasoning step's clamped rule conclusions and the weight softmax.
    """
    c = trace.steps[-1]["c"]
    rule_mass = trace.w_star.max(axis=0)
    out = []
    for j, atom in enumerate(policy.table.action_atoms()):
        contrib = rule_mass * c[:, 2 + j]
        best = int(np.argmax(contrib))
        if contrib[best] <= 0.0:
            out.append((atom, None, 0.0))
        else:
            out.append((atom, policy.rules[best], float(contrib[best])))
    return out


CHECKPOINT_FORMAT = "rulerl-logic-checkpoint"


def save_checkpoint(path, policy: LogicPolicy) -> None:
    """Deterministic, diffable JSON checkpoint of rules + raw weights."""
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "language": policy.language.name,
        "rules": [str(ActionRule(r.head, r.body)) for r in policy.rules],
        "weights": [[float(x) for x in row] for row in policy.weights.raw],
        "smoothing": {
            "gamma_reason": policy.params.gamma_reason,
            "gamma_action": policy.params.gamma_action,
            "steps": policy.params.steps,
            "empty_action_value": policy.params.empty_action_value,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path, language: Language, table: GroundAtomTable,
                    perceive_fn=None) -> LogicPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise ReasoningError(f"{path} is not a logic-policy checkpoint")
    rules = [parse_rule(text, language) for text in blob["rules"]]
    weights = RuleWeights(np.asarray(blob["weights"], dtype=np.float64))
    sm = blob["smoothing"]
    params = SmoothingParams(
        gamma_reason=sm["gamma_reason"],
        gamma_action=sm["gamma_action"],
        steps=sm["steps"],
        empty_action_value=sm.get("empty_action_value", 0.0),
    )
    return LogicPolicy(language, table, rules, weights, params, perceive_fn)
