"""Policy optimization: PPO for the neural oracle, TD actor-critic for rules.

The neural oracle is a small two-layer perceptron pair (actor + critic) over
flattened object-centric features, trained with the clipped PPO surrogate.
Logic-policy weights are trained with one-step temporal-difference
actor-critic updates, reusing the (optionally pretrained) neural critic as
the value function. Post-hoc pruning keeps the top-k rules per weight slot.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .logic import ActionRule, Language
from .reasoning import LogicPolicy, RuleWeights, action_distribution


class TrainingError(Exception):
    pass


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------

class FeatureExtractor:
    """Flattens an object-centric state into a fixed vector.

    One slot per object constant of the language, each slot holding a class
    one-hot, a color one-hot, normalized position, size, and status flags.
    Missing or dead entities leave their slot at zero.
    """

    def __init__(self, language: Language, width: float, height: float):
        self.object_ids = list(language.datatypes["object"])
        self.classes = list(language.datatypes["type"])
        self.colors = list(language.datatypes.get("color", []))
        self.width = width
        self.height = height
        self.slot_dim = len(self.classes) + len(self.colors) + 3 + 4
        self.dim = len(self.object_ids) * self.slot_dim

    def __call__(self, state) -> np.ndarray:
        out = np.zeros(self.dim)
        for i, eid in enumerate(self.object_ids):
            e = state.entity(eid)
            if e is None or not e.alive:
                continue
            base = i * self.slot_dim
            if e.cls in self.classes:
                out[base + self.classes.index(e.cls)] = 1.0
            base += len(self.classes)
            if e.color in self.colors:
                out[base + self.colors.index(e.color)] = 1.0
            base += len(self.colors)
            out[base + 0] = e.x / self.width
            out[base + 1] = e.y / self.height
            out[base + 2] = e.size
            out[base + 3] = 1.0
            out[base + 4] = 1.0 if (e.has_key or e.carrying) else 0.0
            out[base + 5] = 1.0 if e.opened else 0.0
            out[base + 6] = 1.0 if e.static else 0.0
        return out


# ---------------------------------------------------------------------------
# Two-layer perceptron with manual gradients
# ---------------------------------------------------------------------------

class MLP:
    """Two-layer perceptron, tanh hidden layer, manual reverse mode."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, rng):
        s1 = 1.0 / math.sqrt(in_dim)
        s2 = 1.0 / math.sqrt(hidden)
        self.w1 = rng.normal(0.0, s1, size=(in_dim, hidden))
        self.b1 = np.zeros(hidden)
        self.w2 = rng.normal(0.0, s2, size=(hidden, out_dim))
        self.b2 = np.zeros(out_dim)

    @property
    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x: np.ndarray):
        h = np.tanh(x @ self.w1 + self.b1)
        return h @ self.w2 + self.b2, h

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, x: np.ndarray, h: np.ndarray, d_out: np.ndarray):
        """Gradients of a scalar loss given d loss / d output, batched."""
        d_w2 = h.T @ d_out
        d_b2 = d_out.sum(axis=0)
        d_h = (d_out @ self.w2.T) * (1.0 - h * h)
        d_w1 = x.T @ d_h
        d_b1 = d_h.sum(axis=0)
        return [d_w1, d_b1, d_w2, d_b2]

    def state_dict(self):
        return {
            "shapes": [list(p.shape) for p in self.params],
            "values": [p.tolist() for p in self.params],
        }

    def load_state_dict(self, data):
        values = [np.asarray(v, dtype=float) for v in data["values"]]
        for p, v in zip(self.params, values):
            if p.shape != v.shape:
                raise TrainingError(
                    f"checkpoint shape {v.shape} does not match {p.shape}"
                )
        self.w1, self.b1, self.w2, self.b2 = values


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Neural policy
# ---------------------------------------------------------------------------

NEURAL_CHECKPOINT_FORMAT = "rulerl-neural-checkpoint"


class NeuralPolicy:
    """Actor + critic perceptron pair over flattened entity features."""

    def __init__(self, extractor: FeatureExtractor, actions, hidden: int = 64,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        self.extractor = extractor
        self.actions = list(actions)
        self.hidden = hidden
        self.actor = MLP(extractor.dim, hidden, len(self.actions), rng)
        self.critic = MLP(extractor.dim, hidden, 1, rng)

    def action_probs(self, state) -> np.ndarray:
        logits = self.actor(self.extractor(state))
        return _softmax(logits)

    def value(self, state) -> float:
        return float(self.critic(self.extractor(state))[0])

    def save(self, path):
        data = {
            "format": NEURAL_CHECKPOINT_FORMAT,
            "actions": self.actions,
            "hidden": self.hidden,
            "actor": self.actor.state_dict(),
            "critic": self.critic.state_dict(),
        }
        with open(path, "w") as f:
            json.dump(data, f, sort_keys=True)

    @classmethod
    def load(cls, path, extractor: FeatureExtractor):
        with open(path) as f:
            data = json.load(f)
        if data.get("format") != NEURAL_CHECKPOINT_FORMAT:
            raise TrainingError(f"not a neural checkpoint: {path}")
        policy = cls(extractor, data["actions"], hidden=data["hidden"])
        policy.actor.load_state_dict(data["actor"])
        policy.critic.load_state_dict(data["critic"])
        return policy


# ---------------------------------------------------------------------------
# Configuration and reports
# ---------------------------------------------------------------------------

@dataclass
class PPOConfig:
    total_steps: int = 100_000
    clip: float = 0.2
    gamma: float = 0.99
    lr_actor: float = 1e-3
    lr_critic: float = 3e-4
    update_every: int = 1000
    epochs: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    hidden: int = 64

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise TrainingError("clip must lie in (0, 1)")
        for name in ("lr_actor", "lr_critic", "gamma", "update_every",
                     "total_steps"):
            if getattr(self, name) <= 0:
                raise TrainingError(f"{name} must be positive")


@dataclass
class LogicTrainConfig:
    total_steps: int = 100_000
    gamma: float = 0.99
    lr_actor: float = 1e-3
    lr_critic: float = 3e-4
    accumulate_every: int = 1

    def __post_init__(self):
        for name in ("lr_actor", "lr_critic", "gamma", "total_steps",
                     "accumulate_every"):
            if getattr(self, name) <= 0:
                raise TrainingError(f"{name} must be positive")


@dataclass
class TrainReport:
    returns: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    moving_avg: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    wall_clock: float = 0.0
    checkpoint: str | None = None

    def log_episode(self, ep_return: float, length: int, window: int = 50):
        if not math.isfinite(ep_return):
            raise TrainingError("non-finite episode return")
        self.returns.append(ep_return)
        self.lengths.append(length)
        tail = self.returns[-window:]
        self.moving_avg.append(sum(tail) / len(tail))


def exploration_rate(episode: int) -> float:
    return max(math.exp(-episode / 500.0), 0.02)


def clipped_objective(ratio: float, advantage: float, clip: float) -> float:
    """Per-sample clipped PPO surrogate (the quantity being maximized)."""
    return min(ratio * advantage,
               float(np.clip(ratio, 1.0 - clip, 1.0 + clip)) * advantage)


# ---------------------------------------------------------------------------
# PPO training of the neural oracle
# ---------------------------------------------------------------------------

def ppo_train_neural(env, cfg: PPOConfig, seed: int = 0):
    """Trains the neural oracle with the clipped PPO surrogate.

    Advantages are discounted returns-to-go (bootstrapped at buffer cuts)
    minus the critic's value estimates. Exploration follows an epsilon-greedy
    schedule over episodes on top of the policy's own sampling.
    """
    from .assets import load_language

    language = load_language(env.language_name)
    extractor = FeatureExtractor(language, env.width, env.height)
    policy = NeuralPolicy(extractor, env.actions, hidden=cfg.hidden, seed=seed)
    opt_actor = Adam(policy.actor.params, cfg.lr_actor)
    opt_critic = Adam(policy.critic.params, cfg.lr_critic)
    rng = np.random.default_rng(seed)
    report = TrainReport()
    start = time.monotonic()

    n_actions = len(env.actions)
    state = env.reset(seed)
    episode = 0
    ep_return = 0.0
    ep_len = 0
    feats, acts, rewards, dones, logps, values = [], [], [], [], [], []

    for step in range(cfg.total_steps):
        x = extractor(state)
        logits, _ = policy.actor.forward(x[None, :])
        probs = _softmax(logits[0])
        if rng.random() < exploration_rate(episode):
            a = int(rng.integers(n_actions))
        else:
            a = int(rng.choice(n_actions, p=probs))
        value = float(policy.critic(x[None, :])[0, 0])
        next_state, reward, done = env.step(env.actions[a])

        feats.append(x)
        acts.append(a)
        rewards.append(reward)
        dones.append(done)
        logps.append(math.log(max(probs[a], 1e-12)))
        values.append(value)

        ep_return += reward
        ep_len += 1
        if done:
            report.log_episode(ep_return, ep_len)
            episode += 1
            ep_return = 0.0
            ep_len = 0
            state = env.reset(seed + episode)
        else:
            state = next_state

        if len(feats) >= cfg.update_every or step == cfg.total_steps - 1:
            bootstrap = 0.0 if dones[-1] else float(
                policy.critic(extractor(state)[None, :])[0, 0])
            loss = _ppo_update(policy, opt_actor, opt_critic, cfg,
                               np.asarray(feats), np.asarray(acts),
                               np.asarray(rewards), np.asarray(dones),
                               np.asarray(logps), np.asarray(values),
                               bootstrap)
            report.losses.append(loss)
            feats, acts, rewards, dones, logps, values = [], [], [], [], [], []

    report.wall_clock = time.monotonic() - start
    return policy, report


def _ppo_update(policy, opt_actor, opt_critic, cfg, x, acts, rewards, dones,
                logp_old, values, bootstrap):
    n = len(acts)
    returns = np.zeros(n)
    running = bootstrap
    for t in range(n - 1, -1, -1):
        if dones[t]:
            running = 0.0
        running = rewards[t] + cfg.gamma * running
        returns[t] = running
    adv = returns - values
    if adv.std() > 1e-8:
        adv = (adv - adv.mean()) / adv.std()

    onehot = np.zeros((n, len(policy.actions)))
    onehot[np.arange(n), acts] = 1.0
    last = math.nan
    for _ in range(cfg.epochs):
        logits, h = policy.actor.forward(x)
        probs = _softmax(logits)
        logp = np.log(np.clip(probs[np.arange(n), acts], 1e-12, None))
        ratio = np.exp(logp - logp_old)
        # Gradient of -min(r*A, clip(r)*A): zero where the clipped branch
        # is active, otherwise flows through ln pi.
        surr_unclipped = ratio * adv
        surr_clipped = np.clip(ratio, 1 - cfg.clip, 1 + cfg.clip) * adv
        use_unclipped = surr_unclipped <= surr_clipped
        coef = np.where(use_unclipped, ratio * adv, 0.0)
        d_logits = -coef[:, None] * (onehot - probs) / n
        entropy = -(probs * np.log(np.clip(probs, 1e-12, None))).sum(axis=1)
        d_logits += cfg.entropy_coef * probs * (
            np.log(np.clip(probs, 1e-12, None)) + entropy[:, None]) / n
        grads = policy.actor.backward(x, h, d_logits)
        opt_actor.step(grads)

        v_out, hv = policy.critic.forward(x)
        v = v_out[:, 0]
        d_v = cfg.value_coef * 2.0 * (v - returns)[:, None] / n
        opt_critic.step(policy.critic.backward(x, hv, d_v))

        policy_loss = -np.minimum(surr_unclipped, surr_clipped).mean()
        value_loss = cfg.value_coef * ((v - returns) ** 2).mean()
        last = float(policy_loss + value_loss
                     - cfg.entropy_coef * entropy.mean())
        if not math.isfinite(last):
            raise TrainingError(
                f"NaN in PPO loss (policy {policy_loss}, value {value_loss})")
    return last


# ---------------------------------------------------------------------------
# Logic-policy weight learning
# ---------------------------------------------------------------------------

def init_rule_weights(c: int, m: int, seed: int = 0) -> RuleWeights:
    """Randomized raw weights, one row per program slot over c rules."""
    if not 1 <= m <= c:
        raise TrainingError(f"need 1 <= m <= c, got m={m}, c={c}")
    rng = np.random.default_rng(seed)
    return RuleWeights(rng.normal(0.0, 0.1, size=(m, c)))


def actor_critic_train_logic(policy: LogicPolicy, env,
                             cfg: LogicTrainConfig, seed: int = 0,
                             critic: MLP | None = None,
                             extractor: FeatureExtractor | None = None):
    """One-step TD actor-critic over the logic policy's rule weights.

    Per step: sample an action from the policy, observe the TD error
    delta = r + gamma * v(s') - v(s) (zero value at terminal states), move
    the critic along delta * grad v(s) and the raw rule weights along
    delta * grad ln pi(a|s). The critic is a neural value head, either a
    pretrained one or a fresh perceptron.
    """
    from .assets import load_language

    if extractor is None:
        language = load_language(env.language_name)
        extractor = FeatureExtractor(language, env.width, env.height)
    rng = np.random.default_rng(seed)
    if critic is None:
        critic = MLP(extractor.dim, 64, 1, rng)
    report = TrainReport()
    start = time.monotonic()

    n_actions = len(env.actions)
    state = env.reset(seed)
    episode = 0
    ep_return = 0.0
    ep_len = 0
    acc_w = np.zeros_like(policy.weights.raw)
    acc_n = 0

    for _ in range(cfg.total_steps):
        v0 = policy.perceive_fn(state)
        _, v_a, trace = policy.reason(v0, record_trace=True)
        _, probs = action_distribution(v_a, policy.action_map, policy.params)
        if rng.random() < exploration_rate(episode):
            a = int(rng.integers(n_actions))
        else:
            a = int(rng.choice(n_actions, p=probs))
        next_state, reward, done = env.step(env.actions[a])

        x = extractor(state)[None, :]
        v_out, h = critic.forward(x)
        v_s = float(v_out[0, 0])
        v_next = 0.0 if done else float(critic(extractor(next_state)[None, :])[0, 0])
        delta = reward + cfg.gamma * v_next - v_s

        # Plain-SGD ascent: critic moves along delta * grad v(s), the raw
        # rule weights along delta * grad ln pi(a|s).
        for p, g in zip(critic.params, critic.backward(x, h, np.array([[1.0]]))):
            p += cfg.lr_critic * delta * g

        grad_w, _ = policy.gradients(trace, action_index=a,
                                     want_jacobian=False)
        if not np.all(np.isfinite(grad_w)):
            raise TrainingError("NaN in logic policy gradient")
        acc_w += delta * grad_w
        acc_n += 1
        if acc_n >= cfg.accumulate_every:
            policy.weights.raw += cfg.lr_actor * acc_w / acc_n
            acc_w = np.zeros_like(acc_w)
            acc_n = 0

        ep_return += reward
        ep_len += 1
        if done:
            report.log_episode(ep_return, ep_len)
            episode += 1
            ep_return = 0.0
            ep_len = 0
            state = env.reset(seed + episode)
        else:
            state = next_state

    report.wall_clock = time.monotonic() - start
    return policy.weights, report


def prune_rules(weights: RuleWeights, rules: list[ActionRule], k: int):
    """Keeps the top-k rules per weight row; drops rules no row selects.

    Returns (kept_rules, restricted_weights, kept_indices). Raw weight
    columns of surviving rules are carried over unchanged.
    """
    if k < 1:
        raise TrainingError("k must be >= 1")
    soft = weights.softmax()
    m, c = soft.shape
    if len(rules) != c:
        raise TrainingError("weights do not match the ruleset")
    k = min(k, c)
    kept = set()
    for row in soft:
        top = np.argsort(-row, kind="stable")[:k]
        kept.update(int(i) for i in top)
    indices = sorted(kept)
    new_rules = [rules[i] for i in indices]
    new_weights = RuleWeights(weights.raw[:, indices].copy())
    return new_rules, new_weights, indices


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalStats:
    returns: np.ndarray
    lengths: np.ndarray
    final_states: list

    @property
    def mean(self) -> float:
        return float(self.returns.mean())

    @property
    def std(self) -> float:
        return float(self.returns.std())


def evaluate(policy, env, episodes: int, seed: int = 0,
             greedy: bool = True) -> EvalStats:
    """Runs seeded evaluation episodes; greedy argmax or sampled actions.

    ``policy`` may be anything with ``action_probs(state)`` aligned with
    ``env.actions``, or None for the uniform-random baseline.
    """
    if episodes < 1:
        raise TrainingError("episodes must be >= 1")
    returns = np.zeros(episodes)
    lengths = np.zeros(episodes, dtype=int)
    finals = []
    n_actions = len(env.actions)
    for ep in range(episodes):
        state = env.reset(seed + ep)
        rng = np.random.default_rng((seed + ep) * 7919 + 1)
        total = 0.0
        steps = 0
        done = False
        while not done:
            if policy is None:
                a = int(rng.integers(n_actions))
            else:
                probs = policy.action_probs(state)
                if greedy:
                    a = int(np.argmax(probs))
                else:
                    a = int(rng.choice(n_actions, p=probs))
            state, reward, done = env.step(env.actions[a])
            total += reward
            steps += 1
        returns[ep] = total
        lengths[ep] = steps
        finals.append(state)
    return EvalStats(returns, lengths, finals)
