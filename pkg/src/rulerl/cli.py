"""Command-line surface: train, abstract, evaluate, explain, replay.

Single binary with subcommands; every run is seeded and writes plain files
(checkpoints, CSV metrics with a config-hash comment line, and matplotlib
figures next to the CSVs). Exit codes: 0 success, 1 usage error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np
import yaml

from . import figures
from .abstraction import RefinementConfig, beam_search, collect_states
from .assets import load_language, load_modes, load_rules
from .envs import make_env, make_perceiver, swap_predicate
from .logic import build_atom_table, parse_rules, rules_to_text
from .reasoning import (CHECKPOINT_FORMAT, LogicPolicy, RuleWeights,
                        input_attribution, load_checkpoint, save_checkpoint,
                        selected_rules)
from .training import (FeatureExtractor, LogicTrainConfig, NeuralPolicy,
                       NEURAL_CHECKPOINT_FORMAT, PPOConfig,
                       actor_critic_train_logic, evaluate, init_rule_weights,
                       ppo_train_neural, prune_rules)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Plumbing
# ---------------------------------------------------------------------------

def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _write_csv(path, header, rows, config, seed):
    lines = [f"# config_hash={_config_hash(config)} seed={seed}",
             ",".join(header)]
    for row in rows:
        lines.append(",".join(_cell(x) for x in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _cell(x):
    if isinstance(x, float):
        return f"{x:.10g}"
    text = str(x)
    if "," in text or '"' in text:
        text = '"' + text.replace('"', '""') + '"'
    return text


def _build_env(args):
    return make_env(args.env, variant=args.variant)


def _logic_setup(env):
    language = load_language(env.language_name)
    table = build_atom_table(language)
    return language, table


def _load_policy(path, env, language, table):
    """Loads a logic or neural checkpoint, sniffing the format field."""
    with open(path, "r", encoding="utf-8") as fh:
        fmt = json.load(fh).get("format")
    if fmt == CHECKPOINT_FORMAT:
        return load_checkpoint(path, language, table,
                               perceive_fn=make_perceiver(env, table))
    if fmt == NEURAL_CHECKPOINT_FORMAT:
        extractor = FeatureExtractor(language, env.width, env.height)
        return NeuralPolicy.load(path, extractor)
    raise ValueError(f"{path} is not a recognized checkpoint")


def _out(args, name):
    import os
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _read_rule_file(path, language):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_rules(fh.read(), language)


class _RandomOracle:
    """Uniform stand-in oracle for unguided state collection."""

    def __init__(self, n_actions):
        self.n = n_actions

    def action_probs(self, state):
        return np.full(self.n, 1.0 / self.n)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train_neural(args):
    env = _build_env(args)
    cfg = PPOConfig(total_steps=args.steps, clip=args.clip, gamma=args.gamma,
                    lr_actor=args.lr_actor, lr_critic=args.lr_critic,
                    update_every=args.update_every, hidden=args.hidden)
    policy, report = ppo_train_neural(env, cfg, seed=args.seed)
    ckpt = _out(args, "neural.json")
    policy.save(ckpt)
    config = {"cmd": "train-neural", "env": args.env, "variant": args.variant,
              **{k: getattr(cfg, k) for k in ("total_steps", "clip", "gamma",
                 "lr_actor", "lr_critic", "update_every", "hidden")}}
    rows = [(i + 1, report.lengths[i], report.returns[i],
             report.moving_avg[i]) for i in range(len(report.returns))]
    _write_csv(_out(args, "train_neural_metrics.csv"),
               ["episode", "steps", "return", "moving_avg"],
               rows, config, args.seed)
    figures.plot_training_curve(report.returns, report.moving_avg,
                                _out(args, "train_neural_curve.png"),
                                title=f"PPO on {args.env} ({args.variant})")
    print(f"checkpoint: {ckpt} episodes: {len(report.returns)} "
          f"wall_clock: {report.wall_clock:.1f}s")
    return 0


def cmd_abstract(args):
    env = _build_env(args)
    language, table = _logic_setup(env)
    perceive = make_perceiver(env, table)
    modes = load_modes(env.language_name, language)
    initial = (load_rules(env.language_name, "initial.rules", language)
               if args.initial is None
               else _read_rule_file(args.initial, language))
    oracle = (_RandomOracle(len(env.actions)) if args.oracle is None
              else _load_policy(args.oracle, env, language, table))
    sample = collect_states(oracle, env, args.states, args.seed, perceive)
    cfg = RefinementConfig(modes, max_body_len=args.max_body_len,
                           n_beam=args.n_beam, t_beam=args.t_beam)
    result = beam_search(initial, sample, cfg, table,
                         guided=not args.no_guidance)
    for notice in result.notices:
        print(f"notice: {notice}", file=sys.stderr)
    rule_path = _out(args, "candidates.rules")
    with open(rule_path, "w", encoding="utf-8") as fh:
        fh.write(rules_to_text(result.candidates))
    config = {"cmd": "abstract", "env": args.env, "variant": args.variant,
              "states": args.states, "n_beam": args.n_beam,
              "t_beam": args.t_beam, "max_body_len": args.max_body_len,
              "no_guidance": args.no_guidance}
    _write_csv(_out(args, "abstraction_scores.csv"),
               ["rule", "score", "normalization"],
               [(str(s.rule), s.score, s.normalization)
                for s in result.scores],
               config, args.seed)
    print(f"candidates: {len(result.candidates)} -> {rule_path}")
    return 0


def cmd_train_logic(args):
    env = _build_env(args)
    language, table = _logic_setup(env)
    rules = _read_rule_file(args.rules, language)
    slots = args.slots if args.slots is not None else len(rules)
    weights = init_rule_weights(len(rules), slots, seed=args.seed)
    policy = LogicPolicy(language, table, rules, weights,
                         perceive_fn=make_perceiver(env, table))
    critic = None
    extractor = FeatureExtractor(language, env.width, env.height)
    if args.critic is not None:
        critic = NeuralPolicy.load(args.critic, extractor).critic
    cfg = LogicTrainConfig(total_steps=args.steps, gamma=args.gamma,
                           lr_actor=args.lr_actor, lr_critic=args.lr_critic)
    weights, report = actor_critic_train_logic(
        policy, env, cfg, seed=args.seed, critic=critic, extractor=extractor)
    if args.prune is not None:
        rules, weights, kept = prune_rules(weights, rules, args.prune)
        policy = policy.with_rules(rules, weights)
        with open(_out(args, "pruned.rules"), "w", encoding="utf-8") as fh:
            fh.write(rules_to_text(rules))
        print(f"pruned to {len(rules)} rules (kept indices {kept})")
    ckpt = _out(args, "logic.json")
    save_checkpoint(ckpt, policy)
    config = {"cmd": "train-logic", "env": args.env, "variant": args.variant,
              "rules": args.rules, "slots": slots, "prune": args.prune,
              **{k: getattr(cfg, k) for k in ("total_steps", "gamma",
                 "lr_actor", "lr_critic")}}
    rows = [(i + 1, report.lengths[i], report.returns[i],
             report.moving_avg[i]) for i in range(len(report.returns))]
    _write_csv(_out(args, "train_logic_metrics.csv"),
               ["episode", "steps", "return", "moving_avg"],
               rows, config, args.seed)
    figures.plot_training_curve(report.returns, report.moving_avg,
                                _out(args, "train_logic_curve.png"),
                                title=f"Rule-weight learning on {args.env}")
    print(f"checkpoint: {ckpt} episodes: {len(report.returns)} "
          f"wall_clock: {report.wall_clock:.1f}s")
    return 0


def cmd_eval(args):
    if args.episodes < 1:
        raise UsageError("episodes must be >= 1")
    env = _build_env(args)
    language, table = _logic_setup(env)
    policy = None
    if args.checkpoint is not None:
        policy = _load_policy(args.checkpoint, env, language, table)
        if args.swap is not None:
            if not isinstance(policy, LogicPolicy):
                raise ValueError("--swap applies to logic checkpoints only")
            src, dst = args.swap
            policy = swap_predicate(policy, language.predicate(src),
                                    language.predicate(dst))
            policy.perceive_fn = make_perceiver(env, table)
    stats = evaluate(policy, env, args.episodes, seed=args.seed,
                     greedy=not args.sample)
    config = {"cmd": "eval", "env": args.env, "variant": args.variant,
              "checkpoint": args.checkpoint, "episodes": args.episodes,
              "swap": args.swap, "sample": args.sample}
    rows = [(i + 1, stats.returns[i], int(stats.lengths[i]))
            for i in range(args.episodes)]
    _write_csv(_out(args, "eval_stats.csv"),
               ["episode", "return", "steps"], rows, config, args.seed)
    figures.plot_eval_returns(stats.returns, _out(args, "eval_returns.png"),
                              title=f"{args.env} ({args.variant}) returns")
    print(f"mean return: {stats.mean:.3f} std: {stats.std:.3f} "
          f"episodes: {args.episodes}")
    return 0


def cmd_explain(args):
    env = _build_env(args)
    language, table = _logic_setup(env)
    policy = _load_policy(args.checkpoint, env, language, table)
    if not isinstance(policy, LogicPolicy):
        raise ValueError("explain requires a logic checkpoint")
    state = env.reset(args.seed)
    for _ in range(args.step):
        probs = policy.action_probs(state)
        state, _, done = env.step(env.actions[int(np.argmax(probs))])
        if done:
            raise ValueError(f"episode ended before step {args.step}")
    v0 = policy.perceive(state)
    probs = policy.action_probs_from_v0(v0)
    action_index = int(np.argmax(probs))
    if args.action is not None:
        if args.action not in env.actions:
            raise UsageError(f"unknown action {args.action!r}")
        action_index = env.actions.index(args.action)
    grad, vals, probs, trace = input_attribution(policy, v0, action_index)
    order = np.argsort(-np.abs(grad), kind="stable")
    config = {"cmd": "explain", "env": args.env, "variant": args.variant,
              "checkpoint": args.checkpoint, "step": args.step,
              "action": env.actions[action_index]}
    rows = [(str(table.atoms[i]), v0[i], grad[i], abs(grad[i]))
            for i in order]
    _write_csv(_out(args, "explain.csv"),
               ["atom", "valuation", "gradient", "magnitude"],
               rows, config, args.seed)
    figures.plot_attribution([str(table.atoms[i]) for i in range(table.g)],
                             grad, _out(args, "explain_attribution.png"))
    lines = [f"state (seed {args.seed}, step {args.step}):",
             env.render_ascii(state), "",
             f"chosen action: {env.actions[action_index]} "
             f"(p={probs[action_index]:.3f})",
             "", "action values:"]
    for a, name in enumerate(env.actions):
        lines.append(f"  {name:<12} value={vals[a]:.4f} p={probs[a]:.4f}")
    lines += ["", "rule selected per action atom:"]
    for atom, rule, contrib in selected_rules(policy, trace):
        body = str(rule) if rule is not None else "(none)"
        lines.append(f"  {str(atom):<28} {contrib:.4f}  {body}")
    lines += ["", "top attributions:"]
    for i in order[:10]:
        lines.append(f"  {str(table.atoms[i]):<28} grad={grad[i]:+.5f} "
                     f"v0={v0[i]:.3f}")
    text = "\n".join(lines) + "\n"
    with open(_out(args, "explain.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    print(text)
    return 0


def cmd_render(args):
    env = _build_env(args)
    language, table = _logic_setup(env)
    policy = None
    if args.checkpoint is not None:
        policy = _load_policy(args.checkpoint, env, language, table)
    rng = np.random.default_rng(args.seed)
    state = env.reset(args.seed)
    print(env.render_ascii(state))
    for t in range(args.steps):
        if policy is None:
            action = env.actions[int(rng.integers(len(env.actions)))]
        else:
            action = env.actions[int(np.argmax(policy.action_probs(state)))]
        state, reward, done = env.step(action)
        print(f"t={t + 1} action={action} reward={reward:+.2f}")
        print(env.render_ascii(state))
        if done:
            print("episode finished")
            break
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="rulerl",
                     description="Rule-based reinforcement learning engine")
    parser.add_argument("--config", default=None,
                        help="YAML file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--env", required=True,
                       choices=["getout", "threefishes", "loot"])
        p.add_argument("--variant", default="base")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="runs")

    p = sub.add_parser("train-neural", help="PPO-train the neural oracle")
    common(p)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--clip", type=float, default=0.2)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--lr-actor", type=float, default=1e-3)
    p.add_argument("--lr-critic", type=float, default=3e-4)
    p.add_argument("--update-every", type=int, default=1000)
    p.add_argument("--hidden", type=int, default=64)
    p.set_defaults(func=cmd_train_neural)

    p = sub.add_parser("abstract", help="beam-search candidate rules")
    common(p)
    p.add_argument("--oracle", default=None,
                   help="neural checkpoint guiding the search")
    p.add_argument("--initial", default=None,
                   help="initial rule file (defaults to the shipped one)")
    p.add_argument("--states", type=int, default=2000)
    p.add_argument("--n-beam", type=int, default=3)
    p.add_argument("--t-beam", type=int, default=3)
    p.add_argument("--max-body-len", type=int, default=6)
    p.add_argument("--no-guidance", action="store_true",
                   help="accept every refinement, skip oracle scoring")
    p.set_defaults(func=cmd_abstract)

    p = sub.add_parser("train-logic", help="learn rule weights (actor-critic)")
    common(p)
    p.add_argument("--rules", required=True)
    p.add_argument("--critic", default=None,
                   help="neural checkpoint providing a pretrained critic")
    p.add_argument("--slots", type=int, default=None)
    p.add_argument("--steps", type=int, default=100_000)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--lr-actor", type=float, default=1e-3)
    p.add_argument("--lr-critic", type=float, default=3e-4)
    p.add_argument("--prune", type=int, default=None,
                   help="after training keep the top-k rules per slot")
    p.set_defaults(func=cmd_train_logic)

    p = sub.add_parser("eval", help="evaluate a checkpoint (or random)")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--sample", action="store_true",
                   help="sample actions instead of greedy argmax")
    p.add_argument("--swap", nargs=2, metavar=("FROM", "TO"), default=None,
                   help="swap a body predicate before evaluating")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="attribution report for one decision")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--step", type=int, default=0)
    p.add_argument("--action", default=None,
                   help="explain this action instead of the argmax")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("render", help="replay an episode as ascii frames")
    common(p)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--steps", type=int, default=50)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    try:
        # Config-file values become flag defaults; explicit flags still win.
        if "--config" in argv:
            path = argv[argv.index("--config") + 1]
            with open(path, "r", encoding="utf-8") as fh:
                overrides = yaml.safe_load(fh) or {}
            mapped = {k.replace("-", "_"): v for k, v in overrides.items()}
            for action in parser._subparsers._group_actions:
                for sub in action.choices.values():
                    sub.set_defaults(**mapped)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
