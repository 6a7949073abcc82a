"""Rule-based reinforcement learning with differentiable forward reasoning.

Policies are sets of weighted first-order action rules executed by a
differentiable reasoning pipeline; candidate rules come from beam search
against a neural oracle, and rule weights are learned with actor-critic
updates.
"""

from .logic import (ActionRule, Atom, Constant, GroundAtomTable, Language,
                    LanguageError, ModeDeclaration, ParseError, Predicate,
                    Variable, build_atom_table, canonical_key, canonicalize,
                    enumerate_substitutions, ground_rule,
                    parse_mode_declarations, parse_rule, parse_rules,
                    rules_to_text, substitute)
from .reasoning import (ActionMap, ForwardTrace, IndexTensor, LogicPolicy,
                        ReasoningError, RuleWeights, SmoothingParams,
                        action_distribution, backward_pass,
                        build_index_tensor, forward_reason, init_valuation,
                        input_attribution, load_checkpoint, save_checkpoint,
                        selected_rules, softor, weights_from_rule_annotations)
from .abstraction import (AbstractionError, BeamResult, RefinementConfig,
                          ScoredRule, StateSample, beam_search,
                          collect_states, normalization, refine, score_rule)
from .training import (EvalStats, FeatureExtractor, LogicTrainConfig,
                       NeuralPolicy, PPOConfig, TrainingError, TrainReport,
                       actor_critic_train_logic, evaluate, init_rule_weights,
                       ppo_train_neural, prune_rules)
from .envs import make_env, make_perceiver, swap_predicate

__version__ = "0.1.0"
