"""Partial Bound Q-learning on confounded MDPs: learners, oracles, and experiment harness."""
from .env import (EnvironmentSpec, ObservationalTables, StepOutcome, ValidatedEnvironment, load_env,
                  observational_conditionals, drug_trial_env, random_environment, sample_episode,
                  sample_episodes, validate_spec)
from .oracles import (bound_certificate, bound_fixed_points, confounded_q, enumerate_compatible_scms,
                      natural_bounds_closed_form, optimal_q, value_iteration)
from .pbql import BoundedQTable, containment_check, train_pbql
from .planning import (IntervalPolicy, RolloutReport, action_probabilities, regret, rollout,
                       thompson_action)
from .trajectory import (BatchingConfig, TrajectoryDataset, TransitionRecord, estimate_bounds,
                         partition, read_dataset, transition_count, write_dataset)
from .vanilla_q import QTable, greedy_policy, train_q

__version__ = "0.1.0"
