from .agent import (
    Critic,
    DipoAgent,
    DipoConfig,
    act,
    action_gradient_pass,
    critic_update,
    improve_actions,
    make_agent,
    mlp_baseline_update,
    policy_update,
    soft_update,
    td_targets,
)
from .buffer import Batch, ReplayBuffer, Transition
from .policies import DiffusionPolicy, MlpPolicy
from .train import METRIC_FIELDS, VecEnv, episode_summary, evaluate, run_round, train
