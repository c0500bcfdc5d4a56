"""Planning with a learned model at desk scale.

Search-based policy improvement over a learned representation/dynamics/
prediction model, trained end-to-end from self-play, with exact oracles
(minimax, value iteration) for verification on toy domains.
"""

from .codec import (CodecConfig, categorical_to_scalar, inverse_transform,
                    scalar_to_categorical, transform)
from .config import RunConfig, derive_seed, substream
from .environments import ChainMdp, EnvSpec, GridWorld, PerfectModelAdapter, TicTacToe
from .learner import Learner, QLearner, TrainingConfig, loss_for_sample
from .mcts import (MinMaxStats, Node, SearchConfig, SearchResult, add_root_noise,
                   backup, expand_node, normalize_q, run_search, sample_action,
                   select_child)
from .model import (ModelConfig, Network, OptimizerConfig, SgdMomentum,
                    load_checkpoint, save_checkpoint, scale_hidden, unrolled_loss)
from .oracles import discounted_return, minimax_value, value_iteration
from .replay import ReplayBuffer, ReplayConfig, Trajectory, TrainingTarget, make_targets
from .selfplay import Actor, SnapshotStore, TemperatureSchedule, actor_loop, play_game
from .evaluation import (EloConfig, MatchRecord, MinimaxAgent, RandomAgent,
                         RawPolicyAgent, SearchAgent, PerfectSearchAgent, elo_fit,
                         evaluate_return, play_match, search_depth_histogram,
                         sims_scaling_study)

__version__ = "0.1.0"
