"""Run configuration: one validated JSON document holding every knob.

The document is versioned, rejects unknown keys (with a path to the first
offender), and is frozen into each run's output directory so reruns are
auditable. All randomness flows from the single master seed through named
substreams.
"""

from __future__ import annotations

import copy
import hashlib
import json

import numpy as np

from .codec import CodecConfig
from .environments import ChainMdp, GridWorld, TicTacToe
from .learner import TrainingConfig
from .mcts import SearchConfig
from .model import ModelConfig
from .replay import ReplayConfig
from .selfplay import TemperatureSchedule

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


_SECTION_KEYS = {
    "environment": {"name", "n_states", "discount", "max_moves", "size", "goal", "trap",
                    "move_reward", "distractor_reward", "goal_reward"},
    "model": {"hidden_size", "layer_width", "support_min", "support_max", "epsilon"},
    "search": {"num_simulations", "c1", "c2", "dirichlet_alpha", "exploration_fraction"},
    "replay": {"capacity", "prioritized", "priority_alpha", "importance_beta",
               "unroll_steps", "bootstrap_steps", "reanalyze_fraction",
               "reanalyze_bootstrap_steps", "reanalyze_value_weight", "samples_per_state",
               "reanalyze_num_simulations"},
    "training": {"batch_size", "total_steps", "learning_rate", "lr_decay_rate",
                 "lr_decay_steps", "momentum", "weight_decay", "checkpoint_interval",
                 "target_refresh_interval"},
    "temperature": {"breakpoints"},
    "selfplay": {"actor_count", "greedy_after_move", "min_buffer_games", "max_games",
                 "resume_interval"},
    "evaluation": {"interval_steps", "episodes", "opponent"},
}

_TOP_KEYS = {"config_version", "seed"} | set(_SECTION_KEYS)


def _check_keys(section: str, given: dict, allowed: set):
    for key in given:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}: unknown key")


class RunConfig:
    """Validated view over a raw config dict."""

    def __init__(self, raw: dict):
        self.raw = copy.deepcopy(raw)
        self.validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls(json.load(fh))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.raw, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def validate(self):
        raw = self.raw
        if not isinstance(raw, dict):
            raise ConfigError("config root must be an object")
        for key in raw:
            if key not in _TOP_KEYS:
                raise ConfigError(f"{key}: unknown key")
        if raw.get("config_version") != CONFIG_VERSION:
            raise ConfigError(f"config_version: expected {CONFIG_VERSION}, "
                              f"got {raw.get('config_version')!r}")
        if not isinstance(raw.get("seed"), int):
            raise ConfigError("seed: must be an integer")
        for section in _SECTION_KEYS:
            if section not in raw:
                raise ConfigError(f"{section}: missing section")
            if not isinstance(raw[section], dict):
                raise ConfigError(f"{section}: must be an object")
            _check_keys(section, raw[section], _SECTION_KEYS[section])
        # Building every typed object surfaces value errors with their path.
        env = self.build_env()
        self.build_model_config(env)
        self.build_search_config(env)
        self.build_replay_config()
        self.build_training_config()
        self.build_schedule()
        self._build_checked("selfplay", self._selfplay_defaults)
        self._build_checked("evaluation", self._evaluation_defaults)

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    def _section(self, name: str) -> dict:
        return self.raw[name]

    def _build_checked(self, section: str, builder):
        try:
            return builder()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{section}: {exc}") from exc

    def build_env(self):
        return build_environment(self._section("environment"))

    def env_factory(self):
        return lambda: self.build_env()

    def build_model_config(self, env) -> ModelConfig:
        m = self._section("model")
        board = env.spec.num_players == 2
        try:
            codec = CodecConfig(epsilon=m.get("epsilon", 0.001),
                                support_min=m.get("support_min", -20),
                                support_max=m.get("support_max", 20))
            return ModelConfig(
                observation_size=env.spec.observation_size,
                action_space_size=env.spec.action_space_size,
                hidden_size=m.get("hidden_size", 32),
                layer_width=m.get("layer_width", 64),
                value_mode="scalar" if board else "categorical",
                reward_mode="none" if board else "categorical",
                codec=codec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model: {exc}") from exc

    def build_search_config(self, env, num_simulations: int | None = None) -> SearchConfig:
        s = dict(self._section("search"))
        if num_simulations is not None:
            s["num_simulations"] = num_simulations
        try:
            return SearchConfig(discount=env.spec.discount, **s)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"search: {exc}") from exc

    def build_replay_config(self) -> ReplayConfig:
        r = dict(self._section("replay"))
        r.pop("reanalyze_num_simulations", None)
        try:
            return ReplayConfig(**r)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"replay: {exc}") from exc

    @property
    def reanalyze_num_simulations(self) -> int | None:
        return self._section("replay").get("reanalyze_num_simulations")

    def build_training_config(self) -> TrainingConfig:
        try:
            return TrainingConfig(**self._section("training"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"training: {exc}") from exc

    def build_schedule(self) -> TemperatureSchedule:
        t = self._section("temperature")
        try:
            points = tuple((None if thr is None else int(thr), float(temp))
                           for thr, temp in t["breakpoints"])
            return TemperatureSchedule(points)
        except KeyError as exc:
            raise ConfigError(f"temperature.breakpoints: missing") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"temperature: {exc}") from exc

    def _selfplay_defaults(self) -> dict:
        s = self._section("selfplay")
        out = {"actor_count": s.get("actor_count", 1),
               "greedy_after_move": s.get("greedy_after_move"),
               "min_buffer_games": s.get("min_buffer_games", 20),
               "max_games": s.get("max_games"),
               "resume_interval": s.get("resume_interval", 50)}
        if out["actor_count"] < 1:
            raise ConfigError("selfplay.actor_count: must be >= 1")
        if out["min_buffer_games"] < 1:
            raise ConfigError("selfplay.min_buffer_games: must be >= 1")
        if out["resume_interval"] < 1:
            raise ConfigError("selfplay.resume_interval: must be >= 1")
        return out

    @property
    def selfplay(self) -> dict:
        return self._selfplay_defaults()

    def _evaluation_defaults(self) -> dict:
        e = self._section("evaluation")
        out = {"interval_steps": e.get("interval_steps", 500),
               "episodes": e.get("episodes", 10),
               "opponent": e.get("opponent", "random")}
        if out["interval_steps"] < 1 or out["episodes"] < 1:
            raise ConfigError("evaluation: interval_steps and episodes must be >= 1")
        if out["opponent"] not in ("random", "minimax"):
            raise ConfigError(f"evaluation.opponent: unknown opponent {out['opponent']!r}")
        return out

    @property
    def evaluation(self) -> dict:
        return self._evaluation_defaults()

    def with_overrides(self, **sections) -> "RunConfig":
        """New config with whole or partial sections replaced."""
        raw = copy.deepcopy(self.raw)
        for name, value in sections.items():
            if isinstance(value, dict) and isinstance(raw.get(name), dict):
                raw[name].update(value)
            else:
                raw[name] = value
        return RunConfig(raw)


def build_environment(section: dict):
    """Instantiate an environment from its config section (also embedded in
    checkpoints, so evaluation can rebuild the right environment)."""
    env = dict(section)
    name = env.pop("name", None)
    try:
        if name == "tictactoe":
            if env:
                raise ConfigError(f"environment.{next(iter(env))}: not a tictactoe parameter")
            return TicTacToe()
        if name == "chain":
            return ChainMdp(**env)
        if name == "gridworld":
            return GridWorld(**env)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"environment: {exc}") from exc
    raise ConfigError(f"environment.name: unknown environment {name!r}")


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 63-bit seed derived from the master seed and a label path."""
    text = ":".join(str(p) for p in (master_seed,) + parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


def substream(master_seed: int, name: str) -> np.random.Generator:
    """Named random stream; independent streams for selfplay/replay/learner/eval."""
    return np.random.default_rng(np.random.SeedSequence(derive_seed(master_seed, name)))


def desk_tictactoe(seed: int = 0) -> dict:
    """Board-game preset: uniform replay, scalar value head, no reward loss."""
    return {
        "config_version": CONFIG_VERSION,
        "seed": seed,
        "environment": {"name": "tictactoe"},
        "model": {"hidden_size": 48, "layer_width": 96},
        "search": {"num_simulations": 60, "c1": 1.25, "c2": 19652.0,
                   "dirichlet_alpha": 0.3, "exploration_fraction": 0.25},
        "replay": {"capacity": 3000, "prioritized": False, "unroll_steps": 5,
                   "bootstrap_steps": 9, "samples_per_state": 8.0},
        "training": {"batch_size": 128, "total_steps": 4000, "learning_rate": 0.05,
                     "lr_decay_rate": 0.1, "lr_decay_steps": 20_000, "momentum": 0.9,
                     "weight_decay": 1e-4, "checkpoint_interval": 25,
                     "target_refresh_interval": 200},
        "temperature": {"breakpoints": [[2000, 1.0], [3000, 0.5], [None, 0.25]]},
        "selfplay": {"actor_count": 2, "greedy_after_move": 4, "min_buffer_games": 50},
        "evaluation": {"interval_steps": 500, "episodes": 30, "opponent": "random"},
    }


def desk_chain(seed: int = 0) -> dict:
    """Single-agent preset: prioritized replay, categorical heads."""
    return {
        "config_version": CONFIG_VERSION,
        "seed": seed,
        "environment": {"name": "chain", "n_states": 10, "discount": 0.997},
        "model": {"hidden_size": 32, "layer_width": 64,
                  "support_min": -20, "support_max": 20},
        "search": {"num_simulations": 25, "c1": 1.25, "c2": 19652.0,
                   "dirichlet_alpha": 0.3, "exploration_fraction": 0.25},
        "replay": {"capacity": 1500, "prioritized": True, "priority_alpha": 1.0,
                   "importance_beta": 1.0, "unroll_steps": 5, "bootstrap_steps": 10,
                   "samples_per_state": 4.0},
        "training": {"batch_size": 64, "total_steps": 1500, "learning_rate": 0.05,
                     "lr_decay_rate": 0.1, "lr_decay_steps": 20_000, "momentum": 0.9,
                     "weight_decay": 1e-4, "checkpoint_interval": 25,
                     "target_refresh_interval": 100},
        "temperature": {"breakpoints": [[750, 1.0], [1125, 0.5], [None, 0.25]]},
        "selfplay": {"actor_count": 1, "min_buffer_games": 20},
        "evaluation": {"interval_steps": 250, "episodes": 10},
    }


def desk_gridworld(seed: int = 0) -> dict:
    return {
        "config_version": CONFIG_VERSION,
        "seed": seed,
        "environment": {"name": "gridworld", "size": 5, "discount": 0.997},
        "model": {"hidden_size": 32, "layer_width": 64,
                  "support_min": -20, "support_max": 20},
        "search": {"num_simulations": 25, "c1": 1.25, "c2": 19652.0,
                   "dirichlet_alpha": 0.3, "exploration_fraction": 0.25},
        "replay": {"capacity": 1500, "prioritized": True, "priority_alpha": 1.0,
                   "importance_beta": 1.0, "unroll_steps": 5, "bootstrap_steps": 10,
                   "samples_per_state": 4.0},
        "training": {"batch_size": 64, "total_steps": 2500, "learning_rate": 0.05,
                     "lr_decay_rate": 0.1, "lr_decay_steps": 20_000, "momentum": 0.9,
                     "weight_decay": 1e-4, "checkpoint_interval": 25,
                     "target_refresh_interval": 100},
        "temperature": {"breakpoints": [[1250, 1.0], [1875, 0.5], [None, 0.25]]},
        "selfplay": {"actor_count": 1, "min_buffer_games": 20},
        "evaluation": {"interval_steps": 250, "episodes": 10},
    }


PRESETS = {"tictactoe": desk_tictactoe, "chain": desk_chain, "gridworld": desk_gridworld}
