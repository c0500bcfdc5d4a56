"""Training: unroll the model along sampled trajectories and step the optimizer.

Also houses the model-free Q-learning baseline used by the ablation harness:
same observation trunk shape, a single Q head over actions, n-step targets,
and no search at act time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .codec import inverse_transform
from .model import Network, OptimizerConfig, SgdMomentum, unrolled_loss
from .replay import Reanalyzer, ReplayBuffer, TrainingTarget, make_targets


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 128
    total_steps: int = 10_000
    learning_rate: float = 0.05
    lr_decay_rate: float = 0.1
    lr_decay_steps: int = 100_000
    momentum: float = 0.9
    weight_decay: float = 1e-4  # the L2 coefficient c
    checkpoint_interval: int = 100
    target_refresh_interval: int = 200

    def __post_init__(self):
        if self.batch_size < 1 or self.total_steps < 0:
            raise ValueError("batch_size must be >= 1 and total_steps >= 0")
        if self.checkpoint_interval < 1 or self.target_refresh_interval < 1:
            raise ValueError("intervals must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(learning_rate=self.learning_rate,
                               lr_decay_rate=self.lr_decay_rate,
                               lr_decay_steps=self.lr_decay_steps,
                               momentum=self.momentum,
                               weight_decay=self.weight_decay)


def batch_arrays(targets: list[TrainingTarget]) -> dict:
    """Stack TrainingTargets into the array batch consumed by the loss."""
    return {
        "obs": np.stack([t.observation for t in targets]).astype(np.float64),
        "actions": np.stack([t.actions for t in targets]),
        "value_target": np.stack([t.value for t in targets]),
        "reward_target": np.stack([t.reward for t in targets]),
        "policy_target": np.stack([t.policy for t in targets]),
        "policy_valid": np.stack([t.policy_valid for t in targets]),
        "reward_valid": np.stack([t.reward_valid for t in targets]),
        "sample_weight": np.array([t.weight for t in targets]),
        "value_weight": np.array([t.value_weight for t in targets]),
    }


def loss_for_sample(network: Network, target: TrainingTarget,
                    l2_coefficient: float = 0.0) -> dict:
    """Loss breakdown for a single sampled position (no gradients)."""
    metrics, _ = unrolled_loss(network, network.params, batch_arrays([target]),
                               l2_coefficient=l2_coefficient, compute_grads=False)
    return metrics


def decode_values(network: Network, value_out: np.ndarray) -> np.ndarray:
    """Batched value-head decode to scalars."""
    if network.config.value_mode == "scalar":
        return value_out[:, 0]
    probs = nn.softmax(value_out)
    return inverse_transform(probs @ network.config.codec.supports,
                             network.config.codec.epsilon)


class Learner:
    """Owns the training network; actors see published copies only."""

    def __init__(self, network: Network, buffer: ReplayBuffer, config: TrainingConfig,
                 rng: np.random.Generator, snapshots=None, reanalyze_search_config=None,
                 metrics_sink=None):
        self.network = network
        self.buffer = buffer
        self.config = config
        self.rng = rng
        self.snapshots = snapshots
        self.metrics_sink = metrics_sink
        self.optimizer = SgdMomentum(config.optimizer_config())
        self.step_count = 0
        self.target_network = network.copy()
        search_cfg = reanalyze_search_config
        self.reanalyzer = (Reanalyzer(search_cfg, buffer.num_players)
                           if search_cfg is not None else None)
        if snapshots is not None:
            snapshots.publish(network.copy(), version=0)

    def _gather_batch(self) -> list[TrainingTarget]:
        cfg = self.buffer.config
        fraction = cfg.reanalyze_fraction if self.reanalyzer is not None else 0.0
        positions = self.buffer.sample_positions(self.config.batch_size)
        targets = []
        for gid, t, w in positions:
            if fraction > 0.0 and self.rng.random() < fraction:
                targets.append(self.reanalyzer.refresh_target(
                    self.buffer, self.network, self.target_network, gid, t, w))
            else:
                target = make_targets(self.buffer.games[gid], t, cfg.unroll_steps,
                                      cfg.bootstrap_steps, self.buffer.gamma,
                                      self.buffer.num_players, self.buffer.action_space_size,
                                      self.buffer.rng, game_id=gid)
                target.weight = w
                targets.append(target)
        return targets

    def train_step(self) -> dict:
        """One optimizer step on a freshly sampled batch.

        Refreshes the sampled positions' priorities from the new value
        predictions, publishes a snapshot on the checkpoint cadence, and
        refreshes the reanalyze target network on its own cadence.
        """
        targets = self._gather_batch()
        batch = batch_arrays(targets)
        try:
            metrics, grads = unrolled_loss(self.network, self.network.params, batch,
                                           l2_coefficient=self.config.weight_decay)
        except FloatingPointError as exc:
            raise FloatingPointError(
                f"aborting step {self.step_count}: {exc}; "
                f"sampled positions {[(t.game_id, t.t) for t in targets[:8]]}...") from exc
        lr = self.optimizer.step(self.network.params, grads, self.step_count)
        self.step_count += 1
        self.network.version = self.step_count

        if self.buffer.config.prioritized:
            state, _ = self.network.represent_batch(self.network.params, batch["obs"])
            _, value_out, _ = self.network.predict_batch(self.network.params, state)
            fresh = np.abs(decode_values(self.network, value_out) - batch["value_target"][:, 0])
            self.buffer.update_priorities([(t.game_id, t.t) for t in targets], fresh)

        if self.step_count % self.config.target_refresh_interval == 0:
            self.target_network = self.network.copy()
        if self.snapshots is not None and self.step_count % self.config.checkpoint_interval == 0:
            self.snapshots.publish(self.network.copy(), version=self.step_count)

        record = {
            "kind": "train_step",
            "step": self.step_count,
            "total_loss": metrics["total_loss"],
            "policy_loss": metrics["policy_loss"],
            "value_loss": metrics["value_loss"],
            "reward_loss": metrics["reward_loss"],
            "l2_loss": metrics["l2_loss"],
            "learning_rate": lr,
        }
        if self.metrics_sink is not None:
            self.metrics_sink(record)
        return record


@dataclass(frozen=True)
class QBaselineConfig:
    n_step: int = 5
    batch_size: int = 128
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    target_refresh_interval: int = 200
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 5_000


class QLearner:
    """n-step Q-learning on the same observation trunk shape, no search."""

    def __init__(self, observation_size: int, action_space_size: int, gamma: float,
                 config: QBaselineConfig, rng: np.random.Generator,
                 layer_width: int = 64):
        self.config = config
        self.gamma = gamma
        self.action_space_size = action_space_size
        self.mlp = nn.Mlp("q", [observation_size, layer_width, layer_width,
                                action_space_size])
        self.params: nn.Params = {}
        self.mlp.init(self.params, rng)
        self.target_params = {k: v.copy() for k, v in self.params.items()}
        self.optimizer = SgdMomentum(OptimizerConfig(
            learning_rate=config.learning_rate, momentum=config.momentum,
            weight_decay=config.weight_decay))
        self.step_count = 0
        self.rng = rng

    def q_values(self, obs: np.ndarray, params: nn.Params | None = None) -> np.ndarray:
        params = self.params if params is None else params
        out, _ = self.mlp.forward(params, np.atleast_2d(np.asarray(obs, dtype=np.float64)))
        return out

    def epsilon(self) -> float:
        c = self.config
        frac = min(1.0, self.step_count / max(c.epsilon_decay_steps, 1))
        return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)

    def act(self, obs: np.ndarray, legal_mask: np.ndarray, greedy: bool = False) -> int:
        legal = np.asarray(legal_mask, dtype=bool)
        if not greedy and self.rng.random() < self.epsilon():
            choices = np.flatnonzero(legal)
            return int(self.rng.choice(choices))
        q = self.q_values(obs)[0]
        return int(np.argmax(np.where(legal, q, -np.inf)))

    def make_batch(self, buffer: ReplayBuffer):
        """Uniform positions with n-step targets bootstrapped from the target net."""
        n = self.config.n_step
        positions = [(gid, t) for gid, t, _ in buffer.sample_positions(self.config.batch_size)]
        obs, acts, returns, boot_obs, boot_mask = [], [], [], [], []
        for gid, t in positions:
            traj = buffer.games[gid]
            z, g = 0.0, 1.0
            for tau in range(n):
                if t + tau >= len(traj):
                    break
                z += g * traj.rewards[t + tau]
                g *= self.gamma
            obs.append(traj.observations[t])
            acts.append(traj.actions[t])
            returns.append(z)
            if t + n < len(traj):
                boot_obs.append(traj.observations[t + n])
                boot_mask.append(g)
            else:
                boot_obs.append(np.zeros_like(traj.observations[t]))
                boot_mask.append(0.0)
        return (np.stack(obs), np.array(acts), np.array(returns),
                np.stack(boot_obs), np.array(boot_mask))

    def train_step(self, buffer: ReplayBuffer) -> dict:
        obs, acts, returns, boot_obs, boot_mask = self.make_batch(buffer)
        boot_q = self.q_values(boot_obs, self.target_params).max(axis=1)
        targets = returns + boot_mask * boot_q
        out, cache = self.mlp.forward(self.params, obs.astype(np.float64))
        rows = np.arange(len(acts))
        diff = out[rows, acts] - targets
        loss = float(np.mean(diff * diff))
        d_out = np.zeros_like(out)
        d_out[rows, acts] = 2.0 * diff / len(acts)
        grads = nn.zeros_like_params(self.params)
        self.mlp.backward(self.params, grads, cache, d_out)
        lr = self.optimizer.step(self.params, grads, self.step_count)
        self.step_count += 1
        if self.step_count % self.config.target_refresh_interval == 0:
            self.target_params = {k: v.copy() for k, v in self.params.items()}
        return {"kind": "q_train_step", "step": self.step_count, "loss": loss,
                "learning_rate": lr, "epsilon": self.epsilon()}
