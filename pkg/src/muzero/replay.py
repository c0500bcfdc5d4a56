"""Trajectory storage, prioritized sampling, and K-step training targets.

Targets follow the two regimes of the training objective: board games
propagate the final outcome to every in-episode step, MDPs bootstrap n steps
into the future from the stored search values. Positions past the end of an
episode become absorbing rows: value and reward targets of zero with the
policy loss disabled.
"""

from __future__ import annotations

import json
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    """One finished episode, aligned per decision step."""

    observations: list  # np arrays
    actions: list
    rewards: list  # reward received after each action
    policies: list  # search visit distributions over the full action space
    root_values: list
    to_play: list
    legal_masks: list

    def __len__(self) -> int:
        return len(self.actions)

    def validate(self, action_space_size: int):
        n = len(self.actions)
        if n == 0:
            raise ValueError("empty trajectory")
        fields = {"observations": self.observations, "rewards": self.rewards,
                  "policies": self.policies, "root_values": self.root_values,
                  "to_play": self.to_play, "legal_masks": self.legal_masks}
        for name, seq in fields.items():
            if len(seq) != n:
                raise ValueError(f"trajectory field {name} has length {len(seq)}, expected {n}")
        for t, pi in enumerate(self.policies):
            pi = np.asarray(pi)
            if pi.shape != (action_space_size,) or abs(float(pi.sum()) - 1.0) > 1e-6:
                raise ValueError(f"policy at step {t} is not a distribution over "
                                 f"{action_space_size} actions")
        for t, a in enumerate(self.actions):
            if not 0 <= a < action_space_size:
                raise ValueError(f"action {a} at step {t} out of range")

    def to_record(self) -> dict:
        return {
            "observations": [np.asarray(o).tolist() for o in self.observations],
            "actions": [int(a) for a in self.actions],
            "rewards": [float(r) for r in self.rewards],
            "policies": [np.asarray(p).tolist() for p in self.policies],
            "root_values": [float(v) for v in self.root_values],
            "to_play": [int(p) for p in self.to_play],
            "legal_masks": [np.asarray(m).astype(int).tolist() for m in self.legal_masks],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Trajectory":
        return cls(
            observations=[np.array(o, dtype=np.float64) for o in rec["observations"]],
            actions=list(rec["actions"]),
            rewards=list(rec["rewards"]),
            policies=[np.array(p, dtype=np.float64) for p in rec["policies"]],
            root_values=list(rec["root_values"]),
            to_play=list(rec["to_play"]),
            legal_masks=[np.array(m, dtype=bool) for m in rec["legal_masks"]],
        )


@dataclass(frozen=True)
class ReplayConfig:
    capacity: int = 2000  # games
    prioritized: bool = True  # board games sample uniformly
    priority_alpha: float = 1.0
    importance_beta: float = 1.0
    unroll_steps: int = 5
    bootstrap_steps: int = 10
    reanalyze_fraction: float = 0.0
    reanalyze_bootstrap_steps: int = 5
    reanalyze_value_weight: float = 0.25
    samples_per_state: float = 4.0

    def __post_init__(self):
        if self.capacity < 1 or self.unroll_steps < 1 or self.bootstrap_steps < 1:
            raise ValueError("capacity, unroll_steps, bootstrap_steps must be >= 1")
        if self.priority_alpha < 0 or self.importance_beta < 0:
            raise ValueError("priority_alpha and importance_beta must be >= 0")
        if not 0.0 <= self.reanalyze_fraction <= 1.0:
            raise ValueError("reanalyze_fraction must be in [0, 1]")


@dataclass
class TrainingTarget:
    """Aligned targets for one sampled position, rows k = 0..K."""

    game_id: int
    t: int
    observation: np.ndarray
    actions: np.ndarray  # (K,) real actions, rng-filled past terminal
    value: np.ndarray  # (K+1,)
    reward: np.ndarray  # (K+1,), row 0 unused
    policy: np.ndarray  # (K+1, A)
    policy_valid: np.ndarray  # (K+1,) 0/1
    reward_valid: np.ndarray  # (K+1,) 0/1
    weight: float = 1.0
    value_weight: float = 1.0


def board_value_target(traj: Trajectory, j: int) -> float:
    """Final outcome from the perspective of the player to move at step j."""
    if j >= len(traj):
        return 0.0
    outcome = traj.rewards[-1]
    final_mover = traj.to_play[len(traj) - 1]
    return outcome if traj.to_play[j] == final_mover else -outcome


def mdp_value_target(traj: Trajectory, j: int, n: int, gamma: float,
                     bootstrap_values=None) -> float:
    """n-step bootstrapped return from step j; the bootstrap term is dropped
    when j+n runs off the end of the episode (pure Monte-Carlo tail)."""
    if j >= len(traj):
        return 0.0
    z = 0.0
    g = 1.0
    for tau in range(n):
        if j + tau >= len(traj):
            return z
        z += g * traj.rewards[j + tau]
        g *= gamma
    if j + n < len(traj):
        values = traj.root_values if bootstrap_values is None else bootstrap_values
        z += g * values[j + n]
    return z


def position_value_target(traj: Trajectory, j: int, n: int, gamma: float,
                          num_players: int, bootstrap_values=None) -> float:
    if num_players == 2:
        return board_value_target(traj, j)
    return mdp_value_target(traj, j, n, gamma, bootstrap_values)


def make_targets(traj: Trajectory, t: int, unroll_steps: int, bootstrap_steps: int,
                 gamma: float, num_players: int, action_space_size: int,
                 rng: np.random.Generator, game_id: int = -1,
                 bootstrap_values=None, policy_overrides: dict | None = None,
                 value_weight: float = 1.0) -> TrainingTarget:
    """Build the K+1 target rows for a position sampled at step t."""
    if not 0 <= t < len(traj):
        raise IndexError(f"step {t} outside trajectory of length {len(traj)}")
    K = unroll_steps
    A = action_space_size
    value = np.zeros(K + 1)
    reward = np.zeros(K + 1)
    policy = np.full((K + 1, A), 1.0 / A)
    policy_valid = np.zeros(K + 1)
    reward_valid = np.zeros(K + 1)
    actions = np.zeros(K, dtype=np.int64)
    for k in range(K + 1):
        j = t + k
        value[k] = position_value_target(traj, j, bootstrap_steps, gamma, num_players,
                                         bootstrap_values)
        if j < len(traj):
            pi = policy_overrides.get(j) if policy_overrides else None
            policy[k] = pi if pi is not None else traj.policies[j]
            policy_valid[k] = 1.0
        if k >= 1:
            if j - 1 < len(traj):
                reward[k] = traj.rewards[j - 1]
                actions[k - 1] = traj.actions[j - 1]
            else:
                actions[k - 1] = rng.integers(A)  # absorbing filler action
            if num_players == 1:
                reward_valid[k] = 1.0  # absorbing rows train the reward head to 0
    if num_players == 2:
        reward_valid[:] = 0.0  # board games omit the reward loss entirely
    return TrainingTarget(game_id=game_id, t=t, observation=np.asarray(traj.observations[t]),
                          actions=actions, value=value, reward=reward, policy=policy,
                          policy_valid=policy_valid, reward_valid=reward_valid,
                          value_weight=value_weight)


class ReplayBuffer:
    """FIFO game store with prioritized (or uniform) position sampling.

    Thread-safe for concurrent appends and sampling: mutations happen under a
    lock, so a sample sees a prefix-consistent snapshot of insertions and
    priority updates are atomic per position.
    """

    def __init__(self, config: ReplayConfig, action_space_size: int, gamma: float,
                 num_players: int, rng: np.random.Generator):
        self.config = config
        self.action_space_size = action_space_size
        self.gamma = gamma
        self.num_players = num_players
        self.rng = rng
        self.games: "OrderedDict[int, Trajectory]" = OrderedDict()
        self.priorities: dict[int, np.ndarray] = {}
        self.next_game_id = 0
        self.total_games_added = 0
        self.total_positions_added = 0
        self.stale_priority_updates = 0
        self._lock = threading.Lock()
        self._keys_cache = None

    def __len__(self) -> int:
        return len(self.games)

    @property
    def num_positions(self) -> int:
        return sum(len(t) for t in self.games.values())

    def initial_priorities(self, traj: Trajectory) -> np.ndarray:
        cfg = self.config
        return np.array([
            abs(traj.root_values[i] - position_value_target(
                traj, i, cfg.bootstrap_steps, self.gamma, self.num_players))
            for i in range(len(traj))])

    def append(self, traj: Trajectory) -> int:
        traj.validate(self.action_space_size)
        prio = self.initial_priorities(traj)
        with self._lock:
            gid = self.next_game_id
            self.next_game_id += 1
            self.games[gid] = traj
            self.priorities[gid] = prio
            self.total_games_added += 1
            self.total_positions_added += len(traj)
            while len(self.games) > self.config.capacity:
                old, _ = self.games.popitem(last=False)
                del self.priorities[old]
            self._keys_cache = None
        return gid

    def _position_index(self):
        # Keys only change on append/evict; priority arrays mutate in place.
        if self._keys_cache is None:
            self._keys_cache = [(gid, t) for gid, traj in self.games.items()
                                for t in range(len(traj))]
        prios = [self.priorities[gid] for gid in self.games]
        return self._keys_cache, np.concatenate(prios) if prios else np.zeros(0)

    def sample_positions(self, batch_size: int):
        """Draw (game_id, t, importance_weight) triples under the sampling law."""
        with self._lock:
            keys, prios = self._position_index()
            if not keys:
                raise ValueError("cannot sample from an empty buffer")
            n = len(keys)
            if self.config.prioritized:
                scaled = prios ** self.config.priority_alpha
                total = scaled.sum()
                if total <= 0:
                    probs = np.full(n, 1.0 / n)
                else:
                    probs = scaled / total
                idx = self.rng.choice(n, size=batch_size, p=probs)
                weights = (1.0 / (n * probs[idx])) ** self.config.importance_beta
            else:
                idx = self.rng.integers(n, size=batch_size)
                weights = np.ones(batch_size)
            return [(keys[i][0], keys[i][1], float(w)) for i, w in zip(idx, weights)]

    def sample_batch(self, batch_size: int) -> list[TrainingTarget]:
        cfg = self.config
        positions = self.sample_positions(batch_size)
        out = []
        for gid, t, w in positions:
            target = make_targets(self.games[gid], t, cfg.unroll_steps, cfg.bootstrap_steps,
                                  self.gamma, self.num_players, self.action_space_size,
                                  self.rng, game_id=gid)
            target.weight = w
            out.append(target)
        return out

    def update_priorities(self, keys, new_priorities):
        """Replace priorities for (game_id, t) keys; stale game ids are counted
        and skipped so refreshes may race with eviction."""
        with self._lock:
            for (gid, t), p in zip(keys, new_priorities):
                arr = self.priorities.get(gid)
                if arr is None or t >= len(arr):
                    self.stale_priority_updates += 1
                    continue
                arr[t] = abs(float(p))

    def save_jsonl(self, path):
        with self._lock:
            with open(path, "w") as fh:
                for gid, traj in self.games.items():
                    rec = {"game_id": gid, "priorities": self.priorities[gid].tolist()}
                    rec.update(traj.to_record())
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def load_jsonl(self, path):
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                traj = Trajectory.from_record(rec)
                with self._lock:
                    gid = rec["game_id"]
                    self.games[gid] = traj
                    self.priorities[gid] = np.array(rec["priorities"])
                    self.next_game_id = max(self.next_game_id, gid + 1)


class Reanalyzer:
    """Refresh stored targets with searches under the latest weights.

    Fresh policy targets come from re-running the search at stored positions;
    value targets bootstrap from a lagged target network instead of the stored
    search values, with a shorter horizon and a down-weighted value loss.
    Searches are deterministic (no root noise), so results are memoized per
    (network version, observation) within a pass.
    """

    def __init__(self, search_config, num_players: int):
        self.search_config = search_config
        self.num_players = num_players
        self._policy_cache: dict = {}
        self._value_cache: dict = {}

    def _fresh_policy(self, network, traj: Trajectory, j: int) -> np.ndarray:
        from .mcts import run_search
        key = (network.version, traj.observations[j].tobytes())
        hit = self._policy_cache.get(key)
        if hit is not None:
            return hit
        result = run_search(network, traj.observations[j], traj.legal_masks[j],
                            self.search_config, num_players=self.num_players,
                            to_play=traj.to_play[j], add_noise=False)
        self._policy_cache[key] = result.policy
        return result.policy

    def _target_value(self, target_network, traj: Trajectory, j: int) -> float:
        key = (target_network.version, traj.observations[j].tobytes())
        hit = self._value_cache.get(key)
        if hit is None:
            _, _, hit = target_network.initial_inference(traj.observations[j])
            self._value_cache[key] = hit
        return hit

    def refresh_target(self, buffer: ReplayBuffer, network, target_network,
                       gid: int, t: int, weight: float) -> TrainingTarget:
        cfg = buffer.config
        traj = buffer.games[gid]
        last = min(len(traj) - 1, t + cfg.unroll_steps)
        overrides = {j: self._fresh_policy(network, traj, j) for j in range(t, last + 1)}
        bootstrap = None
        if self.num_players == 1:
            bootstrap = [self._target_value(target_network, traj, j) for j in range(len(traj))]
        target = make_targets(traj, t, cfg.unroll_steps, cfg.reanalyze_bootstrap_steps,
                              buffer.gamma, self.num_players, buffer.action_space_size,
                              buffer.rng, game_id=gid, bootstrap_values=bootstrap,
                              policy_overrides=overrides,
                              value_weight=cfg.reanalyze_value_weight)
        target.weight = weight
        return target
