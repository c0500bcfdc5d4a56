"""Acting: play games with search under the latest weight snapshot.

MDP episodes sample from the tempered visit distribution throughout; board
games temper only an opening-move budget and play the visit argmax afterwards.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from .mcts import SearchConfig, run_search, sample_action
from .replay import Trajectory


@dataclass(frozen=True)
class TemperatureSchedule:
    """Step-indexed temperature breakpoints: T applies while step < threshold.

    The final threshold may be None to cover the rest of training.
    """

    breakpoints: tuple  # ((threshold | None, temperature), ...)

    def __post_init__(self):
        if not self.breakpoints:
            raise ValueError("schedule needs at least one breakpoint")
        last = -1
        for threshold, temp in self.breakpoints[:-1]:
            if threshold is None or threshold <= last:
                raise ValueError("thresholds must be strictly increasing")
            last = threshold
            if temp < 0:
                raise ValueError("temperature must be >= 0")

    def resolve(self, step: int) -> float:
        for threshold, temp in self.breakpoints:
            if threshold is None or step < threshold:
                return temp
        return self.breakpoints[-1][1]

    @classmethod
    def proportional(cls, total_steps: int,
                     fractions=((0.5, 1.0), (0.75, 0.5), (None, 0.25))) -> "TemperatureSchedule":
        """Rescale the 50%/25%/25% schedule onto a desk-scale step budget."""
        points = []
        for frac, temp in fractions:
            points.append((None if frac is None else int(frac * total_steps), temp))
        return cls(tuple(points))


class SnapshotStore:
    """Atomic publish/fetch of weight snapshots with a monotone version."""

    def __init__(self):
        self._lock = threading.Lock()
        self._network = None
        self._version = -1

    def publish(self, network, version: int):
        with self._lock:
            if version < self._version:
                raise ValueError(f"snapshot version went backwards: {version} < {self._version}")
            self._network = network
            self._version = version

    def latest(self):
        """Returns (version, network); raises LookupError before first publish."""
        with self._lock:
            if self._network is None:
                raise LookupError("no snapshot published yet")
            return self._version, self._network


def play_game(env, network, search_cfg: SearchConfig, temperature: float,
              rng: np.random.Generator, greedy_after_move: int | None = None,
              add_noise: bool = True, collect_depths: bool = False):
    """Play one full episode; returns (Trajectory, diagnostics).

    Search runs with root noise at every step; actions are drawn from the
    tempered visit distribution, switching to the deterministic argmax after
    ``greedy_after_move`` moves when that budget is set (board-game scheme).
    """
    num_players = env.spec.num_players
    observations, actions, rewards, policies, values, players, masks = \
        [], [], [], [], [], [], []
    depths = []
    obs = env.reset()
    terminal = False
    move = 0
    while not terminal and move < env.spec.max_moves:
        legal = env.legal_actions()
        result = run_search(network, obs, legal, search_cfg, rng=rng,
                            num_players=num_players, to_play=env.to_play,
                            add_noise=add_noise)
        temp = temperature
        if greedy_after_move is not None and move >= greedy_after_move:
            temp = 0.0
        action = sample_action(result.visit_counts, temp, rng)
        observations.append(obs)
        actions.append(int(action))
        policies.append(result.policy)
        values.append(result.root_value)
        players.append(env.to_play)
        masks.append(legal)
        if collect_depths:
            depths.append(result.max_depth)
        step = env.step(action)
        rewards.append(step.reward)
        obs = step.observation
        terminal = step.terminal
        move += 1
    traj = Trajectory(observations=observations, actions=actions, rewards=rewards,
                      policies=policies, root_values=values, to_play=players,
                      legal_masks=masks)
    diagnostics = {"moves": move, "depths": depths,
                   "outcome": rewards[-1] if rewards else 0.0}
    return traj, diagnostics


class Actor:
    """One self-play worker: owns an environment and an rng stream."""

    def __init__(self, actor_id: int, env, search_cfg: SearchConfig,
                 schedule: TemperatureSchedule, rng: np.random.Generator,
                 greedy_after_move: int | None = None):
        self.actor_id = actor_id
        self.env = env
        self.search_cfg = search_cfg
        self.schedule = schedule
        self.rng = rng
        self.greedy_after_move = greedy_after_move
        self.games_played = 0
        self.last_version = -1

    def play_one(self, snapshots: SnapshotStore, learner_step: int,
                 fetch_retries: int = 10, retry_delay: float = 0.05):
        """Fetch the newest snapshot (with retry/backoff) and play one game."""
        delay = retry_delay
        for attempt in range(fetch_retries):
            try:
                version, network = snapshots.latest()
                break
            except LookupError:
                if attempt == fetch_retries - 1:
                    raise
                time.sleep(delay)
                delay *= 2
        if version < self.last_version:
            raise RuntimeError(f"snapshot version regressed: {version} < {self.last_version}")
        self.last_version = version
        temperature = self.schedule.resolve(learner_step)
        traj, diag = play_game(self.env, network, self.search_cfg, temperature,
                               self.rng, greedy_after_move=self.greedy_after_move)
        self.games_played += 1
        diag.update({"actor": self.actor_id, "snapshot_version": version,
                     "temperature": temperature})
        return traj, diag


def actor_loop(actor: Actor, snapshots: SnapshotStore, buffer, current_step,
               stop_event: threading.Event, on_game=None):
    """Run an actor until stopped: fetch snapshot, play, append.

    ``current_step`` is a zero-argument callable reporting the learner's step
    (for temperature resolution). Used by the concurrency tests and available
    for multi-threaded runs; the CLI drives actors round-robin instead so that
    complete runs stay bit-reproducible.
    """
    while not stop_event.is_set():
        traj, diag = actor.play_one(snapshots, current_step())
        buffer.append(traj)
        if on_game is not None:
            on_game(traj, diag)
