"""Run orchestration: actors and learner interleaved deterministically.

Actors take turns playing one game each, then the learner takes as many
optimizer steps as the samples-per-state budget allows. The schedule is
single-threaded and all randomness comes from named substreams, so a run is
bit-reproducible from (config, seed) and resumable from its saved state.
The thread-safe snapshot/buffer surfaces are exercised by the concurrency
tests; this driver chooses determinism over parallel speedup.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .config import RunConfig, derive_seed, substream
from .evaluation import (MinimaxAgent, RandomAgent, SearchAgent, evaluate_return,
                         play_match, search_depth_histogram)
from .learner import Learner
from .metrics import MetricsWriter
from .model import Network, load_checkpoint, save_checkpoint
from .replay import ReplayBuffer
from .selfplay import Actor, SnapshotStore, play_game

CONFIG_FILENAME = "config.json"
LATEST_CHECKPOINT = "ckpt_latest.npz"
FINAL_CHECKPOINT = "ckpt_final.npz"
BUFFER_FILENAME = "replay_buffer.jsonl"
METRICS_FILENAME = "metrics.jsonl"


class TrainRun:
    """One training run rooted at an output directory."""

    def __init__(self, config: RunConfig, out_dir, resume: bool = False, echo=None):
        self.config = config
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        metrics_path = self.out_dir / METRICS_FILENAME
        if not resume:
            if metrics_path.exists():
                raise FileExistsError(
                    f"{metrics_path} already exists; use resume or a fresh directory")
            config.save(self.out_dir / CONFIG_FILENAME)
        self.metrics = MetricsWriter(metrics_path, echo=echo)

        seed = config.seed
        self.env = config.build_env()
        spec = self.env.spec
        self.model_config = config.build_model_config(self.env)
        self.search_config = config.build_search_config(self.env)
        self.replay_config = config.build_replay_config()
        self.training_config = config.build_training_config()
        self.schedule = config.build_schedule()
        self.selfplay_opts = config.selfplay
        self.eval_opts = config.evaluation

        self.network = Network(self.model_config, rng=substream(seed, "init"))
        self.snapshots = SnapshotStore()
        self.buffer = ReplayBuffer(self.replay_config, spec.action_space_size,
                                   spec.discount, spec.num_players,
                                   rng=substream(seed, "replay"))
        reanalyze_cfg = None
        if self.replay_config.reanalyze_fraction > 0.0:
            sims = config.reanalyze_num_simulations or self.search_config.num_simulations
            reanalyze_cfg = config.build_search_config(self.env, num_simulations=sims)
        self.learner = Learner(self.network, self.buffer, self.training_config,
                               rng=substream(seed, "learner"), snapshots=self.snapshots,
                               reanalyze_search_config=reanalyze_cfg,
                               metrics_sink=self.metrics.write)
        self.actors = []
        for i in range(self.selfplay_opts["actor_count"]):
            self.actors.append(Actor(
                actor_id=i, env=config.build_env(), search_cfg=self.search_config,
                schedule=self.schedule, rng=substream(seed, f"selfplay/{i}"),
                greedy_after_move=self.selfplay_opts["greedy_after_move"]))

        self.iteration = 0
        self.games_played = 0
        self.env_steps = 0
        self.samples_drawn = 0
        self.next_eval = self.eval_opts["interval_steps"]
        if resume:
            self._load_state()

    # -- state save/restore ------------------------------------------------

    def _rng_states(self) -> dict:
        states = {"replay": self.buffer.rng.bit_generator.state,
                  "learner": self.learner.rng.bit_generator.state}
        for actor in self.actors:
            states[f"selfplay/{actor.actor_id}"] = actor.rng.bit_generator.state
        return states

    def _restore_rng_states(self, states: dict):
        self.buffer.rng.bit_generator.state = states["replay"]
        self.learner.rng.bit_generator.state = states["learner"]
        for actor in self.actors:
            actor.rng.bit_generator.state = states[f"selfplay/{actor.actor_id}"]

    def save_state(self, filename: str = LATEST_CHECKPOINT):
        extras = {}
        for name, v in self.learner.optimizer.state_dict().items():
            extras[f"opt/{name}"] = v
        for name, v in self.learner.target_network.params.items():
            extras[f"target/{name}"] = v
        # Actors may lag behind the learner by up to a checkpoint interval, so
        # the published snapshot is part of the run state.
        snap_version, snap_net = self.snapshots.latest()
        for name, v in snap_net.params.items():
            extras[f"snap/{name}"] = v
        run_state = {
            "iteration": self.iteration,
            "games_played": self.games_played,
            "env_steps": self.env_steps,
            "samples_drawn": self.samples_drawn,
            "next_eval": self.next_eval,
            "snapshot_version": snap_version,
            "buffer_games_added": self.buffer.total_games_added,
            "buffer_positions_added": self.buffer.total_positions_added,
            "rng_states": json.dumps(self._rng_states()),
        }
        save_checkpoint(self.out_dir / filename, self.network, self.learner.step_count,
                        extras=extras,
                        meta_extra={"run_state": run_state,
                                    "environment": self.config.raw["environment"]})
        self.buffer.save_jsonl(self.out_dir / BUFFER_FILENAME)

    def _load_state(self):
        network, step, extras, meta = load_checkpoint(self.out_dir / LATEST_CHECKPOINT)
        if network.config != self.model_config:
            raise ValueError("checkpoint model config does not match the run config")
        self.network.params = network.params
        self.network.version = network.version
        self.learner.network = self.network
        self.learner.step_count = step
        velocity = {k[len("opt/"):]: v for k, v in extras.items() if k.startswith("opt/")}
        self.learner.optimizer.load_state_dict(velocity)
        target = {k[len("target/"):]: v for k, v in extras.items() if k.startswith("target/")}
        if target:
            self.learner.target_network = Network(self.model_config, params=target,
                                                  version=network.version)
        state = meta["run_state"]
        self.iteration = state["iteration"]
        self.games_played = state["games_played"]
        self.env_steps = state["env_steps"]
        self.samples_drawn = state["samples_drawn"]
        self.next_eval = state["next_eval"]
        buffer_path = self.out_dir / BUFFER_FILENAME
        if buffer_path.exists():
            self.buffer.load_jsonl(buffer_path)
        self.buffer.total_games_added = state["buffer_games_added"]
        self.buffer.total_positions_added = state["buffer_positions_added"]
        self._restore_rng_states(json.loads(state["rng_states"]))
        snap_params = {k[len("snap/"):]: v for k, v in extras.items()
                       if k.startswith("snap/")}
        snap = Network(self.model_config, params=snap_params,
                       version=state["snapshot_version"])
        self.snapshots.publish(snap, version=state["snapshot_version"])

    # -- the run loop ------------------------------------------------------

    @property
    def step_count(self) -> int:
        return self.learner.step_count

    def _games_exhausted(self) -> bool:
        max_games = self.selfplay_opts["max_games"]
        return max_games is not None and self.games_played >= max_games

    def _run_training_burst(self):
        if len(self.buffer) < self.selfplay_opts["min_buffer_games"]:
            return
        batch = self.training_config.batch_size
        budget = self.replay_config.samples_per_state * self.buffer.total_positions_added
        while (self.samples_drawn + batch <= budget
               and self.learner.step_count < self.training_config.total_steps):
            self.learner.train_step()
            self.samples_drawn += batch
            while self.learner.step_count >= self.next_eval:
                self._run_eval(self.learner.step_count)
                self.next_eval += self.eval_opts["interval_steps"]

    def _run_eval(self, step: int):
        seed = derive_seed(self.config.seed, "eval", step)
        agent = SearchAgent(self.network.copy(), self.search_config, temperature=0.0)
        record = {"kind": "eval", "step": step, "games_played": self.games_played,
                  "env_steps": self.env_steps}
        if self.env.spec.num_players == 2:
            opponent = MinimaxAgent() if self.eval_opts["opponent"] == "minimax" else RandomAgent()
            match = play_match(agent, opponent, self.config.env_factory(),
                               self.eval_opts["episodes"], seed=seed)
            wins, draws, losses = match.counts()
            record.update({"mode": "board", "opponent": opponent.name, "score": match.score(),
                           "wins": wins, "draws": draws, "losses": losses})
        else:
            returns = evaluate_return(self.config.env_factory(), agent,
                                      self.eval_opts["episodes"], seed=seed)
            record.update({"mode": "mdp", "mean_return": float(np.mean(returns)),
                           "median_return": float(np.median(returns))})
        self.metrics.write(record)
        self._emit_depth_diagnostics(step)

    def _emit_depth_diagnostics(self, step: int):
        env = self.config.build_env()
        rng = np.random.default_rng(derive_seed(self.config.seed, "eval-depth", step))
        _, diag = play_game(env, self.network, self.search_config, temperature=1.0,
                            rng=rng, add_noise=False, collect_depths=True)
        if diag["depths"]:
            record = search_depth_histogram([[d] for d in diag["depths"]])
            record.update({"step": step, "num_simulations": self.search_config.num_simulations})
            self.metrics.write(record)

    def run_iteration(self):
        """One schedule slot: each actor plays a game, then the learner catches up."""
        self.iteration += 1
        if not self._games_exhausted():
            for actor in self.actors:
                traj, diag = actor.play_one(self.snapshots, self.learner.step_count)
                self.buffer.append(traj)
                self.games_played += 1
                self.env_steps += diag["moves"]
                self.metrics.write({
                    "kind": "game", "game": self.games_played, "actor": diag["actor"],
                    "moves": diag["moves"], "outcome": diag["outcome"],
                    "snapshot_version": diag["snapshot_version"],
                    "temperature": diag["temperature"],
                    "learner_step": self.learner.step_count})
                if self._games_exhausted():
                    break
        self._run_training_burst()

    def done(self) -> bool:
        if self.learner.step_count >= self.training_config.total_steps:
            return True
        if self._games_exhausted():
            if len(self.buffer) < self.selfplay_opts["min_buffer_games"]:
                return True  # no more games allowed and not enough to start training
            batch = self.training_config.batch_size
            budget = self.replay_config.samples_per_state * self.buffer.total_positions_added
            return self.samples_drawn + batch > budget
        return False

    def run(self, max_iterations: int | None = None) -> dict:
        """Iterate to completion (or the iteration cap); returns a summary.

        The summary is written to the metrics stream only for completed runs,
        so an interrupted-then-resumed run reproduces an uninterrupted one's
        stream byte for byte.
        """
        while not self.done():
            if max_iterations is not None and self.iteration >= max_iterations:
                break
            self.run_iteration()
            if self.iteration % self.selfplay_opts["resume_interval"] == 0:
                self.save_state()
        self.save_state()
        summary = {"kind": "run_summary", "iterations": self.iteration,
                   "games_played": self.games_played, "env_steps": self.env_steps,
                   "train_steps": self.learner.step_count,
                   "samples_drawn": self.samples_drawn, "finished": self.done()}
        if self.done():
            save_checkpoint(self.out_dir / FINAL_CHECKPOINT, self.network,
                            self.learner.step_count,
                            meta_extra={"environment": self.config.raw["environment"]})
            self.metrics.write(summary)
        return summary

    def close(self):
        self.metrics.close()
