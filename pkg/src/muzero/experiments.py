"""Ablation harnesses: Q-learning baseline, reanalyze, and simulation sweeps.

Each harness runs matched-budget variants over shared seed lists and returns
line-oriented report rows.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import RunConfig, substream
from .evaluation import SearchAgent, evaluate_return
from .learner import QBaselineConfig, QLearner
from .mcts import SearchConfig
from .replay import ReplayBuffer, Trajectory
from .training import TrainRun


def train_to_completion(config: RunConfig, out_dir) -> tuple:
    """Run training to its configured budget; returns (network, summary)."""
    run = TrainRun(config, out_dir)
    try:
        summary = run.run()
    finally:
        run.close()
    return run.network, summary


def final_return(network, config: RunConfig, episodes: int = 20, seed: int = 9,
                 num_simulations: int | None = None) -> float:
    """Mean greedy discounted return of a trained network on the config's env."""
    env = config.build_env()
    cfg = config.build_search_config(env, num_simulations=num_simulations)
    cfg = SearchConfig(num_simulations=cfg.num_simulations, c1=cfg.c1, c2=cfg.c2,
                       discount=cfg.discount, dirichlet_alpha=cfg.dirichlet_alpha,
                       exploration_fraction=0.0)
    agent = SearchAgent(network, cfg, temperature=0.0)
    return float(np.mean(evaluate_return(config.env_factory(), agent, episodes, seed=seed)))


def run_q_baseline(config: RunConfig, out_dir=None) -> tuple:
    """Train the model-free baseline under the same interaction budget.

    Mirrors the training run's pacing: one epsilon-greedy episode, then as
    many batch updates as the samples-per-state budget allows. No search is
    used anywhere. Returns (qlearner, summary).
    """
    env = config.build_env()
    spec = env.spec
    if spec.num_players != 1:
        raise ValueError("the Q baseline targets single-agent environments")
    replay_cfg = config.build_replay_config()
    training_cfg = config.build_training_config()
    selfplay = config.selfplay
    seed = config.seed
    rng = substream(seed, "q-actor")
    buffer = ReplayBuffer(replay_cfg, spec.action_space_size, spec.discount,
                          spec.num_players, rng=substream(seed, "q-replay"))
    q = QLearner(spec.observation_size, spec.action_space_size, spec.discount,
                 QBaselineConfig(n_step=replay_cfg.bootstrap_steps,
                                 batch_size=training_cfg.batch_size,
                                 learning_rate=training_cfg.learning_rate,
                                 momentum=training_cfg.momentum,
                                 weight_decay=training_cfg.weight_decay,
                                 target_refresh_interval=training_cfg.target_refresh_interval,
                                 epsilon_decay_steps=max(training_cfg.total_steps // 2, 1)),
                 rng=substream(seed, "q-learner"),
                 layer_width=config.raw["model"].get("layer_width", 64))

    games = 0
    env_steps = 0
    samples_drawn = 0
    uniform = np.full(spec.action_space_size, 1.0 / spec.action_space_size)
    max_games = selfplay["max_games"]
    while q.step_count < training_cfg.total_steps:
        progressed = False
        if max_games is None or games < max_games:
            obs = env.reset()
            observations, actions, rewards, masks = [], [], [], []
            while not env.terminal and len(actions) < spec.max_moves:
                legal = env.legal_actions()
                action = q.act(obs, legal)
                observations.append(obs)
                actions.append(action)
                masks.append(legal)
                step = env.step(action)
                rewards.append(step.reward)
                obs = step.observation
            games += 1
            env_steps += len(actions)
            buffer.append(Trajectory(
                observations=observations, actions=actions, rewards=rewards,
                policies=[uniform] * len(actions), root_values=[0.0] * len(actions),
                to_play=[0] * len(actions), legal_masks=masks))
            progressed = True
        if len(buffer) >= selfplay["min_buffer_games"]:
            budget = replay_cfg.samples_per_state * buffer.total_positions_added
            while (samples_drawn + q.config.batch_size <= budget
                   and q.step_count < training_cfg.total_steps):
                q.train_step(buffer)
                samples_drawn += q.config.batch_size
                progressed = True
        if not progressed:
            break  # game budget spent and sample budget consumed
    summary = {"kind": "q_run_summary", "games_played": games, "env_steps": env_steps,
               "train_steps": q.step_count, "samples_drawn": samples_drawn}
    return q, summary


class _QAgent:
    name = "q-greedy"

    def __init__(self, qlearner: QLearner):
        self.q = qlearner

    def select_action(self, env, rng):
        return self.q.act(env.observation(), env.legal_actions(), greedy=True)


def q_final_return(qlearner: QLearner, config: RunConfig, episodes: int = 20,
                   seed: int = 9) -> float:
    agent = _QAgent(qlearner)
    return float(np.mean(evaluate_return(config.env_factory(), agent, episodes, seed=seed)))


def qlearning_ablation(base_config: RunConfig, seeds, out_dir) -> dict:
    """Search-trained agent vs the Q baseline, matched network width and budget."""
    out_dir = Path(out_dir)
    rows = []
    for seed in seeds:
        config = base_config.with_overrides(seed=seed)
        network, summary = train_to_completion(config, out_dir / f"mcts-seed{seed}")
        mcts_return = final_return(network, config)
        q, q_summary = run_q_baseline(config)
        q_return = q_final_return(q, config)
        rows.append({"kind": "ablation_qlearning", "seed": seed,
                     "mcts_return": mcts_return, "q_return": q_return,
                     "mcts_games": summary["games_played"],
                     "q_games": q_summary["games_played"],
                     "mcts_env_steps": summary["env_steps"],
                     "q_env_steps": q_summary["env_steps"]})
    report = {"kind": "ablation_qlearning_summary",
              "seeds": list(seeds),
              "mcts_median": float(np.median([r["mcts_return"] for r in rows])),
              "q_median": float(np.median([r["q_return"] for r in rows])),
              "rows": rows}
    return report


def reanalyze_ablation(base_config: RunConfig, seeds, out_dir, game_budget: int = 5000,
                       reanalyze_fraction: float = 0.8) -> dict:
    """Plain vs reanalyze training at a fixed game budget."""
    out_dir = Path(out_dir)
    rows = []
    for seed in seeds:
        shared = {"selfplay": {"max_games": game_budget}, "seed": seed}
        plain_cfg = base_config.with_overrides(
            replay={"reanalyze_fraction": 0.0}, **shared)
        re_cfg = base_config.with_overrides(
            replay={"reanalyze_fraction": reanalyze_fraction}, **shared)
        plain_net, _ = train_to_completion(plain_cfg, out_dir / f"plain-seed{seed}")
        re_net, _ = train_to_completion(re_cfg, out_dir / f"reanalyze-seed{seed}")
        rows.append({"kind": "ablation_reanalyze", "seed": seed,
                     "plain_return": final_return(plain_net, plain_cfg),
                     "reanalyze_return": final_return(re_net, re_cfg)})
    report = {"kind": "ablation_reanalyze_summary", "seeds": list(seeds),
              "game_budget": game_budget,
              "plain_median": float(np.median([r["plain_return"] for r in rows])),
              "reanalyze_median": float(np.median([r["reanalyze_return"] for r in rows])),
              "rows": rows}
    return report


def training_sims_sweep(base_config: RunConfig, train_sims, eval_sims: int, seeds,
                        out_dir) -> dict:
    """Train at different simulation counts, evaluate all at the same count."""
    out_dir = Path(out_dir)
    rows = []
    for sims in train_sims:
        returns = []
        for seed in seeds:
            config = base_config.with_overrides(search={"num_simulations": sims}, seed=seed)
            network, _ = train_to_completion(config, out_dir / f"sims{sims}-seed{seed}")
            returns.append(final_return(network, config, num_simulations=eval_sims))
        rows.append({"kind": "sims_sweep", "train_sims": sims, "eval_sims": eval_sims,
                     "returns": returns, "median_return": float(np.median(returns))})
    return {"kind": "sims_sweep_summary", "train_sims": list(train_sims),
            "eval_sims": eval_sims, "seeds": list(seeds), "rows": rows}
