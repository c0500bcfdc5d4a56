"""Command-line entry point: train, eval, play, ablate, report."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .config import (PRESETS, ConfigError, RunConfig, build_environment, derive_seed)
from .evaluation import (MinimaxAgent, RandomAgent, SearchAgent, evaluate_return,
                         play_match, search_depth_histogram, sims_scaling_study)
from .mcts import SearchConfig, run_search, sample_action
from .metrics import read_metrics, summarize
from .model import load_checkpoint
from .training import CONFIG_FILENAME, TrainRun


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.load(args.config)
    elif getattr(args, "preset", None):
        config = RunConfig(PRESETS[args.preset](seed=args.seed or 0))
    else:
        raise ConfigError("either --config or --preset is required")
    if args.seed is not None:
        config = config.with_overrides(seed=args.seed)
    return config


def cmd_train(args) -> int:
    if args.resume:
        resume_dir = Path(args.resume)
        config = RunConfig.load(resume_dir / CONFIG_FILENAME)
        run = TrainRun(config, resume_dir, resume=True, echo=_echo(args))
    else:
        config = _load_config(args)
        if not args.out:
            raise ConfigError("--out DIR is required for a fresh run")
        run = TrainRun(config, args.out, echo=_echo(args))
    try:
        summary = run.run(max_iterations=args.max_iterations)
    finally:
        run.close()
    print(json.dumps(summary, sort_keys=True))
    return 0


def _echo(args):
    # Verbosity comes from MUZERO_QUIET (the only environment variable read)
    # or the --quiet flag.
    if getattr(args, "quiet", False) or os.environ.get("MUZERO_QUIET"):
        return None

    def echo(record):
        if record["kind"] in ("eval", "run_summary"):
            print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return echo


def _load_agent_env(args):
    network, step, _, meta = load_checkpoint(args.checkpoint)
    env_section = meta.get("environment")
    if env_section is None:
        raise ConfigError("checkpoint carries no environment section")
    env = build_environment(env_section)
    cfg = SearchConfig(num_simulations=args.sims, discount=env.spec.discount,
                       exploration_fraction=0.0)
    return network, env, env_section, cfg, step


def cmd_eval(args) -> int:
    network, env, env_section, cfg, step = _load_agent_env(args)
    records = []
    seed = args.seed if args.seed is not None else 0
    agent = SearchAgent(network, cfg, temperature=args.temperature)

    def env_factory():
        return build_environment(env_section)

    if args.suite in ("vs-random", "vs-minimax"):
        if env.spec.num_players != 2:
            raise ConfigError(f"suite {args.suite} needs a two-player environment")
        opponent = MinimaxAgent() if args.suite == "vs-minimax" else RandomAgent()
        match = play_match(agent, opponent, env_factory, args.games, seed=seed)
        wins, draws, losses = match.counts()
        records.append({"kind": "eval", "suite": args.suite, "step": step,
                        "sims": args.sims, "games": args.games, "score": match.score(),
                        "wins": wins, "draws": draws, "losses": losses})
    elif args.suite == "return":
        if env.spec.num_players != 1:
            raise ConfigError("suite 'return' needs a single-agent environment")
        returns = evaluate_return(env_factory, agent, args.games, seed=seed)
        records.append({"kind": "eval", "suite": "return", "step": step,
                        "sims": args.sims, "episodes": args.games,
                        "mean_return": float(np.mean(returns)),
                        "median_return": float(np.median(returns))})
    elif args.suite == "scaling":
        sims_list = [int(s) for s in args.sims_list.split(",")]
        records.extend(sims_scaling_study(network, env_factory, sims_list, args.games,
                                          cfg, seed=seed))
    elif args.suite == "depth":
        depths = []
        rng = np.random.default_rng(derive_seed(seed, "depth"))
        for _ in range(args.games):
            env = env_factory()
            env.reset()
            while not env.terminal:
                result = run_search(network, env.observation(), env.legal_actions(), cfg,
                                    rng=rng, num_players=env.spec.num_players,
                                    to_play=env.to_play)
                depths.append(result.depths)
                env.step(sample_action(result.visit_counts, 0.0))
        record = search_depth_histogram(depths)
        record.update({"step": step, "sims": args.sims})
        records.append(record)
    else:
        raise ConfigError(f"unknown suite {args.suite!r}")

    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for rec in records:
            out.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_play(args) -> int:
    network, env, _, cfg, _ = _load_agent_env(args)
    if env.spec.name != "tictactoe":
        raise ConfigError("interactive play supports tictactoe checkpoints")
    rng = np.random.default_rng(args.seed or 0)
    agent = SearchAgent(network, cfg, temperature=0.0)
    human = 0 if args.human_first else 1
    env.reset()
    print("cells are numbered 0-8, left to right, top to bottom")
    reward, mover = 0.0, 0
    while not env.terminal:
        print(env.render())
        mover = env.to_play
        if env.to_play == human:
            legal = np.flatnonzero(env.legal_actions())
            try:
                move = int(input(f"your move {list(legal)}: "))
            except (EOFError, ValueError):
                print("no input; quitting")
                return 1
            if move not in legal:
                print("illegal move, try again")
                continue
        else:
            move = agent.select_action(env, rng)
            print(f"agent plays {move}")
        reward = env.step(move).reward
    print(env.render())
    if reward == 0.0:
        print("draw")
    else:
        print("you win!" if mover == human else "agent wins")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config(args)
    seeds = [int(s) for s in args.seeds.split(",")]
    out_dir = Path(args.out)
    if args.variant == "qlearning":
        report = experiments.qlearning_ablation(config, seeds, out_dir)
    elif args.variant == "reanalyze":
        report = experiments.reanalyze_ablation(config, seeds, out_dir,
                                                game_budget=args.game_budget)
    elif args.variant == "sims-sweep":
        train_sims = [int(s) for s in args.sims_list.split(",")]
        report = experiments.training_sims_sweep(config, train_sims, args.eval_sims,
                                                 seeds, out_dir)
    else:
        raise ConfigError(f"unknown variant {args.variant!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"report_{args.variant.replace('-', '_')}.jsonl"
    with open(report_path, "w") as fh:
        fh.write(json.dumps(report, sort_keys=True) + "\n")
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    records = read_metrics(args.metrics)
    print(json.dumps(summarize(records), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="muzero",
                                     description="Planning with a learned model, desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run self-play training")
    train.add_argument("--config", help="path to a run config JSON")
    train.add_argument("--preset", choices=sorted(PRESETS),
                       help="use a built-in config preset instead of --config")
    train.add_argument("--resume", help="resume from a run directory")
    train.add_argument("--seed", type=int, help="override the config seed")
    train.add_argument("--out", help="output directory for a fresh run")
    train.add_argument("--max-iterations", type=int, default=None)
    train.add_argument("--quiet", action="store_true")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--suite", required=True,
                    choices=["vs-random", "vs-minimax", "return", "scaling", "depth"])
    ev.add_argument("--games", type=int, default=100)
    ev.add_argument("--sims", type=int, default=50)
    ev.add_argument("--sims-list", default="1,5,15,50")
    ev.add_argument("--temperature", type=float, default=0.0)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", help="write records to a file instead of stdout")
    ev.set_defaults(func=cmd_eval)

    play = sub.add_parser("play", help="play tic-tac-toe against a checkpoint")
    play.add_argument("--checkpoint", required=True)
    play.add_argument("--sims", type=int, default=100)
    play.add_argument("--human-first", action="store_true", default=True)
    play.add_argument("--agent-first", dest="human_first", action="store_false")
    play.add_argument("--seed", type=int, default=0)
    play.set_defaults(func=cmd_play)

    ablate = sub.add_parser("ablate", help="run an ablation experiment")
    ablate.add_argument("--variant", required=True,
                        choices=["qlearning", "reanalyze", "sims-sweep"])
    ablate.add_argument("--config", help="path to a run config JSON")
    ablate.add_argument("--preset", choices=sorted(PRESETS))
    ablate.add_argument("--seeds", default="0,1,2")
    ablate.add_argument("--seed", type=int, help="override the config seed")
    ablate.add_argument("--out", required=True)
    ablate.add_argument("--game-budget", type=int, default=5000)
    ablate.add_argument("--sims-list", default="6,15,50")
    ablate.add_argument("--eval-sims", type=int, default=50)
    ablate.set_defaults(func=cmd_ablate)

    report = sub.add_parser("report", help="summarize a metrics stream")
    report.add_argument("metrics")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
