import json
from pathlib import Path

import numpy as np
import pytest

from muzero.config import RunConfig, desk_chain, desk_tictactoe
from muzero.metrics import read_metrics
from muzero.model import load_checkpoint
from muzero.training import (BUFFER_FILENAME, CONFIG_FILENAME, LATEST_CHECKPOINT,
                             METRICS_FILENAME, TrainRun)


def tiny_chain_config(seed=0, total_steps=12):
    raw = desk_chain(seed=seed)
    raw["environment"]["n_states"] = 5
    raw["model"].update({"hidden_size": 8, "layer_width": 12})
    raw["search"]["num_simulations"] = 4
    raw["replay"].update({"capacity": 30, "samples_per_state": 2.0})
    raw["training"].update({"batch_size": 8, "total_steps": total_steps,
                            "checkpoint_interval": 4, "target_refresh_interval": 6})
    raw["selfplay"].update({"actor_count": 2, "min_buffer_games": 2, "resume_interval": 2})
    raw["evaluation"].update({"interval_steps": 6, "episodes": 2})
    return RunConfig(raw)


def tiny_board_config(seed=0):
    raw = desk_tictactoe(seed=seed)
    raw["model"].update({"hidden_size": 8, "layer_width": 12})
    raw["search"]["num_simulations"] = 4
    raw["replay"].update({"capacity": 30, "samples_per_state": 2.0})
    raw["training"].update({"batch_size": 8, "total_steps": 8,
                            "checkpoint_interval": 4})
    raw["selfplay"].update({"actor_count": 1, "min_buffer_games": 2})
    raw["evaluation"].update({"interval_steps": 5, "episodes": 2})
    return RunConfig(raw)


def test_run_writes_frozen_config_metrics_and_checkpoints(tmp_path):
    cfg = tiny_chain_config()
    run = TrainRun(cfg, tmp_path / "run")
    summary = run.run()
    run.close()
    out = tmp_path / "run"
    assert (out / CONFIG_FILENAME).exists()
    assert (out / LATEST_CHECKPOINT).exists()
    assert (out / "ckpt_final.npz").exists()
    assert (out / BUFFER_FILENAME).exists()
    frozen = RunConfig.load(out / CONFIG_FILENAME)
    assert frozen.raw == cfg.raw
    assert summary["train_steps"] == 12
    records = read_metrics(out / METRICS_FILENAME)
    kinds = {r["kind"] for r in records}
    assert {"game", "train_step", "eval", "run_summary", "search_depth"} <= kinds
    steps = [r["step"] for r in records if r["kind"] == "train_step"]
    assert steps == sorted(steps)
    for r in records:
        if r["kind"] == "train_step":
            assert r["total_loss"] == pytest.approx(
                r["policy_loss"] + r["value_loss"] + r["reward_loss"] + r["l2_loss"],
                abs=1e-9)


def test_fresh_run_refuses_existing_directory(tmp_path):
    cfg = tiny_chain_config()
    run = TrainRun(cfg, tmp_path / "run")
    run.run(max_iterations=1)
    run.close()
    with pytest.raises(FileExistsError):
        TrainRun(cfg, tmp_path / "run")


def test_board_mode_runs_and_checkpoint_carries_environment(tmp_path):
    cfg = tiny_board_config()
    run = TrainRun(cfg, tmp_path / "run")
    run.run()
    run.close()
    _, step, _, meta = load_checkpoint(tmp_path / "run" / LATEST_CHECKPOINT)
    assert meta["environment"] == {"name": "tictactoe"}
    assert step == 8


def test_metrics_stream_byte_identical_across_reruns(tmp_path):
    for name in ("a", "b"):
        run = TrainRun(tiny_chain_config(seed=5), tmp_path / name)
        run.run()
        run.close()
    bytes_a = (tmp_path / "a" / METRICS_FILENAME).read_bytes()
    bytes_b = (tmp_path / "b" / METRICS_FILENAME).read_bytes()
    assert bytes_a == bytes_b


def test_different_seeds_differ(tmp_path):
    outs = []
    for seed in (1, 2):
        run = TrainRun(tiny_chain_config(seed=seed), tmp_path / f"s{seed}")
        run.run(max_iterations=4)
        run.close()
        outs.append((tmp_path / f"s{seed}" / METRICS_FILENAME).read_bytes())
    assert outs[0] != outs[1]


def test_resume_reproduces_uninterrupted_run(tmp_path):
    full = TrainRun(tiny_chain_config(seed=3), tmp_path / "full")
    full.run()
    full.close()

    part = TrainRun(tiny_chain_config(seed=3), tmp_path / "split")
    part.run(max_iterations=3)
    part.close()
    resumed = TrainRun(RunConfig.load(tmp_path / "split" / CONFIG_FILENAME),
                       tmp_path / "split", resume=True)
    assert resumed.iteration == 3
    resumed.run()
    resumed.close()

    full_bytes = (tmp_path / "full" / METRICS_FILENAME).read_bytes()
    split_bytes = (tmp_path / "split" / METRICS_FILENAME).read_bytes()
    assert full_bytes == split_bytes

    net_full, step_full, _, _ = load_checkpoint(tmp_path / "full" / LATEST_CHECKPOINT)
    net_split, step_split, _, _ = load_checkpoint(tmp_path / "split" / LATEST_CHECKPOINT)
    assert step_full == step_split
    for name in net_full.params:
        np.testing.assert_array_equal(net_full.params[name], net_split.params[name])


def test_resume_next_step_loss_matches(tmp_path):
    # The first training record after resuming equals the uninterrupted run's
    # record at the same step.
    full = TrainRun(tiny_chain_config(seed=4), tmp_path / "full")
    full.run(max_iterations=6)
    full.close()
    part = TrainRun(tiny_chain_config(seed=4), tmp_path / "part")
    part.run(max_iterations=2)
    part.close()
    resumed = TrainRun(RunConfig.load(tmp_path / "part" / CONFIG_FILENAME),
                       tmp_path / "part", resume=True)
    resumed.run(max_iterations=6)
    resumed.close()
    full_recs = [r for r in read_metrics(tmp_path / "full" / METRICS_FILENAME)
                 if r["kind"] == "train_step"]
    part_recs = [r for r in read_metrics(tmp_path / "part" / METRICS_FILENAME)
                 if r["kind"] == "train_step"]
    assert part_recs == full_recs


def test_max_games_budget_respected(tmp_path):
    cfg = tiny_chain_config(total_steps=10_000)
    cfg = cfg.with_overrides(selfplay={"max_games": 6})
    run = TrainRun(cfg, tmp_path / "run")
    summary = run.run()
    run.close()
    assert run.games_played <= 6
    assert summary["finished"]
