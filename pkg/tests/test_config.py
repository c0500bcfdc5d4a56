import json

import pytest

from muzero.config import (ConfigError, RunConfig, build_environment, derive_seed,
                           desk_chain, desk_gridworld, desk_tictactoe, substream)
from muzero.environments import ChainMdp, GridWorld, TicTacToe


@pytest.mark.parametrize("preset", [desk_tictactoe, desk_chain, desk_gridworld])
def test_presets_validate(preset):
    cfg = RunConfig(preset(seed=3))
    assert cfg.seed == 3
    env = cfg.build_env()
    cfg.build_model_config(env)
    cfg.build_search_config(env)
    cfg.build_replay_config()
    cfg.build_training_config()
    cfg.build_schedule()


def test_unknown_top_level_key_rejected_with_path():
    raw = desk_chain()
    raw["extra_section"] = {}
    with pytest.raises(ConfigError, match="extra_section"):
        RunConfig(raw)


def test_unknown_nested_key_rejected_with_path():
    raw = desk_chain()
    raw["training"]["warmup"] = 5
    with pytest.raises(ConfigError, match="training.warmup"):
        RunConfig(raw)


def test_bad_value_reports_section():
    raw = desk_chain()
    raw["search"]["num_simulations"] = 0
    with pytest.raises(ConfigError, match="search"):
        RunConfig(raw)


def test_version_checked():
    raw = desk_chain()
    raw["config_version"] = 99
    with pytest.raises(ConfigError, match="config_version"):
        RunConfig(raw)


def test_missing_section_reported():
    raw = desk_chain()
    del raw["replay"]
    with pytest.raises(ConfigError, match="replay"):
        RunConfig(raw)


def test_environment_dispatch():
    assert isinstance(build_environment({"name": "tictactoe"}), TicTacToe)
    assert isinstance(build_environment({"name": "chain", "n_states": 5}), ChainMdp)
    assert isinstance(build_environment({"name": "gridworld"}), GridWorld)
    with pytest.raises(ConfigError, match="environment.name"):
        build_environment({"name": "pacman"})
    with pytest.raises(ConfigError):
        build_environment({"name": "chain", "n_states": 5, "bogus": 1})


def test_board_mode_drives_model_heads():
    cfg = RunConfig(desk_tictactoe())
    env = cfg.build_env()
    mc = cfg.build_model_config(env)
    assert mc.value_mode == "scalar" and mc.reward_mode == "none"
    mdp = RunConfig(desk_chain())
    mc2 = mdp.build_model_config(mdp.build_env())
    assert mc2.value_mode == "categorical" and mc2.reward_mode == "categorical"


def test_search_discount_comes_from_environment():
    cfg = RunConfig(desk_chain())
    sc = cfg.build_search_config(cfg.build_env())
    assert sc.discount == 0.997
    board = RunConfig(desk_tictactoe())
    assert board.build_search_config(board.build_env()).discount == 1.0


def test_with_overrides_merges_sections():
    cfg = RunConfig(desk_chain(seed=1))
    out = cfg.with_overrides(seed=7, training={"batch_size": 16})
    assert out.seed == 7
    assert out.raw["training"]["batch_size"] == 16
    assert out.raw["training"]["total_steps"] == cfg.raw["training"]["total_steps"]
    assert cfg.raw["training"]["batch_size"] != 16  # original untouched


def test_save_load_roundtrip(tmp_path):
    cfg = RunConfig(desk_gridworld(seed=5))
    path = tmp_path / "config.json"
    cfg.save(path)
    loaded = RunConfig.load(path)
    assert loaded.raw == cfg.raw
    with open(path) as fh:
        assert json.load(fh)["seed"] == 5


def test_derive_seed_stable_and_distinct():
    a = derive_seed(0, "selfplay", 0)
    assert a == derive_seed(0, "selfplay", 0)
    assert a != derive_seed(0, "selfplay", 1)
    assert a != derive_seed(1, "selfplay", 0)


def test_substreams_independent():
    g1 = substream(0, "learner")
    g2 = substream(0, "replay")
    g1_again = substream(0, "learner")
    x1 = g1.random(5)
    assert not (x1 == g2.random(5)).all()
    assert (x1 == g1_again.random(5)).all()
