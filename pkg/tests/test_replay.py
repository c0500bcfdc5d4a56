import numpy as np
import pytest

from muzero.codec import CodecConfig
from muzero.mcts import SearchConfig
from muzero.model import ModelConfig, Network
from muzero.oracles import discounted_return
from muzero.replay import (Reanalyzer, ReplayBuffer, ReplayConfig, Trajectory,
                           board_value_target, make_targets, mdp_value_target)

A = 3


def uniform_policy():
    return np.full(A, 1.0 / A)


def make_traj(rewards, values=None, players=None, actions=None, policies=None):
    n = len(rewards)
    return Trajectory(
        observations=[np.full(4, float(t)) for t in range(n)],
        actions=list(actions) if actions is not None else [0] * n,
        rewards=list(rewards),
        policies=list(policies) if policies is not None else [uniform_policy()] * n,
        root_values=list(values) if values is not None else [0.0] * n,
        to_play=list(players) if players is not None else [0] * n,
        legal_masks=[np.ones(A, dtype=bool)] * n,
    )


def make_buffer(capacity=5, prioritized=True, n=10, gamma=0.997, players=1, seed=0,
                **kwargs):
    cfg = ReplayConfig(capacity=capacity, prioritized=prioritized, bootstrap_steps=n,
                       **kwargs)
    return ReplayBuffer(cfg, A, gamma, players, rng=np.random.default_rng(seed))


def test_mdp_value_target_hand_example():
    traj = make_traj(rewards=[1.0, 2.0, 0.0, 0.0], values=[9.0, 9.0, 4.0, 9.0])
    assert mdp_value_target(traj, 0, n=2, gamma=0.5) == pytest.approx(3.0)


def test_mdp_value_target_truncates_at_episode_end():
    traj = make_traj(rewards=[1.0, 2.0, 3.0], values=[5.0, 5.0, 5.0])
    # n runs past the end: Monte-Carlo tail, no bootstrap term.
    assert mdp_value_target(traj, 1, n=10, gamma=0.5) == pytest.approx(2.0 + 0.5 * 3.0)
    assert mdp_value_target(traj, 3, n=2, gamma=0.5) == 0.0


def test_mdp_value_target_against_brute_force_oracle():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        length = int(rng.integers(1, 12))
        n = int(rng.integers(1, 8))
        t = int(rng.integers(0, length))
        gamma = float(rng.uniform(0.5, 1.0))
        rewards = rng.normal(size=length).tolist()
        values = rng.normal(size=length).tolist()
        traj = make_traj(rewards=rewards, values=values)
        upper = min(t + n, length)
        bootstrap = values[t + n] if t + n < length else 0.0
        expected = discounted_return(rewards[t:upper], gamma,
                                     bootstrap if t + n < length else 0.0)
        assert mdp_value_target(traj, t, n, gamma) == pytest.approx(expected, abs=1e-12)


def test_board_value_target_per_perspective():
    # X (player 0) wins on the 5th move.
    traj = make_traj(rewards=[0, 0, 0, 0, 1.0], players=[0, 1, 0, 1, 0])
    for j, expected in [(0, 1.0), (1, -1.0), (2, 1.0), (3, -1.0), (4, 1.0)]:
        assert board_value_target(traj, j) == expected
    assert board_value_target(traj, 7) == 0.0


def test_make_targets_rows_and_absorbing_flags():
    traj = make_traj(rewards=[0.5, 0.25, 1.0], values=[0.1, 0.2, 0.3],
                     actions=[2, 1, 0])
    rng = np.random.default_rng(0)
    target = make_targets(traj, t=2, unroll_steps=5, bootstrap_steps=3, gamma=0.9,
                          num_players=1, action_space_size=A, rng=rng)
    assert target.value.shape == (6,)
    assert target.policy.shape == (6, A)
    # row 0 is the last real step; rows 1..5 are absorbing
    assert target.policy_valid.tolist() == [1.0, 0, 0, 0, 0, 0]
    np.testing.assert_array_equal(target.value[1:], np.zeros(5))
    assert target.reward[1] == 1.0  # reward of the final real action
    np.testing.assert_array_equal(target.reward[2:], np.zeros(4))
    assert target.reward_valid.tolist() == [0.0, 1, 1, 1, 1, 1]
    assert target.actions[0] == 0  # real action at t+1
    assert np.all((target.actions >= 0) & (target.actions < A))


def test_make_targets_alignment_sentinel_audit():
    # Sentinel policies: policy[t] puts all mass on action t % A.
    length = 9
    policies = []
    for t in range(length):
        p = np.zeros(A)
        p[t % A] = 1.0
        policies.append(p)
    traj = make_traj(rewards=[float(t) for t in range(length)],
                     actions=[t % A for t in range(length)], policies=policies)
    rng = np.random.default_rng(0)
    for t in (0, 2, 5):
        target = make_targets(traj, t=t, unroll_steps=3, bootstrap_steps=2, gamma=1.0,
                              num_players=1, action_space_size=A, rng=rng)
        for k in range(4):
            if t + k < length:
                np.testing.assert_array_equal(target.policy[k], policies[t + k])
        for k in range(1, 4):
            if t + k - 1 < length:
                assert target.actions[k - 1] == traj.actions[t + k - 1]
                assert target.reward[k] == traj.rewards[t + k - 1]


def test_make_targets_board_mode_has_no_reward_loss():
    traj = make_traj(rewards=[0, 0, 1.0], players=[0, 1, 0])
    target = make_targets(traj, 0, 2, 9, 1.0, num_players=2, action_space_size=A,
                          rng=np.random.default_rng(0))
    assert target.reward_valid.sum() == 0.0
    assert target.value[0] == 1.0 and target.value[1] == -1.0


def test_make_targets_index_errors():
    traj = make_traj(rewards=[0.0])
    with pytest.raises(IndexError):
        make_targets(traj, 1, 2, 2, 1.0, 1, A, np.random.default_rng(0))


def test_append_validates_and_evicts_fifo():
    buf = make_buffer(capacity=3)
    for i in range(5):
        buf.append(make_traj(rewards=[float(i)] * 2))
    assert len(buf) == 3
    assert list(buf.games) == [2, 3, 4]
    with pytest.raises(ValueError):
        bad = make_traj(rewards=[0.0, 1.0])
        bad.policies = [uniform_policy()]  # wrong length
        buf.append(bad)
    with pytest.raises(ValueError):
        unnormalized = make_traj(rewards=[0.0])
        unnormalized.policies = [np.array([0.5, 0.1, 0.1])]
        buf.append(unnormalized)


def test_insert_priorities_match_independent_recomputation():
    buf = make_buffer(n=3, gamma=0.9)
    traj = make_traj(rewards=[1.0, -2.0, 0.5, 3.0], values=[0.3, -0.1, 0.8, 0.2])
    gid = buf.append(traj)
    for i in range(len(traj)):
        upper = min(i + 3, len(traj))
        z = discounted_return(traj.rewards[i:upper], 0.9,
                              traj.root_values[i + 3] if i + 3 < len(traj) else 0.0)
        assert buf.priorities[gid][i] == pytest.approx(abs(traj.root_values[i] - z))


def test_sampling_probabilities_and_weights_closed_form():
    buf = make_buffer(capacity=5, n=1, gamma=1.0, seed=3)
    # Two one-step games with priorities 1 and 3 (|nu - z| with z = reward).
    buf.append(make_traj(rewards=[1.0], values=[2.0]))   # |2 - 1| = 1
    buf.append(make_traj(rewards=[0.0], values=[3.0]))   # |3 - 0| = 3
    draws = buf.sample_positions(20_000)
    freq1 = np.mean([gid == 1 for gid, _, _ in draws])
    assert freq1 == pytest.approx(0.75, abs=0.01)
    for gid, _, w in draws[:100]:
        p = 0.75 if gid == 1 else 0.25
        assert w == pytest.approx((1.0 / (2 * p)) ** 1.0, abs=1e-12)


def test_uniform_mode_weights_are_one():
    buf = make_buffer(prioritized=False)
    buf.append(make_traj(rewards=[0.0, 1.0], values=[5.0, 5.0]))
    for _, _, w in buf.sample_positions(50):
        assert w == 1.0


def test_update_priorities_zero_never_sampled_and_stale_counted():
    buf = make_buffer(capacity=2, n=1, gamma=1.0, seed=4)
    buf.append(make_traj(rewards=[1.0], values=[0.0]))
    buf.append(make_traj(rewards=[1.0], values=[0.0]))
    buf.update_priorities([(0, 0)], [0.0])
    draws = buf.sample_positions(2000)
    assert all(gid == 1 for gid, _, _ in draws)
    buf.update_priorities([(0, 0), (1, 0)], [2.0, 2.0])
    draws = buf.sample_positions(4000)
    freq0 = np.mean([gid == 0 for gid, _, _ in draws])
    assert freq0 == pytest.approx(0.5, abs=0.03)
    buf.update_priorities([(99, 0)], [1.0])
    assert buf.stale_priority_updates == 1


def test_empirical_frequencies_within_multinomial_bounds():
    rng = np.random.default_rng(5)
    buf = make_buffer(capacity=12, n=1, gamma=1.0, seed=6)
    for i in range(10):
        buf.append(make_traj(rewards=[0.0], values=[float(rng.uniform(0.1, 2.0))]))
    keys, prios = buf._position_index()
    probs = prios / prios.sum()
    n_draws = 100_000
    draws = buf.sample_positions(n_draws)
    counts = np.zeros(len(keys))
    index = {key: i for i, key in enumerate(keys)}
    for gid, t, _ in draws:
        counts[index[(gid, t)]] += 1
    expected = probs * n_draws
    sigma = np.sqrt(n_draws * probs * (1 - probs))
    assert np.all(np.abs(counts - expected) <= 3.0 * sigma + 1e-9)


def test_buffer_jsonl_roundtrip(tmp_path):
    buf = make_buffer()
    buf.append(make_traj(rewards=[1.0, 0.5], values=[0.2, 0.4], actions=[1, 2]))
    path = tmp_path / "buffer.jsonl"
    buf.save_jsonl(path)
    clone = make_buffer()
    clone.load_jsonl(path)
    assert clone.next_game_id == buf.next_game_id
    orig, copy = buf.games[0], clone.games[0]
    assert orig.actions == copy.actions
    np.testing.assert_allclose(orig.policies[0], copy.policies[0])
    np.testing.assert_allclose(buf.priorities[0], clone.priorities[0])


class TestReanalyze:
    def setup_method(self):
        self.codec = CodecConfig(support_min=-5, support_max=5)
        self.model_config = ModelConfig(observation_size=4, action_space_size=A,
                                        hidden_size=6, layer_width=8, codec=self.codec)
        self.network = Network(self.model_config, rng=np.random.default_rng(7))
        self.search_cfg = SearchConfig(num_simulations=8, discount=0.9)

    def make_loaded_buffer(self, **kwargs):
        buf = make_buffer(n=5, gamma=0.9, seed=8, **kwargs)
        buf.append(make_traj(rewards=[0.1, 0.2, 0.3, 0.4], values=[1, 1, 1, 1.0]))
        return buf

    def test_fraction_zero_matches_plain_targets(self):
        buf = self.make_loaded_buffer()
        rng = np.random.default_rng(9)
        plain = make_targets(buf.games[0], 1, buf.config.unroll_steps,
                             buf.config.bootstrap_steps, 0.9, 1, A, rng, game_id=0)
        again = make_targets(buf.games[0], 1, buf.config.unroll_steps,
                             buf.config.bootstrap_steps, 0.9, 1, A,
                             np.random.default_rng(9), game_id=0)
        np.testing.assert_array_equal(plain.value, again.value)
        np.testing.assert_array_equal(plain.policy, again.policy)

    def test_fresh_policy_changes_with_weights(self):
        buf = self.make_loaded_buffer()
        re = Reanalyzer(self.search_cfg, num_players=1)
        t1 = re.refresh_target(buf, self.network, self.network, 0, 0, 1.0)
        perturbed = self.network.copy()
        perturbed.version += 1
        rng = np.random.default_rng(10)
        for name in perturbed.params:
            perturbed.params[name] = perturbed.params[name] + rng.normal(
                0, 0.5, perturbed.params[name].shape)
        re2 = Reanalyzer(self.search_cfg, num_players=1)
        t2 = re2.refresh_target(buf, perturbed, perturbed, 0, 0, 1.0)
        assert any(not np.allclose(t1.policy[k], t2.policy[k]) for k in range(3))

    def test_refreshed_value_targets_use_lagged_network(self):
        buf = self.make_loaded_buffer(reanalyze_bootstrap_steps=2,
                                      reanalyze_value_weight=0.25)
        re = Reanalyzer(self.search_cfg, num_players=1)
        target = re.refresh_target(buf, self.network, self.network, 0, 0, 1.0)
        traj = buf.games[0]
        v_lagged = [self.network.initial_inference(traj.observations[j])[2]
                    for j in range(len(traj))]
        expected_z0 = traj.rewards[0] + 0.9 * traj.rewards[1] + 0.81 * v_lagged[2]
        assert target.value[0] == pytest.approx(expected_z0, rel=1e-9)
        assert target.value_weight == 0.25

    def test_policy_search_memoized_per_version(self):
        buf = self.make_loaded_buffer()
        re = Reanalyzer(self.search_cfg, num_players=1)
        re.refresh_target(buf, self.network, self.network, 0, 0, 1.0)
        cache_size = len(re._policy_cache)
        re.refresh_target(buf, self.network, self.network, 0, 0, 1.0)
        assert len(re._policy_cache) == cache_size
