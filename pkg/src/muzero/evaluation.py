"""Tournaments, oracle opponents, Elo fitting, and scaling studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environments import PerfectModelAdapter
from .mcts import SearchConfig, run_search, sample_action
from .nn import softmax
from .oracles import minimax_value


class RandomAgent:
    """Uniform over legal actions."""

    name = "random"

    def select_action(self, env, rng: np.random.Generator) -> int:
        legal = np.flatnonzero(env.legal_actions())
        return int(rng.choice(legal))


class MinimaxAgent:
    """Perfect play via the exhaustive oracle, random among optimal moves."""

    name = "minimax"

    def select_action(self, env, rng: np.random.Generator) -> int:
        _, optimal = minimax_value(env.state[0], env.to_play)
        return int(rng.choice(list(optimal)))


class SearchAgent:
    """Plays by search over a learned network."""

    def __init__(self, network, search_cfg: SearchConfig, temperature: float = 0.0,
                 add_noise: bool = False, name: str = "search"):
        self.network = network
        self.search_cfg = search_cfg
        self.temperature = temperature
        self.add_noise = add_noise
        self.name = name

    def select_action(self, env, rng: np.random.Generator) -> int:
        result = run_search(self.network, env.observation(), env.legal_actions(),
                            self.search_cfg, rng=rng, num_players=env.spec.num_players,
                            to_play=env.to_play, add_noise=self.add_noise)
        return sample_action(result.visit_counts, self.temperature, rng)


class PerfectSearchAgent:
    """Search over the true rules through the perfect-model adapter.

    Leaf evaluation uses random playouts (driven by the per-game rng), the
    classic Monte-Carlo estimate available to a perfect simulator.
    """

    def __init__(self, search_cfg: SearchConfig, temperature: float = 0.0,
                 add_noise: bool = False, name: str = "perfect-search"):
        self.search_cfg = search_cfg
        self.temperature = temperature
        self.add_noise = add_noise
        self.name = name

    def select_action(self, env, rng: np.random.Generator) -> int:
        adapter = PerfectModelAdapter(env, rollout_rng=rng)
        result = run_search(adapter, env.observation(), env.legal_actions(),
                            self.search_cfg, rng=rng, num_players=env.spec.num_players,
                            to_play=env.to_play, add_noise=self.add_noise)
        return sample_action(result.visit_counts, self.temperature, rng)


class RawPolicyAgent:
    """No search: argmax (or sample) of the network's masked policy head."""

    def __init__(self, network, temperature: float = 0.0, name: str = "raw-policy"):
        self.network = network
        self.temperature = temperature
        self.name = name

    def select_action(self, env, rng: np.random.Generator) -> int:
        _, policy_logits, _ = self.network.initial_inference(env.observation())
        legal = env.legal_actions()
        probs = softmax(policy_logits) * legal
        return sample_action(probs, self.temperature, rng, eligible=legal)


@dataclass
class MatchRecord:
    player_a: str
    player_b: str
    outcomes: list  # +1 / 0 / -1 from player_a's perspective
    seed: int
    sims_per_move: dict = field(default_factory=dict)

    def score(self) -> float:
        return float(np.mean(self.outcomes)) if self.outcomes else 0.0

    def counts(self):
        wins = sum(1 for o in self.outcomes if o > 0)
        draws = sum(1 for o in self.outcomes if o == 0)
        return wins, draws, len(self.outcomes) - wins - draws


def play_single_game(env, agents, rng: np.random.Generator) -> int:
    """Play one two-player game; returns the outcome for agents[0].

    ``agents`` maps side-to-move index (0 moves first) to an agent.
    """
    env.reset()
    reward, mover = 0.0, 0
    while not env.terminal:
        mover = env.to_play
        action = agents[mover].select_action(env, rng)
        reward = env.step(action).reward
    if reward == 0.0:
        return 0
    return 1 if mover == 0 else -1


def play_match(agent_a, agent_b, env_factory, n_games: int, seed: int = 0) -> MatchRecord:
    """Alternate colors over n_games; deterministic given the seed."""
    outcomes = []
    for game in range(n_games):
        rng = np.random.default_rng(np.random.SeedSequence([seed, game]))
        env = env_factory()
        a_moves_first = game % 2 == 0
        agents = {0: agent_a, 1: agent_b} if a_moves_first else {0: agent_b, 1: agent_a}
        result = play_single_game(env, agents, rng)
        outcomes.append(result if a_moves_first else -result)
    return MatchRecord(player_a=agent_a.name, player_b=agent_b.name,
                       outcomes=outcomes, seed=seed)


@dataclass(frozen=True)
class EloConfig:
    c_elo: float = 1.0 / 400.0
    anchor_player: str = "random"
    anchor_rating: float = 0.0

    def __post_init__(self):
        if self.c_elo <= 0:
            raise ValueError("c_elo must be > 0")


def elo_fit(records: list[MatchRecord], cfg: EloConfig, tol: float = 1e-8,
            max_iters: int = 200_000) -> dict[str, float]:
    """Maximum-likelihood ratings under p(a beats b) = 1/(1 + 10^(c*(e_b - e_a))).

    Draws count as half a win for each side. Fitting uses the standard
    minorize-maximize update on the strength scale, anchored afterwards, and
    stops once the likelihood gradient's max-norm is <= tol.
    """
    players = sorted({r.player_a for r in records} | {r.player_b for r in records})
    if cfg.anchor_player not in players:
        raise ValueError(f"anchor player {cfg.anchor_player!r} has no games")
    wins = {p: {} for p in players}  # effective (draw-adjusted) win counts
    for rec in records:
        a, b = rec.player_a, rec.player_b
        w, d, losses = rec.counts()
        wins[a][b] = wins[a].get(b, 0.0) + w + 0.5 * d
        wins[b][a] = wins[b].get(a, 0.0) + losses + 0.5 * d

    _check_connected(players, records)
    for p in players:
        total_w = sum(wins[p].values())
        total_l = sum(wins[q].get(p, 0.0) for q in players)
        if total_w == 0.0 or total_l == 0.0:
            raise ValueError(f"player {p!r} has no effective wins or no effective losses; "
                             "its maximum-likelihood rating is unbounded")

    gamma = {p: 1.0 for p in players}
    scale = cfg.c_elo * math.log(10.0)
    for _ in range(max_iters):
        for p in players:
            denom = 0.0
            for q in players:
                n_pq = wins[p].get(q, 0.0) + wins[q].get(p, 0.0)
                if n_pq:
                    denom += n_pq / (gamma[p] + gamma[q])
            gamma[p] = sum(wins[p].values()) / denom
        norm = max(gamma.values())
        for p in players:
            gamma[p] /= norm
        grad = 0.0
        for p in players:
            g = 0.0
            for q in players:
                if p == q:
                    continue
                n_pq = wins[p].get(q, 0.0) + wins[q].get(p, 0.0)
                if n_pq:
                    g += wins[p].get(q, 0.0) - n_pq * gamma[p] / (gamma[p] + gamma[q])
            grad = max(grad, abs(scale * g))
        if grad <= tol:
            break
    else:
        raise RuntimeError(f"Elo fit did not converge below gradient norm {tol}")

    offset = cfg.anchor_rating - math.log10(gamma[cfg.anchor_player]) / cfg.c_elo
    return {p: math.log10(gamma[p]) / cfg.c_elo + offset for p in players}


def _check_connected(players, records):
    parent = {p: p for p in players}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for rec in records:
        if rec.outcomes:
            parent[find(rec.player_a)] = find(rec.player_b)
    components = {}
    for p in players:
        components.setdefault(find(p), []).append(p)
    if len(components) > 1:
        raise ValueError(f"result graph is disconnected: {sorted(components.values())}")


def evaluate_return(env_factory, agent, episodes: int, seed: int = 0,
                    discounted: bool = True) -> list[float]:
    """Episode returns for a single-agent environment."""
    returns = []
    for ep in range(episodes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, ep]))
        env = env_factory()
        env.reset()
        total, g = 0.0, 1.0
        while not env.terminal:
            action = agent.select_action(env, rng)
            step = env.step(action)
            total += g * step.reward
            if discounted:
                g *= env.spec.discount
        returns.append(total)
    return returns


def sims_scaling_study(network, env_factory, sims_list, games_per_point: int,
                       base_cfg: SearchConfig, seed: int = 0, opponent=None) -> list[dict]:
    """Performance versus simulations per move, plus the raw-policy point.

    Single-agent environments report discounted-return statistics; two-player
    ones report the mean score against ``opponent`` (random by default).
    """
    env = env_factory()
    two_player = env.spec.num_players == 2
    if two_player and opponent is None:
        opponent = RandomAgent()
    rows = []

    def summarize(values, label, sims):
        v = np.asarray(values, dtype=float)
        return {"kind": "sims_scaling", "mode": label, "sims": sims,
                "games": len(values), "mean": float(v.mean()),
                "median": float(np.median(v)), "p25": float(np.percentile(v, 25)),
                "p75": float(np.percentile(v, 75))}

    for sims in sims_list:
        cfg = SearchConfig(num_simulations=sims, c1=base_cfg.c1, c2=base_cfg.c2,
                           discount=base_cfg.discount,
                           dirichlet_alpha=base_cfg.dirichlet_alpha,
                           exploration_fraction=0.0)
        agent = SearchAgent(network, cfg, temperature=0.0, name=f"search-{sims}")
        if two_player:
            record = play_match(agent, opponent, env_factory, games_per_point, seed=seed)
            rows.append(summarize(record.outcomes, "search", sims))
        else:
            rows.append(summarize(
                evaluate_return(env_factory, agent, games_per_point, seed=seed),
                "search", sims))
    raw = RawPolicyAgent(network)
    if two_player:
        record = play_match(raw, opponent, env_factory, games_per_point, seed=seed)
        rows.append(summarize(record.outcomes, "raw", 0))
    else:
        rows.append(summarize(evaluate_return(env_factory, raw, games_per_point, seed=seed),
                              "raw", 0))
    return rows


def search_depth_histogram(depths_per_search: list[list[int]]) -> dict:
    """Percentile summary of per-search max and median depths."""
    if not depths_per_search:
        raise ValueError("no searches to summarize")
    max_depths = np.array([max(d) for d in depths_per_search], dtype=float)
    median_depths = np.array([np.median(d) for d in depths_per_search])
    def stats(values):
        return {"median": float(np.median(values)),
                "p5": float(np.percentile(values, 5)),
                "p25": float(np.percentile(values, 25)),
                "p75": float(np.percentile(values, 75)),
                "p95": float(np.percentile(values, 95)),
                "max": float(values.max())}
    return {"kind": "search_depth", "searches": len(depths_per_search),
            "max_depth": stats(max_depths), "median_depth": stats(median_depths)}
