"""Monte-Carlo tree search over a learned (or adapted) model.

Prior-weighted UCB selection, one expansion per simulation, discounted
backups with min-max value normalization, Dirichlet noise and legal-action
masking at the root only, and no special treatment of terminal states inside
the tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import softmax


@dataclass(frozen=True)
class SearchConfig:
    num_simulations: int = 50
    c1: float = 1.25
    c2: float = 19652.0
    discount: float = 1.0
    dirichlet_alpha: float = 0.3
    exploration_fraction: float = 0.25

    def __post_init__(self):
        if self.num_simulations < 1:
            raise ValueError("num_simulations must be >= 1")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be > 0")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")


class MinMaxStats:
    """Running extrema of the action values observed in the current tree."""

    def __init__(self):
        self.minimum = math.inf
        self.maximum = -math.inf

    def update(self, q: float):
        self.minimum = min(self.minimum, q)
        self.maximum = max(self.maximum, q)

    def normalize(self, q: float) -> float:
        if self.maximum > self.minimum:
            return (q - self.minimum) / (self.maximum - self.minimum)
        return q


def normalize_q(q: float, minmax: MinMaxStats) -> float:
    return minmax.normalize(q)


class Node:
    """One tree node; edge statistics live on the child it leads to."""

    __slots__ = ("prior", "visit_count", "value_sum", "reward", "hidden_state",
                 "to_play", "children")

    def __init__(self, prior: float, to_play: int = 0):
        self.prior = prior
        self.visit_count = 0
        self.value_sum = 0.0
        self.reward = 0.0
        self.hidden_state = None
        self.to_play = to_play
        self.children: dict[int, Node] = {}

    @property
    def expanded(self) -> bool:
        return len(self.children) > 0

    def value(self) -> float:
        if self.visit_count == 0:
            return 0.0
        return self.value_sum / self.visit_count


@dataclass
class SearchResult:
    visit_counts: np.ndarray
    policy: np.ndarray
    root_value: float
    max_depth: int
    node_count: int
    depths: list = field(default_factory=list)


def _edge_value(child: Node, discount: float, num_players: int) -> float:
    """Selection value of the edge into `child`, from the parent's perspective."""
    v = child.value()
    if num_players == 2:
        v = -v
    return child.reward + discount * v


def select_child(node: Node, minmax: MinMaxStats, cfg: SearchConfig,
                 num_players: int = 1) -> int:
    """Pick the action maximizing normalized value plus the prior-weighted
    exploration bonus; ties break toward the lowest action index."""
    total_visits = sum(child.visit_count for child in node.children.values())
    explore = math.sqrt(total_visits) * (
        cfg.c1 + math.log((total_visits + cfg.c2 + 1.0) / cfg.c2))
    best_action, best_score = -1, -math.inf
    for action in sorted(node.children):
        child = node.children[action]
        if child.visit_count > 0:
            q = minmax.normalize(_edge_value(child, cfg.discount, num_players))
        else:
            q = 0.0
        score = q + child.prior * explore / (1.0 + child.visit_count)
        if score > best_score:
            best_action, best_score = action, score
    return best_action


def expand_node(node: Node, hidden_state, reward: float, policy_logits: np.ndarray,
                num_players: int, legal_mask: np.ndarray | None = None):
    """Attach model outputs to `node` and create its child edges.

    Child edges start with zero visits and value; priors are the softmax of
    the policy logits, masked and renormalized only when a legal mask is given
    (the root). Expanding an already-expanded node is a logic error.
    """
    if node.expanded:
        raise RuntimeError("node already expanded")
    node.hidden_state = hidden_state
    node.reward = reward
    priors = softmax(policy_logits)
    actions = range(len(priors))
    if legal_mask is not None:
        actions = [a for a in actions if legal_mask[a]]
        total = sum(priors[a] for a in actions)
        if total <= 0.0 or not np.isfinite(total):
            priors = {a: 1.0 / len(actions) for a in actions}
        else:
            priors = {a: priors[a] / total for a in actions}
    next_player = (node.to_play + 1) % num_players
    for a in actions:
        node.children[a] = Node(prior=float(priors[a]), to_play=next_player)


def add_root_noise(root: Node, cfg: SearchConfig, rng: np.random.Generator):
    """Mix Dirichlet noise into the (already masked) root priors."""
    actions = sorted(root.children)
    noise = rng.dirichlet([cfg.dirichlet_alpha] * len(actions))
    f = cfg.exploration_fraction
    for a, eta in zip(actions, noise):
        child = root.children[a]
        child.prior = (1.0 - f) * child.prior + f * float(eta)


def backup(path: list[Node], leaf_value: float, cfg: SearchConfig, minmax: MinMaxStats,
           num_players: int = 1):
    """Propagate the leaf value up the simulation path.

    Each node accumulates the discounted return measured from that node; in
    two-player mode the running value flips sign at every ply so each node
    stores values from its own side-to-move's perspective. The min-max bounds
    track the edge values exactly as the selection rule will read them.
    """
    g = leaf_value
    for i in range(len(path) - 1, -1, -1):
        node = path[i]
        node.value_sum += g
        node.visit_count += 1
        if i > 0:
            minmax.update(_edge_value(node, cfg.discount, num_players))
        g = node.reward + cfg.discount * (-g if num_players == 2 else g)


def run_search(model, observation, legal_mask: np.ndarray, cfg: SearchConfig,
               rng: np.random.Generator | None = None, num_players: int = 1,
               to_play: int = 0, add_noise: bool = False) -> SearchResult:
    """Run a full search from one root position.

    The root is expanded once from the model's initial inference with priors
    masked to legal actions; each of the cfg.num_simulations simulations then
    descends by UCB, expands exactly one new node (one dynamics call plus one
    prediction call), and backs the value up the path.
    """
    legal_mask = np.asarray(legal_mask, dtype=bool)
    if not legal_mask.any():
        raise ValueError("no legal actions at the search root")
    if add_noise and rng is None:
        raise ValueError("root noise requires an rng")

    root = Node(prior=1.0, to_play=to_play)
    hidden, policy_logits, _ = model.initial_inference(observation)
    expand_node(root, hidden, 0.0, policy_logits, num_players, legal_mask=legal_mask)
    if add_noise and cfg.exploration_fraction > 0.0:
        add_root_noise(root, cfg, rng)

    minmax = MinMaxStats()
    node_count = 1
    depths = []
    for _ in range(cfg.num_simulations):
        node = root
        path = [root]
        while True:
            action = select_child(node, minmax, cfg, num_players)
            child = node.children[action]
            path.append(child)
            if not child.expanded:
                break
            node = child
        hidden, reward, policy_logits, leaf_value = model.recurrent_inference(
            node.hidden_state, action)
        expand_node(child, hidden, reward, policy_logits, num_players)
        node_count += 1
        depths.append(len(path) - 1)
        backup(path, leaf_value, cfg, minmax, num_players)

    counts = np.zeros(len(legal_mask))
    for a, child in root.children.items():
        counts[a] = child.visit_count
    total = counts.sum()
    return SearchResult(visit_counts=counts, policy=counts / total,
                        root_value=root.value(), max_depth=max(depths),
                        node_count=node_count, depths=depths)


def sample_action(counts: np.ndarray, temperature: float,
                  rng: np.random.Generator | None = None,
                  eligible: np.ndarray | None = None) -> int:
    """Draw an action from visit counts tempered by ``temperature``.

    temperature 0 is a deterministic argmax (ties to the lowest index);
    temperature inf is uniform over the eligible actions. ``eligible``
    defaults to the actions with a positive count.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    eligible = counts > 0 if eligible is None else np.asarray(eligible, dtype=bool)
    if not eligible.any():
        raise ValueError("no eligible actions")
    if temperature == 0.0:
        masked = np.where(eligible, counts, -np.inf)
        return int(np.argmax(masked))
    if math.isinf(temperature):
        probs = eligible / eligible.sum()
    else:
        scaled = np.where(eligible, counts, 0.0)
        scaled = scaled / scaled.max()
        powered = np.where(eligible, scaled ** (1.0 / temperature), 0.0)
        probs = powered / powered.sum()
    if rng is None:
        raise ValueError("sampling with temperature > 0 requires an rng")
    return int(rng.choice(len(counts), p=probs))


def tempered_distribution(counts: np.ndarray, temperature: float) -> np.ndarray:
    """The distribution sample_action draws from, for finite temperature > 0."""
    counts = np.asarray(counts, dtype=np.float64)
    powered = np.where(counts > 0, counts ** (1.0 / temperature), 0.0)
    return powered / powered.sum()
