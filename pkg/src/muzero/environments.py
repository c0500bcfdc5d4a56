"""Toy environments: a two-player terminal-reward game and two discounted MDPs.

Each environment keeps its state in an immutable tuple and routes all
transitions through a pure ``apply(state, action)`` classmethod, so the
perfect-model adapter and the exact oracles can replay the same rules without
touching live instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    action_space_size: int
    observation_size: int
    num_players: int
    discount: float
    max_moves: int

    def __post_init__(self):
        if self.action_space_size < 2:
            raise ValueError("action_space_size must be >= 2")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        if self.num_players == 2 and self.discount != 1.0:
            raise ValueError("two-player games use discount 1")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool
    legal_mask: np.ndarray


WIN_LINES = ((0, 1, 2), (3, 4, 5), (6, 7, 8),
             (0, 3, 6), (1, 4, 7), (2, 5, 8),
             (0, 4, 8), (2, 4, 6))


class TicTacToe:
    """3x3 game; terminal reward +1/0 from the perspective of the player who just moved.

    State tuple: (board, to_play) with board a 9-tuple of 0 (empty), 1, 2.
    Observation: two occupancy planes plus a to-play plane, flattened (27).
    """

    spec = EnvSpec(name="tictactoe", action_space_size=9, observation_size=27,
                   num_players=2, discount=1.0, max_moves=9)

    def __init__(self):
        self.reset()

    def reset(self) -> np.ndarray:
        self._state = ((0,) * 9, 0)
        return self.observation()

    @property
    def state(self):
        return self._state

    def set_state(self, state):
        self._state = state

    @property
    def to_play(self) -> int:
        return self._state[1]

    @property
    def terminal(self) -> bool:
        return self.state_terminal(self._state)

    @classmethod
    def winner(cls, board) -> int:
        """0 if no completed line, else the mark (1 or 2) of the winner."""
        for a, b, c in WIN_LINES:
            if board[a] != 0 and board[a] == board[b] == board[c]:
                return board[a]
        return 0

    @classmethod
    def state_terminal(cls, state) -> bool:
        board, _ = state
        return cls.winner(board) != 0 or all(v != 0 for v in board)

    @classmethod
    def state_legal_mask(cls, state) -> np.ndarray:
        board, _ = state
        if cls.state_terminal(state):
            return np.zeros(9, dtype=bool)
        return np.array([v == 0 for v in board])

    @classmethod
    def state_observation(cls, state) -> np.ndarray:
        board, to_play = state
        planes = np.zeros((3, 9))
        planes[0] = [1.0 if v == 1 else 0.0 for v in board]
        planes[1] = [1.0 if v == 2 else 0.0 for v in board]
        planes[2] = 1.0 if to_play == 0 else 0.0
        return planes.reshape(-1)

    @classmethod
    def apply(cls, state, action: int):
        """Pure transition. Terminal or illegal inputs are absorbing no-ops
        (reward 0, side to move still alternates); live illegal moves are only
        reachable through the adapter, never through :meth:`step`."""
        board, to_play = state
        if cls.state_terminal(state) or board[action] != 0:
            return (board, 1 - to_play), 0.0, True if cls.state_terminal(state) else False
        mark = to_play + 1
        new_board = board[:action] + (mark,) + board[action + 1:]
        new_state = (new_board, 1 - to_play)
        won = cls.winner(new_board) == mark
        terminal = won or all(v != 0 for v in new_board)
        return new_state, 1.0 if won else 0.0, terminal

    def legal_actions(self) -> np.ndarray:
        return self.state_legal_mask(self._state)

    def observation(self) -> np.ndarray:
        return self.state_observation(self._state)

    def step(self, action: int) -> StepResult:
        if self.terminal:
            raise RuntimeError("step() on a finished game")
        if not 0 <= action < 9 or self._state[0][action] != 0:
            raise ValueError(f"illegal move {action} on board {self._state[0]}")
        self._state, reward, terminal = self.apply(self._state, action)
        return StepResult(self.observation(), reward, terminal, self.legal_actions())

    def render(self) -> str:
        marks = {0: ".", 1: "X", 2: "O"}
        board, _ = self._state
        rows = [" ".join(marks[board[3 * r + c]] for c in range(3)) for r in range(3)]
        return "\n".join(rows)


class ChainMdp:
    """Walk right along a chain for reward 1.0, or bail out left for 0.1.

    States 0..n-1 with start at 0. Moving left at state 0 ends the episode
    with the distractor reward 0.1; reaching state n-1 ends it with 1.0.
    Observations are one-hot state encodings. State tuple: (position, moves).
    """

    LEFT, RIGHT = 0, 1

    def __init__(self, n_states: int = 10, discount: float = 0.997, max_moves: int = 50,
                 distractor_reward: float = 0.1, goal_reward: float = 1.0):
        self.n_states = n_states
        self.distractor_reward = distractor_reward
        self.goal_reward = goal_reward
        self.spec = EnvSpec(name="chain", action_space_size=2, observation_size=n_states,
                            num_players=1, discount=discount, max_moves=max_moves)
        self.reset()

    def reset(self) -> np.ndarray:
        self._state = (0, 0)
        return self.observation()

    @property
    def state(self):
        return self._state

    def set_state(self, state):
        self._state = state

    @property
    def to_play(self) -> int:
        return 0

    @property
    def terminal(self) -> bool:
        return self.state_terminal(self._state)

    def state_terminal(self, state) -> bool:
        pos, moves = state
        return pos < 0 or pos == self.n_states - 1 or moves >= self.spec.max_moves

    def state_legal_mask(self, state) -> np.ndarray:
        return np.array([not self.state_terminal(state)] * 2)

    def state_observation(self, state) -> np.ndarray:
        pos, _ = state
        obs = np.zeros(self.n_states)
        obs[max(pos, 0)] = 1.0
        return obs

    def apply(self, state, action: int):
        pos, moves = state
        if self.state_terminal(state):
            return (pos, moves), 0.0, True
        if action == self.LEFT:
            if pos == 0:
                return (-1, moves + 1), self.distractor_reward, True
            return (pos - 1, moves + 1), 0.0, moves + 1 >= self.spec.max_moves
        new_pos = pos + 1
        if new_pos == self.n_states - 1:
            return (new_pos, moves + 1), self.goal_reward, True
        return (new_pos, moves + 1), 0.0, moves + 1 >= self.spec.max_moves

    def legal_actions(self) -> np.ndarray:
        return self.state_legal_mask(self._state)

    def observation(self) -> np.ndarray:
        return self.state_observation(self._state)

    def step(self, action: int) -> StepResult:
        if self.terminal:
            raise RuntimeError("step() on a finished episode")
        if action not in (self.LEFT, self.RIGHT):
            raise ValueError(f"invalid action {action}")
        self._state, reward, terminal = self.apply(self._state, action)
        return StepResult(self.observation(), reward, terminal, self.legal_actions())

    def enumerate_states(self):
        """Positions of the uncapped MDP (for the value-iteration oracle): the
        move counter is dropped because the cap never binds for good policies."""
        return [(pos, 0) for pos in range(self.n_states)]


class GridWorld:
    """5x5 grid with a goal, a trap, and a per-move cost (intermediate rewards).

    Deterministic moves (up/down/left/right); walking into a wall stays put.
    Rewards: -0.01 per move, +1 extra for entering the goal (terminal),
    -1 extra for entering the trap (terminal). State tuple: (row, col, moves).
    """

    DELTAS = ((-1, 0), (1, 0), (0, -1), (0, 1))

    def __init__(self, size: int = 5, discount: float = 0.997, max_moves: int = 50,
                 goal=(4, 4), trap=(2, 2), move_reward: float = -0.01):
        self.size = size
        self.goal = tuple(goal)
        self.trap = tuple(trap) if trap is not None else None
        self.move_reward = move_reward
        self.spec = EnvSpec(name="gridworld", action_space_size=4,
                            observation_size=size * size, num_players=1,
                            discount=discount, max_moves=max_moves)
        self.reset()

    def reset(self) -> np.ndarray:
        self._state = (0, 0, 0)
        return self.observation()

    @property
    def state(self):
        return self._state

    def set_state(self, state):
        self._state = state

    @property
    def to_play(self) -> int:
        return 0

    @property
    def terminal(self) -> bool:
        return self.state_terminal(self._state)

    def state_terminal(self, state) -> bool:
        r, c, moves = state
        return (r, c) == self.goal or (r, c) == self.trap or moves >= self.spec.max_moves

    def state_legal_mask(self, state) -> np.ndarray:
        return np.array([not self.state_terminal(state)] * 4)

    def state_observation(self, state) -> np.ndarray:
        r, c, _ = state
        obs = np.zeros(self.size * self.size)
        obs[r * self.size + c] = 1.0
        return obs

    def apply(self, state, action: int):
        r, c, moves = state
        if self.state_terminal(state):
            return (r, c, moves), 0.0, True
        dr, dc = self.DELTAS[action]
        nr, nc = r + dr, c + dc
        if not (0 <= nr < self.size and 0 <= nc < self.size):
            nr, nc = r, c
        reward = self.move_reward
        if (nr, nc) == self.goal:
            reward += 1.0
        elif (nr, nc) == self.trap:
            reward -= 1.0
        new_state = (nr, nc, moves + 1)
        return new_state, reward, self.state_terminal(new_state)

    def legal_actions(self) -> np.ndarray:
        return self.state_legal_mask(self._state)

    def observation(self) -> np.ndarray:
        return self.state_observation(self._state)

    def step(self, action: int) -> StepResult:
        if self.terminal:
            raise RuntimeError("step() on a finished episode")
        if not 0 <= action < 4:
            raise ValueError(f"invalid action {action}")
        self._state, reward, terminal = self.apply(self._state, action)
        return StepResult(self.observation(), reward, terminal, self.legal_actions())

    def enumerate_states(self):
        return [(r, c, 0) for r in range(self.size) for c in range(self.size)]


class PerfectModelAdapter:
    """Expose a cloneable environment through the learned-model interface.

    Hidden states are real environment state tuples; dynamics applies the true
    rules and rewards; predictions are a uniform prior over legal actions and
    the true outcome (from the side to move) at terminal states. Search over
    this adapter recovers perfect-simulator planning for oracle comparisons.

    Non-terminal leaf values come from a uniform-random playout to the end of
    the game when ``rollout_rng`` is given (classic Monte-Carlo evaluation,
    still rules-only); without it they are the constant 0, which starves the
    search of signal beyond its expansion depth and is only useful for
    structural tests.
    """

    def __init__(self, env, rollout_rng: np.random.Generator | None = None,
                 rollouts_per_eval: int = 8):
        self.env = env
        self.action_space_size = env.spec.action_space_size
        self.rollout_rng = rollout_rng
        self.rollouts_per_eval = rollouts_per_eval

    def _terminal_value(self, state) -> float:
        if self.env.spec.num_players == 1:
            return 0.0
        board, to_play = state
        w = self.env.winner(board)
        if w == 0:
            return 0.0
        return 1.0 if w == to_play + 1 else -1.0

    def _value(self, state) -> float:
        if self.env.state_terminal(state):
            return self._terminal_value(state)
        if self.rollout_rng is None:
            return 0.0
        n = self.rollouts_per_eval
        return sum(self._rollout(state) for _ in range(n)) / n

    def _rollout(self, state) -> float:
        """Random playout; returns the discounted outcome from the perspective
        of the side to move at ``state``.

        Two-player playouts are decisive: an immediately winning move is always
        taken and an immediate opposing win is blocked, otherwise the move is
        uniform. This sharpens the Monte-Carlo estimate without using anything
        beyond the rules.
        """
        rng = self.rollout_rng
        two_player = self.env.spec.num_players == 2
        total, g, sign = 0.0, 1.0, 1.0
        current = state
        while not self.env.state_terminal(current):
            legal = np.flatnonzero(self.env.state_legal_mask(current))
            action = self._decisive_action(current, legal) if two_player else None
            if action is None:
                action = int(legal[rng.integers(len(legal))])
            current, reward, _ = self.env.apply(current, action)
            total += g * sign * reward
            g *= self.env.spec.discount
            if two_player:
                sign = -sign
        return total

    def _decisive_action(self, state, legal):
        board, to_play = state
        win = block = None
        for action in legal:
            mine, _, _ = self.env.apply(state, int(action))
            if self.env.winner(mine[0]) == to_play + 1:
                win = int(action)
                break
            theirs, _, _ = self.env.apply((board, 1 - to_play), int(action))
            if self.env.winner(theirs[0]) == 2 - to_play:
                block = int(action)
        return win if win is not None else block

    def _priors(self, state) -> np.ndarray:
        legal = self.env.state_legal_mask(state)
        if not legal.any():
            legal = np.ones(self.action_space_size, dtype=bool)
        logits = np.where(legal, 0.0, -1e9)
        return logits

    def initial_inference(self, observation):
        state = self.env.state
        return state, self._priors(state), self._value(state)

    def recurrent_inference(self, state, action: int):
        if self.env.state_terminal(state) or not self.env.state_legal_mask(state)[action]:
            # Absorbing past terminal (and for illegal probes below the root).
            next_state, reward = self._absorb(state), 0.0
        else:
            next_state, reward, _ = self.env.apply(state, action)
        return next_state, reward, self._priors(next_state), self._value(next_state)

    def _absorb(self, state):
        if self.env.spec.num_players == 2:
            board, to_play = state
            return (board, 1 - to_play)
        return state
