"""Exact ground-truth computations used by tests, evaluation, and acceptance.

These deliberately share no code with the search or the learned model: the
tic-tac-toe minimax re-implements the win rules on raw board tuples, and the
value-iteration oracle only needs an environment's pure transition function.
"""

from __future__ import annotations

from functools import lru_cache

_LINES = ((0, 1, 2), (3, 4, 5), (6, 7, 8),
          (0, 3, 6), (1, 4, 7), (2, 5, 8),
          (0, 4, 8), (2, 4, 6))


@lru_cache(maxsize=None)
def minimax_value(board: tuple, to_play: int):
    """Exhaustive tic-tac-toe minimax with memoization.

    ``board`` is a 9-tuple of 0/1/2 marks; ``to_play`` is 0 or 1. Returns
    (value, optimal_actions): the game value in {-1, 0, +1} from the
    perspective of the side to move, and the tuple of actions achieving it.
    At most 5478 distinct positions exist, so the search is exact.
    """
    for a, b, c in _LINES:
        if board[a] != 0 and board[a] == board[b] == board[c]:
            # The side to move faces a completed opposing line.
            return (1 if board[a] == to_play + 1 else -1), ()
    empties = [i for i in range(9) if board[i] == 0]
    if not empties:
        return 0, ()
    best, best_actions = -2, []
    mark = to_play + 1
    for action in empties:
        child = board[:action] + (mark,) + board[action + 1:]
        child_value, _ = minimax_value(child, 1 - to_play)
        value = -child_value
        if value > best:
            best, best_actions = value, [action]
        elif value == best:
            best_actions.append(action)
    return best, tuple(best_actions)


def value_iteration(env, gamma: float, tol: float = 1e-10, max_iters: int = 1_000_000):
    """Bellman-optimality iteration over an enumerable deterministic MDP.

    ``env`` must provide ``enumerate_states()``, ``spec.action_space_size``
    and a pure ``apply(state, action) -> (next_state, reward, terminal)``.
    Iterates until the residual is <= tol. Returns (values, policy) dicts
    keyed by state; ties in the greedy policy break toward the lowest action.
    """
    states = list(env.enumerate_states())
    terminal = {s: env.state_terminal(s) for s in states}
    values = {s: 0.0 for s in states}
    transitions = {}
    for s in states:
        if terminal[s]:
            continue
        row = []
        for a in range(env.spec.action_space_size):
            ns, r, term = env.apply(s, a)
            ns = _strip_move_counter(ns, s)
            row.append((ns, r, term))
        transitions[s] = row
    for _ in range(max_iters):
        residual = 0.0
        for s in states:
            if terminal[s]:
                continue
            best = max(r + (0.0 if term else gamma * values[ns])
                       for ns, r, term in transitions[s])
            residual = max(residual, abs(best - values[s]))
            values[s] = best
        if residual <= tol:
            break
    else:
        raise RuntimeError(f"value iteration did not reach tol={tol}")
    policy = {}
    for s in states:
        if terminal[s]:
            continue
        returns = [r + (0.0 if term else gamma * values[ns]) for ns, r, term in transitions[s]]
        policy[s] = int(max(range(len(returns)), key=lambda a: (returns[a], -a)))
    return values, policy


def _strip_move_counter(next_state, template):
    """Map a successor onto the enumerated (move-counter-free) state set."""
    if isinstance(next_state, tuple) and isinstance(next_state[-1], int):
        return next_state[:-1] + (0,)
    return next_state


def discounted_return(rewards, gamma: float, bootstrap: float = 0.0) -> float:
    """Sum of gamma^i * rewards[i] plus gamma^len(rewards) * bootstrap."""
    total = 0.0
    g = 1.0
    for r in rewards:
        total += g * r
        g *= gamma
    return total + g * bootstrap
