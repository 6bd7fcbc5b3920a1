"""Exact solvers for explicit tabular MDPs.

Infinite-horizon value iteration, Q tables, tie-tolerant policy extraction,
greedy rollouts, and a finite-horizon backward-induction oracle used as an
independent correctness check on the fixed-point solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ModelValidationError(ValueError):
    """The tabular model violates its stochasticity contract."""


@dataclass(frozen=True)
class FiniteMDP:
    """Explicit tabular MDP.

    transition[x, u, x'] is P(x'|x,u); reward[x, u] the expected immediate
    reward. Terminal states are absorbing and their values are held fixed at
    terminal_values during every solve.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    terminal: np.ndarray
    terminal_values: np.ndarray
    state_labels: tuple[str, ...]
    action_labels: tuple[str, ...]

    def __post_init__(self):
        for arr in (self.transition, self.reward, self.terminal, self.terminal_values):
            arr.setflags(write=False)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def state_index(self, label: str) -> int:
        return self.state_labels.index(label)

    def action_index(self, label: str) -> int:
        return self.action_labels.index(label)

    def validate(self) -> None:
        if self.transition.shape != (self.n_states, self.n_actions, self.n_states):
            raise ModelValidationError("transition tensor has inconsistent shape")
        if self.reward.shape != (self.n_states, self.n_actions):
            raise ModelValidationError("reward table has inconsistent shape")
        if np.any(self.transition < 0):
            raise ModelValidationError("negative transition probability")
        row_sums = self.transition.sum(axis=2)
        bad = np.argwhere(np.abs(row_sums - 1.0) > 1e-12)
        if bad.size:
            x, u = bad[0]
            raise ModelValidationError(
                f"transition row P(.|{self.state_labels[x]},{self.action_labels[u]}) "
                f"sums to {row_sums[x, u]!r}, not 1"
            )
        leak = self.transition[self.terminal][:, :, ~self.terminal].sum()
        if leak > 0:
            raise ModelValidationError("terminal state has outgoing mass")


def _pinned(values: np.ndarray, mdp: FiniteMDP) -> np.ndarray:
    out = values.copy()
    out[mdp.terminal] = mdp.terminal_values[mdp.terminal]
    return out


def _backup(mdp: FiniteMDP, values: np.ndarray) -> np.ndarray:
    q = mdp.reward + mdp.discount * (mdp.transition @ values)
    return _pinned(q.max(axis=1), mdp)


def value_iteration(
    mdp: FiniteMDP, epsilon: float = 1e-10, max_iterations: int = 100_000
) -> np.ndarray:
    """Solve for the optimal values to a sup-norm Bellman residual < epsilon.

    Terminal entries are pinned, not iterated. The iteration count is
    bounded by the discount contraction: ceil(log(eps*(1-g)/range)/log(g)).
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mdp.validate()
    values = _pinned(np.zeros(mdp.n_states), mdp)
    for _ in range(max_iterations):
        updated = _backup(mdp, values)
        residual = np.max(np.abs(updated - values))
        values = updated
        if residual < epsilon:
            return values
    raise RuntimeError(f"value iteration did not converge in {max_iterations} sweeps")


def q_values(mdp: FiniteMDP, values: np.ndarray) -> np.ndarray:
    """Q(x,u) = J(x,u) + gamma * sum_x' P(x'|x,u) V(x')."""
    values = np.asarray(values, dtype=float)
    if values.shape != (mdp.n_states,):
        raise ValueError(
            f"value vector has shape {values.shape}, expected ({mdp.n_states},)"
        )
    return mdp.reward + mdp.discount * (mdp.transition @ values)


def extract_policy_set(
    mdp: FiniteMDP, q: np.ndarray, tie_tolerance: float = 1e-6
) -> dict[str, tuple[str, ...]]:
    """Per non-terminal state, every action within tie_tolerance of the best.

    Actions come back in the model's canonical action order.
    """
    if tie_tolerance < 0:
        raise ValueError("tie_tolerance must be non-negative")
    policy = {}
    for x, label in enumerate(mdp.state_labels):
        if mdp.terminal[x]:
            continue
        best = q[x].max()
        policy[label] = tuple(
            mdp.action_labels[u]
            for u in range(mdp.n_actions)
            if q[x, u] >= best - tie_tolerance
        )
    return policy


#: Rollout preference: manipulative actions first, then honest, then idle.
MANIPULATIVE_FIRST = (
    "MBuyA", "MSellA", "MBuyB", "MSellB",
    "BuyA", "SellA", "BuyB", "SellB", "DoNothing",
)


@dataclass(frozen=True)
class Trajectory:
    states: tuple[str, ...]
    actions: tuple[str, ...]
    reached_terminal: bool
    cycle: tuple[str, ...] = field(default=())

    @property
    def steps(self) -> int:
        return len(self.actions)


def greedy_trajectory(
    mdp: FiniteMDP,
    policy: dict[str, tuple[str, ...]],
    start: str,
    tie_break: tuple[str, ...] = MANIPULATIVE_FIRST,
) -> Trajectory:
    """Follow the first tie-set action (per tie_break order) from `start`.

    Requires deterministic dynamics for the chosen actions. Stops on a
    terminal state, or reports the cycle when a state repeats.
    """
    state = mdp.state_index(start)
    if mdp.terminal[state]:
        raise ValueError(f"start state {start} is terminal")
    order = {a: k for k, a in enumerate(tie_break)}
    states = [start]
    actions = []
    seen = {start}
    while True:
        label = mdp.state_labels[state]
        tie_set = policy[label]
        action = min(tie_set, key=lambda a: order[a])
        row = mdp.transition[state, mdp.action_index(action)]
        nxt = int(np.argmax(row))
        if not np.isclose(row[nxt], 1.0, atol=1e-12):
            raise ValueError(
                f"action {action} from {label} is stochastic; greedy rollout "
                "needs deterministic dynamics"
            )
        actions.append(action)
        next_label = mdp.state_labels[nxt]
        states.append(next_label)
        if mdp.terminal[nxt]:
            return Trajectory(tuple(states), tuple(actions), True)
        if next_label in seen:
            loop_start = states.index(next_label)
            return Trajectory(
                tuple(states), tuple(actions), False, tuple(states[loop_start:])
            )
        seen.add(next_label)
        state = nxt


def finite_horizon_oracle(mdp: FiniteMDP, horizon: int) -> np.ndarray:
    """Exact backward induction over `horizon` steps from a zero tail.

    Independent of the fixed-point path: no convergence test, no reuse of
    value_iteration. The result is within discount**horizon * value_range of
    the infinite-horizon solution.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    values = _pinned(np.zeros(mdp.n_states), mdp)
    for _ in range(horizon):
        values = _backup(mdp, values)
    return values
