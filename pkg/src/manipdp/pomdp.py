"""Belief-state machinery and two independent POMDP solvers.

The primary solver is exact value iteration over sets of alpha vectors with
pairwise-domination and linear-program pruning. The cross-check solver
discretizes the belief space: observations reveal the grid position, so a
reachable belief is a position plus a single mixing weight between the two
representations, which makes a one-dimensional grid per position exact
enough to audit the alpha-vector results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from manipdp.mdp import FiniteMDP

_DEDUPE_TOL = 1e-12
_LP_TOL = 1e-9


class ImpossibleObservationError(ValueError):
    """An observation with zero probability under the model and belief.

    Raised by belief_update; signals a mismatch between a trace and the
    model rather than a numerical problem.
    """


@dataclass(frozen=True)
class FinitePOMDP:
    """A tabular MDP extended with an observation channel.

    observation[x', y] is O(y|x'), the probability of observing y on arrival
    in x'. Observations here do not depend on the action taken.
    """

    mdp: FiniteMDP
    observation: np.ndarray
    observation_labels: tuple[str, ...]

    def __post_init__(self):
        self.observation.setflags(write=False)
        rows = self.observation.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            raise ValueError("each observation row must sum to 1")

    @property
    def n_states(self) -> int:
        return self.mdp.n_states

    @property
    def n_actions(self) -> int:
        return self.mdp.n_actions

    @property
    def n_observations(self) -> int:
        return self.observation.shape[1]

    @property
    def discount(self) -> float:
        return self.mdp.discount

    def observation_index(self, label: str) -> int:
        return self.observation_labels.index(label)


def identity_observations(pomdp: FinitePOMDP) -> FinitePOMDP:
    """The same model with fully revealing observations (one per state)."""
    n = pomdp.n_states
    return FinitePOMDP(
        mdp=pomdp.mdp,
        observation=np.eye(n),
        observation_labels=tuple(pomdp.mdp.state_labels),
    )


def pure_belief(pomdp: FinitePOMDP, state_label: str) -> np.ndarray:
    belief = np.zeros(pomdp.n_states)
    belief[pomdp.mdp.state_index(state_label)] = 1.0
    return belief


def canonical_belief(pomdp: FinitePOMDP, observation_label: str) -> np.ndarray:
    """Uniform belief over the non-terminal states emitting the observation."""
    y = pomdp.observation_index(observation_label)
    support = (pomdp.observation[:, y] > 0) & ~pomdp.mdp.terminal
    if not support.any():
        raise ValueError(f"no non-terminal state emits {observation_label}")
    belief = support.astype(float)
    return belief / belief.sum()


def belief_update(
    pomdp: FinitePOMDP, belief: np.ndarray, action: str, observation: str
) -> np.ndarray:
    """Bayes posterior b'(x') proportional to O(y|x') sum_x P(x'|x,u) b(x)."""
    a = pomdp.mdp.action_index(action)
    y = pomdp.observation_index(observation)
    predicted = belief @ pomdp.mdp.transition[:, a, :]
    unnormalized = predicted * pomdp.observation[:, y]
    mass = unnormalized.sum()
    if mass <= 1e-12:
        raise ImpossibleObservationError(
            f"observation {observation} has zero probability after {action}"
        )
    return unnormalized / mass


@dataclass(frozen=True)
class AlphaVector:
    """One supporting hyperplane of the convex value function."""

    values: np.ndarray
    action: str

    def __post_init__(self):
        self.values.setflags(write=False)


def alpha_matrix(alphas: list[AlphaVector]) -> np.ndarray:
    return np.stack([a.values for a in alphas])


def value_of_belief(alphas: list[AlphaVector], belief: np.ndarray) -> float:
    """V(b) = max over alpha vectors of <alpha, b>."""
    return float(np.max(alpha_matrix(alphas) @ belief))


def _dedupe(vectors: np.ndarray) -> np.ndarray:
    keys = np.round(vectors / _DEDUPE_TOL).astype(np.int64)
    _, keep = np.unique(keys, axis=0, return_index=True)
    return vectors[np.sort(keep)]


def _undominated_mask(vectors: np.ndarray) -> np.ndarray:
    """Mask of vectors no single other (kept) vector dominates everywhere."""
    n = len(vectors)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        for j in range(n):
            if j == i or not keep[j]:
                continue
            if np.all(vectors[j] >= vectors[i] - 1e-12):
                keep[i] = False
                break
    return keep


def _pointwise_prune(vectors: np.ndarray) -> np.ndarray:
    if len(vectors) <= 1:
        return vectors
    return vectors[_undominated_mask(vectors)]


def _lp_witness(candidate: np.ndarray, kept: np.ndarray) -> bool:
    """True when some belief values `candidate` strictly above all of `kept`.

    Solves: max d s.t. b.(w - candidate) + d <= 0 for all kept w, b in the
    simplex. The candidate earns its place when the optimum exceeds _LP_TOL.
    """
    n_states = candidate.shape[0]
    c = np.zeros(n_states + 1)
    c[-1] = -1.0
    a_ub = np.hstack([kept - candidate, np.ones((len(kept), 1))])
    b_ub = np.zeros(len(kept))
    a_eq = np.ones((1, n_states + 1))
    a_eq[0, -1] = 0.0
    bounds = [(0.0, None)] * n_states + [(None, None)]
    res = linprog(
        c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs"
    )
    if not res.success:
        raise RuntimeError(f"pruning LP failed: {res.message}")
    return -res.fun > _LP_TOL


def _lp_prune(vectors: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Keep only vectors that are maximal somewhere on the belief simplex."""
    if len(vectors) <= 1:
        return vectors, actions
    # Seed with the best vector at each simplex corner so coverage never drops.
    seeds = sorted(set(np.argmax(vectors, axis=0)))
    keep = list(seeds)
    for i in range(len(vectors)):
        if i in keep:
            continue
        if _lp_witness(vectors[i], vectors[keep]):
            keep.append(i)
    keep = sorted(keep)
    return vectors[keep], actions[keep]


def _prune(vectors: np.ndarray, actions: np.ndarray, use_lp: bool):
    # Canonical sort first so the surviving set is bit-reproducible.
    order = np.lexsort(vectors.T)
    vectors, actions = vectors[order], actions[order]
    keys = np.round(vectors / _DEDUPE_TOL).astype(np.int64)
    _, unique_idx = np.unique(keys, axis=0, return_index=True)
    unique_idx = np.sort(unique_idx)
    vectors, actions = vectors[unique_idx], actions[unique_idx]

    keep = _undominated_mask(vectors)
    vectors, actions = vectors[keep], actions[keep]

    if use_lp:
        vectors, actions = _lp_prune(vectors, actions)
    return vectors, actions


def _reference_beliefs(pomdp: FinitePOMDP) -> np.ndarray:
    """Pure beliefs plus mixes inside each observation's support."""
    beliefs = [pure_belief(pomdp, s) for s in pomdp.mdp.state_labels]
    for y, label in enumerate(pomdp.observation_labels):
        support = np.flatnonzero((pomdp.observation[:, y] > 0) & ~pomdp.mdp.terminal)
        if len(support) < 2:
            continue
        for w in (0.25, 0.5, 0.75):
            b = np.zeros(pomdp.n_states)
            b[support[0]] = w
            b[support[1:]] = (1.0 - w) / (len(support) - 1)
            beliefs.append(b)
    return np.stack(beliefs)


def alpha_value_iteration(
    pomdp: FinitePOMDP,
    epsilon: float = 1e-9,
    max_backups: int = 2000,
    lp_every: int = 10,
) -> list[AlphaVector]:
    """Exact dynamic-programming backups over alpha-vector sets.

    Each backup cross-sums per-observation continuations for every action and
    prunes the union. Duplicate and pointwise-dominated vectors go every
    sweep; the exact linear-program prune runs every `lp_every` sweeps and on
    the final set (skipping it between sweeps never changes the value
    function, only the set size). Stops when the value change over a fixed
    reference belief set drops below epsilon.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    mdp = pomdp.mdp
    mdp.validate()
    gamma = mdp.discount
    n_states, n_actions = mdp.n_states, mdp.n_actions
    n_obs = pomdp.n_observations
    terminal = mdp.terminal
    terminal_fill = mdp.terminal_values[terminal]

    # back[u, y] maps a continuation alpha to its discounted contribution.
    back = np.empty((n_actions, n_obs, n_states, n_states))
    for u in range(n_actions):
        for y in range(n_obs):
            back[u, y] = gamma * mdp.transition[:, u, :] * pomdp.observation[:, y]

    refs = _reference_beliefs(pomdp)

    low = mdp.reward[~terminal].min() / (1.0 - gamma)
    init = np.full(n_states, min(low, terminal_fill.min(initial=0.0)))
    init[terminal] = terminal_fill
    vectors = init[None, :]
    actions = np.array([n_actions - 1])
    ref_values = (vectors @ refs.T).max(axis=0)

    for sweep in range(1, max_backups + 1):
        cand_vectors = []
        cand_actions = []
        for u in range(n_actions):
            acc = mdp.reward[:, u][None, :]
            for y in range(n_obs):
                cont = vectors @ back[u, y].T
                cont = _pointwise_prune(_dedupe(cont))
                acc = (acc[:, None, :] + cont[None, :, :]).reshape(-1, n_states)
                acc = _pointwise_prune(_dedupe(acc))
            acc[:, terminal] = terminal_fill
            cand_vectors.append(acc)
            cand_actions.append(np.full(len(acc), u))
        all_vectors = np.concatenate(cand_vectors)
        all_actions = np.concatenate(cand_actions)
        use_lp = sweep % lp_every == 0
        vectors, actions = _prune(all_vectors, all_actions, use_lp=use_lp)

        new_ref = (vectors @ refs.T).max(axis=0)
        residual = np.max(np.abs(new_ref - ref_values))
        ref_values = new_ref
        if residual < epsilon:
            break

    vectors, actions = _prune(vectors, actions, use_lp=True)
    return [
        AlphaVector(values=v.copy(), action=mdp.action_labels[int(a)])
        for v, a in zip(vectors, actions)
    ]


def one_step_lookahead(
    pomdp: FinitePOMDP, belief: np.ndarray, value_fn
) -> np.ndarray:
    """Q(b,u) for every action, with value_fn pricing the posterior beliefs."""
    mdp = pomdp.mdp
    q = np.empty(mdp.n_actions)
    for u in range(mdp.n_actions):
        rho = float(belief @ mdp.reward[:, u])
        predicted = belief @ mdp.transition[:, u, :]
        total = rho
        for y in range(pomdp.n_observations):
            unnormalized = predicted * pomdp.observation[:, y]
            mass = unnormalized.sum()
            if mass <= 1e-15:
                continue
            total += mdp.discount * mass * value_fn(unnormalized / mass)
        q[u] = total
    return q


def policy_at_observation(
    pomdp: FinitePOMDP,
    alphas: list[AlphaVector],
    tie_tolerance: float = 1e-6,
) -> dict[str, tuple[str, ...]]:
    """Tie-tolerant optimal actions at each observation's canonical belief.

    The canonical belief is uniform over the states compatible with the
    observation (pure where only one state emits it). Observations emitted
    only by terminal states are omitted.
    """
    mat = alpha_matrix(alphas)
    value_fn = lambda b: float(np.max(mat @ b))
    policy = {}
    for y, label in enumerate(pomdp.observation_labels):
        support = (pomdp.observation[:, y] > 0) & ~pomdp.mdp.terminal
        if not support.any():
            continue
        belief = canonical_belief(pomdp, label)
        q = one_step_lookahead(pomdp, belief, value_fn)
        best = q.max()
        policy[label] = tuple(
            pomdp.mdp.action_labels[u]
            for u in range(pomdp.n_actions)
            if q[u] >= best - tie_tolerance
        )
    return policy


@dataclass(frozen=True)
class BeliefGridValue:
    """Value function over a discretized belief space.

    Points live at (observation, q) where q is the probability of the
    first (lowest-index) state compatible with that observation.
    """

    observation_labels: tuple[str, ...]
    point_observation: np.ndarray
    point_q: np.ndarray
    values: np.ndarray
    terminal_value: float
    grid_resolution: int

    def value(self, observation_label: str, q: float) -> float:
        y = self.observation_labels.index(observation_label)
        mask = self.point_observation == y
        if not mask.any():
            raise ValueError(f"no grid points for observation {observation_label}")
        idx = np.flatnonzero(mask)
        nearest = idx[np.argmin(np.abs(self.point_q[idx] - q))]
        return float(self.values[nearest])


def _position_structure(pomdp: FinitePOMDP):
    """Non-terminal states grouped by observation; at most two per group."""
    groups = {}
    for y in range(pomdp.n_observations):
        support = np.flatnonzero((pomdp.observation[:, y] > 0) & ~pomdp.mdp.terminal)
        if len(support) > 2:
            raise ValueError(
                "belief-grid solver needs position-keyed observations with at "
                "most two compatible states each"
            )
        if len(support) > 0:
            groups[y] = support
    deterministic = np.all(np.isin(pomdp.observation, (0.0, 1.0)))
    if not deterministic:
        raise ValueError("belief-grid solver needs deterministic observations")
    return groups


def belief_grid_value_iteration(
    pomdp: FinitePOMDP,
    grid_resolution: int = 101,
    epsilon: float = 1e-10,
    max_iterations: int = 100_000,
) -> BeliefGridValue:
    """Value iteration over the discretized belief MDP.

    Bayes posteriors are projected to the nearest grid point. Independent of
    the alpha-vector machinery by construction.
    """
    if grid_resolution < 11:
        raise ValueError("grid_resolution must be at least 11")
    mdp = pomdp.mdp
    mdp.validate()
    groups = _position_structure(pomdp)
    gamma = mdp.discount
    terminal_value = float(mdp.terminal_values[mdp.terminal][0]) if mdp.terminal.any() else 0.0

    point_obs, point_q = [], []
    for y, support in sorted(groups.items()):
        qs = np.linspace(0.0, 1.0, grid_resolution) if len(support) == 2 else [1.0]
        for q in qs:
            point_obs.append(y)
            point_q.append(float(q))
    point_obs = np.array(point_obs)
    point_q = np.array(point_q)
    n_points = len(point_obs)

    def nearest_point(y, q):
        idx = np.flatnonzero(point_obs == y)
        return int(idx[np.argmin(np.abs(point_q[idx] - q))])

    # Expand every (point, action) into constants plus grid-successor branches.
    max_branches = len(groups)
    base = np.zeros((n_points, mdp.n_actions))
    branch_prob = np.zeros((n_points, mdp.n_actions, max_branches))
    branch_idx = np.zeros((n_points, mdp.n_actions, max_branches), dtype=int)
    for i in range(n_points):
        support = groups[point_obs[i]]
        belief = np.zeros(mdp.n_states)
        if len(support) == 2:
            belief[support[0]] = point_q[i]
            belief[support[1]] = 1.0 - point_q[i]
        else:
            belief[support[0]] = 1.0
        for u in range(mdp.n_actions):
            rho = float(belief @ mdp.reward[:, u])
            predicted = belief @ mdp.transition[:, u, :]
            const = rho + gamma * float(predicted[mdp.terminal].sum()) * terminal_value
            k = 0
            for y, nxt_support in sorted(groups.items()):
                mass = float(predicted[nxt_support].sum())
                if mass <= 1e-15:
                    continue
                q_next = float(predicted[nxt_support[0]] / mass)
                branch_prob[i, u, k] = mass
                branch_idx[i, u, k] = nearest_point(y, q_next)
                k += 1
            base[i, u] = const
    values = np.zeros(n_points)
    for _ in range(max_iterations):
        q_table = base + gamma * (branch_prob * values[branch_idx]).sum(axis=2)
        updated = q_table.max(axis=1)
        residual = np.max(np.abs(updated - values))
        values = updated
        if residual < epsilon:
            break
    else:
        raise RuntimeError("belief-grid value iteration did not converge")

    return BeliefGridValue(
        observation_labels=tuple(pomdp.observation_labels),
        point_observation=point_obs,
        point_q=point_q,
        values=values,
        terminal_value=terminal_value,
        grid_resolution=grid_resolution,
    )


def grid_value_fn(grid: BeliefGridValue, pomdp: FinitePOMDP):
    """Adapt a BeliefGridValue to a value_fn over full belief vectors."""
    groups = _position_structure(pomdp)

    def value_fn(belief: np.ndarray) -> float:
        nonterminal_mass = float(belief[~pomdp.mdp.terminal].sum())
        terminal_mass = float(belief[pomdp.mdp.terminal].sum())
        if nonterminal_mass <= 1e-15:
            return grid.terminal_value
        support = [
            s for s in np.flatnonzero(belief > 1e-15) if not pomdp.mdp.terminal[s]
        ]
        ys = {int(pomdp.observation[s].argmax()) for s in support}
        if len(ys) != 1:
            raise ValueError("belief support spans multiple observations")
        y = ys.pop()
        # q anchors on the observation group's first state, not the support's.
        first = groups[y][0]
        q = float(belief[first] / nonterminal_mass)
        label = pomdp.observation_labels[y]
        return (
            nonterminal_mass * grid.value(label, q)
            + terminal_mass * grid.terminal_value
        )

    return value_fn


def policy_from_grid(
    pomdp: FinitePOMDP,
    grid: BeliefGridValue,
    tie_tolerance: float = 1e-6,
) -> dict[str, tuple[str, ...]]:
    """policy_at_observation with the grid value function as the backstop."""
    value_fn = grid_value_fn(grid, pomdp)
    policy = {}
    for y, label in enumerate(pomdp.observation_labels):
        support = (pomdp.observation[:, y] > 0) & ~pomdp.mdp.terminal
        if not support.any():
            continue
        belief = canonical_belief(pomdp, label)
        q = one_step_lookahead(pomdp, belief, value_fn)
        best = q.max()
        policy[label] = tuple(
            pomdp.mdp.action_labels[u]
            for u in range(pomdp.n_actions)
            if q[u] >= best - tie_tolerance
        )
    return policy
