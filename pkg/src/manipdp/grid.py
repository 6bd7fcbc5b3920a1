"""The two-representation growth grid.

A trader's portfolio growth is abstracted as a cell in a 3-column x 2-row
grid. The grid exists in two representations that differ only in where the
illiquid cell (the obstacle) sits: representation 1 has it at the top
centre, representation 2 at the bottom centre. Honest buy/sell actions move
the agent inside the current representation; manipulative actions first
flip the obstacle (switch representation) and then move. The goal cell,
top-right in both representations, is the target growth level.

State roster (col, row; row 1 is the top):

    rep 1:  x2 (0,1)   ####(1,1)  Goal1 (2,1)
            x1 (0,0)   x3 (1,0)   x4    (2,0)

    rep 2:  x6 (0,1)   x7 (1,1)   Goal2 (2,1)
            x5 (0,0)   ####(1,0)  x8    (2,0)

This module builds explicit tabular MDP/POMDP instances from a Scenario
describing rewards, toggle stochasticity and discounting.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from manipdp.mdp import FiniteMDP
from manipdp.pomdp import FinitePOMDP

N_COLS = 3
N_ROWS = 2
GOAL_POSITION = (2, 1)


class ContractError(ValueError):
    """An operation was called outside its stated contract."""


class Position(NamedTuple):
    col: int
    row: int


class Representation(enum.Enum):
    REP1 = "Rep1"
    REP2 = "Rep2"

    @property
    def obstacle(self) -> Position:
        return Position(1, 1) if self is Representation.REP1 else Position(1, 0)

    @property
    def other(self) -> "Representation":
        return Representation.REP2 if self is Representation.REP1 else Representation.REP1


class Action(enum.Enum):
    BUY_A = "BuyA"
    SELL_A = "SellA"
    BUY_B = "BuyB"
    SELL_B = "SellB"
    MBUY_A = "MBuyA"
    MSELL_A = "MSellA"
    MBUY_B = "MBuyB"
    MSELL_B = "MSellB"
    DO_NOTHING = "DoNothing"

    @property
    def manipulative(self) -> bool:
        return self.value.startswith("M")

    @property
    def direction(self) -> tuple[int, int] | None:
        """(dcol, drow) unit step, or None for DoNothing."""
        return _DIRECTIONS[self]

    @property
    def spoof_side_symbol(self) -> str:
        """Order-book alias naming the displayed (spoof) order side.

        A manipulative buy is executed by first showing a large sell order,
        so its alias carries the opposite side of the real trade. Honest
        actions and DoNothing alias to themselves.
        """
        return _SPOOF_SIDE[self]


_DIRECTIONS = {
    Action.BUY_A: (0, 1),
    Action.SELL_A: (0, -1),
    Action.BUY_B: (1, 0),
    Action.SELL_B: (-1, 0),
    Action.MBUY_A: (0, 1),
    Action.MSELL_A: (0, -1),
    Action.MBUY_B: (1, 0),
    Action.MSELL_B: (-1, 0),
    Action.DO_NOTHING: None,
}

_SPOOF_SIDE = {
    Action.BUY_A: "u_b^a",
    Action.SELL_A: "u_s^a",
    Action.BUY_B: "u_b^b",
    Action.SELL_B: "u_s^b",
    Action.MBUY_A: "u_s^{a,m}",
    Action.MSELL_A: "u_b^{a,m}",
    Action.MBUY_B: "u_s^{b,m}",
    Action.MSELL_B: "u_b^{b,m}",
    Action.DO_NOTHING: "u_dn",
}

#: Canonical action order used for every tabular model and emitted table.
ACTIONS = tuple(Action)


@dataclass(frozen=True)
class GrowthState:
    label: str
    representation: Representation
    position: Position

    @property
    def terminal(self) -> bool:
        return self.position == GOAL_POSITION

    def __str__(self) -> str:
        return self.label


def _roster() -> tuple[GrowthState, ...]:
    r1, r2 = Representation.REP1, Representation.REP2
    return (
        GrowthState("x1", r1, Position(0, 0)),
        GrowthState("x2", r1, Position(0, 1)),
        GrowthState("x3", r1, Position(1, 0)),
        GrowthState("x4", r1, Position(2, 0)),
        GrowthState("x5", r2, Position(0, 0)),
        GrowthState("x6", r2, Position(0, 1)),
        GrowthState("x7", r2, Position(1, 1)),
        GrowthState("x8", r2, Position(2, 0)),
        GrowthState("Goal1", r1, Position(*GOAL_POSITION)),
        GrowthState("Goal2", r2, Position(*GOAL_POSITION)),
    )


#: All ten states, non-terminal first; index order is shared by every model.
STATES = _roster()
STATE_BY_LABEL = {s.label: s for s in STATES}
STATE_INDEX = {s.label: i for i, s in enumerate(STATES)}
_STATE_AT = {(s.representation, s.position): s for s in STATES}

TERMINAL_MODES = ("absorbing_recurring", "one_shot")


@dataclass(frozen=True)
class Scenario:
    """Reward, stochasticity and discounting knobs for one regime."""

    move_cost: float = -1.0
    manip_move_cost: float = -1.0
    manip_edge_cost: float = 0.0
    honest_collision_cost: float = 0.0
    manip_collision_cost: float = -1.0
    terminal_per_tick_reward: float = 1.0
    discount: float = 0.95
    toggle_probability: float = 1.0
    terminal_mode: str = "absorbing_recurring"

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must be in (0,1), got {self.discount}")
        if not 0.0 <= self.toggle_probability <= 1.0:
            raise ValueError(
                f"toggle_probability must be in [0,1], got {self.toggle_probability}"
            )
        if self.terminal_mode not in TERMINAL_MODES:
            raise ValueError(f"unknown terminal_mode {self.terminal_mode!r}")

    @property
    def terminal_value(self) -> float:
        """Fixed value of a goal state under the chosen terminal convention."""
        if self.terminal_mode == "absorbing_recurring":
            return self.terminal_per_tick_reward / (1.0 - self.discount)
        return self.terminal_per_tick_reward

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_manipulation_cost(self, cost: float) -> "Scenario":
        """Set every manipulative reward channel (move, edge, collision) to `cost`."""
        return self.replace(
            manip_move_cost=cost, manip_edge_cost=cost, manip_collision_cost=cost
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, mapping: dict, base: "Scenario | None" = None) -> "Scenario":
        """Build from a key-value mapping; unknown keys are rejected.

        Missing keys fall back to `base` (or the defaults), so partial
        overrides are allowed.
        """
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ValueError(f"unknown scenario keys: {', '.join(unknown)}")
        base = base if base is not None else cls()
        return base.replace(**mapping)

    @classmethod
    def from_file(cls, path, base: "Scenario | None" = None) -> "Scenario":
        """Load a scenario from a JSON key-value file."""
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: scenario file must hold a key-value object")
        return cls.from_mapping(data, base=base)


class MoveEvent(enum.Enum):
    MOVED = "Moved"
    EDGE_BOUNCE = "EdgeBounce"
    OBSTACLE_COLLISION = "ObstacleCollision"
    REACHED_GOAL = "ReachedGoal"
    STAYED = "Stayed"


@dataclass(frozen=True)
class MoveOutcome:
    next_state: GrowthState
    reward: float
    event: MoveEvent


def resolve_move(
    state: GrowthState, action: Action, toggled: bool, scenario: Scenario
) -> MoveOutcome:
    """Deterministically resolve one action given the toggle decision.

    Manipulative actions with toggled=True switch representation first and
    then move inside the new one; toggled=False is the stagnation branch
    where the obstacle stays put but the (manipulative) costs still apply.
    Honest actions and DoNothing must be called with toggled=False.
    """
    if state.terminal:
        raise ContractError(f"cannot act from terminal state {state.label}")
    if toggled and not action.manipulative:
        raise ContractError(f"honest action {action.value} cannot toggle the obstacle")

    if action is Action.DO_NOTHING:
        return MoveOutcome(state, 0.0, MoveEvent.STAYED)

    manip = action.manipulative
    rep = state.representation.other if toggled else state.representation
    dcol, drow = action.direction
    target = Position(state.position.col + dcol, state.position.row + drow)

    off_grid = not (0 <= target.col < N_COLS and 0 <= target.row < N_ROWS)
    if off_grid:
        # Bouncing back onto the post-toggle obstacle (x7 up, x3 down) would
        # strand the agent on an illiquid cell; the toggle is annulled.
        if state.position == rep.obstacle:
            return MoveOutcome(state, scenario.manip_edge_cost, MoveEvent.EDGE_BOUNCE)
        stay = _STATE_AT[(rep, state.position)]
        reward = scenario.manip_edge_cost if manip else 0.0
        return MoveOutcome(stay, reward, MoveEvent.EDGE_BOUNCE)

    if target == rep.obstacle:
        stay = _STATE_AT[(rep, state.position)]
        reward = scenario.manip_collision_cost if manip else scenario.honest_collision_cost
        return MoveOutcome(stay, reward, MoveEvent.OBSTACLE_COLLISION)

    dest = _STATE_AT[(rep, target)]
    reward = scenario.manip_move_cost if manip else scenario.move_cost
    event = MoveEvent.REACHED_GOAL if dest.terminal else MoveEvent.MOVED
    return MoveOutcome(dest, reward, event)


def _branches(state, action, scenario):
    """(probability, MoveOutcome) pairs for one state-action pair."""
    if not action.manipulative:
        return [(1.0, resolve_move(state, action, False, scenario))]
    p = scenario.toggle_probability
    branches = []
    if p > 0.0:
        branches.append((p, resolve_move(state, action, True, scenario)))
    if p < 1.0:
        branches.append((1.0 - p, resolve_move(state, action, False, scenario)))
    return branches


def build_mdp(scenario: Scenario) -> FiniteMDP:
    """Emit the explicit 10-state, 9-action tabular MDP for a scenario."""
    n, m = len(STATES), len(ACTIONS)
    transition = np.zeros((n, m, n))
    reward = np.zeros((n, m))
    terminal = np.array([s.terminal for s in STATES])
    for i, state in enumerate(STATES):
        if state.terminal:
            transition[i, :, i] = 1.0
            reward[i, :] = scenario.terminal_per_tick_reward
            continue
        for a, action in enumerate(ACTIONS):
            for prob, outcome in _branches(state, action, scenario):
                transition[i, a, STATE_INDEX[outcome.next_state.label]] += prob
                reward[i, a] += prob * outcome.reward
    terminal_values = np.where(terminal, scenario.terminal_value, 0.0)
    return FiniteMDP(
        transition=transition,
        reward=reward,
        discount=scenario.discount,
        terminal=terminal,
        terminal_values=terminal_values,
        state_labels=tuple(s.label for s in STATES),
        action_labels=tuple(a.value for a in ACTIONS),
    )


#: Observation alphabet: one symbol per reachable grid position.
OBSERVATION_LABELS = ("y1", "y2", "y3", "y4", "y5", "yGoal")
_OBSERVATION_AT = {
    Position(0, 0): "y1",
    Position(0, 1): "y2",
    Position(1, 0): "y3",
    Position(2, 0): "y4",
    Position(1, 1): "y5",
    Position(*GOAL_POSITION): "yGoal",
}


def observation_of(state: GrowthState) -> str:
    """The symbol emitted on arrival in `state`: its position, nothing more."""
    return _OBSERVATION_AT[state.position]


def build_pomdp(scenario: Scenario) -> FinitePOMDP:
    """Emit the tabular POMDP: the MDP plus position-revealing observations.

    Observations depend only on the landed-on position; which representation
    the market is in stays hidden.
    """
    mdp = build_mdp(scenario)
    obs_index = {y: k for k, y in enumerate(OBSERVATION_LABELS)}
    observation = np.zeros((len(STATES), len(OBSERVATION_LABELS)))
    for i, state in enumerate(STATES):
        observation[i, obs_index[observation_of(state)]] = 1.0
    return FinitePOMDP(
        mdp=mdp,
        observation=observation,
        observation_labels=OBSERVATION_LABELS,
    )
