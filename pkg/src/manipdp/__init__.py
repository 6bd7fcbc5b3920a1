"""Growth-grid models of manipulative trading, tabular solvers, and backtests."""

from manipdp.grid import (
    Action,
    GrowthState,
    MoveEvent,
    MoveOutcome,
    Position,
    Representation,
    Scenario,
    build_mdp,
    build_pomdp,
    resolve_move,
)
from manipdp.mdp import (
    FiniteMDP,
    Trajectory,
    extract_policy_set,
    finite_horizon_oracle,
    greedy_trajectory,
    q_values,
    value_iteration,
)
from manipdp.pomdp import (
    AlphaVector,
    FinitePOMDP,
    ImpossibleObservationError,
    alpha_value_iteration,
    belief_grid_value_iteration,
    belief_update,
    canonical_belief,
    policy_at_observation,
    pure_belief,
)
from manipdp.backtest import (
    BacktestReport,
    Portfolio,
    PriceSeries,
    StrategyKind,
    StrategySpec,
    load_price_csv,
    run_strategy,
    summarize_runs,
)
from manipdp.experiments import (
    PRESETS,
    PolicyTable,
    SweepResult,
    critical_threshold_sweep,
    run_table1,
    run_table2,
    run_table3,
)

__version__ = "0.1.0"
