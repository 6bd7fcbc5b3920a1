import numpy as np
import pytest

from manipdp.grid import Scenario, build_mdp
from manipdp.mdp import (
    FiniteMDP,
    ModelValidationError,
    extract_policy_set,
    finite_horizon_oracle,
    greedy_trajectory,
    q_values,
    value_iteration,
)

# Hand Bellman recursion with the goal pinned at 20: x4/x7/x8 are one step
# from a goal (-1 + 0.95*20), x2/x3/x6 two steps, x1/x5 three.
BASELINE_VALUES = {
    "x1": 14.295,
    "x2": 16.1,
    "x3": 16.1,
    "x4": 18.0,
    "x5": 14.295,
    "x6": 16.1,
    "x7": 18.0,
    "x8": 18.0,
    "Goal1": 20.0,
    "Goal2": 20.0,
}

BASELINE_POLICY = {
    "x1": ("BuyA", "BuyB", "MBuyA"),
    "x2": ("MBuyB",),
    "x3": ("BuyB", "MBuyA", "MBuyB"),
    "x4": ("BuyA", "MBuyA"),
    "x5": ("BuyA", "MBuyA", "MBuyB"),
    "x6": ("BuyB",),
    "x7": ("BuyB", "MBuyB"),
    "x8": ("BuyA", "MBuyA"),
}


def tiny_mdp(reward_a=1.0):
    """Two states, one action, first state drains into the terminal second."""
    transition = np.zeros((2, 1, 2))
    transition[0, 0, 1] = 1.0
    transition[1, 0, 1] = 1.0
    reward = np.array([[reward_a], [0.0]])
    return FiniteMDP(
        transition=transition,
        reward=reward,
        discount=0.9,
        terminal=np.array([False, True]),
        terminal_values=np.array([0.0, 5.0]),
        state_labels=("s0", "s1"),
        action_labels=("go",),
    )


class TestValueIteration:
    def test_baseline_values(self, baseline_mdp, baseline_values):
        for label, expected in BASELINE_VALUES.items():
            got = baseline_values[baseline_mdp.state_index(label)]
            assert got == pytest.approx(expected, abs=1e-6)

    def test_fines_value_at_x2(self, fines_mdp, fines_values):
        # -1 + 0.95*(-1 + 0.95*(-1 + 0.95*18)) down the honest detour.
        assert fines_values[fines_mdp.state_index("x2")] == pytest.approx(
            12.58025, abs=1e-6
        )

    def test_near_zero_discount_is_myopic(self):
        mdp = build_mdp(Scenario(discount=1e-12))
        values = value_iteration(mdp)
        nonterm = ~mdp.terminal
        expected = mdp.reward[nonterm].max(axis=1)
        assert np.max(np.abs(values[nonterm] - expected)) <= 1e-9

    def test_requires_positive_epsilon(self, baseline_mdp):
        with pytest.raises(ValueError):
            value_iteration(baseline_mdp, epsilon=0.0)

    def test_rejects_non_stochastic_rows(self):
        mdp = tiny_mdp()
        broken = FiniteMDP(
            transition=mdp.transition * 0.5,
            reward=mdp.reward,
            discount=mdp.discount,
            terminal=mdp.terminal,
            terminal_values=mdp.terminal_values,
            state_labels=mdp.state_labels,
            action_labels=mdp.action_labels,
        )
        with pytest.raises(ModelValidationError):
            value_iteration(broken)

    def test_position_twins_share_values_exactly(self, baseline_mdp, baseline_values):
        v = {s: baseline_values[baseline_mdp.state_index(s)] for s in ("x1", "x2", "x4", "x5", "x6", "x8")}
        assert v["x1"] == v["x5"]
        assert v["x2"] == v["x6"]
        assert v["x4"] == v["x8"]

    def test_baseline_values_strictly_positive(self, baseline_mdp, baseline_values):
        assert np.all(baseline_values[~baseline_mdp.terminal] > 0)

    def test_sweep_residuals_contract(self, baseline_mdp):
        previous = np.where(baseline_mdp.terminal, baseline_mdp.terminal_values, 0.0)
        residuals = []
        for horizon in range(1, 30):
            current = finite_horizon_oracle(baseline_mdp, horizon)
            residuals.append(np.max(np.abs(current - previous)))
            previous = current
        assert all(
            later <= earlier + 1e-12
            for earlier, later in zip(residuals, residuals[1:])
        )


class TestQValues:
    def test_backup_at_x2_mbuyb(self, baseline_mdp, baseline_q):
        q = baseline_q[baseline_mdp.state_index("x2"), baseline_mdp.action_index("MBuyB")]
        assert q == pytest.approx(16.1, abs=1e-9)

    def test_exact_tie_at_x4(self, baseline_mdp, baseline_q):
        x4 = baseline_mdp.state_index("x4")
        honest = baseline_q[x4, baseline_mdp.action_index("BuyA")]
        manip = baseline_q[x4, baseline_mdp.action_index("MBuyA")]
        assert honest == pytest.approx(18.0, abs=1e-9)
        assert honest == manip

    def test_do_nothing_is_a_discounted_self_loop(self, baseline_mdp, baseline_values, baseline_q):
        dn = baseline_mdp.action_index("DoNothing")
        nonterm = ~baseline_mdp.terminal
        expected = baseline_mdp.discount * baseline_values[nonterm]
        assert np.max(np.abs(baseline_q[nonterm, dn] - expected)) <= 1e-9

    def test_fines_margin_at_x2(self, fines_mdp, fines_values):
        q = q_values(fines_mdp, fines_values)
        x2 = fines_mdp.state_index("x2")
        assert q[x2, fines_mdp.action_index("SellA")] == pytest.approx(12.58025, abs=1e-6)
        assert q[x2, fines_mdp.action_index("MBuyB")] == pytest.approx(12.57, abs=1e-6)

    def test_dimension_mismatch_rejected(self, baseline_mdp):
        with pytest.raises(ValueError):
            q_values(baseline_mdp, np.zeros(3))


class TestPolicyExtraction:
    def test_baseline_tie_sets(self, baseline_policy):
        assert baseline_policy == BASELINE_POLICY

    def test_fines_tie_sets_are_honest_singletons(self, fines_policy):
        assert fines_policy == {
            "x1": ("BuyB",),
            "x2": ("SellA",),
            "x3": ("BuyB",),
            "x4": ("BuyA",),
            "x5": ("BuyA",),
            "x6": ("BuyB",),
            "x7": ("BuyB",),
            "x8": ("BuyA",),
        }

    def test_no_self_loop_actions_in_baseline_ties(self, baseline_policy):
        # Positive values mean bouncing or idling is never optimal.
        for actions in baseline_policy.values():
            assert "DoNothing" not in actions

    def test_single_action_mdp(self):
        mdp = tiny_mdp()
        policy = extract_policy_set(mdp, q_values(mdp, value_iteration(mdp)))
        assert policy == {"s0": ("go",)}

    def test_negative_tolerance_rejected(self, baseline_mdp, baseline_q):
        with pytest.raises(ValueError):
            extract_policy_set(baseline_mdp, baseline_q, tie_tolerance=-1.0)

    def test_tolerance_separates_the_fines_margin(self, fines_mdp, fines_values):
        q = q_values(fines_mdp, fines_values)
        tight = extract_policy_set(fines_mdp, q, tie_tolerance=1e-6)
        assert tight["x2"] == ("SellA",)
        loose = extract_policy_set(fines_mdp, q, tie_tolerance=0.02)
        assert "MBuyB" in loose["x2"]


class TestGreedyTrajectory:
    def test_baseline_spoofer_reaches_goal_in_two_steps(
        self, baseline_mdp, baseline_policy
    ):
        t = greedy_trajectory(baseline_mdp, baseline_policy, "x2")
        assert t.actions == ("MBuyB", "MBuyB")
        assert t.steps == 2
        assert t.reached_terminal

    def test_fined_trader_takes_the_honest_detour(self, fines_mdp, fines_policy):
        t = greedy_trajectory(fines_mdp, fines_policy, "x2")
        assert t.actions == ("SellA", "BuyB", "BuyB", "BuyA")
        assert t.steps == 4
        assert t.states[-1] == "Goal1"

    def test_one_step_from_goal(self, baseline_mdp, baseline_policy):
        t = greedy_trajectory(baseline_mdp, baseline_policy, "x4")
        assert t.steps == 1

    def test_cycle_reported(self, baseline_mdp):
        stuck = {label: ("DoNothing",) for label in baseline_mdp.state_labels[:8]}
        t = greedy_trajectory(baseline_mdp, stuck, "x1")
        assert not t.reached_terminal
        assert t.cycle == ("x1", "x1")

    def test_terminal_start_rejected(self, baseline_mdp, baseline_policy):
        with pytest.raises(ValueError):
            greedy_trajectory(baseline_mdp, baseline_policy, "Goal1")

    def test_stochastic_dynamics_rejected(self):
        scenario = Scenario(toggle_probability=0.5)
        mdp = build_mdp(scenario)
        policy = extract_policy_set(mdp, q_values(mdp, value_iteration(mdp)))
        # x2's optimal actions are stochastic manipulative moves here.
        with pytest.raises(ValueError, match="stochastic"):
            greedy_trajectory(mdp, policy, "x2")


class TestFiniteHorizonOracle:
    def test_single_backup_from_the_goal(self, baseline_mdp):
        v1 = finite_horizon_oracle(baseline_mdp, 1)
        assert v1[baseline_mdp.state_index("x4")] == pytest.approx(18.0, abs=1e-9)

    def test_contraction_bound_at_horizon_30(self, baseline_mdp, baseline_values):
        v30 = finite_horizon_oracle(baseline_mdp, 30)
        assert np.max(np.abs(v30 - baseline_values)) <= 0.95**30 * 20 + 1e-9

    def test_agreement_at_horizon_200(self, baseline_mdp, baseline_values):
        v200 = finite_horizon_oracle(baseline_mdp, 200)
        assert np.max(np.abs(v200 - baseline_values)) <= 1e-3

    @pytest.mark.parametrize(
        "scenario",
        [
            Scenario(),
            Scenario().with_manipulation_cost(-4.53),
            Scenario(toggle_probability=0.5),
            Scenario(toggle_probability=0.1),
        ],
        ids=["baseline", "fines", "uncertain_50", "uncertain_10"],
    )
    def test_oracle_matches_fixed_point_on_every_preset(self, scenario):
        mdp = build_mdp(scenario)
        assert np.max(
            np.abs(finite_horizon_oracle(mdp, 400) - value_iteration(mdp))
        ) <= 1e-8

    def test_horizon_must_be_positive(self, baseline_mdp):
        with pytest.raises(ValueError):
            finite_horizon_oracle(baseline_mdp, 0)


class TestFineSuppression:
    def test_manipulative_states_shrink_monotonically(self):
        counts = []
        for cost in np.arange(1.0, 5.01, 0.1):
            scenario = Scenario().with_manipulation_cost(-float(cost))
            mdp = build_mdp(scenario)
            policy = extract_policy_set(mdp, q_values(mdp, value_iteration(mdp)))
            counts.append(
                sum(
                    any(a.startswith("M") for a in actions)
                    for actions in policy.values()
                )
            )
        assert counts[0] == 7
        assert all(b <= a for a, b in zip(counts, counts[1:]))
        assert counts[-1] == 0
