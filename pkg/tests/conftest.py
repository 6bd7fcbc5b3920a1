import re

import pytest

from manipdp.grid import Scenario, build_mdp, build_pomdp
from manipdp.mdp import extract_policy_set, q_values, value_iteration
from manipdp.pomdp import alpha_value_iteration, policy_at_observation


@pytest.fixture(scope="session")
def baseline_scenario():
    return Scenario()


@pytest.fixture(scope="session")
def fines_scenario():
    return Scenario().with_manipulation_cost(-4.53)


@pytest.fixture(scope="session")
def baseline_mdp(baseline_scenario):
    return build_mdp(baseline_scenario)


@pytest.fixture(scope="session")
def baseline_values(baseline_mdp):
    return value_iteration(baseline_mdp)


@pytest.fixture(scope="session")
def baseline_q(baseline_mdp, baseline_values):
    return q_values(baseline_mdp, baseline_values)


@pytest.fixture(scope="session")
def baseline_policy(baseline_mdp, baseline_q):
    return extract_policy_set(baseline_mdp, baseline_q)


@pytest.fixture(scope="session")
def fines_mdp(fines_scenario):
    return build_mdp(fines_scenario)


@pytest.fixture(scope="session")
def fines_values(fines_mdp):
    return value_iteration(fines_mdp)


@pytest.fixture(scope="session")
def fines_policy(fines_mdp, fines_values):
    return extract_policy_set(fines_mdp, q_values(fines_mdp, fines_values))


@pytest.fixture(scope="session")
def baseline_pomdp(baseline_scenario):
    return build_pomdp(baseline_scenario)


@pytest.fixture(scope="session")
def baseline_alphas(baseline_pomdp):
    return alpha_value_iteration(baseline_pomdp)


@pytest.fixture(scope="session")
def baseline_obs_policy(baseline_pomdp, baseline_alphas):
    return policy_at_observation(baseline_pomdp, baseline_alphas)


# ---- acceptance summary: one pass/fail line per criterion -------------------

_CRITERION_RE = re.compile(r"test_criterion_(\d+)")
_ACCEPTANCE_RESULTS: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    match = _CRITERION_RE.search(report.nodeid)
    if match:
        _ACCEPTANCE_RESULTS.setdefault(int(match.group(1)), []).append(
            report.outcome == "passed"
        )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for number in sorted(_ACCEPTANCE_RESULTS):
        status = "PASS" if all(_ACCEPTANCE_RESULTS[number]) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}")
