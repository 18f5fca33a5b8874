import numpy as np
import pytest

from pbql.env import EnvironmentSpec, drug_trial_env, validate_spec
from pbql.experiment import ExperimentConfig, generate

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def env():
    return drug_trial_env()


def unconfounded_spec(behavior_x1: float = 0.5) -> EnvironmentSpec:
    """Same interventional tables as the drug-trial env, but nothing depends on u."""
    b = [[1 - behavior_x1, behavior_x1]] * 2
    r = [[0.4375, 0.25], [0.625, 0.25]]
    T = [[[0.5, 0.5], [0.875, 0.125]], [[0.5, 0.5], [0.875, 0.125]]]
    return EnvironmentSpec(n_states=2, n_actions=2, n_confounders=2, p_u=[0.75, 0.25],
                           p_s_init=[0.5, 0.5], behavior_policy=[b, b], reward_table=[r, r],
                           transition_table=[T, T], horizon=500, discount=0.9)


@pytest.fixture(scope="session")
def unconfounded_env():
    return validate_spec(unconfounded_spec())


@pytest.fixture(scope="session")
def trial_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def trial_data(env, trial_config):
    """1000 episodes x 500 steps from the behavior policy, seed 0."""
    return generate(trial_config, env)


@pytest.fixture(scope="session")
def small_data(env):
    return generate(ExperimentConfig(episodes=40, horizon=100, seed=3, log_hidden=True), env)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
