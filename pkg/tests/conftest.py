import os

import numpy as np
import pytest

from uav_see import orchestrator, physics, scenario

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")

DESK = os.path.join(SCENARIO_DIR, "desk.json")
TABLE1 = os.path.join(SCENARIO_DIR, "table1.json")


@pytest.fixture(scope="session")
def desk_config():
    return scenario.load_scenario(DESK)


@pytest.fixture(scope="session")
def desk_layout(desk_config):
    return scenario.place_users(desk_config)


@pytest.fixture(scope="session")
def table1_config():
    return scenario.load_scenario(TABLE1)


@pytest.fixture(scope="session")
def desk_state(desk_config, desk_layout):
    plan, alloc = orchestrator.initialize_feasible(desk_config, desk_layout)
    return plan, alloc


# full scheme runs are expensive enough to share across test modules
@pytest.fixture(scope="session")
def seq_report(desk_config, desk_layout):
    return orchestrator.run_msee_seq(desk_config, desk_layout)


@pytest.fixture(scope="session")
def mi_report(desk_config, desk_layout):
    return orchestrator.run_msee_mi(desk_config, desk_layout)


@pytest.fixture(scope="session")
def ftrj_report(desk_config, desk_layout):
    return orchestrator.run_baseline(desk_config, desk_layout, "ftrj")


@pytest.fixture(scope="session")
def fpow_report(desk_config, desk_layout):
    return orchestrator.run_baseline(desk_config, desk_layout, "fpow")


@pytest.fixture(scope="session")
def masr_report(desk_config, desk_layout):
    return orchestrator.run_baseline(desk_config, desk_layout, "masr_seq")


@pytest.fixture(scope="session")
def initial_report(desk_config, desk_layout):
    return orchestrator.run_baseline(desk_config, desk_layout, "initial")


def stationary_plan(config, n=None):
    """All-slots-at-the-start-point plan (zero velocity), trivially feasible."""
    n = n or config.n_slots
    q = np.repeat(np.asarray(config.uav_start, dtype=float)[None, :], n + 1, axis=0)
    v = np.zeros((n, 2))
    return physics.FlightPlan(q=q, v=v, mu=physics.induced_slack(v, config.rotor))
