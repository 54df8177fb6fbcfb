from __future__ import annotations

import pytest

from sliding_lockdown.controller import ControllerConfig
from sliding_lockdown.integrator import IntegratorConfig
from sliding_lockdown.models import ModelParams
from sliding_lockdown.scenarios import Scenario

NOMINAL_PARAMS = ModelParams(gamma=0.05, beta_freedom=0.065, beta_lockdown=0.01, epsilon=0.2)

# filled by test_acceptance, printed at the end of every session
ACCEPTANCE_LINES: dict[str, str] = {}


def nominal_scenario(lam: float = 0.2, phi: float = 1e-4, horizon: float = 400.0, stride: int = 10) -> Scenario:
    return Scenario("SEIR", NOMINAL_PARAMS, ControllerConfig(lam=lam, phi=phi, i_target=0.002),
                    IntegratorConfig(dt=0.01, horizon=horizon, record_stride=stride))


@pytest.fixture(scope="session")
def nominal_traj():
    return nominal_scenario().run()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: [int(p) if p.isdigit() else p for p in k.split(".")]):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
