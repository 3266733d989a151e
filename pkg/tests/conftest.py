import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dphs.experiments import (
    get_experiment,
    harmonic_oscillator,
    microphone,
    pendulum,
    rigid_body,
)
from dphs.solver import StepperConfig

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

EXPERIMENT_NAMES = ("pendulum", "microphone", "rigid-body")


@pytest.fixture
def pend():
    return pendulum()


@pytest.fixture
def mic():
    return microphone()


@pytest.fixture
def body():
    return rigid_body()


@pytest.fixture
def oscillator():
    return harmonic_oscillator()


@pytest.fixture(params=EXPERIMENT_NAMES)
def experiment(request):
    return get_experiment(request.param)


@pytest.fixture
def cfg():
    return StepperConfig(0.5)


def random_states(sys, count, seed=0, scale=2.0):
    rng = np.random.default_rng(seed)
    return scale * rng.normal(size=(count, sys.state_dim))


# -- acceptance summary -----------------------------------------------------------

ACCEPTANCE_RESULTS = {}


def record_criterion(number, title, passed, detail):
    ACCEPTANCE_RESULTS[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
