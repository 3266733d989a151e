import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dphs.exceptions import ConfigurationError, ConvergenceError
from dphs.solver import StepperConfig, solve_implicit

COS_FIXED_POINT = 0.7390851332151606  # bisection to 200 halvings


@given(st.floats(-100, 100, allow_nan=False), st.floats(-100, 100, allow_nan=False))
def test_translation_solved_in_one_iteration(a, guess):
    sol = solve_implicit(lambda z: z - a, np.array([guess]), StepperConfig(0.1, refine=False))
    assert sol.iterations <= 1
    assert sol.x[0] == pytest.approx(a, abs=4 * np.finfo(float).eps * (1 + abs(guess)))
    # polishing removes the rounding of guess - (guess - a)
    polished = solve_implicit(lambda z: z - a, np.array([guess]), StepperConfig(0.1))
    assert polished.x[0] == a
    assert polished.iterations <= 2


def test_cosine_fixed_point():
    sol = solve_implicit(lambda z: z - np.cos(z), np.array([1.0]), StepperConfig(0.1))
    assert sol.x[0] == pytest.approx(COS_FIXED_POINT, abs=1e-12)
    assert sol.residual <= 1e-12


def test_newton_fallback_on_expanding_map():
    # z <- A z + b has spectral radius 1.5, so the plain iteration diverges
    A = np.array([[1.5, 0.2], [0.0, -1.2]])
    b = np.array([1.0, -2.0])
    exact = np.linalg.solve(np.eye(2) - A, b)
    sol = solve_implicit(lambda z: z - (A @ z + b), np.zeros(2), StepperConfig(0.1))
    assert sol.method == "newton"
    assert sol.iterations > 10
    np.testing.assert_allclose(sol.x, exact, atol=1e-12)


def test_newton_from_the_start():
    sol = solve_implicit(lambda z: z**3 - 8.0 + z, np.array([1.0]), StepperConfig(0.1, solver_kind="newton"))
    assert sol.method == "newton"
    assert sol.x[0] ** 3 + sol.x[0] == pytest.approx(8.0, abs=1e-11)


def test_failure_carries_best_iterate():
    with pytest.raises(ConvergenceError) as info:
        solve_implicit(lambda z: z - np.cos(z), np.array([1.0]), StepperConfig(0.1, max_iterations=3))
    err = info.value
    assert err.iterations == 3
    assert err.best is not None and np.isfinite(err.residual)
    assert abs(err.best[0] - COS_FIXED_POINT) < 0.1


def test_no_root_fails_cleanly():
    with pytest.raises(ConvergenceError):
        solve_implicit(lambda z: z**2 + 1.0, np.array([0.5]), StepperConfig(0.1, max_iterations=40))


@pytest.mark.parametrize("kw", [
    {"step_size": 0.0},
    {"step_size": -1.0},
    {"step_size": 0.1, "solver_tolerance": 0.0},
    {"step_size": 0.1, "max_iterations": 0},
    {"step_size": 0.1, "solver_kind": "broyden"},
])
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        StepperConfig(**kw)


def test_newton_phase_handles_infinite_slope():
    # a plain Newton step overshoots on cbrt (z_new - c = -2 (z - c)); the
    # trust region of the hybrid method keeps it in check
    sol = solve_implicit(lambda z: np.cbrt(z - 0.25), np.array([1.0]), StepperConfig(0.5))
    assert sol.method == "newton"
    assert sol.x[0] == 0.25
    assert sol.iterations <= 100


@pytest.mark.parametrize("budget", [20, 30, 40])
def test_newton_phase_stays_within_budget(budget):
    with pytest.raises(ConvergenceError) as info:
        solve_implicit(lambda z: np.cbrt(z - 0.25), np.array([1.0]), StepperConfig(0.5, max_iterations=budget))
    assert info.value.iterations <= budget
