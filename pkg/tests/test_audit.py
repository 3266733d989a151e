import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dphs.audit import (
    ButcherTableau,
    build_ledger,
    darboux_system,
    estimate_order,
    lyapunov_decrease,
    reference_solution,
    rk_counterexample,
    step_runge_kutta,
)
from dphs.exceptions import ConfigurationError, ContractViolation, StepFailure
from dphs.experiments import get_experiment, harmonic_oscillator, pendulum, pendulum_law
from dphs.integrators import integrate, integrate_splitting, make_stepper
from dphs.solver import StepperConfig
from dphs.system import ControlLaw, Trajectory

CFG = StepperConfig(0.5)
ZERO = ControlLaw.zero()


def _run(name, method, steps, stages=2):
    e = get_experiment(name)
    return e, integrate(make_stepper(method, stages), e.system, e.law, e.x0, steps, CFG)


# -- ledger -------------------------------------------------------------------

def test_ledger_rows_align_with_records():
    _, traj = _run("pendulum", "avfphs", 30)
    led = build_ledger(traj)
    assert len(led) == len(traj.records) == 30
    np.testing.assert_array_equal(led.step, np.arange(1, 31))
    np.testing.assert_array_equal(led.H, traj.energies[1:])
    np.testing.assert_array_equal(led.dH, np.diff(traj.energies))
    np.testing.assert_array_equal(led.residual, led.dH - led.supply - led.dissipation)
    np.testing.assert_array_equal(led.a_ext_cumulative, -np.cumsum(led.supply))
    assert list(led.columns()) == ["step", "t", "H", "dH", "supply", "residual", "A_ext_cumulative", "dissipation"]


def test_ledger_without_input_has_zero_supply(pend):
    traj = integrate(make_stepper("avfphs"), pend, ZERO, [2.8, 1.4], 50, CFG)
    led = build_ledger(traj)
    assert np.all(led.supply == 0.0)
    assert np.max(np.abs(led.residual)) <= 1e-12 * (1 + abs(traj.initial_energy))


def test_rigid_body_external_work_closes_the_balance():
    e, traj = _run("rigid-body", "disgrad-secant", 120)
    s = build_ledger(traj).summary()
    assert s.closure_defect <= 1e-12 * abs(s.initial_energy)
    assert s.relative_closure == pytest.approx(s.closure_defect / abs(s.initial_energy))
    # the balance is non-trivial: energy changes by O(1) and is matched by A_ext
    assert abs(s.total_change) > 0.1


def test_microphone_dissipation_column():
    _, traj = _run("microphone", "avfphs", 50)
    led = build_ledger(traj)
    assert np.all(led.dissipation < 0.0)
    assert np.max(np.abs(led.residual)) <= 1e-12


def test_improved_euler_violates_balance():
    _, traj = _run("pendulum", "improved-euler", 200)
    assert np.max(np.abs(build_ledger(traj).residual)) >= 1e-4


def test_ledger_rejects_empty_trajectory(pend):
    traj = Trajectory(np.zeros(2), 0.0, (), 0.5)
    with pytest.raises(ContractViolation):
        build_ledger(traj)


def test_ledger_rejects_records_without_stage_data():
    e = get_experiment("rigid-body")
    sys, spec, z0 = e.splitting
    traj = integrate_splitting(spec, sys, z0, 5, 0.5)
    with pytest.raises(ContractViolation, match="stage data"):
        build_ledger(traj)


# -- Lyapunov decrease -----------------------------------------------------------

def test_damped_pendulum_decreases_energy():
    _, traj = _run("pendulum", "avfphs", 500)
    rep = lyapunov_decrease(traj)
    assert rep.ok and rep.steps == 500
    assert rep.max_increase <= 0.0


def test_undamped_energy_is_flat(pend):
    traj = integrate(make_stepper("avfphs"), pend, ZERO, [2.8, 1.4], 100, CFG)
    dH = np.diff(traj.energies)
    assert np.all(np.abs(dH) <= 1e-11)
    assert lyapunov_decrease(traj).ok


def test_improved_euler_increases_energy():
    _, traj = _run("pendulum", "improved-euler", 500)
    rep = lyapunov_decrease(traj)
    assert rep.violations > 0
    assert not rep.ok


def test_lyapunov_works_on_splitting_runs():
    e = get_experiment("rigid-body")
    sys, _, z0 = e.splitting
    from dphs.experiments import rigid_body_splitting

    traj = integrate_splitting(rigid_body_splitting(), sys, z0, 100, 0.5)
    assert lyapunov_decrease(traj, threshold=1e-12).ok


# -- order estimation -------------------------------------------------------------

H_LIST = (0.2, 0.1, 0.05, 0.025)


@pytest.fixture(scope="module")
def pendulum_reference():
    return reference_solution(pendulum(), pendulum_law(), [2.8, 1.4], [0.0, 4.0])[-1]


@pytest.mark.parametrize(
    "method, stages, expected, tol",
    [("avfphs", 1, 2.0, 0.2), ("collocation", 2, 4.0, 0.3), ("implicit-midpoint", 1, 2.0, 0.2)],
)
def test_order_slopes(method, stages, expected, tol, pendulum_reference):
    est = estimate_order(make_stepper(method, stages), pendulum(), pendulum_law(), [2.8, 1.4], 4.0, H_LIST,
                         reference=pendulum_reference, solver_tolerance=1e-14)
    assert est.slope == pytest.approx(expected, abs=tol)
    assert est.monotone


def test_improved_euler_is_second_order_on_short_interval():
    # IE needs a short horizon to be in its asymptotic range at these step sizes
    ref = reference_solution(pendulum(), pendulum_law(), [2.8, 1.4], [0.0, 0.4])[-1]
    est = estimate_order(make_stepper("improved-euler"), pendulum(), pendulum_law(), [2.8, 1.4], 0.4,
                         (0.1, 0.05, 0.025, 0.0125), reference=ref)
    assert est.slope == pytest.approx(2.0, abs=0.2)


def test_order_needs_three_step_sizes(pend):
    with pytest.raises(ConfigurationError):
        estimate_order(make_stepper("avfphs"), pend, ZERO, [1.0, 0.0], 1.0, (0.5, 0.25))


def test_order_needs_commensurate_final_time(pend):
    with pytest.raises(ConfigurationError):
        estimate_order(make_stepper("avfphs"), pend, ZERO, [1.0, 0.0], 1.0, (0.3, 0.2, 0.1), reference=np.zeros(2))


def test_order_aborts_with_partial_errors():
    e = get_experiment("rigid-body")
    with pytest.raises(StepFailure) as info:
        estimate_order(make_stepper("improved-euler"), e.system, e.law, e.x0, 10.0, (0.1, 0.05, 0.5, 0.025),
                       reference=np.zeros(7))
    hs, errs = info.value.partial_errors
    np.testing.assert_array_equal(hs, [0.1, 0.05])
    assert errs.shape == (2,)


# -- Runge-Kutta counterexample -----------------------------------------------------

def test_heun_exact_for_quadratic_potential():
    rep = rk_counterexample(lambda q: q ** 2, lambda q: 2 * q, 0.3, 1.0)
    assert rep.quadrature_defect == 0.0
    assert rep.balance_residual <= 1e-15


def test_heun_defect_for_quintic():
    # F(1) - F(0) = 1 against the trapezoid (0 + 5)/2 = 2.5
    rep = rk_counterexample(lambda q: q ** 5, lambda q: 5 * q ** 4, 0.0, 1.0)
    assert rep.method == "improved-euler"
    assert rep.quadrature_defect == 1.5
    assert rep.balance_residual == pytest.approx(1.5, abs=1e-14)


def test_avfphs_satisfies_balance_for_quintic():
    rep = rk_counterexample(lambda q: q ** 5, lambda q: 5 * q ** 4, 0.0, 1.0, method="avfphs")
    assert rep.quadrature_defect == 0.0
    assert rep.balance_residual <= 1e-12


@given(st.floats(-2, 2), st.floats(0.05, 1.0), st.floats(-1, 1))
def test_quadrature_defect_equals_balance_defect(q0, h, u_bar):
    rep = rk_counterexample(lambda q: q ** 5, lambda q: 5 * q ** 4, u_bar, h, q0=q0)
    assert rep.balance_residual == pytest.approx(rep.quadrature_defect, abs=1e-12 * (1 + abs(q0)) ** 5)


def test_implicit_midpoint_counterexample():
    rep = rk_counterexample(lambda q: q ** 5, lambda q: 5 * q ** 4, 0.0, 1.0, method=ButcherTableau.implicit_midpoint())
    # 1 - 5 * 0.5**4
    assert rep.quadrature_defect == pytest.approx(0.6875, abs=1e-15)
    assert rep.balance_residual == pytest.approx(0.6875, abs=1e-12)


def test_rk4_defect_needs_higher_degree():
    tab = ButcherTableau.rk4()
    exact = rk_counterexample(lambda q: q ** 4, lambda q: 4 * q ** 3, 0.0, 1.0, method=tab)
    assert exact.quadrature_defect <= 1e-15
    inexact = rk_counterexample(lambda q: q ** 5, lambda q: 5 * q ** 4, 0.0, 1.0, method=tab)
    # Simpson on 5 q^4 over [0, 1]: (0 + 4 * 5/16 + 5) / 6 = 25/24
    assert inexact.quadrature_defect == pytest.approx(1.0 / 24.0, abs=1e-15)


def test_unknown_counterexample_method():
    with pytest.raises(ConfigurationError):
        rk_counterexample(lambda q: q, lambda q: 1.0 + 0 * q, 0.0, 1.0, method="leapfrog")


def test_tableau_validation():
    with pytest.raises(ConfigurationError):
        ButcherTableau([[0.0, 0.0]], [0.5, 0.5])
    assert ButcherTableau.heun().explicit
    assert not ButcherTableau.implicit_midpoint().explicit
    np.testing.assert_array_equal(ButcherTableau.heun().c, [0.0, 1.0])


def test_runge_kutta_step_matches_builtin_reference(pend):
    x = np.array([2.8, 1.4])
    a, _ = step_runge_kutta(ButcherTableau.implicit_midpoint(), pend, pendulum_law(), x, StepperConfig(0.5, solver_tolerance=1e-15))
    from dphs.integrators import step_reference

    b, _ = step_reference("implicit-midpoint", pend, pendulum_law(), x, StepperConfig(0.5, solver_tolerance=1e-15))
    np.testing.assert_allclose(a, b, atol=1e-13)


def test_darboux_gradient():
    sys = darboux_system(lambda q: q ** 3, lambda q: 3 * q ** 2)
    np.testing.assert_allclose(sys.gradient(np.array([2.0, 5.0])), [-12.0, 1.0])
    assert sys.hamiltonian(np.array([2.0, 5.0])) == -3.0


# -- reference solution -------------------------------------------------------------

def test_reference_solution_on_oscillator():
    sys = harmonic_oscillator()
    t = np.linspace(0.0, 2 * np.pi, 5)
    ref = reference_solution(sys, ZERO, [1.0, 0.0], t)
    np.testing.assert_allclose(ref[:, 0], np.cos(t), atol=1e-10)
    np.testing.assert_allclose(ref[:, 1], -np.sin(t), atol=1e-10)


# -- stabilisation --------------------------------------------------------------------

@pytest.mark.slow
@pytest.mark.parametrize("method, stages", [("avfphs", 1), ("collocation", 2)])
def test_pendulum_stabilises(method, stages):
    # the closed loop decays roughly tenfold per 1000 steps near the origin,
    # so 1e-6 is reached after about 6600 steps
    _, traj = _run("pendulum", method, 7000, stages)
    x = traj.final_state
    assert np.linalg.norm(pendulum().gradient(x)) < 1e-6
    assert abs(x[1]) < 1e-6
