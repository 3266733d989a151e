"""Acceptance gate: one test per criterion, each at its stated tolerance and runtime budget.

Every test records a pass/fail line that is printed in the terminal summary.
"""

import time

import numpy as np
import pytest

from dphs.audit import build_ledger, estimate_order, lyapunov_decrease, reference_solution, rk_counterexample
from dphs.cli import rotation_count
from dphs.disgrad import DiscreteGradientScheme, verify_properties
from dphs.experiments import (
    get_experiment,
    harmonic_oscillator,
    pendulum,
    pendulum_law,
    random_linear_system,
    rigid_body_momentum,
    rigid_body_splitting,
)
from dphs.integrators import integrate, integrate_splitting, make_stepper, step_avfphs, step_reference
from dphs.interconnect import integrate_interconnected, interconnect
from dphs.solver import StepperConfig
from dphs.system import ControlLaw

from conftest import EXPERIMENT_NAMES, random_states, record_criterion

CFG = StepperConfig(0.5)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _finish(number, title, checks, budget, elapsed, detail):
    """Record and assert; ``checks`` maps a description to a bool."""
    checks = dict(checks)
    checks[f"runtime {elapsed:.2f}s < {budget}s"] = elapsed < budget
    failed = [k for k, ok in checks.items() if not ok]
    passed = not failed
    text = detail + (f" | failed: {'; '.join(failed)}" if failed else f" | {elapsed:.2f}s")
    record_criterion(number, title, passed, text)
    assert passed, text


def test_criterion_01_discrete_gradient_identities():
    worst = {}
    with Timer() as t:
        for name in EXPERIMENT_NAMES:
            sys = get_experiment(name).system
            xs = random_states(sys, 1000, seed=11, scale=1.5)
            xps = random_states(sys, 1000, seed=12, scale=1.5)
            pairs = list(zip(xs, xps))
            for label, scheme in (("secant", DiscreteGradientScheme.midpoint_secant()),
                                  ("avf-closed-form", DiscreteGradientScheme.avf_closed_form())):
                rep = verify_properties(scheme, sys, pairs)
                worst[f"{name}/{label}"] = max(rep.property1_scaled, rep.property2_scaled)
    top = max(worst.values())
    _finish(1, "discrete gradient identities", {f"max scaled residual {top:.1e} <= 1e-12": top <= 1e-12},
            1.0, t.elapsed, f"max scaled residual {top:.2e} over 3 systems x 2 schemes x 1000 pairs")


def test_criterion_02_discrete_energy_balance():
    worst = {}
    with Timer() as t:
        for name in EXPERIMENT_NAMES:
            e = get_experiment(name)
            for method, stages in (("avfphs", 1), ("collocation", 1), ("collocation", 2), ("collocation", 3)):
                traj = integrate(make_stepper(method, stages), e.system, e.law, e.x0, 500, CFG)
                worst[f"{name}/{method}-{stages}"] = float(np.max(np.abs(build_ledger(traj).residual)))
    top = max(worst.values())
    _finish(2, "discrete energy balance", {f"max residual {top:.1e} <= 1e-10": top <= 1e-10},
            10.0, t.elapsed, f"max |residual| {top:.2e} over 12 runs of 500 steps")


def test_criterion_03_rigid_body_closure():
    e = get_experiment("rigid-body")
    rel = {}
    with Timer() as t:
        for method in ("avfphs", "disgrad-secant"):
            traj = integrate(make_stepper(method), e.system, e.law, e.x0, 120, CFG)
            s = build_ledger(traj).summary()
            rel[method] = s.closure_defect / abs(s.initial_energy)
    top = max(rel.values())
    _finish(3, "rigid-body balance closure", {f"|dH_total + A_ext| / |H_0| = {top:.1e} <= 1e-12": top <= 1e-12},
            5.0, t.elapsed, ", ".join(f"{k} {v:.1e}" for k, v in rel.items()) + " (120 steps, relative to |H_0|)")


def test_criterion_04_pendulum_comparison():
    e = get_experiment("pendulum")
    steps = 200
    with Timer() as t:
        times = np.arange(steps + 1) * 0.5
        ref = reference_solution(e.system, e.law, e.x0, times)
        h_ref = e.system.hamiltonian(ref)
        err, rot = {}, {"oracle": rotation_count(ref[-1, 0])}
        for method in ("avfphs", "implicit-midpoint", "improved-euler"):
            traj = integrate(make_stepper(method), e.system, e.law, e.x0, steps, CFG)
            err[method] = float(np.max(np.abs(traj.energies - h_ref)))
            rot[method] = rotation_count(traj.final_state[0])
    checks = {
        "AVF-PHS rotation count equals oracle": rot["avfphs"] == rot["oracle"],
        "improved Euler rotation count differs": rot["improved-euler"] != rot["oracle"],
        "H error AVF-PHS < implicit midpoint": err["avfphs"] < err["implicit-midpoint"],
        "H error implicit midpoint < improved Euler": err["implicit-midpoint"] < err["improved-euler"],
    }
    detail = (f"rotations {rot}; max |H err| avfphs {err['avfphs']:.2e}, "
              f"midpoint {err['implicit-midpoint']:.2e}, IE {err['improved-euler']:.2e}")
    _finish(4, "pendulum qualitative reproduction", checks, 30.0, t.elapsed, detail)


def test_criterion_05_microphone_energy_error():
    e = get_experiment("microphone")
    steps = 200
    with Timer() as t:
        times = np.arange(steps + 1) * 0.5
        ref = reference_solution(e.system, e.law, e.x0, times)
        h_ref = e.system.hamiltonian(ref)
        errs = {}
        for method in ("avfphs", "improved-euler"):
            traj = integrate(make_stepper(method), e.system, e.law, e.x0, steps, CFG)
            errs[method] = np.abs(traj.energies - h_ref)
    late = times >= 5.0
    worse = times[late][errs["avfphs"][late] >= errs["improved-euler"][late]]
    checks = {f"AVF-PHS error below IE at all {late.sum()} sampled t >= 5": worse.size == 0}
    detail = (f"AVF-PHS not better at {worse.size}/{late.sum()} times"
              + (f" (first t={worse[0]:g})" if worse.size else "")
              + f"; max err avfphs {errs['avfphs'][late].max():.2e}, IE {errs['improved-euler'][late].max():.2e}")
    _finish(5, "microphone energy error", checks, 30.0, t.elapsed, detail)


def test_criterion_06_linear_midpoint_equivalence():
    sys = random_linear_system(6, 2, seed=7)
    law = ControlLaw.state_feedback(lambda e: -0.3 * np.ones((2, 6)) @ e)
    x = np.random.default_rng(7).normal(size=6)
    worst = 0.0
    with Timer() as t:
        for n in range(100):
            a, _ = step_avfphs(sys, law, x, CFG, t=n * 0.5)
            b, _ = step_reference("implicit-midpoint", sys, law, x, CFG, t=n * 0.5)
            worst = max(worst, float(np.max(np.abs(a - b))))
            x = a
    _finish(6, "linear system midpoint equivalence", {f"max step difference {worst:.1e} <= 1e-13": worst <= 1e-13},
            1.0, t.elapsed, f"max per-step difference {worst:.2e} over 100 steps")


def test_criterion_07_order_slopes():
    sys, law, x0 = pendulum(), pendulum_law(), [2.8, 1.4]
    hs = (0.2, 0.1, 0.05, 0.025)
    with Timer() as t:
        ref = reference_solution(sys, law, x0, [0.0, 4.0])[-1]
        avf = estimate_order(make_stepper("avfphs"), sys, law, x0, 4.0, hs, reference=ref, solver_tolerance=1e-14)
        col = estimate_order(make_stepper("collocation", 2), sys, law, x0, 4.0, hs, reference=ref,
                             solver_tolerance=1e-14)
    checks = {
        f"AVF-PHS slope {avf.slope:.3f} in 2.0 +- 0.2": abs(avf.slope - 2.0) <= 0.2,
        f"collocation s=2 slope {col.slope:.3f} in 4.0 +- 0.3": abs(col.slope - 4.0) <= 0.3,
    }
    _finish(7, "order", checks, 60.0, t.elapsed,
            f"AVF-PHS slope {avf.slope:.3f}, Gauss collocation s=2 slope {col.slope:.3f} (T=4)")


def test_criterion_08_runge_kutta_counterexample():
    with Timer() as t:
        ie = rk_counterexample(lambda q: q ** 5, lambda q: 5 * q ** 4, 0.0, 1.0)
        avf = rk_counterexample(lambda q: q ** 5, lambda q: 5 * q ** 4, 0.0, 1.0, method="avfphs")
    checks = {
        f"improved Euler defect {ie.quadrature_defect} == 1.5": ie.quadrature_defect == 1.5,
        f"AVF-PHS residual {avf.balance_residual:.1e} <= 1e-12": avf.balance_residual <= 1e-12,
    }
    _finish(8, "Runge-Kutta counterexample", checks, 1.0, t.elapsed,
            f"IE defect {ie.quadrature_defect:g} (balance {ie.balance_residual:.3g}), "
            f"AVF-PHS residual {avf.balance_residual:.1e}")


def test_criterion_09_interconnection():
    isys = interconnect(harmonic_oscillator(1.0), harmonic_oscillator(3.0))
    with Timer() as t:
        traj = integrate_interconnected(isys, None, np.array([1.0, 0.0, 0.0, 0.0]), 1000, CFG)
        drift = float(np.max(np.abs(traj.energies - traj.energies[0])))
        ha, hb = isys.component_energies(traj.states)
    var = float(min(np.ptp(ha), np.ptp(hb)))
    checks = {f"|dH_total| {drift:.1e} <= 1e-11": drift <= 1e-11, f"component variation {var:.2f} >= 1e-3": var >= 1e-3}
    _finish(9, "interconnection conservation", checks, 5.0, t.elapsed,
            f"max |H_total - H_0| {drift:.2e}, min component energy range {var:.3f}")


def test_criterion_10_splitting_passivity():
    e = get_experiment("rigid-body")
    _, _, z0 = e.splitting
    with Timer() as t:
        traj = integrate_splitting(rigid_body_splitting(), rigid_body_momentum(), z0, 1000, 0.5)
        rep = lyapunov_decrease(traj, threshold=1e-12)
    _finish(10, "splitting passivity", {f"{rep.violations} increases above 1e-12": rep.ok}, 10.0, t.elapsed,
            f"{rep.violations} violations over {rep.steps} steps, max dH {rep.max_increase:.1e}")


def test_criterion_11_stabilisation():
    e = get_experiment("pendulum")
    norms, momenta = {}, {}
    with Timer() as t:
        for method, stages in (("avfphs", 1), ("collocation", 2)):
            traj = integrate(make_stepper(method, stages), e.system, e.law, e.x0, 5000, CFG)
            x = traj.final_state
            norms[method] = float(np.linalg.norm(e.system.gradient(x)))
            momenta[method] = abs(float(x[1]))
    checks = {f"{m} |grad H| {v:.1e} < 1e-6": v < 1e-6 for m, v in norms.items()}
    checks.update({f"{m} |p| {v:.1e} < 1e-6": v < 1e-6 for m, v in momenta.items()})
    _finish(11, "stabilisation within 5000 steps", checks, 30.0, t.elapsed,
            ", ".join(f"{m} |grad H| {v:.2e}" for m, v in norms.items()))
