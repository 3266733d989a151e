"""Energy-balance ledger, Lyapunov and order checks, and a Runge-Kutta counterexample.

The ledger books every step as

    H(x_{n+1}) - H(x_n) = supply_n + dissipation_n + residual_n

where ``supply_n = h sum_j b_j y_j^T u_j`` comes from the recorded stage data
and ``dissipation_n`` is the resistive term declared by the system (zero for
lossless structure matrices).  A method that satisfies the discrete energy
balance leaves ``residual_n`` at round-off.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.integrate

from ._validation import check_positive
from .exceptions import ConfigurationError, ContractViolation, StepFailure
from .integrators import _record, integrate, step_disgrad
from .disgrad import DiscreteGradientScheme
from .solver import StepperConfig, solve_implicit
from .system import ControlLaw, PortHamiltonianSystem, closed_loop_field, eval_output

__all__ = [
    "BalanceLedger",
    "LedgerSummary",
    "build_ledger",
    "LyapunovReport",
    "lyapunov_decrease",
    "OrderEstimate",
    "estimate_order",
    "reference_solution",
    "ButcherTableau",
    "step_runge_kutta",
    "CounterexampleReport",
    "rk_counterexample",
    "darboux_system",
]


@dataclass(frozen=True)
class LedgerSummary:
    max_abs_residual: float
    total_change: float
    external_work: float
    total_dissipation: float
    closure_defect: float
    initial_energy: float

    @property
    def relative_closure(self):
        """``closure_defect / |H_0|``."""
        return self.closure_defect / abs(self.initial_energy) if self.initial_energy else float("inf")


@dataclass(frozen=True)
class BalanceLedger:
    """Per-step energy accounting of a trajectory.

    Columns are 1-d arrays of equal length, one entry per step record.
    ``a_ext_cumulative`` is the running external work ``-sum supply``.
    """

    step: np.ndarray
    t: np.ndarray
    H: np.ndarray
    dH: np.ndarray
    supply: np.ndarray
    dissipation: np.ndarray
    residual: np.ndarray
    a_ext_cumulative: np.ndarray
    initial_energy: float

    COLUMNS = ("step", "t", "H", "dH", "supply", "residual", "A_ext_cumulative", "dissipation")

    def __len__(self):
        return self.step.size

    def columns(self):
        """Ledger columns in CSV order."""
        return {
            "step": self.step,
            "t": self.t,
            "H": self.H,
            "dH": self.dH,
            "supply": self.supply,
            "residual": self.residual,
            "A_ext_cumulative": self.a_ext_cumulative,
            "dissipation": self.dissipation,
        }

    def summary(self):
        """Maximum residual and the closure ``|H_N - H_0 + A_ext - D|``.

        ``D`` is the booked dissipation; for lossless systems the closure is
        ``|Delta H_total + A_ext|``.
        """
        total = float(self.H[-1] - self.initial_energy)
        a_ext = float(self.a_ext_cumulative[-1])
        diss = float(self.dissipation.sum())
        return LedgerSummary(
            max_abs_residual=float(np.max(np.abs(self.residual))),
            total_change=total,
            external_work=a_ext,
            total_dissipation=diss,
            closure_defect=abs(total + a_ext - diss),
            initial_energy=self.initial_energy,
        )


def build_ledger(traj):
    """Compute the balance ledger from the records of ``traj``.

    Raises
    ------
    ContractViolation
        When the trajectory is empty or a record carries no stage data
        (e.g. splitting runs, which only store states).
    """
    recs = traj.records
    if not recs:
        raise ContractViolation("trajectory has no steps")
    missing = [r.index for r in recs if not r.has_stages]
    if missing:
        raise ContractViolation(f"records {missing[:5]} carry no stage data; ledger needs stage outputs and inputs")
    H = np.array([r.energy for r in recs])
    prev = np.concatenate([[traj.initial_energy], H[:-1]])
    dH = H - prev
    supply = np.array([r.supply for r in recs])
    diss = np.array([r.dissipation for r in recs])
    return BalanceLedger(
        step=np.array([r.index for r in recs]),
        t=np.array([r.time for r in recs]),
        H=H,
        dH=dH,
        supply=supply,
        dissipation=diss,
        residual=dH - supply - diss,
        a_ext_cumulative=-np.cumsum(supply),
        initial_energy=float(traj.initial_energy),
    )


@dataclass(frozen=True)
class LyapunovReport:
    violations: int
    max_increase: float
    threshold: float
    steps: int

    @property
    def ok(self):
        return self.violations == 0


def lyapunov_decrease(traj, threshold=1e-11):
    """Count steps whose energy increases by more than ``threshold``.

    The default is ten times the default solver tolerance.  Works on any
    trajectory, including splitting runs without stage data.
    """
    dH = np.diff(traj.energies)
    if dH.size == 0:
        raise ContractViolation("trajectory has no steps")
    return LyapunovReport(
        violations=int(np.sum(dH > threshold)),
        max_increase=float(dH.max()),
        threshold=float(threshold),
        steps=int(dH.size),
    )


def reference_solution(sys, law, x0, times, rtol=1e-12, atol=1e-12, max_step=np.inf):
    """High-accuracy closed-loop states at ``times`` (DOP853).

    Returns an array of shape ``(len(times), n)``.
    """
    times = np.asarray(times, dtype=float)
    x0 = sys.check_state(x0)
    sol = scipy.integrate.solve_ivp(
        closed_loop_field(sys, law), (0.0, float(times[-1])), x0, method="DOP853",
        t_eval=times, rtol=rtol, atol=atol, max_step=max_step,
    )
    if not sol.success:
        raise StepFailure(f"reference solve failed: {sol.message}")
    return sol.y.T


@dataclass(frozen=True)
class OrderEstimate:
    slope: float
    intercept: float
    step_sizes: np.ndarray
    errors: np.ndarray

    @property
    def monotone(self):
        """Errors shrink whenever ``h`` shrinks."""
        order = np.argsort(self.step_sizes)[::-1]
        return bool(np.all(np.diff(self.errors[order]) < 0))


def estimate_order(stepper, sys, law, x0, final_time, step_sizes, reference=None, **cfg_kw):
    """Least-squares slope of ``log error`` against ``log h`` at ``final_time``.

    ``final_time / h`` must be an integer for every ``h``.  ``reference`` is
    the exact state at ``final_time``; by default it comes from
    :func:`reference_solution`.  Extra keyword arguments go to
    :class:`StepperConfig`.  A failed run re-raises its :class:`StepFailure`
    with the errors gathered so far in ``partial_errors``.
    """
    hs = np.asarray(step_sizes, dtype=float)
    if hs.size < 3:
        raise ConfigurationError("need at least three step sizes")
    check_positive(final_time, "final_time")
    if reference is None:
        reference = reference_solution(sys, law, x0, [0.0, final_time])[-1]
    errors = []
    for h in hs:
        steps = final_time / h
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigurationError(f"final time {final_time} is not a multiple of h={h}")
        try:
            traj = integrate(stepper, sys, law, x0, int(round(steps)), StepperConfig(h, **cfg_kw))
        except StepFailure as exc:
            exc.partial_errors = (hs[: len(errors)], np.array(errors))
            raise
        errors.append(float(np.max(np.abs(traj.final_state - reference))))
    errors = np.array(errors)
    slope, intercept = np.polyfit(np.log(hs), np.log(errors), 1)
    return OrderEstimate(float(slope), float(intercept), hs, errors)


@dataclass(frozen=True)
class ButcherTableau:
    """Runge-Kutta coefficients ``(A, b, c)``; ``c`` defaults to the row sums of ``A``."""

    A: np.ndarray
    b: np.ndarray
    c: Optional[np.ndarray] = None
    name: str = "runge-kutta"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape != (b.size, b.size):
            raise ConfigurationError("A must be s x s with s = len(b)")
        c = A.sum(axis=1) if self.c is None else np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def explicit(self):
        return bool(np.all(np.triu(self.A) == 0.0))

    @classmethod
    def heun(cls):
        """Improved Euler (explicit trapezoidal rule)."""
        return cls([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5], name="improved-euler")

    @classmethod
    def implicit_midpoint(cls):
        return cls([[0.5]], [1.0], name="implicit-midpoint")

    @classmethod
    def rk4(cls):
        A = np.zeros((4, 4))
        A[1, 0] = A[2, 1] = 0.5
        A[3, 2] = 1.0
        return cls(A, [1 / 6, 1 / 3, 1 / 3, 1 / 6], name="rk4")


def step_runge_kutta(tableau, sys, law, x, cfg, t=0.0, index=1):
    """One Runge-Kutta step of the closed-loop field, recording ``(y, u)`` at every stage."""
    x = sys.check_state(x)
    h = cfg.step_size
    s, n = tableau.b.size, sys.state_dim
    f = closed_loop_field(sys, law)
    times = t + tableau.c * h

    if tableau.explicit:
        k = np.zeros((s, n))
        for i in range(s):
            k[i] = f(times[i], x + h * tableau.A[i, :i] @ k[:i])
        iterations = 0
    else:
        def residual(kflat):
            kk = kflat.reshape(s, n)
            stages = x + h * tableau.A @ kk
            return kflat - np.concatenate([f(times[i], stages[i]) for i in range(s)])

        sol = solve_implicit(residual, np.tile(f(t, x), s), cfg)
        k, iterations = sol.x.reshape(s, n), sol.iterations

    stages = x + h * tableau.A @ k
    z = x + h * tableau.b @ k
    ys = [eval_output(sys, X) for X in stages]
    us = [law(y, np.asarray(sys.gradient(X), dtype=float), ti) for y, X, ti in zip(ys, stages, times)]
    return z, _record(sys, index, t, h, z, ys, us, tableau.b, 0.0, iterations)


def darboux_system(F, dF):
    """``H = p - F(q)`` with canonical ``J`` and ``G = 1_2``, so ``q' = 1`` and ``p' = F'(q) + u_2``."""
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    eye = np.eye(2)

    def h(x):
        x = np.asarray(x, dtype=float)
        return x[..., 1] - F(x[..., 0])

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.stack([-dF(x[..., 0]), np.ones_like(x[..., 1])], axis=-1)

    return PortHamiltonianSystem(
        state_dim=2, port_dim=2, hamiltonian=h, gradient=grad,
        structure=lambda x: J, input_matrix=lambda x: eye, name="darboux", vectorized=True,
    )


@dataclass(frozen=True)
class CounterexampleReport:
    """Outcome of :func:`rk_counterexample`.

    ``quadrature_defect`` is ``|F(q_0 + h) - F(q_0) - h sum_i b_i F'(q_0 + c_i h)|``
    (zero for the discrete gradient method, which has no tableau), and
    ``balance_residual`` is the one-step ledger residual of the actual step.
    """

    method: str
    quadrature_defect: float
    balance_residual: float
    energy_change: float
    supply: float


def rk_counterexample(F, dF, u_bar, h, method="improved-euler", q0=0.0, p0=0.0):
    """One step on the degenerate system ``H = p - F(q)`` with input ``u = (0, u_bar)``.

    Along the exact flow ``H' = u_bar``.  A Runge-Kutta method reproduces
    that balance only if its quadrature integrates ``F'`` exactly on
    ``[q_0, q_0 + h]``; the gap is reported in both forms.

    Parameters
    ----------
    method : str or ButcherTableau
        ``"improved-euler"``, ``"avfphs"`` or any Butcher tableau.
    """
    sys = darboux_system(F, dF)
    law = ControlLaw.open_loop(lambda t: np.array([0.0, u_bar]))
    cfg = StepperConfig(h)
    x0 = np.array([q0, p0], dtype=float)
    if isinstance(method, str) and method == "avfphs":
        # F' is polynomial in the cases of interest; 16-point Gauss is exact to degree 31
        scheme = DiscreteGradientScheme.avf_quadrature(16)
        _, rec = step_disgrad(sys, scheme, law, x0, cfg)
        name, quad = "avfphs", 0.0
    else:
        tab = ButcherTableau.heun() if method == "improved-euler" else method
        if not isinstance(tab, ButcherTableau):
            raise ConfigurationError(f"unknown method {method!r}")
        _, rec = step_runge_kutta(tab, sys, law, x0, cfg)
        name = tab.name
        quad = abs(F(q0 + h) - F(q0) - h * float(tab.b @ dF(q0 + tab.c * h)))
    dH = rec.energy - float(sys.hamiltonian(x0))
    return CounterexampleReport(name, float(quad), abs(dH - rec.supply), dH, rec.supply)
