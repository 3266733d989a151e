"""Input-state-output port-Hamiltonian systems.

A system is the data ``(H, grad H, B(x), G(x))`` together with an optional
constant mass matrix ``M``; its dynamics are

    M x' = B(x) grad H(x) + G(x) u,      y = G(x)^T M^{-1} grad H(x).

``B`` may carry a symmetric negative semidefinite part ``S(x)`` (resistive
elements).  Declaring it through ``dissipation`` lets the energy ledger book
``grad H^T S grad H`` separately from the port supply ``y^T u``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from ._validation import check_matrix, check_vector
from .exceptions import ConfigurationError, ContractViolation

__all__ = [
    "PortHamiltonianSystem",
    "ControlLaw",
    "StepRecord",
    "Trajectory",
    "ValidationReport",
    "eval_vector_field",
    "eval_output",
    "energy_rate",
    "closed_loop_field",
    "validate_system",
    "check_damping_law",
]


@dataclass(frozen=True)
class PortHamiltonianSystem:
    """Port-Hamiltonian system ``M x' = B(x) grad H(x) + G(x) u``.

    Parameters
    ----------
    state_dim, port_dim : int
        Dimensions ``n`` and ``m``.  ``port_dim`` may be 0 for closed
        (fully interconnected) systems.
    hamiltonian : callable
        ``H(x) -> float``.
    gradient : callable
        ``grad H(x) -> (n,)``.  Must be exact; finite differences are only
        used by :func:`validate_system`.
    structure : callable
        ``B(x) -> (n, n)``.
    input_matrix : callable
        ``G(x) -> (n, m)``.
    mass_matrix : array_like, optional
        Constant symmetric positive definite left factor ``M``.
    dissipation : callable, optional
        Symmetric negative semidefinite part ``S(x)`` of ``B(x)``.
    avf_gradient : callable, optional
        Closed form of the averaged vector field discrete gradient,
        ``(x, xp) -> (n,)``.
    vectorized : bool
        Whether ``hamiltonian`` and ``gradient`` accept ``(k, n)`` batches.
    """

    state_dim: int
    port_dim: int
    hamiltonian: Callable
    gradient: Callable
    structure: Callable
    input_matrix: Callable
    mass_matrix: Optional[np.ndarray] = None
    dissipation: Optional[Callable] = None
    avf_gradient: Optional[Callable] = None
    name: str = "system"
    vectorized: bool = False
    _mass_factor: Optional[tuple] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.state_dim) < 1:
            raise ConfigurationError("state_dim must be a positive integer")
        if int(self.port_dim) < 0:
            raise ConfigurationError("port_dim must be non-negative")
        if self.mass_matrix is not None:
            m = check_matrix(self.mass_matrix, (self.state_dim, self.state_dim), "mass_matrix")
            if not np.allclose(m, m.T, rtol=1e-14, atol=0.0):
                raise ConfigurationError("mass_matrix must be symmetric")
            try:
                factor = scipy.linalg.cho_factor(m)
            except np.linalg.LinAlgError as exc:
                raise ConfigurationError("mass_matrix is not positive definite") from exc
            object.__setattr__(self, "mass_matrix", m)
            object.__setattr__(self, "_mass_factor", factor)

    @property
    def has_mass_matrix(self):
        return self.mass_matrix is not None

    def solve_mass(self, v):
        """Return ``M^{-1} v`` (``v`` unchanged when there is no mass matrix)."""
        if self._mass_factor is None:
            return v
        return scipy.linalg.cho_solve(self._mass_factor, v)

    def check_state(self, x, name="x"):
        return check_vector(x, self.state_dim, name)

    def check_input(self, u, name="u"):
        return check_vector(u, self.port_dim, name)

    def gradients(self, states):
        """Gradient at each row of ``states`` (uses the batch path when available)."""
        states = np.asarray(states, dtype=float)
        if self.vectorized:
            return np.asarray(self.gradient(states), dtype=float).reshape(states.shape)
        return np.array([self.gradient(s) for s in states], dtype=float).reshape(states.shape)

    def conservative_structure(self, x):
        """``J(x) = B(x) - S(x)``."""
        b = np.asarray(self.structure(x), dtype=float)
        if self.dissipation is None:
            return b
        return b - np.asarray(self.dissipation(x), dtype=float)


@dataclass(frozen=True)
class ControlLaw:
    """Feedback or open-loop input.

    Modes
    -----
    ``output-feedback``  ``u = -phi(y)``
    ``state-feedback``   ``u = k(e)`` where ``e`` is the effort vector, i.e.
                         ``grad H(x)`` in continuous time and the discrete
                         gradient inside a discrete step
    ``open-loop``        ``u = w(t)``
    ``zero``             ``u = 0``
    """

    mode: str
    func: Optional[Callable] = None

    MODES = ("output-feedback", "state-feedback", "open-loop", "zero")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise ConfigurationError(f"unknown control mode {self.mode!r}")
        if self.mode != "zero" and self.func is None:
            raise ConfigurationError(f"mode {self.mode!r} needs a function")

    @classmethod
    def damping(cls, phi):
        return cls("output-feedback", phi)

    @classmethod
    def state_feedback(cls, k):
        return cls("state-feedback", k)

    @classmethod
    def open_loop(cls, w):
        return cls("open-loop", w)

    @classmethod
    def zero(cls):
        return cls("zero")

    def __call__(self, y, effort=None, t=0.0):
        y = np.asarray(y, dtype=float)
        if self.mode == "zero":
            return np.zeros_like(y)
        if self.mode == "output-feedback":
            return -np.asarray(self.func(y), dtype=float).reshape(y.shape)
        if self.mode == "state-feedback":
            return np.asarray(self.func(effort), dtype=float).reshape(y.shape)
        return np.asarray(self.func(t), dtype=float).reshape(y.shape)


@dataclass(frozen=True)
class StepRecord:
    """One step ``t_{n-1} -> t_n`` of a discrete trajectory.

    ``state`` and ``energy`` refer to the end of the step.  The stage data
    are the intermediate outputs/inputs ``(y_j, u_j)`` with weights ``b_j``;
    ``supply`` is ``h sum_j b_j y_j^T u_j`` and ``dissipation`` is the matching
    quadrature of ``e_j^T M^{-1} S e_j`` for resistive systems.
    """

    index: int
    time: float
    state: np.ndarray
    energy: float
    stage_outputs: tuple = ()
    stage_inputs: tuple = ()
    stage_weights: tuple = ()
    supply: float = float("nan")
    dissipation: float = 0.0
    solver_iterations: int = 0

    def __post_init__(self):
        if len(self.stage_outputs) != len(self.stage_inputs):
            raise ContractViolation("stage outputs and inputs differ in length")
        if self.stage_weights:
            w = np.asarray(self.stage_weights, dtype=float)
            if len(w) != len(self.stage_outputs):
                raise ContractViolation("one weight per stage is required")
            if np.any(w <= 0.0) or abs(w.sum() - 1.0) > 1e-14:
                raise ContractViolation("stage weights must be positive and sum to 1")

    @property
    def has_stages(self):
        return len(self.stage_weights) > 0

    def mean_output(self):
        """Weighted stage average of the output (zeros when there are no stages)."""
        return _weighted(self.stage_outputs, self.stage_weights)

    def mean_input(self):
        return _weighted(self.stage_inputs, self.stage_weights)


def _weighted(values, weights):
    if not weights:
        return np.zeros(0)
    return np.einsum("j,j...->...", np.asarray(weights), np.asarray(values, dtype=float))


@dataclass(frozen=True)
class Trajectory:
    """Initial state plus the ordered step records of a fixed-step run."""

    initial_state: np.ndarray
    initial_energy: float
    records: tuple
    step_size: float
    method_name: str = ""
    initial_output: Optional[np.ndarray] = None
    initial_input: Optional[np.ndarray] = None

    def __post_init__(self):
        idx = [r.index for r in self.records]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractViolation("record indices must be strictly increasing")

    def __len__(self):
        return len(self.records)

    @property
    def times(self):
        return np.concatenate([[0.0], [r.time for r in self.records]])

    @property
    def states(self):
        return np.vstack([self.initial_state] + [r.state for r in self.records])

    @property
    def energies(self):
        return np.array([self.initial_energy] + [r.energy for r in self.records])

    @property
    def final_state(self):
        return self.records[-1].state if self.records else self.initial_state


def eval_vector_field(sys, x, u):
    """``M^{-1}(B(x) grad H(x) + G(x) u)``."""
    x = sys.check_state(x)
    u = sys.check_input(u)
    rhs = np.asarray(sys.structure(x), dtype=float) @ np.asarray(sys.gradient(x), dtype=float)
    if sys.port_dim:
        rhs = rhs + np.asarray(sys.input_matrix(x), dtype=float) @ u
    return sys.solve_mass(rhs)


def eval_output(sys, x):
    """Collocated output ``G(x)^T M^{-1} grad H(x)`` (``G^T grad H`` when ``M = I``)."""
    x = sys.check_state(x)
    if not sys.port_dim:
        return np.zeros(0)
    g = sys.solve_mass(np.asarray(sys.gradient(x), dtype=float))
    return np.asarray(sys.input_matrix(x), dtype=float).T @ g


def energy_rate(sys, x, u):
    """Supplied power ``y^T u``; equals ``dH/dt`` for a lossless system."""
    u = sys.check_input(u)
    return float(eval_output(sys, x) @ u)


def closed_loop_field(sys, law):
    """Return ``f(t, x)`` for the closed loop, in the argument order of ``scipy.integrate``."""

    def f(t, x):
        x = np.asarray(x, dtype=float)
        e = np.asarray(sys.gradient(x), dtype=float)
        rhs = np.asarray(sys.structure(x), dtype=float) @ e
        if sys.port_dim:
            gm = np.asarray(sys.input_matrix(x), dtype=float)
            y = gm.T @ sys.solve_mass(e)
            rhs = rhs + gm @ law(y, e, t)
        return sys.solve_mass(rhs)

    return f


@dataclass(frozen=True)
class ValidationReport:
    """Findings of :func:`validate_system`.

    ``skew_defect`` is ``max ||(B + B^T)/2||_F`` over the samples and
    ``conservative_skew_defect`` the same for ``J = B - S``.
    """

    skew_defect: float
    skew_defect_relative: float
    conservative_skew_defect: float
    gradient_mismatch: float
    mass_positive_definite: bool
    samples: int

    @property
    def structure_is_skew(self):
        return self.skew_defect_relative <= 1e-12

    @property
    def gradient_consistent(self):
        return self.gradient_mismatch <= 1e-6


def validate_system(sys, sample_states: Sequence, fd_step=1e-6):
    """Sample skew-symmetry, gradient consistency and mass-matrix definiteness."""
    states = [sys.check_state(s) for s in sample_states]
    if not states:
        raise ContractViolation("at least one sample state is required")
    skew = skew_rel = cons = grad_err = 0.0
    n = sys.state_dim
    for x in states:
        b = np.asarray(sys.structure(x), dtype=float)
        d = np.linalg.norm(0.5 * (b + b.T))
        skew = max(skew, d)
        skew_rel = max(skew_rel, d / max(np.linalg.norm(b), 1e-300))
        j = sys.conservative_structure(x)
        cons = max(cons, np.linalg.norm(0.5 * (j + j.T)))

        g = np.asarray(sys.gradient(x), dtype=float)
        fd = np.empty(n)
        for i in range(n):
            step = fd_step * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += step
            xm[i] -= step
            fd[i] = (sys.hamiltonian(xp) - sys.hamiltonian(xm)) / (2 * step)
        grad_err = max(grad_err, np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g)))

    return ValidationReport(
        skew_defect=float(skew),
        skew_defect_relative=float(skew_rel),
        conservative_skew_defect=float(cons),
        gradient_mismatch=float(grad_err),
        mass_positive_definite=sys.mass_matrix is None or sys._mass_factor is not None,
        samples=len(states),
    )


@dataclass(frozen=True)
class DampingCheck:
    phi_at_zero: float
    min_pairing: float
    samples: int

    @property
    def ok(self):
        return self.phi_at_zero == 0.0 and self.min_pairing > 0.0


def check_damping_law(law, port_dim, samples=200, seed=0, scale=10.0):
    """Randomized check of ``phi(0) = 0`` and ``y^T phi(y) > 0`` for a damping law."""
    if law.mode != "output-feedback":
        raise ConfigurationError("only output-feedback laws have a damping map")
    rng = np.random.default_rng(seed)
    zero = np.zeros(port_dim)
    phi0 = float(np.max(np.abs(-law(zero)))) if port_dim else 0.0
    ys = rng.normal(scale=scale, size=(samples, port_dim)) * 10.0 ** rng.uniform(-6, 0, (samples, 1))
    pairing = min(float(y @ -law(y)) for y in ys if np.any(y))
    return DampingCheck(phi_at_zero=phi0, min_pairing=pairing, samples=samples)
