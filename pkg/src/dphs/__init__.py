"""Passivity-preserving integrators for port-Hamiltonian systems.

The package provides the system model (:mod:`dphs.system`), discrete
gradients (:mod:`dphs.disgrad`), one-step methods (:mod:`dphs.integrators`),
power-conserving interconnection (:mod:`dphs.interconnect`), the energy
ledger and related checks (:mod:`dphs.audit`), bundled experiments
(:mod:`dphs.experiments`) and the ``dphs-bench`` command line tool.
"""

from .audit import (
    BalanceLedger,
    ButcherTableau,
    build_ledger,
    estimate_order,
    lyapunov_decrease,
    reference_solution,
    rk_counterexample,
)
from .disgrad import DiscreteGradientScheme, avf_gradient, secant_gradient, verify_properties
from .exceptions import ConfigurationError, ContractViolation, ConvergenceError, StepFailure
from .experiments import Experiment, get_experiment
from .integrators import (
    CollocationTableau,
    SplittingSpec,
    integrate,
    integrate_splitting,
    make_stepper,
    step_avfphs,
    step_collocation,
    step_disgrad,
    step_reference,
    step_splitting,
)
from .interconnect import InterconnectedSystem, check_dirac, interconnect, step_interconnected_disgrad
from .solver import StepperConfig, solve_implicit
from .system import (
    ControlLaw,
    PortHamiltonianSystem,
    StepRecord,
    Trajectory,
    energy_rate,
    eval_output,
    eval_vector_field,
    validate_system,
)

__version__ = "0.1.0"

__all__ = [
    "BalanceLedger",
    "ButcherTableau",
    "CollocationTableau",
    "ConfigurationError",
    "ContractViolation",
    "ControlLaw",
    "ConvergenceError",
    "DiscreteGradientScheme",
    "Experiment",
    "InterconnectedSystem",
    "PortHamiltonianSystem",
    "SplittingSpec",
    "StepFailure",
    "StepRecord",
    "StepperConfig",
    "Trajectory",
    "avf_gradient",
    "build_ledger",
    "check_dirac",
    "energy_rate",
    "estimate_order",
    "eval_output",
    "eval_vector_field",
    "get_experiment",
    "integrate",
    "integrate_splitting",
    "interconnect",
    "lyapunov_decrease",
    "make_stepper",
    "reference_solution",
    "rk_counterexample",
    "secant_gradient",
    "solve_implicit",
    "step_avfphs",
    "step_collocation",
    "step_disgrad",
    "step_interconnected_disgrad",
    "step_reference",
    "step_splitting",
    "validate_system",
    "verify_properties",
]
