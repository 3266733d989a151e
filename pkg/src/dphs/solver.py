"""Nonlinear solver for the implicit step equations."""

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from ._validation import check_positive, sup_norm
from .exceptions import ConfigurationError, ConvergenceError

__all__ = ["StepperConfig", "SolveResult", "solve_implicit"]

_STALL_LIMIT = 10
_STALL_RATIO = 0.5
_MAX_REFINE = 8
_POLISH_FLOOR = 1e3 * np.finfo(float).eps
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class StepperConfig:
    """Step size and controls of the implicit solver.

    Parameters
    ----------
    step_size : float
        Fixed step ``h``.
    solver_tolerance : float
        Stop when ``||r(z)||_inf <= tol * (1 + ||z||_inf)``.
    max_iterations : int
        Budget of residual evaluations per solve.
    solver_kind : {"fixed-point", "newton"}
        Fixed-point iteration ``z <- z - r(z)`` switches to Newton after ten
        stalled iterations (residual not at least halved); ``"newton"`` uses
        Newton from the start.  The Newton phase is Powell's hybrid method
        from MINPACK: a finite-difference Jacobian with Broyden updates inside
        a trust region.
    refine : bool
        Keep iterating after the tolerance is met (at most eight more
        iterations) while the residual still decreases, so converged steps
        sit at round-off.  When the plain iteration stops decreasing above
        ``1e3 eps``, Newton polishes the result.
    """

    step_size: float
    solver_tolerance: float = 1e-12
    max_iterations: int = 100
    solver_kind: str = "fixed-point"
    refine: bool = True

    def __post_init__(self):
        check_positive(self.step_size, "step_size")
        check_positive(self.solver_tolerance, "solver_tolerance")
        if int(self.max_iterations) < 1:
            raise ConfigurationError("max_iterations must be at least 1")
        if self.solver_kind not in ("fixed-point", "newton"):
            raise ConfigurationError(f"unknown solver kind {self.solver_kind!r}")

    @property
    def h(self):
        return self.step_size


@dataclass(frozen=True)
class SolveResult:
    x: np.ndarray
    iterations: int
    residual: float
    method: str


def _newton(residual, z, max_evals):
    """Powell's hybrid method from ``z``; returns ``(z, r, ||r||, evaluations)``."""
    sol = scipy.optimize.root(lambda v: np.asarray(residual(v), dtype=float), z, method="hybr",
                              options={"xtol": 4 * _EPS, "maxfev": max_evals})
    r = np.asarray(residual(sol.x), dtype=float)
    return sol.x, r, sup_norm(r), int(sol.nfev) + 1


def solve_implicit(residual, x_guess, cfg):
    """Find ``z`` with ``residual(z) = 0``.

    ``residual`` is expected in fixed-point form ``r(z) = z - g(z)``, so that
    the plain iteration is ``z <- g(z)``.  Every residual evaluation counts as
    one iteration, in both phases.

    The Newton phase copes with the infinite slope of laws such as
    ``u = -cbrt(y)`` near ``y = 0``, where an undamped Newton step overshoots.

    Raises
    ------
    ConvergenceError
        When the budget runs out before the tolerance is met; carries the
        best iterate and its residual.
    """
    tol = cfg.solver_tolerance
    budget = int(cfg.max_iterations)
    z = np.array(x_guess, dtype=float)
    r = np.asarray(residual(z), dtype=float)
    rn = sup_norm(r)
    best = (z, r, rn)
    converged = rn <= tol * (1.0 + sup_norm(z))
    use_newton = cfg.solver_kind == "newton" and not converged
    stalled = refined = iterations = 0

    while not use_newton and iterations < budget:
        if converged and (not cfg.refine or refined >= _MAX_REFINE or rn == 0.0):
            break
        zn = z - r
        rnew = np.asarray(residual(zn), dtype=float)
        rnn = sup_norm(rnew)
        iterations += 1

        if converged:
            if np.isfinite(rnn) and rnn < rn:
                z, r, rn = zn, rnew, rnn
                best = (z, r, rn)
                refined += 1
                continue
            if rn > _POLISH_FLOOR * (1.0 + sup_norm(z)):
                # the plain iteration can carry a weakly unstable mode that only
                # shows near the tolerance; polish with Newton instead
                use_newton = True
            break

        if not np.isfinite(rnn) or rnn >= _STALL_RATIO * rn:
            stalled += 1
        if np.isfinite(rnn):
            z, r, rn = zn, rnew, rnn
            if rn < best[2]:
                best = (z, r, rn)
        converged = rn <= tol * (1.0 + sup_norm(z))
        if not converged and stalled >= _STALL_LIMIT:
            use_newton = True

    method = "fixed-point"
    # MINPACK checks maxfev only between Jacobians, so keep one in reserve
    spare = budget - iterations - 2 * (z.size + 1)
    if use_newton and spare > 0:
        zn, rnew, rnn, evals = _newton(residual, best[0], spare)
        iterations += evals
        method = "newton"
        if np.isfinite(rnn) and rnn <= best[2]:
            z, r, rn = zn, rnew, rnn
            best = (z, r, rn)
            converged = rn <= tol * (1.0 + sup_norm(z))

    if not converged:
        zb, _, rb = best
        raise ConvergenceError(
            f"implicit solve did not converge in {iterations} iterations (residual {rb:.3e})",
            best=zb,
            residual=rb / (1.0 + sup_norm(zb)),
            iterations=iterations,
        )
    return SolveResult(z, iterations, rn / (1.0 + sup_norm(z)), method)
