"""One-step maps and the fixed-step driver.

Every stepper has the call signature ``stepper(sys, law, x, cfg, t=..., index=...)``
(after binding its method-specific arguments) and returns ``(x_next, StepRecord)``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from .disgrad import DiscreteGradientScheme, default_scheme, gauss_legendre
from .exceptions import ConfigurationError, ConvergenceError, StepFailure
from .solver import solve_implicit
from .system import StepRecord, Trajectory, closed_loop_field, eval_output

__all__ = [
    "CollocationTableau",
    "SplittingSpec",
    "Stepper",
    "step_disgrad",
    "step_avfphs",
    "step_collocation",
    "step_reference",
    "step_splitting",
    "integrate",
    "integrate_splitting",
    "make_stepper",
    "REFERENCE_METHODS",
    "METHODS",
]

REFERENCE_METHODS = ("implicit-midpoint", "plain-avf", "improved-euler")


def _port_terms(sys, law, X, e, t):
    """Return ``(M^{-1}(B(X) e + G(X) u), y, u)`` with ``y = G^T M^{-1} e``."""
    rhs = np.asarray(sys.structure(X), dtype=float) @ e
    if sys.port_dim:
        gm = np.asarray(sys.input_matrix(X), dtype=float)
        y = gm.T @ sys.solve_mass(e)
        u = law(y, e, t)
        rhs = rhs + gm @ u
    else:
        y = u = np.zeros(0)
    return sys.solve_mass(rhs), y, u


def _dissipation(sys, X, e):
    if sys.dissipation is None:
        return 0.0
    return float(sys.solve_mass(e) @ (np.asarray(sys.dissipation(X), dtype=float) @ e))


def _solve(residual, guess, cfg, index):
    try:
        return solve_implicit(residual, guess, cfg)
    except ConvergenceError as exc:
        raise StepFailure(
            f"step {index}: {exc}", index=index, best=exc.best,
            residual=exc.residual, iterations=exc.iterations,
        ) from exc


def _predictor(sys, law, x, h, t):
    return x + h * closed_loop_field(sys, law)(t, x)


def _record(sys, index, t, h, x_next, ys, us, weights, dissipation, iterations):
    weights = tuple(float(w) for w in weights)
    supply = h * sum(w * float(y @ u) for w, y, u in zip(weights, ys, us))
    return StepRecord(
        index=index,
        time=t + h,
        state=x_next,
        energy=float(sys.hamiltonian(x_next)),
        stage_outputs=tuple(np.asarray(y) for y in ys),
        stage_inputs=tuple(np.asarray(u) for u in us),
        stage_weights=weights,
        supply=supply,
        dissipation=h * dissipation,
        solver_iterations=iterations,
    )


def step_disgrad(sys, scheme, law, x, cfg, t=0.0, index=1):
    """Discrete gradient step with structure and port matrices at the midpoint.

    Solves ``(x' - x)/h = B(m) dg + G(m) u`` (left-multiplied by ``M^{-1}``)
    with ``dg = dg(x, x')``, ``m = (x + x')/2``, ``y = G(m)^T M^{-1} dg`` and
    ``u = u(y)``.  The record holds the single stage ``(y, u)`` with weight 1.
    """
    x = sys.check_state(x)
    scheme = scheme if scheme is not None else default_scheme(sys)
    h = cfg.step_size
    tm = t + 0.5 * h

    def residual(z):
        f, _, _ = _port_terms(sys, law, 0.5 * (x + z), scheme(sys, x, z), tm)
        return z - x - h * f

    sol = _solve(residual, _predictor(sys, law, x, h, t), cfg, index)
    z = sol.x
    mid = 0.5 * (x + z)
    dg = scheme(sys, x, z)
    _, y, u = _port_terms(sys, law, mid, dg, tm)
    return z, _record(sys, index, t, h, z, [y], [u], [1.0], _dissipation(sys, mid, dg), sol.iterations)


def step_avfphs(sys, law, x, cfg, t=0.0, index=1):
    """Second-order AVF discrete gradient step (closed-form AVF when the system has one)."""
    if sys.avf_gradient is not None:
        scheme = DiscreteGradientScheme.avf_closed_form()
    else:
        scheme = DiscreteGradientScheme.avf_quadrature()
    return step_disgrad(sys, scheme, law, x, cfg, t=t, index=index)


def _lagrange_basis(nodes):
    basis = []
    for j, cj in enumerate(nodes):
        others = np.delete(nodes, j)
        if others.size == 0:
            basis.append(Polynomial([1.0]))
        else:
            basis.append(Polynomial.fromroots(others) / np.prod(cj - others))
    return basis


@dataclass(frozen=True)
class CollocationTableau:
    """Collocation nodes, weights ``b_j = int_0^1 l_j`` and the quadrature for stage gradients.

    Stage gradients ``int_0^1 l_j(a)/b_j grad H(X_a) da`` are evaluated with a
    Gauss-Legendre rule of ``stages + extra_nodes`` points.
    """

    nodes: np.ndarray
    extra_nodes: int = 8
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.nodes, dtype=float).ravel()
        if c.size < 1:
            raise ConfigurationError("at least one collocation node is required")
        if np.any((c <= 0.0) | (c >= 1.0)):
            raise ConfigurationError("collocation nodes must lie in (0, 1)")
        if np.unique(c).size != c.size:
            raise ConfigurationError("collocation nodes must be distinct")
        b = np.array([p.integ()(1.0) for p in _lagrange_basis(c)])
        if np.any(b <= 0.0):
            raise ConfigurationError(f"collocation weights must be positive, got {b}")
        object.__setattr__(self, "nodes", c)
        object.__setattr__(self, "weights", b)

    @classmethod
    def gauss(cls, stages, extra_nodes=8):
        return cls(gauss_legendre(stages)[0].copy(), extra_nodes)

    @property
    def stages(self):
        return self.nodes.size

    @cached_property
    def _tables(self):
        basis = _lagrange_basis(self.nodes)
        prims = [p.integ() for p in basis]
        qn, qw = gauss_legendre(self.stages + self.extra_nodes)
        lag_q = np.array([p(qn) for p in basis])  # (s, K)
        avg = (lag_q * qw) / self.weights[:, None]  # rows: averaging weights of stage gradient j
        int_q = np.array([p(qn) for p in prims]).T  # (K, s)
        int_c = np.array([p(self.nodes) for p in prims]).T  # (s, s)
        return avg, int_q, int_c


def step_collocation(sys, tableau, law, x, cfg, t=0.0, index=1):
    """Collocation step with averaged stage gradients.

    The stage slopes ``K_j = sigma'(t + c_j h)`` solve
    ``K_j = M^{-1}(B(X_j) dg_j + G(X_j) u_j)`` where ``dg_j`` averages
    ``grad H`` along the collocation polynomial against ``l_j / b_j``,
    ``y_j = G(X_j)^T M^{-1} dg_j`` and ``u_j = u(y_j)``.
    """
    x = sys.check_state(x)
    if isinstance(tableau, int):
        tableau = CollocationTableau.gauss(tableau)
    h = cfg.step_size
    s, n = tableau.stages, sys.state_dim
    avg, int_q, int_c = tableau._tables
    times = t + tableau.nodes * h

    def stages(kflat):
        k = kflat.reshape(s, n)
        xq = x + h * (int_q @ k)
        xc = x + h * (int_c @ k)
        dg = avg @ sys.gradients(xq)
        out = [_port_terms(sys, law, xc[j], dg[j], times[j]) for j in range(s)]
        return out, xc, dg

    def residual(kflat):
        out, _, _ = stages(kflat)
        return kflat - np.concatenate([o[0] for o in out])

    k0 = np.tile(closed_loop_field(sys, law)(t, x), s)
    sol = _solve(residual, k0, cfg, index)
    out, xc, dg = stages(sol.x)
    k = sol.x.reshape(s, n)
    z = x + h * (tableau.weights @ k)
    diss = sum(b * _dissipation(sys, xc[j], dg[j]) for j, b in enumerate(tableau.weights))
    return z, _record(
        sys, index, t, h, z, [o[1] for o in out], [o[2] for o in out],
        tableau.weights, diss, sol.iterations,
    )


def _stage_ports(sys, law, X, t):
    e = np.asarray(sys.gradient(X), dtype=float)
    f, y, u = _port_terms(sys, law, X, e, t)
    return f, y, u, _dissipation(sys, X, e)


def step_reference(method, sys, law, x, cfg, t=0.0, index=1):
    """One step of a classical method applied to the closed-loop field.

    ``implicit-midpoint`` and ``plain-avf`` (AVF map of the whole closed-loop
    field, 8-point Gauss quadrature) are implicit; ``improved-euler`` is
    Heun's trapezoidal predictor-corrector.  Stage data are the outputs and
    inputs at the stage points so the energy ledger applies unchanged.
    """
    x = sys.check_state(x)
    h = cfg.step_size
    if method == "improved-euler":
        f1, y1, u1, d1 = _stage_ports(sys, law, x, t)
        x2 = x + h * f1
        f2, y2, u2, d2 = _stage_ports(sys, law, x2, t + h)
        z = x + 0.5 * h * (f1 + f2)
        return z, _record(sys, index, t, h, z, [y1, y2], [u1, u2], [0.5, 0.5], 0.5 * (d1 + d2), 0)

    if method == "implicit-midpoint":
        tm = t + 0.5 * h

        def residual(z):
            return z - x - h * _stage_ports(sys, law, 0.5 * (x + z), tm)[0]

        sol = _solve(residual, _predictor(sys, law, x, h, t), cfg, index)
        z = sol.x
        _, y, u, d = _stage_ports(sys, law, 0.5 * (x + z), tm)
        return z, _record(sys, index, t, h, z, [y], [u], [1.0], d, sol.iterations)

    if method == "plain-avf":
        qn, qw = gauss_legendre(8)

        def evaluate(z):
            return [_stage_ports(sys, law, (1 - a) * x + a * z, t + a * h) for a in qn]

        def residual(z):
            return z - x - h * sum(w * o[0] for w, o in zip(qw, evaluate(z)))

        sol = _solve(residual, _predictor(sys, law, x, h, t), cfg, index)
        z = sol.x
        out = evaluate(z)
        d = sum(w * o[3] for w, o in zip(qw, out))
        return z, _record(sys, index, t, h, z, [o[1] for o in out], [o[2] for o in out], qw, d, sol.iterations)

    raise ConfigurationError(f"unknown reference method {method!r}")


@dataclass(frozen=True)
class SplittingSpec:
    """Palindromic splitting with non-negative coefficients.

    ``flow1(x, tau)`` and ``flow2(x, tau)`` advance the subsystems
    ``x' = B_1 grad H`` and ``x' = B_2 grad H + G u(y)`` by ``tau``.  With
    ``a = (a_1..a_{m+1})`` and ``b = (b_1..b_m)`` one step applies

        S2(a_1 h) S1(b_1 h) ... S2(a_{m+1} h) ... S1(b_1 h) S2(a_1 h)

    and requires ``2 sum(a_1..a_m) + a_{m+1} = 2 sum(b) = 1``.
    """

    flow1: Callable
    flow2: Callable
    a: tuple
    b: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        b = tuple(float(v) for v in self.b)
        if len(a) != len(b) + 1 or not b:
            raise ConfigurationError("need m >= 1 coefficients b and m + 1 coefficients a")
        if min(a + b) < 0.0:
            raise ConfigurationError("splitting coefficients must be non-negative")
        if abs(2 * sum(a[:-1]) + a[-1] - 1.0) > 1e-14 or abs(2 * sum(b) - 1.0) > 1e-14:
            raise ConfigurationError("splitting coefficients are not consistent")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def strang(cls, flow1, flow2):
        """``S2(h/2) S1(h) S2(h/2)``."""
        return cls(flow1, flow2, (0.5, 0.0), (0.5,))

    def sequence(self):
        """``(which_flow, coefficient)`` in application order (right-most factor first)."""
        m = len(self.b)
        half = []
        for i in range(m):
            half += [(2, self.a[i]), (1, self.b[i])]
        return half + [(2, self.a[m])] + half[::-1]


def step_splitting(spec, x, h):
    """Advance ``x`` by one splitting step of length ``h``; zero-length flows are skipped."""
    x = np.asarray(x, dtype=float)
    for which, coef in spec.sequence():
        if coef > 0.0:
            x = (spec.flow1 if which == 1 else spec.flow2)(x, coef * h)
    return x


def _energy_record(sys, index, t, h, z):
    return StepRecord(index=index, time=t + h, state=z, energy=float(sys.hamiltonian(z)))


def integrate_splitting(spec, sys, x0, steps, h, method_name="splitting"):
    """Run ``steps`` splitting steps.  Records carry states and energies only."""
    x = sys.check_state(x0)
    records = []
    for n in range(int(steps)):
        x = step_splitting(spec, x, h)
        records.append(_energy_record(sys, n + 1, n * h, h, x))
    return Trajectory(sys.check_state(x0), float(sys.hamiltonian(x0)), tuple(records), h, method_name)


class Stepper:
    """A named stepper with its method-specific arguments bound."""

    def __init__(self, name, func, *args):
        self.name = name
        self._func = func
        self._args = args

    def __call__(self, sys, law, x, cfg, t=0.0, index=1):
        return self._func(*self._args, sys, law, x, cfg, t=t, index=index)

    def __repr__(self):
        return f"Stepper({self.name!r})"


def make_stepper(name, stages=2, scheme=None):
    """Look up a stepper by its CLI name.

    ``avfphs``, ``disgrad`` (with ``scheme``), ``disgrad-secant``,
    ``collocation`` (Gauss nodes, ``stages``), and the reference methods.
    """
    if name == "avfphs":
        return Stepper(name, step_avfphs)
    if name in ("disgrad", "disgrad-secant"):
        if name == "disgrad-secant":
            scheme = DiscreteGradientScheme.midpoint_secant()

        def fn(sys, law, x, cfg, t=0.0, index=1):
            return step_disgrad(sys, scheme, law, x, cfg, t=t, index=index)

        return Stepper(name, fn)
    if name in ("collocation", "collocation-s"):
        tableau = CollocationTableau.gauss(stages)

        def fn(sys, law, x, cfg, t=0.0, index=1):
            return step_collocation(sys, tableau, law, x, cfg, t=t, index=index)

        return Stepper(f"collocation-{stages}", fn)
    if name in REFERENCE_METHODS:
        return Stepper(name, step_reference, name)
    raise ConfigurationError(f"unknown method {name!r}")


METHODS = ("avfphs", "disgrad-secant", "collocation", "splitting") + REFERENCE_METHODS


def integrate(stepper, sys, law, x0, steps, cfg, method_name=None):
    """Take ``steps`` fixed steps from ``x0``.

    On a failed step the raised :class:`StepFailure` carries the step index
    and the partial trajectory in ``.trajectory``.
    """
    if int(steps) < 1:
        raise ConfigurationError("steps must be at least 1")
    x = sys.check_state(x0)
    h = cfg.step_size
    name = method_name or getattr(stepper, "name", getattr(stepper, "__name__", "stepper"))
    y0 = eval_output(sys, x)
    u0 = law(y0, np.asarray(sys.gradient(x), dtype=float), 0.0) if sys.port_dim else np.zeros(0)
    records = []

    def trajectory():
        return Trajectory(x, float(sys.hamiltonian(x)), tuple(records), h, name, y0, u0)

    xn = x
    for n in range(int(steps)):
        try:
            # overflow in a diverging explicit step is reported below as a StepFailure
            with np.errstate(over="ignore", invalid="ignore"):
                xn, rec = stepper(sys, law, xn, cfg, t=n * h, index=n + 1)
        except StepFailure as exc:
            exc.index = n + 1
            exc.trajectory = trajectory()
            raise
        if not np.all(np.isfinite(xn)):
            exc = StepFailure(f"step {n + 1}: state is no longer finite", index=n + 1)
            exc.trajectory = trajectory()
            raise exc
        records.append(rec)
    return trajectory()
