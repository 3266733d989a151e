"""Power-conserving interconnection of two port-Hamiltonian systems.

With ``u = -y_c`` and ``u_c = y`` the pair

    x'   = B(x) grad H(x)     + G(x) u,        y   = G(x)^T grad H(x)
    gam' = B_c(gam) grad H_c  + G_c(gam) u_c,  y_c = G_c^T grad H_c

becomes one closed system in ``(x, gam)`` with Hamiltonian ``H + H_c`` and
structure matrix

    C = [[B,         -G G_c^T],
         [G_c G^T,    B_c    ]],

which is skew whenever ``B`` and ``B_c`` are.
"""

from dataclasses import dataclass, replace

import numpy as np

from .disgrad import DiscreteGradientScheme, default_scheme
from .exceptions import ConfigurationError, ContractViolation
from .integrators import step_disgrad
from .system import ControlLaw, PortHamiltonianSystem, validate_system

__all__ = [
    "InterconnectedSystem",
    "BlockScheme",
    "DiracReport",
    "interconnect",
    "step_interconnected_disgrad",
    "integrate_interconnected",
    "check_dirac",
    "discrete_pairing_defects",
    "port_powers",
    "discrete_port_powers",
    "swap_permutation",
]


@dataclass(frozen=True)
class InterconnectedSystem:
    """Two systems coupled through their ports, plus the composed closed system."""

    sys_a: PortHamiltonianSystem
    sys_b: PortHamiltonianSystem
    composed: PortHamiltonianSystem

    @property
    def split_index(self):
        return self.sys_a.state_dim

    def split(self, state):
        state = np.asarray(state, dtype=float)
        k = self.split_index
        return state[..., :k], state[..., k:]

    def join(self, x, gamma):
        return np.concatenate([np.asarray(x, dtype=float), np.asarray(gamma, dtype=float)], axis=-1)

    def component_energies(self, states):
        """``(H(x_n), H_c(gam_n))`` for each row of ``states``."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        xs, gs = self.split(states)
        ha = np.array([self.sys_a.hamiltonian(x) for x in xs])
        hb = np.array([self.sys_b.hamiltonian(g) for g in gs])
        return ha, hb


def _coupling_structure(sys_a, sys_b):
    k = sys_a.state_dim

    def structure(z):
        x, g = z[:k], z[k:]
        ga = np.asarray(sys_a.input_matrix(x), dtype=float)
        gb = np.asarray(sys_b.input_matrix(g), dtype=float)
        top = np.hstack([np.asarray(sys_a.structure(x), dtype=float), -ga @ gb.T])
        bottom = np.hstack([gb @ ga.T, np.asarray(sys_b.structure(g), dtype=float)])
        return np.vstack([top, bottom])

    return structure


def _check_component(sys, label, samples):
    if sys.mass_matrix is not None:
        raise ConfigurationError(f"{label}: interconnection needs an identity mass matrix")
    if sys.dissipation is not None:
        raise ConfigurationError(f"{label}: structure matrix has a declared dissipative part")
    states = samples if samples is not None else [np.zeros(sys.state_dim)]
    report = validate_system(sys, states)
    if not report.structure_is_skew:
        raise ConfigurationError(
            f"{label}: structure matrix is not skew (relative defect {report.skew_defect_relative:.2e})"
        )


def interconnect(sys_a, sys_b, samples_a=None, samples_b=None):
    """Couple ``sys_a`` and ``sys_b`` by ``u_a = -y_b``, ``u_b = y_a``.

    Skewness of each component is checked at the given sample states (the
    origin by default).  The composed system has no external port.

    Raises
    ------
    ConfigurationError
        On unequal port dimensions, a non-skew or dissipative component, or a
        non-identity mass matrix.
    """
    if sys_a.port_dim != sys_b.port_dim:
        raise ConfigurationError(f"port dimensions differ: {sys_a.port_dim} vs {sys_b.port_dim}")
    _check_component(sys_a, sys_a.name, samples_a)
    _check_component(sys_b, sys_b.name, samples_b)
    k = sys_a.state_dim
    n = k + sys_b.state_dim
    vectorized = sys_a.vectorized and sys_b.vectorized

    def h(z):
        z = np.asarray(z, dtype=float)
        if z.ndim > 1 and not vectorized:
            return np.array([h(r) for r in z])
        return sys_a.hamiltonian(z[..., :k]) + sys_b.hamiltonian(z[..., k:])

    def grad(z):
        z = np.asarray(z, dtype=float)
        return np.concatenate(
            [np.asarray(sys_a.gradient(z[..., :k]), dtype=float),
             np.asarray(sys_b.gradient(z[..., k:]), dtype=float)], axis=-1,
        )

    avf = None
    if sys_a.avf_gradient is not None and sys_b.avf_gradient is not None:
        def avf(z, zp):
            return np.concatenate([
                np.asarray(sys_a.avf_gradient(z[:k], zp[:k]), dtype=float),
                np.asarray(sys_b.avf_gradient(z[k:], zp[k:]), dtype=float),
            ])

    composed = PortHamiltonianSystem(
        state_dim=n,
        port_dim=0,
        hamiltonian=h,
        gradient=grad,
        structure=_coupling_structure(sys_a, sys_b),
        input_matrix=lambda z: np.zeros((n, 0)),
        avf_gradient=avf,
        name=f"{sys_a.name}+{sys_b.name}",
        vectorized=vectorized,
    )
    return InterconnectedSystem(sys_a, sys_b, composed)


class BlockScheme:
    """Discrete gradient of ``H + H_c`` taken separately in ``x`` and ``gam``.

    Property 1 holds for the sum whenever it holds for each block.
    """

    def __init__(self, isys, scheme_a=None, scheme_b=None):
        self.isys = isys
        self.scheme_a = scheme_a if scheme_a is not None else default_scheme(isys.sys_a)
        self.scheme_b = scheme_b if scheme_b is not None else default_scheme(isys.sys_b)

    def __call__(self, sys, z, zp):
        x, g = self.isys.split(z)
        xp, gp = self.isys.split(zp)
        return np.concatenate([
            self.scheme_a(self.isys.sys_a, x, xp),
            self.scheme_b(self.isys.sys_b, g, gp),
        ])


def _as_block(isys, scheme):
    if scheme is None:
        return BlockScheme(isys)
    if isinstance(scheme, DiscreteGradientScheme):
        return BlockScheme(isys, scheme, scheme)
    return scheme


def step_interconnected_disgrad(isys, scheme, state, cfg, t=0.0, index=1):
    """One discrete gradient step of the coupled system.

    ``scheme`` is a :class:`BlockScheme`, a single
    :class:`DiscreteGradientScheme` used for both blocks, or ``None`` for the
    defaults.  Structure and port matrices are taken at the midpoint, so the
    coupling is ``u_{n+1/2} = -y_{c,n+1/2}``, ``u_{c,n+1/2} = y_{n+1/2}``.
    Returns ``(state_next, record)``.
    """
    return step_disgrad(isys.composed, _as_block(isys, scheme), ControlLaw.zero(), state, cfg, t=t, index=index)


def integrate_interconnected(isys, scheme, state0, steps, cfg):
    """Run ``steps`` coupled steps; returns a :class:`~dphs.system.Trajectory`."""
    from .integrators import Stepper, integrate

    block = _as_block(isys, scheme)
    stepper = Stepper("interconnected-disgrad", lambda sys, law, x, c, t=0.0, index=1:
                      step_disgrad(sys, block, law, x, c, t=t, index=index))
    return integrate(stepper, isys.composed, ControlLaw.zero(), state0, steps, cfg)


def port_powers(isys, state):
    """``(y^T u, y_c^T u_c)`` at ``state`` under ``u = -y_c``, ``u_c = y``; the two cancel."""
    x, g = isys.split(np.asarray(state, dtype=float))
    ga = np.asarray(isys.sys_a.input_matrix(x), dtype=float)
    gb = np.asarray(isys.sys_b.input_matrix(g), dtype=float)
    y = ga.T @ np.asarray(isys.sys_a.gradient(x), dtype=float)
    yc = gb.T @ np.asarray(isys.sys_b.gradient(g), dtype=float)
    return float(y @ -yc), float(yc @ y)


def discrete_port_powers(isys, scheme, state, state_next):
    """Port powers of one discrete step: outputs from the block discrete gradient at the midpoint."""
    z, zp = np.asarray(state, dtype=float), np.asarray(state_next, dtype=float)
    dg = _as_block(isys, scheme)(isys.composed, z, zp)
    x, g = isys.split(0.5 * (z + zp))
    ea, eb = isys.split(dg)
    y = np.asarray(isys.sys_a.input_matrix(x), dtype=float).T @ ea
    yc = np.asarray(isys.sys_b.input_matrix(g), dtype=float).T @ eb
    return float(y @ -yc), float(yc @ y)


@dataclass(frozen=True)
class DiracReport:
    """Findings of :func:`check_dirac`.

    ``pairing_defect`` is ``max |g^T C g|``; ``relative_pairing_defect`` divides
    each term by ``||g||^2 ||C||_2``.  ``graph_dimension`` is the smallest
    rank of the stacked flow/effort matrix ``[C; 1]`` seen.
    """

    pairing_defect: float
    relative_pairing_defect: float
    graph_dimension: int
    state_dim: int
    samples: int

    @property
    def graph_full(self):
        return self.graph_dimension == self.state_dim


def check_dirac(system, sample_states, n_pairs=8, seed=0):
    """Sampled check that ``(C g, g)`` pairs carry no power.

    ``system`` is an :class:`InterconnectedSystem` or any
    :class:`PortHamiltonianSystem`; its structure matrix plays the role of ``C``.
    """
    sys = system.composed if isinstance(system, InterconnectedSystem) else system
    states = [sys.check_state(s) for s in sample_states]
    if not states:
        raise ContractViolation("at least one sample state is required")
    rng = np.random.default_rng(seed)
    n = sys.state_dim
    raw = rel = 0.0
    rank = n
    for z in states:
        c = np.asarray(sys.structure(z), dtype=float)
        cnorm = max(np.linalg.norm(c, 2), np.finfo(float).tiny)
        gs = np.vstack([np.asarray(sys.gradient(z), dtype=float), rng.normal(size=(n_pairs, n))])
        for g in gs:
            gg = float(g @ g)
            if gg == 0.0:
                continue
            p = abs(float(g @ (c @ g)))
            raw = max(raw, p)
            rel = max(rel, p / (gg * cnorm))
        rank = min(rank, int(np.linalg.matrix_rank(np.vstack([c, np.eye(n)]))))
    return DiracReport(float(raw), float(rel), rank, n, len(states))


def discrete_pairing_defects(isys, traj, scheme=None):
    """``|e_n^T f_n|`` per step with ``f_n = (X_{n+1} - X_n)/h`` and ``e_n`` the block discrete gradient."""
    block = _as_block(isys, scheme)
    states = traj.states
    h = traj.step_size
    out = np.empty(len(states) - 1)
    for i in range(len(states) - 1):
        f = (states[i + 1] - states[i]) / h
        e = block(isys.composed, states[i], states[i + 1])
        out[i] = abs(float(e @ f))
    return out


def swap_permutation(na, nb):
    """Permutation ``P`` with ``P (x, gam) = (gam, x)`` for block sizes ``na`` and ``nb``."""
    n = na + nb
    perm = np.concatenate([np.arange(na, n), np.arange(na)])
    return np.eye(n)[perm]


def with_structure_perturbation(sys, perturbation):
    """Copy of ``sys`` with ``perturbation(x)`` added to its structure matrix (for defect studies)."""
    base = sys.structure
    return replace(sys, structure=lambda x: np.asarray(base(x), dtype=float) + np.asarray(perturbation(x)))
