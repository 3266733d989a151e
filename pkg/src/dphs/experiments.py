"""Bundled systems and their experiment defaults.

Parameters follow the three reference experiments: a controlled rigid body,
a pendulum with a weak nonlinear damper and a capacitor microphone.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ConfigurationError
from .integrators import SplittingSpec
from .system import ControlLaw, PortHamiltonianSystem

__all__ = [
    "Experiment",
    "EXPERIMENTS",
    "get_experiment",
    "pendulum",
    "microphone",
    "rigid_body",
    "rigid_body_momentum",
    "rigid_body_splitting",
    "feedback_flow",
    "free_rigid_body_flow",
    "planar_flow",
    "pendulum_law",
    "microphone_law",
    "rigid_body_law",
    "harmonic_oscillator",
    "linear_system",
    "random_linear_system",
]

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def hat(w):
    """Cross-product matrix: ``hat(w) @ v == np.cross(w, v)``."""
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


# -- pendulum ---------------------------------------------------------------

def _pendulum_h(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * x[..., 1] ** 2 + 1.0 - np.cos(x[..., 0])


def _pendulum_grad(x):
    x = np.asarray(x, dtype=float)
    return np.stack([np.sin(x[..., 0]), x[..., 1]], axis=-1)


def _pendulum_avf(x, xp):
    # (cos q - cos q') / (q' - q) written without cancellation
    m = 0.5 * (x[0] + xp[0])
    d = xp[0] - x[0]
    return np.array([np.sin(m) * np.sinc(d / (2 * np.pi)), 0.5 * (x[1] + xp[1])])


def pendulum():
    """``H = p^2/2 + 1 - cos q``, ``B = J``, ``G = [0, 1]^T``."""
    g = np.array([[0.0], [1.0]])
    return PortHamiltonianSystem(
        state_dim=2,
        port_dim=1,
        hamiltonian=_pendulum_h,
        gradient=_pendulum_grad,
        structure=lambda x: J2,
        input_matrix=lambda x: g,
        avf_gradient=_pendulum_avf,
        name="pendulum",
        vectorized=True,
    )


def pendulum_law(gain=0.01):
    return ControlLaw.damping(lambda y: gain * np.arctan(y))


# -- capacitor microphone ----------------------------------------------------

def microphone(resistance=100.0, damping=0.1, mass=4.0, q_bar=3.0):
    """Capacitor microphone with state ``(q, p, Q)``.

    ``H = p^2/(2m) + (q - q_bar)^2/2 + q Q^2/2``.  The structure matrix has the
    resistive part ``S = diag(0, -c, -1/R)``.
    """
    R, c, m, qb = float(resistance), float(damping), float(mass), float(q_bar)
    b = np.array([[0.0, 1.0, 0.0], [-1.0, -c, 0.0], [0.0, 0.0, -1.0 / R]])
    s = np.diag([0.0, -c, -1.0 / R])
    g = np.array([[0.0], [1.0], [1.0 / R]])

    def h(x):
        x = np.asarray(x, dtype=float)
        q, p, Q = x[..., 0], x[..., 1], x[..., 2]
        return p**2 / (2 * m) + 0.5 * (q - qb) ** 2 + 0.5 * q * Q**2

    def grad(x):
        x = np.asarray(x, dtype=float)
        q, p, Q = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([(q - qb) + 0.5 * Q**2, p / m, q * Q], axis=-1)

    def avf(x, xp):
        q0, p0, Q0 = x
        q1, p1, Q1 = xp
        return np.array([
            0.5 * (q0 + q1) - qb + (Q0 * Q0 + Q0 * Q1 + Q1 * Q1) / 6.0,
            0.5 * (p0 + p1) / m,
            (2 * q0 * Q0 + q0 * Q1 + q1 * Q0 + 2 * q1 * Q1) / 6.0,
        ])

    return PortHamiltonianSystem(
        state_dim=3,
        port_dim=1,
        hamiltonian=h,
        gradient=grad,
        structure=lambda x: b,
        input_matrix=lambda x: g,
        dissipation=lambda x: s,
        avf_gradient=avf,
        name="microphone",
        vectorized=True,
    )


def microphone_law(gain=0.5):
    return ControlLaw.damping(lambda y: gain * np.cbrt(y))


# -- rigid body ----------------------------------------------------------------

def _set_hat(out, i, w):
    """Write ``hat(w)`` into the 3x3 block of ``out`` starting at ``(i, i)``."""
    a, b, c = w
    out[i, i + 1], out[i, i + 2] = -c, b
    out[i + 1, i], out[i + 1, i + 2] = c, -a
    out[i + 2, i], out[i + 2, i + 1] = -b, a


def rigid_body(inertia=(1.0, 2.0, 3.0), mass_form=False):
    """Rigid body with angular velocity ``w`` and attitude quaternion ``q`` (scalar first).

    ``H = w^T I w / 2 + q^T q / 2``.  With ``mass_form=True`` the model is
    ``I w' = -hat(w) grad_w H + u`` with mass matrix ``diag(I, 1_4)``.  The
    default writes the same vector field with ``M = 1`` and the skew block
    ``I^{-1} hat(I w) I^{-1}``, which keeps ``B`` skew at every state so that
    multi-stage collocation keeps the energy balance.  Both forms give the
    output ``y = w`` and identical discrete gradient steps.
    """
    inertia = np.asarray(inertia, dtype=float)
    inv = 1.0 / inertia

    def h(x):
        x = np.asarray(x, dtype=float)
        w, q = x[..., :3], x[..., 3:]
        return 0.5 * np.sum(inertia * w * w, axis=-1) + 0.5 * np.sum(q * q, axis=-1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([inertia * x[..., :3], x[..., 3:]], axis=-1)

    def avf(x, xp):
        return grad(0.5 * (np.asarray(x) + np.asarray(xp)))

    if mass_form:
        g = np.vstack([np.eye(3), np.zeros((4, 3))])

        def structure(x):
            out = np.zeros((7, 7))
            _set_hat(out, 0, -x[:3])
            _set_hat(out, 4, x[:3])
            return out

        mass = np.diag(np.concatenate([inertia, np.ones(4)]))
    else:
        g = np.vstack([np.diag(inv), np.zeros((4, 3))])

        scale = np.outer(inv, inv)

        def structure(x):
            out = np.zeros((7, 7))
            _set_hat(out, 0, inertia * x[:3])
            out[:3, :3] *= scale
            _set_hat(out, 4, x[:3])
            return out

        mass = None

    return PortHamiltonianSystem(
        state_dim=7,
        port_dim=3,
        hamiltonian=h,
        gradient=grad,
        structure=structure,
        input_matrix=lambda x: g,
        mass_matrix=mass,
        avf_gradient=avf,
        name="rigid-body-mass" if mass_form else "rigid-body",
        vectorized=True,
    )


RIGID_KD = np.diag([3.0, 4.0, 5.0])
RIGID_KP = np.hstack([np.diag([3.0, 5.0, 6.0]), np.ones((3, 1))])


def rigid_body_law(kd=RIGID_KD, kp=RIGID_KP):
    """``u = -K_d e_w - K_p e_q`` on the effort vector ``e = (e_w, e_q)``."""
    kd, kp = np.asarray(kd, dtype=float), np.asarray(kp, dtype=float)
    return ControlLaw.state_feedback(lambda e: -kd @ e[:3] - kp @ e[3:])


def rigid_body_momentum(inertia=(1.0, 2.0, 3.0)):
    """Rigid body in body momentum ``pi = I w`` and quaternion ``q``; ``M = 1`` and ``G = [1_3; 0]``."""
    inertia = np.asarray(inertia, dtype=float)
    g = np.vstack([np.eye(3), np.zeros((4, 3))])

    def h(x):
        x = np.asarray(x, dtype=float)
        pi, q = x[..., :3], x[..., 3:]
        return 0.5 * np.sum(pi * pi / inertia, axis=-1) + 0.5 * np.sum(q * q, axis=-1)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return np.concatenate([x[..., :3] / inertia, x[..., 3:]], axis=-1)

    def structure(x):
        out = np.zeros((7, 7))
        _set_hat(out, 0, x[:3])
        _set_hat(out, 4, x[:3] / inertia)
        return out

    return PortHamiltonianSystem(
        state_dim=7,
        port_dim=3,
        hamiltonian=h,
        gradient=grad,
        structure=structure,
        input_matrix=lambda x: g,
        avf_gradient=lambda x, xp: grad(0.5 * (np.asarray(x) + np.asarray(xp))),
        name="rigid-body-momentum",
        vectorized=True,
    )


_CYCLIC = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def planar_flow(inertia, axis):
    """Exact flow of the rigid body restricted to the rotation generated by one body axis.

    The momentum component ``pi_k`` is constant; ``(pi_i, pi_j)`` turn on the
    ellipse ``pi_i^2/I_i + pi_j^2/I_j = const`` and the quaternion vector part
    rotates about ``e_k`` at rate ``pi_k / I_k``.  Energy is conserved exactly.
    """
    inertia = np.asarray(inertia, dtype=float)
    k, i, j = _CYCLIC[axis]
    ri = np.sqrt(inertia[i] / inertia[j])

    def flow(x, tau):
        x = np.array(x, dtype=float)
        pk = x[k]
        om = pk / np.sqrt(inertia[i] * inertia[j]) * tau
        c, s = np.cos(om), np.sin(om)
        pi_i, pi_j = x[i], x[j]
        x[i] = pi_i * c - ri * pi_j * s
        x[j] = pi_j * c + pi_i * s / ri
        th = pk / inertia[k] * tau
        c, s = np.cos(th), np.sin(th)
        vi, vj = x[4 + i], x[4 + j]
        x[4 + i] = vi * c - vj * s
        x[4 + j] = vj * c + vi * s
        return x

    return flow


def free_rigid_body_flow(inertia=(1.0, 2.0, 3.0)):
    """Symmetric composition of the three planar flows; conserves ``H`` exactly, second order."""
    f1, f2, f3 = (planar_flow(inertia, a) for a in range(3))

    def flow(x, tau):
        x = f1(x, 0.5 * tau)
        x = f2(x, 0.5 * tau)
        x = f3(x, tau)
        x = f2(x, 0.5 * tau)
        return f1(x, 0.5 * tau)

    return flow


def linear_damping_flow(inertia=(1.0, 2.0, 3.0), kd=(3.0, 4.0, 5.0)):
    """Exact flow of the damping part ``pi' = -K_d pi`` (see :func:`feedback_flow`)."""
    return feedback_flow(inertia, kd, None)


def feedback_flow(inertia=(1.0, 2.0, 3.0), kd=(3.0, 4.0, 5.0), kp=None):
    """Exact flow of the port part ``pi' = u``, ``q' = 0`` of the momentum form.

    The control acts on the effort vector, ``u = -K_d grad_w H - K_p q`` with
    ``grad_w H = I w = pi``.  In terms of the output ``y = w`` the damping
    term is ``-K_d I y``, a positive definite diagonal damping.  With ``q``
    frozen the solution is
    ``pi(t) = e^{-K_d t} pi_0 - (1 - e^{-K_d t}) / K_d * (K_p q)``.
    ``inertia`` is accepted for a uniform signature; the flow does not need it.
    """
    rate = np.asarray(kd, dtype=float).reshape(3)
    kp = None if kp is None else np.asarray(kp, dtype=float)

    def flow(x, tau):
        x = np.array(x, dtype=float)
        x[:3] *= np.exp(-rate * tau)
        if kp is not None:
            x[:3] -= (-np.expm1(-rate * tau) / rate) * (kp @ x[3:])
        return x

    return flow


def rigid_body_splitting(inertia=(1.0, 2.0, 3.0), kd=(3.0, 4.0, 5.0), a=(0.5, 0.0), b=(0.5,), damping=True,
                         kp=None):
    """Splitting of the controlled rigid body (momentum form).

    ``S1`` carries the whole conservative structure and is advanced by
    :func:`free_rigid_body_flow`; ``S2`` carries only the port, with
    ``u = -K_d grad_w H`` (pure damping) or ``u = -K_d grad_w H - K_p q`` when ``kp`` is
    given (see :func:`feedback_flow`).  With ``damping=False`` the second
    flow is the identity.
    """
    if damping:
        s2 = feedback_flow(inertia, kd, kp)
    else:
        def s2(x, tau):
            return np.array(x, dtype=float)
    return SplittingSpec(free_rigid_body_flow(inertia), s2, a, b)


# -- small test systems ----------------------------------------------------------

def harmonic_oscillator(stiffness=1.0, mass=1.0, input_matrix=(0.0, 1.0)):
    """``H = k q^2/2 + p^2/(2 m)`` with canonical structure."""
    return linear_system(J2, np.diag([stiffness, 1.0 / mass]), np.asarray(input_matrix).reshape(2, -1),
                         name="harmonic-oscillator")


def linear_system(structure, hessian, input_matrix, name="linear"):
    """Linear system with constant ``B``, quadratic ``H = x^T Q x / 2`` and constant ``G``."""
    b = np.asarray(structure, dtype=float)
    q = np.asarray(hessian, dtype=float)
    g = np.asarray(input_matrix, dtype=float)
    n = b.shape[0]
    if g.ndim == 1:
        g = g.reshape(n, -1)

    def h(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", x, q, x)

    def grad(x):
        return np.asarray(x, dtype=float) @ q.T

    return PortHamiltonianSystem(
        state_dim=n,
        port_dim=g.shape[1],
        hamiltonian=h,
        gradient=grad,
        structure=lambda x: b,
        input_matrix=lambda x: g,
        avf_gradient=lambda x, xp: q @ (0.5 * (np.asarray(x) + np.asarray(xp))),
        name=name,
        vectorized=True,
    )


def random_linear_system(n=4, m=2, seed=0):
    """Random skew ``B``, SPD Hessian and input matrix."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    r = rng.normal(size=(n, n))
    return linear_system(r - r.T, a.T @ a / n + np.eye(n), rng.normal(size=(n, m)), name=f"random-linear-{n}")


# -- experiment registry -----------------------------------------------------------

@dataclass(frozen=True)
class Experiment:
    """A system, its control law and the default run settings."""

    name: str
    system: PortHamiltonianSystem
    law: ControlLaw
    x0: np.ndarray
    h: float = 0.5
    steps: int = 200
    parameters: dict = field(default_factory=dict)
    splitting: object = None

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


PENDULUM_X0 = (2.8, 1.4)
MICROPHONE_X0 = (2.0, 0.0, 1.0)
RIGID_BODY_X0 = (1.0, -0.5, 0.25, 0.5, 0.5, 0.5, 0.5)


def _pendulum_experiment():
    return Experiment(
        "pendulum", pendulum(), pendulum_law(), np.array(PENDULUM_X0), 0.5, 200,
        {"gain": 0.01},
    )


def _microphone_experiment():
    return Experiment(
        "microphone", microphone(), microphone_law(), np.array(MICROPHONE_X0), 0.5, 200,
        {"R": 100.0, "c": 0.1, "m": 4.0, "q_bar": 3.0, "gain": 0.5},
    )


def _rigid_body_experiment():
    x0 = np.array(RIGID_BODY_X0)
    inertia = (1.0, 2.0, 3.0)
    return Experiment(
        "rigid-body", rigid_body(inertia), rigid_body_law(), x0, 0.5, 120,
        {"inertia": inertia, "K_d": RIGID_KD, "K_p": RIGID_KP},
        splitting=(rigid_body_momentum(inertia),
                   rigid_body_splitting(inertia, np.diag(RIGID_KD), kp=RIGID_KP),
                   np.concatenate([np.asarray(inertia) * x0[:3], x0[3:]])),
    )


EXPERIMENTS = {
    "pendulum": _pendulum_experiment,
    "microphone": _microphone_experiment,
    "rigid-body": _rigid_body_experiment,
}


def get_experiment(name):
    try:
        return EXPERIMENTS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}") from None
