"""Continuous-time deputy models and the fixed-step integrator.

Covers relative translation (Clohessy-Wiltshire about a circular chief
orbit), quaternion attitude with Euler's rigid-body equations, a single
thermal node, solar-panel energy, and the apparent sun rotation.  The
quaternion is scalar-last and maps body-frame vectors into Hill's frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .errors import IntegrationFaultError, InvalidQuaternionError

TWO_PI = 2.0 * np.pi


@dataclass
class TranslationalState:
    """Position and velocity in Hill's frame."""

    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)


@dataclass
class AttitudeState:
    """Scalar-last unit quaternion (body -> Hill) and body angular rate."""

    q: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)


@dataclass
class ResourceState:
    """Battery energy [J] and node temperature [degC]."""

    energy: float
    temperature: float


@dataclass
class DeputyState:
    trans: TranslationalState
    att: AttitudeState
    res: ResourceState

    def to_array(self) -> np.ndarray:
        """15-element state: p, v, q, omega, E, T."""
        out = np.empty(15)
        out[0:3] = self.trans.p
        out[3:6] = self.trans.v
        out[6:10] = self.att.q
        out[10:13] = self.att.omega
        out[13] = self.res.energy
        out[14] = self.res.temperature
        return out

    @classmethod
    def from_array(cls, arr) -> "DeputyState":
        arr = np.asarray(arr, dtype=float)
        return cls(
            trans=TranslationalState(p=arr[0:3].copy(), v=arr[3:6].copy()),
            att=AttitudeState(q=arr[6:10].copy(), omega=arr[10:13].copy()),
            res=ResourceState(energy=float(arr[13]), temperature=float(arr[14])),
        )


@dataclass
class ControlInput:
    """Body-frame thrust [N] and body-axis torque [N m]."""

    force_body: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.force_body = np.asarray(self.force_body, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.force_body, self.torque])

    @classmethod
    def from_array(cls, arr) -> "ControlInput":
        arr = np.asarray(arr, dtype=float)
        return cls(force_body=arr[0:3].copy(), torque=arr[3:6].copy())

    def clipped(self, c: PhysicalConstants = DEFAULT_CONSTANTS) -> "ControlInput":
        return ControlInput(
            force_body=np.clip(self.force_body, -c.f_max, c.f_max),
            torque=np.clip(self.torque, -c.tau_max, c.tau_max),
        )


@dataclass
class SunState:
    """Sun angle in the Hill x-y plane, wrapped to [0, 2*pi)."""

    theta: float = 0.0

    def __post_init__(self):
        self.theta = float(self.theta) % TWO_PI


def cwh_derivative(
    s: TranslationalState,
    f_hill: np.ndarray,
    c: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """[v, a] under the linearized relative-motion model with Hill-frame thrust."""
    f_hill = np.asarray(f_hill, dtype=float)
    n = c.n
    a = np.array(
        [
            3.0 * n * n * s.p[0] + 2.0 * n * s.v[1] + f_hill[0] / c.m,
            -2.0 * n * s.v[0] + f_hill[1] / c.m,
            -n * n * s.p[2] + f_hill[2] / c.m,
        ]
    )
    return np.concatenate([s.v, a])


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a scalar-last quaternion (body -> Hill)."""
    return _kernels.quat_to_rot(np.asarray(q, dtype=float))


def _check_unit(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    nrm = np.linalg.norm(q)
    if abs(nrm - 1.0) > 1e-6:
        raise InvalidQuaternionError(f"quaternion norm {nrm:.9f} is not 1")
    return q


def body_to_hill(q: np.ndarray, vec_body: np.ndarray) -> np.ndarray:
    """Rotate a body-frame vector into Hill's frame."""
    q = _check_unit(q)
    return quat_to_rot(q) @ np.asarray(vec_body, dtype=float)


def hill_to_body(q: np.ndarray, vec_hill: np.ndarray) -> np.ndarray:
    """Rotate a Hill-frame vector into the body frame (conjugate rotation)."""
    q = _check_unit(q)
    return quat_to_rot(q).T @ np.asarray(vec_hill, dtype=float)


def attitude_derivative(
    s: AttitudeState,
    torque: np.ndarray,
    c: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """[q_dot, omega_dot] from quaternion kinematics and Euler's equations."""
    _check_unit(s.q)
    q1, q2, q3, q4 = s.q
    w1, w2, w3 = s.omega
    tau = np.asarray(torque, dtype=float)
    q_dot = 0.5 * np.array(
        [
            q4 * w1 - q3 * w2 + q2 * w3,
            q3 * w1 + q4 * w2 - q1 * w3,
            -q2 * w1 + q1 * w2 + q4 * w3,
            -q1 * w1 - q2 * w2 - q3 * w3,
        ]
    )
    j1, j2, j3 = c.j1, c.j2, c.j3
    w_dot = np.array(
        [
            ((j2 - j3) * w2 * w3 + tau[0]) / j1,
            ((j3 - j1) * w1 * w3 + tau[1]) / j2,
            ((j1 - j2) * w1 * w2 + tau[2]) / j3,
        ]
    )
    return np.concatenate([q_dot, w_dot])


def sun_vector(sun: SunState) -> np.ndarray:
    """Unit vector from the chief toward the Sun, in Hill's frame."""
    return np.array([np.cos(sun.theta), np.sin(sun.theta), 0.0])


def sun_advance(
    sun: SunState, dt: float, c: PhysicalConstants = DEFAULT_CONSTANTS
) -> SunState:
    """Advance the sun angle at the rate -n, wrapped to [0, 2*pi)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return SunState(theta=(sun.theta - c.n * dt) % TWO_PI)


def thermal_derivative(
    s: DeputyState, sun: SunState, c: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Node temperature rate [K/s] from solar, albedo, IR, and rejection terms.

    The node normal is -y_body rotated into Hill's frame; solar and albedo
    inputs clamp to zero when the respective incidence is non-positive, and
    the Earth view factor clamps to [0, 0.8].
    """
    rot = quat_to_rot(_check_unit(s.att.q))
    normal = rot @ np.array([0.0, -1.0, 0.0])
    dot_sun = float(normal @ sun_vector(sun))
    dot_earth = float(normal @ np.array([-1.0, 0.0, 0.0]))
    return float(
        _kernels._thermal_rate(dot_sun, dot_earth, s.res.temperature, c.pack())
    )


def power_derivative(
    s: DeputyState, sun: SunState, c: PhysicalConstants = DEFAULT_CONSTANTS
) -> float:
    """Battery energy rate [W]; generation only while the panel faces the Sun."""
    rot = quat_to_rot(_check_unit(s.att.q))
    normal = rot @ np.array([-1.0, 0.0, 0.0])
    dot_sun = float(normal @ sun_vector(sun))
    return float(_kernels._power_rate(dot_sun, c.pack()))


def pack_state(s: DeputyState, sun: SunState) -> np.ndarray:
    """16-element kernel state: deputy state plus the sun angle."""
    out = np.empty(16)
    out[0:15] = s.to_array()
    out[15] = sun.theta
    return out


def step(
    s: DeputyState,
    u: ControlInput,
    sun: SunState,
    dt: float = 1.0,
    c: PhysicalConstants = DEFAULT_CONSTANTS,
) -> DeputyState:
    """One RK4 step of the coupled 15-state under a zero-order-hold control.

    The thrust vector is rotated body -> Hill at every RK4 stage with that
    stage's quaternion; the quaternion is renormalized afterwards and the
    battery energy clamps at zero.
    """
    x = pack_state(s, sun)
    out, ok = _kernels.rk4_step(x, u.to_array(), float(dt), c.pack())
    if not ok:
        raise IntegrationFaultError("non-finite state after RK4 step", state=out)
    return DeputyState.from_array(out[0:15])


def cwh_closed_form(
    s0: TranslationalState, t: float, c: PhysicalConstants = DEFAULT_CONSTANTS
) -> TranslationalState:
    """Exact state-transition solution of the drift-only linear model."""
    if t < 0:
        raise ValueError("t must be non-negative")
    n = c.n
    nt = n * t
    cos_nt = np.cos(nt)
    sin_nt = np.sin(nt)
    x0, y0, z0 = s0.p
    vx, vy, vz = s0.v
    x = (4.0 - 3.0 * cos_nt) * x0 + sin_nt / n * vx + 2.0 / n * (1.0 - cos_nt) * vy
    y = (
        6.0 * (sin_nt - nt) * x0
        + y0
        - 2.0 / n * (1.0 - cos_nt) * vx
        + (4.0 * sin_nt - 3.0 * nt) / n * vy
    )
    z = cos_nt * z0 + sin_nt / n * vz
    xd = 3.0 * n * sin_nt * x0 + cos_nt * vx + 2.0 * sin_nt * vy
    yd = -6.0 * n * (1.0 - cos_nt) * x0 - 2.0 * sin_nt * vx + (4.0 * cos_nt - 3.0) * vy
    zd = -n * sin_nt * z0 + cos_nt * vz
    return TranslationalState(p=np.array([x, y, z]), v=np.array([xd, yd, zd]))


def drift_distance_grid(
    trans6: np.ndarray,
    horizon_s: int,
    c: PhysicalConstants = DEFAULT_CONSTANTS,
) -> np.ndarray:
    """|p(t)| for t = 0..horizon_s on a 1 s grid of the drift-only model."""
    t_grid = np.arange(horizon_s + 1, dtype=float)
    return _kernels.drift_positions(
        np.asarray(trans6, dtype=float),
        c.n,
        np.cos(c.n * t_grid),
        np.sin(c.n * t_grid),
        t_grid,
    )


def random_unit_quaternion(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via the subgroup-algorithm construction."""
    u1, u2, u3 = rng.uniform(size=3)
    a = np.sqrt(1.0 - u1)
    b = np.sqrt(u1)
    return np.array(
        [
            a * np.sin(TWO_PI * u2),
            a * np.cos(TWO_PI * u2),
            b * np.sin(TWO_PI * u3),
            b * np.cos(TWO_PI * u3),
        ]
    )


def replace_trans(s: DeputyState, trans: TranslationalState) -> DeputyState:
    return replace(s, trans=trans)
