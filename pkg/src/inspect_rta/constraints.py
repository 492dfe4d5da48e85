"""Safety constraints, their analytic Lie derivatives, and the high-order
transformation for the second-order (attitude-coupled) constraints.

Ten constraint families guard the deputy: chief and deputy keep-out,
distance-dependent speed, proximity keep-in, free-drift collision freedom,
translational velocity boxes, sun exclusion of the sensor boresight, node
temperature, battery energy, and angular velocity boxes.  Keep-out rows use
a sign(.)*sqrt(|.|) continuation past their boundary so the values remain
defined (and negative) for violating states.

The sun angle is treated as a frozen parameter in the constraint model: its
drift is orders of magnitude slower than the attitude dynamics it modulates,
and the second-order rows stay stationary under a fixed attitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .constants import (
    COLLISION_RADIUS,
    DEFAULT_CONSTANTS,
    DELTA_BATT,
    DELTA_EARTH,
    DELTA_SUN,
    DEPUTY_RADIUS,
    EZ_HALF_ANGLE,
    E_MIN,
    OMEGA_MAX,
    PSM_HORIZON,
    PhysicalConstants,
    R_MAX,
    T_MAX_NODE,
    V0_SPEED,
    V1_COEF,
    V_MAX,
)
from .dynamics import DeputyState, SunState, pack_state, quat_to_rot, sun_vector
from .errors import GradientSingularityError

DEGREE_ONE_GAIN = 10.0
HOCBF_GAIN_1 = 5.0
HOCBF_GAIN_2 = 5.0
DEFAULT_SLACK_WEIGHT = 1e12

# Names of the twelve slackable row families, in kernel row order after the
# hard chief/deputy rows.
SOFT_ROW_NAMES = (
    "speed",
    "prox",
    "psm",
    "vx",
    "vy",
    "vz",
    "ez",
    "temp",
    "batt",
    "w1",
    "w2",
    "w3",
)


def pack_constraint_params(c: PhysicalConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Constraint parameters in the layout the kernels consume."""
    return np.array(
        [
            c.a_max,
            V0_SPEED,
            V1_COEF * c.n,
            R_MAX,
            COLLISION_RADIUS,
            2.0 * DEPUTY_RADIUS,
            V_MAX,
            OMEGA_MAX,
            EZ_HALF_ANGLE,
            T_MAX_NODE,
            DELTA_SUN,
            DELTA_EARTH,
            E_MIN,
            DELTA_BATT,
            DEGREE_ONE_GAIN,
            HOCBF_GAIN_1,
            HOCBF_GAIN_2,
        ]
    )


def psm_trig_grid(
    c: PhysicalConstants = DEFAULT_CONSTANTS, horizon: int = PSM_HORIZON
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Precomputed (cos(n t), sin(n t), t) over the free-drift horizon."""
    t_grid = np.arange(horizon + 1, dtype=float)
    return np.cos(c.n * t_grid), np.sin(c.n * t_grid), t_grid


_DEFAULT_PP = pack_constraint_params()
_DEFAULT_TRIG = psm_trig_grid()


@dataclass
class ConstraintContext:
    """Everything a constraint evaluation needs about the world."""

    state: DeputyState
    others: list = field(default_factory=list)
    sun: SunState = field(default_factory=SunState)
    constants: PhysicalConstants = DEFAULT_CONSTANTS
    a_max: float | None = None

    def __post_init__(self):
        if self.a_max is None:
            self.a_max = self.constants.a_max
        if self.a_max <= 0:
            raise ValueError("a_max must be positive")

    def kernel_state(self) -> np.ndarray:
        return pack_state(self.state, self.sun)

    def others_array(self) -> np.ndarray:
        out = np.zeros((len(self.others), 6))
        for j, other in enumerate(self.others):
            out[j, 0:3] = other.trans.p
            out[j, 3:6] = other.trans.v
        return out

    def params(self) -> np.ndarray:
        pp = pack_constraint_params(self.constants)
        pp[_kernels.PP_AMAX] = self.a_max
        return pp


def alpha_degree_one(x: float) -> float:
    """Class-kappa strengthening for first-order rows."""
    return DEGREE_ONE_GAIN * x


def alpha_hocbf(x: float) -> float:
    """Class-kappa strengthening for both high-order stages."""
    return HOCBF_GAIN_1 * x


@dataclass(frozen=True)
class ConstraintSpec:
    """One registered constraint family."""

    name: str
    relative_degree: int
    slackable: bool
    slack_weight: float
    alpha: Callable[[float], float]

    def row_index(self, n_others: int) -> int:
        return row_index(self.name, n_others)


def row_index(name: str, n_others: int) -> int:
    """Kernel row index of a named constraint for a k-neighbour context."""
    if name == "chief":
        return 0
    if name.startswith("deputy_"):
        j = int(name.split("_", 1)[1])
        if j >= n_others:
            raise IndexError(f"no neighbour {j} in a {n_others}-neighbour context")
        return 1 + j
    try:
        return 1 + n_others + SOFT_ROW_NAMES.index(name)
    except ValueError:
        raise KeyError(f"unknown constraint {name!r}") from None


def row_names(n_others: int) -> list[str]:
    return (
        ["chief"]
        + [f"deputy_{j}" for j in range(n_others)]
        + list(SOFT_ROW_NAMES)
    )


def build_constraint_specs(
    n_others: int, slack_weight: float = DEFAULT_SLACK_WEIGHT
) -> list[ConstraintSpec]:
    """The full registered constraint set in kernel row order."""
    degree_two = {"ez", "temp", "batt"}
    specs = [
        ConstraintSpec("chief", 1, False, 0.0, alpha_degree_one)
    ]
    for j in range(n_others):
        specs.append(ConstraintSpec(f"deputy_{j}", 1, False, 0.0, alpha_degree_one))
    for name in SOFT_ROW_NAMES:
        if name in degree_two:
            specs.append(ConstraintSpec(name, 2, True, slack_weight, alpha_hocbf))
        else:
            specs.append(ConstraintSpec(name, 1, True, slack_weight, alpha_degree_one))
    return specs


# ---------------------------------------------------------------------------
# Raw constraint values.  These are the contract implementations; the fused
# kernel recomputes them on the hot path and a test pins the two together.
# ---------------------------------------------------------------------------

def _signed_sqrt(x: float) -> float:
    return np.sign(x) * np.sqrt(abs(x))


def h_chief(ctx: ConstraintContext) -> float:
    p = ctx.state.trans.p
    v = ctx.state.trans.v
    r = float(np.linalg.norm(p))
    if r < 1e-12:
        return -COLLISION_RADIUS
    return float(
        _signed_sqrt(2.0 * ctx.a_max * (r - COLLISION_RADIUS)) + (v @ p) / r
    )


def h_deputy(ctx: ConstraintContext, j: int) -> float:
    other = ctx.others[j]
    dp = ctx.state.trans.p - other.trans.p
    dv = ctx.state.trans.v - other.trans.v
    r = float(np.linalg.norm(dp))
    if r < 1e-12:
        return -2.0 * DEPUTY_RADIUS
    return float(
        _signed_sqrt(4.0 * ctx.a_max * (r - 2.0 * DEPUTY_RADIUS)) + (dv @ dp) / r
    )


def h_speed(ctx: ConstraintContext) -> float:
    r = float(np.linalg.norm(ctx.state.trans.p))
    return float(V0_SPEED + V1_COEF * ctx.constants.n * r - np.linalg.norm(ctx.state.trans.v))


def h_prox(ctx: ConstraintContext) -> float:
    p = ctx.state.trans.p
    v = ctx.state.trans.v
    r = float(np.linalg.norm(p))
    if r < 1e-12:
        return float(np.sqrt(2.0 * ctx.a_max * R_MAX))
    return float(_signed_sqrt(2.0 * ctx.a_max * (R_MAX - r)) - (v @ p) / r)


def h_psm(ctx: ConstraintContext) -> float:
    """Grid minimum of the free-drift distance minus the collision radius."""
    trans6 = np.concatenate([ctx.state.trans.p, ctx.state.trans.v])
    cos_nt, sin_nt, t_grid = psm_trig_grid(ctx.constants)
    dists = _kernels.drift_positions(trans6, ctx.constants.n, cos_nt, sin_nt, t_grid)
    return float(dists.min() - COLLISION_RADIUS)


def h_velocity_box(ctx: ConstraintContext) -> np.ndarray:
    return V_MAX ** 2 - ctx.state.trans.v ** 2


def h_omega_box(ctx: ConstraintContext) -> np.ndarray:
    return OMEGA_MAX ** 2 - ctx.state.att.omega ** 2


def h_ez(ctx: ConstraintContext) -> float:
    boresight = quat_to_rot(ctx.state.att.q) @ np.array([1.0, 0.0, 0.0])
    d = float(np.clip(boresight @ sun_vector(ctx.sun), -1.0, 1.0))
    return float(np.arccos(d) - EZ_HALF_ANGLE)


def _incidence_angles(ctx: ConstraintContext) -> tuple[float, float]:
    normal = quat_to_rot(ctx.state.att.q) @ np.array([0.0, -1.0, 0.0])
    d_sun = float(np.clip(normal @ sun_vector(ctx.sun), -1.0, 1.0))
    d_earth = float(np.clip(normal @ np.array([-1.0, 0.0, 0.0]), -1.0, 1.0))
    return float(np.arccos(d_sun)), float(np.arccos(d_earth))


def h_temp(ctx: ConstraintContext) -> float:
    th_si, th_ei = _incidence_angles(ctx)
    half_pi = 0.5 * np.pi
    return float(
        T_MAX_NODE
        - ctx.state.res.temperature
        - DELTA_SUN * (half_pi - th_si)
        - DELTA_EARTH * (half_pi - th_ei)
    )


def h_batt(ctx: ConstraintContext) -> float:
    th_si, _ = _incidence_angles(ctx)
    return float(ctx.state.res.energy - E_MIN - DELTA_BATT * th_si)


# ---------------------------------------------------------------------------
# Lie derivatives / high-order composition (kernel-backed).
# ---------------------------------------------------------------------------

def evaluate_rows(ctx: ConstraintContext):
    """All rows at once: (h_raw, psi, lf, gu, rhs, degen) in kernel order."""
    cos_nt, sin_nt, t_grid = psm_trig_grid(ctx.constants)
    return _kernels.constraint_rows(
        ctx.kernel_state(),
        ctx.others_array(),
        ctx.constants.pack(),
        ctx.params(),
        cos_nt,
        sin_nt,
        t_grid,
    )


def lie_derivatives(
    spec: ConstraintSpec, ctx: ConstraintContext
) -> tuple[float, np.ndarray]:
    """(L_f, L_g) of the constraint's active row over the six controls.

    First-order rows differentiate h itself; second-order rows differentiate
    the first high-order stage so the control appears explicitly.
    """
    idx = spec.row_index(len(ctx.others))
    h_raw, psi, lf, gu, rhs, degen = evaluate_rows(ctx)
    if degen[idx]:
        raise GradientSingularityError(
            f"constraint {spec.name!r} gradient is singular at this state"
        )
    return float(lf[idx]), gu[idx].copy()


def hocbf_compose(
    spec: ConstraintSpec, ctx: ConstraintContext
) -> tuple[float, np.ndarray, float]:
    """Effective first-order row (L_f, L_g, stage value).

    For first-order specs this is the plain CBF row with stage value h; for
    second-order specs the stage value is psi_1 = h_dot + alpha_1(h) and the
    derivatives are psi_1's, making the row linear in the control.
    """
    idx = spec.row_index(len(ctx.others))
    h_raw, psi, lf, gu, rhs, degen = evaluate_rows(ctx)
    if degen[idx]:
        raise GradientSingularityError(
            f"constraint {spec.name!r} gradient is singular at this state"
        )
    return float(lf[idx]), gu[idx].copy(), float(psi[idx])


def all_h_values(ctx: ConstraintContext) -> dict[str, float]:
    """Raw constraint values keyed by row name."""
    h_raw, *_ = evaluate_rows(ctx)
    return dict(zip(row_names(len(ctx.others)), h_raw.tolist()))
