"""Active-set-invariance safety filter.

Each run-time-assurance substep assembles one quadratic program over the six
controls plus one slack variable per soft constraint, minimizing the squared
distance to the desired control plus heavily weighted squared slacks, subject
to every constraint's control-affine row and the actuator box.  The chief and
deputy keep-out rows carry no slack; if they conflict, the filter retries
with the hard rows alone and finally falls back to zero control with a fault
flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .constraints import (
    DEFAULT_SLACK_WEIGHT,
    ConstraintContext,
    build_constraint_specs,
    pack_constraint_params,
    psm_trig_grid,
    row_names,
)
from .dynamics import (
    ControlInput,
    DeputyState,
    SunState,
    TranslationalState,
    cwh_closed_form,
    pack_state,
)
from .errors import IntegrationFaultError

FILTER_STATUS_NAMES = {
    _kernels.FILTER_PASSTHROUGH: "passthrough",
    _kernels.FILTER_QP: "qp",
    _kernels.FILTER_HARD_ONLY: "hard-only",
    _kernels.FILTER_FAULT: "fault",
}


@dataclass
class FilterConfig:
    """Constraint set and weights for the safety filter."""

    constants: PhysicalConstants = DEFAULT_CONSTANTS
    slack_weight: float = DEFAULT_SLACK_WEIGHT

    def specs(self, n_others: int):
        return build_constraint_specs(n_others, self.slack_weight)


@dataclass
class FilterResult:
    u_act: ControlInput
    intervened: bool
    status: str
    constraint_values: dict[str, float]
    slack_values: dict[str, float]
    active_constraints: list[str] = field(default_factory=list)

    @property
    def safety_fault(self) -> bool:
        return self.status == "fault"


def filter_control(
    u_des: ControlInput, ctx: ConstraintContext, cfg: FilterConfig | None = None
) -> FilterResult:
    """Minimally invasive correction of the desired control.

    If the desired control already satisfies every constraint row it passes
    through untouched; otherwise the QP projects it onto the admissible set,
    spending slack only where soft rows genuinely conflict.
    """
    if cfg is None:
        cfg = FilterConfig(constants=ctx.constants)
    cos_nt, sin_nt, t_grid = psm_trig_grid(cfg.constants)
    u_act, h_raw, slack, status, intervened = _kernels.filter_control(
        ctx.kernel_state(),
        ctx.others_array(),
        u_des.to_array(),
        cfg.constants.pack(),
        ctx.params(),
        cos_nt,
        sin_nt,
        t_grid,
        cfg.slack_weight,
    )
    names = row_names(len(ctx.others))
    n_hard = 1 + len(ctx.others)
    slack_map = dict(zip(names[n_hard:], slack.tolist()))
    active = _active_rows(ctx, u_act, slack, n_hard, cos_nt, sin_nt, t_grid)
    return FilterResult(
        u_act=ControlInput.from_array(u_act),
        intervened=bool(intervened),
        status=FILTER_STATUS_NAMES[int(status)],
        constraint_values=dict(zip(names, h_raw.tolist())),
        slack_values=slack_map,
        active_constraints=active,
    )


def _active_rows(ctx, u_act, slack, n_hard, cos_nt, sin_nt, t_grid) -> list[str]:
    """Rows whose inequality is tight at the filtered control."""
    h_raw, psi, lf, gu, rhs, degen = _kernels.constraint_rows(
        ctx.kernel_state(),
        ctx.others_array(),
        ctx.constants.pack(),
        ctx.params(),
        cos_nt,
        sin_nt,
        t_grid,
    )
    names = row_names(len(ctx.others))
    active = []
    for i, name in enumerate(names):
        if degen[i]:
            continue
        margin = float(gu[i] @ u_act - rhs[i])
        if i >= n_hard:
            margin -= float(slack[i - n_hard])
        if abs(margin) <= 1e-7:
            active.append(name)
    return active


@dataclass
class SubstepLog:
    t: float
    u_act: np.ndarray
    constraint_values: dict[str, float]
    intervened: bool
    status: str
    slack_max: float


def rta_substep_loop(
    u_des: ControlInput,
    state: DeputyState,
    sun: SunState,
    cfg: FilterConfig | None = None,
    others: list[DeputyState] | None = None,
    n_substeps: int = 10,
    dt: float = 1.0,
) -> tuple[DeputyState, SunState, list[SubstepLog]]:
    """Hold the desired control for n substeps, re-filtering each second.

    Neighbour states, when provided, advance ballistically between substeps
    (their own controls are unknown to this agent's filter).  Raises
    IntegrationFaultError on non-finite states; a hard-constraint conflict
    surfaces as a 'fault' status in the log with zero control applied.
    """
    if cfg is None:
        cfg = FilterConfig()
    others = list(others or [])
    cos_nt, sin_nt, t_grid = psm_trig_grid(cfg.constants)
    cp = cfg.constants.pack()
    pp = pack_constraint_params(cfg.constants)
    x = pack_state(state, sun)
    other_states = [
        np.concatenate([o.trans.p, o.trans.v]) for o in others
    ]
    logs: list[SubstepLog] = []
    names = None
    t = 0.0
    for _ in range(n_substeps):
        others_arr = (
            np.stack(other_states) if other_states else np.zeros((0, 6))
        )
        u_act, h_raw, slack, status, intervened = _kernels.filter_control(
            x,
            others_arr,
            u_des.to_array(),
            cp,
            pp,
            cos_nt,
            sin_nt,
            t_grid,
            cfg.slack_weight,
        )
        if names is None:
            names = row_names(others_arr.shape[0])
        x, ok = _kernels.rk4_step(x, u_act, dt, cp)
        if not ok:
            raise IntegrationFaultError("non-finite state during substep", state=x)
        t += dt
        logs.append(
            SubstepLog(
                t=t,
                u_act=u_act.copy(),
                constraint_values=dict(zip(names, h_raw.tolist())),
                intervened=bool(intervened),
                status=FILTER_STATUS_NAMES[int(status)],
                slack_max=float(np.max(np.abs(slack))) if slack.size else 0.0,
            )
        )
        # ballistic neighbour prediction for the next substep
        for j, arr in enumerate(other_states):
            nxt = cwh_closed_form(
                TranslationalState(p=arr[0:3], v=arr[3:6]), dt, cfg.constants
            )
            other_states[j] = np.concatenate([nxt.p, nxt.v])
    new_state = DeputyState.from_array(x[0:15])
    new_sun = SunState(theta=float(x[15]))
    return new_state, new_sun, logs
