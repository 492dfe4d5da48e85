"""Scripted primary controllers.

These stand in for a trained policy so the full pipeline (controller ->
safety filter -> plant) can be exercised: a PD inspection seeker, a uniform
random controller, an adversarial controller for safety fuzzing, and a zero
controller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_CONSTANTS, PhysicalConstants
from .dynamics import ControlInput, DeputyState, SunState, quat_to_rot, sun_vector
from .inspection import InspectionSphere, nearest_cluster_centroid

CONTROLLER_KINDS = ("inspect-seeker", "random", "adversarial", "zero")

STANDOFF_RADIUS = 30.0  # hold point distance from the chief [m]


@dataclass
class ControllerSpec:
    kind: str = "zero"
    kp_pos: float = 0.02   # [N/m]
    kd_pos: float = 0.4    # [N s/m]
    kp_att: float = 2e-4   # [N m / rad]
    kd_att: float = 4e-3   # [N m s / rad]
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if min(self.kp_pos, self.kd_pos, self.kp_att, self.kd_att) < 0:
            raise ValueError("controller gains must be non-negative")


class Controller:
    """Base controller; subclasses emit a desired control within the box."""

    def __init__(self, spec: ControllerSpec, c: PhysicalConstants = DEFAULT_CONSTANTS):
        self.spec = spec
        self.constants = c

    def action(
        self,
        state: DeputyState,
        others: list[DeputyState],
        sun: SunState,
        sphere: InspectionSphere,
        step_index: int,
    ) -> ControlInput:
        raise NotImplementedError

    def reset(self, episode_seed: int) -> None:
        """Rebind any internal randomness to the episode seed."""


class ZeroController(Controller):
    def action(self, state, others, sun, sphere, step_index):
        return ControlInput()


class RandomController(Controller):
    """Uniform in the actuator box, redrawn each control step."""

    def __init__(self, spec, c=DEFAULT_CONSTANTS):
        super().__init__(spec, c)
        self._rng = np.random.default_rng(spec.seed)

    def reset(self, episode_seed: int) -> None:
        # independent stream per episode, still reproducible per seed
        self._rng = np.random.default_rng((self.spec.seed, episode_seed))

    def action(self, state, others, sun, sphere, step_index):
        c = self.constants
        force = self._rng.uniform(-c.f_max, c.f_max, size=3)
        torque = self._rng.uniform(-c.tau_max, c.tau_max, size=3)
        return ControlInput(force_body=force, torque=torque)


class AdversarialController(Controller):
    """Max thrust at the chief (alternating with the nearest deputy) and max
    torque slewing the boresight into the sun: worst-case fuzz input."""

    def action(self, state, others, sun, sphere, step_index):
        c = self.constants
        rot_t = quat_to_rot(state.att.q).T
        p = state.trans.p
        target = np.zeros(3)
        if step_index % 2 == 1 and others:
            dists = [np.linalg.norm(o.trans.p - p) for o in others]
            target = others[int(np.argmin(dists))].trans.p
        direction = target - p
        nrm = np.linalg.norm(direction)
        force = np.zeros(3)
        if nrm > 1e-9:
            force = c.f_max * (rot_t @ (direction / nrm))
        boresight = quat_to_rot(state.att.q) @ np.array([1.0, 0.0, 0.0])
        axis = np.cross(boresight, sun_vector(sun))
        axis_norm = np.linalg.norm(axis)
        torque = np.zeros(3)
        if axis_norm > 1e-9:
            torque = c.tau_max * (rot_t @ (axis / axis_norm))
        return ControlInput(force_body=force, torque=torque)


class InspectSeeker(Controller):
    """PD loops toward a standoff point over the nearest uninspected cluster
    with the boresight held on the chief."""

    def __init__(self, spec, c=DEFAULT_CONSTANTS):
        super().__init__(spec, c)
        self._cluster_seed = spec.seed

    def reset(self, episode_seed: int) -> None:
        self._cluster_seed = episode_seed

    def action(self, state, others, sun, sphere, step_index):
        c = self.constants
        spec = self.spec
        p = state.trans.p
        v = state.trans.v
        rot = quat_to_rot(state.att.q)
        rot_t = rot.T
        # Translational loop: hold a point above the nearest uninspected
        # cluster, STANDOFF_RADIUS out from the chief center.
        centroid = nearest_cluster_centroid(sphere, p, seed=self._cluster_seed)
        if centroid is not None and np.linalg.norm(centroid) > 1e-9:
            target = STANDOFF_RADIUS * centroid / np.linalg.norm(centroid)
        else:
            r = np.linalg.norm(p)
            target = STANDOFF_RADIUS * (p / r) if r > 1e-9 else np.array(
                [STANDOFF_RADIUS, 0.0, 0.0]
            )
        force_hill = spec.kp_pos * (target - p) - spec.kd_pos * v
        force = np.clip(rot_t @ force_hill, -c.f_max, c.f_max)
        # Attitude loop: align the boresight with the chief direction.
        boresight = rot @ np.array([1.0, 0.0, 0.0])
        r = np.linalg.norm(p)
        aim = -p / r if r > 1e-9 else np.array([1.0, 0.0, 0.0])
        axis = np.cross(boresight, aim)
        sin_ang = np.linalg.norm(axis)
        cos_ang = float(boresight @ aim)
        if sin_ang < 1e-9:
            if cos_ang > 0.0:
                torque_dir = np.zeros(3)
                angle = 0.0
            else:
                # exactly opposed: rotate about any axis normal to the boresight
                helper = np.array([0.0, 0.0, 1.0])
                if abs(boresight[2]) > 0.9:
                    helper = np.array([0.0, 1.0, 0.0])
                torque_dir = np.cross(boresight, helper)
                torque_dir /= np.linalg.norm(torque_dir)
                angle = np.pi
        else:
            torque_dir = axis / sin_ang
            angle = np.arctan2(sin_ang, cos_ang)
        torque_hill = spec.kp_att * angle * torque_dir
        torque = np.clip(
            rot_t @ torque_hill - spec.kd_att * state.att.omega,
            -c.tau_max,
            c.tau_max,
        )
        return ControlInput(force_body=force, torque=torque)


def make_controller(
    spec: ControllerSpec, c: PhysicalConstants = DEFAULT_CONSTANTS
) -> Controller:
    if spec.kind == "zero":
        return ZeroController(spec, c)
    if spec.kind == "random":
        return RandomController(spec, c)
    if spec.kind == "adversarial":
        return AdversarialController(spec, c)
    if spec.kind == "inspect-seeker":
        return InspectSeeker(spec, c)
    raise ValueError(f"unknown controller kind {spec.kind!r}")
