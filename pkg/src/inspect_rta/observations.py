"""Fixed-size observation encoders.

The base block describes the agent itself and the inspection task; the
scalable block summarizes every other agent into a constant number of slots
regardless of how many exist, either by octant of the body frame (8 slots)
or by nearest direction on a 100-point sphere lattice, populated with agent
counts or normalized nearest-agent distances.  All vectors are expressed in
the agent's body frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .constants import N_INSPECT_POINTS
from .dynamics import DeputyState, SunState, quat_to_rot, sun_vector
from .inspection import InspectionSphere, generate_points, nearest_uninspected_cluster

log = logging.getLogger(__name__)

OBS_MODES = ("baseline", "oct-count", "oct-dist", "points-count", "points-dist")

# Base block slots: [|p|, p_hat(3), |v|, v_hat(3), omega(3), E, T,
#                    sun(3), priority(3), cluster(3)]
BASE_LENGTH = 22
SCALABLE_LENGTHS = {
    "baseline": 0,
    "oct-count": 8,
    "oct-dist": 8,
    "points-count": N_INSPECT_POINTS,
    "points-dist": N_INSPECT_POINTS,
}

_REGION_DIRS = generate_points(N_INSPECT_POINTS, 1.0)


@dataclass
class ObservationConfig:
    mode: str = "baseline"
    norm_pos: float = 175.0
    norm_vel: float = 0.866
    norm_omega: float = 0.05
    norm_energy: float = 10.0  # applied to energy in kJ
    norm_temp: float = 10.0
    norm_dist: float = 800.0
    cluster_seed: int = 0
    region_dirs: np.ndarray = field(default_factory=lambda: _REGION_DIRS)

    def __post_init__(self):
        if self.mode not in OBS_MODES:
            raise ValueError(f"unknown observation mode {self.mode!r}")

    @property
    def length(self) -> int:
        return BASE_LENGTH + SCALABLE_LENGTHS[self.mode]


def observation_length(mode: str) -> int:
    return BASE_LENGTH + SCALABLE_LENGTHS[mode]


def encode_base(
    state: DeputyState,
    sun: SunState,
    sphere: InspectionSphere,
    cfg: ObservationConfig,
) -> np.ndarray:
    """The 22-slot self/task block, rotated into the body frame."""
    rot_t = quat_to_rot(state.att.q).T  # Hill -> body
    p = state.trans.p
    v = state.trans.v
    out = np.zeros(BASE_LENGTH)
    p_norm = float(np.linalg.norm(p))
    out[0] = p_norm / cfg.norm_pos
    if p_norm > 1e-9:
        out[1:4] = rot_t @ (p / p_norm)
    v_norm = float(np.linalg.norm(v))
    out[4] = v_norm / cfg.norm_vel
    if v_norm > 1e-9:
        out[5:8] = rot_t @ (v / v_norm)
    out[8:11] = state.att.omega / cfg.norm_omega
    out[11] = (state.res.energy / 1000.0) / cfg.norm_energy
    out[12] = state.res.temperature / cfg.norm_temp
    out[13:16] = rot_t @ sun_vector(sun)
    out[16:19] = rot_t @ sphere.priority
    cluster = nearest_uninspected_cluster(sphere, p, seed=cfg.cluster_seed)
    if np.any(cluster):
        out[19:22] = rot_t @ cluster
    return out


def octant_index(rel_body: np.ndarray) -> int:
    """Octant of a body-frame offset; boundaries go to the non-negative side."""
    rel_body = np.asarray(rel_body, dtype=float)
    if not np.any(rel_body):
        log.warning("octant_index of a zero offset; assigning octant 0")
        return 0
    return (
        (4 if rel_body[0] >= 0.0 else 0)
        + (2 if rel_body[1] >= 0.0 else 0)
        + (1 if rel_body[2] >= 0.0 else 0)
    )


def sphere_region_index(rel_body: np.ndarray, region_dirs: np.ndarray) -> int:
    """Index of the lattice direction closest to the offset; ties go low."""
    rel_body = np.asarray(rel_body, dtype=float)
    nrm = np.linalg.norm(rel_body)
    if nrm < 1e-12:
        log.warning("sphere_region_index of a zero offset; assigning region 0")
        return 0
    return int(np.argmax(region_dirs @ (rel_body / nrm)))


def encode_scalable(
    state: DeputyState,
    others: list[DeputyState],
    cfg: ObservationConfig,
) -> np.ndarray:
    """Count or nearest-distance slots over the other agents; empty slots 0."""
    n_slots = SCALABLE_LENGTHS[cfg.mode]
    out = np.zeros(n_slots)
    if n_slots == 0 or not others:
        return out
    rot_t = quat_to_rot(state.att.q).T
    counting = cfg.mode.endswith("count")
    by_octant = cfg.mode.startswith("oct")
    for other in others:
        rel_body = rot_t @ (other.trans.p - state.trans.p)
        if by_octant:
            idx = octant_index(rel_body)
        else:
            idx = sphere_region_index(rel_body, cfg.region_dirs)
        if counting:
            out[idx] += 1.0
        else:
            dist = float(np.linalg.norm(rel_body)) / cfg.norm_dist
            if out[idx] == 0.0 or dist < out[idx]:
                out[idx] = dist
    return out


def encode(
    state: DeputyState,
    others: list[DeputyState],
    sun: SunState,
    sphere: InspectionSphere,
    cfg: ObservationConfig,
) -> np.ndarray:
    base = encode_base(state, sun, sphere, cfg)
    if SCALABLE_LENGTHS[cfg.mode] == 0:
        return base
    return np.concatenate([base, encode_scalable(state, others, cfg)])
