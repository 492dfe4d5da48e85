"""The chief's weighted inspection-point sphere.

Point placement uses a deterministic Fibonacci lattice; weights fall off
linearly with angular distance from a priority direction and normalize to
one.  A point is inspected the first time it is simultaneously sunlit and
inside the sensor cone of at least one deputy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .constants import CHIEF_RADIUS, N_INSPECT_POINTS, SENSOR_FOV
from .dynamics import DeputyState, SunState, quat_to_rot, sun_vector

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass
class SensorModel:
    """Boresight direction in the body frame and full field-of-view angle."""

    boresight_body: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    fov: float = SENSOR_FOV

    def __post_init__(self):
        self.boresight_body = np.asarray(self.boresight_body, dtype=float)
        if not 0.0 < self.fov < np.pi:
            raise ValueError("fov must lie in (0, pi)")


DEFAULT_SENSOR = SensorModel()


def generate_points(n_points: int = N_INSPECT_POINTS, r_c: float = CHIEF_RADIUS) -> np.ndarray:
    """Fibonacci-lattice points on the sphere of radius r_c, shape (n, 3)."""
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    i = np.arange(n_points, dtype=float)
    z = 1.0 - 2.0 * (i + 0.5) / n_points
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = GOLDEN_ANGLE * i
    pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    return r_c * pts


def priority_weights(points: np.ndarray, priority: np.ndarray) -> np.ndarray:
    """Weights (pi - theta_i)/pi normalized to sum to one.

    theta_i is the angle between point i and the priority direction, so the
    weight decreases linearly toward the antipode of the priority vector.
    """
    priority = np.asarray(priority, dtype=float)
    nrm = np.linalg.norm(priority)
    if abs(nrm - 1.0) > 1e-6:
        raise ValueError("priority vector must have unit norm")
    unit = points / np.linalg.norm(points, axis=1, keepdims=True)
    cosang = np.clip(unit @ priority, -1.0, 1.0)
    theta = np.arccos(cosang)
    raw = (np.pi - theta) / np.pi
    return raw / raw.sum()


@dataclass
class InspectionSphere:
    """Inspectable points, their priority weights, and inspected flags."""

    points: np.ndarray
    weights: np.ndarray
    inspected: np.ndarray
    priority: np.ndarray

    @classmethod
    def create(
        cls,
        priority: np.ndarray,
        n_points: int = N_INSPECT_POINTS,
        r_c: float = CHIEF_RADIUS,
    ) -> "InspectionSphere":
        points = generate_points(n_points, r_c)
        return cls(
            points=points,
            weights=priority_weights(points, priority),
            inspected=np.zeros(n_points, dtype=bool),
            priority=np.asarray(priority, dtype=float),
        )

    @property
    def total_inspected_weight(self) -> float:
        return float(self.weights[self.inspected].sum())

    def uninspected_points(self) -> np.ndarray:
        return self.points[~self.inspected]


def is_illuminated(point: np.ndarray, sun: SunState) -> bool:
    """True when the outward point normal strictly faces the Sun.

    On the convex chief sphere a surface point is reachable by sunlight
    exactly when its outward normal has positive sun incidence; the
    terminator itself counts as dark.
    """
    point = np.asarray(point, dtype=float)
    return float(point @ sun_vector(sun)) > 0.0


def is_in_view(
    point: np.ndarray,
    deputy: DeputyState,
    sensor: SensorModel = DEFAULT_SENSOR,
) -> bool:
    """True when the point is inside the sensor cone and on the facing side."""
    point = np.asarray(point, dtype=float)
    pos = deputy.trans.p
    rel = point - pos
    dist = np.linalg.norm(rel)
    if dist < 1e-12:
        return False
    boresight = quat_to_rot(deputy.att.q) @ sensor.boresight_body
    if float(rel @ boresight) < np.cos(sensor.fov / 2.0) * dist:
        return False
    return float(point @ (pos - point)) > 0.0


def inspect_step_arrays(
    sphere: InspectionSphere,
    positions: np.ndarray,
    rotations: np.ndarray,
    sun_theta: float,
    fov: float = SENSOR_FOV,
) -> list[np.ndarray]:
    """Array-level inspection update; see inspect_step."""
    n_pts = sphere.points.shape[0]
    sun_dir = np.array([np.cos(sun_theta), np.sin(sun_theta), 0.0])
    illuminated = (sphere.points @ sun_dir) > 0.0
    candidates = illuminated & ~sphere.inspected
    per_deputy: list[np.ndarray] = []
    newly = np.zeros(n_pts, dtype=bool)
    fov_half_cos = np.cos(fov / 2.0)
    for a in range(positions.shape[0]):
        if not candidates.any():
            per_deputy.append(np.empty(0, dtype=np.int64))
            continue
        vis = _kernels.visible_points(
            sphere.points, positions[a], rotations[a], fov_half_cos
        ).astype(bool)
        mine = np.flatnonzero(vis & candidates)
        per_deputy.append(mine)
        newly[mine] = True
    sphere.inspected |= newly
    return per_deputy


def inspect_step(
    sphere: InspectionSphere,
    deputies: list[DeputyState],
    sun: SunState,
    sensor: SensorModel = DEFAULT_SENSOR,
) -> list[np.ndarray]:
    """Flip newly visible, sunlit points to inspected.

    Returns, per deputy, the indices of points that deputy newly inspected
    this call.  A point seen simultaneously by several deputies is credited
    to each of them; the sphere's inspected flag still flips once and never
    reverts.
    """
    if deputies:
        positions = np.stack([d.trans.p for d in deputies])
        rotations = np.stack([quat_to_rot(d.att.q) for d in deputies])
    else:
        positions = np.zeros((0, 3))
        rotations = np.zeros((0, 3, 3))
    return inspect_step_arrays(sphere, positions, rotations, sun.theta, sensor.fov)


def nearest_cluster_centroid(
    sphere: InspectionSphere,
    deputy_pos: np.ndarray,
    seed: int = 0,
    k_max: int = 6,
    max_iter: int = 50,
    tol: float = 1e-6,
) -> np.ndarray | None:
    """Centroid of the uninspected-point cluster nearest to the deputy.

    Clusters come from k-means with k = min(k_max, #uninspected) and a
    deterministic farthest-point initialization whose first center is drawn
    from ``seed``.  Returns None once every point is inspected.
    """
    deputy_pos = np.asarray(deputy_pos, dtype=float)
    pts = sphere.uninspected_points()
    if pts.shape[0] == 0:
        return None
    k = min(k_max, pts.shape[0])
    rng = np.random.default_rng(seed)
    centers = np.empty((k, 3))
    first = int(rng.integers(pts.shape[0]))
    centers[0] = pts[first]
    for j in range(1, k):
        d2 = np.min(
            ((pts[:, None, :] - centers[None, :j, :]) ** 2).sum(axis=2), axis=1
        )
        centers[j] = pts[int(np.argmax(d2))]
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for j in range(k):
            members = pts[labels == j]
            if members.shape[0] > 0:
                new_centers[j] = members.mean(axis=0)
        move = np.max(np.linalg.norm(new_centers - centers, axis=1))
        centers = new_centers
        if move < tol:
            break
    dists = np.linalg.norm(centers - deputy_pos, axis=1)
    return centers[int(np.argmin(dists))]


def nearest_uninspected_cluster(
    sphere: InspectionSphere,
    deputy_pos: np.ndarray,
    seed: int = 0,
    k_max: int = 6,
    max_iter: int = 50,
    tol: float = 1e-6,
) -> np.ndarray:
    """Unit vector from the deputy toward the nearest uninspected cluster.

    Returns the zero vector once every point is inspected.
    """
    deputy_pos = np.asarray(deputy_pos, dtype=float)
    target = nearest_cluster_centroid(sphere, deputy_pos, seed, k_max, max_iter, tol)
    if target is None:
        return np.zeros(3)
    direction = target - deputy_pos
    nrm = np.linalg.norm(direction)
    if nrm < 1e-12:
        return np.zeros(3)
    return direction / nrm
