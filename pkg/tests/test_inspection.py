"""Inspection-sphere oracles: brute-force predicate scans over random scenes
and handcrafted cluster instances."""

import numpy as np
import pytest

from inspect_rta.constants import CHIEF_RADIUS, SENSOR_FOV
from inspect_rta.dynamics import SunState, quat_to_rot, random_unit_quaternion, sun_vector
from inspect_rta.inspection import (
    InspectionSphere,
    generate_points,
    inspect_step,
    is_illuminated,
    is_in_view,
    nearest_uninspected_cluster,
    priority_weights,
)
from tests.helpers import make_state


class TestGeneratePoints:
    def test_single_point(self):
        pts = generate_points(1, 10.0)
        assert pts.shape == (1, 3)
        assert np.linalg.norm(pts[0]) == pytest.approx(10.0, abs=1e-9)

    def test_all_on_sphere(self):
        pts = generate_points(100, 10.0)
        assert pts.shape == (100, 3)
        radii = np.linalg.norm(pts, axis=1)
        assert np.all(np.abs(radii - 10.0) < 1e-9)

    def test_near_uniform_spread(self):
        """Nearest-neighbour angular gaps stay within a factor-two band of
        the uniform-density estimate (brute-force pairwise check)."""
        pts = generate_points(100, 1.0)
        cos_mat = np.clip(pts @ pts.T, -1, 1)
        np.fill_diagonal(cos_mat, -1)
        nn_angle = np.arccos(cos_mat.max(axis=1))
        estimate = 2.0 * np.sqrt(np.pi / 100) / np.sqrt(np.sqrt(3))
        assert nn_angle.min() > 0.0
        assert nn_angle.min() > 0.5 * estimate / 2
        assert nn_angle.max() < 2.0 * estimate

    def test_deterministic(self):
        assert np.array_equal(generate_points(100), generate_points(100))


class TestPriorityWeights:
    def test_sum_to_one(self):
        pts = generate_points(100, 10.0)
        rng = np.random.default_rng(2)
        for _ in range(10):
            pri = rng.normal(size=3)
            pri /= np.linalg.norm(pri)
            w = priority_weights(pts, pri)
            assert abs(w.sum() - 1.0) < 1e-12
            assert np.all(w >= 0)

    def test_aligned_point_has_largest_weight(self):
        pts = generate_points(100, 10.0)
        pri = pts[42] / np.linalg.norm(pts[42])
        w = priority_weights(pts, pri)
        assert np.argmax(w) == 42

    def test_antipodal_pair(self):
        pts = np.array([[0, 0, 10.0], [0, 0, -10.0]])
        w = priority_weights(pts, np.array([0.0, 0, 1]))
        assert np.allclose(w, [1.0, 0.0], atol=1e-15)

    def test_monotone_in_angle(self):
        pts = generate_points(100, 10.0)
        pri = np.array([1.0, 0, 0])
        w = priority_weights(pts, pri)
        theta = np.arccos(np.clip(pts @ pri / 10.0, -1, 1))
        order = np.argsort(theta)
        assert np.all(np.diff(w[order]) <= 1e-15)


class TestIllumination:
    def test_subsolar_point(self):
        assert is_illuminated(np.array([10.0, 0, 0]), SunState(0.0))

    def test_antipodal_point(self):
        assert not is_illuminated(np.array([-10.0, 0, 0]), SunState(0.0))

    def test_terminator_is_dark(self):
        assert not is_illuminated(np.array([0.0, 0, 10.0]), SunState(0.0))


class TestVisibility:
    def test_on_axis_near_side(self):
        dep = make_state(p=(50.0, 0, 0), q=(0, 0, 1.0, 0))  # boresight -> -x
        assert is_in_view(np.array([10.0, 0, 0]), dep)

    def test_far_side_occluded(self):
        dep = make_state(p=(50.0, 0, 0), q=(0, 0, 1.0, 0))
        assert not is_in_view(np.array([-10.0, 0, 0]), dep)

    def test_fov_edge(self):
        dep = make_state(p=(50.0, 0, 0), q=(0, 0, 1.0, 0))
        # point offset so the ray from the deputy sits just inside/outside 10 deg
        for ang, expect in ((np.deg2rad(9.9), True), (np.deg2rad(10.1), False)):
            # place the point on the near hemisphere along a ray at angle ang
            direction = np.array([-np.cos(ang), np.sin(ang), 0.0])
            # intersect ray p + t*d with the 10 m sphere (near root)
            p0 = dep.trans.p
            b = 2 * float(p0 @ direction)
            c0 = float(p0 @ p0) - 100.0
            t = (-b - np.sqrt(b * b - 4 * c0)) / 2
            point = p0 + t * direction
            assert abs(np.linalg.norm(point) - 10.0) < 1e-9
            assert is_in_view(point, dep) == expect


def brute_force_flips(sphere, deputies, sun):
    """Reference predicate: illuminated and in view of at least one deputy."""
    flips = np.zeros(sphere.points.shape[0], dtype=bool)
    for idx, point in enumerate(sphere.points):
        if sphere.inspected[idx] or not is_illuminated(point, sun):
            continue
        if any(is_in_view(point, d) for d in deputies):
            flips[idx] = True
    return flips


class TestInspectStep:
    def test_no_deputies_no_change(self):
        sphere = InspectionSphere.create(np.array([1.0, 0, 0]))
        before = sphere.inspected.copy()
        credits = inspect_step(sphere, [], SunState(0.0))
        assert credits == []
        assert np.array_equal(sphere.inspected, before)

    def test_idempotent_when_all_inspected(self):
        sphere = InspectionSphere.create(np.array([1.0, 0, 0]))
        sphere.inspected[:] = True
        dep = make_state(p=(50.0, 0, 0), q=(0, 0, 1.0, 0))
        credits = inspect_step(sphere, [dep], SunState(0.0))
        assert credits[0].size == 0

    def test_flip_set_matches_brute_force_random_scenes(self):
        rng = np.random.default_rng(21)
        sphere = InspectionSphere.create(np.array([1.0, 0, 0]))
        for _ in range(1000):
            sphere.inspected[:] = rng.uniform(size=100) < 0.5
            deputies = []
            for _ in range(rng.integers(1, 4)):
                pos = rng.normal(size=3)
                pos = pos / np.linalg.norm(pos) * rng.uniform(15, 120)
                deputies.append(make_state(p=pos, q=random_unit_quaternion(rng)))
            sun = SunState(rng.uniform(0, 2 * np.pi))
            expected = brute_force_flips(sphere, deputies, sun)
            before = sphere.inspected.copy()
            credits = inspect_step(sphere, deputies, sun)
            assert np.array_equal(sphere.inspected, before | expected)
            credited = np.zeros(100, dtype=bool)
            for idx_list in credits:
                credited[idx_list] = True
            assert np.array_equal(credited, expected)

    def test_shared_sighting_credits_every_deputy(self):
        sphere = InspectionSphere.create(np.array([1.0, 0, 0]))
        d1 = make_state(p=(50.0, 0, 0), q=(0, 0, 1.0, 0))
        d2 = make_state(p=(55.0, 0, 0), q=(0, 0, 1.0, 0))
        credits = inspect_step(sphere, [d1, d2], SunState(0.0))
        shared = np.intersect1d(credits[0], credits[1])
        assert shared.size > 0

    def test_inspected_weight_nondecreasing(self):
        rng = np.random.default_rng(33)
        sphere = InspectionSphere.create(np.array([0.0, 1.0, 0]))
        last = 0.0
        for _ in range(50):
            pos = rng.normal(size=3)
            pos = pos / np.linalg.norm(pos) * rng.uniform(20, 80)
            dep = make_state(p=pos, q=random_unit_quaternion(rng))
            inspect_step(sphere, [dep], SunState(rng.uniform(0, 2 * np.pi)))
            assert sphere.total_inspected_weight >= last - 1e-15
            last = sphere.total_inspected_weight

    def test_sub_deputy_points_inspectable(self):
        """Deputy staring at the chief with the sun behind it sees lit points."""
        sphere = InspectionSphere.create(np.array([1.0, 0, 0]))
        dep = make_state(p=(50.0, 0, 0), q=(0, 0, 1.0, 0))
        credits = inspect_step(sphere, [dep], SunState(0.0))
        assert credits[0].size > 0


class TestNearestCluster:
    def test_all_inspected_sentinel(self):
        sphere = InspectionSphere.create(np.array([1.0, 0, 0]))
        sphere.inspected[:] = True
        out = nearest_uninspected_cluster(sphere, np.array([50.0, 0, 0]))
        assert np.array_equal(out, np.zeros(3))

    def test_single_point_degenerate(self):
        sphere = InspectionSphere.create(np.array([1.0, 0, 0]))
        sphere.inspected[:] = True
        sphere.inspected[7] = False
        pos = np.array([50.0, 0, 0])
        out = nearest_uninspected_cluster(sphere, pos)
        expected = sphere.points[7] - pos
        expected /= np.linalg.norm(expected)
        assert np.allclose(out, expected, atol=1e-12)

    def test_two_groups_picks_near_one(self):
        """Handcrafted 4-point instance with two antipodal pairs."""
        sphere = InspectionSphere.create(np.array([1.0, 0, 0]), n_points=4)
        sphere.points = np.array(
            [
                [10.0, 0.1, 0.0],
                [10.0, -0.1, 0.0],
                [-10.0, 0.1, 0.0],
                [-10.0, -0.1, 0.0],
            ]
        )
        sphere.inspected = np.zeros(4, dtype=bool)
        out = nearest_uninspected_cluster(sphere, np.array([40.0, 0, 0]), k_max=2)
        # brute-force: near group centroid is [10, 0, 0]
        expected = np.array([10.0, 0, 0]) - np.array([40.0, 0, 0])
        expected /= np.linalg.norm(expected)
        assert np.allclose(out, expected, atol=1e-9)

    def test_unit_norm_or_zero(self):
        rng = np.random.default_rng(55)
        sphere = InspectionSphere.create(np.array([0.0, 0, 1.0]))
        for _ in range(20):
            sphere.inspected[:] = rng.uniform(size=100) < rng.uniform(0, 1)
            out = nearest_uninspected_cluster(sphere, rng.normal(size=3) * 50)
            nrm = np.linalg.norm(out)
            assert nrm == 0.0 or abs(nrm - 1.0) < 1e-12
