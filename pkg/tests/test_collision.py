import math

import numpy as np
import pytest

from dagjoint.collision import (
    Footprint, Pose, collision_matrix, collision_threshold, collisions_same_time, poses_collide,
)
from dagjoint.errors import FootprintError
from dagjoint.scene import RigidTransform


def test_threshold_closed_form():
    assert collision_threshold(2.0, 2.0) == 4.0 / math.sqrt(3.8)
    assert collision_threshold(2.0, 2.0) == pytest.approx(2.051957, abs=1e-6)
    assert collision_threshold(0.7, 0.7) == pytest.approx(0.718185, abs=1e-6)
    assert collision_threshold(0.7, 2.5) == collision_threshold(2.5, 0.7)


@pytest.mark.parametrize("w_i,w_j", [(0.0, 1.0), (1.0, -2.0)])
def test_threshold_rejects_non_positive_width(w_i, w_j):
    with pytest.raises(FootprintError):
        collision_threshold(w_i, w_j)


def test_footprint_circles():
    assert Footprint.from_dimensions(4.0, 2.0).circle_centers == (-1.0, 1.0)
    assert Footprint.from_dimensions(0.7, 0.7).circle_centers == (0.0,)
    bus = Footprint.from_dimensions(12.5, 2.5)
    assert len(bus.circle_centers) == 5
    assert bus.circle_centers[0] == pytest.approx(-5.0)
    assert bus.circle_centers[-1] == pytest.approx(5.0)


def test_footprint_invariants():
    with pytest.raises(FootprintError):
        Footprint(4.0, 2.0, (2.0, -2.0))
    with pytest.raises(FootprintError):
        Footprint(4.0, 2.0, (0.5,))
    with pytest.raises(FootprintError):
        Footprint.from_dimensions(1.0, 2.0)


def _vehicle():
    return Footprint.from_dimensions(4.0, 2.0)


def test_identical_poses_collide():
    pose = Pose(np.array([3.0, -1.0]), 0.4)
    assert poses_collide(pose, _vehicle(), pose, Footprint.from_dimensions(0.7, 0.7))


def test_lateral_offset_three_meters_clear():
    a = Pose(np.array([0.0, 0.0]), 0.0)
    b = Pose(np.array([0.0, 3.0]), 0.0)
    assert not poses_collide(a, _vehicle(), b, _vehicle())
    assert poses_collide(a, _vehicle(), Pose(np.array([0.0, 2.0]), 0.0), _vehicle())


def test_threshold_is_strict():
    foot = Footprint.from_dimensions(0.7, 0.7)
    eps = collision_threshold(0.7, 0.7)
    a = Pose(np.array([0.0, 0.0]), 0.0)
    assert not poses_collide(a, foot, Pose(np.array([eps, 0.0]), 0.0), foot)
    assert poses_collide(a, foot, Pose(np.array([eps * (1 - 1e-9), 0.0]), 0.0), foot)


def test_symmetry_and_rigid_invariance():
    rng = np.random.default_rng(0)
    feet = [Footprint.from_dimensions(*d) for d in [(4.0, 2.0), (0.7, 0.7), (2.0, 0.7), (12.5, 2.5)]]
    for _ in range(200):
        fi, fj = feet[rng.integers(4)], feet[rng.integers(4)]
        a = Pose(rng.uniform(-8, 8, 2), rng.uniform(-np.pi, np.pi))
        b = Pose(rng.uniform(-8, 8, 2), rng.uniform(-np.pi, np.pi))
        hit = poses_collide(a, fi, b, fj)
        assert hit == poses_collide(b, fj, a, fi)
        transform = RigidTransform(tuple(rng.uniform(-50, 50, 2)), rng.uniform(-np.pi, np.pi))
        ta = Pose(transform.apply_points(a.position), transform.apply_yaws(a.yaw))
        tb = Pose(transform.apply_points(b.position), transform.apply_yaws(b.yaw))
        if not np.isclose(_min_gap(a, fi, b, fj), 0.0, atol=1e-9):
            assert poses_collide(ta, fi, tb, fj) == hit


def _min_gap(a, fi, b, fj):
    ca = a.position + np.outer(fi.offsets, [np.cos(a.yaw), np.sin(a.yaw)])
    cb = b.position + np.outer(fj.offsets, [np.cos(b.yaw), np.sin(b.yaw)])
    dist = np.linalg.norm(ca[:, None] - cb[None], axis=-1)
    return float(dist.min() - collision_threshold(fi.width, fj.width))


def test_same_time_and_matrix_agree():
    rng = np.random.default_rng(1)
    pos_i, pos_j = rng.uniform(-5, 5, (6, 2)), rng.uniform(-5, 5, (6, 2))
    yaw_i, yaw_j = rng.uniform(-np.pi, np.pi, 6), rng.uniform(-np.pi, np.pi, 6)
    same = collisions_same_time(pos_i, yaw_i, _vehicle(), pos_j, yaw_j, _vehicle())
    matrix = collision_matrix(pos_i, yaw_i, _vehicle(), pos_j, yaw_j, _vehicle())
    np.testing.assert_array_equal(np.diag(matrix), same)
    for t_i in range(6):
        for t_j in range(6):
            expected = poses_collide(Pose(pos_i[t_i], yaw_i[t_i]), _vehicle(), Pose(pos_j[t_j], yaw_j[t_j]), _vehicle())
            assert matrix[t_i, t_j] == expected
