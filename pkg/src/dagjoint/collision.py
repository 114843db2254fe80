'''
Circle-footprint collision checking.

An agent footprint is covered by circles whose centres lie on the agent's
heading axis; two agents collide when any pair of centres (one per agent)
is closer than (w_i + w_j) / sqrt(3.8). The same placement serves the
interaction labels and the collision-rate metrics.
'''

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import FootprintError

THRESHOLD_DIVISOR = math.sqrt(3.8)


@dataclass(frozen=True)
class Footprint:
    length: float
    width: float
    circle_centers: tuple

    def __post_init__(self):
        if not self.length >= self.width > 0:
            raise FootprintError(f"need length >= width > 0, got {self.length}/{self.width}")
        centers = np.asarray(self.circle_centers, dtype=np.float64)
        half = (self.length - self.width) / 2
        if len(centers) == 0:
            raise FootprintError("footprint needs at least one circle")
        if np.any(np.abs(centers) > half + 1e-12) or not np.allclose(np.sort(centers), -np.sort(centers)[::-1]):
            raise FootprintError(f"circle centres {self.circle_centers} not symmetric within +-{half}")

    @classmethod
    def from_dimensions(cls, length, width):
        if not length >= width > 0:
            raise FootprintError(f"need length >= width > 0, got {length}/{width}")
        count = max(1, round(length / width))
        half = (length - width) / 2
        centers = np.linspace(-half, half, count) if count > 1 else np.zeros(1)
        return cls(float(length), float(width), tuple(float(c) for c in centers))

    @classmethod
    def for_track(cls, track):
        return cls.from_dimensions(track.length, track.width)

    @property
    def offsets(self):
        return np.asarray(self.circle_centers, dtype=np.float64)


class Pose(NamedTuple):
    position: np.ndarray
    yaw: float


def collision_threshold(width_i, width_j):
    if width_i <= 0 or width_j <= 0:
        raise FootprintError(f"widths must be positive, got {width_i} and {width_j}")
    return (width_i + width_j) / THRESHOLD_DIVISOR


def circle_positions(positions, yaws, footprint):
    """(T, 2) positions and (T,) yaws -> (T, circles, 2) circle centres."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    yaws = np.asarray(yaws, dtype=np.float64).reshape(-1)
    heading = np.stack([np.cos(yaws), np.sin(yaws)], axis=-1)
    return positions[:, None, :] + footprint.offsets[None, :, None] * heading[:, None, :]


def collisions_same_time(positions_i, yaws_i, foot_i, positions_j, yaws_j, foot_j):
    '''
    Per-timestep collision flags for two pose sequences of equal length.
    '''
    ci = circle_positions(positions_i, yaws_i, foot_i)
    cj = circle_positions(positions_j, yaws_j, foot_j)
    dist = np.linalg.norm(ci[:, :, None, :] - cj[:, None, :, :], axis=-1)
    return (dist < collision_threshold(foot_i.width, foot_j.width)).any(axis=(1, 2))


def collision_matrix(positions_i, yaws_i, foot_i, positions_j, yaws_j, foot_j):
    '''
    Collision flags for every pair of timesteps: entry (a, b) compares pose a
    of agent i with pose b of agent j.
    '''
    ci = circle_positions(positions_i, yaws_i, foot_i)
    cj = circle_positions(positions_j, yaws_j, foot_j)
    if len(ci) == 0 or len(cj) == 0:
        return np.zeros((len(ci), len(cj)), dtype=bool)
    dist = cdist(ci.reshape(-1, 2), cj.reshape(-1, 2))
    dist = dist.reshape(ci.shape[0], ci.shape[1], cj.shape[0], cj.shape[1])
    return (dist < collision_threshold(foot_i.width, foot_j.width)).any(axis=(1, 3))


def poses_collide(pose_i, foot_i, pose_j, foot_j):
    return bool(collisions_same_time(
        pose_i.position, pose_i.yaw, foot_i,
        pose_j.position, pose_j.yaw, foot_j,
    )[0])
