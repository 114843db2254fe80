import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dagjoint.config import TrainConfig  # noqa: E402
from dagjoint.scene import AgentTrack, Scene, wrap_angle  # noqa: E402


def straight_states(start, velocity, n, dt=0.1, t0=0):
    '''(n, 6) states of constant-velocity motion from `start` at step t0.'''
    start = np.asarray(start, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    steps = np.arange(t0, t0 + n)[:, None]
    states = np.zeros((n, 6))
    states[:, 0:2] = start + velocity * dt * steps
    states[:, 2:4] = velocity
    states[:, 4] = wrap_angle(np.arctan2(velocity[1], velocity[0])) if np.any(velocity) else 0.0
    states[:, 5] = 1.0
    return states


def make_track(agent_id, start, velocity, t_obs=10, t_fut=30, agent_type="vehicle", dt=0.1, **kwargs):
    states = straight_states(start, velocity, t_obs + t_fut, dt, t0=-(t_obs - 1))
    return AgentTrack(agent_id, agent_type, states[:t_obs], states[t_obs:], **kwargs)


def make_scene(tracks, t_obs=10, t_fut=30, scene_id="scene", dt=0.1, ego_id=None):
    return Scene(scene_id, tracks, t_obs, t_fut, dt, ego_id)


@pytest.fixture
def tiny_config():
    return TrainConfig(
        seed=0, k=2, k_prop=3, hidden=8, gru_hidden=8, type_embed=4, t_obs=4, t_fut=5,
        batch_size=4, epochs_stage1=1, epochs_stage2=1, decay_epochs=(1,), progress=False,
    )


@pytest.fixture
def crossing_scene():
    '''
    Agent 0 crosses the origin heading +x at future step 10; agent 1 heading
    +y reaches it at future step 15; agent 2 drives on a far parallel lane.
    '''
    v = 10.0
    tracks = [
        make_track(0, (-v * 1.1, 0.0), (v, 0.0)),
        make_track(1, (0.0, -v * 1.6), (0.0, v)),
        make_track(2, (-50.0, 200.0), (v, 0.0)),
    ]
    return make_scene(tracks, scene_id="crossing")
