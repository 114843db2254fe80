'''
Canonical scene representation: agent tracks, history preprocessing,
scene normalization and the one-JSON-document-per-scene file format.

Each track stores its states as a (T, 6) float64 array with columns
[x, y, vx, vy, yaw, valid]; timesteps 0..T_obs-1 are the past and
T_obs..T_obs+T_fut-1 the future.
'''

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import AnchorError, SceneError

logger = logging.getLogger(__name__)

X, Y, VX, VY, YAW, VALID = range(6)
STATE_WIDTH = 6
HISTORY_WIDTH = 5  # [dx, dy, vx, vy, yaw]
DEFAULT_DT = 0.1
# enough to round-trip any float64
FLOAT_DIGITS = 17


class AgentType(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    BICYCLIST = "bicyclist"
    MOTORCYCLIST = "motorcyclist"
    BUS = "bus"

    @property
    def index(self):
        return AGENT_TYPES.index(self)


AGENT_TYPES = list(AgentType)

# length / width in meters
DEFAULT_FOOTPRINTS = {
    AgentType.VEHICLE: (4.0, 2.0),
    AgentType.PEDESTRIAN: (0.7, 0.7),
    AgentType.BICYCLIST: (2.0, 0.7),
    AgentType.MOTORCYCLIST: (2.0, 0.7),
    AgentType.BUS: (12.5, 2.5),
}


def wrap_angle(angle):
    """Map angles into [-pi, pi)."""
    wrapped = (np.asarray(angle, dtype=np.float64) + np.pi) % (2 * np.pi) - np.pi
    wrapped = np.where(wrapped >= np.pi, wrapped - 2 * np.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


class AgentState(NamedTuple):
    x: float
    y: float
    vx: float
    vy: float
    yaw: float
    valid: bool

    @property
    def position(self):
        return np.array([self.x, self.y])

    @property
    def velocity(self):
        return np.array([self.vx, self.vy])


def _state_array(states, length, what):
    arr = np.array(states, dtype=np.float64)
    if arr.shape != (length, STATE_WIDTH):
        raise SceneError(f"{what} must have shape ({length}, {STATE_WIDTH}), got {arr.shape}")
    valid = arr[:, VALID] != 0
    arr[:, VALID] = valid
    yaw = arr[valid, YAW]
    if np.any(~np.isfinite(arr[valid])) or np.any((yaw < -np.pi) | (yaw >= np.pi)):
        raise SceneError(f"{what} has non-finite values or yaw outside [-pi, pi)")
    return arr


@dataclass(eq=False)
class AgentTrack:
    agent_id: int
    agent_type: AgentType
    past: np.ndarray
    future: np.ndarray = None
    length: float = None
    width: float = None
    evaluate: bool = True

    def __post_init__(self):
        self.agent_id = int(self.agent_id)
        self.agent_type = AgentType(self.agent_type)
        default_length, default_width = DEFAULT_FOOTPRINTS[self.agent_type]
        self.length = default_length if self.length is None else float(self.length)
        self.width = default_width if self.width is None else float(self.width)
        if not self.length >= self.width > 0:
            raise SceneError(
                f"agent {self.agent_id}: need length >= width > 0, got {self.length}/{self.width}"
            )
        self.past = _state_array(self.past, len(self.past), f"agent {self.agent_id} past")
        if self.future is not None:
            self.future = _state_array(self.future, len(self.future), f"agent {self.agent_id} future")
        self.evaluate = bool(self.evaluate)

    @property
    def t_obs(self):
        return len(self.past)

    @property
    def has_future(self):
        return self.future is not None

    @property
    def present(self):
        return AgentState(*self.past[-1, :VALID], bool(self.past[-1, VALID]))

    def state(self, t):
        """State at absolute timestep t (past then future)."""
        if t < self.t_obs:
            row = self.past[t]
        elif self.future is not None:
            row = self.future[t - self.t_obs]
        else:
            raise SceneError(f"agent {self.agent_id} has no future")
        return AgentState(*row[:VALID], bool(row[VALID]))

    def __eq__(self, other):
        if not isinstance(other, AgentTrack):
            return NotImplemented
        if (self.future is None) != (other.future is None):
            return False
        return (
            self.agent_id == other.agent_id
            and self.agent_type == other.agent_type
            and self.length == other.length
            and self.width == other.width
            and self.evaluate == other.evaluate
            and np.array_equal(self.past, other.past)
            and (self.future is None or np.array_equal(self.future, other.future))
        )


def _dumps(value):
    '''
    json.dumps with every finite float written to FLOAT_DIGITS significant
    digits, trailing zeros kept.
    '''
    if isinstance(value, float) and np.isfinite(value):
        return format(value, f"#.{FLOAT_DIGITS}g")
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_dumps(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_dumps(v) for v in value) + "]"
    return json.dumps(value)


@dataclass(eq=False)
class Scene:
    scene_id: str
    agents: list
    t_obs: int
    t_fut: int
    dt: float = DEFAULT_DT
    ego_id: int = None

    def __post_init__(self):
        self.agents = sorted(self.agents, key=lambda a: a.agent_id)
        ids = [a.agent_id for a in self.agents]
        if ids != list(range(len(ids))):
            raise SceneError(f"scene {self.scene_id}: agent ids must be unique and dense in [0, N), got {ids}")
        if self.dt <= 0:
            raise SceneError(f"scene {self.scene_id}: dt must be positive")
        for agent in self.agents:
            if agent.t_obs != self.t_obs:
                raise SceneError(f"scene {self.scene_id}: agent {agent.agent_id} has {agent.t_obs} past steps, expected {self.t_obs}")
            if agent.future is not None and len(agent.future) != self.t_fut:
                raise SceneError(f"scene {self.scene_id}: agent {agent.agent_id} has {len(agent.future)} future steps, expected {self.t_fut}")
        if self.ego_id is not None and self.ego_id not in ids:
            raise SceneError(f"scene {self.scene_id}: unknown ego {self.ego_id}")

    @property
    def n_agents(self):
        return len(self.agents)

    def agent(self, agent_id):
        return self.agents[agent_id]

    def present_positions(self):
        return np.array([a.past[-1, X:VX] for a in self.agents]).reshape(-1, 2)

    def present_valid(self):
        return np.array([a.past[-1, VALID] != 0 for a in self.agents], dtype=bool)

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.t_obs == other.t_obs
            and self.t_fut == other.t_fut
            and self.dt == other.dt
            and self.ego_id == other.ego_id
            and self.agents == other.agents
        )

    def to_dict(self):
        agents = []
        for a in self.agents:
            rows = a.past if a.future is None else np.concatenate([a.past, a.future])
            states = [
                {"t": t, "x": float(r[X]), "y": float(r[Y]), "vx": float(r[VX]),
                 "vy": float(r[VY]), "yaw": float(r[YAW]), "valid": bool(r[VALID])}
                for t, r in enumerate(rows)
            ]
            agents.append({
                "agent_id": a.agent_id,
                "agent_type": a.agent_type.value,
                "length": a.length,
                "width": a.width,
                "states": states,
                "evaluate": a.evaluate,
            })
        doc = {"scene_id": self.scene_id, "dt": self.dt, "T_obs": self.t_obs, "T_fut": self.t_fut, "agents": agents}
        if self.ego_id is not None:
            doc["ego_id"] = self.ego_id
        return doc

    @classmethod
    def from_dict(cls, doc):
        try:
            t_obs, t_fut = int(doc["T_obs"]), int(doc["T_fut"])
            agents = []
            for a in doc["agents"]:
                rows = np.zeros((t_obs + t_fut, STATE_WIDTH))
                seen = np.zeros(t_obs + t_fut, dtype=bool)
                for s in a["states"]:
                    t = int(s["t"])
                    rows[t] = [s["x"], s["y"], s["vx"], s["vy"], s["yaw"], bool(s["valid"])]
                    seen[t] = True
                future = rows[t_obs:] if seen[t_obs:].any() else None
                agents.append(AgentTrack(
                    agent_id=a["agent_id"],
                    agent_type=a["agent_type"],
                    past=rows[:t_obs],
                    future=future,
                    length=a.get("length"),
                    width=a.get("width"),
                    evaluate=a.get("evaluate", True),
                ))
            return cls(
                scene_id=str(doc["scene_id"]),
                agents=agents,
                t_obs=t_obs,
                t_fut=t_fut,
                dt=float(doc.get("dt", DEFAULT_DT)),
                ego_id=doc.get("ego_id"),
            )
        except (KeyError, IndexError, TypeError, ValueError) as e:
            if isinstance(e, SceneError):
                raise
            raise SceneError(f"malformed scene document: {e!r}") from e

    def to_json(self):
        return _dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def save_corpus(scenes, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for scene in scenes:
        (directory / f"{scene.scene_id}.json").write_text(scene.to_json())
    return directory


def load_corpus(directory):
    paths = sorted(Path(directory).glob("*.json"))
    if not paths:
        raise SceneError(f"no scene documents in {directory}")
    return [Scene.from_json(p.read_text()) for p in paths]


# preprocessing

@dataclass
class PreprocessedHistory:
    features: np.ndarray  # (N, T_obs, 5): [dx, dy, vx, vy, yaw]
    valid: np.ndarray  # (N, T_obs) bool


def preprocess(scene):
    past = np.stack([a.past for a in scene.agents]) if scene.agents else np.zeros((0, scene.t_obs, STATE_WIDTH))
    valid = past[..., VALID] != 0
    displacement = np.zeros(past.shape[:2] + (2,))
    displacement[:, 1:] = past[:, 1:, X:VX] - past[:, :-1, X:VX]
    displacement[:, 1:][~(valid[:, 1:] & valid[:, :-1])] = 0.0
    features = np.concatenate([displacement, past[..., VX:VALID]], axis=-1)
    features[~valid] = 0.0
    return PreprocessedHistory(features=features, valid=valid)


@dataclass(frozen=True)
class RigidTransform:
    '''
    Maps world coordinates into a frame centred on `origin` and rotated by
    -`angle`, so a pose at (origin, angle) becomes (0, 0, 0).
    '''
    origin: tuple
    angle: float

    @classmethod
    def identity(cls):
        return cls((0.0, 0.0), 0.0)

    @property
    def rotation(self):
        c, s = np.cos(self.angle), np.sin(self.angle)
        # rotation by -angle
        return np.array([[c, s], [-s, c]])

    def apply_points(self, points):
        return (np.asarray(points) - np.asarray(self.origin)) @ self.rotation.T

    def apply_vectors(self, vectors):
        return np.asarray(vectors) @ self.rotation.T

    def apply_yaws(self, yaws):
        return wrap_angle(np.asarray(yaws) - self.angle)

    def invert_points(self, points):
        return np.asarray(points) @ self.rotation + np.asarray(self.origin)

    def invert_vectors(self, vectors):
        return np.asarray(vectors) @ self.rotation

    def invert_yaws(self, yaws):
        return wrap_angle(np.asarray(yaws) + self.angle)


def _transform_states(states, transform, inverse=False):
    if states is None:
        return None
    out = states.copy()
    if inverse:
        out[:, X:VX] = transform.invert_points(states[:, X:VX])
        out[:, VX:YAW] = transform.invert_vectors(states[:, VX:YAW])
        out[:, YAW] = transform.invert_yaws(states[:, YAW])
    else:
        out[:, X:VX] = transform.apply_points(states[:, X:VX])
        out[:, VX:YAW] = transform.apply_vectors(states[:, VX:YAW])
        out[:, YAW] = transform.apply_yaws(states[:, YAW])
    return out


def transform_scene(scene, transform, inverse=False):
    agents = [
        AgentTrack(
            agent_id=a.agent_id,
            agent_type=a.agent_type,
            past=_transform_states(a.past, transform, inverse),
            future=_transform_states(a.future, transform, inverse),
            length=a.length,
            width=a.width,
            evaluate=a.evaluate,
        )
        for a in scene.agents
    ]
    return Scene(scene.scene_id, agents, scene.t_obs, scene.t_fut, scene.dt, scene.ego_id)


def normalize(scene, anchor_agent):
    if not 0 <= anchor_agent < scene.n_agents:
        raise AnchorError(f"scene {scene.scene_id}: unknown anchor agent {anchor_agent}")
    present = scene.agent(anchor_agent).present
    if not present.valid:
        raise AnchorError(f"scene {scene.scene_id}: anchor {anchor_agent} has no valid present state")
    if present.x == 0.0 and present.y == 0.0 and present.yaw == 0.0:
        transform = RigidTransform.identity()
    else:
        transform = RigidTransform((present.x, present.y), present.yaw)
    return transform_scene(scene, transform), transform


def pick_eval_anchor(scene):
    valid = scene.present_valid()
    if not valid.any():
        raise AnchorError(f"scene {scene.scene_id}: no agent has a valid present state")
    ids = np.flatnonzero(valid)
    positions = scene.present_positions()[ids]
    dist = np.linalg.norm(positions - positions.mean(axis=0), axis=1)
    # lowest id among (numerically) tied minima
    return int(ids[np.flatnonzero(dist <= dist.min() + 1e-9)[0]])


def pick_train_anchor(scene, rng):
    ids = np.flatnonzero(scene.present_valid())
    if len(ids) == 0:
        raise AnchorError(f"scene {scene.scene_id}: no agent has a valid present state")
    return int(rng.choice(ids))


def evaluated_agents(scene):
    '''
    Agents flagged for evaluation that have a valid state at both the
    present and the final future timestep (present only for tracks that
    carry no future, as at inference).
    '''
    return [
        a.agent_id
        for a in scene.agents
        if a.evaluate and a.past[-1, VALID] and (a.future is None or a.future[-1, VALID])
    ]


@dataclass
class SceneTensors:
    scene_id: str
    agent_ids: np.ndarray
    types: np.ndarray
    lengths: np.ndarray
    widths: np.ndarray
    history: np.ndarray  # (N, T_obs, 5)
    history_valid: np.ndarray  # (N, T_obs)
    present: np.ndarray  # (N, 2)
    present_yaw: np.ndarray  # (N,)
    present_valid: np.ndarray  # (N,)
    future: np.ndarray  # (N, T_fut, 2), zeros where unknown
    future_valid: np.ndarray  # (N, T_fut)
    evaluate: np.ndarray  # (N,) bool
    transform: RigidTransform

    @property
    def n_agents(self):
        return len(self.agent_ids)

    def evaluated_pairs(self):
        ids = np.flatnonzero(self.evaluate)
        return [(int(m), int(n)) for i, m in enumerate(ids) for n in ids[i + 1:]]


def scene_tensors(scene, anchor_id):
    normed, transform = normalize(scene, anchor_id)
    history = preprocess(normed)
    n = normed.n_agents
    future = np.zeros((n, scene.t_fut, 2))
    future_valid = np.zeros((n, scene.t_fut), dtype=bool)
    for a in normed.agents:
        if a.future is not None:
            future[a.agent_id] = a.future[:, X:VX]
            future_valid[a.agent_id] = a.future[:, VALID] != 0
    evaluate = np.zeros(n, dtype=bool)
    evaluate[evaluated_agents(normed)] = True
    return SceneTensors(
        scene_id=scene.scene_id,
        agent_ids=np.arange(n),
        types=np.array([a.agent_type.index for a in normed.agents], dtype=np.int64),
        lengths=np.array([a.length for a in normed.agents]),
        widths=np.array([a.width for a in normed.agents]),
        history=history.features,
        history_valid=history.valid,
        present=normed.present_positions(),
        present_yaw=np.array([a.past[-1, YAW] for a in normed.agents]),
        present_valid=normed.present_valid(),
        future=future,
        future_valid=future_valid,
        evaluate=evaluate,
        transform=transform,
    )
