'''
Joint and interactive evaluation metrics.

All scene-level metrics take a TrajectoryBundle (K, A, T_fut, 2) and the
ground truth of the same agents in the same (world) frame. Corpus values
are unweighted means over scenes; interactive metrics skip scenes without
qualifying agents.
'''

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .collision import Footprint, collisions_same_time
from .errors import MetricError
from .labeling import interactive_agents
from .scene import VALID, VX, X, YAW, evaluated_agents

logger = logging.getLogger(__name__)

LATERAL_THRESHOLD = 1.0
ENDPOINT_THRESHOLD = 2.0
STATIONARY_STEP = 1e-6
CV_FILTERS = (3.0, 5.0)


def longitudinal_threshold(speed):
    '''
    1 m up to 1.4 m/s, rising linearly to 2 m at 11 m/s, 2 m beyond.
    '''
    if speed <= 1.4:
        return 1.0
    if speed <= 11.0:
        return 1.0 + (speed - 1.4) / (11.0 - 1.4)
    return 2.0


def constant_velocity_rollout(track, t_fut=None, dt=0.1):
    '''
    Present position plus the mean of the observed (valid) velocities times
    dt * s, for s = 1..T_fut.
    '''
    valid = track.past[:, VALID] != 0
    if not valid.any():
        raise MetricError(f"agent {track.agent_id} has no valid observed velocity")
    if t_fut is None:
        if track.future is None:
            raise MetricError(f"agent {track.agent_id}: horizon unknown without a future")
        t_fut = len(track.future)
    v_avg = track.past[valid, VX:YAW].mean(axis=0)
    steps = np.arange(1, t_fut + 1)[:, None]
    return track.past[-1, X:VX] + v_avg * dt * steps


@dataclass
class GroundTruth:
    '''
    Futures of the evaluated agents: positions (A, T, 2), velocities,
    yaws, validity, and each agent's constant-velocity FDE (nan when it
    cannot be rolled out).
    '''
    agent_ids: list
    positions: np.ndarray
    velocities: np.ndarray
    yaws: np.ndarray
    valid: np.ndarray
    cv_fde: np.ndarray = None

    @classmethod
    def from_scene(cls, scene, agent_ids=None):
        ids = evaluated_agents(scene) if agent_ids is None else list(agent_ids)
        futures = []
        for a in ids:
            track = scene.agent(a)
            if track.future is None:
                raise MetricError(f"scene {scene.scene_id}: agent {a} has no future")
            futures.append(track.future)
        futures = np.stack(futures) if futures else np.zeros((0, scene.t_fut, 6))
        cv_fde = []
        for a in ids:
            track = scene.agent(a)
            if (track.past[:, VALID] != 0).any():
                rollout = constant_velocity_rollout(track, scene.t_fut, scene.dt)
                cv_fde.append(float(np.linalg.norm(rollout[-1] - track.future[-1, X:VX])))
            else:
                cv_fde.append(np.nan)
        return cls(
            agent_ids=ids,
            positions=futures[..., X:VX],
            velocities=futures[..., VX:YAW],
            yaws=futures[..., YAW],
            valid=futures[..., VALID] != 0,
            cv_fde=np.array(cv_fde),
        )

    def subset(self, agent_ids):
        rows = [self.agent_ids.index(a) for a in agent_ids]
        return GroundTruth(
            list(agent_ids), self.positions[rows], self.velocities[rows], self.yaws[rows],
            self.valid[rows], None if self.cv_fde is None else self.cv_fde[rows],
        )


def _aligned(bundle, truth):
    missing = sorted(set(truth.agent_ids) - set(bundle.agent_ids))
    if missing:
        raise MetricError(f"bundle lacks predictions for agents {missing}")
    if bundle.t_fut != truth.positions.shape[1]:
        raise MetricError(f"bundle horizon {bundle.t_fut} != truth horizon {truth.positions.shape[1]}")
    return bundle.select(truth.agent_ids).trajectories


def displacement_errors(bundle, truth):
    '''
    Per modality: FDE averaged over agents (K,), ADE averaged over valid
    (agent, timestep) entries (K,), and the per-agent FDE (K, A).
    '''
    pred = _aligned(bundle, truth)
    dist = np.linalg.norm(pred - truth.positions[None], axis=-1)
    agent_fde = dist[:, :, -1]
    valid = truth.valid[None].astype(np.float64)
    fde = agent_fde.mean(axis=1) if agent_fde.shape[1] else np.zeros(len(pred))
    count = valid.sum()
    ade = (dist * valid).sum(axis=(1, 2)) / count if count else np.zeros(len(pred))
    return fde, ade, agent_fde


def joint_min_fde_ade(bundle, truth):
    """(minFDE, minADE, best_k); best_k is the argmin-FDE modality, lowest k on ties."""
    fde, ade, _ = displacement_errors(bundle, truth)
    best_k = int(np.argmin(fde))
    return float(fde[best_k]), float(ade.min()), best_k


def miss(pred_endpoint, truth_endpoint, truth_final_velocity, truth_final_yaw):
    '''
    Error split into the ground-truth final heading frame: a miss when
    |lateral| > 1 m or |longitudinal| > the speed-dependent threshold.
    '''
    err = np.asarray(pred_endpoint, dtype=np.float64) - np.asarray(truth_endpoint, dtype=np.float64)
    c, s = np.cos(truth_final_yaw), np.sin(truth_final_yaw)
    longitudinal = err[0] * c + err[1] * s
    lateral = -err[0] * s + err[1] * c
    speed = float(np.linalg.norm(truth_final_velocity))
    return bool(abs(lateral) > LATERAL_THRESHOLD or abs(longitudinal) > longitudinal_threshold(speed))


def miss_endpoint(pred_endpoint, truth_endpoint, threshold=ENDPOINT_THRESHOLD):
    err = np.asarray(pred_endpoint, dtype=np.float64) - np.asarray(truth_endpoint, dtype=np.float64)
    return bool(np.linalg.norm(err) > threshold)


def miss_matrix(bundle, truth, rule="interaction"):
    """(K, A) miss flags."""
    pred = _aligned(bundle, truth)
    flags = np.zeros(pred.shape[:2], dtype=bool)
    for k in range(pred.shape[0]):
        for a in range(pred.shape[1]):
            if rule == "interaction":
                flags[k, a] = miss(pred[k, a, -1], truth.positions[a, -1], truth.velocities[a, -1], truth.yaws[a, -1])
            elif rule == "endpoint":
                flags[k, a] = miss_endpoint(pred[k, a, -1], truth.positions[a, -1])
            else:
                raise MetricError(f"unknown miss rule {rule!r}")
    return flags


def scene_miss_rate(bundle, truth, rule="interaction"):
    flags = miss_matrix(bundle, truth, rule)
    if flags.shape[1] == 0:
        return 0.0
    return float(flags.mean(axis=1).min())


def predicted_headings(trajectory, present_yaw):
    '''
    Yaw at step t from the displacement t -> t+1; the final step and
    stationary steps (displacement < 1e-6 m) carry the last defined yaw,
    which defaults to the present yaw.
    '''
    trajectory = np.asarray(trajectory, dtype=np.float64)
    disp = np.diff(trajectory, axis=0)
    yaw = np.arctan2(disp[:, 1], disp[:, 0])
    yaw[np.linalg.norm(disp, axis=1) < STATIONARY_STEP] = np.nan
    yaw = np.append(yaw, np.nan)
    return pd.Series(yaw).ffill().fillna(float(present_yaw)).to_numpy()


def collision_flags(bundle, scene, ego_id=None):
    '''
    Per modality: (any pair collides, any pair without the ego collides).
    '''
    ids = bundle.agent_ids
    feet = {a: Footprint.for_track(scene.agent(a)) for a in ids}
    present_yaw = {a: scene.agent(a).past[-1, YAW] for a in ids}
    collide = np.zeros(bundle.k, dtype=bool)
    cross = np.zeros(bundle.k, dtype=bool)
    for k in range(bundle.k):
        yaws = {a: predicted_headings(bundle.trajectories[k, i], present_yaw[a]) for i, a in enumerate(ids)}
        for i, a in enumerate(ids):
            for j in range(i + 1, len(ids)):
                b = ids[j]
                # nothing left to learn from this pair
                if cross[k] or (collide[k] and ego_id in (a, b)):
                    continue
                hit = collisions_same_time(
                    bundle.trajectories[k, i], yaws[a], feet[a],
                    bundle.trajectories[k, j], yaws[b], feet[b],
                ).any()
                if hit:
                    collide[k] = True
                    if ego_id not in (a, b):
                        cross[k] = True
    return collide, cross


def scene_collision_rate(bundle, scene, ego_id=None):
    """(SCR, CrossCol): fraction of modalities with a collision, without ego pairs for CrossCol."""
    collide, cross = collision_flags(bundle, scene, ego_id)
    return float(collide.mean()), float(cross.mean())


def conditional_miss_rate(bundle, truth, scene, ego_id=None, rule="interaction"):
    '''
    Scene miss rate over the modalities without non-ego collisions; 1 when
    every modality has one.
    '''
    _, cross = collision_flags(bundle, scene, ego_id)
    keep = ~cross
    if not keep.any():
        return 1.0
    flags = miss_matrix(bundle, truth, rule)
    if flags.shape[1] == 0:
        return 0.0
    return float(flags[keep].mean(axis=1).min())


def interactive_agent_subset(truth, gt_graph, d_filter=0.0):
    '''
    Evaluated agents incident to a ground-truth edge, minus (for d > 0)
    those a constant-velocity model gets within d meters at the endpoint.
    '''
    agents = interactive_agents(gt_graph)
    subset = []
    for i, a in enumerate(truth.agent_ids):
        if a not in agents:
            continue
        if d_filter > 0 and not truth.cv_fde[i] >= d_filter:
            continue
        subset.append(a)
    return subset


def interactive_metrics(bundle, truth, gt_graph, d_filter=0.0):
    '''
    FDE / ADE of the globally best modality (by minFDE over all evaluated
    agents) over the interactive subset; None when the subset is empty.
    '''
    _, _, best_k = joint_min_fde_ade(bundle, truth)
    subset = interactive_agent_subset(truth, gt_graph, d_filter)
    if not subset:
        return None
    sub_truth = truth.subset(subset)
    fde, ade, _ = displacement_errors(bundle.select(subset), sub_truth)
    return float(fde[best_k]), float(ade[best_k])


def constant_velocity_fde_table(corpus, graphs, thresholds=(0.0,) + CV_FILTERS):
    '''
    Number of interactive agents whose constant-velocity FDE is at least d
    meters, per threshold d.
    '''
    counts = np.zeros(len(thresholds), dtype=int)
    for scene, graph in zip(corpus, graphs):
        truth = GroundTruth.from_scene(scene)
        for i, d in enumerate(thresholds):
            counts[i] += len(interactive_agent_subset(truth, graph, d))
    return pd.DataFrame({"d": list(thresholds), "Interactive Agents": counts})


# reports

COLUMNS = [
    "minFDE", "minADE", "SMR", "SCR", "CrossCol", "CMR",
    "iminFDE", "iminADE", "iminFDE_3", "iminADE_3", "iminFDE_5", "iminADE_5",
]


def scene_metrics(bundle, scene, gt_graph, ego_id=None, rule="interaction"):
    '''
    One row of every metric for a scene. `bundle` must hold world-frame
    predictions for (at least) the scene's evaluated agents.
    '''
    truth = GroundTruth.from_scene(scene)
    bundle = bundle.select(truth.agent_ids)
    min_fde, min_ade, best_k = joint_min_fde_ade(bundle, truth)
    scr, crosscol = scene_collision_rate(bundle, scene, ego_id)
    row = {
        "scene_id": scene.scene_id,
        "minFDE": min_fde,
        "minADE": min_ade,
        "SMR": scene_miss_rate(bundle, truth, rule),
        "SCR": scr,
        "CrossCol": crosscol,
        "CMR": conditional_miss_rate(bundle, truth, scene, ego_id, rule),
        "best_k": best_k,
    }
    for d, suffix in ((0.0, ""), (3.0, "_3"), (5.0, "_5")):
        result = interactive_metrics(bundle, truth, gt_graph, d)
        row[f"iminFDE{suffix}"], row[f"iminADE{suffix}"] = result if result is not None else (np.nan, np.nan)
    return row


@dataclass
class MetricReport:
    values: dict
    n_scenes: int
    per_scene: pd.DataFrame = field(default=None, repr=False)

    @classmethod
    def aggregate(cls, rows):
        per_scene = pd.DataFrame(rows)
        values = {}
        for col in COLUMNS:
            series = per_scene[col].dropna() if col in per_scene else pd.Series(dtype=float)
            values[col] = float(series.mean()) if len(series) else float("nan")
        return cls(values, len(per_scene), per_scene)

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self):
        doc = {"n_scenes": self.n_scenes, "metrics": {k: (None if np.isnan(v) else v) for k, v in self.values.items()}}
        if self.per_scene is not None:
            doc["per_scene"] = json.loads(self.per_scene.to_json(orient="records"))
        return doc

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc):
        values = {k: (float("nan") if v is None else float(v)) for k, v in doc["metrics"].items()}
        per_scene = pd.DataFrame(doc["per_scene"]) if "per_scene" in doc else None
        return cls(values, int(doc["n_scenes"]), per_scene)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_table(self, name="model"):
        return pd.DataFrame([self.values], index=[name])[COLUMNS].to_string(float_format=lambda v: f"{v:.3f}")
