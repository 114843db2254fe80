'''
Ground-truth pairwise interaction labels from future trajectories.

sparse: collision check over all future timestep pairs within eps_I of each
        other; the agent reaching the conflict point first is the influencer.
dense:  any pair of future positions closer than the sum of the two agent
        lengths; same first-arrival rule for the direction.
'''

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from .collision import Footprint, collision_matrix
from .errors import GraphError, LabelingError
from .scene import DEFAULT_DT, VALID, X, VX, YAW, evaluated_agents

logger = logging.getLogger(__name__)

DEFAULT_EPS_I = 2.5


class EdgeLabel(IntEnum):
    NO_INTERACTION = 0
    M_INFLUENCES_N = 1
    N_INFLUENCES_M = 2

    @property
    def key(self):
        return self.name.lower()


class Heuristic(str, Enum):
    SPARSE = "sparse"
    DENSE = "dense"


@dataclass
class InteractionGraph:
    n_agents: int
    labels: dict
    probabilities: dict = field(default=None)

    def __post_init__(self):
        self.labels = {tuple(map(int, k)): EdgeLabel(v) for k, v in sorted(self.labels.items())}
        for m, n in self.labels:
            if not 0 <= m < n < self.n_agents:
                raise GraphError(f"pair ({m}, {n}) is not canonical for {self.n_agents} agents")
        if self.probabilities is not None:
            probs = {}
            for pair, p in sorted(self.probabilities.items()):
                p = np.asarray(p, dtype=np.float64)
                if p.shape != (3,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
                    raise GraphError(f"probabilities for {pair} not on the simplex: {p}")
                probs[tuple(map(int, pair))] = p
            self.probabilities = probs

    def edges(self):
        """Directed (influencer, reactor) pairs."""
        out = []
        for (m, n), label in self.labels.items():
            if label == EdgeLabel.M_INFLUENCES_N:
                out.append((m, n))
            elif label == EdgeLabel.N_INFLUENCES_M:
                out.append((n, m))
        return out

    @property
    def n_edges(self):
        return len(self.edges())

    def to_dict(self):
        edges = []
        for (m, n), label in self.labels.items():
            entry = {"m": m, "n": n, "label": label.key}
            if self.probabilities is not None and (m, n) in self.probabilities:
                entry["probs"] = [float(p) for p in self.probabilities[(m, n)]]
            edges.append(entry)
        return {"n_agents": self.n_agents, "edges": edges}

    @classmethod
    def from_dict(cls, doc):
        try:
            labels = {(e["m"], e["n"]): EdgeLabel[e["label"].upper()] for e in doc["edges"]}
            probs = {(e["m"], e["n"]): e["probs"] for e in doc["edges"] if "probs" in e}
            return cls(int(doc["n_agents"]), labels, probs or None)
        except (KeyError, TypeError) as e:
            raise GraphError(f"malformed interaction graph document: {e!r}") from e

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def window_steps(eps_i, dt):
    # small slack so that e.g. 2.5 / 0.1 does not floor to 24
    return int(math.floor(eps_i / dt + 1e-9))


def _future(track):
    if track.future is None:
        raise LabelingError(f"agent {track.agent_id} has no future trajectory")
    return track.future[:, X:VX], track.future[:, YAW], track.future[:, VALID] != 0


def _first_pair(flags, id_m, id_n):
    '''
    First colliding timestep pair: smallest min(t_m, t_n), then smallest
    max(t_m, t_n), then the earlier arrival of the lower agent id (smaller
    t_m for a canonical pair), so the choice does not depend on argument
    order.
    '''
    idx = np.argwhere(flags)
    if len(idx) == 0:
        return None
    t_m, t_n = idx[:, 0], idx[:, 1]
    lower = t_m if id_m < id_n else t_n
    order = np.lexsort((lower, np.maximum(t_m, t_n), np.minimum(t_m, t_n)))
    return int(t_m[order[0]]), int(t_n[order[0]])


def _direction(first, id_m, id_n):
    if first is None:
        return EdgeLabel.NO_INTERACTION
    t_m, t_n = first
    if t_m < t_n or (t_m == t_n and id_m < id_n):
        return EdgeLabel.M_INFLUENCES_N
    return EdgeLabel.N_INFLUENCES_M


def label_pair_sparse(track_m, track_n, eps_i=DEFAULT_EPS_I, dt=DEFAULT_DT):
    if eps_i < 0:
        raise LabelingError(f"eps_I must be non-negative, got {eps_i}")
    pos_m, yaw_m, valid_m = _future(track_m)
    pos_n, yaw_n, valid_n = _future(track_n)
    flags = collision_matrix(
        pos_m, yaw_m, Footprint.for_track(track_m),
        pos_n, yaw_n, Footprint.for_track(track_n),
    )
    t_m, t_n = np.indices(flags.shape)
    flags &= np.abs(t_m - t_n) <= window_steps(eps_i, dt)
    flags &= valid_m[:, None] & valid_n[None, :]
    return _direction(_first_pair(flags, track_m.agent_id, track_n.agent_id), track_m.agent_id, track_n.agent_id)


def label_pair_dense(track_m, track_n):
    pos_m, _, valid_m = _future(track_m)
    pos_n, _, valid_n = _future(track_n)
    flags = cdist(pos_m, pos_n) <= track_m.length + track_n.length
    flags &= valid_m[:, None] & valid_n[None, :]
    return _direction(_first_pair(flags, track_m.agent_id, track_n.agent_id), track_m.agent_id, track_n.agent_id)


def build_ground_truth_graph(scene, heuristic=Heuristic.SPARSE, eps_i=DEFAULT_EPS_I):
    heuristic = Heuristic(heuristic)
    ids = evaluated_agents(scene)
    labels = {}
    for i, m in enumerate(ids):
        for n in ids[i + 1:]:
            track_m, track_n = scene.agent(m), scene.agent(n)
            if heuristic is Heuristic.SPARSE:
                labels[(m, n)] = label_pair_sparse(track_m, track_n, eps_i, scene.dt)
            else:
                labels[(m, n)] = label_pair_dense(track_m, track_n)
    return InteractionGraph(scene.n_agents, labels)


def interactive_agents(graph):
    agents = set()
    for m, n in graph.edges():
        agents.update((m, n))
    return agents


def edge_type_proportions(graphs):
    '''
    Label proportions over a corpus of interaction graphs, plus the mean
    number of directed edges per scene.
    '''
    counts = np.zeros(len(EdgeLabel))
    for graph in graphs:
        for label in graph.labels.values():
            counts[label] += 1
    total = counts.sum()
    table = pd.DataFrame({
        "Edge Type": [label.key for label in EdgeLabel],
        "Count": counts.astype(int),
        "Proportion": counts / total if total else np.zeros(len(EdgeLabel)),
    })
    table.attrs["edges_per_scene"] = float(np.mean([g.n_edges for g in graphs])) if graphs else 0.0
    return table
