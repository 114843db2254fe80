'''
Factorized joint decoding over a DAG of agents, the non-factorized
baseline, and the stage-2 JointPredictor that combines them with a
history encoder and a proposal decoder.

Factorized decoding runs the K modalities as the leading batch axis and
walks the DAG level by level: source nodes are decoded from their own
features; every later node first aggregates its parents' encoded futures
(graph attention over e_m + a_mn), updates its working feature with a GRU
taking the aggregate as input and the feature as hidden state, and is then
decoded.
'''

import json
import logging
from dataclasses import dataclass

import numpy as np
import tensorflow as tf

from .encoder import HistoryEncoder, proposal_decode
from .errors import GraphError, ShapeError
from .numerics import MLP, Block, DecodeHead, GRUCell, GraphAttention, TypePairEncoder, as_tensor
from .scene import AGENT_TYPES

logger = logging.getLogger(__name__)


@dataclass
class TrajectoryBundle:
    '''
    K joint futures: trajectories (K, N, T_fut, 2) in meters, row n
    belonging to agent_ids[n].
    '''
    trajectories: np.ndarray
    agent_ids: list

    def __post_init__(self):
        self.trajectories = np.asarray(self.trajectories, dtype=np.float64)
        self.agent_ids = [int(a) for a in self.agent_ids]
        if self.trajectories.ndim != 4 or self.trajectories.shape[-1] != 2:
            raise ShapeError(f"trajectory bundle must be (K, N, T, 2), got {self.trajectories.shape}")
        if self.trajectories.shape[1] != len(self.agent_ids):
            raise ShapeError(f"{self.trajectories.shape[1]} trajectories for {len(self.agent_ids)} agents")
        if not np.all(np.isfinite(self.trajectories)):
            raise ShapeError("trajectory bundle holds non-finite coordinates")

    @property
    def k(self):
        return self.trajectories.shape[0]

    @property
    def t_fut(self):
        return self.trajectories.shape[2]

    def select(self, agent_ids):
        rows = [self.agent_ids.index(a) for a in agent_ids]
        return TrajectoryBundle(self.trajectories[:, rows], list(agent_ids))

    def transformed(self, transform, inverse=True):
        '''
        Map coordinates through a RigidTransform; `inverse` (the default)
        takes normalized-frame predictions back to world coordinates.
        '''
        points = self.trajectories.reshape(-1, 2)
        points = transform.invert_points(points) if inverse else transform.apply_points(points)
        return TrajectoryBundle(points.reshape(self.trajectories.shape), self.agent_ids)

    def to_dict(self):
        return {
            "K": self.k,
            "agents": [
                {"agent_id": a, "modes": self.trajectories[:, i].tolist()}
                for i, a in enumerate(self.agent_ids)
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            ids = [a["agent_id"] for a in doc["agents"]]
            modes = np.array([a["modes"] for a in doc["agents"]], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise ShapeError(f"malformed trajectory bundle: {e!r}") from e
        if len(ids) == 0:
            modes = np.zeros((int(doc["K"]), 0, 0, 2))
        else:
            modes = modes.transpose(1, 0, 2, 3)
        if modes.shape[0] != int(doc["K"]):
            raise ShapeError(f"bundle declares K={doc['K']} but holds {modes.shape[0]} modes")
        return cls(modes, ids)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def future_displacements(future, present):
    '''
    (..., T, 2) futures -> (..., T, 2) step displacements, the first one taken
    from the present position.
    '''
    future = as_tensor(future)
    start = tf.broadcast_to(as_tensor(present)[..., None, :], tf.shape(future[..., :1, :]))
    previous = tf.concat([start, future[..., :-1, :]], axis=-2)
    return future - previous


class FutureEncoder(Block):
    """ENCODE: 3-layer MLP over the flattened displacement sequence."""

    def __init__(self, scope, t_fut, hidden, base_seed=0):
        super().__init__(scope, base_seed)
        self.t_fut = t_fut
        self.mlp = MLP(f"{scope}.mlp", (2 * t_fut, hidden, hidden, hidden), base_seed)
        self.built = True

    def blocks(self):
        return [self.mlp]

    def call(self, future, present):
        disp = future_displacements(future, present)
        flat = tf.reshape(disp, tf.concat([tf.shape(disp)[:-2], [2 * self.t_fut]], axis=0))
        return self.mlp(flat)


class FactorizedDecoder(Block):
    def __init__(self, scope, hidden, k, t_fut, type_embed=16, base_seed=0):
        super().__init__(scope, base_seed)
        self.hidden, self.k, self.t_fut = hidden, k, t_fut
        self.head = DecodeHead(f"{scope}.head", hidden, k, t_fut, base_seed)
        self.future_encoder = FutureEncoder(f"{scope}.future_encoder", t_fut, hidden, base_seed)
        self.f_type = TypePairEncoder(f"{scope}.f_type", len(AGENT_TYPES), type_embed, hidden, base_seed)
        self.aggregate = GraphAttention(f"{scope}.aggregate", hidden, hidden, hidden, base_seed)
        self.comb = GRUCell(f"{scope}.comb", hidden, hidden, base_seed)
        self.built = True

    def blocks(self):
        return [self.head, self.future_encoder, self.f_type, self.aggregate, self.comb]


def _check_dag(dag, n_agents):
    if dag.n_nodes != n_agents:
        raise GraphError(f"dag has {dag.n_nodes} nodes for {n_agents} agents")
    for src, dst, _ in dag.edges:
        if not (0 <= src < n_agents and 0 <= dst < n_agents):
            raise GraphError(f"dag edge {src}->{dst} references an unknown agent")


def decode_factorized(decoder, features, present, types, dag, teacher=None, teacher_mask=None, trace=None):
    '''
    features (N, H), present (N, 2), types (N,) -> (K, N, T_fut, 2).

    `teacher` (N, T_fut, 2) ground-truth futures replace the predictions of
    parents whose `teacher_mask` entry is set (all parents when the mask is
    omitted). `trace`, when a list, receives ("decode" | "comb", k, node)
    tuples in call order.
    '''
    features = as_tensor(features)
    present = as_tensor(present)
    types = np.asarray(types, dtype=np.int64)
    n = int(features.shape[0])
    _check_dag(dag, n)
    k = decoder.k
    if teacher is not None:
        teacher = as_tensor(teacher)
        teacher_mask = np.ones(n, dtype=bool) if teacher_mask is None else np.asarray(teacher_mask, dtype=bool)

    working = {}
    decoded = {}
    encoded = {}

    def parent_encoding(m):
        if m not in encoded:
            if teacher is not None and teacher_mask[m]:
                future = tf.broadcast_to(teacher[m][None], (k, decoder.t_fut, 2))
            else:
                future = decoded[m]
            encoded[m] = decoder.future_encoder(future, present[m])
        return encoded[m]

    for level in dag.levels:
        for node in level:
            h = tf.broadcast_to(features[node][None], (k, decoder.hidden))
            parents = dag.parents(node)
            if parents:
                a = decoder.f_type(types[parents], np.full(len(parents), types[node]))
                messages = tf.stack([parent_encoding(m) for m in parents], axis=1) + a[None]
                m_n, _ = decoder.aggregate(messages, h, tf.ones((k, len(parents)), dtype=tf.bool))
                h = decoder.comb(m_n, h)
                if trace is not None:
                    trace.extend(("comb", j, node) for j in range(k))
            working[node] = h
        feats = tf.stack([working[node] for node in level], axis=1)
        offsets = decoder.head(feats)
        trajectories = offsets + tf.gather(present, level)[None, :, None, :]
        for i, node in enumerate(level):
            decoded[node] = trajectories[:, i]
            if trace is not None:
                trace.extend(("decode", j, node) for j in range(k))
    return tf.stack([decoded[node] for node in range(n)], axis=1)


def decode_nonfactorized(head, features, present):
    '''
    Every agent decoded from its own features for each modality; no
    conditioning on other agents' futures.
    '''
    features = as_tensor(features)
    return head.decode_all(features) + as_tensor(present)[None, :, None, :]


class JointPredictor(Block):
    '''
    Stage-2 model: history encoder, K_prop proposal decoder and either the
    factorized decoder or the non-factorized head.
    '''

    def __init__(self, hidden=64, gru_hidden=128, type_embed=16, k=6, k_prop=15, t_fut=30,
                 a2a_radius=100.0, factorized=True, base_seed=0, scope="joint"):
        super().__init__(scope, base_seed)
        self.factorized = factorized
        self.encoder = HistoryEncoder(f"{scope}.encoder", hidden, gru_hidden, a2a_radius, base_seed)
        self.proposal = DecodeHead(f"{scope}.proposal", hidden, k_prop, t_fut, base_seed)
        if factorized:
            self.decoder = FactorizedDecoder(f"{scope}.decoder", hidden, k, t_fut, type_embed, base_seed)
        else:
            self.decoder = DecodeHead(f"{scope}.decoder.head", hidden, k, t_fut, base_seed)
        self.built = True

    @classmethod
    def from_config(cls, config, factorized=None, base_seed=None):
        if factorized is None:
            factorized = config.decoder.value == "factorized"
        return cls(
            hidden=config.hidden, gru_hidden=config.gru_hidden, type_embed=config.type_embed,
            k=config.k, k_prop=config.k_prop, t_fut=config.t_fut, a2a_radius=config.a2a_radius,
            factorized=factorized, base_seed=config.seed if base_seed is None else base_seed,
        )

    def blocks(self):
        return [self.encoder, self.proposal, self.decoder]

    def forward(self, tensors, dag=None, teacher_forcing=False, trace=None):
        '''
        Returns (joint predictions (K, N, T_fut, 2), proposals
        (K_prop, N, T_fut, 2)) in the scene's normalized frame. Teacher
        forcing uses the known future of every agent with a valid final state.
        '''
        features = self.encoder.encode(tensors)
        proposals = proposal_decode(self.proposal, features, tensors.present)
        if not self.factorized:
            return decode_nonfactorized(self.decoder, features, tensors.present), proposals
        if dag is None:
            raise GraphError("the factorized decoder needs a dag")
        teacher = teacher_mask = None
        if teacher_forcing:
            teacher, teacher_mask = tensors.future, tensors.future_valid[:, -1]
        joint = decode_factorized(
            self.decoder, features, tensors.present, tensors.types, dag,
            teacher=teacher, teacher_mask=teacher_mask, trace=trace,
        )
        return joint, proposals
