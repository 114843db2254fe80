'''
Learned interaction graph predictor (stage 1): its own history encoder and
proposal decoder, the node-to-edge feature step and the three-way edge
classifier over canonical pairs m < n.
'''

import logging

import numpy as np
import pandas as pd
import tensorflow as tf
from sklearn.metrics import accuracy_score, classification_report, confusion_matrix

from .dag import dagify, graph_from_predictions
from .encoder import HistoryEncoder, proposal_decode
from .errors import SceneError
from .labeling import EdgeLabel, InteractionGraph, build_ground_truth_graph
from .numerics import MLP, Block, DecodeHead, TypePairEncoder
from .scene import AGENT_TYPES, pick_eval_anchor, scene_tensors

logger = logging.getLogger(__name__)

N_CLASSES = len(EdgeLabel)


class GraphPredictor(Block):
    def __init__(self, hidden=64, gru_hidden=128, type_embed=16, k_prop=15, t_fut=30,
                 a2a_radius=100.0, base_seed=0, scope="graph_predictor"):
        super().__init__(scope, base_seed)
        self.hidden = hidden
        self.encoder = HistoryEncoder(f"{scope}.encoder", hidden, gru_hidden, a2a_radius, base_seed)
        self.proposal = DecodeHead(f"{scope}.proposal", hidden, k_prop, t_fut, base_seed)
        self.f_type = TypePairEncoder(f"{scope}.f_type", len(AGENT_TYPES), type_embed, hidden, base_seed)
        self.f_dist = MLP(f"{scope}.f_dist", (2, hidden, hidden), base_seed)
        self.f_edge = MLP(f"{scope}.f_edge", (4 * hidden, hidden, hidden), base_seed)
        self.f_int = MLP(f"{scope}.f_int", (hidden, hidden, N_CLASSES), base_seed)
        self.built = True

    @classmethod
    def from_config(cls, config, base_seed=None):
        return cls(
            hidden=config.hidden, gru_hidden=config.gru_hidden, type_embed=config.type_embed,
            k_prop=config.k_prop, t_fut=config.t_fut, a2a_radius=config.a2a_radius,
            base_seed=config.seed if base_seed is None else base_seed,
        )

    def blocks(self):
        return [self.encoder, self.proposal, self.f_type, self.f_dist, self.f_edge, self.f_int]

    def edge_features(self, features, tensors, pairs):
        '''
        h_e = f_edge([h_m || h_n || f_dist(p_m - p_n) || f_type(a_m, a_n)])
        at the present timestep, one row per canonical pair.
        '''
        if not pairs:
            return tf.zeros((0, self.hidden), dtype=tf.float64)
        m = np.array([p[0] for p in pairs])
        n = np.array([p[1] for p in pairs])
        if not (tensors.present_valid[m].all() and tensors.present_valid[n].all()):
            raise SceneError(f"scene {tensors.scene_id}: edge features need valid present positions")
        dist = tf.constant(tensors.present[m] - tensors.present[n], dtype=tf.float64)
        x = tf.concat([
            tf.gather(features, m),
            tf.gather(features, n),
            self.f_dist(dist),
            self.f_type(tensors.types[m], tensors.types[n]),
        ], axis=-1)
        return self.f_edge(x)

    def classify_edges(self, edge_features):
        """(P, H) -> (P, 3) class probabilities."""
        return tf.nn.softmax(self.f_int(edge_features), axis=-1)

    def forward(self, tensors, pairs=None):
        '''
        Returns (probabilities (P, 3), proposals (K_prop, N, T_fut, 2)) for
        `pairs` (default: all evaluated canonical pairs).
        '''
        pairs = tensors.evaluated_pairs() if pairs is None else pairs
        features = self.encoder.encode(tensors)
        probs = self.classify_edges(self.edge_features(features, tensors, pairs))
        return probs, proposal_decode(self.proposal, features, tensors.present)


def predict_interaction_graph(model, scene, anchor_id=None):
    anchor_id = pick_eval_anchor(scene) if anchor_id is None else anchor_id
    tensors = scene_tensors(scene, anchor_id)
    pairs = tensors.evaluated_pairs()
    probs, _ = model.forward(tensors, pairs)
    probs = probs.numpy()
    labels = {pair: EdgeLabel(int(np.argmax(p))) for pair, p in zip(pairs, probs)}
    return InteractionGraph(scene.n_agents, labels, {pair: p for pair, p in zip(pairs, probs)})


def predict_dag(model, scene, anchor_id=None):
    '''
    encode -> edge features -> classify -> argmax graph -> dagify; the Dag
    carries its level schedule.
    '''
    graph = predict_interaction_graph(model, scene, anchor_id)
    return dagify(graph_from_predictions(graph.probabilities, scene.n_agents))


def edge_type_accuracy(model, scenes, heuristic="sparse", eps_i=2.5):
    '''
    Per-class held-out accuracy of the predicted labels against the
    ground-truth labels. Returns (per-class table, confusion matrix,
    overall accuracy).
    '''
    y_true, y_pred = [], []
    for scene in scenes:
        truth = build_ground_truth_graph(scene, heuristic, eps_i)
        predicted = predict_interaction_graph(model, scene)
        for pair, label in truth.labels.items():
            y_true.append(int(label))
            y_pred.append(int(predicted.labels[pair]))
    classes = list(range(N_CLASSES))
    matrix = confusion_matrix(y_true, y_pred, labels=classes)
    report = classification_report(
        y_true, y_pred, labels=classes, target_names=[label.key for label in EdgeLabel],
        output_dict=True, zero_division=0,
    )
    support = matrix.sum(axis=1)
    table = pd.DataFrame({
        "Edge Type": [label.key for label in EdgeLabel],
        "Accuracy": np.divide(np.diag(matrix), support, out=np.full(N_CLASSES, np.nan), where=support > 0),
        "Precision": [report[label.key]["precision"] for label in EdgeLabel],
        "Support": support,
    })
    overall = accuracy_score(y_true, y_pred) if y_true else float("nan")
    return table, matrix, overall
