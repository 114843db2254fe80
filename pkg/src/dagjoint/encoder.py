'''
Map-free history encoder: per-agent GRU over the preprocessed history,
projection to the feature width, then one agent-to-agent attention round
over neighbours within the A2A radius. Also the K_prop proposal decoder
that makes the features future-aware during training.
'''

import logging

import numpy as np
import tensorflow as tf
from scipy.spatial.distance import cdist

from .numerics import Block, Dense, GRUCell, GraphAttention, as_tensor
from .scene import HISTORY_WIDTH

logger = logging.getLogger(__name__)

A2A_RADIUS = 100.0


def neighbour_mask(present, present_valid, radius=A2A_RADIUS):
    '''
    (N, N) bool: j is a neighbour of i when both present states are valid,
    j != i and they are at most `radius` apart.
    '''
    present = np.asarray(present, dtype=np.float64).reshape(-1, 2)
    valid = np.asarray(present_valid, dtype=bool)
    mask = cdist(present, present) <= radius if len(present) else np.zeros((0, 0), dtype=bool)
    mask &= valid[:, None] & valid[None, :]
    np.fill_diagonal(mask, False)
    return mask


class HistoryEncoder(Block):
    def __init__(self, scope, hidden=64, gru_hidden=128, radius=A2A_RADIUS, base_seed=0):
        super().__init__(scope, base_seed)
        self.hidden, self.gru_hidden, self.radius = hidden, gru_hidden, float(radius)
        self.gru = GRUCell(f"{scope}.gru", HISTORY_WIDTH, gru_hidden, base_seed)
        self.project = Dense(f"{scope}.project", gru_hidden, hidden, base_seed)
        self.a2a = GraphAttention(f"{scope}.a2a", hidden, hidden, hidden, base_seed)
        self.built = True

    def blocks(self):
        return [self.gru, self.project, self.a2a]

    def unroll(self, history, history_valid):
        """Final GRU hidden per agent; invalid steps carry the hidden state through."""
        history = as_tensor(history)
        valid = tf.convert_to_tensor(np.asarray(history_valid, dtype=bool))
        h = tf.zeros((history.shape[0], self.gru_hidden), dtype=tf.float64)
        for t in range(history.shape[1]):
            h = tf.where(valid[:, t, None], self.gru(history[:, t], h), h)
        return h

    def call(self, history, history_valid, present, present_valid):
        '''
        history (N, T_obs, 5), history_valid (N, T_obs), present (N, 2),
        present_valid (N,) -> features (N, H).
        '''
        n = int(np.shape(history)[0])
        if n == 0:
            return tf.zeros((0, self.hidden), dtype=tf.float64)
        feats = self.project(self.unroll(history, history_valid))
        mask = neighbour_mask(present, present_valid, self.radius)
        # messages for node i: the features of every agent j, masked to neighbours
        messages = tf.broadcast_to(feats[None], (n, n, self.hidden))
        m, _ = self.a2a(messages, feats, mask)
        return feats + m

    def encode(self, tensors):
        return self(tensors.history, tensors.history_valid, tensors.present, tensors.present_valid)


def encode_history(encoder, history, present_positions, present_valid=None):
    '''
    history: PreprocessedHistory. Agents without a valid present state are
    never A2A neighbours.
    '''
    if present_valid is None:
        present_valid = history.valid[:, -1] if len(history.valid) else np.zeros(0, dtype=bool)
    return encoder(history.features, history.valid, present_positions, present_valid)


def proposal_decode(head, features, present):
    '''
    K_prop joint proposals: (K_prop, N, T_fut, 2) coordinates, each agent's
    decoded offsets added to its present position.
    '''
    offsets = head.decode_all(as_tensor(features))
    return offsets + as_tensor(present)[None, :, None, :]
