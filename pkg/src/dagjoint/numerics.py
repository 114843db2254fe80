'''
Differentiable building blocks in float64 Keras layers: dense layer, MLP,
residual block, GRU cell, graph attention, type-pair embedding and the
one-hot decoding head, plus the losses, a finite-difference gradient check
and the flat checkpoint format.

Every block creates its weights eagerly with a seeded uniform
[-1/sqrt(fan_in), 1/sqrt(fan_in)] initializer, the seed being derived from
the weight's dotted name, so a model's parameters depend only on its
structure and base seed.
'''

import hashlib
import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tensorflow as tf
from tensorflow import keras

from .errors import AggregationError, CheckpointError, ShapeError

logger = logging.getLogger(__name__)

DTYPE = "float64"
LEAKY_SLOPE = 0.2
PROB_FLOOR = 1e-12
FD_STEP = 1e-6
# gradients below this magnitude are compared absolutely
REL_ERROR_FLOOR = 1e-3


def derived_seed(base_seed, name):
    return (int(base_seed) * 1_000_003 + zlib.crc32(name.encode())) % 2 ** 31


def set_determinism(seed):
    keras.utils.set_random_seed(int(seed))
    tf.config.experimental.enable_op_determinism()


def as_tensor(x):
    return tf.convert_to_tensor(x, dtype=tf.float64)


def check_width(x, width, what):
    if x.shape[-1] != width:
        raise ShapeError(f"{what}: expected last dimension {width}, got shape {tuple(x.shape)}")


class Block(keras.layers.Layer):
    '''
    Base layer. `scope` is the dotted name prefix of the block's weights.
    Subclasses create weights through `uniform_weight` and list their
    sub-blocks in `blocks()`.
    '''

    def __init__(self, scope, base_seed=0):
        super().__init__(name=scope.replace(".", "_"), dtype=DTYPE)
        self.scope = scope
        self.base_seed = int(base_seed)
        self.weight_names = []

    def uniform_weight(self, local, shape, fan_in):
        bound = 1.0 / math.sqrt(max(fan_in, 1))
        var = self.add_weight(
            name=local,
            shape=shape,
            initializer=keras.initializers.RandomUniform(
                -bound, bound, seed=derived_seed(self.base_seed, f"{self.scope}.{local}")
            ),
            dtype=DTYPE,
            trainable=True,
        )
        self.weight_names.append(local)
        return var

    def blocks(self):
        return []

    def named_weights(self):
        for local in self.weight_names:
            yield f"{self.scope}.{local}", getattr(self, local)
        for block in self.blocks():
            yield from block.named_weights()


class Dense(Block):
    def __init__(self, scope, in_dim, out_dim, base_seed=0):
        super().__init__(scope, base_seed)
        self.in_dim, self.out_dim = in_dim, out_dim
        self.kernel = self.uniform_weight("kernel", (in_dim, out_dim), in_dim)
        self.bias = self.uniform_weight("bias", (out_dim,), in_dim)
        self.built = True

    def call(self, x):
        check_width(x, self.in_dim, self.scope)
        return tf.einsum("...i,io->...o", x, self.kernel) + self.bias


class MLP(Block):
    """Affine layers with ReLU between them and no activation after the last."""

    def __init__(self, scope, widths, base_seed=0):
        super().__init__(scope, base_seed)
        if len(widths) < 2:
            raise ShapeError(f"{scope}: an MLP needs at least input and output widths, got {widths}")
        self.widths = tuple(widths)
        self.dense = [
            Dense(f"{scope}.{i}", widths[i], widths[i + 1], base_seed)
            for i in range(len(widths) - 1)
        ]
        self.built = True

    def blocks(self):
        return list(self.dense)

    def call(self, x):
        check_width(x, self.widths[0], self.scope)
        for i, layer in enumerate(self.dense):
            x = layer(x)
            if i < len(self.dense) - 1:
                x = tf.nn.relu(x)
        return x


def mlp_forward(mlp, x):
    return mlp(as_tensor(x))


class ResidualBlock(Block):
    """relu(x + W2 relu(W1 x + b1) + b2)"""

    def __init__(self, scope, dim, base_seed=0):
        super().__init__(scope, base_seed)
        self.dim = dim
        self.fc1 = Dense(f"{scope}.fc1", dim, dim, base_seed)
        self.fc2 = Dense(f"{scope}.fc2", dim, dim, base_seed)
        self.built = True

    def blocks(self):
        return [self.fc1, self.fc2]

    def call(self, x):
        check_width(x, self.dim, self.scope)
        return tf.nn.relu(x + self.fc2(tf.nn.relu(self.fc1(x))))


class GRUCell(Block):
    '''
    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    c = tanh(x Wc + (r * h) Uc + bc), h' = (1 - z) h + z c.
    Gate blocks are laid out [z | r | c] along the last axis.
    '''

    def __init__(self, scope, input_dim, hidden_dim, base_seed=0):
        super().__init__(scope, base_seed)
        self.input_dim, self.hidden_dim = input_dim, hidden_dim
        self.kernel = self.uniform_weight("kernel", (input_dim, 3 * hidden_dim), input_dim)
        self.recurrent = self.uniform_weight("recurrent", (hidden_dim, 3 * hidden_dim), hidden_dim)
        self.bias = self.uniform_weight("bias", (3 * hidden_dim,), hidden_dim)
        self.built = True

    def call(self, x, h):
        check_width(x, self.input_dim, f"{self.scope} input")
        check_width(h, self.hidden_dim, f"{self.scope} hidden")
        hd = self.hidden_dim
        gx = tf.einsum("...i,io->...o", x, self.kernel) + self.bias
        gh = tf.einsum("...i,io->...o", h, self.recurrent[:, :2 * hd])
        z = tf.sigmoid(gx[..., :hd] + gh[..., :hd])
        r = tf.sigmoid(gx[..., hd:2 * hd] + gh[..., hd:])
        c = tf.tanh(gx[..., 2 * hd:] + tf.einsum("...i,io->...o", r * h, self.recurrent[:, 2 * hd:]))
        return (1.0 - z) * h + z * c


def gru_cell(cell, x, h):
    return cell(as_tensor(x), as_tensor(h))


def masked_softmax(logits, mask):
    '''
    Softmax over the last axis restricted to `mask`; masked entries get 0
    and rows without any unmasked entry are all zeros.
    '''
    mask = tf.cast(mask, tf.bool)
    neg_inf = tf.constant(-np.inf, dtype=logits.dtype)
    row_max = tf.reduce_max(tf.where(mask, logits, neg_inf), axis=-1, keepdims=True)
    row_max = tf.stop_gradient(tf.where(tf.math.is_finite(row_max), row_max, tf.zeros_like(row_max)))
    shifted = tf.where(mask, logits - row_max, tf.zeros_like(logits))
    e = tf.where(mask, tf.exp(shifted), tf.zeros_like(logits))
    denom = tf.reduce_sum(e, axis=-1, keepdims=True)
    return e / tf.where(denom > 0, denom, tf.ones_like(denom))


class GraphAttention(Block):
    '''
    alpha_j = softmax_j(LeakyReLU(a . [W1 b_j || W2 h])), m = sum_j alpha_j W1 b_j.

    Batched call: messages (B, P, d_msg), nodes (B, d_node), parent_mask
    (B, P). Returns (m, alpha); rows without parents give m = 0.
    '''

    def __init__(self, scope, msg_dim, node_dim, out_dim, base_seed=0):
        super().__init__(scope, base_seed)
        self.msg_dim, self.node_dim, self.out_dim = msg_dim, node_dim, out_dim
        self.w_msg = self.uniform_weight("w_msg", (msg_dim, out_dim), msg_dim)
        self.w_node = self.uniform_weight("w_node", (node_dim, out_dim), node_dim)
        self.attention = self.uniform_weight("attention", (2 * out_dim,), 2 * out_dim)
        self.built = True

    def call(self, messages, nodes, parent_mask):
        check_width(messages, self.msg_dim, f"{self.scope} messages")
        check_width(nodes, self.node_dim, f"{self.scope} nodes")
        wb = tf.einsum("bpi,io->bpo", messages, self.w_msg)
        wh = tf.einsum("bi,io->bo", nodes, self.w_node)
        a_msg, a_node = self.attention[:self.out_dim], self.attention[self.out_dim:]
        logits = tf.einsum("bpo,o->bp", wb, a_msg) + tf.einsum("bo,o->b", wh, a_node)[:, None]
        logits = tf.nn.leaky_relu(logits, alpha=LEAKY_SLOPE)
        alpha = masked_softmax(logits, parent_mask)
        return tf.einsum("bp,bpo->bo", alpha, wb), alpha


def graph_attention_aggregate(attention, parent_messages, node_state, return_weights=False):
    '''
    Aggregate the messages of one node's parents. Source nodes have no
    parents and must not be aggregated.
    '''
    if len(parent_messages) == 0:
        raise AggregationError("graph attention needs at least one parent message")
    messages = tf.stack([as_tensor(b) for b in parent_messages])[None]
    node = as_tensor(node_state)[None]
    m, alpha = attention(messages, node, tf.ones((1, len(parent_messages)), dtype=tf.bool))
    if return_weights:
        return m[0], alpha[0]
    return m[0]


class TypePairEncoder(Block):
    """Learned per-type vectors for an ordered agent pair, through a 2-layer MLP."""

    def __init__(self, scope, n_types, embed_dim, hidden, base_seed=0):
        super().__init__(scope, base_seed)
        self.embedding = self.uniform_weight("embedding", (n_types, embed_dim), embed_dim)
        self.mlp = MLP(f"{scope}.mlp", (2 * embed_dim, hidden, hidden), base_seed)
        self.built = True

    def blocks(self):
        return [self.mlp]

    def call(self, types_m, types_n):
        pair = tf.concat([tf.gather(self.embedding, types_m), tf.gather(self.embedding, types_n)], axis=-1)
        return self.mlp(pair)


class DecodeHead(Block):
    '''
    Residual block plus linear layer over [features || one-hot(k)], giving
    per-agent coordinate offsets from the present position.
    '''

    def __init__(self, scope, hidden, k, t_fut, base_seed=0):
        super().__init__(scope, base_seed)
        self.hidden, self.k, self.t_fut = hidden, k, t_fut
        self.residual = ResidualBlock(f"{scope}.residual", hidden + k, base_seed)
        self.out = Dense(f"{scope}.out", hidden + k, 2 * t_fut, base_seed)
        self.built = True

    def blocks(self):
        return [self.residual, self.out]

    def call(self, features):
        '''
        features (K, A, H) -> offsets (K, A, T_fut, 2); slice k is paired
        with one-hot(k).
        '''
        check_width(features, self.hidden, self.scope)
        k, n = tf.shape(features)[0], tf.shape(features)[1]
        onehot = tf.one_hot(tf.range(k), self.k, dtype=tf.float64)
        onehot = tf.broadcast_to(onehot[:, None, :], tf.stack([k, n, self.k]))
        x = tf.concat([features, onehot], axis=-1)
        return tf.reshape(self.out(self.residual(x)), tf.stack([k, n, self.t_fut, 2]))

    def decode_all(self, features):
        """(A, H) agent features -> (K, A, T_fut, 2) offsets for every modality."""
        tiled = tf.broadcast_to(features[None], tf.stack([self.k, tf.shape(features)[0], self.hidden]))
        return self(tiled)


# losses

def smooth_l1(x, axis=None):
    '''
    Elementwise 0.5 x^2 for |x| <= 1, |x| - 0.5 otherwise, summed over `axis`
    (all axes when None).
    '''
    x = as_tensor(x)
    ax = tf.abs(x)
    return tf.reduce_sum(tf.where(ax <= 1.0, 0.5 * x * x, ax - 0.5), axis=axis)


def focal_loss(probs, targets, gamma, alpha):
    '''
    -alpha[t] (1 - p_t)^gamma log p_t per row of `probs` (rows on the
    simplex, classes ordered no_interaction, m_influences_n, n_influences_m).
    p_t below 1e-12 is clamped and reported with a warning.
    '''
    probs = as_tensor(probs)
    single = probs.shape.rank == 1
    if single:
        probs = probs[None]
        targets = [targets]
    targets = tf.convert_to_tensor(targets, dtype=tf.int64)
    check_width(probs, len(alpha), "focal loss probabilities")
    p_t = tf.gather(probs, targets, axis=1, batch_dims=1)
    clamped = p_t < PROB_FLOOR
    if bool(tf.reduce_any(clamped)):
        logger.warning("focal loss: clamped %d target probabilities to %g", int(tf.reduce_sum(tf.cast(clamped, tf.int32))), PROB_FLOOR)
    p_t = tf.maximum(p_t, PROB_FLOOR)
    weight = tf.gather(tf.constant(alpha, dtype=tf.float64), targets)
    loss = -weight * tf.pow(1.0 - p_t, float(gamma)) * tf.math.log(p_t)
    return loss[0] if single else loss


# parameters and gradient checking

@dataclass
class ModelParams:
    """Ordered (name, variable) view over one or more blocks."""
    entries: list = field(default_factory=list)

    def __post_init__(self):
        names = [name for name, _ in self.entries]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise CheckpointError(f"duplicate parameter names: {dupes}")

    @classmethod
    def of(cls, *blocks):
        return cls([entry for block in blocks for entry in block.named_weights()])

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def names(self):
        return [name for name, _ in self.entries]

    @property
    def variables(self):
        return [var for _, var in self.entries]

    @property
    def shapes(self):
        return [tuple(var.shape) for _, var in self.entries]

    @property
    def size(self):
        return int(sum(np.prod(shape, dtype=np.int64) for shape in self.shapes))

    def flat(self):
        if not self.entries:
            return np.zeros(0, dtype="<f8")
        return np.concatenate([np.asarray(var.numpy(), dtype="<f8").ravel() for var in self.variables])

    def fingerprint(self):
        return hashlib.sha256(self.flat().tobytes()).hexdigest()


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict
    tolerance: float
    failures: list

    @property
    def passed(self):
        return not self.failures

    def to_table(self):
        width = max([len(n) for n in self.per_param] + [9])
        lines = [f"{'parameter':<{width}}  max rel error"]
        for name, err in self.per_param.items():
            flag = "  FAIL" if name in self.failures else ""
            lines.append(f"{name:<{width}}  {err:.3e}{flag}")
        lines.append(f"{'overall':<{width}}  {self.max_rel_error:.3e}")
        return "\n".join(lines)


def relative_error(analytic, numeric, floor=REL_ERROR_FLOOR):
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(loss_fn, params, tolerance=1e-5, step=FD_STEP, max_entries=None, seed=0):
    '''
    Compare tf.GradientTape gradients of the zero-argument `loss_fn` with
    central finite differences for every entry of every parameter (or a
    seeded sample of `max_entries` entries per parameter).
    '''
    if not isinstance(params, ModelParams):
        params = ModelParams(list(params.items()) if isinstance(params, dict) else list(params))
    with tf.GradientTape() as tape:
        loss = loss_fn()
    grads = tape.gradient(loss, params.variables)
    rng = np.random.default_rng(seed)
    per_param, failures = {}, []
    for (name, var), grad in zip(params, grads):
        analytic = np.zeros(var.shape) if grad is None else tf.convert_to_tensor(grad).numpy()
        base = var.numpy()
        flat = base.ravel()
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        worst = 0.0
        for i in idx:
            bumped = flat.copy()
            bumped[i] += step
            var.assign(bumped.reshape(base.shape))
            up = float(loss_fn())
            bumped[i] -= 2 * step
            var.assign(bumped.reshape(base.shape))
            down = float(loss_fn())
            numeric = (up - down) / (2 * step)
            worst = max(worst, float(relative_error(analytic.ravel()[i], numeric)))
        var.assign(base)
        per_param[name] = worst
        if worst > tolerance:
            failures.append(name)
    overall = max(per_param.values(), default=0.0)
    return GradCheckReport(overall, per_param, tolerance, failures)


# checkpoints

WEIGHTS_FILE = "weights.bin"
MANIFEST_FILE = "manifest.json"


def save_checkpoint(directory, params, seed, spec_hash):
    '''
    weights.bin: every parameter, in order, as little-endian float64;
    manifest.json: names, shapes, offsets, seed and config hash.
    '''
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offsets, offset = [], 0
    for shape in params.shapes:
        offsets.append(offset)
        offset += int(np.prod(shape, dtype=np.int64))
    params.flat().tofile(directory / WEIGHTS_FILE)
    manifest = {
        "names": params.names,
        "shapes": [list(s) for s in params.shapes],
        "offsets": offsets,
        "dtype": "<f8",
        "seed": int(seed),
        "spec_hash": spec_hash,
    }
    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2))
    return directory


def read_manifest(directory):
    path = Path(directory) / MANIFEST_FILE
    if not path.exists():
        raise CheckpointError(f"no checkpoint manifest in {directory}")
    return json.loads(path.read_text())


def load_checkpoint(directory, params):
    manifest = read_manifest(directory)
    if manifest["names"] != params.names:
        raise CheckpointError(f"checkpoint {directory} does not match the model's parameter names")
    if [tuple(s) for s in manifest["shapes"]] != params.shapes:
        raise CheckpointError(f"checkpoint {directory} does not match the model's parameter shapes")
    values = np.fromfile(Path(directory) / WEIGHTS_FILE, dtype="<f8")
    if values.size != params.size:
        raise CheckpointError(f"checkpoint {directory}: expected {params.size} values, found {values.size}")
    for (name, var), offset, shape in zip(params, manifest["offsets"], params.shapes):
        count = int(np.prod(shape, dtype=np.int64))
        var.assign(values[offset:offset + count].reshape(shape))
    logger.debug("loaded %d parameters from %s", len(params), directory)
    return manifest
