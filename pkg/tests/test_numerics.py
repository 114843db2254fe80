import logging
import math

import numpy as np
import pytest
import tensorflow as tf

from dagjoint.errors import AggregationError, CheckpointError, ShapeError
from dagjoint.numerics import (
    MLP, DecodeHead, Dense, GraphAttention, GRUCell, ModelParams, ResidualBlock, TypePairEncoder, focal_loss,
    grad_check, graph_attention_aggregate, gru_cell, load_checkpoint, masked_softmax, mlp_forward,
    save_checkpoint, smooth_l1,
)


def _zero(block):
    for _, var in block.named_weights():
        var.assign(np.zeros(tuple(var.shape)))


@pytest.mark.parametrize("x,expected", [(0.5, 0.125), (1.0, 0.5), (3.0, 2.5), (-3.0, 2.5), (0.0, 0.0)])
def test_smooth_l1_values(x, expected):
    assert float(smooth_l1([x])) == pytest.approx(expected)


def test_smooth_l1_axis():
    out = smooth_l1([[0.5, 3.0], [1.0, 0.0]], axis=-1).numpy()
    np.testing.assert_allclose(out, [2.625, 0.5])


def test_focal_loss_examples():
    alpha = (4.0, 1.0, 1.0)
    loss = focal_loss([0.3, 0.5, 0.2], 0, gamma=5, alpha=alpha)
    assert float(loss) == pytest.approx(4 * 0.7 ** 5 * -math.log(0.3))
    batch = focal_loss([[0.3, 0.5, 0.2], [0.1, 0.1, 0.8]], [1, 2], gamma=0, alpha=alpha).numpy()
    np.testing.assert_allclose(batch, [-math.log(0.5), -math.log(0.8)])
    assert float(focal_loss([0.0, 1.0, 0.0], 1, gamma=2, alpha=alpha)) == 0.0


def test_focal_loss_clamps_zero_probability(caplog):
    with caplog.at_level(logging.WARNING):
        loss = float(focal_loss([0.0, 1.0, 0.0], 0, gamma=0, alpha=(1.0, 1.0, 1.0)))
    assert loss == pytest.approx(-math.log(1e-12))
    assert "clamped" in caplog.text


def test_weights_follow_name_and_seed():
    a, b, c = Dense("x", 3, 2, 0), Dense("x", 3, 2, 0), Dense("x", 3, 2, 1)
    assert ModelParams.of(a).fingerprint() == ModelParams.of(b).fingerprint()
    assert ModelParams.of(a).fingerprint() != ModelParams.of(c).fingerprint()
    bound = 1 / math.sqrt(3)
    assert np.all(np.abs(a.kernel.numpy()) <= bound)


def test_named_weights_order():
    mlp = MLP("m", (3, 4, 2))
    assert ModelParams.of(mlp).names == ["m.0.kernel", "m.0.bias", "m.1.kernel", "m.1.bias"]
    assert ModelParams.of(mlp).size == 3 * 4 + 4 + 4 * 2 + 2


def test_duplicate_parameter_names():
    with pytest.raises(CheckpointError):
        ModelParams.of(Dense("d", 2, 2), Dense("d", 2, 2))


def test_mlp_zero_and_identity():
    mlp = MLP("m", (2, 2))
    _zero(mlp)
    np.testing.assert_array_equal(mlp_forward(mlp, [[1.0, -2.0]]).numpy(), [[0.0, 0.0]])
    mlp.dense[0].kernel.assign(np.eye(2))
    np.testing.assert_array_equal(mlp_forward(mlp, [[1.0, -2.0]]).numpy(), [[1.0, -2.0]])


def test_mlp_matches_numpy():
    mlp = MLP("m", (3, 5, 4, 2), base_seed=7)
    x = np.random.default_rng(0).normal(size=(6, 3))
    h = x
    for i, layer in enumerate(mlp.dense):
        h = h @ layer.kernel.numpy() + layer.bias.numpy()
        if i < len(mlp.dense) - 1:
            h = np.maximum(h, 0)
    np.testing.assert_allclose(mlp_forward(mlp, x).numpy(), h, rtol=1e-12)


def test_width_mismatch():
    with pytest.raises(ShapeError):
        mlp_forward(MLP("m", (3, 2)), np.zeros((1, 4)))
    with pytest.raises(ShapeError):
        MLP("m", (3,))


def test_residual_zero_weights_is_relu():
    block = ResidualBlock("r", 3)
    _zero(block)
    np.testing.assert_array_equal(block(tf.constant([[1.0, -1.0, 2.0]], tf.float64)).numpy(), [[1.0, 0.0, 2.0]])


def test_gru_examples():
    cell = GRUCell("g", 2, 3)
    _zero(cell)
    h = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(gru_cell(cell, [4.0, 5.0], h).numpy(), 0.5 * h)
    # saturated update gate copies the candidate
    bias = np.zeros(9)
    bias[:3] = 50.0
    bias[6:] = 0.3
    cell.bias.assign(bias)
    np.testing.assert_allclose(gru_cell(cell, [0.0, 0.0], h).numpy(), np.tanh(0.3) * np.ones(3), atol=1e-12)


def test_masked_softmax():
    logits = tf.constant([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]], tf.float64)
    out = masked_softmax(logits, [[True, False, True], [False, False, False]]).numpy()
    e = np.exp([1.0, 3.0])
    np.testing.assert_allclose(out[0], [e[0] / e.sum(), 0.0, e[1] / e.sum()])
    np.testing.assert_array_equal(out[1], 0.0)


def test_attention_single_parent():
    attention = GraphAttention("a", 3, 2, 4, base_seed=1)
    b = np.array([0.5, -1.0, 2.0])
    m, alpha = graph_attention_aggregate(attention, [b], [1.0, 1.0], return_weights=True)
    np.testing.assert_allclose(alpha.numpy(), [1.0])
    np.testing.assert_allclose(m.numpy(), b @ attention.w_msg.numpy(), rtol=1e-12)


def test_attention_uniform_when_logits_tie():
    attention = GraphAttention("a", 2, 2, 2)
    attention.attention.assign(np.zeros(4))
    parents = [[1.0, 0.0], [0.0, 1.0], [3.0, 3.0]]
    m, alpha = graph_attention_aggregate(attention, parents, [0.0, 0.0], return_weights=True)
    np.testing.assert_allclose(alpha.numpy(), np.full(3, 1 / 3))
    np.testing.assert_allclose(m.numpy(), np.mean(parents, axis=0) @ attention.w_msg.numpy(), rtol=1e-12)


def test_attention_needs_parents():
    with pytest.raises(AggregationError):
        graph_attention_aggregate(GraphAttention("a", 2, 2, 2), [], [0.0, 0.0])


def test_type_pair_encoder_is_ordered():
    encoder = TypePairEncoder("t", 5, 3, 4, base_seed=2)
    out = encoder(tf.constant([0, 1]), tf.constant([1, 0])).numpy()
    assert out.shape == (2, 4)
    assert not np.allclose(out[0], out[1])


def test_decode_head_shapes_and_modalities():
    head = DecodeHead("h", 4, 3, 5, base_seed=3)
    features = tf.constant(np.random.default_rng(0).normal(size=(2, 4)))
    out = head.decode_all(features).numpy()
    assert out.shape == (3, 2, 5, 2)
    assert not np.allclose(out[0], out[1])
    _zero(head)
    np.testing.assert_array_equal(head.decode_all(features).numpy(), 0.0)


def test_grad_check_linear_loss():
    dense = Dense("d", 3, 2)
    coef = tf.constant(np.arange(6.0).reshape(3, 2))
    report = grad_check(lambda: tf.reduce_sum(coef * dense.kernel) + tf.reduce_sum(dense.bias ** 2), ModelParams.of(dense))
    assert report.passed
    assert "d.kernel" in report.to_table()


def test_grad_check_catches_wrong_gradient():
    dense = Dense("d", 2, 2)
    report = grad_check(lambda: tf.reduce_sum(tf.stop_gradient(dense.kernel) * dense.kernel), {"d.kernel": dense.kernel})
    assert not report.passed
    assert report.failures == ["d.kernel"]


def test_grad_check_sampled_entries_leave_weights_untouched():
    mlp = MLP("m", (4, 6, 3), base_seed=5)
    before = ModelParams.of(mlp).fingerprint()
    report = grad_check(lambda: tf.reduce_sum(tf.tanh(mlp(tf.ones((2, 4), tf.float64)))), ModelParams.of(mlp), max_entries=3)
    assert report.passed
    assert ModelParams.of(mlp).fingerprint() == before


def test_checkpoint_round_trip(tmp_path):
    source = MLP("m", (3, 4, 2), base_seed=1)
    save_checkpoint(tmp_path, ModelParams.of(source), seed=1, spec_hash="abc")
    target = MLP("m", (3, 4, 2), base_seed=2)
    manifest = load_checkpoint(tmp_path, ModelParams.of(target))
    assert manifest["spec_hash"] == "abc"
    assert ModelParams.of(target).fingerprint() == ModelParams.of(source).fingerprint()
    assert (tmp_path / "weights.bin").stat().st_size == 8 * ModelParams.of(source).size


def test_checkpoint_mismatch(tmp_path):
    save_checkpoint(tmp_path, ModelParams.of(MLP("m", (3, 4, 2))), seed=0, spec_hash="x")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path, ModelParams.of(MLP("m", (3, 5, 2))))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path, ModelParams.of(MLP("n", (3, 4, 2))))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing", ModelParams.of(MLP("m", (3, 4, 2))))
