import numpy as np
import pytest

from dagjoint.dag import Dag
from dagjoint.decoder import (
    FactorizedDecoder, JointPredictor, TrajectoryBundle, decode_factorized, decode_nonfactorized,
    future_displacements,
)
from dagjoint.errors import GraphError, ShapeError
from dagjoint.numerics import ModelParams
from dagjoint.scene import RigidTransform, scene_tensors

DIAMOND = [(0, 1, 0.9), (0, 2, 0.8), (1, 3, 0.7), (2, 3, 0.6)]


def _inputs(n, hidden=6, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, hidden)), rng.normal(scale=5.0, size=(n, 2)), rng.integers(0, 5, n)


def test_future_displacements():
    disp = future_displacements([[1.0, 0.0], [3.0, 0.0], [3.0, 2.0]], [0.0, 0.0]).numpy()
    np.testing.assert_array_equal(disp, [[1.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    batched = future_displacements(np.zeros((4, 3, 2)), np.ones((4, 2))).numpy()
    np.testing.assert_array_equal(batched[:, 0], -1.0)
    np.testing.assert_array_equal(batched[:, 1:], 0.0)


def test_edgeless_dag_matches_nonfactorized():
    decoder = FactorizedDecoder("dec", 6, 3, 5, type_embed=4, base_seed=1)
    features, present, types = _inputs(4)
    joint = decode_factorized(decoder, features, present, types, Dag(4, []))
    baseline = decode_nonfactorized(decoder.head, features, present)
    np.testing.assert_array_equal(joint.numpy(), baseline.numpy())


def test_sources_ignore_children():
    decoder = FactorizedDecoder("dec", 6, 2, 5, type_embed=4, base_seed=2)
    features, present, types = _inputs(4)
    joint = decode_factorized(decoder, features, present, types, Dag(4, DIAMOND)).numpy()
    baseline = decode_nonfactorized(decoder.head, features, present).numpy()
    np.testing.assert_allclose(joint[:, 0], baseline[:, 0], rtol=1e-12, atol=1e-12)
    assert not np.allclose(joint[:, 3], baseline[:, 3])


def test_closed_update_gate_leaves_child_marginal():
    decoder = FactorizedDecoder("dec", 6, 2, 5, type_embed=4, base_seed=5)
    features, present, types = _inputs(2)
    chain, edgeless = Dag(2, [(0, 1, 1.0)]), Dag(2, [])
    conditioned = decode_factorized(decoder, features, present, types, chain).numpy()
    assert not np.allclose(conditioned[:, 1], decode_factorized(decoder, features, present, types, edgeless).numpy()[:, 1])

    for var in ModelParams.of(decoder.future_encoder).variables:
        var.assign(np.zeros(tuple(var.shape)))
    bias = decoder.comb.bias.numpy()
    bias[:decoder.comb.hidden_dim] = -1e3
    decoder.comb.bias.assign(bias)
    chained = decode_factorized(decoder, features, present, types, chain).numpy()
    marginal = decode_factorized(decoder, features, present, types, edgeless).numpy()
    np.testing.assert_allclose(chained[:, 1], marginal[:, 1], atol=1e-6)
    np.testing.assert_array_equal(chained[:, 0], marginal[:, 0])


def test_diamond_call_order():
    k = 3
    decoder = FactorizedDecoder("dec", 6, k, 5, type_embed=4)
    features, present, types = _inputs(4)
    trace = []
    decode_factorized(decoder, features, present, types, Dag(4, DIAMOND), trace=trace)
    for node in range(4):
        for j in range(k):
            assert trace.count(("decode", j, node)) == 1
            assert trace.count(("comb", j, node)) == (0 if node == 0 else 1)
    position = {event: i for i, event in enumerate(trace)}
    for src, dst, _ in DIAMOND:
        for j in range(k):
            assert position[("decode", j, src)] < position[("comb", j, dst)] < position[("decode", j, dst)]


def test_teacher_forcing_with_own_prediction_is_identity():
    decoder = FactorizedDecoder("dec", 6, 1, 5, type_embed=4, base_seed=3)
    features, present, types = _inputs(3)
    dag = Dag(3, [(0, 1, 1.0), (1, 2, 1.0)])
    free = decode_factorized(decoder, features, present, types, dag).numpy()
    forced = decode_factorized(decoder, features, present, types, dag, teacher=free[0]).numpy()
    np.testing.assert_allclose(forced, free, rtol=1e-12, atol=1e-12)


def test_teacher_forcing_reaches_children_only():
    decoder = FactorizedDecoder("dec", 6, 2, 5, type_embed=4, base_seed=4)
    features, present, types = _inputs(3)
    dag = Dag(3, [(0, 1, 1.0)])
    free = decode_factorized(decoder, features, present, types, dag).numpy()
    teacher = np.random.default_rng(9).normal(size=(3, 5, 2))
    forced = decode_factorized(decoder, features, present, types, dag, teacher=teacher).numpy()
    np.testing.assert_array_equal(forced[:, 0], free[:, 0])
    np.testing.assert_array_equal(forced[:, 2], free[:, 2])
    assert not np.allclose(forced[:, 1], free[:, 1])
    masked = decode_factorized(decoder, features, present, types, dag, teacher=teacher,
                               teacher_mask=[False, True, True]).numpy()
    np.testing.assert_array_equal(masked, free)


def test_modalities_decode_independently():
    decoder = FactorizedDecoder("dec", 6, 3, 5, type_embed=4, base_seed=5)
    features, present, types = _inputs(4)
    joint = decode_factorized(decoder, features, present, types, Dag(4, DIAMOND)).numpy()
    assert all(not np.allclose(joint[0], joint[j]) for j in (1, 2))


def test_dag_must_match_agents():
    decoder = FactorizedDecoder("dec", 6, 2, 5, type_embed=4)
    features, present, types = _inputs(3)
    with pytest.raises(GraphError):
        decode_factorized(decoder, features, present, types, Dag(4, []))


def test_joint_predictor_edgeless_matches_baseline(tiny_config, crossing_scene):
    config = tiny_config.replace(t_fut=30)
    factorized = JointPredictor.from_config(config, factorized=True)
    baseline = JointPredictor.from_config(config, factorized=False)
    tensors = scene_tensors(crossing_scene, 0)
    joint, proposals = factorized.forward(tensors, Dag(3, []))
    joint_b, proposals_b = baseline.forward(tensors)
    assert joint.shape == (2, 3, 30, 2)
    assert proposals.shape == (3, 3, 30, 2)
    np.testing.assert_array_equal(joint.numpy(), joint_b.numpy())
    np.testing.assert_array_equal(proposals.numpy(), proposals_b.numpy())
    with pytest.raises(GraphError):
        factorized.forward(tensors)


def test_bundle_round_trip_and_transform():
    rng = np.random.default_rng(0)
    bundle = TrajectoryBundle(rng.normal(size=(2, 3, 4, 2)), [5, 1, 2])
    loaded = TrajectoryBundle.from_json(bundle.to_json())
    np.testing.assert_array_equal(loaded.trajectories, bundle.trajectories)
    assert loaded.agent_ids == [5, 1, 2]
    picked = bundle.select([2, 5])
    np.testing.assert_array_equal(picked.trajectories[:, 0], bundle.trajectories[:, 2])
    transform = RigidTransform((10.0, -4.0), 0.7)
    back = bundle.transformed(transform).transformed(transform, inverse=False)
    np.testing.assert_allclose(back.trajectories, bundle.trajectories, atol=1e-9)


def test_bundle_validation():
    with pytest.raises(ShapeError):
        TrajectoryBundle(np.zeros((2, 3, 4)), [0, 1, 2])
    with pytest.raises(ShapeError):
        TrajectoryBundle(np.zeros((2, 3, 4, 2)), [0, 1])
    with pytest.raises(ShapeError):
        TrajectoryBundle(np.full((1, 1, 1, 2), np.nan), [0])
    with pytest.raises(ShapeError):
        TrajectoryBundle.from_dict({"K": 3, "agents": [{"agent_id": 0, "modes": [[[0.0, 0.0]]]}]})
