import numpy as np
import pytest

from conftest import make_scene, make_track
from dagjoint.config import GraphSource
from dagjoint.decoder import JointPredictor
from dagjoint.errors import AnchorError, GraphError
from dagjoint.evaluate import (
    bootstrap_summary, compare_reports, edge_economy, evaluate_corpus, predict_bundle, scene_dag,
)
from dagjoint.metrics import COLUMNS, MetricReport
from dagjoint.scene import pick_eval_anchor, scene_tensors


@pytest.fixture
def config(tiny_config):
    return tiny_config.replace(t_fut=30)


def _corpus():
    scenes = []
    for i in range(3):
        tracks = [
            make_track(0, (-11.0, 0.0), (10.0, 0.0)),
            make_track(1, (0.0, -16.0), (0.0, 10.0)),
            make_track(2, (-50.0, 200.0 + i), (10.0, 0.0)),
        ]
        scenes.append(make_scene(tracks, scene_id=f"scene-{i}"))
    return scenes


def test_predict_bundle_is_world_frame(config, crossing_scene):
    model = JointPredictor.from_config(config, factorized=False)
    bundle = predict_bundle(model, crossing_scene)
    tensors = scene_tensors(crossing_scene, pick_eval_anchor(crossing_scene))
    joint, _ = model.forward(tensors)
    np.testing.assert_allclose(tensors.transform.apply_points(bundle.trajectories), joint.numpy(), atol=1e-9)
    assert bundle.agent_ids == [0, 1, 2]


def test_ego_anchor(config, crossing_scene):
    model = JointPredictor.from_config(config, factorized=False)
    with pytest.raises(AnchorError):
        predict_bundle(model, crossing_scene, anchor="ego")
    crossing_scene.ego_id = 2
    assert predict_bundle(model, crossing_scene, anchor="ego").k == config.k


def test_scene_dag_sources(crossing_scene):
    dag = scene_dag(crossing_scene, GraphSource.GROUND_TRUTH)
    assert [(s, d) for s, d, _ in dag.edges] == [(0, 1)]
    with pytest.raises(GraphError):
        scene_dag(crossing_scene, GraphSource.LEARNED)


def test_evaluate_corpus_reports(config):
    corpus = _corpus()
    model = JointPredictor.from_config(config, factorized=True)
    report = evaluate_corpus(model, corpus, config, graph_source="ground_truth")
    assert report.n_scenes == 3
    assert set(report.values) == set(COLUMNS)
    assert report["minFDE"] > 0
    # agents 0 and 1 interact in every scene
    assert not np.isnan(report["iminFDE"])
    assert list(report.per_scene["scene_id"]) == ["scene-0", "scene-1", "scene-2"]
    baseline = evaluate_corpus(JointPredictor.from_config(config, factorized=False), corpus, config)
    assert baseline.n_scenes == 3


def test_compare_reports_delta():
    report = MetricReport({c: 1.0 for c in COLUMNS}, 4)
    baseline = MetricReport({c: 1.5 for c in COLUMNS}, 4)
    table = compare_reports(report, baseline)
    assert list(table.index) == ["factorized", "nonfactorized", "Δ"]
    assert table.loc["Δ", "minFDE"] == 0.5


def test_bootstrap_summary_format():
    rows = [{"scene_id": str(i), **{c: float(i) for c in COLUMNS}} for i in range(5)]
    report = MetricReport.aggregate(rows)
    summary = bootstrap_summary(report, ["minFDE"], iterations=50)
    mean, std = (float(v) for v in summary["minFDE"].split(" +- "))
    assert 1.0 < mean < 3.0
    assert std > 0
    assert bootstrap_summary(report, ["minFDE"], iterations=50) == summary


def test_bootstrap_all_missing():
    rows = [{"scene_id": "a", **{c: 1.0 for c in COLUMNS}, "iminFDE": np.nan}]
    summary = bootstrap_summary(MetricReport.aggregate(rows), ["iminFDE"], iterations=5)
    assert summary["iminFDE"] == "nan +- nan"


def test_edge_economy(config):
    scene = make_scene([make_track(0, (0.0, 0.0), (10.0, 0.0)), make_track(1, (0.0, 5.0), (10.0, 0.0))])
    table = edge_economy([scene], config, repeats=1)
    row = table.iloc[0]
    assert (row["sparse_edges"], row["dense_edges"]) == (0, 1)
    assert (row["sparse_levels"], row["dense_levels"]) == (1, 2)
    assert table.attrs["fewer_edges_fraction"] == 1.0
    assert table.attrs["edge_reduction"] == 1.0
