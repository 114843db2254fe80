'''
Corpus evaluation: world-frame predictions, metric reports, factorized vs
baseline comparison, bootstrapped confidence and the sparse vs dense edge
economy.
'''

import logging
import time

import numpy as np
import pandas as pd
from sklearn.utils import resample

from .config import GraphSource, TrainConfig
from .dag import dag_from_interaction_graph
from .decoder import JointPredictor, TrajectoryBundle, decode_factorized
from .errors import AnchorError, GraphError
from .graph_predictor import predict_dag
from .labeling import DEFAULT_EPS_I, Heuristic, build_ground_truth_graph
from .metrics import COLUMNS, MetricReport, scene_metrics
from .scene import pick_eval_anchor, scene_tensors

logger = logging.getLogger(__name__)

BOOTSTRAP_ITERATIONS = 1000


def _anchor(scene, anchor):
    if anchor == "ego":
        if scene.ego_id is None:
            raise AnchorError(f"scene {scene.scene_id}: ego anchor requested but the scene has no ego")
        return scene.ego_id
    return pick_eval_anchor(scene)


def predict_bundle(model, scene, dag=None, anchor="eval"):
    '''
    K joint futures for every agent of `scene`, mapped back to world
    coordinates.
    '''
    tensors = scene_tensors(scene, _anchor(scene, anchor))
    joint, _ = model.forward(tensors, dag)
    bundle = TrajectoryBundle(joint.numpy(), tensors.agent_ids)
    return bundle.transformed(tensors.transform)


def scene_dag(scene, graph_source, stage1=None, heuristic=Heuristic.SPARSE, eps_i=DEFAULT_EPS_I):
    if GraphSource(graph_source) == GraphSource.GROUND_TRUTH:
        return dag_from_interaction_graph(build_ground_truth_graph(scene, heuristic, eps_i))
    if stage1 is None:
        raise GraphError("learned graphs need a stage-1 model")
    return predict_dag(stage1, scene)


def evaluate_corpus(model, corpus, config=None, stage1=None, graph_source=GraphSource.LEARNED,
                    rule="interaction", anchor="eval"):
    '''
    Per-scene metric rows aggregated into a MetricReport. Factorized models
    decode over learned DAGs (from `stage1`) or ground-truth DAGs; the
    interactive metrics always use the sparse ground-truth graph at the
    default 2.5 s window.
    '''
    config = TrainConfig() if config is None else config
    rows = []
    for scene in corpus:
        dag = None
        if getattr(model, "factorized", False):
            dag = scene_dag(scene, graph_source, stage1, config.heuristic, config.eps_i)
        bundle = predict_bundle(model, scene, dag, anchor)
        gt_graph = build_ground_truth_graph(scene, Heuristic.SPARSE, DEFAULT_EPS_I)
        rows.append(scene_metrics(bundle, scene, gt_graph, scene.ego_id, rule))
    report = MetricReport.aggregate(rows)
    logger.info("evaluated %d scenes: minFDE %.3f, iminFDE %.3f", report.n_scenes, report["minFDE"], report["iminFDE"])
    return report


def compare_reports(report, baseline, names=("factorized", "nonfactorized")):
    '''
    Both reports plus a delta row (baseline minus model, so positive values
    mean the model improves on the baseline).
    '''
    table = pd.DataFrame([report.values, baseline.values], index=list(names))[COLUMNS]
    table.loc["Δ"] = table.loc[names[1]] - table.loc[names[0]]
    return table


def bootstrap_summary(report, columns=COLUMNS, iterations=BOOTSTRAP_ITERATIONS):
    '''
    "mean +- std" of each corpus metric over scene resamples (resample i
    uses random_state=i).
    '''
    per_scene = report.per_scene
    samples = {col: [] for col in columns}
    for it in range(iterations):
        drawn = resample(per_scene, n_samples=len(per_scene), random_state=it)
        for col in columns:
            samples[col].append(drawn[col].mean(skipna=True))
    summary = {}
    for col in columns:
        values = np.asarray(samples[col], dtype=np.float64)
        values = values[np.isfinite(values)]
        summary[col] = f"{values.mean():.4f} +- {values.std():.4f}" if len(values) else "nan +- nan"
    return summary


def edge_economy(corpus, config=None, repeats=3):
    '''
    Per scene: directed edges under the sparse and dense heuristics, and the
    best-of-`repeats` wall time of factorized decoding over each heuristic's
    DAG (same weights, same features). `table.attrs` holds the corpus
    summary.
    '''
    config = TrainConfig() if config is None else config
    model = JointPredictor.from_config(config, factorized=True)
    rows = []
    for scene in corpus:
        tensors = scene_tensors(scene, pick_eval_anchor(scene))
        features = model.encoder.encode(tensors)
        row = {"scene_id": scene.scene_id, "n_agents": scene.n_agents}
        for heuristic in (Heuristic.SPARSE, Heuristic.DENSE):
            graph = build_ground_truth_graph(scene, heuristic, config.eps_i)
            dag = dag_from_interaction_graph(graph)
            timings = []
            for _ in range(repeats):
                start = time.perf_counter()
                decode_factorized(model.decoder, features, tensors.present, tensors.types, dag)
                timings.append(time.perf_counter() - start)
            row[f"{heuristic.value}_edges"] = graph.n_edges
            row[f"{heuristic.value}_levels"] = len(dag.levels)
            row[f"{heuristic.value}_seconds"] = min(timings)
        rows.append(row)
    table = pd.DataFrame(rows)
    if len(table):
        dense = table["dense_edges"].sum()
        table.attrs = {
            "fewer_edges_fraction": float((table["sparse_edges"] < table["dense_edges"]).mean()),
            "edge_reduction": float(1.0 - table["sparse_edges"].sum() / dense) if dense else 0.0,
            "sparse_seconds": float(table["sparse_seconds"].sum()),
            "dense_seconds": float(table["dense_seconds"].sum()),
        }
    return table
