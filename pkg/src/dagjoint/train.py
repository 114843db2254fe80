'''
Losses and two-stage training.

Stage 1 trains the interaction graph predictor (its own encoder) on
focal edge loss + proposal loss; stage 2 trains a separate encoder and the
factorized decoder on winner-takes-all regression + proposal loss over
DAGs precomputed once per corpus, from the frozen stage-1 model or from the
ground-truth graphs.
'''

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
import tensorflow as tf
from sklearn.utils import shuffle
from tensorflow import keras
from tqdm import tqdm

from .config import GraphSource, TrainConfig
from .dag import Dag, dag_from_interaction_graph
from .decoder import FutureEncoder, JointPredictor
from .encoder import HistoryEncoder
from .errors import DivergenceError, SceneError
from .graph_predictor import GraphPredictor, predict_dag
from .labeling import build_ground_truth_graph
from .numerics import (
    MLP, DecodeHead, Dense, GraphAttention, GRUCell, ModelParams, ResidualBlock, TypePairEncoder, as_tensor,
    focal_loss, grad_check, load_checkpoint, save_checkpoint, set_determinism, smooth_l1,
)
from .scene import AGENT_TYPES, pick_train_anchor, scene_tensors
from .synthetic import random_scene

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
LOG_FILE = "train_log.csv"
DAGS_FILE = "dags.json"
STAGE1_DIR = "stage1"
STAGE2_DIR = "stage2"


# losses

def mode_losses(pred, truth, valid):
    '''
    pred (K, A, T, 2), truth (A, T, 2), valid (A, T) -> (K,) mean over valid
    (agent, timestep) entries of the smooth-l1 error summed over x and y.
    '''
    pred = as_tensor(pred)
    weight = tf.cast(tf.convert_to_tensor(valid), tf.float64)
    per_step = smooth_l1(pred - as_tensor(truth)[None], axis=-1)
    count = tf.reduce_sum(weight)
    return tf.reduce_sum(per_step * weight[None], axis=(1, 2)) / tf.maximum(count, 1.0)


def loss_joint_wta(pred, truth, valid=None):
    '''
    Scene-level winner-takes-all regression: the loss of the modality with
    the lowest mean error; only that modality receives gradients.
    '''
    truth = as_tensor(truth)
    if valid is None:
        valid = tf.ones(truth.shape[:2], dtype=tf.bool)
    losses = mode_losses(pred, truth, valid)
    best = tf.argmin(tf.stop_gradient(losses))
    return tf.gather(losses, best)


def _evaluated_rows(tensors):
    return np.flatnonzero(tensors.evaluate)


def proposal_loss(proposals, tensors):
    rows = _evaluated_rows(tensors)
    if len(rows) == 0:
        return tf.constant(0.0, dtype=tf.float64)
    return loss_joint_wta(tf.gather(proposals, rows, axis=1), tensors.future[rows], tensors.future_valid[rows])


def loss_stage1(model, tensors, gt_graph, config):
    '''
    Mean focal loss over the evaluated canonical pairs plus, when enabled,
    the proposal loss. Returns (total, {"int": ..., "prop": ...}).
    '''
    pairs = tensors.evaluated_pairs()
    probs, proposals = model.forward(tensors, pairs)
    if pairs:
        targets = [int(gt_graph.labels[pair]) for pair in pairs]
        l_int = tf.reduce_mean(focal_loss(probs, targets, config.gamma, config.alpha))
    else:
        l_int = tf.constant(0.0, dtype=tf.float64)
    l_prop = proposal_loss(proposals, tensors) if config.proposal_loss else tf.constant(0.0, dtype=tf.float64)
    return l_int + l_prop, {"int": l_int, "prop": l_prop}


def loss_stage2(model, tensors, dag, config, teacher_forcing=None):
    '''
    Winner-takes-all regression over the K joint predictions of the
    evaluated agents plus, when enabled, the proposal loss. Returns
    (total, {"reg": ..., "prop": ...}).
    '''
    teacher_forcing = config.teacher_forcing if teacher_forcing is None else teacher_forcing
    joint, proposals = model.forward(tensors, dag, teacher_forcing=teacher_forcing)
    rows = _evaluated_rows(tensors)
    if len(rows):
        l_reg = loss_joint_wta(tf.gather(joint, rows, axis=1), tensors.future[rows], tensors.future_valid[rows])
    else:
        l_reg = tf.constant(0.0, dtype=tf.float64)
    l_prop = proposal_loss(proposals, tensors) if config.proposal_loss else tf.constant(0.0, dtype=tf.float64)
    return l_reg + l_prop, {"reg": l_reg, "prop": l_prop}


# optimisation

def learning_rate_schedule(config, steps_per_epoch):
    if not config.decay_epochs:
        return keras.optimizers.schedules.ExponentialDecay(config.learning_rate, decay_steps=1, decay_rate=1.0)
    boundaries = [int(e * steps_per_epoch) for e in config.decay_epochs]
    values = [config.learning_rate * config.decay_factor ** i for i in range(len(boundaries) + 1)]
    return keras.optimizers.schedules.PiecewiseConstantDecay(boundaries, values)


def _fit(stage, model, scenes, scene_loss, config, epochs):
    '''
    Mini-batch Adam over `scenes` for `epochs` epochs. `scene_loss(i,
    tensors)` returns the loss of scene i given its tensors (normalized on a
    random agent each epoch). Returns the per-epoch log rows.
    '''
    n = len(scenes)
    if n == 0:
        raise SceneError("training needs at least one scene")
    mismatched = [scene.scene_id for scene in scenes if scene.t_fut != config.t_fut]
    if mismatched:
        raise SceneError(f"{len(mismatched)} scene(s) do not have T_fut={config.t_fut} future steps, e.g. {mismatched[0]}")
    steps =math.ceil(n / config.batch_size)
    schedule = learning_rate_schedule(config, steps)
    optimizer = keras.optimizers.Adam(learning_rate=schedule)
    variables = ModelParams.of(model).variables
    rows = []
    for epoch in range(epochs):
        order = shuffle(np.arange(n), random_state=(config.seed * 1000 + stage * 100 + epoch) % 2 ** 31)
        rng = np.random.default_rng([config.seed, stage, epoch])
        losses = []
        bar = tqdm(range(steps), desc=f"stage {stage} epoch {epoch + 1}/{epochs}", disable=not config.progress, leave=False)
        for b in bar:
            batch = order[b * config.batch_size:(b + 1) * config.batch_size]
            tensors = [scene_tensors(scenes[i], pick_train_anchor(scenes[i], rng)) for i in batch]
            with tf.GradientTape() as tape:
                loss = tf.add_n([scene_loss(i, t) for i, t in zip(batch, tensors)]) / len(batch)
            value = float(loss)
            if not np.isfinite(value):
                raise DivergenceError(stage, epoch + 1, b, [scenes[i].scene_id for i in batch], value)
            grads = tape.gradient(loss, variables)
            grads = [tf.zeros_like(v) if g is None else tf.convert_to_tensor(g) for g, v in zip(grads, variables)]
            if config.grad_clip is not None:
                grads, _ = tf.clip_by_global_norm(grads, config.grad_clip)
            optimizer.apply_gradients(zip(grads, variables))
            losses.append(value)
            bar.set_postfix(loss=f"{value:.4f}")
        mean = float(np.mean(losses))
        lr = float(schedule(epoch * steps))
        rows.append({"stage": stage, "epoch": epoch + 1, "loss": mean, "learning_rate": lr})
        logger.info("stage %d epoch %d/%d: loss %.5f (lr %.2e)", stage, epoch + 1, epochs, mean, lr)
    return rows


def ground_truth_graphs(corpus, config):
    return [build_ground_truth_graph(scene, config.heuristic, config.eps_i) for scene in corpus]


def train_stage1(corpus, config, graphs=None):
    graphs = ground_truth_graphs(corpus, config) if graphs is None else graphs
    model = GraphPredictor.from_config(config)

    def scene_loss(i, tensors):
        return loss_stage1(model, tensors, graphs[i], config)[0]

    rows = _fit(1, model, corpus, scene_loss, config, config.epochs_stage1)
    return model, rows


def stage2_dags(corpus, config, stage1=None, graphs=None):
    '''
    One DAG per scene: from the ground-truth graphs, or predicted by the
    frozen stage-1 model.
    '''
    if config.train_graph == GraphSource.GROUND_TRUTH:
        graphs = ground_truth_graphs(corpus, config) if graphs is None else graphs
        return [dag_from_interaction_graph(g) for g in graphs]
    if stage1 is None:
        raise SceneError("learned stage-2 graphs need a stage-1 model")
    return [predict_dag(stage1, scene) for scene in corpus]


def train_stage2(corpus, config, dags=None, factorized=True):
    model = JointPredictor.from_config(config, factorized=factorized)
    if factorized and dags is None:
        raise SceneError("factorized training needs one dag per scene")

    def scene_loss(i, tensors):
        return loss_stage2(model, tensors, dags[i] if dags is not None else None, config)[0]

    rows = _fit(2, model, corpus, scene_loss, config, config.epochs_stage2)
    return model, rows


@dataclass
class TrainResult:
    config: TrainConfig
    stage1: GraphPredictor = None
    stage2: JointPredictor = None
    dags: list = None
    log: pd.DataFrame = None


def train_two_stage(corpus, config, out_dir=None, stages=(1, 2), stage1=None):
    '''
    Stage 1 then stage 2 with separate encoder weights. Pass a trained
    `stage1` to run stage 2 alone with learned graphs.
    '''
    set_determinism(config.seed)
    graphs = ground_truth_graphs(corpus, config)
    rows = []
    if 1 in stages:
        stage1, stage_rows = train_stage1(corpus, config, graphs)
        rows += stage_rows
    stage2 = dags = None
    if 2 in stages:
        dags = stage2_dags(corpus, config, stage1, graphs)
        stage2, stage_rows = train_stage2(corpus, config, dags, factorized=config.decoder.value == "factorized")
        rows += stage_rows
    result = TrainResult(config, stage1, stage2, dags, pd.DataFrame(rows, columns=["stage", "epoch", "loss", "learning_rate"]))
    if out_dir is not None:
        save_run(out_dir, result)
    return result


def train_baseline(corpus, config, out_dir=None):
    """Non-factorized baseline trained under the same stage-2 hyperparameters."""
    config = config.replace(decoder="nonfactorized")
    set_determinism(config.seed)
    model, rows = train_stage2(corpus, config, factorized=False)
    result = TrainResult(config, stage2=model, log=pd.DataFrame(rows, columns=["stage", "epoch", "loss", "learning_rate"]))
    if out_dir is not None:
        save_run(out_dir, result)
    return result


# run directories

def save_run(directory, result):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    result.config.dump(directory / CONFIG_FILE)
    spec_hash = result.config.spec_hash()
    if result.stage1 is not None:
        save_checkpoint(directory / STAGE1_DIR, ModelParams.of(result.stage1), result.config.seed, spec_hash)
    if result.stage2 is not None:
        save_checkpoint(directory / STAGE2_DIR, ModelParams.of(result.stage2), result.config.seed, spec_hash)
    if result.dags is not None:
        (directory / DAGS_FILE).write_text(json.dumps(dag_list_to_json(result.dags)))
    if result.log is not None:
        result.log.to_csv(directory / LOG_FILE, index=False)
    return directory


def load_run(directory):
    directory = Path(directory)
    config = TrainConfig.load(directory / CONFIG_FILE)
    result = TrainResult(config)
    if (directory / STAGE1_DIR).exists():
        result.stage1 = GraphPredictor.from_config(config)
        load_checkpoint(directory / STAGE1_DIR, ModelParams.of(result.stage1))
    if (directory / STAGE2_DIR).exists():
        result.stage2 = JointPredictor.from_config(config)
        load_checkpoint(directory / STAGE2_DIR, ModelParams.of(result.stage2))
    if (directory / DAGS_FILE).exists():
        result.dags = dag_list_from_json(json.loads((directory / DAGS_FILE).read_text()))
    if (directory / LOG_FILE).exists():
        result.log = pd.read_csv(directory / LOG_FILE)
    return result


def dag_list_to_json(dags):
    return [dag.to_dict() for dag in dags]


def dag_list_from_json(docs):
    return [Dag.from_dict(doc) for doc in docs]


# gradient checks

def _projection_loss(block_fn, shape, rng):
    projection = tf.constant(rng.normal(size=shape))
    return lambda: tf.reduce_sum(block_fn() * projection)


def gradient_suite(seed=0, tolerance=1e-5, max_entries=8):
    '''
    Finite-difference checks of every differentiable block at small widths,
    of the stage-1 loss, and of the end-to-end stage-2 loss over a
    3-level DAG on 6 agents (teacher forcing off, so gradients also flow
    through the parents' decoded futures). Returns {name: GradCheckReport}.
    '''
    rng = np.random.default_rng(seed)
    x3 = as_tensor(rng.normal(size=(5, 3)))
    x4 = as_tensor(rng.normal(size=(5, 4)))
    checks = {}

    def run(name, block, fn, shape):
        checks[name] = grad_check(
            _projection_loss(fn, shape, rng), ModelParams.of(block), tolerance, max_entries=max_entries, seed=seed,
        )

    dense = Dense("dense", 3, 4, seed)
    run("dense", dense, lambda: dense(x3), (5, 4))
    mlp = MLP("mlp", (3, 5, 4), seed)
    run("mlp", mlp, lambda: mlp(x3), (5, 4))
    residual = ResidualBlock("residual", 4, seed)
    run("residual", residual, lambda: residual(x4), (5, 4))
    gru = GRUCell("gru", 3, 4, seed)
    run("gru", gru, lambda: gru(x3, x4), (5, 4))
    attention = GraphAttention("attention", 4, 4, 4, seed)
    messages = as_tensor(rng.normal(size=(5, 3, 4)))
    parent_mask = tf.constant(rng.random((5, 3)) < 0.7)
    run("attention", attention, lambda: attention(messages, x4, parent_mask)[0], (5, 4))
    f_type = TypePairEncoder("f_type", len(AGENT_TYPES), 3, 4, seed)
    types_m, types_n = rng.integers(len(AGENT_TYPES), size=5), rng.integers(len(AGENT_TYPES), size=5)
    run("f_type", f_type, lambda: f_type(types_m, types_n), (5, 4))
    head = DecodeHead("head", 4, 2, 3, seed)
    run("head", head, lambda: head.decode_all(x4), (2, 5, 3, 2))
    future_encoder = FutureEncoder("future_encoder", 3, 4, seed)
    futures = as_tensor(rng.normal(size=(5, 3, 2)))
    run("future_encoder", future_encoder, lambda: future_encoder(futures, x4[:, :2]), (5, 4))

    config = TrainConfig(
        seed=seed, k=2, k_prop=2, hidden=4, gru_hidden=5, type_embed=3, t_obs=4, t_fut=3,
        teacher_forcing=False, progress=False,
    )
    scene = random_scene(seed, 6, config.t_obs, config.t_fut, config.dt)
    tensors = scene_tensors(scene, 0)
    encoder = HistoryEncoder("encoder", 4, 5, base_seed=seed)
    run("encoder", encoder, lambda: encoder.encode(tensors), (6, 4))

    stage1 = GraphPredictor.from_config(config)
    graph = build_ground_truth_graph(scene, config.heuristic, config.eps_i)
    checks["stage1_loss"] = grad_check(
        lambda: loss_stage1(stage1, tensors, graph, config)[0], ModelParams.of(stage1), tolerance,
        max_entries=max_entries, seed=seed,
    )
    stage2 = JointPredictor.from_config(config, factorized=True)
    dag = Dag(6, [(0, 2, 1.0), (1, 2, 1.0), (1, 5, 1.0), (2, 4, 1.0), (3, 4, 1.0)])
    checks["stage2_loss"] = grad_check(
        lambda: loss_stage2(stage2, tensors, dag, config)[0], ModelParams.of(stage2), tolerance,
        max_entries=max_entries, seed=seed,
    )
    for name, report in checks.items():
        logger.info("gradient check %s: max relative error %.3e", name, report.max_rel_error)
    return checks
