'''
Command line: python -m dagjoint <command> ...

    gen        synthetic corpus from a SyntheticSpec JSON
    label      ground-truth interaction graphs for a corpus
    dagify     interaction / directed graph JSON -> DAG JSON
    train      two-stage training (or the non-factorized baseline)
    eval       metric report of a checkpoint, optionally against a baseline
    gradcheck  finite-difference gradient suite
    plot-emit  SVG plots of an evaluation report

Exit codes: 0 success, 2 validation failure, 3 training divergence.
'''

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from .config import GraphSource, SyntheticSpec, TrainConfig
from .dag import dag_from_interaction_graph, dagify, directed_graph
from .errors import DivergenceError, GraphError, ValidationError
from .evaluate import bootstrap_summary, compare_reports, evaluate_corpus
from .graph_predictor import edge_type_accuracy
from .labeling import Heuristic, InteractionGraph, build_ground_truth_graph, edge_type_proportions
from .log import setup_logging
from .plotting import emit_plots
from .scene import load_corpus, save_corpus
from .synthetic import generate_corpus
from .train import gradient_suite, load_run, train_baseline, train_two_stage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3


def cmd_gen(args):
    spec = SyntheticSpec.load(args.spec)
    if args.seed is not None:
        spec = spec.replace(seed=args.seed)
    corpus = generate_corpus(spec, args.count)
    save_corpus(corpus, args.out)
    print(f"Wrote {len(corpus)} scenes to {args.out}")


def cmd_label(args):
    corpus = load_corpus(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graphs = []
    for scene in corpus:
        graph = build_ground_truth_graph(scene, args.heuristic, args.eps_i)
        (out / f"{scene.scene_id}.graph.json").write_text(graph.to_json())
        graphs.append(graph)
    table = edge_type_proportions(graphs)
    print(table.to_string(index=False))
    print("Edges per scene: ", f"{table.attrs['edges_per_scene']:.3f}")


def read_graph(path):
    '''
    An InteractionGraph document ({"n_agents", "edges": [{m, n, label}]})
    or a directed graph document ({"n_nodes", "edges": [{src, dst, conf}]}).
    '''
    doc = json.loads(Path(path).read_text())
    if "n_agents" in doc:
        return InteractionGraph.from_dict(doc)
    try:
        return directed_graph(int(doc["n_nodes"]), [(e["src"], e["dst"], e["conf"]) for e in doc["edges"]])
    except (KeyError, TypeError) as e:
        raise GraphError(f"{path}: not a graph document: {e!r}") from e


def cmd_dagify(args):
    graph = read_graph(args.input)
    dag = dag_from_interaction_graph(graph) if isinstance(graph, InteractionGraph) else dagify(graph, args.max_cycles)
    text = dag.to_json()
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text)
    print(f"Levels: {dag.levels}", file=sys.stderr)
    if dag.removed_edges:
        print(f"Removed edges: {dag.removed_edges}", file=sys.stderr)


def cmd_train(args):
    config = TrainConfig.load(args.config)
    corpus = load_corpus(args.corpus)
    if args.baseline:
        result = train_baseline(corpus, config, args.out)
    else:
        stages = {"1": (1,), "2": (2,), "both": (1, 2)}[args.stage]
        stage1 = None
        if stages == (2,) and config.train_graph == GraphSource.LEARNED:
            if args.stage1 is None:
                raise ValidationError("stage 2 with learned graphs needs --stage1 CKPT")
            stage1 = load_run(args.stage1).stage1
        result = train_two_stage(corpus, config, args.out, stages=stages, stage1=stage1)
    print(result.log.to_string(index=False))
    print(f"Checkpoints written to {args.out}")


def cmd_eval(args):
    corpus = load_corpus(args.corpus)
    run = load_run(args.checkpoint)
    if run.stage2 is None:
        raise ValidationError(f"{args.checkpoint} holds no stage-2 checkpoint")
    reports = {}
    name = run.config.decoder.value
    reports[name] = evaluate_corpus(run.stage2, corpus, run.config, run.stage1, args.graph, args.rule, args.anchor)
    if args.baseline:
        baseline = load_run(args.baseline)
        reports[baseline.config.decoder.value + " (baseline)"] = evaluate_corpus(
            baseline.stage2, corpus, baseline.config, rule=args.rule, anchor=args.anchor,
        )
    for label, report in reports.items():
        print(report.to_table(label))
    names = list(reports)
    if len(names) == 2:
        print(compare_reports(reports[names[0]], reports[names[1]], names).to_string(float_format=lambda v: f"{v:.3f}"))
    bootstrap = {label: bootstrap_summary(report, iterations=args.bootstrap) for label, report in reports.items()} if args.bootstrap else {}
    doc = {"reports": {label: r.to_dict() for label, r in reports.items()}, "bootstrap": bootstrap}
    if run.stage1 is not None:
        table, _, overall = edge_type_accuracy(run.stage1, corpus, run.config.heuristic, run.config.eps_i)
        print(table.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
        print("Edge Type Accuracy: ", round(overall, 3))
        doc["edge_types"] = {"accuracy": overall, "per_class": json.loads(table.to_json(orient="records"))}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
    else:
        print(json.dumps({label: r.to_dict()["metrics"] for label, r in reports.items()}, indent=2))


def cmd_gradcheck(args):
    checks = gradient_suite(seed=args.seed, tolerance=args.tolerance, max_entries=args.max_entries)
    failed = []
    for name, report in checks.items():
        print(f"== {name}")
        print(report.to_table())
        if not report.passed:
            failed.append(name)
    print("Gradient check: ", "PASS" if not failed else f"FAIL ({', '.join(failed)})")
    if failed:
        raise ValidationError(f"gradient check failed for {', '.join(failed)}")


def cmd_plot_emit(args):
    doc = json.loads(Path(args.report).read_text())
    log = pd.read_csv(args.log) if args.log else None
    for path in emit_plots(doc, args.out, log):
        print(path)


def build_parser():
    parser = argparse.ArgumentParser(prog="dagjoint", description="Factorized joint trajectory prediction over interaction DAGs")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("label", help="ground-truth interaction graphs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--heuristic", choices=[h.value for h in Heuristic], default="sparse")
    p.add_argument("--eps-i", dest="eps_i", type=float, default=2.5)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("dagify", help="remove cycles from a graph")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--max-cycles", dest="max_cycles", type=int, default=10 ** 6)
    p.set_defaults(func=cmd_dagify)

    p = sub.add_parser("train", help="train both stages (or the baseline)")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--stage", choices=["1", "2", "both"], default="both")
    p.add_argument("--out", required=True)
    p.add_argument("--stage1", help="run directory holding a trained stage-1 model")
    p.add_argument("--baseline", action="store_true", help="train the non-factorized baseline")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--metrics", choices=["all"], default="all")
    p.add_argument("--baseline")
    p.add_argument("--graph", choices=[g.value for g in GraphSource], default="learned")
    p.add_argument("--rule", choices=["interaction", "endpoint"], default="interaction")
    p.add_argument("--anchor", choices=["eval", "ego"], default="eval")
    p.add_argument("--bootstrap", type=int, default=1000, help="resamples (0 disables)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--max-entries", dest="max_entries", type=int, default=8)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot-emit", help="SVG plots of an evaluation report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="train_log.csv of the run")
    p.set_defaults(func=cmd_plot_emit)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        args.func(args)
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ValidationError, json.JSONDecodeError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK
