'''
Directed interaction graphs: cycle enumeration (Johnson's algorithm via
networkx), dagification by lowest-confidence edge removal, and level
scheduling by longest path from the sources.
'''

import json
import logging
from dataclasses import dataclass, field
from itertools import islice

import networkx as nx
import numpy as np

from .errors import CycleError, CycleLimitExceeded, GraphError
from .labeling import EdgeLabel

logger = logging.getLogger(__name__)

MAX_CYCLES = 10 ** 6


def directed_graph(n_nodes, edges):
    """edges: iterable of (src, dst, confidence)."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(n_nodes))
    for src, dst, conf in edges:
        if not 0.0 <= conf <= 1.0:
            raise GraphError(f"edge {src}->{dst}: confidence {conf} outside [0, 1]")
        graph.add_edge(int(src), int(dst), confidence=float(conf))
    return graph


@dataclass
class Dag:
    n_nodes: int
    edges: list
    levels: list = None
    removed_edges: list = field(default_factory=list)

    def __post_init__(self):
        self.edges = sorted((int(s), int(d), float(c)) for s, d, c in self.edges)
        if self.levels is None:
            self.levels = level_schedule(self.graph)

    @property
    def graph(self):
        return directed_graph(self.n_nodes, self.edges)

    def parents(self, node):
        return sorted(s for s, d, _ in self.edges if d == node)

    def level_of(self):
        return {n: i for i, level in enumerate(self.levels) for n in level}

    @property
    def depth(self):
        return len(self.levels)

    def to_dict(self):
        return {"n_nodes": self.n_nodes, "edges": [{"src": s, "dst": d, "conf": c} for s, d, c in self.edges]}

    @classmethod
    def from_dict(cls, doc):
        try:
            return cls(int(doc["n_nodes"]), [(e["src"], e["dst"], e["conf"]) for e in doc["edges"]])
        except (KeyError, TypeError) as e:
            raise GraphError(f"malformed dag document: {e!r}") from e

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _canonical_rotation(cycle):
    i = cycle.index(min(cycle))
    return cycle[i:] + cycle[:i]


def enumerate_cycles(graph, limit=None):
    '''
    All elementary cycles, each rotated to start at its lowest node, sorted.
    Raises CycleLimitExceeded when more than `limit` cycles exist.
    '''
    if any(True for _ in nx.selfloop_edges(graph)):
        raise CycleError("graph has self-loops")
    cycles = nx.simple_cycles(graph)
    if limit is not None:
        cycles = list(islice(cycles, limit + 1))
        if len(cycles) > limit:
            raise CycleLimitExceeded(limit)
    return sorted(_canonical_rotation(list(c)) for c in cycles)


def _weakest(graph, edges):
    return min(edges, key=lambda e: (graph.edges[e]["confidence"], e[0], e[1]))


def dagify(graph, max_cycles=MAX_CYCLES):
    '''
    Remove, one at a time, the lowest-confidence edge lying on any current
    cycle until the graph is acyclic.
    '''
    graph = graph.copy()
    removed = []
    while True:
        try:
            cycles = enumerate_cycles(graph, limit=max_cycles)
        except CycleLimitExceeded:
            logger.debug("more than %d cycles, falling back to DFS back-edge removal", max_cycles)
            removed.extend(_dagify_by_back_edges(graph))
            break
        if not cycles:
            break
        cyclic = {(c[i], c[(i + 1) % len(c)]) for c in cycles for i in range(len(c))}
        edge = _weakest(graph, cyclic)
        logger.debug("removing %d->%d (confidence %.4f) from %d cycles", edge[0], edge[1], graph.edges[edge]["confidence"], len(cycles))
        removed.append((edge[0], edge[1], graph.edges[edge]["confidence"]))
        graph.remove_edge(*edge)
    edges = [(s, d, a["confidence"]) for s, d, a in graph.edges(data=True)]
    return Dag(graph.number_of_nodes(), edges, removed_edges=removed)


def _dagify_by_back_edges(graph):
    removed = []
    while True:
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            return removed
        edge = _weakest(graph, [(u, v) for u, v in cycle])
        removed.append((edge[0], edge[1], graph.edges[edge]["confidence"]))
        graph.remove_edge(*edge)


def level_schedule(dag):
    '''
    level(n) = 0 for nodes without parents, else 1 + max level of its parents.
    Accepts a Dag or a networkx DiGraph.
    '''
    graph = dag.graph if isinstance(dag, Dag) else dag
    try:
        return [sorted(level) for level in nx.topological_generations(graph)]
    except nx.NetworkXUnfeasible as e:
        raise CycleError("level schedule requested for a cyclic graph") from e


def graph_from_predictions(probs, n_nodes):
    '''
    probs: mapping (m, n) with m < n -> 3-vector over (no_interaction,
    m_influences_n, n_influences_m). Argmax ties resolve in that class order.
    '''
    edges = []
    for (m, n), p in sorted(probs.items()):
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (3,) or not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
            raise GraphError(f"pair ({m}, {n}): not a probability vector: {p}")
        if not 0 <= m < n < n_nodes:
            raise GraphError(f"pair ({m}, {n}) is not canonical for {n_nodes} nodes")
        label = EdgeLabel(int(np.argmax(p)))
        if label == EdgeLabel.M_INFLUENCES_N:
            edges.append((m, n, float(p[label])))
        elif label == EdgeLabel.N_INFLUENCES_M:
            edges.append((n, m, float(p[label])))
    return directed_graph(n_nodes, edges)


def dag_from_interaction_graph(graph):
    '''
    Directed graph from an InteractionGraph's labels (confidence = labelled
    class probability when available, else 1), then dagified.
    '''
    edges = []
    for (m, n), label in graph.labels.items():
        if label == EdgeLabel.NO_INTERACTION:
            continue
        conf = 1.0
        if graph.probabilities is not None and (m, n) in graph.probabilities:
            conf = float(graph.probabilities[(m, n)][label])
        src, dst = (m, n) if label == EdgeLabel.M_INFLUENCES_N else (n, m)
        edges.append((src, dst, conf))
    return dagify(directed_graph(graph.n_agents, edges))


def is_acyclic(graph):
    return nx.is_directed_acyclic_graph(graph)
