from itertools import permutations

import networkx as nx
import numpy as np
import pytest

from dagjoint.dag import (
    Dag, dag_from_interaction_graph, dagify, directed_graph, enumerate_cycles, graph_from_predictions, is_acyclic,
    level_schedule,
)
from dagjoint.errors import CycleError, CycleLimitExceeded, GraphError
from dagjoint.labeling import InteractionGraph


def _random_graph(rng, n, p):
    edges = [(s, d, float(rng.random())) for s in range(n) for d in range(n) if s != d and rng.random() < p]
    return directed_graph(n, edges)


def _brute_cycles(graph):
    '''Every elementary cycle by trying each ordering of larger nodes after its minimum.'''
    nodes = sorted(graph.nodes)
    found = []
    for start in nodes:
        larger = [v for v in nodes if v > start and nx.has_path(graph, v, start)]
        for size in range(1, len(larger) + 1):
            for rest in permutations(larger, size):
                cycle = (start, *rest)
                if all(graph.has_edge(cycle[i], cycle[(i + 1) % len(cycle)]) for i in range(len(cycle))):
                    found.append(list(cycle))
    return sorted(found)


def test_triangle():
    graph = directed_graph(3, [(0, 1, 0.5), (1, 2, 0.5), (2, 0, 0.5)])
    assert enumerate_cycles(graph) == [[0, 1, 2]]


def test_cycles_match_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        graph = _random_graph(rng, int(rng.integers(1, 9)), 0.3)
        assert enumerate_cycles(graph) == _brute_cycles(graph)


def test_cycle_limit():
    graph = directed_graph(3, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)])
    assert len(enumerate_cycles(graph, limit=2)) == 2
    with pytest.raises(CycleLimitExceeded):
        enumerate_cycles(graph, limit=1)


def test_self_loop_rejected():
    graph = nx.DiGraph()
    graph.add_edge(0, 0, confidence=1.0)
    with pytest.raises(CycleError):
        enumerate_cycles(graph)


def test_confidence_range():
    with pytest.raises(GraphError):
        directed_graph(2, [(0, 1, 1.5)])


def test_dagify_removes_weakest_cycle_edge():
    graph = directed_graph(3, [(0, 1, 0.9), (1, 2, 0.8), (2, 0, 0.7)])
    dag = dagify(graph)
    assert dag.edges == [(0, 1, 0.9), (1, 2, 0.8)]
    assert dag.removed_edges == [(2, 0, 0.7)]
    assert dag.levels == [[0], [1], [2]]


def test_dagify_two_independent_cycles():
    graph = directed_graph(4, [(0, 1, 0.6), (1, 0, 0.4), (2, 3, 0.3), (3, 2, 0.7)])
    dag = dagify(graph)
    assert sorted(dag.removed_edges) == [(1, 0, 0.4), (2, 3, 0.3)]
    assert dag.edges == [(0, 1, 0.6), (3, 2, 0.7)]


def test_dagify_keeps_acyclic_graph():
    graph = directed_graph(4, [(0, 1, 0.1), (0, 2, 0.2), (1, 3, 0.3), (2, 3, 0.4)])
    dag = dagify(graph)
    assert dag.removed_edges == []
    assert len(dag.edges) == 4


def test_dagify_random_graphs():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        graph = _random_graph(rng, int(rng.integers(1, 21)), 0.15)
        dag = dagify(graph)
        assert is_acyclic(dag.graph)
        assert len(dag.edges) + len(dag.removed_edges) == graph.number_of_edges()
        assert len(dag.removed_edges) <= len(enumerate_cycles(graph))
        # each removal broke a cycle of the graph as it stood at that point
        current = graph.copy()
        for src, dst, _ in dag.removed_edges:
            assert nx.has_path(current, dst, src)
            current.remove_edge(src, dst)
        assert sorted(current.edges) == sorted((s, d) for s, d, _ in dag.edges)


def test_dagify_back_edge_fallback():
    rng = np.random.default_rng(2)
    graph = _random_graph(rng, 8, 0.5)
    assert len(enumerate_cycles(graph)) > 1
    dag = dagify(graph, max_cycles=1)
    assert is_acyclic(dag.graph)
    assert dag.removed_edges


def test_level_schedule_examples():
    diamond = Dag(4, [(0, 1, 1.0), (0, 2, 1.0), (1, 3, 1.0), (2, 3, 1.0)])
    assert diamond.levels == [[0], [1, 2], [3]]
    assert diamond.parents(3) == [1, 2]
    skip = Dag(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    assert skip.levels == [[0], [1], [2]]
    assert Dag(3, []).levels == [[0, 1, 2]]
    assert Dag(5, [(3, 0, 1.0)]).level_of() == {1: 0, 2: 0, 3: 0, 4: 0, 0: 1}


def test_level_schedule_rejects_cycles():
    with pytest.raises(CycleError):
        level_schedule(directed_graph(2, [(0, 1, 1.0), (1, 0, 1.0)]))


def test_levels_respect_edges():
    rng = np.random.default_rng(3)
    for _ in range(100):
        dag = dagify(_random_graph(rng, 10, 0.2))
        level = dag.level_of()
        for src, dst, _ in dag.edges:
            assert level[src] < level[dst]
        for node, lvl in level.items():
            if lvl > 0:
                assert max(level[p] for p in dag.parents(node)) == lvl - 1


def test_graph_from_predictions():
    probs = {
        (0, 1): [0.2, 0.5, 0.3],
        (0, 2): [0.1, 0.2, 0.7],
        (1, 2): [0.4, 0.4, 0.2],
        (0, 3): [0.2, 0.4, 0.4],
    }
    graph = graph_from_predictions(probs, 4)
    assert sorted(graph.edges(data="confidence")) == [(0, 1, 0.5), (0, 3, 0.4), (2, 0, 0.7)]


@pytest.mark.parametrize("probs", [
    {(0, 1): [0.5, 0.6, 0.1]},
    {(1, 0): [0.2, 0.5, 0.3]},
    {(0, 1): [np.nan, 0.5, 0.5]},
])
def test_graph_from_predictions_rejects(probs):
    with pytest.raises(GraphError):
        graph_from_predictions(probs, 2)


def test_dag_from_interaction_graph_uses_probabilities():
    graph = InteractionGraph(
        3, {(0, 1): 1, (1, 2): 1, (0, 2): 2},
        {(0, 1): [0.1, 0.8, 0.1], (1, 2): [0.1, 0.6, 0.3], (0, 2): [0.2, 0.1, 0.7]},
    )
    dag = dag_from_interaction_graph(graph)
    assert dag.removed_edges == [(1, 2, 0.6)]
    assert dag.edges == [(0, 1, 0.8), (2, 0, 0.7)]


def test_dag_json_round_trip():
    dag = Dag(4, [(2, 3, 0.25), (0, 1, 1.0)])
    loaded = Dag.from_json(dag.to_json())
    assert loaded.edges == dag.edges
    assert loaded.levels == dag.levels
    with pytest.raises(GraphError):
        Dag.from_dict({"edges": []})
