import itertools
import math

import networkx as nx
import numpy as np
import pytest

from conftest import complete_graph, cycle_graph, path_graph, star_graph
from topocon.exceptions import DisconnectedGraphError, EdgeNotFoundError, GraphError
from topocon.models.topology import INF_HOPS
from topocon.services.graph_service import (
    algebraic_connectivity, apsp, bfs_tree, build_topology, central_node, communication_edges,
    decremental_update, diameter, diameter_path, edge_is_critical, eccentricity_affected_sources,
    is_connected, is_reachable, laplacian, radius, read_edge_list, shortest_path, write_edge_list,
)


def test_laplacian_examples():
    assert np.array_equal(laplacian(build_topology(3)), np.zeros((3, 3)))
    expected_k3 = np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]], dtype=float)
    assert np.array_equal(laplacian(complete_graph(3)), expected_k3)
    path = laplacian(path_graph(3))
    assert list(np.diag(path)) == [1, 2, 1]
    assert np.allclose(path.sum(axis=1), 0)


def test_is_connected_examples():
    assert is_connected(path_graph(3))
    assert algebraic_connectivity(path_graph(3)) == pytest.approx(1.0)
    assert not is_connected(build_topology(2))
    assert algebraic_connectivity(complete_graph(4)) == pytest.approx(4.0)
    assert is_connected(build_topology(1))


def test_apsp_examples():
    dist, sigma = apsp(path_graph(4))
    assert dist[0, 3] == 3 and sigma[0, 3] == 1
    dist, sigma = apsp(cycle_graph(4))
    assert dist[0, 2] == 2 and sigma[0, 2] == 2
    dist, sigma = apsp(build_topology(2))
    assert dist[0, 1] == INF_HOPS and sigma[0, 1] == 0
    assert sigma[1, 1] == 1 and dist[1, 1] == 0


def test_metrics_examples():
    star = star_graph(5)
    assert (diameter(star), radius(star), central_node(star)) == (2, 1, 1)
    path = path_graph(9)
    assert (diameter(path), radius(path), central_node(path)) == (8, 4, 5)
    k5 = complete_graph(5)
    assert (diameter(k5), radius(k5), central_node(k5)) == (1, 1, 1)


def test_metrics_on_disconnected_graph_raise():
    topo = build_topology(4, [(1, 2), (3, 4)])
    for op in (diameter, radius, central_node):
        with pytest.raises(DisconnectedGraphError):
            op(topo)


def test_edge_is_critical_examples():
    assert edge_is_critical(path_graph(3), (1, 2), 1, 3)
    cycle = cycle_graph(4)
    assert not edge_is_critical(cycle, (1, 2), 1, 3)
    assert not edge_is_critical(complete_graph(4), (1, 2), 3, 4)
    with pytest.raises(EdgeNotFoundError):
        edge_is_critical(path_graph(3), (1, 3), 1, 3)


def test_decremental_examples():
    # cycle 1..5 plus la corde (1, 3)
    topo = build_topology(5, [(1, 2), (2, 3), (3, 4), (4, 5), (1, 5), (1, 3)])
    updated = decremental_update(topo, deleted=[(1, 3)])
    assert updated.distance(1, 3) == 2
    assert updated.distance(1, 4) == 2
    bridge = decremental_update(path_graph(4), deleted=[(2, 3)])
    assert bridge.distance(1, 4) == INF_HOPS
    assert not bridge.is_reachable_everywhere
    shortcut = decremental_update(path_graph(9), added=[(1, 9)])
    assert diameter(shortcut) == 4


def test_decremental_rejects_bad_input():
    with pytest.raises(EdgeNotFoundError):
        decremental_update(path_graph(3), deleted=[(1, 3)])
    with pytest.raises(GraphError):
        decremental_update(path_graph(3), added=[(1, 2)])


def _random_mutations(rng, n, rounds):
    edges = {(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if rng.random() < 0.2}
    topo = build_topology(n, edges)
    for _ in range(rounds):
        present = sorted(topo.edges)
        absent = sorted(set(itertools.combinations(range(1, n + 1), 2)) - topo.edges)
        k_del = int(rng.integers(0, min(3, len(present)) + 1)) if present else 0
        k_add = int(rng.integers(0, min(3, len(absent)) + 1)) if absent else 0
        deleted = [present[i] for i in rng.choice(len(present), k_del, replace=False)] if k_del else []
        added = [absent[i] for i in rng.choice(len(absent), k_add, replace=False)] if k_add else []
        topo = decremental_update(topo, deleted=deleted, added=added)
        yield topo


@pytest.mark.parametrize('seed', range(10))
def test_decremental_matches_scratch_recomputation(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 31))
    for topo in _random_mutations(rng, n, rounds=10):
        dist, sigma = apsp(topo.n, topo.edges)
        assert np.array_equal(topo.dist, dist)
        assert np.array_equal(topo.sigma, sigma)
        assert np.array_equal(topo.ecc, dist.max(axis=1))


@pytest.mark.slow
def test_decremental_matches_scratch_recomputation_full_battery():
    for seed in range(1000):
        rng = np.random.default_rng(10_000 + seed)
        n = int(rng.integers(2, 31))
        for topo in _random_mutations(rng, n, rounds=10):
            dist, sigma = apsp(topo.n, topo.edges)
            assert np.array_equal(topo.dist, dist)
            assert np.array_equal(topo.sigma, sigma)


@pytest.mark.parametrize('seed', range(15))
def test_against_networkx(seed):
    graph = nx.gnp_random_graph(12, 0.25, seed=seed)
    topo = build_topology(12, [(a + 1, b + 1) for a, b in graph.edges])
    assert is_connected(topo) == nx.is_connected(graph) == is_reachable(topo)
    lengths = dict(nx.all_pairs_shortest_path_length(graph))
    for u in range(12):
        for v in range(12):
            if v in lengths[u]:
                assert topo.dist[u, v] == lengths[u][v]
                if u != v:
                    assert topo.sigma[u, v] == len(list(nx.all_shortest_paths(graph, u, v)))
            else:
                assert topo.dist[u, v] == INF_HOPS
    if nx.is_connected(graph):
        assert diameter(topo) == nx.diameter(graph)
        assert radius(topo) == nx.radius(graph)
        assert math.ceil(diameter(topo) / 2) <= radius(topo) <= diameter(topo)


def test_eccentricity_affected_sources_on_path():
    topo = path_graph(4)
    assert eccentricity_affected_sources(topo, [(3, 4)]) == {1, 2, 3, 4}
    cycle = cycle_graph(6)
    # sur un cycle pair, toute paire opposée a deux chemins : seules les sources proches sont touchées
    affected = eccentricity_affected_sources(cycle, [(1, 2)])
    assert {1, 2} <= affected
    graph = build_topology(7, [(k, k + 1) for k in range(1, 7)] + [(1, 7), (2, 5), (3, 6)])
    for edge in sorted(graph.edges):
        expected = {u for u in graph.nodes if any(edge_is_critical(graph, edge, u, v) for v in graph.nodes)}
        assert eccentricity_affected_sources(graph, [edge]) == expected


def test_paths_and_trees():
    topo = cycle_graph(6)
    path = diameter_path(topo)
    assert len(path) == diameter(topo) + 1
    assert all(topo.has_edge(a, b) for a, b in zip(path, path[1:]))
    assert shortest_path(path_graph(5), 1, 5) == [1, 2, 3, 4, 5]
    tree = bfs_tree(complete_graph(5), 3)
    assert len(tree.edges) == 4
    assert all(tree.distance(3, v) == 1 for v in (1, 2, 4, 5))


def test_edge_list_text_format():
    topo = read_edge_list("# cycle\n1 2\n2 3\n\n3 1\n")
    assert topo.n == 3 and topo.edges == frozenset({(1, 2), (2, 3), (1, 3)})
    assert write_edge_list(topo) == "1 2\n1 3\n2 3\n"
    with pytest.raises(GraphError):
        read_edge_list("1 2 3\n")


def test_communication_edges():
    positions = np.array([[0.0, 0.0], [5.0, 0.0], [20.0, 0.0], [10.0, 0.0]])
    assert communication_edges(positions, 10.0) == frozenset({(1, 2), (1, 4), (2, 4), (3, 4)})
