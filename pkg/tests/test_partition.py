import networkx as nx
import pytest

from gapfinder.partition import (Clustering, analyze_partitioned, cluster_graph, compose_adversarial_input,
                                 inter_cluster_solve, intra_cluster_solve)
from gapfinder.solver import SolveParams
from gapfinder.te import DETOUR_DEMANDS, DPConfig, TEAnalysis, Topology, detour_topology

HIGHS = SolveParams(backend="highs", time_limit=120)


def bidirected(nodes, links, cap=10.0):
    return Topology(nodes, [(a, b, cap) for a, b in links] + [(b, a, cap) for a, b in links]).compute_paths(2)


def two_triangles():
    links = [("a", "b"), ("b", "c"), ("c", "a"), ("d", "e"), ("e", "f"), ("f", "d"), ("c", "d")]
    return bidirected(list("abcdef"), links)


def ring(n):
    nodes = [str(i) for i in range(n)]
    return bidirected(nodes, [(nodes[i], nodes[(i + 1) % n]) for i in range(n)])


@pytest.mark.parametrize("method", ["greedy_modularity", "label_propagation"])
def test_two_triangles_split_at_bridge(method):
    cl = cluster_graph(two_triangles(), 2, method, seed=1)
    assert sorted(map(sorted, cl.clusters)) == [["a", "b", "c"], ["d", "e", "f"]]


@pytest.mark.parametrize("method", ["greedy_modularity", "label_propagation"])
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_ring_gets_exactly_k_contiguous_clusters(method, k):
    topo = ring(8)
    cl = cluster_graph(topo, k, method, seed=0)
    assert len(cl.clusters) == k
    assert sorted(n for c in cl.clusters for n in c) == sorted(topo.nodes)
    g = topo.graph().to_undirected()
    assert all(nx.is_connected(g.subgraph(c)) for c in cl.clusters)


def test_clustering_is_deterministic():
    topo = ring(8)
    for method in ("greedy_modularity", "label_propagation"):
        assert cluster_graph(topo, 3, method, 5).clusters == cluster_graph(topo, 3, method, 5).clusters


def test_k_larger_than_node_count():
    assert len(cluster_graph(detour_topology(), 9).clusters) == 5


def test_invalid_arguments():
    with pytest.raises(ValueError):
        cluster_graph(ring(4), 0)
    with pytest.raises(ValueError):
        cluster_graph(ring(4), 2, "spectral")
    with pytest.raises(ValueError):
        Clustering([["a"], ["a"]], "greedy_modularity")


def copies_analysis(copies):
    topo = detour_topology().disjoint_union(copies)
    pairs = [(f"{c}:{s}", f"{c}:{t}") for c in range(copies) for s, t in DETOUR_DEMANDS]
    return TEAnalysis(topo, "dp", d_max=100, dp=DPConfig(threshold=50), quantiles=[0, 50, 100], pairs=pairs)


def test_disconnected_copies_gap_adds_up():
    a = copies_analysis(3)
    rep = analyze_partitioned(a, 3, params=HIGHS)
    assert rep.gap == pytest.approx(300.0, abs=1e-5)
    assert rep.validated
    assert rep.extra["intra_gaps"] == pytest.approx([100.0] * 3, abs=1e-5)
    # copies share no pairs, so there is no cross-cluster work
    assert rep.extra["pair_steps"] == []


def test_single_node_cluster_contributes_nothing():
    a = copies_analysis(1)
    cl = Clustering([["0:1", "0:2", "0:3", "0:4"], ["0:5"]], "greedy_modularity")
    out = intra_cluster_solve(a, cl, HIGHS)
    assert out[1].demands == {} and out[1].status == "Empty"


def test_inter_steps_never_lower_the_gap():
    topo = two_triangles()
    pairs = [("a", "b"), ("b", "c"), ("a", "c"), ("d", "e"), ("e", "f"), ("a", "d"), ("c", "d"), ("b", "f")]
    a = TEAnalysis(topo, "dp", d_max=20, dp=DPConfig(threshold=3), quantiles=[0, 3, 10, 20], pairs=pairs)
    cl = cluster_graph(topo, 2)
    intra = intra_cluster_solve(a, cl, HIGHS)
    merged, gap0, _, _ = compose_adversarial_input(a, intra)
    inter, steps = inter_cluster_solve(a, cl, merged, HIGHS)
    assert steps
    for s in steps:
        assert s.gap_after >= s.gap_before - 1e-6
    final = compose_adversarial_input(a, intra, inter)[1]
    assert final >= gap0 - 1e-6
    assert final == pytest.approx(a.evaluate(inter)[0], abs=1e-6)
