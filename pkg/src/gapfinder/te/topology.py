"""Directed capacitated topologies and K-shortest loopless paths."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx

Pair = Tuple[str, str]
Path = Tuple[str, ...]


class TopologyError(ValueError):
    pass


@dataclass
class Topology:
    nodes: List[str]
    edges: List[Tuple[str, str, float]]
    paths: Dict[Pair, List[Path]] = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = [str(n) for n in self.nodes]
        if len(set(self.nodes)) != len(self.nodes):
            raise TopologyError("duplicate node names")
        known = set(self.nodes)
        seen = set()
        clean = []
        for s, t, cap in self.edges:
            s, t, cap = str(s), str(t), float(cap)
            if s not in known or t not in known:
                raise TopologyError(f"edge {s}->{t} uses an unknown node")
            if s == t:
                raise TopologyError(f"self loop at {s}")
            if not cap > 0:
                raise TopologyError(f"edge {s}->{t} needs positive capacity")
            if (s, t) in seen:
                raise TopologyError(f"duplicate edge {s}->{t}")
            seen.add((s, t))
            clean.append((s, t, cap))
        self.edges = clean
        self._cap = {(s, t): c for s, t, c in clean}
        self._order = {n: i for i, n in enumerate(self.nodes)}
        for pair, plist in self.paths.items():
            for p in plist:
                self.check_path(pair, p)

    # -- basics ----------------------------------------------------------
    def capacity(self, s: str, t: str) -> float:
        return self._cap[(s, t)]

    def has_edge(self, s: str, t: str) -> bool:
        return (s, t) in self._cap

    @property
    def edge_keys(self) -> List[Tuple[str, str]]:
        return [(s, t) for s, t, _ in self.edges]

    @property
    def average_capacity(self) -> float:
        return sum(c for _, _, c in self.edges) / len(self.edges) if self.edges else 0.0

    @property
    def total_capacity(self) -> float:
        return sum(c for _, _, c in self.edges)

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        for s, t, c in self.edges:
            g.add_edge(s, t, capacity=c)
        return g

    def check_path(self, pair: Pair, path: Sequence[str]):
        if tuple(path[:1]) != (pair[0],) or tuple(path[-1:]) != (pair[1],):
            raise TopologyError(f"path {path} does not join {pair}")
        for a, b in zip(path, path[1:]):
            if not self.has_edge(a, b):
                raise TopologyError(f"path {path} uses missing edge {a}->{b}")
        if len(set(path)) != len(path):
            raise TopologyError(f"path {path} has a loop")

    @staticmethod
    def path_edges(path: Sequence[str]) -> List[Tuple[str, str]]:
        return list(zip(path, path[1:]))

    def hops(self, pair: Pair) -> Optional[int]:
        plist = self.paths.get(pair)
        return len(plist[0]) - 1 if plist else None

    @property
    def pairs(self) -> List[Pair]:
        """Pairs that have at least one path, in node order."""
        return sorted((p for p, pl in self.paths.items() if pl),
                      key=lambda p: (self._order[p[0]], self._order[p[1]]))

    def compute_paths(self, k: int = 4, pairs: Optional[Sequence[Pair]] = None) -> "Topology":
        if pairs is None:
            pairs = [(s, t) for s, t in itertools.permutations(self.nodes, 2)]
        g = self.graph()
        self.paths = {}
        for pair in pairs:
            plist = yen_k_shortest_paths(self, pair, k, g)
            if plist:
                self.paths[tuple(pair)] = plist
        return self

    # -- io ----------------------------------------------------------------
    def to_dict(self) -> dict:
        out = {"nodes": list(self.nodes),
               "edges": [{"src": s, "dst": t, "cap": c} for s, t, c in self.edges]}
        if self.paths:
            out["paths"] = [{"src": s, "dst": t, "paths": [list(p) for p in pl]}
                            for (s, t), pl in self.paths.items()]
        return out

    @classmethod
    def from_dict(cls, data: dict, k: int = 4) -> "Topology":
        try:
            nodes = [str(n) for n in data["nodes"]]
            edges = [(e["src"], e["dst"], e["cap"]) for e in data["edges"]]
        except (KeyError, TypeError) as exc:
            raise TopologyError(f"malformed topology: {exc}") from None
        paths = {}
        for entry in data.get("paths", []):
            paths[(str(entry["src"]), str(entry["dst"]))] = [tuple(str(n) for n in p) for p in entry["paths"]]
        topo = cls(nodes, edges, paths)
        if not paths:
            topo.compute_paths(k)
        return topo

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path, k: int = 4) -> "Topology":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), k)

    def disjoint_union(self, copies: int) -> "Topology":
        """``copies`` disconnected replicas; node ``n`` of copy ``i`` is ``"i:n"``."""
        nodes = [f"{i}:{n}" for i in range(copies) for n in self.nodes]
        edges = [(f"{i}:{s}", f"{i}:{t}", c) for i in range(copies) for s, t, c in self.edges]
        paths = {(f"{i}:{s}", f"{i}:{t}"): [tuple(f"{i}:{n}" for n in p) for p in pl]
                 for i in range(copies) for (s, t), pl in self.paths.items()}
        return Topology(nodes, edges, paths)

    def subgraph(self, nodes: Sequence[str], k: int = 4) -> "Topology":
        keep = set(nodes)
        sub = Topology([n for n in self.nodes if n in keep],
                       [(s, t, c) for s, t, c in self.edges if s in keep and t in keep])
        pairs = [p for p in self.paths if p[0] in keep and p[1] in keep]
        return sub.compute_paths(k, pairs)


def yen_k_shortest_paths(topology: Topology, pair: Pair, k: int = 4,
                         graph: Optional[nx.DiGraph] = None) -> List[Path]:
    """Up to ``k`` loopless paths by hop count; ties broken by node order sequence."""
    if k < 1:
        raise ValueError("k must be at least 1")
    s, t = pair
    g = graph if graph is not None else topology.graph()
    if s not in g or t not in g or s == t:
        return []
    found: List[Path] = []
    try:
        gen = nx.shortest_simple_paths(g, s, t)
        for path in gen:
            if len(found) >= k and len(path) > len(found[k - 1]):
                break
            found.append(tuple(path))
            found.sort(key=lambda p: (len(p), [topology._order[n] for n in p]))
    except nx.NetworkXNoPath:
        return []
    return found[:k]


def detour_topology(k: int = 4) -> Topology:
    """Five nodes: 1->2->3 at capacity 100 and the detour 1->4->5->3 at 50."""
    topo = Topology(["1", "2", "3", "4", "5"],
                    [("1", "2", 100.0), ("2", "3", 100.0), ("1", "4", 50.0),
                     ("4", "5", 50.0), ("5", "3", 50.0)])
    return topo.compute_paths(k)


DETOUR_DEMANDS = {("1", "3"): 50.0, ("1", "2"): 100.0, ("2", "3"): 100.0}


def random_topology(n: int, seed: int = 0, extra_edges: Optional[int] = None,
                    capacities: Sequence[float] = (50.0, 100.0), k: int = 4) -> Topology:
    """A random strongly connected digraph: a bidirectional ring plus chords."""
    import random
    rng = random.Random(seed)
    nodes = [str(i + 1) for i in range(n)]
    edges = {}
    for i in range(n):
        a, b = nodes[i], nodes[(i + 1) % n]
        if a != b:
            edges[(a, b)] = rng.choice(list(capacities))
            edges[(b, a)] = rng.choice(list(capacities))
    extra = n // 2 if extra_edges is None else extra_edges
    candidates = [(a, b) for a in nodes for b in nodes if a != b and (a, b) not in edges]
    rng.shuffle(candidates)
    for a, b in candidates[:extra]:
        edges[(a, b)] = rng.choice(list(capacities))
    return Topology(nodes, [(a, b, c) for (a, b), c in edges.items()]).compute_paths(k)
