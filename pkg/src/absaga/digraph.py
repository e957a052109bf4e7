"""
Directed communication graphs.

A graph is stored as per-node out-neighbour lists. Generators always add a
self-loop at every node so that the weight matrices built on top of them are
primitive (aperiodic) whenever the graph is strongly connected.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, GenerationFailure

GEOMETRIC_RETRIES = 100


@dataclass(frozen=True)
class DirectedGraph:
    """Adjacency structure; ``out_edges[i]`` lists every ``r`` with an edge i -> r."""

    n: int
    out_edges: tuple[tuple[int, ...], ...]
    self_loops: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        if len(self.out_edges) != self.n:
            raise ValueError(f"expected {self.n} adjacency lists, got {len(self.out_edges)}")
        for i, nbrs in enumerate(self.out_edges):
            if len(set(nbrs)) != len(nbrs):
                raise ValueError(f"duplicate edge at node {i}")
            for r in nbrs:
                if not 0 <= r < self.n:
                    raise ValueError(f"edge {i}->{r} out of range for n={self.n}")
            if self.self_loops and i not in nbrs:
                raise ValueError(f"self_loops set but node {i} has no self-edge")

    @classmethod
    def from_edges(cls, n, edges):
        out = [[] for _ in range(n)]
        for src, dst in edges:
            if dst not in out[src]:
                out[src].append(dst)
        loops = all(i in out[i] for i in range(n))
        return cls(n, tuple(tuple(o) for o in out), loops)

    def edges(self):
        return [(i, r) for i, nbrs in enumerate(self.out_edges) for r in nbrs]

    @property
    def num_edges(self):
        return sum(len(o) for o in self.out_edges)

    def in_edges(self):
        """Per-node in-neighbour lists (sources r of edges r -> i)."""
        inc = [[] for _ in range(self.n)]
        for i, nbrs in enumerate(self.out_edges):
            for r in nbrs:
                inc[r].append(i)
        return [tuple(sorted(x)) for x in inc]

    def adjacency(self):
        """Boolean matrix with ``adj[i, r]`` true iff r -> i (information flows r to i)."""
        adj = np.zeros((self.n, self.n), dtype=bool)
        for src, dst in self.edges():
            adj[dst, src] = True
        return adj


def _with_self_loops(n, out):
    return DirectedGraph(n, tuple(tuple([i] + [r for r in o if r != i]) for i, o in enumerate(out)), True)


def exponential_graph(n):
    """Node i sends to (i + 2^j) mod n for j = 0..floor(log2(n-1)), plus itself."""
    if n < 2:
        raise ValueError(f"exponential graph needs n >= 2, got {n}")
    hops = [2**j for j in range(int(math.floor(math.log2(n - 1))) + 1)]
    return _with_self_loops(n, [[(i + h) % n for h in hops] for i in range(n)])


def ring_graph(n):
    if n < 1:
        raise ValueError(f"ring needs n >= 1, got {n}")
    return _with_self_loops(n, [[(i + 1) % n] for i in range(n)])


def complete_graph(n):
    if n < 1:
        raise ValueError(f"complete graph needs n >= 1, got {n}")
    return _with_self_loops(n, [list(range(n)) for _ in range(n)])


def geometric_digraph(n, radius, reverse_drop=0.0, seed=None):
    """Random geometric graph in the unit square with independently dropped directions.

    Points are resampled until the result is strongly connected, at most
    ``GEOMETRIC_RETRIES`` times.
    """
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if not 0 < radius <= math.sqrt(2):
        raise ValueError(f"radius must lie in (0, sqrt(2)], got {radius}")
    if not 0 <= reverse_drop < 1:
        raise ValueError(f"reverse_drop must lie in [0, 1), got {reverse_drop}")
    rng = np.random.default_rng(seed)
    for _ in range(GEOMETRIC_RETRIES):
        pts = rng.random((n, 2))
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        keep = rng.random((n, n)) >= reverse_drop
        linked = (dist <= radius) & keep
        np.fill_diagonal(linked, False)
        g = _with_self_loops(n, [np.flatnonzero(linked[i]).tolist() for i in range(n)])
        if is_strongly_connected(g):
            return g
    raise GenerationFailure(
        f"no strongly connected geometric digraph after {GEOMETRIC_RETRIES} draws "
        f"(n={n}, radius={radius}, reverse_drop={reverse_drop})"
    )


def _reach(adj_lists, start):
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj_lists[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


def is_strongly_connected(g):
    if g.n == 1:
        return True
    return len(_reach(g.out_edges, 0)) == g.n and len(_reach(g.in_edges(), 0)) == g.n


def degrees(g):
    """(in_degree, out_degree) arrays; self-loops count once in each."""
    out_deg = np.array([len(o) for o in g.out_edges], dtype=int)
    in_deg = np.zeros(g.n, dtype=int)
    for _, dst in g.edges():
        in_deg[dst] += 1
    return in_deg, out_deg


def write_edge_list(g, path):
    lines = [str(g.n)] + [f"{s} {d}" for s, d in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path):
    """Parse the edge-list format: first line ``n``, then ``src dst`` per line."""
    text = Path(path).read_text().splitlines()
    rows = [(no, ln.strip()) for no, ln in enumerate(text, 1) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise DataFormatError(f"{path}: empty graph file")
    no, head = rows[0]
    try:
        n = int(head)
    except ValueError:
        raise DataFormatError(f"{path}: expected node count, got {head!r}", no) from None
    edges = []
    for no, ln in rows[1:]:
        parts = ln.split()
        try:
            if len(parts) != 2:
                raise ValueError
            s, d = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataFormatError(f"{path}: expected 'src dst', got {ln!r}", no) from None
        if not (0 <= s < n and 0 <= d < n):
            raise DataFormatError(f"{path}: edge {s}->{d} out of range for n={n}", no)
        edges.append((s, d))
    return DirectedGraph.from_edges(n, edges)
