"""Graphs: representation, random generators, normalization, file ingestion.

Graphs are undirected, unweighted, without self-loops.  Edges are stored
once as (i, j) with i < j.  The symmetric-normalized adjacency with
self-loops, D^-1/2 (A + I) D^-1/2, is cached on first access because every
graph-aware model reuses it.  Storage is dense: node counts stay in the
low thousands, where one n x n float64 block is cheap and keeps the matmul
path simple.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ShapeError, ValidationError


class Graph:
    """Undirected graph with cached degrees and normalized adjacency."""

    def __init__(self, n: int, edges):
        if n < 1:
            raise ValidationError(f"graph needs at least one node, got n={n}")
        canon = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValidationError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"edge ({i}, {j}) out of range for n={n}")
            canon.add((i, j) if i < j else (j, i))
        self.n = n
        self.edges = frozenset(canon)
        degree = np.zeros(n, dtype=np.int64)
        for i, j in canon:
            degree[i] += 1
            degree[j] += 1
        self.degree = degree
        self._a_hat = None

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def a_hat(self) -> np.ndarray:
        if self._a_hat is None:
            self._a_hat = normalized_adjacency(self)
        return self._a_hat

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.num_edges})"


def normalized_adjacency(g: Graph) -> np.ndarray:
    """Symmetric renormalized adjacency with self-loops.

    Returns D^-1/2 (A + I) D^-1/2 where D is the degree matrix of A + I.
    Symmetric, entries in [0, 1], spectral radius at most 1.
    """
    a = np.zeros((g.n, g.n))
    for i, j in g.edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    np.fill_diagonal(a, 1.0)
    d_inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def generate_ba(n: int, m: int, rng: np.random.Generator) -> Graph:
    """Preferential-attachment graph on n nodes.

    Starts from a complete graph on m+1 nodes; every later node attaches
    m edges to distinct existing nodes, chosen proportionally to degree.
    The result is connected and every node outside the seed clique has
    degree >= m.

    Args:
        n: total node count.
        m: edges added per arriving node; requires 1 <= m < n.
        rng: numpy Generator; fully determines the output.
    """
    if not (1 <= m < n):
        raise ValidationError(f"BA needs 1 <= m < n, got m={m}, n={n}")
    edges = []
    # one endpoint entry per incident edge: sampling an index uniformly from
    # this list picks a node with probability proportional to its degree
    endpoints = []
    for i in range(m + 1):
        for j in range(i + 1, m + 1):
            edges.append((i, j))
            endpoints.extend((i, j))
    for v in range(m + 1, n):
        targets = set()
        while len(targets) < m:
            targets.add(endpoints[rng.integers(len(endpoints))])
        for t in sorted(targets):
            edges.append((t, v))
            endpoints.extend((t, v))
    return Graph(n, edges)


def generate_er(n: int, p: float, rng: np.random.Generator) -> Graph:
    """Erdos-Renyi graph: each unordered pair is an edge with probability p."""
    if not (0.0 <= p <= 1.0):
        raise ValidationError(f"edge probability must lie in [0, 1], got {p}")
    ii, jj = np.triu_indices(n, k=1)
    keep = rng.random(ii.size) < p
    return Graph(n, zip(ii[keep].tolist(), jj[keep].tolist()))


def generate_sbm(n: int, num_blocks: int, p_in: float, p_out: float,
                 rng: np.random.Generator) -> Graph:
    """Stochastic block model with equal-as-possible contiguous blocks.

    The first n % num_blocks blocks get ceil(n / num_blocks) nodes, the rest
    floor(n / num_blocks).  Same-block pairs connect with probability p_in,
    cross-block pairs with p_out.
    """
    if num_blocks < 1 or num_blocks > n:
        raise ValidationError(f"need 1 <= num_blocks <= n, got {num_blocks}")
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not (0.0 <= p <= 1.0):
            raise ValidationError(f"{name} must lie in [0, 1], got {p}")
    if p_out > p_in:
        raise ValidationError(f"p_out={p_out} exceeds p_in={p_in}")
    base, extra = divmod(n, num_blocks)
    sizes = [base + 1] * extra + [base] * (num_blocks - extra)
    labels = np.repeat(np.arange(num_blocks), sizes)
    ii, jj = np.triu_indices(n, k=1)
    prob = np.where(labels[ii] == labels[jj], p_in, p_out)
    keep = rng.random(ii.size) < prob
    return Graph(n, zip(ii[keep].tolist(), jj[keep].tolist()))


def degree_partition(g: Graph, hub_frac: float = 0.10, periphery_frac: float = 0.50):
    """Split nodes into high-degree hubs and low-degree periphery.

    Nodes are ordered by degree descending, ties broken by node index
    ascending.  The first ceil(hub_frac * n) are hubs; the last
    ceil(periphery_frac * n) are periphery.  Returns (hubs, periphery) as
    sorted index arrays.
    """
    if not (0.0 < hub_frac < 1.0 and 0.0 < periphery_frac < 1.0):
        raise ValidationError("fractions must lie strictly inside (0, 1)")
    if hub_frac + periphery_frac > 1.0:
        raise ValidationError("hub_frac + periphery_frac must not exceed 1")
    order = np.lexsort((np.arange(g.n), -g.degree))
    num_hubs = math.ceil(hub_frac * g.n)
    num_periphery = math.ceil(periphery_frac * g.n)
    hubs = np.sort(order[:num_hubs])
    periphery = np.sort(order[g.n - num_periphery:])
    return hubs, periphery


@dataclass
class GraphSpec:
    """How to obtain a graph: a random-model recipe or a pair of files.

    Density defaults are matched so the three random topologies all land at
    mean degree about 9-10, keeping density out of cross-topology
    comparisons: BA attaches m=5 edges per node, ER uses p = 10/(n-1), and
    the SBM uses 4 blocks with p_in=0.03, p_out=0.002.
    """

    kind: str  # "ba" | "er" | "sbm" | "file"
    n: int | None = None
    ba_m: int = 5
    er_p: float | None = None  # default 10 / (n - 1)
    sbm_blocks: int = 4
    sbm_p_in: float = 0.03
    sbm_p_out: float = 0.002
    edge_path: str | None = None
    feature_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("ba", "er", "sbm", "file"):
            raise ValidationError(f"unknown graph kind {self.kind!r}")
        if self.kind == "file":
            if not (self.edge_path and self.feature_path):
                raise ValidationError("file-based specs need edge_path and feature_path")
        else:
            if self.n is None or self.n < 2:
                raise ValidationError("random graph specs need n >= 2")
            if self.kind == "ba" and not (1 <= self.ba_m < self.n):
                raise ValidationError(f"need 1 <= ba_m < n, got ba_m={self.ba_m}")

    def realize(self, rng: np.random.Generator):
        """Build the graph; returns (graph, features-or-None).

        Features are only produced by file-based specs, where they come
        with the graph; random specs leave feature sampling to the caller.
        """
        if self.kind == "ba":
            return generate_ba(self.n, self.ba_m, rng), None
        if self.kind == "er":
            p = self.er_p if self.er_p is not None else 10.0 / (self.n - 1)
            return generate_er(self.n, p, rng), None
        if self.kind == "sbm":
            return generate_sbm(self.n, self.sbm_blocks, self.sbm_p_in,
                                self.sbm_p_out, rng), None
        g, x = load_graph_files(self.edge_path, self.feature_path)
        return g, x


def load_graph_files(edge_path, feature_path):
    """Read a graph from an edge list plus a node-feature CSV.

    Edge file: one "i j" pair per line, 0-based ids, whitespace separated;
    blank lines and lines starting with '#' are ignored; duplicates collapse
    to one undirected edge; self-loop lines are skipped.  Feature file: one
    CSV row per node in id order, no header.  Node count is inferred from
    the feature rows, and edges must stay within it.

    Returns (Graph, features) with features as an n x d float64 matrix.
    """
    rows = []
    width = None
    with open(feature_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(
                    f"expected {width} columns, found {len(cells)}",
                    path=feature_path, line=lineno,
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise ParseError("non-numeric feature value", path=feature_path,
                                 line=lineno) from None
    if not rows:
        raise ParseError("feature file is empty", path=feature_path)
    x = np.asarray(rows, dtype=np.float64)
    n = x.shape[0]

    edges = set()
    with open(edge_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'i j', found {stripped!r}",
                                 path=edge_path, line=lineno)
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError("edge endpoints must be integers",
                                 path=edge_path, line=lineno) from None
            if i < 0 or j < 0 or i >= n or j >= n:
                raise ParseError(
                    f"edge ({i}, {j}) out of range for {n} nodes",
                    path=edge_path, line=lineno,
                )
            if i == j:
                continue
            edges.add((i, j) if i < j else (j, i))
    return Graph(n, edges), x


def write_graph_files(g: Graph, x: np.ndarray, edge_path, feature_path) -> None:
    """Write a graph and its features in the format load_graph_files reads."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.n:
        raise ShapeError(f"features must be ({g.n}, d), got {x.shape}")
    with open(edge_path, "w", encoding="utf-8") as fh:
        for i, j in sorted(g.edges):
            fh.write(f"{i} {j}\n")
    with open(feature_path, "w", encoding="utf-8") as fh:
        for row in x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
