"""Undirected graphs in compressed adjacency form, neighbor aggregation over
node time series, truncated BFS and locality weights."""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from rtci._backend import kernels
from rtci.errors import DimensionError, ParseError

UNREACHABLE = -1
DEFAULT_CUTOFF_EPS = 1e-8


class BoundedDegreeWarning(UserWarning):
    """Maximum degree exceeds the configured bound."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph stored as CSR.

    ``indices[indptr[i]:indptr[i+1]]`` holds the sorted neighbors of node ``i``.
    """

    indptr: np.ndarray
    indices: np.ndarray
    degree: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int32)
        indptr.setflags(write=False)
        indices.setflags(write=False)
        degree = np.diff(indptr)
        degree.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)
        object.__setattr__(self, "degree", degree)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        """Build from an ``(m, 2)`` edge array, symmetrizing and dropping
        self-loops and duplicates."""
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        u, v = edges[:, 0], edges[:, 1]
        keep = u != v
        u, v = u[keep], v[keep]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        keys = np.unique(rows * n + cols)
        rows = keys // n
        cols = keys % n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return cls(indptr, cols)

    @property
    def n(self) -> int:
        return self.indptr.shape[0] - 1

    @property
    def n_edges(self) -> int:
        return int(self.indices.shape[0] // 2)

    @property
    def max_degree(self) -> int:
        return int(self.degree.max()) if self.n else 0

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edge_array(self) -> np.ndarray:
        """Each undirected edge once, as ``(u, v)`` with ``u < v``."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.degree)
        cols = self.indices.astype(np.int64)
        mask = rows < cols
        return np.column_stack([rows[mask], cols[mask]])

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), self.degree)
        a[rows, self.indices] = 1.0
        return a

    def permute(self, perm) -> "Graph":
        """Relabel node ``i`` as ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.int64)
        return Graph.from_edges(self.n, perm[self.edge_array()])

    def check(self) -> None:
        """Raise ``AssertionError`` if any structural invariant is broken."""
        n = self.n
        assert self.indptr[0] == 0 and self.indptr[-1] == self.indices.shape[0]
        assert np.all(self.degree >= 0)
        rows = np.repeat(np.arange(n), self.degree)
        assert not np.any(rows == self.indices), "self-loop"
        for i in range(n):
            nb = self.neighbors(i)
            assert np.all(np.diff(nb) > 0), "unsorted or duplicate neighbors"
        fwd = set(zip(rows.tolist(), self.indices.tolist()))
        assert all((j, i) in fwd for i, j in fwd), "asymmetric adjacency"


def load_edge_list(source, degree_bound: int | None = None) -> tuple[Graph, list[str]]:
    """Parse a whitespace edge list into a graph plus the token list.

    ``tokens[k]`` is the original identifier of dense node ``k``; ids are
    assigned in first-seen order. Lines starting with ``#`` are skipped.
    Self-loop lines are dropped with a warning.
    """
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        source = io.StringIO(source)
    ids: dict[str, int] = {}
    pairs = []
    self_loops = 0
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 2 tokens, got {len(parts)}")
        a, b = parts
        ia = ids.setdefault(a, len(ids))
        ib = ids.setdefault(b, len(ids))
        if ia == ib:
            self_loops += 1
            continue
        pairs.append((ia, ib))
    if not ids:
        raise ParseError("edge list is empty")
    if self_loops:
        warnings.warn(f"dropped {self_loops} self-loop line(s)", stacklevel=2)
    g = Graph.from_edges(len(ids), np.array(pairs, dtype=np.int64).reshape(-1, 2))
    if degree_bound is not None and g.max_degree > degree_bound:
        warnings.warn(
            f"max degree {g.max_degree} exceeds bound {degree_bound}",
            BoundedDegreeWarning,
            stacklevel=2,
        )
    return g, list(ids)


def write_edge_list(g: Graph, stream, tokens=None) -> None:
    for u, v in g.edge_array():
        a = tokens[u] if tokens is not None else str(u)
        b = tokens[v] if tokens is not None else str(v)
        stream.write(f"{a} {b}\n")


def write_id_map(tokens, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["token", "dense_id"])
    for i, tok in enumerate(tokens):
        writer.writerow([tok, i])


def _as_matrix(g: Graph, x) -> np.ndarray:
    values = getattr(x, "values", x)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != g.n:
        raise DimensionError(f"panel has shape {values.shape}, graph has {g.n} nodes")
    return values


def neighbor_sum(g: Graph, x) -> np.ndarray:
    """``A @ X``: row ``i`` is the sum of the rows of ``i``'s neighbors."""
    return kernels.neighbor_sum(g.indptr, g.indices, _as_matrix(g, x))


def relational_mean(g: Graph, x) -> np.ndarray:
    """``D^{-1} A X``, with zero rows for isolated nodes."""
    s = neighbor_sum(g, x)
    deg = g.degree
    has = deg > 0
    s[has] /= deg[has, None]
    return s


def truncated_bfs(g: Graph, focal: int, max_hops: int) -> np.ndarray:
    """Hop distances from ``focal``; nodes beyond ``max_hops`` get ``UNREACHABLE``."""
    if not 0 <= focal < g.n:
        raise IndexError(f"focal node {focal} out of range [0, {g.n})")
    if max_hops < 0:
        raise ValueError("max_hops must be >= 0")
    max_hops = min(int(max_hops), max(g.n - 1, 0))
    return kernels.bfs_truncated(g.indptr, g.indices, int(focal), max_hops)


@dataclass(frozen=True)
class LocalityWeights:
    focal: int
    gamma: float
    weight: np.ndarray
    cutoff_eps: float = DEFAULT_CUTOFF_EPS


def hop_cutoff(gamma: float, cutoff_eps: float) -> int:
    """First hop count ``h`` with ``gamma**h < cutoff_eps``, minus one."""
    if gamma <= 0.0:
        return 0
    if gamma >= 1.0:
        raise ValueError("no finite cutoff for gamma >= 1")
    h = max(0, math.floor(math.log(cutoff_eps) / math.log(gamma)) - 1)
    while gamma ** (h + 1) >= cutoff_eps:
        h += 1
    while h > 0 and gamma**h < cutoff_eps:
        h -= 1
    return h


def locality_weights(
    g: Graph,
    focal: int,
    gamma: float,
    cutoff_eps: float = DEFAULT_CUTOFF_EPS,
    allow_gamma_above_one: bool = False,
) -> LocalityWeights:
    """Per-node weights ``gamma ** d(i, focal)``.

    ``0**0 == 1``; unreachable nodes weigh 0 for ``gamma < 1`` and 1 for
    ``gamma == 1``. BFS stops at the last hop whose weight is still at least
    ``cutoff_eps``.
    """
    if not 0 <= focal < g.n:
        raise IndexError(f"focal node {focal} out of range [0, {g.n})")
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if cutoff_eps <= 0:
        raise ValueError("cutoff_eps must be > 0")
    if gamma > 1 and not allow_gamma_above_one:
        raise ValueError("gamma > 1 inverts locality; pass allow_gamma_above_one=True")
    gamma = float(gamma)
    if gamma == 1.0:
        w = np.ones(g.n)
    elif gamma == 0.0:
        w = np.zeros(g.n)
        w[focal] = 1.0
    else:
        max_hops = hop_cutoff(gamma, cutoff_eps) if gamma < 1 else g.n
        dist = truncated_bfs(g, focal, max_hops)
        w = np.zeros(g.n)
        reach = dist != UNREACHABLE
        w[reach] = gamma ** dist[reach].astype(np.float64)
    w.setflags(write=False)
    return LocalityWeights(int(focal), gamma, w, float(cutoff_eps))
