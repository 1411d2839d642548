"""Node time-series panels: CSV ingestion, lagged designs, scaling and the
max-minus-min difference rank.

Time is 0-based here: column ``t`` of an ``n x t_max`` panel. A lag-``w``
design has responses at columns ``w .. t_max-1``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from rtci.errors import DimensionError, ParseError
from rtci.graph import Graph, relational_mean


@dataclass(frozen=True, eq=False)
class Panel:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise DimensionError("panel must be a 2-D array")
        if not np.all(np.isfinite(v)):
            raise ValueError("panel contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def t_max(self) -> int:
        return self.values.shape[1]

    def columns(self, start: int, stop: int) -> "Panel":
        return Panel(self.values[:, start:stop])

    def map_rows(self, fn) -> "Panel":
        return Panel(np.vstack([fn(row) for row in self.values]))


def _text_stream(source):
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    return source


def load_panel_csv(source, id_map) -> Panel:
    """Read ``node,v1,...,vT`` rows and order them by dense id.

    ``id_map`` maps token to dense id (a dict) or is the token list itself.
    """
    if not isinstance(id_map, dict):
        id_map = {tok: i for i, tok in enumerate(id_map)}
    reader = csv.reader(_text_stream(source))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("panel file is empty") from None
    if not header or header[0].strip() != "node" or len(header) < 2:
        raise ParseError("panel header must be 'node,v1,...,vT'")
    t_max = len(header) - 1
    values = np.full((len(id_map), t_max), np.nan)
    seen = np.zeros(len(id_map), dtype=bool)
    unknown = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        token = row[0]
        if len(row) - 1 != t_max:
            raise ParseError(f"line {lineno}: node {token!r} has {len(row) - 1} values, expected {t_max}")
        if token not in id_map:
            unknown.append(token)
            continue
        try:
            values[id_map[token]] = [float(c) for c in row[1:]]
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric value for node {token!r}") from None
        seen[id_map[token]] = True
    if unknown:
        raise ParseError(f"unknown node tokens: {', '.join(unknown[:10])}")
    if not seen.all():
        inv = {i: tok for tok, i in id_map.items()}
        missing = [inv[i] for i in np.flatnonzero(~seen)]
        raise ParseError(f"missing nodes: {', '.join(missing[:10])}")
    return Panel(values)


def write_panel_csv(panel: Panel, stream, tokens=None) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["node"] + [f"v{t + 1}" for t in range(panel.t_max)])
    for i, row in enumerate(panel.values):
        tok = tokens[i] if tokens is not None else str(i)
        writer.writerow([tok] + [repr(float(x)) for x in row])


@dataclass(frozen=True, eq=False)
class LaggedDesign:
    """Stacked regression rows, node-major then time.

    ``z`` columns are ``[own lag, peer-mean lag, extra..., intercept]`` with
    absent terms omitted.
    """

    node: np.ndarray
    time: np.ndarray
    z: np.ndarray
    y: np.ndarray
    lag: int
    with_peer: bool
    with_intercept: bool
    names: tuple

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]


def build_design(
    g: Graph,
    p: Panel,
    w: int = 1,
    with_peer: bool = False,
    with_intercept: bool = False,
    nodes=None,
    peer_values: np.ndarray | None = None,
) -> LaggedDesign:
    """Lag-``w`` regression rows for every node (or the given subset).

    With ``with_peer`` the relational mean is added as a second regressor and
    isolated nodes contribute no rows.
    """
    if p.n != g.n:
        raise DimensionError(f"panel has {p.n} rows, graph has {g.n} nodes")
    if not 1 <= w < p.t_max:
        raise ValueError(f"lag w={w} must satisfy 1 <= w < t_max={p.t_max}")
    nodes = np.arange(g.n) if nodes is None else np.asarray(nodes, dtype=np.int64)
    if with_peer:
        nodes = nodes[g.degree[nodes] > 0]
    x = p.values
    span = p.t_max - w
    lagged = x[nodes, :span]
    cols = [lagged.reshape(-1)]
    names = ["beta"]
    if with_peer:
        peer = relational_mean(g, x) if peer_values is None else peer_values
        cols.append(peer[nodes, :span].reshape(-1))
        names = ["beta_I", "beta_P"]
    if with_intercept:
        cols.append(np.ones(nodes.size * span))
        names.append("intercept")
    return LaggedDesign(
        node=np.repeat(nodes, span),
        time=np.tile(np.arange(w, p.t_max), nodes.size),
        z=np.column_stack(cols) if cols[0].size else np.zeros((0, len(cols))),
        y=x[nodes, w:].reshape(-1),
        lag=w,
        with_peer=with_peer,
        with_intercept=with_intercept,
        names=tuple(names),
    )


def minmax_scale(series) -> np.ndarray:
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot scale an empty series")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def difference_rank(p: Panel, window: tuple[int, int] | None = None) -> np.ndarray:
    """Per-node ``max - min`` over columns ``window = (start, stop)``."""
    x = p.values
    if window is not None:
        start, stop = window
        if not 0 <= start < stop <= p.t_max:
            raise ValueError(f"window {window} is empty or outside [0, {p.t_max}]")
        x = x[:, start:stop]
    if x.shape[1] == 0:
        raise ValueError("empty window")
    return x.max(axis=1) - x.min(axis=1)


def top_k_by_rank(d, k: int) -> np.ndarray:
    """Indices of the ``k`` largest values, ties broken by smaller index."""
    d = np.asarray(d, dtype=np.float64)
    if not 1 <= k <= d.size:
        raise ValueError(f"k={k} outside [1, {d.size}]")
    order = np.lexsort((np.arange(d.size), -d))
    return order[:k]
