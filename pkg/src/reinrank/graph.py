"""Immutable link-graph snapshots with forward and reverse CSR adjacency.

Nodes carry an external id (a non-negative integer from the input files)
and a dense internal index in ``[0, n)``.  Internal indices follow the
ascending order of external ids, so two snapshots over the same node set
always share an indexing.
"""
from __future__ import annotations

import csv
import hashlib
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class GraphError(Exception):
    """Base class for graph construction and validation failures."""


class GraphParseError(GraphError):
    def __init__(self, path: str | os.PathLike, lineno: int, line: str, reason: str):
        self.path = str(path)
        self.lineno = lineno
        self.line = line
        super().__init__(f"{path}:{lineno}: {reason}: {line!r}")


class EmptyGraphError(GraphError):
    pass


class DeltaValidationError(GraphError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid graph delta:\n  " + "\n  ".join(problems))


Edge = tuple[int, int]


def _csr(rows: np.ndarray, cols: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    # rows/cols must already be sorted by (row, col)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, cols.astype(np.int64, copy=True)


@dataclass(frozen=True, eq=False)
class LinkGraph:
    """A directed graph snapshot; never mutated after construction.

    Use :meth:`from_edges` (or :func:`load_graph`) to build one.
    """

    ids: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    rev_indptr: np.ndarray
    rev_indices: np.ndarray
    _index: dict[int, int] = field(repr=False)

    @classmethod
    def from_edges(
        cls, edges: Iterable[Edge], nodes: Iterable[int] = ()
    ) -> LinkGraph:
        """Build a snapshot from external-id edges plus optional isolated nodes.

        Duplicate edges collapse to one; self-loops are kept.
        """
        arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                         dtype=np.int64).reshape(-1, 2)
        extra = np.fromiter((int(x) for x in nodes), dtype=np.int64)
        if (arr < 0).any() or (extra < 0).any():
            raise GraphError("external ids must be non-negative")
        ids = np.unique(np.concatenate([arr.ravel(), extra]))
        n = len(ids)
        src = np.searchsorted(ids, arr[:, 0])
        dst = np.searchsorted(ids, arr[:, 1])
        if len(src):
            pairs = np.unique(np.stack([src, dst], axis=1), axis=0)
            src, dst = pairs[:, 0], pairs[:, 1]
        indptr, indices = _csr(src, dst, n)
        order = np.lexsort((src, dst))
        rev_indptr, rev_indices = _csr(dst[order], src[order], n)
        index = {int(x): i for i, x in enumerate(ids)}
        g = cls(ids, indptr, indices, rev_indptr, rev_indices, index)
        for a in (ids, indptr, indices, rev_indptr, rev_indices):
            a.setflags(write=False)
        if not transpose_check(g):
            raise GraphError("reverse adjacency is not the transpose of forward adjacency")
        return g

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def num_edges(self) -> int:
        return len(self.indices)

    @property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def in_degree(self) -> np.ndarray:
        return np.diff(self.rev_indptr)

    @property
    def dangling_mask(self) -> np.ndarray:
        return self.out_degree == 0

    @property
    def sources(self) -> np.ndarray:
        """Internal source index of every edge, aligned with ``indices``."""
        return np.repeat(np.arange(self.n, dtype=np.int64), self.out_degree)

    def successors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def predecessors(self, i: int) -> np.ndarray:
        return self.rev_indices[self.rev_indptr[i]:self.rev_indptr[i + 1]]

    @property
    def forward_adjacency(self) -> list[np.ndarray]:
        return [self.successors(i) for i in range(self.n)]

    @property
    def reverse_adjacency(self) -> list[np.ndarray]:
        return [self.predecessors(i) for i in range(self.n)]

    def index_of(self, external_id: int) -> int:
        return self._index[int(external_id)]

    def __contains__(self, external_id: int) -> bool:
        return int(external_id) in self._index

    def edge_array(self) -> np.ndarray:
        """Edges as an ``(m, 2)`` array of external ids, sorted."""
        return np.stack([self.ids[self.sources], self.ids[self.indices]], axis=1)

    def edge_set(self) -> set[Edge]:
        return {(int(a), int(b)) for a, b in self.edge_array()}

    def node_set(self) -> set[int]:
        return {int(x) for x in self.ids}

    def has_edge(self, src: int, dst: int) -> bool:
        if src not in self or dst not in self:
            return False
        succ = self.successors(self.index_of(src))
        j = self.index_of(dst)
        k = np.searchsorted(succ, j)
        return bool(k < len(succ) and succ[k] == j)

    def adjacency_matrix(self) -> sp.csr_matrix:
        """The 0/1 matrix ``L`` with ``L[i, j] = 1`` for each link i -> j."""
        data = np.ones(self.num_edges)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def isolated_nodes(self) -> np.ndarray:
        return self.ids[(self.out_degree == 0) & (self.in_degree == 0)]


def transpose_check(g: LinkGraph) -> bool:
    """True iff the reverse adjacency is exactly the transpose of the forward one."""
    n = len(g.ids)
    if len(g.indptr) != n + 1 or len(g.rev_indptr) != n + 1:
        return False
    if len(g.indices) != len(g.rev_indices):
        return False
    fwd_src = np.repeat(np.arange(n), np.diff(g.indptr))
    rev_dst = np.repeat(np.arange(n), np.diff(g.rev_indptr))
    fwd = np.stack([fwd_src, g.indices], axis=1)
    rev = np.stack([g.rev_indices, rev_dst], axis=1)
    if len(fwd) == 0:
        return True
    fwd = fwd[np.lexsort((fwd[:, 1], fwd[:, 0]))]
    rev = rev[np.lexsort((rev[:, 1], rev[:, 0]))]
    return bool(np.array_equal(fwd, rev))


# ---- file formats ----------------------------------------------------------


def _parse_int(tok: str) -> int:
    v = int(tok)
    if v < 0:
        raise ValueError("negative id")
    return v


def read_edge_list(path: str | os.PathLike) -> list[Edge]:
    edges: list[Edge] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 2:
                raise GraphParseError(path, lineno, line, f"expected 2 tokens, got {len(toks)}")
            try:
                edges.append((_parse_int(toks[0]), _parse_int(toks[1])))
            except ValueError:
                raise GraphParseError(path, lineno, line, "non-integer or negative node id") from None
    return edges


def read_node_manifest(path: str | os.PathLike) -> list[int]:
    nodes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                nodes.append(_parse_int(line))
            except ValueError:
                raise GraphParseError(path, lineno, line, "bad node id") from None
    return nodes


def load_graph(
    path: str | os.PathLike, nodes_path: str | os.PathLike | None = None
) -> LinkGraph:
    """Load an edge-list file (``src dst`` per line, ``#`` comments)."""
    edges = read_edge_list(path)
    nodes = read_node_manifest(nodes_path) if nodes_path is not None else []
    if not edges and not nodes:
        raise EmptyGraphError(f"{path}: no edges")
    return LinkGraph.from_edges(edges, nodes)


def save_graph(
    g: LinkGraph, path: str | os.PathLike, nodes_path: str | os.PathLike | None = None
) -> None:
    """Write ``g`` as an edge list; isolated nodes go to ``nodes_path`` if given."""
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in g.edge_array():
            fh.write(f"{a} {b}\n")
    if nodes_path is not None:
        with open(nodes_path, "w", encoding="utf-8") as fh:
            for x in g.isolated_nodes():
                fh.write(f"{x}\n")


def write_id_map(g: LinkGraph, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["external_id", "internal_index"])
        for i, x in enumerate(g.ids):
            w.writerow([int(x), i])


def read_id_map(path: str | os.PathLike) -> dict[int, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {int(row["external_id"]): int(row["internal_index"]) for row in csv.DictReader(fh)}


# ---- deltas ----------------------------------------------------------------


@dataclass(frozen=True)
class GraphDelta:
    added_nodes: frozenset[int] = frozenset()
    removed_nodes: frozenset[int] = frozenset()
    added_edges: frozenset[Edge] = frozenset()
    removed_edges: frozenset[Edge] = frozenset()

    @classmethod
    def make(
        cls,
        added_nodes: Iterable[int] = (),
        removed_nodes: Iterable[int] = (),
        added_edges: Iterable[Edge] = (),
        removed_edges: Iterable[Edge] = (),
    ) -> GraphDelta:
        return cls(
            frozenset(int(x) for x in added_nodes),
            frozenset(int(x) for x in removed_nodes),
            frozenset((int(a), int(b)) for a, b in added_edges),
            frozenset((int(a), int(b)) for a, b in removed_edges),
        )

    def inverse(self) -> GraphDelta:
        return GraphDelta(self.removed_nodes, self.added_nodes,
                          self.removed_edges, self.added_edges)

    def is_empty(self) -> bool:
        return not (self.added_nodes or self.removed_nodes
                    or self.added_edges or self.removed_edges)


def validate_delta(g: LinkGraph, d: GraphDelta) -> list[str]:
    """Return a list of problems with applying ``d`` to ``g`` (empty if valid)."""
    problems: list[str] = []
    nodes = g.node_set()
    edges = g.edge_set()
    for x in sorted(d.removed_nodes - nodes):
        problems.append(f"removed node {x} not in graph")
    for x in sorted(d.added_nodes & nodes):
        problems.append(f"added node {x} already in graph")
    for e in sorted(d.removed_edges - edges):
        problems.append(f"removed edge {e} not in graph")
    for e in sorted(d.added_edges & edges):
        problems.append(f"added edge {e} already in graph")
    for e in sorted(edges - d.removed_edges):
        if e[0] in d.removed_nodes or e[1] in d.removed_nodes:
            problems.append(f"edge {e} is incident to a removed node but not removed")
    final_nodes = (nodes - d.removed_nodes) | d.added_nodes
    for e in sorted(d.added_edges):
        if e[0] not in final_nodes or e[1] not in final_nodes:
            problems.append(f"added edge {e} references an unknown node")
    return problems


def apply_delta(g: LinkGraph, d: GraphDelta) -> LinkGraph:
    """Return a new snapshot with ``d`` applied; ``g`` is left untouched."""
    problems = validate_delta(g, d)
    if problems:
        raise DeltaValidationError(problems)
    edges = (g.edge_set() - d.removed_edges) | d.added_edges
    nodes = (g.node_set() - d.removed_nodes) | d.added_nodes
    return LinkGraph.from_edges(sorted(edges), sorted(nodes))


def diff_graphs(old: LinkGraph, new: LinkGraph) -> GraphDelta:
    """The delta ``d`` such that ``apply_delta(old, d)`` equals ``new``."""
    on, nn = old.node_set(), new.node_set()
    oe, ne = old.edge_set(), new.edge_set()
    return GraphDelta(frozenset(nn - on), frozenset(on - nn),
                      frozenset(ne - oe), frozenset(oe - ne))


def union(g1: LinkGraph, g2: LinkGraph) -> LinkGraph:
    """Disjoint union of two snapshots over non-overlapping external ids."""
    if g1.node_set() & g2.node_set():
        raise GraphError("graphs share external ids")
    edges = np.concatenate([g1.edge_array(), g2.edge_array()])
    return LinkGraph.from_edges(edges, np.concatenate([g1.ids, g2.ids]))


def induced_subgraph(g: LinkGraph, external_ids: Iterable[int]) -> LinkGraph:
    keep = {int(x) for x in external_ids}
    edges = [(a, b) for a, b in g.edge_set() if a in keep and b in keep]
    return LinkGraph.from_edges(sorted(edges), sorted(keep))


# ---- structure -------------------------------------------------------------


def weakly_connected_components(g: LinkGraph) -> list[frozenset[int]]:
    """Partition of external ids into weakly connected components.

    Components are ordered by their smallest external id.
    """
    if g.n == 0:
        return []
    _, labels = connected_components(g.adjacency_matrix(), directed=True, connection="weak")
    groups: dict[int, list[int]] = {}
    for ext, lab in zip(g.ids.tolist(), labels.tolist()):
        groups.setdefault(lab, []).append(ext)
    return sorted((frozenset(v) for v in groups.values()), key=min)


def forward_reachable(g: LinkGraph, start: Sequence[int]) -> np.ndarray:
    """Boolean mask of internal indices reachable from ``start`` (inclusive)."""
    seen = np.zeros(g.n, dtype=bool)
    stack = [int(s) for s in start]
    seen[stack] = True
    while stack:
        i = stack.pop()
        for j in g.successors(i):
            if not seen[j]:
                seen[j] = True
                stack.append(int(j))
    return seen


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


__all__ = [
    "DeltaValidationError", "EmptyGraphError", "GraphDelta", "GraphError",
    "GraphParseError", "LinkGraph", "apply_delta", "diff_graphs", "file_digest",
    "forward_reachable", "induced_subgraph", "load_graph", "read_edge_list",
    "read_id_map", "read_node_manifest", "save_graph", "transpose_check",
    "union", "validate_delta", "weakly_connected_components", "write_id_map",
]
