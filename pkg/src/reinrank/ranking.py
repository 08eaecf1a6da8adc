"""Authority scores on link graphs.

Two iterative methods share one stopping rule (relative L1 step size):

* :func:`reinforcement_rank` iterates ``R <- gamma * P^T R + r`` over the
  reverse adjacency.  Dangling rows of ``P`` stay empty and there is no
  teleportation; the map is still a contraction for ``gamma < 1``.
* :func:`pagerank` runs the structured power iteration on
  ``G = c (H + a u^T) + (1 - c) e v^T`` without materializing ``G``.

The dense ``exact_solve_*`` functions are ground-truth oracles for small
graphs and are kept deliberately independent of the sparse code paths.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Literal, Mapping

import numpy as np
import scipy.sparse as sp

from .graph import LinkGraph

DENSE_CAP_ENV = "REINRANK_DENSE_CAP"
DEFAULT_DENSE_CAP = 2000

ScoreKind = Literal["authority", "pagerank", "truncated"]


class ConfigError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class DenseCapExceeded(RuntimeError):
    pass


def dense_cap() -> int:
    return int(os.environ.get(DENSE_CAP_ENV, DEFAULT_DENSE_CAP))


# ---- inputs ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Policy:
    """Transition weights on the out-links of ``graph``.

    ``weights`` is aligned with ``graph.indices`` (CSR order).  Rows of
    non-dangling nodes sum to one; dangling rows are empty.
    """

    graph: LinkGraph
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        g = self.graph
        if w.shape != (g.num_edges,):
            raise ConfigError(f"policy has {w.shape[0]} weights for {g.num_edges} edges")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ConfigError("policy weights must be finite and non-negative")
        sums = np.bincount(g.sources, weights=w, minlength=g.n)
        live = ~g.dangling_mask
        bad = np.flatnonzero(live & (np.abs(sums - 1.0) > 1e-12))
        if len(bad):
            raise ConfigError(f"policy rows not stochastic at nodes {g.ids[bad[:10]].tolist()}")
        w.setflags(write=False)

    def matrix(self) -> sp.csr_matrix:
        g = self.graph
        return sp.csr_matrix((self.weights, g.indices, g.indptr), shape=(g.n, g.n))

    def reverse_operator(self) -> sp.csr_matrix:
        """``P^T`` in CSR form: row ``s`` lists predecessors of ``s`` in ascending order."""
        g = self.graph
        src = g.sources
        order = np.lexsort((src, g.indices))
        return sp.csr_matrix(
            (self.weights[order], g.rev_indices, g.rev_indptr), shape=(g.n, g.n)
        )


def uniform_policy(g: LinkGraph) -> Policy:
    """Random surfer: every out-link of a page is equally likely."""
    deg = g.out_degree
    return Policy(g, 1.0 / np.repeat(deg, deg).astype(np.float64))


def random_policy(g: LinkGraph, rng: np.random.Generator) -> Policy:
    """Dirichlet(1) weights on every non-dangling row."""
    raw = rng.exponential(size=g.num_edges)
    sums = np.bincount(g.sources, weights=raw, minlength=g.n)
    return Policy(g, raw / sums[g.sources])


def uniform_rewards(g: LinkGraph, value: float = 1.0) -> np.ndarray:
    if not math.isfinite(value):
        raise ConfigError("reward value must be finite")
    return np.full(g.n, float(value))


def _check_rewards(g: LinkGraph, r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (g.n,):
        raise ConfigError(f"reward vector has shape {r.shape}, graph has {g.n} nodes")
    if not np.isfinite(r).all():
        raise ConfigError("rewards must be finite")
    return r


def _check_policy(g: LinkGraph, p: Policy) -> None:
    if p.graph is not g and not (
        np.array_equal(p.graph.ids, g.ids) and np.array_equal(p.graph.indices, g.indices)
        and np.array_equal(p.graph.indptr, g.indptr)
    ):
        raise ConfigError("policy is defined on a different graph")


def _check_distribution(name: str, x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ConfigError(f"{name} has shape {x.shape}, expected ({n},)")
    if (x < 0).any() or not np.isfinite(x).all() or abs(x.sum() - 1.0) > 1e-12:
        raise ConfigError(f"{name} must be a probability vector")
    return x


# ---- outputs ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScoreVector:
    values: np.ndarray
    ids: np.ndarray
    kind: ScoreKind

    def __len__(self) -> int:
        return len(self.values)

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.ids.tolist(), self.values.tolist()))

    def __getitem__(self, external_id: int) -> float:
        k = int(np.searchsorted(self.ids, external_id))
        if k >= len(self.ids) or self.ids[k] != external_id:
            raise KeyError(external_id)
        return float(self.values[k])


@dataclass
class IterationConfig:
    """Settings shared by both iterative methods.

    ``discount`` is gamma for reinforcement ranking and the damping ``c``
    for Page Rank.  ``init`` is either ``None`` (method default), a
    :class:`ScoreVector` mapped onto the graph by external id, or a plain
    array already aligned with the graph's internal indices.
    """

    discount: float = 0.85
    tol: float = 1e-10
    max_iterations: int = 10_000
    init: ScoreVector | np.ndarray | None = None
    deterministic: bool = False

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ConfigError(f"discount must lie in (0, 1), got {self.discount}")
        if not self.tol > 0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")


@dataclass
class ConvergenceTrace:
    residuals: list[float] = field(default_factory=list)
    rel_errors: list[float] | None = None
    initial_rel_error: float | None = None
    converged: bool = False
    # Page Rank only: omega = ||x_k||_1 - ||c H^T x_k||_1 per iteration
    omegas: list[float] = field(default_factory=list)

    @property
    def iterations_used(self) -> int:
        return len(self.residuals)

    def records(self) -> list[tuple[int, float, float | None]]:
        rel = self.rel_errors or [None] * len(self.residuals)
        return [(k + 1, res, e) for k, (res, e) in enumerate(zip(self.residuals, rel))]


def _rel_error(x: np.ndarray, ref: np.ndarray) -> float:
    scale = np.abs(ref).sum()
    diff = np.abs(x - ref).sum()
    return float(diff / scale) if scale > 0 else float(diff)


def warm_start_vector(scores: ScoreVector, g: LinkGraph, default: np.ndarray) -> np.ndarray:
    """Map ``scores`` onto ``g`` by external id; nodes not in ``scores`` take ``default``."""
    x = np.array(default, dtype=np.float64, copy=True)
    pos = np.searchsorted(scores.ids, g.ids)
    pos = np.minimum(pos, max(len(scores.ids) - 1, 0))
    hit = scores.ids[pos] == g.ids if len(scores.ids) else np.zeros(g.n, dtype=bool)
    x[hit] = scores.values[pos[hit]]
    return x


def _initial(cfg: IterationConfig, g: LinkGraph, default: np.ndarray) -> np.ndarray:
    if cfg.init is None:
        return default.copy()
    if isinstance(cfg.init, ScoreVector):
        return warm_start_vector(cfg.init, g, default)
    x = np.asarray(cfg.init, dtype=np.float64)
    if x.shape != (g.n,):
        raise ConfigError(f"init vector has shape {x.shape}, graph has {g.n} nodes")
    return x.copy()


Callback = Callable[[int, np.ndarray], None]


def _iterate(step, x, cfg, reference, trace, callback):
    if reference is not None:
        trace.rel_errors = []
        trace.initial_rel_error = _rel_error(x, reference)
    if callback is not None:
        callback(0, x)
    for k in range(1, cfg.max_iterations + 1):
        nxt = step(x)
        if not np.isfinite(nxt).all():
            raise NumericalError(f"non-finite iterate at iteration {k}")
        res = float(np.abs(nxt - x).sum())
        trace.residuals.append(res)
        if reference is not None:
            trace.rel_errors.append(_rel_error(nxt, reference))
        if callback is not None:
            callback(k, nxt)
        scale = float(np.abs(x).sum())
        x = nxt
        if res <= cfg.tol * scale:
            trace.converged = True
            break
    return x


# ---- reinforcement ranking -------------------------------------------------


def reinforcement_rank(
    g: LinkGraph,
    p: Policy,
    r,
    cfg: IterationConfig | None = None,
    *,
    reference: np.ndarray | None = None,
    callback: Callback | None = None,
) -> tuple[ScoreVector, ConvergenceTrace]:
    """Reverse Bellman iteration ``R_{k+1} = gamma P^T R_k + r`` from ``R_0 = r``.

    ``reference`` (a known solution) switches on relative-error tracking.
    ``callback(k, R_k)`` sees every iterate, starting with ``k = 0``.
    """
    cfg = cfg or IterationConfig()
    _check_policy(g, p)
    r = _check_rewards(g, r)
    gamma = cfg.discount
    rev = p.reverse_operator()
    x0 = _initial(cfg, g, r)

    def step(x):
        return gamma * (rev @ x) + r

    trace = ConvergenceTrace()
    x = _iterate(step, x0, cfg, reference, trace, callback)
    return ScoreVector(x, g.ids, "authority"), trace


def truncated_rank(g: LinkGraph, p: Policy, r, gamma: float, depth: int) -> ScoreVector:
    """Partial sum ``sum_{j<=depth} gamma^j r^(j)`` of k-step historical rewards."""
    if depth < 0:
        raise ConfigError("depth must be non-negative")
    _check_policy(g, p)
    r = _check_rewards(g, r)
    rev = p.reverse_operator()
    total = r.copy()
    term = r
    for j in range(1, depth + 1):
        term = rev @ term
        total += gamma**j * term
    return ScoreVector(total, g.ids, "truncated")


def residual(g: LinkGraph, p: Policy, r, gamma: float, R) -> float:
    """Fixed-point defect ``||R - (gamma P^T R + r)||_inf``."""
    r = _check_rewards(g, r)
    R = np.asarray(getattr(R, "values", R), dtype=np.float64)
    if R.shape != r.shape:
        raise ConfigError("score vector and rewards differ in length")
    if g.n == 0:
        return 0.0
    return float(np.abs(R - (gamma * (p.reverse_operator() @ R) + r)).max())


# ---- Page Rank -------------------------------------------------------------


def pagerank(
    g: LinkGraph,
    cfg: IterationConfig | None = None,
    v=None,
    u=None,
    *,
    reference: np.ndarray | None = None,
    callback: Callback | None = None,
) -> tuple[ScoreVector, ConvergenceTrace]:
    """Power iteration for Page Rank exploiting the sparse-plus-rank-one structure.

    With ``u`` omitted (or equal to ``v``) a single correction
    ``omega = ||x_k||_1 - ||c H^T x_k||_1`` is added along ``v``.  Otherwise
    dangling mass goes along ``u`` and teleport mass along ``v``, which
    reproduces ``G^T x_k`` exactly.
    """
    cfg = cfg or IterationConfig()
    n = g.n
    if n == 0:
        raise ConfigError("empty graph")
    v = np.full(n, 1.0 / n) if v is None else _check_distribution("teleportation vector", v, n)
    if u is not None:
        u = _check_distribution("dangling distribution", u, n)
        if np.array_equal(u, v):
            u = None
    c = cfg.discount
    ht = uniform_policy(g).reverse_operator()
    dangling = g.dangling_mask
    trace = ConvergenceTrace()

    x0 = _initial(cfg, g, np.full(n, 1.0 / n)) if cfg.init is not None else v.copy()
    if (x0 < 0).any() or x0.sum() <= 0:
        raise ConfigError("Page Rank start vector must be non-negative and non-zero")
    x0 = x0 / x0.sum()

    def step(x):
        y = c * (ht @ x)
        xnorm = np.abs(x).sum()
        omega = xnorm - np.abs(y).sum()
        trace.omegas.append(float(omega))
        if u is None:
            y += omega * v
        else:
            y += (c * x[dangling].sum()) * u + ((1.0 - c) * xnorm) * v
        return y

    x = _iterate(step, x0, cfg, reference, trace, callback)
    return ScoreVector(x / x.sum(), g.ids, "pagerank"), trace


# ---- dense oracles ---------------------------------------------------------


def _refuse_large(g: LinkGraph, cap: int | None) -> None:
    cap = dense_cap() if cap is None else cap
    if g.n > cap:
        raise DenseCapExceeded(f"graph has {g.n} nodes, dense oracle cap is {cap}")


def _dense_transition(g: LinkGraph, weights: np.ndarray) -> np.ndarray:
    P = np.zeros((g.n, g.n))
    k = 0
    for i, succ in enumerate(g.forward_adjacency):
        for j in succ:
            P[i, j] = weights[k]
            k += 1
    return P


def exact_solve_rr(
    g: LinkGraph, p: Policy, r, gamma: float, *, cap: int | None = None
) -> ScoreVector:
    """Solve ``(I - gamma P^T) R = r`` by LU factorization."""
    _refuse_large(g, cap)
    r = _check_rewards(g, r)
    P = _dense_transition(g, p.weights)
    R = np.linalg.solve(np.eye(g.n) - gamma * P.T, r)
    return ScoreVector(R, g.ids, "authority")


def exact_solve_pagerank(
    g: LinkGraph, c: float, v=None, u=None, *, cap: int | None = None
) -> ScoreVector:
    """Stationary distribution of the explicit Google matrix ``G``."""
    _refuse_large(g, cap)
    n = g.n
    e = np.ones(n)
    v = e / n if v is None else _check_distribution("teleportation vector", v, n)
    u = v if u is None else _check_distribution("dangling distribution", u, n)
    L = np.zeros((n, n))
    for a, b in g.edge_array():
        L[g.index_of(a), g.index_of(b)] = 1.0
    rows = L.sum(axis=1)
    a = (rows == 0).astype(np.float64)
    H = L / np.where(rows > 0, rows, 1.0)[:, None]
    S = H + np.outer(a, u)
    G = c * S + (1.0 - c) * np.outer(e, v)
    A = np.vstack([G.T - np.eye(n), e[None, :]])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return ScoreVector(pi / pi.sum(), g.ids, "pagerank")


# ---- files -----------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_scores(path: str | os.PathLike, scores: ScoreVector) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["external_id", "score"])
        for i, x in zip(scores.ids.tolist(), scores.values.tolist()):
            w.writerow([i, _fmt(x)])


def read_scores(path: str | os.PathLike, kind: ScoreKind = "authority") -> ScoreVector:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(int(row["external_id"]), float(row["score"])) for row in csv.DictReader(fh)]
    rows.sort()
    ids = np.array([i for i, _ in rows], dtype=np.int64)
    vals = np.array([x for _, x in rows], dtype=np.float64)
    return ScoreVector(vals, ids, kind)


def write_trace(path: str | os.PathLike, trace: ConvergenceTrace) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "l1_residual", "rel_error_vs_reference"])
        for k, res, err in trace.records():
            w.writerow([k, _fmt(res), "" if err is None else _fmt(err)])


def read_values(path: str | os.PathLike) -> dict[int, float]:
    """Read an ``external_id,value`` CSV (rewards, teleportation, ...)."""
    with open(path, newline="", encoding="utf-8") as fh:
        return {int(row["external_id"]): float(row["value"]) for row in csv.DictReader(fh)}


def vector_from_values(g: LinkGraph, values: Mapping[int, float], default: float) -> np.ndarray:
    unknown = sorted(set(values) - g.node_set())
    if unknown:
        raise ConfigError(f"values given for unknown nodes {unknown[:10]}")
    x = np.full(g.n, float(default))
    for ext, val in values.items():
        x[g.index_of(ext)] = val
    return x
