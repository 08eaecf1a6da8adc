"""Graph-evolution experiments and score-independence checks.

The evolution generator is a synthetic stand-in for dated web crawls: a
preferential-attachment base graph is perturbed step by step with exact
node/link add and delete counts.  :func:`run_update_experiment` then
measures how much a warm start from an older snapshot's scores helps
each method converge on a newer snapshot.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .graph import (
    GraphDelta,
    GraphError,
    LinkGraph,
    apply_delta,
    diff_graphs,
    forward_reachable,
    union,
)
from .ranking import (
    ConvergenceTrace,
    IterationConfig,
    Policy,
    ScoreVector,
    exact_solve_pagerank,
    exact_solve_rr,
    pagerank,
    reinforcement_rank,
    uniform_policy,
    uniform_rewards,
)

Method = Literal["pagerank", "rr"]
PolicyFn = Callable[[LinkGraph], Policy]
RewardsFn = Callable[[LinkGraph], np.ndarray]

REFERENCE_TOL = 1e-12


class EvolutionError(ValueError):
    pass


# ---- synthetic evolution ---------------------------------------------------


@dataclass
class EvolutionSpec:
    seed: int = 0
    base_nodes: int = 5000
    base_edge_factor: float = 8.0
    steps: list[tuple[float, float, float, float]] = field(default_factory=list)
    dangling_fraction: float = 0.1
    # (initializer, target) snapshot index pairs; None means consecutive pairs
    pairs: list[tuple[int, int]] | None = None

    def __post_init__(self):
        self.steps = [tuple(float(x) for x in s) for s in self.steps]
        if self.pairs is not None:
            self.pairs = [(int(a), int(b)) for a, b in self.pairs]
        if self.base_nodes < 1:
            raise EvolutionError("base graph needs at least one node")
        if self.base_edge_factor < 0:
            raise EvolutionError("edge factor must be non-negative")
        for s in self.steps:
            if len(s) != 4 or any(not 0 <= x <= 100 for x in s):
                raise EvolutionError(f"step percentages must be four values in [0, 100]: {s}")
            if s[1] >= 100:
                raise EvolutionError("a step may not delete every node")

    @classmethod
    def load(cls, path: str | os.PathLike) -> EvolutionSpec:
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def dump(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)


def builtin_evolution_spec(seed: int = 0, base_nodes: int = 5000) -> EvolutionSpec:
    """Four snapshots whose pairwise deltas resemble yearly crawls of a large wiki.

    Pairs (target index 3 is the newest) run from a near pair with small
    changes to a far pair spanning every step.
    """
    return EvolutionSpec(
        seed=seed,
        base_nodes=base_nodes,
        base_edge_factor=8.0,
        steps=[(18.0, 11.0, 15.0, 20.0), (18.0, 5.0, 39.0, 20.0), (12.0, 4.0, 17.0, 8.0)],
        pairs=[(2, 3), (1, 2), (1, 3), (0, 3)],
    )


class _EdgePool:
    """Edge list with O(1) uniform sampling of edge targets (for attachment)."""

    def __init__(self, edges):
        self.targets = [b for _, b in edges]

    def pick_target(self, rng, nodes: np.ndarray, copy_prob: float = 0.5) -> int:
        if self.targets and rng.random() < copy_prob:
            return self.targets[int(rng.integers(len(self.targets)))]
        return int(nodes[rng.integers(len(nodes))])


def _base_graph(spec: EvolutionSpec, rng: np.random.Generator) -> LinkGraph:
    n = spec.base_nodes
    nodes = np.arange(n, dtype=np.int64)
    n_dangling = int(round(spec.dangling_fraction * n))
    sources = rng.permutation(n)[n_dangling:] if n_dangling < n else np.empty(0, np.int64)
    m = int(round(spec.base_edge_factor * n))
    m = min(m, len(sources) * (n - 1))
    edges: set[tuple[int, int]] = set()
    pool = _EdgePool([])
    while len(edges) < m:
        a = int(sources[rng.integers(len(sources))])
        b = pool.pick_target(rng, nodes)
        if a == b or (a, b) in edges:
            continue
        edges.add((a, b))
        pool.targets.append(b)
    return LinkGraph.from_edges(sorted(edges), nodes)


def _evolve(g: LinkGraph, step, rng: np.random.Generator, next_id: int) -> GraphDelta:
    add_n, del_n, add_l, del_l = step
    n, m = g.n, g.num_edges
    n_add = int(round(add_n * n / 100))
    n_del = int(round(del_n * n / 100))
    e_add = int(round(add_l * m / 100))
    e_del = int(round(del_l * m / 100))
    if n_del >= n:
        raise EvolutionError("step would empty the graph")

    edges = g.edge_array()
    incident: dict[int, list[int]] = {}
    for k, (a, b) in enumerate(edges.tolist()):
        incident.setdefault(a, []).append(k)
        if b != a:
            incident.setdefault(b, []).append(k)

    removed_nodes: list[int] = []
    removed_edge_idx: set[int] = set()
    # low-degree pages are the likeliest to disappear; keeps node deletions
    # inside the link-deletion budget
    weight = 1.0 / (g.in_degree + g.out_degree + 1.0)
    order = rng.choice(g.ids, size=n, replace=False, p=weight / weight.sum())
    for x in order.tolist():
        if len(removed_nodes) == n_del:
            break
        inc = [k for k in incident.get(x, []) if k not in removed_edge_idx]
        if len(removed_edge_idx) + len(inc) <= e_del:
            removed_nodes.append(x)
            removed_edge_idx.update(inc)
    if len(removed_nodes) < n_del:
        raise EvolutionError(
            f"cannot delete {n_del} nodes within a budget of {e_del} deleted links"
        )
    gone = set(removed_nodes)
    candidates = [k for k in rng.permutation(m).tolist()
                  if k not in removed_edge_idx and edges[k, 0] not in gone and edges[k, 1] not in gone]
    removed_edge_idx.update(candidates[: e_del - len(removed_edge_idx)])
    removed_edges = {(int(edges[k, 0]), int(edges[k, 1])) for k in removed_edge_idx}

    base_edges = g.edge_set()
    survivors = np.array(sorted(g.node_set() - gone), dtype=np.int64)
    new_nodes = list(range(next_id, next_id + n_add))
    final_nodes = np.concatenate([survivors, np.array(new_nodes, dtype=np.int64)])
    pool = _EdgePool(sorted(base_edges - removed_edges))
    added: set[tuple[int, int]] = set()

    def try_add(a: int, b: int) -> bool:
        e = (a, b)
        if a == b or e in base_edges or e in added:
            return False
        added.add(e)
        pool.targets.append(b)
        return True

    per_node = min(int(round(g.num_edges / max(n, 1))) or 1, e_add // n_add) if n_add else 0
    attach_from = survivors
    for x in new_nodes:
        got = 0
        for _ in range(50 * max(per_node, 1)):
            if got == per_node:
                break
            got += try_add(x, pool.pick_target(rng, attach_from))
        attach_from = np.append(attach_from, x)
    attempts = 0
    while len(added) < e_add:
        attempts += 1
        if attempts > 100 * (e_add + 1):
            raise EvolutionError("could not place the requested number of new links")
        a = int(final_nodes[rng.integers(len(final_nodes))])
        try_add(a, pool.pick_target(rng, final_nodes))
    return GraphDelta.make(new_nodes, removed_nodes, added, removed_edges)


def generate_evolution(spec: EvolutionSpec) -> list[tuple[LinkGraph, GraphDelta | None]]:
    """Snapshots ``[(base, None), (g1, d1), ...]`` with ``g_k = apply_delta(g_{k-1}, d_k)``.

    Deterministic in ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)
    g = _base_graph(spec, rng)
    out: list[tuple[LinkGraph, GraphDelta | None]] = [(g, None)]
    next_id = int(g.ids.max()) + 1
    for step in spec.steps:
        d = _evolve(g, step, rng, next_id)
        next_id += len(d.added_nodes)
        g = apply_delta(g, d)
        if g.n == 0:
            raise EvolutionError("evolution emptied the graph")
        out.append((g, d))
    return out


def random_graph(
    rng: np.random.Generator,
    n: int,
    avg_out_degree: float,
    dangling_fraction: float = 0.0,
    id_offset: int = 0,
) -> LinkGraph:
    """Uniform random digraph: non-dangling nodes get ``max(1, Poisson(d))`` out-links."""
    edges = []
    dangling = rng.random(n) < dangling_fraction
    for i in range(n):
        if dangling[i]:
            continue
        k = min(n, max(1, int(rng.poisson(avg_out_degree))))
        for j in rng.choice(n, size=k, replace=False):
            edges.append((i + id_offset, int(j) + id_offset))
    return LinkGraph.from_edges(edges, range(id_offset, id_offset + n))


def delta_percentages(old: LinkGraph, new: LinkGraph) -> tuple[float, float, float, float]:
    """Realized (+nodes%, -nodes%, +links%, -links%) between two snapshots."""
    d = diff_graphs(old, new)
    n, m = max(old.n, 1), max(old.num_edges, 1)
    return (100 * len(d.added_nodes) / n, 100 * len(d.removed_nodes) / n,
            100 * len(d.added_edges) / m, 100 * len(d.removed_edges) / m)


# ---- updating experiment ---------------------------------------------------


@dataclass
class UpdateExperimentResult:
    method: Method
    init_kind: Literal["default", "warm"]
    pair: tuple[int, int]
    iterations_to_tol: int
    converged: bool
    trace: ConvergenceTrace
    initial_rel_error: float

    def rel_error_after(self, k: int) -> float:
        """Relative error vs the reference after ``k`` iterations (0 = start vector)."""
        if k == 0:
            return self.initial_rel_error
        errs = self.trace.rel_errors
        return errs[min(k, len(errs)) - 1]


def _solve(method: Method, g: LinkGraph, cfg: IterationConfig, reference=None):
    if method == "rr":
        return reinforcement_rank(g, uniform_policy(g), uniform_rewards(g), cfg, reference=reference)
    if method == "pagerank":
        return pagerank(g, cfg, reference=reference)
    raise ValueError(f"unknown method {method!r}")


def run_update_experiment(
    snapshots: Sequence[LinkGraph],
    method: Method,
    discount: float = 0.85,
    tol: float = 1e-10,
    pairs: Sequence[tuple[int, int]] | None = None,
    max_iterations: int = 10_000,
) -> list[UpdateExperimentResult]:
    """Default-init vs warm-start convergence on each (initializer, target) pair.

    Uses the uniform surfer policy, unit rewards and uniform teleportation.
    Warm starts map the initializer's converged scores onto the target by
    external id.
    """
    if len(snapshots) < 2:
        raise ValueError("need at least two snapshots")
    if pairs is None:
        pairs = [(i, i + 1) for i in range(len(snapshots) - 1)]
    converged: dict[int, ScoreVector] = {}

    def solution(i: int) -> ScoreVector:
        if i not in converged:
            cfg = IterationConfig(discount, REFERENCE_TOL, max_iterations)
            converged[i] = _solve(method, snapshots[i], cfg)[0]
        return converged[i]

    results = []
    for i, j in pairs:
        target = snapshots[j]
        ref = solution(j).values
        for kind, init in (("default", None), ("warm", solution(i))):
            cfg = IterationConfig(discount, tol, max_iterations, init=init)
            _, trace = _solve(method, target, cfg, reference=ref)
            results.append(UpdateExperimentResult(
                method, kind, (i, j), trace.iterations_used, trace.converged,
                trace, trace.initial_rel_error,
            ))
    return results


# ---- independence checks ---------------------------------------------------


Solver = Literal["iterative", "dense"]


def _scores(method: Method, g: LinkGraph, p: Policy, r: np.ndarray, gamma: float,
            tol: float, solver: Solver = "iterative"):
    if solver == "dense":
        if method == "rr":
            return exact_solve_rr(g, p, r, gamma)
        return exact_solve_pagerank(g, gamma)
    cfg = IterationConfig(gamma, tol)
    if method == "rr":
        return reinforcement_rank(g, p, r, cfg)[0]
    return pagerank(g, cfg)[0]


def _default_rewards(g: LinkGraph) -> np.ndarray:
    return uniform_rewards(g)


def _max_change(a: ScoreVector, b: ScoreVector, ids) -> float:
    ids = list(ids)
    if not ids:
        return 0.0
    return max(abs(a[x] - b[x]) for x in ids)


@dataclass
class DisjointReport:
    method: Method
    discrepancy: float


def check_disjoint_independence(
    g1: LinkGraph,
    g2: LinkGraph,
    gamma: float = 0.85,
    *,
    policy: PolicyFn = uniform_policy,
    rewards: RewardsFn = _default_rewards,
    method: Method = "rr",
    tol: float = REFERENCE_TOL,
    solver: Solver = "iterative",
) -> DisjointReport:
    """Max difference between scores on ``g1 + g2`` and scores computed per part."""
    if g1.node_set() & g2.node_set():
        raise GraphError("component graphs share external ids")
    local = {}
    for g in (g1, g2):
        local.update(_scores(method, g, policy(g), rewards(g), gamma, tol, solver).as_dict())
    u = union(g1, g2)
    joint = _scores(method, u, policy(u), rewards(u), gamma, tol, solver).as_dict()
    return DisjointReport(method, max(abs(joint[x] - local[x]) for x in joint))


@dataclass
class AltruisticReport:
    method: Method
    max_change: float
    altruism_preserving: bool
    violations: list[str]


def check_altruistic_independence(
    g: LinkGraph,
    altruistic_nodes,
    d: GraphDelta,
    gamma: float = 0.85,
    *,
    policy: PolicyFn = uniform_policy,
    rewards: RewardsFn = _default_rewards,
    method: Method = "rr",
    tol: float = REFERENCE_TOL,
    solver: Solver = "iterative",
) -> AltruisticReport:
    """Score change on a node set with no in-links from outside, across ``d``.

    Violations are reported (not raised): new incoming links, removal of
    set members, or a change in the policy weights of links inside the set.
    """
    A = {int(x) for x in altruistic_nodes}
    g2 = apply_delta(g, d)
    violations = []
    for label, h in (("before", g), ("after", g2)):
        for a, b in sorted(h.edge_set()):
            if b in A and a not in A:
                violations.append(f"incoming link {a}->{b} ({label} delta)")
    for x in sorted(A & d.removed_nodes):
        violations.append(f"altruistic node {x} removed")
    p1, p2 = policy(g), policy(g2)
    w1 = _inside_weights(g, p1, A)
    w2 = _inside_weights(g2, p2, A)
    if w1.keys() != w2.keys() or any(abs(w1[e] - w2[e]) > 1e-15 for e in w1):
        violations.append("policy weights on links inside the set changed")
    s1 = _scores(method, g, p1, rewards(g), gamma, tol, solver)
    s2 = _scores(method, g2, p2, rewards(g2), gamma, tol, solver)
    keep = [x for x in sorted(A) if x in g2]
    return AltruisticReport(method, _max_change(s1, s2, keep), not violations, violations)


def _inside_weights(g: LinkGraph, p: Policy, A: set[int]) -> dict[tuple[int, int], float]:
    out = {}
    for (a, b), w in zip(g.edge_array().tolist(), p.weights.tolist()):
        if a in A and b in A:
            out[(a, b)] = w
    return out


@dataclass
class LocalityReport:
    method: Method
    reachable: frozenset[int]
    change: dict[int, float]
    max_change_reachable: float
    max_change_unreachable: float


def link_deletion_locality(
    g: LinkGraph,
    edge: tuple[int, int],
    gamma: float = 0.85,
    *,
    policy: PolicyFn = uniform_policy,
    rewards: RewardsFn = _default_rewards,
    method: Method = "rr",
    tol: float = REFERENCE_TOL,
    solver: Solver = "iterative",
) -> LocalityReport:
    """Per-node score change after deleting one link.

    Only nodes forward-reachable from the link's source may change under
    reinforcement ranking: the source's policy row is renormalized, so its
    other successors move too.
    """
    a, b = int(edge[0]), int(edge[1])
    if not g.has_edge(a, b):
        raise GraphError(f"edge {a}->{b} not in graph")
    g2 = apply_delta(g, GraphDelta.make(removed_edges=[(a, b)]))
    s1 = _scores(method, g, policy(g), rewards(g), gamma, tol, solver)
    s2 = _scores(method, g2, policy(g2), rewards(g2), gamma, tol, solver)
    mask = forward_reachable(g, [g.index_of(a)])
    reach = frozenset(g.ids[mask].tolist())
    change = {x: abs(s1[x] - s2[x]) for x in g.ids.tolist()}
    inside = [change[x] for x in reach]
    outside = [v for x, v in change.items() if x not in reach]
    return LocalityReport(method, reach, change,
                          max(inside, default=0.0), max(outside, default=0.0))
