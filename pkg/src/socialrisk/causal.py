"""Constraint-based causal structure discovery over cohort features.

The skeleton search is the order-stable variant: conditional-independence
tests at each conditioning-set size run against a frozen snapshot of the
adjacency, and deletions apply only when the level finishes, so the result
does not depend on the order columns arrive in. Independence is judged by
the Fisher z transform of the partial correlation, with the conditioning
done by least-squares residualization.

An optional node-wise L1 prefilter (linear lasso for continuous targets,
penalized logistic for binary ones, neighborhoods joined by the OR rule)
restricts the candidate edge set before any CI test runs. Pairs the
prefilter removed carry no separating set; unshielded triples over such
pairs are left unoriented rather than guessed at.

Collider orientation uses the recorded separating sets; edges pushed both
ways by different triples stay undirected. Orientation then propagates to
a completed partially directed graph via four sound rules and the directed
part is asserted acyclic.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from socialrisk.errors import SocialriskError
from socialrisk.models.linear import ZERO_SNAP, fit_penalized_logistic
from socialrisk.util import check_finite_matrix

PARTIAL_CORR_CLIP = 0.99999


@dataclass
class CITestConfig:
    alpha: float = 0.05
    kind: str = "fisher_z"
    max_cond: int | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if self.kind != "fisher_z":
            raise ValueError(f"unknown CI test kind: {self.kind!r}")


@dataclass
class CITestResult:
    independent: bool
    p_value: float


def fisher_z_test(data, i, j, cond, n_rows=None):
    """Two-sided p-value for partial correlation of columns i, j given cond.

    Residualizes both columns on an intercept plus the conditioning columns,
    correlates the residuals, and applies the z transform with effective
    sample size n - |cond| - 3.
    """
    n = data.shape[0] if n_rows is None else n_rows
    dof_scale = n - len(cond) - 3
    if dof_scale <= 0:
        raise SocialriskError(
            f"{n} rows cannot support a conditioning set of {len(cond)}"
        )
    a = data[:, i]
    b = data[:, j]
    if cond:
        design = np.column_stack([np.ones(data.shape[0]), data[:, list(cond)]])
        a = a - design @ np.linalg.lstsq(design, a, rcond=None)[0]
        b = b - design @ np.linalg.lstsq(design, b, rcond=None)[0]
    else:
        a = a - a.mean()
        b = b - b.mean()
    denom = np.sqrt((a @ a) * (b @ b))
    r = 0.0 if denom == 0 else float(np.clip(a @ b / denom, -PARTIAL_CORR_CLIP, PARTIAL_CORR_CLIP))
    stat = np.arctanh(r) * np.sqrt(dof_scale)
    return 2.0 * float(norm.sf(abs(stat)))


def ci_test(data, i, j, cond, config: CITestConfig):
    """Independence decision for columns i, j given `cond`.

    Independent exactly when the Fisher-z p-value reaches the configured
    level (p >= alpha). A rank-deficient conditioning block is an error
    rather than a silent pseudo-inverse fit.
    """
    cond = list(cond)
    if config.max_cond is not None and len(cond) > config.max_cond:
        raise SocialriskError(
            f"conditioning set of {len(cond)} exceeds the cap {config.max_cond}"
        )
    if cond:
        design = np.column_stack([np.ones(data.shape[0]), data[:, cond]])
        if np.linalg.matrix_rank(design) < design.shape[1]:
            raise SocialriskError(
                "conditioning columns are collinear; covariance is singular"
            )
    p = fisher_z_test(data, i, j, cond)
    return CITestResult(independent=p >= config.alpha, p_value=p)


def lasso_linear(x, y, l1, max_sweeps=1000, tol=1e-9):
    """Coordinate descent for squared loss with an L1 penalty.

    Objective: (1/2n) ||y - b - Xw||^2 + l1 ||w||_1. Coordinate steps are
    exact for quadratic loss, so no line search is needed. Returns (w, b).
    """
    x = check_finite_matrix(x, "design")
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    w = np.zeros(p)
    b = float(y.mean())
    col_scale = (x * x).sum(axis=0) / n
    resid = y - b
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            if col_scale[j] <= 0:
                continue
            rho = (x[:, j] @ resid) / n + col_scale[j] * w[j]
            new = np.sign(rho) * max(abs(rho) - l1, 0.0) / col_scale[j]
            if new != w[j]:
                resid -= (new - w[j]) * x[:, j]
                max_delta = max(max_delta, abs(new - w[j]))
                w[j] = new
        shift = resid.mean()
        if shift != 0.0:
            b += shift
            resid -= shift
            max_delta = max(max_delta, abs(shift))
        if max_delta < tol:
            break
    w[np.abs(w) < ZERO_SNAP] = 0.0
    return w, b


def _is_binary(col):
    vals = np.unique(col)
    return vals.size <= 2 and np.isin(vals, (0.0, 1.0)).all()


def mgm_prefilter(data, names, penalty=0.1):
    """Candidate edges from node-wise sparse regressions, joined by OR.

    Continuous columns are z-scored (targets included) so one penalty value
    is comparable across nodes; binary columns stay on their 0/1 scale and
    get a penalized logistic fit instead. Returns a set of frozenset pairs.
    """
    data = check_finite_matrix(data, "prefilter data")
    k = data.shape[1]
    if len(names) != k:
        raise ValueError("names length does not match column count")
    if data.shape[0] <= 10 * k:
        warnings.warn(
            f"{data.shape[0]} rows for {k} nodes; more than 10 rows per node "
            "is recommended for the prefilter",
            RuntimeWarning,
            stacklevel=2,
        )
    std = data.copy()
    binary = np.array([_is_binary(data[:, j]) for j in range(k)])
    for j in range(k):
        if np.unique(data[:, j]).size < 2:
            raise ValueError(f"prefilter column {names[j]!r} is constant")
        if not binary[j]:
            std[:, j] = (std[:, j] - std[:, j].mean()) / std[:, j].std()
    edges = set()
    for target in range(k):
        others = [j for j in range(k) if j != target]
        design = std[:, others]
        if binary[target]:
            fit = fit_penalized_logistic(design, data[:, target], l1=penalty)
            weights = fit.weights
        else:
            weights, _ = lasso_linear(design, std[:, target], l1=penalty)
        for pos, j in enumerate(others):
            if weights[pos] != 0.0:
                edges.add(frozenset((names[target], names[j])))
    return edges


@dataclass
class CausalGraph:
    """Partially directed graph: directed pairs plus undirected frozensets."""

    nodes: list[str]
    directed: set = field(default_factory=set)
    undirected: set = field(default_factory=set)

    def adjacent(self, a, b):
        return (
            (a, b) in self.directed
            or (b, a) in self.directed
            or frozenset((a, b)) in self.undirected
        )

    def neighbors(self, node):
        out = set()
        for a, b in self.directed:
            if a == node:
                out.add(b)
            elif b == node:
                out.add(a)
        for e in self.undirected:
            if node in e:
                out |= e - {node}
        return out

    def edge_lines(self):
        lines = [f"{a} -> {b}" for a, b in self.directed]
        lines += [f"{a} -- {b}" for a, b in (sorted(e) for e in self.undirected)]
        return sorted(lines)

    def assert_acyclic(self):
        indeg = {v: 0 for v in self.nodes}
        heads = {v: [] for v in self.nodes}
        for a, b in self.directed:
            indeg[b] += 1
            heads[a].append(b)
        queue = sorted(v for v in self.nodes if indeg[v] == 0)
        seen = 0
        while queue:
            v = queue.pop()
            seen += 1
            for h in heads[v]:
                indeg[h] -= 1
                if indeg[h] == 0:
                    queue.append(h)
        if seen != len(self.nodes):
            raise AssertionError("directed part of the output graph has a cycle")


def pc_skeleton(data, names, alpha=0.05, candidate_edges=None, max_cond=None):
    """Order-stable skeleton search.

    Returns (adjacency dict, sepsets keyed by sorted name pair, test count).
    `candidate_edges` restricts the starting complete graph; pairs outside
    it are absent from the sepset record.
    """
    data = check_finite_matrix(data, "skeleton data")
    if len(set(names)) != len(names):
        raise ValueError("node names must be unique")
    config = CITestConfig(alpha=alpha, max_cond=max_cond)
    order = sorted(names)
    col = {name: names.index(name) for name in names}
    adj = {a: set() for a in order}
    for a, b in itertools.combinations(order, 2):
        if candidate_edges is None or frozenset((a, b)) in candidate_edges:
            adj[a].add(b)
            adj[b].add(a)
    sepsets = {}
    n_tests = 0
    level = 0
    while True:
        snapshot = {a: sorted(adj[a]) for a in order}
        eligible = False
        to_drop = set()
        for a in order:
            for b in snapshot[a]:
                pair = frozenset((a, b))
                if pair in to_drop:
                    continue
                pool = [v for v in snapshot[a] if v != b]
                if len(pool) < level:
                    continue
                eligible = True
                for subset in itertools.combinations(pool, level):
                    n_tests += 1
                    res = ci_test(data, col[a], col[b], [col[s] for s in subset], config)
                    if res.independent:
                        to_drop.add(pair)
                        sepsets[tuple(sorted((a, b)))] = subset
                        break
        for pair in to_drop:
            a, b = tuple(pair)
            adj[a].discard(b)
            adj[b].discard(a)
        level += 1
        if not eligible or (max_cond is not None and level > max_cond):
            break
    return adj, sepsets, n_tests


def orient_v_structures(adjacency, sepsets):
    """Collider orientation from separating sets.

    For each unshielded triple a - c - b, orients both edges into c when c
    is absent from the recorded separating set of (a, b). Pairs with no
    recorded set (removed before testing) propose nothing. An edge proposed
    in both directions is left undirected.
    """
    proposals = set()
    for c in sorted(adjacency):
        for a, b in itertools.combinations(sorted(adjacency[c]), 2):
            if b in adjacency[a]:
                continue
            key = tuple(sorted((a, b)))
            if key not in sepsets:
                continue
            if c not in sepsets[key]:
                proposals.add((a, c))
                proposals.add((b, c))
    directed = set()
    undirected = {
        frozenset((a, b)) for a in adjacency for b in adjacency[a]
    }
    for a, b in proposals:
        if (b, a) in proposals:
            continue  # contradictory triples cancel out
        directed.add((a, b))
        undirected.discard(frozenset((a, b)))
    return directed, undirected


def meek_closure(nodes, directed, undirected):
    """Propagate orientations to a completed partially directed graph.

    Four sound rules run to a fixpoint; each orients only currently
    undirected edges, so earlier decisions are never overwritten.
    """
    directed = set(directed)
    undirected = set(undirected)

    def adjacent(a, b):
        return (
            (a, b) in directed or (b, a) in directed or frozenset((a, b)) in undirected
        )

    def und_neighbors(v):
        return sorted(x for e in undirected if v in e for x in e - {v})

    def orient(a, b):
        e = frozenset((a, b))
        if e in undirected:
            undirected.discard(e)
            directed.add((a, b))
            return True
        return False

    changed = True
    while changed:
        changed = False
        # Rule: a -> b, b -- c, a and c non-adjacent  =>  b -> c
        for a, b in sorted(directed):
            for c in und_neighbors(b):
                if c != a and not adjacent(a, c):
                    changed |= orient(b, c)
        # Rule: a -> b -> c with a -- c  =>  a -> c
        for a, b in sorted(directed):
            for b2, c in sorted(directed):
                if b2 == b and c != a and frozenset((a, c)) in undirected:
                    changed |= orient(a, c)
        # Rule: a -- b, a -- c, a -- d, c -> b, d -> b, c and d non-adjacent  =>  a -> b
        for a in sorted(nodes):
            nbrs = und_neighbors(a)
            for b in nbrs:
                into_b = [
                    c for c in nbrs if c != b and (c, b) in directed
                ]
                for c, d in itertools.combinations(into_b, 2):
                    if not adjacent(c, d):
                        changed |= orient(a, b)
                        break
        # Rule: x -- y, x adjacent z, z -> w, w -> y, z and y non-adjacent  =>  x -> y
        # Sound because y -> x either closes a cycle through z -> w -> y or
        # creates an unshielded collider z -> x <- y absent from the class.
        for z, w in sorted(directed):
            for w2, y in sorted(directed):
                if w2 != w or y == z:
                    continue
                for x in und_neighbors(y):
                    if x != z and x != w and adjacent(x, z) and not adjacent(z, y):
                        changed |= orient(x, y)
    return directed, undirected


@dataclass
class PCResult:
    graph: CausalGraph
    sepsets: dict
    n_ci_tests: int


def pc_stable(data, names, alpha=0.05, candidate_edges=None, max_cond=None,
              sink_node=None):
    """Full constraint-based discovery: skeleton, colliders, closure.

    `sink_node` forbids edges out of that node (normally the outcome):
    collider proposals with it as tail are dropped and its remaining
    undirected edges are pointed into it before the closure runs.
    """
    adj, sepsets, n_tests = pc_skeleton(
        data, names, alpha=alpha, candidate_edges=candidate_edges, max_cond=max_cond
    )
    directed, undirected = orient_v_structures(adj, sepsets)
    if sink_node is not None:
        if sink_node not in names:
            raise ValueError(f"sink node {sink_node!r} is not among the nodes")
        for a, b in [e for e in directed if e[0] == sink_node]:
            directed.discard((a, b))
            undirected.add(frozenset((a, b)))
        for e in [e for e in undirected if sink_node in e]:
            undirected.discard(e)
            directed.add((next(iter(e - {sink_node})), sink_node))
    directed, undirected = meek_closure(sorted(names), directed, undirected)
    graph = CausalGraph(nodes=sorted(names), directed=directed, undirected=undirected)
    graph.assert_acyclic()
    return PCResult(graph=graph, sepsets=sepsets, n_ci_tests=n_tests)


def _top_features(ranking, top_k, source_of, label):
    ranking = list(ranking)
    if top_k > len(ranking):
        warnings.warn(
            f"top_k={top_k} exceeds the {len(ranking)} ranked columns in "
            f"{label}; using all of them",
            RuntimeWarning,
            stacklevel=3,
        )
    mapped = []
    for name in ranking[:top_k]:
        feat = source_of.get(name, name) if source_of else name
        if feat not in mapped:
            mapped.append(feat)
    return mapped


def select_causal_features(ranking_a, ranking_b, top_k=15, source_of=None):
    """Union of the two top-k lists, collapsed to source features.

    `source_of` maps encoded column names back to the feature they encode;
    dummy siblings collapse to one entry at the best rank any of them held.
    The union is ordered by best rank, ties on the rank sum, then the name.
    """
    top_a = _top_features(ranking_a, top_k, source_of, "the first ranking")
    top_b = _top_features(ranking_b, top_k, source_of, "the second ranking")
    unranked = 10**9
    pos_a = {name: i for i, name in enumerate(top_a)}
    pos_b = {name: i for i, name in enumerate(top_b)}
    union = sorted(set(top_a) | set(top_b))
    union.sort(
        key=lambda name: (
            min(pos_a.get(name, unranked), pos_b.get(name, unranked)),
            pos_a.get(name, unranked) + pos_b.get(name, unranked),
            name,
        )
    )
    return union
