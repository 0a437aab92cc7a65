"""Independent reference implementations used to check the fast paths.

Everything here is deliberately written the slow, obvious way and shares no
code with the package internals it verifies.
"""

import itertools
import math

import numpy as np


def auroc_pairwise(scores, labels):
    """O(n_pos * n_neg) pair count: concordant + half of ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def logistic_objective(x, y, w, b, l1, l2):
    """Mean log-loss + l1*||w||_1 + (l2/2)*||w||_2^2, no numeric shortcuts."""
    z = x @ w + b
    p = 1.0 / (1.0 + np.exp(-z))
    p = np.clip(p, 1e-12, 1 - 1e-12)
    nll = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    return nll + l1 * np.sum(np.abs(w)) + 0.5 * l2 * np.sum(w * w)


def smooth_objective_gradient_fd(x, y, w, b, l2, eps=1e-6):
    """Central finite differences of the smooth part (log-loss + ridge)."""
    grad_w = np.zeros_like(w)
    for j in range(len(w)):
        wp, wm = w.copy(), w.copy()
        wp[j] += eps
        wm[j] -= eps
        grad_w[j] = (
            logistic_objective(x, y, wp, b, 0.0, l2)
            - logistic_objective(x, y, wm, b, 0.0, l2)
        ) / (2 * eps)
    grad_b = (
        logistic_objective(x, y, w, b + eps, 0.0, l2)
        - logistic_objective(x, y, w, b - eps, 0.0, l2)
    ) / (2 * eps)
    return grad_w, grad_b


def shapley_by_enumeration(value_fn, n_players):
    """Exact Shapley values of an arbitrary coalition game, by definition."""
    players = list(range(n_players))
    phi = np.zeros(n_players)
    for j in players:
        others = [k for k in players if k != j]
        for size in range(n_players):
            weight = (
                math.factorial(size)
                * math.factorial(n_players - size - 1)
                / math.factorial(n_players)
            )
            for subset in itertools.combinations(others, size):
                s = frozenset(subset)
                phi[j] += weight * (value_fn(s | {j}) - value_fn(s))
    return phi


def ks_statistic(a, b):
    """Two-sample Kolmogorov-Smirnov statistic, max ECDF gap."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    grid = np.union1d(a, b)
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def circle_rect_area_quadrature(cx, cy, r, xmin, ymin, xmax, ymax):
    """Circle-rectangle overlap by 1-d quadrature of the clipped chord height."""
    from scipy.integrate import quad

    def height(u):
        half = math.sqrt(max(r * r - (u - cx) ** 2, 0.0))
        return max(0.0, min(ymax, cy + half) - max(ymin, cy - half))

    lo = max(xmin, cx - r)
    hi = min(xmax, cx + r)
    if lo >= hi:
        return 0.0
    value, _ = quad(height, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-13)
    return value


def cpdag_by_orientation_enumeration(n_nodes, skeleton_edges, true_dag_edges):
    """Equivalence-class CPDAG of a DAG, by brute force.

    Enumerates every acyclic orientation of the skeleton, keeps those with
    the same unshielded colliders as the true DAG, and marks an edge directed
    only when every member orients it the same way.

    Returns (directed, undirected): sets of (a, b) tuples / frozensets.
    """
    edges = [tuple(sorted(e)) for e in skeleton_edges]
    adj = {tuple(sorted(e)) for e in edges}

    def colliders(directed):
        out = set()
        parents = {v: set() for v in range(n_nodes)}
        for a, b in directed:
            parents[b].add(a)
        for c in range(n_nodes):
            for a, b in itertools.combinations(sorted(parents[c]), 2):
                if tuple(sorted((a, b))) not in adj:
                    out.add((a, c, b))
        return out

    def acyclic(directed):
        children = {v: [] for v in range(n_nodes)}
        indeg = {v: 0 for v in range(n_nodes)}
        for a, b in directed:
            children[a].append(b)
            indeg[b] += 1
        queue = [v for v in range(n_nodes) if indeg[v] == 0]
        seen = 0
        while queue:
            v = queue.pop()
            seen += 1
            for w in children[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    queue.append(w)
        return seen == n_nodes

    target = colliders({tuple(e) for e in true_dag_edges})
    members = []
    for bits in itertools.product([0, 1], repeat=len(edges)):
        directed = {
            (a, b) if bit == 0 else (b, a) for (a, b), bit in zip(edges, bits)
        }
        if acyclic(directed) and colliders(directed) == target:
            members.append(directed)
    assert members, "true DAG must belong to its own class"

    directed_always = set.intersection(*members) if members else set()
    directed_out = set()
    undirected_out = set()
    for a, b in edges:
        if (a, b) in directed_always:
            directed_out.add((a, b))
        elif (b, a) in directed_always:
            directed_out.add((b, a))
        else:
            undirected_out.add(frozenset((a, b)))
    return directed_out, undirected_out
