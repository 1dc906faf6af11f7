"""Independent brute-force oracles used to pin expected values in the tests.

These deliberately avoid the library's solver paths.  Transportation optima
come from exhaustive enumeration of the transportation polytope's basic
solutions: every vertex is the flow on some spanning tree of the complete
bipartite supply/demand graph with all edge flows nonnegative, and the
minimum over those trees is found by dynamic programming over node subsets
(each rooted subtree determines the flow on its attachment edge from its
mass imbalance alone).  Small inequality-form LPs are solved by enumerating
basic solutions directly.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

_FLOW_TOL = 1e-12


@lru_cache(maxsize=32)
def _submask_table(n_bits: int) -> dict[int, np.ndarray]:
    """All submasks of every mask on n_bits bits, for the tree DP merges."""
    table = {}
    for mask in range(1 << n_bits):
        subs = []
        s = mask
        while True:
            subs.append(s)
            if s == 0:
                break
            s = (s - 1) & mask
        table[mask] = np.array(subs, dtype=np.int64)
    return table


def bruteforce_transport_cost(a, b, cost) -> float:
    """Exact transportation optimum by exhausting flow-feasible spanning trees.

    Nodes 0..n-1 are supplies, n..n+m-1 demands.  dp[mask, r] is the cheapest
    tree spanning exactly `mask`, rooted at r, whose internal flows (running
    from supplies to demands) are all nonnegative; attaching a rooted subtree
    to a new parent prices the connecting edge by the subtree's imbalance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n, m = len(a), len(b)
    N = n + m
    balance = np.concatenate([a, -b])
    full = (1 << N) - 1

    imb = np.zeros(1 << N)
    for v in range(N):
        bit = 1 << v
        half = imb[:bit]
        imb[bit : 2 * bit] = half + balance[v]

    edge_cost = np.full((N, N), np.inf)
    edge_cost[:n, n:] = cost
    edge_cost[n:, :n] = cost.T

    subs_of = _submask_table(N)
    dp = np.full((1 << N, N), np.inf)
    for v in range(N):
        dp[1 << v, v] = 0.0

    masks = sorted(range(1, full + 1), key=int.bit_count)
    for mask in masks:
        if mask.bit_count() < 2:
            continue
        members = [v for v in range(N) if mask >> v & 1]
        for r in members:
            rest = mask ^ (1 << r)
            bit_r = 1 << r
            best = np.inf
            # extend: r is a leaf attached to the root c of the rest
            sub_imb = imb[rest]
            for c in members:
                if c == r or not np.isfinite(edge_cost[r, c]):
                    continue
                # flow over (r, c): from the supply side into the demand side
                flow = sub_imb if c < n else -sub_imb
                if flow < -_FLOW_TOL:
                    continue
                cand = dp[rest, c] + edge_cost[r, c] * max(flow, 0.0)
                if cand < best:
                    best = cand
            # merge: two r-rooted trees on complementary parts of the rest
            subs = subs_of[rest]
            if len(subs) > 2:
                inner = subs[1:-1]  # skip empty and full rest
                cand = dp[inner | bit_r, r] + dp[(rest ^ inner) | bit_r, r]
                cmin = cand.min()
                if cmin < best:
                    best = cmin
            dp[mask, r] = best
    return float(dp[full].min())


def bruteforce_ot_cost(mu_pts, mu_w, nu_pts, nu_w, p) -> float:
    d = np.linalg.norm(np.asarray(mu_pts)[:, None, :] - np.asarray(nu_pts)[None, :, :], axis=2)
    return bruteforce_transport_cost(np.asarray(mu_w), np.asarray(nu_w), d**p)


def enumerate_support_vertices_cost(a, b, cost) -> float:
    """Vertex enumeration over explicit supports; slow, for tiny cases only.

    Checks every (n + m - 1)-cell support that forms a spanning tree, solves
    the unique flow by leaf peeling, and keeps feasible solutions.  Used to
    validate the subset DP above on small instances.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n, m = len(a), len(b)
    best = np.inf
    cells = list(itertools.product(range(n), range(m)))
    for sub in itertools.combinations(cells, n + m - 1):
        adj = {v: set() for v in range(n + m)}
        for i, j in sub:
            adj[i].add(n + j)
            adj[n + j].add(i)
        # connectivity check
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != n + m:
            continue
        ra = a.copy()
        rb = b.copy()
        deg = {v: len(adj[v]) for v in range(n + m)}
        flows = {}
        ok = True
        leaves = [v for v in range(n + m) if deg[v] == 1]
        while leaves:
            v = leaves.pop()
            if deg[v] == 0:
                continue
            u = next(iter(adj[v]))
            amt = ra[v] if v < n else rb[v - n]
            if amt < -1e-10:
                ok = False
                break
            i, j = (v, u - n) if v < n else (u, v - n)
            flows[(i, j)] = flows.get((i, j), 0.0) + max(amt, 0.0)
            ra[i] -= amt if v < n else 0.0
            rb[j] -= amt if v >= n else 0.0
            if v < n:
                rb[u - n] -= amt
            else:
                ra[u] -= amt
            adj[u].discard(v)
            adj[v].discard(u)
            deg[u] -= 1
            deg[v] -= 1
            if deg[u] == 1:
                leaves.append(u)
        if not ok:
            continue
        if any(f < -1e-10 for f in flows.values()):
            continue
        total = sum(f * cost[i, j] for (i, j), f in flows.items())
        best = min(best, total)
    return best


def bruteforce_lower_bounded_cost(mu_w, lower, cost) -> float:
    """Exact optimum of min <c, x>: x >= 0, row sums = a, col sums >= l.

    Enumerates basic solutions of the standard-form system with column slack
    variables.  Only intended for very small instances.
    """
    a = np.asarray(mu_w, dtype=float)
    l = np.asarray(lower, dtype=float)
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    nv = n * m + m  # x variables plus one slack per column
    nr = n + m
    A = np.zeros((nr, nv))
    for i in range(n):
        A[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j : n * m : m] = 1.0
        A[n + j, n * m + j] = -1.0
    rhs = np.concatenate([a, l])
    cvec = np.concatenate([cost.ravel(), np.zeros(m)])

    best = np.inf
    for cols in itertools.combinations(range(nv), nr):
        sub = A[:, cols]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, rhs)
        if np.any(x < -1e-10):
            continue
        full = np.zeros(nv)
        full[list(cols)] = x
        best = min(best, float(cvec @ full))
    return best


def bruteforce_segment_transport(atom_xs, atom_ws, node_xs, node_ms, p) -> float:
    """1-D transport cost oracle: monotone coupling of sorted marginals."""
    order_a = np.argsort(atom_xs)
    order_n = np.argsort(node_xs)
    xs = np.asarray(atom_xs, dtype=float)[order_a]
    ws = np.asarray(atom_ws, dtype=float)[order_a].copy()
    ys = np.asarray(node_xs, dtype=float)[order_n]
    ms = np.asarray(node_ms, dtype=float)[order_n].copy()
    i = j = 0
    total = 0.0
    while i < len(xs) and j < len(ys):
        amt = min(ws[i], ms[j])
        total += amt * abs(xs[i] - ys[j]) ** p
        ws[i] -= amt
        ms[j] -= amt
        if ws[i] <= 1e-15:
            i += 1
        if j < len(ys) and ms[j] <= 1e-15:
            j += 1
    return total
