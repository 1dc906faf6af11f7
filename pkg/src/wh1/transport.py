"""Exact discrete optimal transport and the measure plumbing around it.

Couplings are solved as explicit transportation LPs in double precision
(HiGHS dual simplex), returning vertex solutions whose support has at most
n + m - 1 entries.  The lower-bounded variant keeps source marginals exact
while only bounding target masses from below, leaving surplus placement to
the LP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog
from scipy.spatial.distance import cdist

from wh1.geometry import Network

MASS_TOL = 1e-9


@dataclass(frozen=True)
class Atoms:
    """A finite weighted atom list: points (n, d) with positive weights (n,)."""

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(weights, dtype=float).ravel()
        if len(pts) != len(w):
            raise ValueError("points and weights length mismatch")
        if np.any(w < 0):
            raise ValueError("negative atom weight")
        pts = pts.copy()
        pts.setflags(write=False)
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def translated(self, shift) -> "Atoms":
        return Atoms(self.points + np.asarray(shift, dtype=float), self.weights)


@dataclass(frozen=True)
class TransportPlan:
    """Sparse coupling between two atom lists with cost under |x-y|^p.

    `entries` is an (k, 3) array of (source index, target index, mass).  In
    lower-bounded mode the stored target weights are the lower bounds and the
    realized column sums dominate them.
    """

    source: Atoms
    target: Atoms
    entries: np.ndarray
    p: float
    cost: float
    mode: str = "balanced"

    def row_sums(self) -> np.ndarray:
        out = np.zeros(len(self.source))
        np.add.at(out, self.entries[:, 0].astype(int), self.entries[:, 2])
        return out

    def column_sums(self) -> np.ndarray:
        out = np.zeros(len(self.target))
        np.add.at(out, self.entries[:, 1].astype(int), self.entries[:, 2])
        return out


@dataclass(frozen=True)
class QuadratureNodes:
    """Arc-length quadrature of a network: midpoint nodes with length shares."""

    points: np.ndarray
    shares: np.ndarray
    edge_index: np.ndarray
    params: np.ndarray

    def __len__(self) -> int:
        return len(self.shares)

    def as_atoms(self, masses=None) -> Atoms:
        return Atoms(self.points, self.shares if masses is None else masses)


def cost_matrix(x: np.ndarray, y: np.ndarray, p: float) -> np.ndarray:
    d = cdist(np.atleast_2d(x), np.atleast_2d(y))
    return d if p == 1.0 else d**p


def _marginal_system(n: int, m: int) -> sparse.csr_matrix:
    """Equality matrix of the transportation polytope for row-major x."""
    rows = []
    cols = []
    for i in range(n):
        rows.extend([i] * m)
        cols.extend(range(i * m, (i + 1) * m))
    for j in range(m):
        rows.extend([n + j] * n)
        cols.extend(range(j, n * m, m))
    data = np.ones(2 * n * m)
    return sparse.csr_matrix((data, (rows, cols)), shape=(n + m, n * m))


def _extract_plan(source: Atoms, target: Atoms, x: np.ndarray, p: float, mode: str) -> TransportPlan:
    n, m = len(source), len(target)
    x = x.reshape(n, m)
    ii, jj = np.nonzero(x > 1e-15)
    masses = x[ii, jj]
    c = cost_matrix(source.points, target.points, p)
    cost = float((masses * c[ii, jj]).sum())
    entries = np.column_stack([ii.astype(float), jj.astype(float), masses])
    return TransportPlan(source=source, target=target, entries=entries, p=p, cost=cost, mode=mode)


def solve_ot(mu: Atoms, nu: Atoms, p: float) -> TransportPlan:
    """Optimal coupling of two balanced atom lists under cost |x-y|^p."""
    if abs(mu.total_mass - nu.total_mass) > MASS_TOL:
        raise ValueError("unbalanced marginals")
    if len(mu) == 0 or len(nu) == 0:
        raise ValueError("empty marginal")
    n, m = len(mu), len(nu)
    c = cost_matrix(mu.points, nu.points, p).ravel()
    b_eq = np.concatenate([mu.weights, nu.weights * (mu.total_mass / nu.total_mass)])
    res = linprog(c, A_eq=_marginal_system(n, m), b_eq=b_eq, bounds=(0, None), method="highs-ds")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return _extract_plan(mu, nu, res.x, p, "balanced")


def solve_ot_lower_bounded(mu: Atoms, targets: Atoms, lower, p: float) -> TransportPlan:
    """Cheapest plan with exact source marginals and column sums >= lower.

    The Atoms weights of `targets` are ignored as totals; the plan stores
    `lower` as the target weights.  Surplus mass beyond the bounds lands
    wherever the LP finds it cheapest.
    """
    lower = np.asarray(lower, dtype=float).ravel()
    if len(lower) != len(targets):
        raise ValueError("lower bounds length mismatch")
    if np.any(lower < 0):
        raise ValueError("negative lower bound")
    if lower.sum() > mu.total_mass + MASS_TOL:
        raise ValueError("insufficient mass")
    n, m = len(mu), len(targets)
    c = cost_matrix(mu.points, targets.points, p).ravel()

    rows = []
    cols = []
    for i in range(n):
        rows.extend([i] * m)
        cols.extend(range(i * m, (i + 1) * m))
    a_eq = sparse.csr_matrix((np.ones(n * m), (rows, cols)), shape=(n, n * m))

    rows = []
    cols = []
    for j in range(m):
        rows.extend([j] * n)
        cols.extend(range(j, n * m, m))
    a_ub = sparse.csr_matrix((-np.ones(n * m), (rows, cols)), shape=(m, n * m))

    res = linprog(
        c,
        A_eq=a_eq,
        b_eq=mu.weights,
        A_ub=a_ub,
        b_ub=-lower,
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status != 0:
        raise RuntimeError(f"lower-bounded transport LP failed: {res.message}")
    bounded_targets = Atoms(targets.points, lower)
    return _extract_plan(mu, bounded_targets, res.x, p, "lower_bounded")


def wasserstein_pp(mu: Atoms, nu: Atoms, p: float) -> float:
    """The p-th power of the p-Wasserstein distance between atom lists."""
    return solve_ot(mu, nu, p).cost


def interpolate(plan: TransportPlan, s: float) -> Atoms:
    """Displacement of the plan's mass under (x, y) -> s x + (1 - s) y.

    s = 1 returns the source marginal, s = 0 the target marginal.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("interpolation parameter outside [0, 1]")
    ii = plan.entries[:, 0].astype(int)
    jj = plan.entries[:, 1].astype(int)
    masses = plan.entries[:, 2]
    pts = s * plan.source.points[ii] + (1.0 - s) * plan.target.points[jj]
    merged: dict[bytes, int] = {}
    out_pts = []
    out_w = []
    for k in range(len(masses)):
        key = pts[k].tobytes()
        if key in merged:
            out_w[merged[key]] += masses[k]
        else:
            merged[key] = len(out_pts)
            out_pts.append(pts[k])
            out_w.append(masses[k])
    return Atoms(np.array(out_pts), np.array(out_w))


def blowup_pushforward(atoms: Atoms, y0, r: float) -> Atoms:
    """Rescale atoms around y0 by 1/r in space and in mass."""
    if r <= 0:
        raise ValueError("blow-up radius must be positive")
    y0 = np.asarray(y0, dtype=float)
    return Atoms((atoms.points - y0) / r, atoms.weights / r)


def discretize_network(net: Network, h: float) -> QuadratureNodes:
    """Midpoint quadrature of the network with node spacing at most h.

    Each edge is split into ceil(len / h) equal pieces; every node carries its
    piece's arc length, so the shares sum to the total length.
    """
    if h <= 0:
        raise ValueError("spacing must be positive")
    pts = []
    shares = []
    eidx = []
    params = []
    for k in range(net.n_edges):
        a, b = net.edge_endpoints(k)
        length = float(np.linalg.norm(b - a))
        pieces = max(1, math.ceil(length / h))
        ts = (np.arange(pieces) + 0.5) / pieces
        pts.append(a + ts[:, None] * (b - a))
        shares.append(np.full(pieces, length / pieces))
        eidx.append(np.full(pieces, k, dtype=int))
        params.append(ts)
    if not pts:
        d = net.vertices.shape[1] if net.n_vertices else 2
        return QuadratureNodes(np.zeros((0, d)), np.zeros(0), np.zeros(0, dtype=int), np.zeros(0))
    return QuadratureNodes(
        points=np.vstack(pts),
        shares=np.concatenate(shares),
        edge_index=np.concatenate(eidx),
        params=np.concatenate(params),
    )


def write_plan(plan: TransportPlan, path) -> None:
    """Text export: header with cost and exponent, then `i j mass` triples."""
    lines = [f"wh1plan v1 p={plan.p!r} cost={plan.cost!r} mode={plan.mode}"]
    for i, j, m in plan.entries:
        lines.append(f"{int(i)} {int(j)} {float(m)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
