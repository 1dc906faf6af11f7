"""The two objectives: uniform network energy and the relaxed energy.

The uniform energy transports the source onto the arc-length-uniform measure
of a fixed network and adds the length penalty.  The relaxed variant solves
exactly, on a fixed network, for the best measure dominating a uniform
density floor: an outer search over the density factor wraps lower-bounded
transport LPs, with candidate atom sites injected at the projections of the
source atoms so optimal solutions can park excess mass there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from wh1.geometry import Network, is_connected, network_length, project_to_network
from wh1.measures import NetworkMeasure, SourceMeasure, length_functional, source_to_atoms
from wh1.transport import (
    Atoms,
    QuadratureNodes,
    TransportPlan,
    discretize_network,
    solve_ot,
    solve_ot_lower_bounded,
)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class EnergyConfig:
    """Parameters shared by every energy evaluation.

    lam: length penalty weight (positive; small values favor long networks).
    p: transport exponent, at least 1.
    h: quadrature spacing along network edges.
    quad: subdivision factor when atomizing grid densities.
    alpha_grid: sample count of the outer density-factor search.
    alpha_range: the search spans [length, alpha_range * length].
    seed: recorded with every artifact; consumed by seeded drivers.
    excess_tol: node mass above its uniform floor beyond this counts as excess.
    """

    lam: float
    p: float = 2.0
    h: float = 0.05
    quad: int = 1
    alpha_grid: int = 24
    alpha_range: float = 20.0
    seed: int = 0
    excess_tol: float = 1e-6
    alpha_tol: float = 1e-10

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("length penalty must be positive")
        if self.p < 1:
            raise ValueError("transport exponent must be at least 1")
        if self.h <= 0 or self.quad < 1 or self.alpha_grid < 2 or self.alpha_range <= 1:
            raise ValueError("invalid discretization parameters")
        if self.alpha_tol <= 0:
            raise ValueError("alpha tolerance must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RelaxedSolution:
    """Result of the inner solve on a fixed network.

    `targets` lists every candidate site (quadrature nodes first, then the
    injected projection sites), `shares` their arc-length share (zero for
    projection sites), `masses` the optimal mass per site.  `excess_nodes`
    pairs each site holding mass above its uniform floor with the surplus.
    """

    nu: NetworkMeasure
    alpha_star: float
    wasserstein_p_cost: float
    energy: float
    excess_nodes: tuple[tuple[np.ndarray, float], ...]
    targets: np.ndarray
    shares: np.ndarray
    masses: np.ndarray
    plan: TransportPlan
    config: EnergyConfig

    @property
    def total_excess(self) -> float:
        return float(sum(e for _, e in self.excess_nodes))


def _degenerate_target(net: Network) -> Atoms:
    if net.n_vertices != 1:
        raise ValueError("infeasible: disconnected")
    return Atoms(net.vertices, [1.0])


def uniform_transport(net: Network, rho0: SourceMeasure, cfg: EnergyConfig):
    """Optimal plan from the source onto the uniform measure of the network.

    Returns (plan, nodes, length).  A single-vertex network is the degenerate
    point target; nodes is None in that case.
    """
    if not is_connected(net):
        raise ValueError("infeasible: disconnected")
    src = source_to_atoms(rho0, cfg.quad)
    if net.n_edges == 0:
        plan = solve_ot(src, _degenerate_target(net), cfg.p)
        return plan, None, 0.0
    nodes = discretize_network(net, cfg.h)
    length = float(nodes.shares.sum())
    target = Atoms(nodes.points, nodes.shares / length)
    plan = solve_ot(src, target, cfg.p)
    return plan, nodes, length


def energy_uniform(net: Network, rho0: SourceMeasure, cfg: EnergyConfig) -> float:
    """Transport cost onto the uniform measure plus the length penalty."""
    plan, _, length = uniform_transport(net, rho0, cfg)
    return plan.cost + cfg.lam * length


def relaxed_energy(nu: NetworkMeasure, rho0: SourceMeasure, cfg: EnergyConfig) -> float:
    """Transport cost onto an arbitrary network measure plus lam * L(nu)."""
    if abs(nu.total_mass - 1.0) > 1e-9:
        raise ValueError("network measure must have unit mass")
    alpha = length_functional(nu)
    if math.isinf(alpha):
        return math.inf
    src = source_to_atoms(rho0, cfg.quad)
    plan = solve_ot(src, nu.as_atoms(cfg.h), cfg.p)
    return plan.cost + cfg.lam * alpha


def _build_targets(net: Network, rho0: SourceMeasure, cfg: EnergyConfig):
    """Quadrature nodes plus source-atom projection sites.

    Nodes live on the unmodified network so a source matching its uniform
    quadrature stays representable at zero cost.  Projection feet become
    extra zero-share sites (deduplicated against nodes) so optimal solutions
    can park excess mass exactly at them.
    """
    from wh1.geometry import _project_to_segment

    nodes = discretize_network(net, cfg.h)
    feet = []  # (point, owning edge, param) or (point, -1, vertex index)
    for pt in rho0.atoms.points:
        foot, _, k = project_to_network(pt, net)
        if len(nodes) and np.linalg.norm(nodes.points - foot, axis=1).min() <= 1e-12:
            continue
        if any(np.linalg.norm(foot - f[0]) <= 1e-12 for f in feet):
            continue
        vhit = np.nonzero(np.linalg.norm(net.vertices - foot, axis=1) <= 1e-12)[0]
        if len(vhit):
            feet.append((foot, -1, int(vhit[0])))
        else:
            a, b = net.edge_endpoints(k)
            t, _, _ = _project_to_segment(foot, a, b)
            feet.append((foot, k, float(t)))
    points = nodes.points
    shares = nodes.shares
    if feet:
        points = np.vstack([points, np.array([f[0] for f in feet])])
        shares = np.concatenate([shares, np.zeros(len(feet))])
    return nodes, points, shares, feet


def _measure_from_masses(
    net: Network,
    nodes: QuadratureNodes,
    masses: np.ndarray,
    feet: list,
) -> NetworkMeasure:
    """Network measure resolving every quadrature cell as its own edge.

    Each node's mass spreads uniformly over its cell, so the measure's length
    functional equals max_j share_j / mass_j, the factor the node-level
    program actually enforced.  Projection feet become vertices carrying
    their site's mass as an atom.
    """
    verts = [v.copy() for v in net.vertices]
    vertex_atoms = [0.0] * len(verts)
    edges = []
    edge_masses = []

    feet_by_edge: dict[int, list[tuple[float, int]]] = {}
    for slot, (pt, k, where) in enumerate(feet):
        if k == -1:
            vertex_atoms[int(where)] += masses[len(nodes) + slot]
        else:
            feet_by_edge.setdefault(k, []).append((float(where), slot))

    for k in range(net.n_edges):
        i, j = net.edges[k]
        a, b = net.edge_endpoints(k)
        node_ids = [q for q in range(len(nodes)) if nodes.edge_index[q] == k]
        node_ids.sort(key=lambda q: nodes.params[q])
        n_k = len(node_ids)
        bounds = [(c / n_k, None) for c in range(n_k + 1)]
        for t, slot in feet_by_edge.get(k, []):
            hit = None
            for tb, _ in bounds:
                if abs(tb - t) <= 1e-12:
                    hit = tb
                    break
            bounds.append((t if hit is None else hit, slot))
        bounds.sort(key=lambda x: x[0])

        # assign a vertex to every distinct boundary parameter
        vid_at: dict[float, int] = {}
        cleaned: list[float] = []
        for t, slot in bounds:
            if cleaned and abs(t - cleaned[-1]) <= 1e-12:
                t = cleaned[-1]
            else:
                cleaned.append(t)
                if t <= 1e-12:
                    vid_at[t] = i
                elif t >= 1.0 - 1e-12:
                    vid_at[t] = j
                else:
                    verts.append(a + t * (b - a))
                    vertex_atoms.append(0.0)
                    vid_at[t] = len(verts) - 1
            if slot is not None:
                vertex_atoms[vid_at[t]] += masses[len(nodes) + slot]

        for p0, p1 in zip(cleaned, cleaned[1:]):
            cell = min(int(0.5 * (p0 + p1) * n_k), n_k - 1)
            edges.append((vid_at[p0], vid_at[p1]))
            edge_masses.append(masses[node_ids[cell]] * (p1 - p0) * n_k)

    refined = Network(np.array(verts), edges)
    return NetworkMeasure(refined, np.array(edge_masses), np.array(vertex_atoms))


def inner_relaxed_solve(net: Network, rho0: SourceMeasure, cfg: EnergyConfig) -> RelaxedSolution:
    """Best measure on the fixed network for the relaxed objective.

    The density factor is sampled on a geometric grid starting at the total
    length (always feasible) and refined by golden-section around the grid
    argmin; each evaluation is a lower-bounded transport LP whose floors are
    the arc-length shares divided by the factor.
    """
    if not is_connected(net):
        raise ValueError("infeasible: disconnected")
    src = source_to_atoms(rho0, cfg.quad)

    if net.n_edges == 0:
        target = _degenerate_target(net)
        plan = solve_ot(src, target, cfg.p)
        nu = NetworkMeasure(net, np.zeros(0), np.ones(1))
        excess = ((net.vertices[0].copy(), 1.0),)
        return RelaxedSolution(
            nu=nu,
            alpha_star=0.0,
            wasserstein_p_cost=plan.cost,
            energy=plan.cost,
            excess_nodes=excess,
            targets=net.vertices.copy(),
            shares=np.zeros(1),
            masses=np.ones(1),
            plan=plan,
            config=cfg,
        )

    nodes, points, shares, feet = _build_targets(net, rho0, cfg)
    length = float(nodes.shares.sum())
    target_atoms = Atoms(points, np.zeros(len(points)))

    cache: dict[float, TransportPlan] = {}

    def transport_at(alpha: float) -> TransportPlan:
        if alpha not in cache:
            cache[alpha] = solve_ot_lower_bounded(src, target_atoms, shares / alpha, cfg.p)
        return cache[alpha]

    def objective(alpha: float) -> float:
        return transport_at(alpha).cost + cfg.lam * alpha

    grid = np.geomspace(length, cfg.alpha_range * length, cfg.alpha_grid)
    values = [objective(a) for a in grid]
    k = int(np.argmin(values))

    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    # golden-section refinement of the composite objective between the
    # neighbors of the grid argmin
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = objective(x1), objective(x2)
    for _ in range(80):
        if hi - lo <= cfg.alpha_tol * (1.0 + length):
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = objective(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = objective(x2)

    candidates = list(grid) + [x1, x2]
    alpha_best = min(candidates, key=objective)
    plan = transport_at(alpha_best)
    masses = plan.column_sums()
    nu = _measure_from_masses(net, nodes, masses, feet)

    alpha_star = length_functional(nu)
    floors = shares / alpha_star
    surplus = masses - floors
    excess = tuple(
        (points[j].copy(), float(surplus[j]))
        for j in range(len(points))
        if surplus[j] > cfg.excess_tol
    )
    energy = plan.cost + cfg.lam * alpha_star
    return RelaxedSolution(
        nu=nu,
        alpha_star=float(alpha_star),
        wasserstein_p_cost=plan.cost,
        energy=float(energy),
        excess_nodes=excess,
        targets=points,
        shares=shares,
        masses=masses,
        plan=plan,
        config=cfg,
    )


def write_relaxed_solution(sol: RelaxedSolution, path) -> None:
    """Structured report: factor, cost, energy, per-site masses, excess table."""
    payload = {
        "format": "wh1relaxed v1",
        "config": sol.config.to_dict(),
        "alpha_star": sol.alpha_star,
        "wasserstein_p_cost": sol.wasserstein_p_cost,
        "energy": sol.energy,
        "nodes": [
            {
                "point": [float(c) for c in sol.targets[j]],
                "share": float(sol.shares[j]),
                "mass": float(sol.masses[j]),
            }
            for j in range(len(sol.targets))
        ],
        "excess": [
            {"point": [float(c) for c in pt], "mass": float(m)}
            for pt, m in sol.excess_nodes
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
