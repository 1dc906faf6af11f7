"""Local search over embedded networks for the length-penalized objective.

Rounds propose a fixed family of moves (vertex relocation toward the plan
barycenter, split-and-nudge refinement, short-edge collapse, loop opening by
a clean ball cut with mass-conserving pendant segments, pendant growth
toward the worst-served source atom).  The single best candidate improving
the energy beyond the acceptance tolerance wins the round; every accepted
move keeps the network connected and the energy trace strictly decreasing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from wh1.energy import EnergyConfig, energy_uniform, uniform_transport
from wh1.geometry import (
    MIN_EDGE_LEN,
    BallCut,
    Network,
    cut_ball,
    find_cycles,
    is_connected,
    network_length,
    project_to_network,
    select_noncut_ball,
    split_network_at_points,
    tangent_estimate,
)
from wh1.measures import SourceMeasure, source_to_atoms
from wh1.transport import QuadratureNodes, TransportPlan


@dataclass(frozen=True)
class MoveSchedule:
    """Move-set thresholds; move order itself is fixed."""

    max_rounds: int = 60
    accept_tol: float = 1e-9
    eta: float = 0.5
    collapse_len: float = 0.05
    mass_floor_factor: float = 10.0
    open_loop_radius_fracs: tuple[float, ...] = (0.4, 0.25, 0.12)
    include_pendant: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        d["open_loop_radius_fracs"] = list(self.open_loop_radius_fracs)
        return d


@dataclass
class MoveLogEntry:
    kind: str
    energy_before: float
    energy_after: float | None
    accepted: bool
    details: dict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "energy_before": self.energy_before,
            "energy_after": self.energy_after,
            "accepted": self.accepted,
            "details": self.details,
        }


@dataclass(frozen=True)
class SectorDecomposition:
    """Directional bucketing of the source mass pulled into a deleted ball."""

    center: np.ndarray
    tangent: np.ndarray
    sectors: tuple[tuple[tuple[float, ...], float, str], ...]  # (direction, mass, class)

    def to_dict(self) -> dict:
        return {
            "center": [float(c) for c in self.center],
            "tangent": [float(c) for c in self.tangent],
            "sectors": [
                {"direction": list(d), "mass": m, "class": k} for d, m, k in self.sectors
            ],
        }


@dataclass
class SolveReport:
    """Full record of one optimization run."""

    seed: int
    config: dict
    schedule: dict
    initial_energy: float
    final_energy: float
    energy_trace: list[float]
    moves: list[MoveLogEntry]
    rounds_run: int
    final_cycle_count: int
    accepted_by_kind: dict[str, int]
    degenerate_point_beats_result: bool
    network: dict
    node_masses: list[float]

    def to_dict(self) -> dict:
        return {
            "format": "wh1solve v1",
            "seed": self.seed,
            "config": self.config,
            "schedule": self.schedule,
            "initial_energy": self.initial_energy,
            "final_energy": self.final_energy,
            "energy_trace": self.energy_trace,
            "moves": [m.to_dict() for m in self.moves],
            "rounds_run": self.rounds_run,
            "final_cycle_count": self.final_cycle_count,
            "accepted_by_kind": self.accepted_by_kind,
            "degenerate_point_beats_result": self.degenerate_point_beats_result,
            "network": self.network,
            "node_masses": self.node_masses,
        }


def network_to_dict(net: Network) -> dict:
    return {
        "dim": net.dim,
        "vertices": [[float(c) for c in v] for v in net.vertices],
        "edges": [[int(i), int(j)] for i, j in net.edges],
    }


def write_solve_report(report: SolveReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sector_directions(dim: int) -> np.ndarray:
    """Fixed direction fans: 8 compass directions in the plane, the 26 cube
    neighbor directions in space."""
    if dim == 2:
        angles = np.arange(8) * (math.pi / 4.0)
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    if dim == 3:
        dirs = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    if dx == dy == dz == 0:
                        continue
                    v = np.array([dx, dy, dz], dtype=float)
                    dirs.append(v / np.linalg.norm(v))
        return np.array(dirs)
    raise ValueError("only dimensions 2 and 3 are supported")


def _replace_vertex(net: Network, vi: int, new_pos: np.ndarray) -> Network | None:
    verts = net.vertices.copy()
    verts[vi] = new_pos
    for i, j in net.edges:
        if (i == vi or j == vi) and np.linalg.norm(verts[i] - verts[j]) < MIN_EDGE_LEN:
            return None
    return Network(verts, net.edges)


def vertex_step(
    net: Network,
    rho0: SourceMeasure,
    cfg: EnergyConfig,
    vi: int,
    eta: float = 0.5,
    plan: TransportPlan | None = None,
    nodes: QuadratureNodes | None = None,
) -> Network | None:
    """Damped pull of one vertex toward the barycenter of the source atoms
    currently feeding its incident edges (the whole network when degenerate)."""
    if not 0 <= vi < net.n_vertices:
        raise ValueError("vertex index out of range")
    if plan is None:
        plan, nodes, _ = uniform_transport(net, rho0, cfg)

    if nodes is None:
        weights = plan.row_sums()
    else:
        incident = {k for k, (i, j) in enumerate(net.edges) if vi in (i, j)}
        on_incident = np.isin(nodes.edge_index, sorted(incident))
        weights = np.zeros(len(plan.source))
        for i, j, m in plan.entries:
            if on_incident[int(j)]:
                weights[int(i)] += m
    total = weights.sum()
    if total <= 0:
        return None
    bary = (weights[:, None] * plan.source.points).sum(axis=0) / total
    new_pos = net.vertices[vi] + eta * (bary - net.vertices[vi])
    return _replace_vertex(net, vi, new_pos)


def split_edge(net: Network, k: int) -> Network:
    """Insert the midpoint of edge k as a new vertex."""
    i, j = net.edges[k]
    a, b = net.edge_endpoints(k)
    verts = np.vstack([net.vertices, 0.5 * (a + b)])
    mid = len(verts) - 1
    edges = [e for q, e in enumerate(net.edges) if q != k] + [(i, mid), (mid, j)]
    return Network(verts, edges)


def collapse_edge(net: Network, k: int, collapse_len: float) -> Network | None:
    """Merge the endpoints of a short edge into their midpoint.

    Incident edges are rewired to the merged vertex; duplicates and
    self-loops are dropped.  Returns None when the edge is too long, the
    rewiring would create a degenerate edge, or the result disconnects.
    """
    i, j = net.edges[k]
    a, b = net.edge_endpoints(k)
    if float(np.linalg.norm(b - a)) >= collapse_len:
        return None
    keep = [q for q in range(net.n_vertices) if q != max(i, j)]
    remap = {old: new for new, old in enumerate(keep)}
    lo, hi = min(i, j), max(i, j)
    verts = net.vertices[keep].copy()
    verts[remap[lo]] = 0.5 * (a + b)
    edges = set()
    for q, (u, v) in enumerate(net.edges):
        if q == k:
            continue
        u = lo if u == hi else u
        v = lo if v == hi else v
        if u == v:
            continue
        edges.add((min(remap[u], remap[v]), max(remap[u], remap[v])))
    if not edges and len(verts) > 1:
        return None
    for u, v in edges:
        if np.linalg.norm(verts[u] - verts[v]) < MIN_EDGE_LEN:
            return None
    cand = Network(verts, sorted(edges))
    if not is_connected(cand):
        return None
    return cand


def _delete_ball(net: Network, cut: BallCut) -> tuple[Network, list[int]]:
    """Remove the part of the network inside the cut ball.

    The two sphere crossing points become new endpoint vertices.  Returns the
    trimmed network and the new indices of the crossing points, in the cut's
    (edge, parameter) order.
    """
    y0, r = cut.center, cut.radius
    outside = np.linalg.norm(net.vertices - y0, axis=1) >= r
    remap: dict[int, int] = {}
    verts: list[np.ndarray] = []
    for v in range(net.n_vertices):
        if outside[v]:
            remap[v] = len(verts)
            verts.append(net.vertices[v].copy())
    cross_idx = []
    cross_by_edge: dict[int, list[tuple[float, int]]] = {}
    for k, t, pt in cut.crossings:
        verts.append(pt.copy())
        ci = len(verts) - 1
        cross_idx.append(ci)
        cross_by_edge.setdefault(k, []).append((t, ci))

    edges: list[tuple[int, int]] = []
    for k, (i, j) in enumerate(net.edges):
        ts = sorted(cross_by_edge.get(k, []))
        if not ts:
            if outside[i] and outside[j]:
                edges.append((remap[i], remap[j]))
            continue
        chain = [(0.0, remap[i] if outside[i] else None)]
        chain += [(t, ci) for t, ci in ts]
        chain.append((1.0, remap[j] if outside[j] else None))
        a, b = net.edge_endpoints(k)
        for (t0, u), (t1, v) in zip(chain, chain[1:]):
            if u is None or v is None:
                continue
            mid = a + 0.5 * (t0 + t1) * (b - a)
            if np.linalg.norm(mid - y0) >= r:
                edges.append((u, v))
    return Network(np.array(verts), edges), cross_idx


def open_loop(
    net: Network,
    rho0: SourceMeasure,
    cfg: EnergyConfig,
    cycle: list[int],
    schedule: MoveSchedule | None = None,
    plan: TransportPlan | None = None,
    nodes: QuadratureNodes | None = None,
) -> tuple[Network, SectorDecomposition, dict] | None:
    """Cut the cycle open inside a clean ball and regrow pendants.

    The mass the current plan sends into the deleted ball is bucketed by the
    pull direction of its source atoms; each heavy-enough bucket turns into a
    straight pendant whose length carries the bucket mass at the uniform
    density, anchored at the first crossing point.  Returns None when no
    clean cut exists at any retry radius.
    """
    schedule = schedule or MoveSchedule()
    if plan is None:
        plan, nodes, _ = uniform_transport(net, rho0, cfg)
    if nodes is None:
        return None
    length = float(nodes.shares.sum())

    cyc_verts = sorted({v for k in cycle for v in net.edges[k]})
    pts = net.vertices[cyc_verts]
    diam = max(float(np.linalg.norm(p - q)) for p in pts for q in pts)
    exclude = [p for p in rho0.atoms.points]

    analysis = None
    for frac in schedule.open_loop_radius_fracs:
        try:
            analysis = select_noncut_ball(net, cycle, frac * diam, exclude=exclude)
            break
        except ValueError:
            continue
    if analysis is None:
        return None
    y0, rbar = analysis.point, analysis.radius
    cut = cut_ball(net, y0, rbar)

    deleted = np.linalg.norm(nodes.points - y0, axis=1) < rbar
    pulled = np.zeros(len(plan.source))
    for i, j, m in plan.entries:
        if deleted[int(j)]:
            pulled[int(i)] += m

    tau = tangent_estimate(net, y0, rbar)
    dirs = sector_directions(net.dim)
    sector_mass = np.zeros(len(dirs))
    for i in range(len(pulled)):
        if pulled[i] <= 0:
            continue
        x = plan.source.points[i]
        foot, dist, _ = project_to_network(x, net)
        if dist <= 1e-12:
            continue  # atom on the network pulls in no direction
        u = (x - foot) / dist
        sector_mass[int(np.argmax(dirs @ u))] += pulled[i]

    mass_floor = schedule.mass_floor_factor * cfg.h / length
    trimmed, cross_idx = _delete_ball(net, cut)
    anchor = cross_idx[0]
    anchor_pos = trimmed.vertices[anchor]

    verts = [v.copy() for v in trimmed.vertices]
    edges = list(trimmed.edges)
    sectors = []
    for s in range(len(dirs)):
        if sector_mass[s] <= 0:
            continue
        klass = "I1" if sector_mass[s] >= mass_floor else "I2"
        pendant_len = length * sector_mass[s]
        if klass == "I1" and pendant_len >= MIN_EDGE_LEN:
            verts.append(anchor_pos + pendant_len * dirs[s])
            edges.append((anchor, len(verts) - 1))
        sectors.append((tuple(float(c) for c in dirs[s]), float(sector_mass[s]), klass))

    candidate = Network(np.array(verts), edges)
    decomposition = SectorDecomposition(center=y0, tangent=tau, sectors=tuple(sectors))
    details = {
        "center": [float(c) for c in y0],
        "radius": float(rbar),
        "deleted_mass": float(pulled.sum()),
        "sectors": decomposition.to_dict()["sectors"],
    }
    return candidate, decomposition, details


def add_pendant(
    net: Network,
    rho0: SourceMeasure,
    cfg: EnergyConfig,
    plan: TransportPlan | None = None,
    nodes: QuadratureNodes | None = None,
) -> tuple[Network, dict] | None:
    """Grow a pendant from the network toward the costliest source atom."""
    if plan is None:
        plan, nodes, _ = uniform_transport(net, rho0, cfg)
    if net.n_edges == 0:
        return None
    length = network_length(net)
    per_atom = np.zeros(len(plan.source))
    for i, j, m in plan.entries:
        d = float(np.linalg.norm(plan.source.points[int(i)] - plan.target.points[int(j)]))
        per_atom[int(i)] += m * d**plan.p
    worst = int(np.argmax(per_atom))
    x = plan.source.points[worst]
    foot, dist, _ = project_to_network(x, net)
    if dist <= max(cfg.h * 0.25, 1e-9):
        return None
    pendant_len = min(length * float(plan.source.weights[worst]), dist)
    if pendant_len < MIN_EDGE_LEN:
        return None
    refined, idx, _ = split_network_at_points(net, [foot], tol=1e-9)
    verts = np.vstack([refined.vertices, foot + (x - foot) / dist * pendant_len])
    edges = list(refined.edges) + [(idx[0], len(verts) - 1)]
    candidate = Network(verts, edges)
    return candidate, {
        "atom": worst,
        "foot": [float(c) for c in foot],
        "length": float(pendant_len),
    }


_KIND_ORDER = {"vertex_step": 0, "split_edge": 1, "collapse_edge": 2, "open_loop": 3, "add_pendant": 4}


def _degenerate_point_energy(rho0: SourceMeasure, cfg: EnergyConfig) -> float:
    """Best single-point network energy over atom sites and the barycenter."""
    src = source_to_atoms(rho0, cfg.quad)
    candidates = [src.points[i] for i in range(min(len(src), 64))]
    candidates.append((src.weights[:, None] * src.points).sum(axis=0) / src.total_mass)
    best = math.inf
    for v in candidates:
        cost = float(np.sum(src.weights * np.linalg.norm(src.points - v, axis=1) ** cfg.p))
        best = min(best, cost)
    return best


def optimize(
    rho0: SourceMeasure,
    init: Network,
    cfg: EnergyConfig,
    schedule: MoveSchedule | None = None,
) -> tuple[Network, SolveReport]:
    """Greedy best-candidate local search; see the module docstring."""
    schedule = schedule or MoveSchedule()
    if not is_connected(init):
        raise ValueError("infeasible: disconnected")

    state = init
    energy = energy_uniform(state, rho0, cfg)
    trace = [float(energy)]
    moves: list[MoveLogEntry] = []
    accepted_by_kind: dict[str, int] = {}
    rounds = 0

    for _ in range(schedule.max_rounds):
        rounds += 1
        plan, nodes, length = uniform_transport(state, rho0, cfg)
        proposals: list[tuple[str, int, Network, dict]] = []

        for vi in range(state.n_vertices):
            cand = vertex_step(state, rho0, cfg, vi, schedule.eta, plan, nodes)
            if cand is not None:
                proposals.append(("vertex_step", vi, cand, {"vertex": vi}))

        if state.n_edges:
            lengths = state.edge_lengths()
            longest = int(np.argmax(lengths))
            cand = split_edge(state, longest)
            # a bare split never changes the energy; nudging the new midpoint
            # makes it a meaningful refinement proposal
            nudged = vertex_step(cand, rho0, cfg, cand.n_vertices - 1, schedule.eta)
            proposals.append(
                ("split_edge", longest, nudged if nudged is not None else cand, {"edge": longest})
            )

            shortest = int(np.argmin(lengths))
            cand = collapse_edge(state, shortest, schedule.collapse_len)
            if cand is not None:
                proposals.append(("collapse_edge", shortest, cand, {"edge": shortest}))

        cycles = find_cycles(state)
        if cycles:
            out = open_loop(state, rho0, cfg, cycles[0], schedule, plan, nodes)
            if out is not None:
                cand, _, details = out
                proposals.append(("open_loop", 0, cand, details))
            else:
                moves.append(
                    MoveLogEntry(
                        kind="open_loop",
                        energy_before=float(energy),
                        energy_after=None,
                        accepted=False,
                        details={"skipped": "no clean cut radius"},
                    )
                )

        if schedule.include_pendant:
            out = add_pendant(state, rho0, cfg, plan, nodes)
            if out is not None:
                cand, details = out
                proposals.append(("add_pendant", 0, cand, details))

        best = None
        for kind, index, cand, details in proposals:
            try:
                cand_energy = energy_uniform(cand, rho0, cfg)
            except ValueError:
                continue
            entry = MoveLogEntry(
                kind=kind,
                energy_before=float(energy),
                energy_after=float(cand_energy),
                accepted=False,
                details=details,
            )
            moves.append(entry)
            drop = energy - cand_energy
            if drop > schedule.accept_tol:
                key = (-drop, _KIND_ORDER[kind], index)
                if best is None or key < best[0]:
                    best = (key, cand, cand_energy, entry)

        if best is None:
            break
        _, state, energy, entry = best
        entry.accepted = True
        accepted_by_kind[entry.kind] = accepted_by_kind.get(entry.kind, 0) + 1
        trace.append(float(energy))
        if not is_connected(state):
            raise AssertionError("accepted move disconnected the network")

    _, final_nodes, _ = uniform_transport(state, rho0, cfg)
    if final_nodes is None:
        node_masses = [1.0]
    else:
        total = final_nodes.shares.sum()
        node_masses = [float(s / total) for s in final_nodes.shares]

    report = SolveReport(
        seed=cfg.seed,
        config=cfg.to_dict(),
        schedule=schedule.to_dict(),
        initial_energy=trace[0],
        final_energy=float(energy),
        energy_trace=trace,
        moves=moves,
        rounds_run=rounds,
        final_cycle_count=len(find_cycles(state)),
        accepted_by_kind=accepted_by_kind,
        degenerate_point_beats_result=_degenerate_point_energy(rho0, cfg) < energy - 1e-12,
        network=network_to_dict(state),
        node_masses=node_masses,
    )
    return state, report
