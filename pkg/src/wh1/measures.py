"""Source measures, network-supported measures and the length functional.

A source measure is a unit-mass mixture of weighted atoms and a piecewise
constant grid density.  A network measure carries a uniform linear density
per edge plus optional vertex atoms; its length functional is the smallest
factor making the rescaled measure dominate arc length on its support,
infinite when the mass-carrying support is disconnected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

from wh1.geometry import Network, segment_ball_interval
from wh1.transport import Atoms

MASS_TOL = 1e-9


@dataclass(frozen=True)
class GridDensity:
    """Piecewise constant density on a regular grid of cubic cells.

    `values[i, j, ...]` is the density on the cell with lower corner
    origin + (i, j, ...) * cell, so the cell's mass is value * cell**d.
    """

    origin: np.ndarray
    cell: float
    values: np.ndarray

    def __init__(self, origin, cell, values):
        origin = np.asarray(origin, dtype=float)
        values = np.asarray(values, dtype=float)
        if origin.ndim != 1 or origin.shape[0] != values.ndim:
            raise ValueError("origin dimension must match the value array rank")
        if cell <= 0:
            raise ValueError("cell size must be positive")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("density values must be finite and nonnegative")
        origin = origin.copy()
        origin.setflags(write=False)
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "cell", float(cell))
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.cell**self.dim)

    @property
    def sup_density(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Centers and masses of all cells with positive density."""
        idx = np.argwhere(self.values > 0)
        centers = self.origin + (idx + 0.5) * self.cell
        masses = self.values[tuple(idx.T)] * self.cell**self.dim
        return centers, masses


@dataclass(frozen=True)
class SourceMeasure:
    """Unit-mass input measure: weighted atoms, a grid density, or both."""

    atoms: Atoms
    density: GridDensity | None = None

    def __post_init__(self):
        if np.any(self.atoms.weights <= 0) and len(self.atoms) > 0:
            raise ValueError("atom weights must be positive")
        if self.density is not None and len(self.atoms) > 0:
            if self.density.dim != self.atoms.points.shape[1]:
                raise ValueError("atom and density dimensions differ")
        total = self.total_mass
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {total} is not 1")

    @property
    def dim(self) -> int:
        if len(self.atoms) > 0:
            return self.atoms.points.shape[1]
        return self.density.dim

    @property
    def total_mass(self) -> float:
        total = self.atoms.total_mass
        if self.density is not None:
            total += self.density.total_mass
        return total

    @property
    def is_atomic(self) -> bool:
        return self.density is None

    def support_points(self) -> np.ndarray:
        """Atom locations plus positive density cell centers."""
        parts = []
        if len(self.atoms) > 0:
            parts.append(self.atoms.points)
        if self.density is not None:
            centers, _ = self.density.cell_centers()
            if len(centers):
                parts.append(centers)
        return np.vstack(parts)


def atomic_measure(points, weights) -> SourceMeasure:
    return SourceMeasure(Atoms(points, weights))


@dataclass(frozen=True)
class NetworkMeasure:
    """Measure on a network: per-edge total masses plus per-vertex atoms.

    Each edge's mass is spread uniformly along it; vertex atoms sit at the
    vertex coordinates.
    """

    net: Network
    edge_masses: np.ndarray
    vertex_atoms: np.ndarray

    def __init__(self, net, edge_masses, vertex_atoms=None):
        edge_masses = np.asarray(edge_masses, dtype=float).ravel().copy()
        if vertex_atoms is None:
            vertex_atoms = np.zeros(net.n_vertices)
        vertex_atoms = np.asarray(vertex_atoms, dtype=float).ravel().copy()
        if len(edge_masses) != net.n_edges:
            raise ValueError("one mass per edge required")
        if len(vertex_atoms) != net.n_vertices:
            raise ValueError("one atom slot per vertex required")
        if np.any(edge_masses < 0) or np.any(vertex_atoms < 0):
            raise ValueError("masses must be nonnegative")
        edge_masses.setflags(write=False)
        vertex_atoms.setflags(write=False)
        object.__setattr__(self, "net", net)
        object.__setattr__(self, "edge_masses", edge_masses)
        object.__setattr__(self, "vertex_atoms", vertex_atoms)

    @property
    def total_mass(self) -> float:
        return float(self.edge_masses.sum() + self.vertex_atoms.sum())

    def supporting_edges(self) -> np.ndarray:
        return np.nonzero(self.edge_masses > 0)[0]

    def as_atoms(self, h: float) -> Atoms:
        """Atomize: quadrature nodes on mass-carrying edges plus vertex atoms."""
        from wh1.transport import discretize_network

        pts = []
        wts = []
        lengths = self.net.edge_lengths()
        support = self.supporting_edges()
        if len(support):
            sub_edges = [self.net.edges[k] for k in support]
            sub = Network(self.net.vertices, sub_edges)
            nodes = discretize_network(sub, h)
            dens = self.edge_masses[support] / lengths[support]
            node_mass = nodes.shares * dens[nodes.edge_index]
            pts.append(nodes.points)
            wts.append(node_mass)
        atom_idx = np.nonzero(self.vertex_atoms > 0)[0]
        if len(atom_idx):
            pts.append(self.net.vertices[atom_idx])
            wts.append(self.vertex_atoms[atom_idx])
        if not pts:
            raise ValueError("measure carries no mass")
        return Atoms(np.vstack(pts), np.concatenate(wts))


def uniform_network_measure(net: Network, mass: float = 1.0) -> NetworkMeasure:
    """Mass spread over the network proportionally to edge length."""
    lengths = net.edge_lengths()
    total = lengths.sum()
    if total == 0:
        raise ValueError("network has no length to carry a uniform measure")
    return NetworkMeasure(net, lengths * (mass / total))


def length_functional(nu: NetworkMeasure) -> float:
    """Smallest factor alpha with alpha * nu dominating arc length on supp nu.

    Infinite when the mass-carrying support is disconnected; vertex atoms
    never constrain the factor (points carry no length); a support that is a
    single point has factor 0.
    """
    support = nu.supporting_edges()
    atom_idx = np.nonzero(nu.vertex_atoms > 0)[0]

    if len(support) == 0:
        # purely atomic on the network's vertices
        if len(atom_idx) <= 1:
            return 0.0
        return math.inf

    g = nx.Graph()
    for k in support:
        i, j = nu.net.edges[k]
        g.add_edge(i, j)
    for v in atom_idx:
        g.add_node(v)
    if not nx.is_connected(g):
        return math.inf

    lengths = nu.net.edge_lengths()
    return float(np.max(lengths[support] / nu.edge_masses[support]))


def theta1_density(nu: NetworkMeasure, y0, radii) -> list[float]:
    """Ball-mass ratios nu(B_r(y0)) / (2 r), from closed-form ball clipping.

    The mass an edge contributes is its parameter fraction inside the ball
    (the linear density is uniform per edge); vertex atoms inside count whole.
    """
    y0 = np.asarray(y0, dtype=float)
    out = []
    for r in radii:
        if r <= 0:
            raise ValueError("radii must be positive")
        mass = 0.0
        for k in range(nu.net.n_edges):
            if nu.edge_masses[k] == 0:
                continue
            a, b = nu.net.edge_endpoints(k)
            iv = segment_ball_interval(a, b, y0, r)
            if iv is not None:
                mass += nu.edge_masses[k] * (iv[1] - iv[0])
        inside = np.linalg.norm(nu.net.vertices - y0, axis=1) <= r
        mass += float(nu.vertex_atoms[inside].sum())
        out.append(mass / (2.0 * r))
    return out


def source_to_atoms(rho0: SourceMeasure, quad: int = 1) -> Atoms:
    """Finite atom list for transport: atoms pass through, density cells are
    split into quad**d subcells with their mass at the subcell centers."""
    if quad < 1:
        raise ValueError("subdivision factor must be at least 1")
    pts = []
    wts = []
    if len(rho0.atoms) > 0:
        pts.append(rho0.atoms.points)
        wts.append(rho0.atoms.weights)
    if rho0.density is not None:
        dens = rho0.density
        d = dens.dim
        idx = np.argwhere(dens.values > 0)
        if len(idx):
            sub = dens.cell / quad
            offsets = np.stack(
                np.meshgrid(*([np.arange(quad)] * d), indexing="ij"), axis=-1
            ).reshape(-1, d)
            cell_lo = dens.origin + idx * dens.cell
            centers = (cell_lo[:, None, :] + (offsets[None, :, :] + 0.5) * sub).reshape(-1, d)
            masses = np.repeat(dens.values[tuple(idx.T)] * sub**d, quad**d)
            pts.append(centers)
            wts.append(masses)
    if not pts:
        raise ValueError("measure carries no mass")
    return Atoms(np.vstack(pts), np.concatenate(wts))


# ---------------------------------------------------------------------------
# measure file format


def write_measure(rho0: SourceMeasure, path) -> None:
    d = rho0.dim
    lines = [f"wh1measure v1 d={d}"]
    if len(rho0.atoms) > 0:
        lines.append("atoms")
        for pt, w in zip(rho0.atoms.points, rho0.atoms.weights):
            lines.append(" ".join(repr(float(c)) for c in pt) + f" {float(w)!r}")
    if rho0.density is not None:
        dens = rho0.density
        lines.append("density")
        lines.append("origin " + " ".join(repr(float(c)) for c in dens.origin))
        lines.append(f"cell {dens.cell!r}")
        lines.append("shape " + " ".join(str(s) for s in dens.values.shape))
        lines.append("values")
        flat = dens.values.ravel()
        for start in range(0, len(flat), 8):
            lines.append(" ".join(repr(float(v)) for v in flat[start : start + 8]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_measure(path) -> SourceMeasure:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not raw or not raw[0].startswith("wh1measure v1"):
        raise ValueError(f"{path}: not a wh1measure v1 file")
    try:
        d = int(raw[0].split("d=")[1])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header") from exc

    atom_pts: list[list[float]] = []
    atom_ws: list[float] = []
    density = None
    i = 1
    while i < len(raw):
        if raw[i] == "atoms":
            i += 1
            while i < len(raw) and raw[i] not in ("density",):
                parts = [float(x) for x in raw[i].split()]
                if len(parts) != d + 1:
                    raise ValueError(f"{path}: atom line needs {d} coords and a weight")
                atom_pts.append(parts[:d])
                atom_ws.append(parts[d])
                i += 1
        elif raw[i] == "density":
            i += 1
            origin = None
            cell = None
            shape = None
            values: list[float] = []
            while i < len(raw):
                parts = raw[i].split()
                if parts[0] == "origin":
                    origin = [float(x) for x in parts[1:]]
                elif parts[0] == "cell":
                    cell = float(parts[1])
                elif parts[0] == "shape":
                    shape = tuple(int(x) for x in parts[1:])
                elif parts[0] == "values":
                    pass
                else:
                    values.extend(float(x) for x in parts)
                i += 1
            if origin is None or cell is None or shape is None:
                raise ValueError(f"{path}: density section incomplete")
            arr = np.array(values, dtype=float).reshape(shape)
            density = GridDensity(origin, cell, arr)
        else:
            raise ValueError(f"{path}: unknown section {raw[i]!r}")

    atoms = Atoms(np.array(atom_pts, dtype=float).reshape(-1, d), np.array(atom_ws))
    return SourceMeasure(atoms, density)
