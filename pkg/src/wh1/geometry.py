"""Embedded polyline networks: lengths, projections, cycles, tangents, clean ball cuts.

A network is a straight-segment graph embedded in R^2 or R^3.  Everything a
segment supports in closed form (projection, ball clipping, sphere crossings)
is done in closed form; set-level quantities (Hausdorff distance, tangent
directions) work on dense arc-length samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.spatial.distance import directed_hausdorff

# Shortest admissible segment; edges below this are rejected as degenerate.
MIN_EDGE_LEN = 1e-9

# Tolerance used when classifying segment-sphere intersections.
CROSSING_TOL = 1e-9


@dataclass(frozen=True)
class Network:
    """Straight-segment network: vertex coordinates plus unordered index pairs.

    Edges are stored normalized as (lo, hi) pairs.  Construction rejects
    self-loops, duplicate edges, non-finite coordinates and degenerate
    segments shorter than `MIN_EDGE_LEN`.
    """

    vertices: np.ndarray
    edges: tuple[tuple[int, int], ...]

    def __init__(self, vertices, edges):
        verts = np.asarray(vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] not in (2, 3):
            raise ValueError("vertices must be an (n, d) array with d in {2, 3}")
        if not np.all(np.isfinite(verts)):
            raise ValueError("vertex coordinates must be finite")
        verts = verts.copy()
        verts.setflags(write=False)

        norm_edges = []
        seen = set()
        n = len(verts)
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop edge ({i}, {j})")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) references a missing vertex")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            if np.linalg.norm(verts[key[1]] - verts[key[0]]) < MIN_EDGE_LEN:
                raise ValueError(f"degenerate edge {key}: length below {MIN_EDGE_LEN}")
            norm_edges.append(key)

        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple(norm_edges))

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_endpoints(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        i, j = self.edges[k]
        return self.vertices[i], self.vertices[j]

    def edge_lengths(self) -> np.ndarray:
        if not self.edges:
            return np.zeros(0)
        idx = np.asarray(self.edges)
        return np.linalg.norm(self.vertices[idx[:, 1]] - self.vertices[idx[:, 0]], axis=1)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_vertices))
        for k, (i, j) in enumerate(self.edges):
            g.add_edge(i, j, index=k)
        return g


@dataclass(frozen=True)
class CutAnalysis:
    """A candidate ball cut: center point, radius and its cleanliness data."""

    point: np.ndarray
    radius: float
    crossings: int
    inside_connected: bool
    outside_connected: bool

    def is_clean(self) -> bool:
        return self.crossings == 2 and self.inside_connected and self.outside_connected


def network_length(net: Network) -> float:
    """Total Euclidean length of all segments."""
    return float(net.edge_lengths().sum())


def _project_to_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Closest point on segment [a, b] to p; returns (t, foot, distance)."""
    u = b - a
    denom = float(u @ u)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ u / denom, 0.0, 1.0))
    foot = a + t * u
    return t, foot, float(np.linalg.norm(p - foot))


def project_to_network(p, net: Network) -> tuple[np.ndarray, float, int]:
    """Global nearest point of the network to p.

    Returns (foot, distance, edge index).  Exact distance ties are broken by
    the lowest edge index.  A network without edges projects onto its nearest
    vertex (reported with edge index -1).
    """
    p = np.asarray(p, dtype=float)
    if net.n_edges == 0:
        if net.n_vertices == 0:
            raise ValueError("empty domain")
        dists = np.linalg.norm(net.vertices - p, axis=1)
        k = int(np.argmin(dists))
        return net.vertices[k].copy(), float(dists[k]), -1

    best = None
    for k in range(net.n_edges):
        a, b = net.edge_endpoints(k)
        t, foot, dist = _project_to_segment(p, a, b)
        if best is None or dist < best[1]:
            best = (foot, dist, k, t)
    foot, dist, k, _ = best
    return foot, dist, k


def distances_to_network(points: np.ndarray, net: Network) -> np.ndarray:
    """Vectorized distance from each row of `points` to the network."""
    pts = np.asarray(points, dtype=float)
    if net.n_edges == 0:
        if net.n_vertices == 0:
            raise ValueError("empty domain")
        d = np.full(len(pts), np.inf)
        for v in net.vertices:
            d = np.minimum(d, np.linalg.norm(pts - v, axis=1))
        return d
    best = np.full(len(pts), np.inf)
    for k in range(net.n_edges):
        a, b = net.edge_endpoints(k)
        u = b - a
        denom = float(u @ u)
        t = np.clip((pts - a) @ u / denom, 0.0, 1.0)
        feet = a + t[:, None] * u
        best = np.minimum(best, np.linalg.norm(pts - feet, axis=1))
    return best


def is_connected(net: Network) -> bool:
    """Connectivity over vertices touched by edges; isolated vertices ignored.

    A network without edges counts as connected (it is at most a point set
    with no 1-dimensional structure to disconnect).
    """
    if net.n_edges == 0:
        return True
    touched = set()
    for i, j in net.edges:
        touched.add(i)
        touched.add(j)
    g = net.to_graph()
    sub = g.subgraph(touched)
    return nx.is_connected(sub)


def find_cycles(net: Network) -> list[list[int]]:
    """One independent cycle per element of a cycle basis, as edge-index lists."""
    g = net.to_graph()
    lookup = {(min(i, j), max(i, j)): k for k, (i, j) in enumerate(net.edges)}
    cycles = []
    for vcycle in nx.cycle_basis(g):
        edge_seq = []
        for a, b in zip(vcycle, vcycle[1:] + vcycle[:1]):
            edge_seq.append(lookup[(min(a, b), max(a, b))])
        cycles.append(edge_seq)
    return cycles


def sample_segment(a: np.ndarray, b: np.ndarray, spacing: float) -> np.ndarray:
    """Points along [a, b] including endpoints, spaced at most `spacing` apart."""
    length = float(np.linalg.norm(b - a))
    n = max(1, int(math.ceil(length / spacing)))
    ts = np.linspace(0.0, 1.0, n + 1)
    return a + ts[:, None] * (b - a)


def sample_network(net: Network, spacing: float) -> np.ndarray:
    """Dense point sample of the whole network at the given spacing."""
    if net.n_edges == 0:
        return net.vertices.copy()
    chunks = [sample_segment(*net.edge_endpoints(k), spacing) for k in range(net.n_edges)]
    return np.vstack(chunks)


def hausdorff_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two nonempty point samples."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty sample")
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


def segment_ball_interval(a: np.ndarray, b: np.ndarray, center: np.ndarray, r: float):
    """Parameter interval [t0, t1] of {t in [0,1] : |a + t(b-a) - center| <= r}.

    Returns None when the segment misses the closed ball.
    """
    u = b - a
    w = a - center
    aa = float(u @ u)
    bb = 2.0 * float(w @ u)
    cc = float(w @ w) - r * r
    disc = bb * bb - 4.0 * aa * cc
    if disc < 0.0:
        return None
    sq = math.sqrt(disc)
    t0 = (-bb - sq) / (2.0 * aa)
    t1 = (-bb + sq) / (2.0 * aa)
    lo, hi = max(t0, 0.0), min(t1, 1.0)
    if lo > hi:
        return None
    return lo, hi


def network_length_in_ball(net: Network, center, r: float) -> float:
    """Closed-form length of the part of the network inside the closed ball."""
    center = np.asarray(center, dtype=float)
    total = 0.0
    for k in range(net.n_edges):
        a, b = net.edge_endpoints(k)
        iv = segment_ball_interval(a, b, center, r)
        if iv is not None:
            total += (iv[1] - iv[0]) * float(np.linalg.norm(b - a))
    return total


def tangent_estimate(net: Network, y0, r: float, spacing_frac: float = 1e-3) -> np.ndarray:
    """Principal direction of the network inside the ball B_r(y0).

    Works on a dense arc-length sample of net intersected with the ball:
    the unit leading eigenvector of the sample's weighted covariance, with
    the sign fixed so the first coordinate above 1e-12 in magnitude is
    positive.  Raises if the ball holds no 1-dimensional material.
    """
    y0 = np.asarray(y0, dtype=float)
    pts = []
    wts = []
    spacing = max(r * spacing_frac, 1e-12)
    for k in range(net.n_edges):
        a, b = net.edge_endpoints(k)
        iv = segment_ball_interval(a, b, y0, r)
        if iv is None:
            continue
        t0, t1 = iv
        seg_len = (t1 - t0) * float(np.linalg.norm(b - a))
        if seg_len <= 0.0:
            continue
        n = max(2, int(math.ceil(seg_len / spacing)))
        # midpoints of n equal pieces, each carrying seg_len / n of arc length
        ts = t0 + (t1 - t0) * (np.arange(n) + 0.5) / n
        pts.append(a + ts[:, None] * (b - a) - y0)
        wts.append(np.full(n, seg_len / n))
    if not pts:
        raise ValueError("no tangent: ball contains no network material")
    x = np.vstack(pts)
    w = np.concatenate(wts)
    wsum = float(w.sum())
    mean = (w[:, None] * x).sum(axis=0) / wsum
    centered = x - mean
    cov = (w[:, None] * centered).T @ centered / wsum
    evals, evecs = np.linalg.eigh(cov)
    if evals[-1] <= 1e-24:
        raise ValueError("no tangent: degenerate second-moment matrix")
    tau = evecs[:, -1]
    tau = tau / np.linalg.norm(tau)
    for c in tau:
        if abs(c) > 1e-12:
            if c < 0:
                tau = -tau
            break
    return tau


@dataclass(frozen=True)
class BallCut:
    """Exact intersection data of a network with a sphere of radius r at y0."""

    center: np.ndarray
    radius: float
    # (edge index, parameter, point) per transversal sphere crossing
    crossings: tuple[tuple[int, float, np.ndarray], ...]
    clean: bool  # all crossings transversal and away from edge endpoints
    inside_connected: bool
    outside_connected: bool
    inside_nonempty: bool


def _sphere_crossing_params(a, b, center, r) -> tuple[list[float], bool]:
    """Roots t of |a + t(b-a) - center| = r in [0, 1].

    Second value is False when any root is tangential or hugs an endpoint,
    making the crossing count unreliable at this radius.
    """
    u = b - a
    w = a - center
    aa = float(u @ u)
    bb = 2.0 * float(w @ u)
    cc = float(w @ w) - r * r
    disc = bb * bb - 4.0 * aa * cc
    seg_len = math.sqrt(aa)
    # tolerance on the discriminant scaled to parameter tolerance
    if disc < 0.0:
        return [], True
    sq = math.sqrt(disc)
    roots = [(-bb - sq) / (2.0 * aa), (-bb + sq) / (2.0 * aa)]
    # tangential touch: double root; cannot certify a transversal crossing
    if sq / (2.0 * aa) < CROSSING_TOL:
        inside0 = cc < 0
        relevant = any(-CROSSING_TOL < t < 1.0 + CROSSING_TOL for t in roots)
        if relevant and not inside0:
            return [], False
        if relevant and inside0:
            return [], False
        return [], True
    out = []
    for t in roots:
        if -CROSSING_TOL < t < CROSSING_TOL or 1.0 - CROSSING_TOL < t < 1.0 + CROSSING_TOL:
            # crossing at an edge endpoint: reject the radius, scan another
            return [], False
        if CROSSING_TOL <= t <= 1.0 - CROSSING_TOL:
            out.append(t)
    _ = seg_len
    return out, True


def cut_ball(net: Network, y0, r: float) -> BallCut:
    """Analyze the cut of the network by the sphere of radius r around y0."""
    y0 = np.asarray(y0, dtype=float)
    crossings = []
    clean = True
    for k in range(net.n_edges):
        a, b = net.edge_endpoints(k)
        roots, ok = _sphere_crossing_params(a, b, y0, r)
        if not ok:
            clean = False
        for t in roots:
            crossings.append((k, t, a + t * (b - a)))

    # split each edge at its crossings; classify pieces by midpoint position
    g_in = nx.Graph()
    g_out = nx.Graph()
    inside_len = 0.0
    cross_by_edge: dict[int, list[float]] = {}
    for k, t, _ in crossings:
        cross_by_edge.setdefault(k, []).append(t)
    for k in range(net.n_edges):
        i, j = net.edges[k]
        a, b = net.edge_endpoints(k)
        ts = sorted(cross_by_edge.get(k, []))
        nodes = [("v", i)] + [("x", k, t) for t in ts] + [("v", j)]
        params = [0.0] + ts + [1.0]
        for s in range(len(nodes) - 1):
            tm = 0.5 * (params[s] + params[s + 1])
            mid = a + tm * (b - a)
            piece_len = (params[s + 1] - params[s]) * float(np.linalg.norm(b - a))
            if np.linalg.norm(mid - y0) < r:
                g_in.add_edge(nodes[s], nodes[s + 1], length=piece_len)
                inside_len += piece_len
            else:
                g_out.add_edge(nodes[s], nodes[s + 1], length=piece_len)

    inside_nonempty = g_in.number_of_edges() > 0
    inside_connected = inside_nonempty and nx.is_connected(g_in)
    outside_connected = g_out.number_of_edges() > 0 and nx.is_connected(g_out)
    return BallCut(
        center=y0,
        radius=float(r),
        crossings=tuple(sorted(crossings, key=lambda c: (c[0], c[1]))),
        clean=clean,
        inside_connected=inside_connected,
        outside_connected=outside_connected,
        inside_nonempty=inside_nonempty,
    )


def _dyadic_fractions(count: int) -> list[float]:
    """First `count` dyadic fractions of (0, 1) in breadth-first order."""
    out = []
    level = 1
    while len(out) < count:
        denom = 2 ** level
        for num in range(1, denom, 2):
            out.append(num / denom)
            if len(out) == count:
                break
        level += 1
    return out

# Scan order for candidate radii in (r/2, r) and candidate points per edge.
_RADII_FRACTIONS = _dyadic_fractions(64)
_POINT_FRACTIONS = _dyadic_fractions(7)


def clean_cut_radius(net: Network, y0, r: float, fractions=None) -> CutAnalysis:
    """Scan dyadic radii in (r/2, r) for a clean two-crossing cut at y0.

    A clean cut has exactly two transversal sphere crossings with both the
    inside and the outside of the ball connected.  Raises when no radius on
    the grid qualifies; callers retry with a smaller r.
    """
    y0 = np.asarray(y0, dtype=float)
    for f in fractions if fractions is not None else _RADII_FRACTIONS:
        rbar = 0.5 * r + 0.5 * r * f
        cut = cut_ball(net, y0, rbar)
        if not cut.clean:
            continue
        if len(cut.crossings) == 2 and cut.inside_connected and cut.outside_connected:
            return CutAnalysis(
                point=y0,
                radius=rbar,
                crossings=2,
                inside_connected=True,
                outside_connected=True,
            )
    raise ValueError("no clean cut radius")


def select_noncut_ball(net: Network, cycle: list[int], r: float, exclude=()) -> CutAnalysis:
    """Pick a point on the cycle and a radius in (r/2, r) giving a clean cut.

    Candidate points are interior points of cycle edges (never graph
    vertices); points coinciding with any entry of `exclude` are skipped.
    Raises "no clean cut radius" when the scan fails everywhere.
    """
    exclude = [np.asarray(q, dtype=float) for q in exclude]
    for t in _POINT_FRACTIONS:
        for k in cycle:
            a, b = net.edge_endpoints(k)
            y0 = a + t * (b - a)
            if any(np.linalg.norm(y0 - q) <= 1e-9 for q in exclude):
                continue
            try:
                return clean_cut_radius(net, y0, r)
            except ValueError:
                continue
    raise ValueError("no clean cut radius")


def split_network_at_points(
    net: Network, points, tol: float = 1e-9
) -> tuple[Network, list[int], dict[int, list[tuple[float, float, int]]]]:
    """Split edges so every given point becomes a vertex of the network.

    Points already matching a vertex (within tol) reuse it.  Returns the new
    network, the vertex index of each input point, and a map from each
    original edge to its pieces as (param lo, param hi, new edge index).
    """
    verts = [v.copy() for v in net.vertices]
    # edge -> sorted list of (param, vertex index) insertions
    pending: dict[int, list[tuple[float, int]]] = {}
    out_indices = []
    for p in points:
        p = np.asarray(p, dtype=float)
        hit = None
        for vi, v in enumerate(verts):
            if np.linalg.norm(v - p) <= tol:
                hit = vi
                break
        if hit is not None:
            out_indices.append(hit)
            continue
        foot, dist, k = project_to_network(p, net)
        if dist > tol:
            raise ValueError("point does not lie on the network")
        a, b = net.edge_endpoints(k)
        t, _, _ = _project_to_segment(p, a, b)
        # reuse earlier insertion at the same spot
        reused = None
        for tt, vi in pending.get(k, []):
            if abs(tt - t) * np.linalg.norm(b - a) <= tol:
                reused = vi
                break
        if reused is not None:
            out_indices.append(reused)
            continue
        verts.append(foot)
        vi = len(verts) - 1
        pending.setdefault(k, []).append((t, vi))
        out_indices.append(vi)

    edges = []
    edge_map: dict[int, list[tuple[float, float, int]]] = {}
    for k, (i, j) in enumerate(net.edges):
        ins = sorted(pending.get(k, []))
        chain = [i] + [vi for _, vi in ins] + [j]
        params = [0.0] + [t for t, _ in ins] + [1.0]
        pieces = []
        for s, (a, b) in enumerate(zip(chain, chain[1:])):
            pieces.append((params[s], params[s + 1], len(edges)))
            edges.append((a, b))
        edge_map[k] = pieces
    return Network(np.array(verts), edges), out_indices, edge_map


def insert_points_on_network(net: Network, points, tol: float = 1e-9) -> tuple[Network, list[int]]:
    """Split edges so every given point becomes a vertex; see
    `split_network_at_points` for the variant that keeps the piece map."""
    refined, indices, _ = split_network_at_points(net, points, tol)
    return refined, indices


# ---------------------------------------------------------------------------
# network file format: "wh1net v1 d=<dim>" header, v/e lines, 0-based indices


def write_network(net: Network, path) -> None:
    lines = [f"wh1net v1 d={net.dim}"]
    for v in net.vertices:
        lines.append("v " + " ".join(repr(float(c)) for c in v))
    for i, j in net.edges:
        lines.append(f"e {i} {j}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_network(path) -> Network:
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not raw or not raw[0].startswith("wh1net v1"):
        raise ValueError(f"{path}: not a wh1net v1 file")
    try:
        dim = int(raw[0].split("d=")[1])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{path}: malformed header") from exc
    verts = []
    edges = []
    for ln in raw[1:]:
        parts = ln.split()
        if parts[0] == "v":
            coords = [float(x) for x in parts[1:]]
            if len(coords) != dim:
                raise ValueError(f"{path}: vertex line has {len(coords)} coords, expected {dim}")
            verts.append(coords)
        elif parts[0] == "e":
            edges.append((int(parts[1]), int(parts[2])))
        else:
            raise ValueError(f"{path}: unknown record {parts[0]!r}")
    return Network(np.array(verts, dtype=float).reshape(-1, dim), edges)
