"""Annular triangulations with tagged boundary loops.

The computational domain is the region between two closed polylines in the
(r, z) half-plane: an outer loop (the vessel wall, where Cauchy data live)
and an inner loop (the fictitious contour where the unknown Dirichlet value
is sought).  Single-loop meshes (no inner hole) are also accepted; they are
useful for auxiliary verification domains.

Meshes are plain node/triangle/boundary-edge arrays, immutable after
construction, with a line-oriented text serialization that round-trips
coordinates bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

OUTER = "outer"
INNER = "inner"


class MeshFormatError(ValueError):
    """Malformed mesh file: bad header, token, or out-of-range index."""


class MeshValidationError(ValueError):
    """Mesh arrays violate a structural invariant."""


class MeshTopologyError(MeshValidationError):
    """Boundary edges of one label do not chain into a single closed loop."""


class MeshGeometryError(ValueError):
    """Input loops unsuitable for meshing (intersecting, degenerate, ...)."""


# ---------------------------------------------------------------------------
# polygon helpers
# ---------------------------------------------------------------------------

def polygon_area(loop: np.ndarray) -> float:
    """Signed shoelace area of a closed polyline given without repeated endpoint."""
    loop = np.asarray(loop, dtype=float)
    r, z = loop[:, 0], loop[:, 1]
    rn, zn = np.roll(r, -1), np.roll(z, -1)
    return 0.5 * float(np.sum(r * zn - rn * z))


def polygon_centroid(loop: np.ndarray) -> np.ndarray:
    """Area centroid of a simple closed polyline (vertices not repeated)."""
    loop = np.asarray(loop, dtype=float)
    r, z = loop[:, 0], loop[:, 1]
    rn, zn = np.roll(r, -1), np.roll(z, -1)
    cross = r * zn - rn * z
    area = 0.5 * np.sum(cross)
    if abs(area) < 1e-300:
        raise MeshGeometryError("degenerate polygon: zero area")
    cr = np.sum((r + rn) * cross) / (6.0 * area)
    cz = np.sum((z + zn) * cross) / (6.0 * area)
    return np.array([cr, cz])


def points_in_polygon(points: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Ray-casting point-in-polygon test, vectorized over query points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    loop = np.asarray(loop, dtype=float)
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    x1, y1 = loop[:, 0][None, :], loop[:, 1][None, :]
    x2, y2 = np.roll(loop[:, 0], -1)[None, :], np.roll(loop[:, 1], -1)[None, :]
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = (x2 - x1) * (y - y1) / (y2 - y1) + x1
    hits = straddle & (x < xcross)
    return np.sum(hits, axis=1) % 2 == 1


def distance_to_polyline(points: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Min distance from each query point to a closed polyline."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.asarray(loop, dtype=float)
    b = np.roll(a, -1, axis=0)
    ab = b - a                                    # (m, 2)
    denom = np.maximum(np.einsum("ij,ij->i", ab, ab), 1e-300)
    ap = points[:, None, :] - a[None, :, :]       # (n, m, 2)
    t = np.clip(np.einsum("nmj,mj->nm", ap, ab) / denom, 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(points[:, None, :] - proj, axis=2)
    return d.min(axis=1)


def _segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Proper-intersection test between segment batches (broadcast over pairs)."""
    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (
            b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) & ((d3 > 0) != (d4 > 0))


def loops_intersect(loop_a: np.ndarray, loop_b: np.ndarray) -> bool:
    """True if any edge of loop_a properly crosses any edge of loop_b."""
    a1 = np.asarray(loop_a, dtype=float)
    a2 = np.roll(a1, -1, axis=0)
    b1 = np.asarray(loop_b, dtype=float)
    b2 = np.roll(b1, -1, axis=0)
    hits = _segments_intersect(a1[:, None, :], a2[:, None, :],
                               b1[None, :, :], b2[None, :, :])
    return bool(hits.any())


def scale_toward_centroid(loop: np.ndarray, factor: float) -> np.ndarray:
    """Shrink a loop toward its own area centroid by the given factor."""
    loop = np.asarray(loop, dtype=float)
    c = polygon_centroid(loop)
    return c + factor * (loop - c)


def triangle_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed areas, positive for counter-clockwise triangles."""
    p = nodes[triangles]
    return 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))


# ---------------------------------------------------------------------------
# mesh container and validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mesh:
    """Immutable triangulation of an annular (or simply connected) domain.

    Attributes
    ----------
    nodes : (N, 2) float array
        Node coordinates (r, z) in meters, r > 0.
    triangles : (M, 3) int array
        Counter-clockwise vertex triples.
    boundary_edges : (K, 2) int array
        Node pairs lying on the domain boundary.
    boundary_labels : (K,) str array
        One of ``"outer"`` / ``"inner"`` per boundary edge.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_labels: np.ndarray

    def __post_init__(self):
        nodes = np.ascontiguousarray(np.asarray(self.nodes, dtype=np.float64))
        tris = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        edges = np.ascontiguousarray(np.asarray(self.boundary_edges, dtype=np.int64))
        labels = np.asarray(self.boundary_labels)
        validate_mesh(nodes, tris, edges, labels)
        for name, arr in (("nodes", nodes), ("triangles", tris),
                          ("boundary_edges", edges), ("boundary_labels", labels)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]

    @cached_property
    def boundary(self) -> "BoundaryIndex":
        return build_boundary_index(self)

    @cached_property
    def max_edge_length(self) -> float:
        p = self.nodes[self.triangles]
        e = np.concatenate([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]])
        return float(np.max(np.linalg.norm(e, axis=1)))


def _edge_usage(triangles: np.ndarray) -> dict[tuple[int, int], int]:
    usage: dict[tuple[int, int], int] = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(min(a, b)), int(max(a, b)))
            usage[key] = usage.get(key, 0) + 1
    return usage


def chain_loop(edges: np.ndarray, label: str) -> np.ndarray:
    """Chain undirected edges into one closed simple loop of node indices.

    Raises MeshTopologyError if the edges do not form exactly one cycle.
    """
    if len(edges) < 3:
        raise MeshTopologyError(f"boundary '{label}': fewer than 3 edges")
    adj: dict[int, list[int]] = {}
    for a, b in edges:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    for node, nbrs in adj.items():
        if len(nbrs) != 2:
            raise MeshTopologyError(
                f"boundary '{label}': node {node} has degree {len(nbrs)}, expected 2")
    start = min(adj)
    loop = [start]
    prev, cur = -1, start
    while True:
        nxt = [n for n in adj[cur] if n != prev]
        if not nxt:
            raise MeshTopologyError(f"boundary '{label}': dead end at node {cur}")
        prev, cur = cur, nxt[0]
        if cur == start:
            break
        loop.append(cur)
        if len(loop) > len(edges):
            raise MeshTopologyError(f"boundary '{label}': edges do not close")
    if len(loop) != len(edges):
        raise MeshTopologyError(
            f"boundary '{label}': {len(edges)} edges chain into a loop of "
            f"{len(loop)} nodes; multiple components?")
    return np.asarray(loop, dtype=np.int64)


def validate_mesh(nodes, triangles, edges, labels) -> None:
    """Check all structural mesh invariants, raising on the first violation."""
    if nodes.ndim != 2 or nodes.shape[1] != 2:
        raise MeshValidationError("nodes must be (N, 2)")
    if triangles.ndim != 2 or triangles.shape[1] != 3:
        raise MeshValidationError("triangles must be (M, 3)")
    if len(edges) != len(labels):
        raise MeshValidationError("boundary edge/label count mismatch")
    n = nodes.shape[0]
    if triangles.size and (triangles.min() < 0 or triangles.max() >= n):
        raise MeshValidationError("triangle node index out of range")
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise MeshValidationError("boundary edge node index out of range")
    if not np.all(np.isfinite(nodes)):
        raise MeshValidationError("non-finite node coordinate")
    if np.any(nodes[:, 0] <= 0.0):
        bad = int(np.argmin(nodes[:, 0]))
        raise MeshValidationError(
            f"node {bad} has r = {nodes[bad, 0]} <= 0; the 1/r weight requires r > 0")
    areas = triangle_areas(nodes, triangles)
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise MeshValidationError(
            f"triangle {bad} has non-positive area {areas[bad]}; "
            "vertices must be counter-clockwise")
    unknown = set(np.unique(labels)) - {OUTER, INNER}
    if unknown:
        raise MeshValidationError(f"unknown boundary labels {sorted(unknown)}")

    usage = _edge_usage(triangles)
    labeled = {}
    for (a, b), lab in zip(edges, labels):
        key = (int(min(a, b)), int(max(a, b)))
        if key in labeled:
            raise MeshValidationError(f"boundary edge {key} listed twice")
        labeled[key] = str(lab)
    for key, count in usage.items():
        if count > 2:
            raise MeshValidationError(f"edge {key} shared by {count} triangles")
        if count == 1 and key not in labeled:
            raise MeshValidationError(f"edge {key} is on the boundary but unlabeled")
        if count == 2 and key in labeled:
            raise MeshValidationError(f"interior edge {key} carries a boundary label")
    for key in labeled:
        if key not in usage:
            raise MeshValidationError(f"boundary edge {key} is not a triangle edge")

    outer_edges = edges[labels == OUTER]
    inner_edges = edges[labels == INNER]
    if len(outer_edges) == 0:
        raise MeshValidationError("no outer boundary edges")
    outer_loop = chain_loop(outer_edges, OUTER)
    if len(inner_edges):
        inner_loop = chain_loop(inner_edges, INNER)
        inside = points_in_polygon(nodes[inner_loop], nodes[outer_loop])
        if not inside.all():
            raise MeshValidationError("inner loop is not strictly inside the outer loop")
        outer_in_inner = points_in_polygon(nodes[outer_loop], nodes[inner_loop])
        if outer_in_inner.any():
            raise MeshValidationError("outer loop nodes lie inside the inner loop")


# ---------------------------------------------------------------------------
# boundary index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryIndex:
    """Ordered traversal of each boundary loop with arc-length parameters.

    The outer loop runs counter-clockwise and the inner loop clockwise, so the
    outward normal of the domain points away from it on both.  Arc lengths are
    measured from the loop's start node (minimum z, ties broken by minimum r)
    and the closing edge back to the start is included in the perimeter only.
    """

    outer_nodes: np.ndarray
    inner_nodes: np.ndarray
    outer_arcs: np.ndarray
    inner_arcs: np.ndarray
    outer_perimeter: float
    inner_perimeter: float

    def nodes_for(self, where: str) -> np.ndarray:
        if where == OUTER:
            return self.outer_nodes
        if where == INNER:
            return self.inner_nodes
        raise ValueError(f"unknown boundary {where!r}")

    def arcs_for(self, where: str) -> np.ndarray:
        return self.outer_arcs if where == OUTER else self.inner_arcs


def _orient_and_anchor(nodes: np.ndarray, loop: np.ndarray, ccw: bool):
    pts = nodes[loop]
    if (polygon_area(pts) > 0.0) != ccw:
        loop = loop[::-1].copy()
        pts = nodes[loop]
    start = np.lexsort((pts[:, 0], pts[:, 1]))[0]
    loop = np.roll(loop, -start)
    pts = nodes[loop]
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg)])
    perimeter = float(arcs[-1] + np.linalg.norm(pts[0] - pts[-1]))
    return loop, arcs, perimeter


def build_boundary_index(mesh: Mesh) -> BoundaryIndex:
    """Canonically ordered boundary traversals (orientation recomputed)."""
    labels = mesh.boundary_labels
    outer_loop = chain_loop(mesh.boundary_edges[labels == OUTER], OUTER)
    outer_loop, outer_arcs, outer_per = _orient_and_anchor(mesh.nodes, outer_loop, ccw=True)
    inner_edges = mesh.boundary_edges[labels == INNER]
    if len(inner_edges):
        inner_loop = chain_loop(inner_edges, INNER)
        inner_loop, inner_arcs, inner_per = _orient_and_anchor(mesh.nodes, inner_loop, ccw=False)
    else:
        inner_loop = np.zeros(0, dtype=np.int64)
        inner_arcs = np.zeros(0)
        inner_per = 0.0
    return BoundaryIndex(outer_loop, inner_loop, outer_arcs, inner_arcs,
                         outer_per, inner_per)


def boundary_node_normals(mesh: Mesh, where: str) -> np.ndarray:
    """Unit outward normals of the domain at boundary nodes.

    Averages the two adjacent edge normals; second-order accurate on smooth
    boundaries.  On the outer loop the normal points away from the domain,
    on the inner loop it points into the hole.
    """
    idx = mesh.boundary.nodes_for(where)
    pts = mesh.nodes[idx]
    nxt = np.roll(pts, -1, axis=0)
    prv = np.roll(pts, 1, axis=0)

    # right-of-travel edge normal; with outer CCW and inner CW this points
    # away from the domain on both loops
    def edge_normal(a, b):
        t = b - a
        return np.stack([t[:, 1], -t[:, 0]], axis=1)

    n1 = edge_normal(prv, pts)
    n2 = edge_normal(pts, nxt)
    n = n1 / np.maximum(np.linalg.norm(n1, axis=1), 1e-300)[:, None] \
        + n2 / np.maximum(np.linalg.norm(n2, axis=1), 1e-300)[:, None]
    n /= np.maximum(np.linalg.norm(n, axis=1), 1e-300)[:, None]
    return n


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def _tokens(path):
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def load_mesh(path) -> Mesh:
    """Read a mesh from the plain-text format.

    Layout: ``nodes N`` then N lines ``r z``; ``triangles M`` then M lines
    ``i j k``; ``boundary_edges K`` then K lines ``a b label``.  Indices are
    0-based, ``#`` starts a comment, labels are ``outer`` / ``inner``.
    """
    stream = _tokens(path)

    def next_tokens(expect: int, what: str):
        try:
            lineno, toks = next(stream)
        except StopIteration:
            raise MeshFormatError(f"{path}: unexpected end of file while reading {what}")
        if len(toks) != expect:
            raise MeshFormatError(
                f"{path}:{lineno}: expected {expect} tokens for {what}, got {len(toks)}")
        return lineno, toks

    def header(name: str) -> int:
        lineno, toks = next_tokens(2, f"'{name}' header")
        if toks[0] != name:
            raise MeshFormatError(f"{path}:{lineno}: expected '{name}', got '{toks[0]}'")
        try:
            count = int(toks[1])
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: bad count '{toks[1]}'")
        if count < 0:
            raise MeshFormatError(f"{path}:{lineno}: negative count")
        return count

    n = header("nodes")
    nodes = np.empty((n, 2))
    for i in range(n):
        lineno, toks = next_tokens(2, f"node {i}")
        try:
            nodes[i] = (float(toks[0]), float(toks[1]))
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: bad coordinate")

    m = header("triangles")
    tris = np.empty((m, 3), dtype=np.int64)
    for i in range(m):
        lineno, toks = next_tokens(3, f"triangle {i}")
        try:
            tris[i] = [int(t) for t in toks]
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: bad triangle index")
        if tris[i].min() < 0 or tris[i].max() >= n:
            raise MeshFormatError(f"{path}:{lineno}: triangle index out of range")

    k = header("boundary_edges")
    edges = np.empty((k, 2), dtype=np.int64)
    labels = np.empty(k, dtype="U8")
    for i in range(k):
        lineno, toks = next_tokens(3, f"boundary edge {i}")
        try:
            edges[i] = (int(toks[0]), int(toks[1]))
        except ValueError:
            raise MeshFormatError(f"{path}:{lineno}: bad edge index")
        if edges[i].min() < 0 or edges[i].max() >= n:
            raise MeshFormatError(f"{path}:{lineno}: edge index out of range")
        if toks[2] not in (OUTER, INNER):
            raise MeshFormatError(f"{path}:{lineno}: unknown label '{toks[2]}'")
        labels[i] = toks[2]

    extra = next(stream, None)
    if extra is not None:
        raise MeshFormatError(f"{path}:{extra[0]}: trailing content")
    return Mesh(nodes, tris, edges, labels)


def save_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text format; floats use shortest round-trip repr."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"nodes {mesh.node_count}\n")
        for r, z in mesh.nodes:
            fh.write(f"{float(r)!r} {float(z)!r}\n")
        fh.write(f"triangles {mesh.triangle_count}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        fh.write(f"boundary_edges {len(mesh.boundary_edges)}\n")
        for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels):
            fh.write(f"{a} {b} {lab}\n")


# ---------------------------------------------------------------------------
# structured annulus generator (ring ladder, star-shaped loops)
# ---------------------------------------------------------------------------

def _subdivide_loop(loop: np.ndarray, h: float) -> np.ndarray:
    """Insert equally spaced points on each edge so no piece exceeds h.

    Original vertices are preserved exactly; new points lie on the edges.
    """
    loop = np.asarray(loop, dtype=float)
    out = []
    for a, b in zip(loop, np.roll(loop, -1, axis=0)):
        out.append(a)
        length = float(np.linalg.norm(b - a))
        pieces = max(1, math.ceil(length / h))
        for k in range(1, pieces):
            t = k / pieces
            out.append((1.0 - t) * a + t * b)
    return np.asarray(out)


def _angles_about(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    d = points - center
    return np.mod(np.arctan2(d[:, 1], d[:, 0]), 2.0 * math.pi)


def _ray_crossings(loop: np.ndarray, center: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Intersection of rays from center at given angles with a star-shaped loop."""
    ang = _angles_about(loop, center)
    order = np.argsort(ang, kind="stable")
    ang_sorted = ang[order]
    pts_sorted = loop[order]
    out = np.empty((len(angles), 2))
    for i, theta in enumerate(np.mod(angles, 2.0 * math.pi)):
        j = np.searchsorted(ang_sorted, theta)
        a = pts_sorted[(j - 1) % len(loop)]
        b = pts_sorted[j % len(loop)]
        # solve a + t (b - a) on the ray direction
        d = np.array([math.cos(theta), math.sin(theta)])
        e = b - a
        denom = d[0] * (-e[1]) - d[1] * (-e[0])
        if abs(denom) < 1e-300:
            out[i] = a
            continue
        rhs = a - center
        t_edge = (d[0] * rhs[1] - d[1] * rhs[0]) / denom
        out[i] = a + np.clip(t_edge, 0.0, 1.0) * e
    return out


def _resample_closed(points: np.ndarray, count: int) -> np.ndarray:
    """Resample a closed polyline at `count` points equidistant in arc length."""
    seg = np.linalg.norm(np.roll(points, -1, axis=0) - points, axis=1)
    arcs = np.concatenate([[0.0], np.cumsum(seg)])
    total = arcs[-1]
    targets = np.arange(count) * total / count
    idx = np.searchsorted(arcs, targets, side="right") - 1
    idx = np.clip(idx, 0, len(points) - 1)
    local = (targets - arcs[idx]) / np.maximum(seg[idx], 1e-300)
    nxt = (idx + 1) % len(points)
    return points[idx] * (1.0 - local[:, None]) + points[nxt] * local[:, None]


def _stitch_rings(idx_a, ang_a, idx_b, ang_b) -> list[tuple[int, int, int]]:
    """Triangulate the band between two rings sorted by angle (a inside b)."""
    na, nb = len(idx_a), len(idx_b)
    tris = []
    i = j = 0
    two_pi = 2.0 * math.pi

    def next_ang(ang, k, n):
        return ang[(k + 1) % n] + (two_pi if k + 1 >= n else 0.0)

    while i < na or j < nb:
        take_a = i < na and (j >= nb or next_ang(ang_a, i, na) <= next_ang(ang_b, j, nb))
        if take_a:
            tris.append((idx_a[i % na], idx_b[j % nb], idx_a[(i + 1) % na]))
            i += 1
        else:
            tris.append((idx_a[i % na], idx_b[j % nb], idx_b[(j + 1) % nb]))
            j += 1
    return tris


def generate_annulus_mesh(outer: np.ndarray, inner: np.ndarray, target_h: float,
                          node_budget: int | None = None) -> Mesh:
    """Mesh the region between two closed polylines with a ring ladder.

    Both loops must be star-shaped about the inner loop's centroid (true for
    circles, D-shapes and their scaled offsets).  Boundary polylines are
    reproduced exactly: original vertices are kept, edges are only subdivided.
    The maximum generated edge length is at most 1.5 * target_h.

    Parameters
    ----------
    outer, inner : (n, 2) arrays
        Closed polylines (no repeated endpoint), r > 0.
    target_h : float
        Requested characteristic edge length.
    node_budget : int, optional
        If given, intermediate ring sizes are nudged so the total node count
        equals the budget exactly (boundary counts are never altered).
    """
    outer = np.asarray(outer, dtype=float)
    inner = np.asarray(inner, dtype=float)
    if target_h <= 0.0:
        raise MeshGeometryError("target_h must be positive")
    for name, loop in (("outer", outer), ("inner", inner)):
        if loop.ndim != 2 or loop.shape[1] != 2 or len(loop) < 3:
            raise MeshGeometryError(f"{name} loop must be an (n>=3, 2) polyline")
        if np.any(loop[:, 0] <= 0.0):
            raise MeshGeometryError(f"{name} loop has r <= 0")
    scale = max(np.ptp(outer[:, 0]), np.ptp(outer[:, 1]))
    if not points_in_polygon(inner, outer).all():
        raise MeshGeometryError("inner loop is not strictly inside the outer loop")
    if np.min(distance_to_polyline(inner, outer)) < 1e-9 * scale:
        raise MeshGeometryError("loops touch or coincide")
    if loops_intersect(outer, inner):
        raise MeshGeometryError("outer and inner loops intersect")

    center = polygon_centroid(inner)
    if not points_in_polygon(center[None, :], inner)[0]:
        raise MeshGeometryError("inner loop is not star-shaped about its centroid")

    # retry with tighter internal spacing until the edge bound holds
    last_err = None
    for shrink in (1.0, 0.75, 0.56, 0.42):
        try:
            return _ladder_mesh(outer, inner, center, 0.9 * target_h * shrink,
                                target_h, node_budget)
        except _EdgeBoundExceeded as exc:
            last_err = exc
    raise MeshGeometryError(str(last_err))


class _EdgeBoundExceeded(Exception):
    pass


def _ladder_mesh(outer: np.ndarray, inner: np.ndarray, center: np.ndarray,
                 h_b: float, target_h: float, node_budget: int | None) -> Mesh:
    ring_inner = _subdivide_loop(inner, h_b)
    ring_outer = _subdivide_loop(outer, h_b)
    for name, ring in (("inner", ring_inner), ("outer", ring_outer)):
        ang = _angles_about(ring, center)
        rolled = np.roll(ang, -int(np.argmin(ang)))
        if np.any(np.diff(rolled) <= 0):
            raise MeshGeometryError(
                f"{name} loop is not star-shaped about the inner centroid; "
                "this generator requires star-shaped loops")

    # radial layer count from the mean gap along matched rays
    probe = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    p_in = _ray_crossings(ring_inner, center, probe)
    p_out = _ray_crossings(ring_outer, center, probe)
    gap = float(np.mean(np.linalg.norm(p_out - p_in, axis=1)))
    layers = max(1, round(gap / h_b))

    # intermediate rings: blend along rays, then resample by arc length
    fine = np.sort(np.concatenate([_angles_about(ring_inner, center),
                                   _angles_about(ring_outer, center)]))
    fine_in = _ray_crossings(ring_inner, center, fine)
    fine_out = _ray_crossings(ring_outer, center, fine)

    def ring_plan(layer_count):
        plan = []
        for k in range(1, layer_count):
            s = k / layer_count
            blend = (1.0 - s) * fine_in + s * fine_out
            perim = float(np.sum(np.linalg.norm(
                np.roll(blend, -1, axis=0) - blend, axis=1)))
            plan.append((blend, max(3, math.ceil(perim / h_b))))
        return plan

    if node_budget is not None:
        # choose the layer count whose natural node total is closest to the
        # budget, so the per-ring adjustment below stays small
        fixed = len(ring_inner) + len(ring_outer)
        best, best_gap = None, None
        for trial in range(max(2, layers // 2), max(3, 2 * layers + 2)):
            total = fixed + sum(c for _, c in ring_plan(trial))
            miss = abs(total - node_budget)
            if best_gap is None or miss < best_gap:
                best, best_gap = trial, miss
        layers = best
    mids = ring_plan(layers)

    if node_budget is not None:
        fixed = len(ring_inner) + len(ring_outer)
        counts = [c for _, c in mids]
        deficit = node_budget - fixed - sum(counts)
        if not mids:
            raise MeshGeometryError("node budget requires at least one interior ring")
        step = 1 if deficit > 0 else -1
        i = 0
        while deficit != 0:
            j = i % len(counts)
            if counts[j] + step >= 3:
                counts[j] += step
                deficit -= step
            i += 1
            if i > 10 * abs(node_budget) + 100:
                raise MeshGeometryError("cannot satisfy node budget")
        mids = [(blend, c) for (blend, _), c in zip(mids, counts)]

    rings = [ring_inner]
    for blend, count in mids:
        rings.append(_resample_closed(blend, count))
    rings.append(ring_outer)

    nodes = np.concatenate(rings, axis=0)
    offsets = np.cumsum([0] + [len(r) for r in rings])
    tris: list[tuple[int, int, int]] = []
    for k in range(len(rings) - 1):
        a = np.arange(offsets[k], offsets[k + 1])
        b = np.arange(offsets[k + 1], offsets[k + 2])
        ang_a = _angles_about(rings[k], center)
        ang_b = _angles_about(rings[k + 1], center)
        oa, ob = np.argsort(ang_a, kind="stable"), np.argsort(ang_b, kind="stable")
        tris.extend(_stitch_rings(a[oa], ang_a[oa], b[ob], ang_b[ob]))
    triangles = np.asarray(tris, dtype=np.int64)

    areas = triangle_areas(nodes, triangles)
    flip = areas < 0.0
    if flip.any():
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
    if np.any(triangle_areas(nodes, triangles) <= 0.0):
        raise MeshGeometryError("degenerate triangle produced; loops too irregular")

    def ring_edges(lo, hi, label):
        idx = np.arange(lo, hi)
        nxt = np.roll(idx, -1)
        return [(int(a), int(b), label) for a, b in zip(idx, nxt)]

    edge_list = ring_edges(offsets[0], offsets[1], INNER) \
        + ring_edges(offsets[-2], offsets[-1], OUTER)
    edges = np.asarray([(a, b) for a, b, _ in edge_list], dtype=np.int64)
    labels = np.asarray([lab for _, _, lab in edge_list])

    mesh = Mesh(nodes, triangles, edges, labels)
    if mesh.max_edge_length > 1.5 * target_h:
        raise _EdgeBoundExceeded(
            f"generated edge length {mesh.max_edge_length:.4g} exceeds "
            f"1.5 * target_h = {1.5 * target_h:.4g}")
    return mesh


def circle_loop(center_r: float, center_z: float, radius: float, count: int) -> np.ndarray:
    """Regular polygon approximating a circle, counter-clockwise."""
    t = 2.0 * math.pi * np.arange(count) / count
    return np.column_stack([center_r + radius * np.cos(t),
                            center_z + radius * np.sin(t)])


def dee_loop(center_r: float, a: float, b: float, triangularity: float,
             count: int) -> np.ndarray:
    """D-shaped loop r = R0 + a cos(t + delta sin t), z = b sin t."""
    t = 2.0 * math.pi * np.arange(count) / count
    return np.column_stack([center_r + a * np.cos(t + triangularity * np.sin(t)),
                            b * np.sin(t)])
