"""Physical outputs from a reconstructed flux.

Per-triangle magnetic field components, isoflux contours by marching
triangles, and the plasma-boundary level search.  The boundary search
classifies the inner-boundary-attached region of each flux level on the
triangle graph (exact for P1 fields at sub-triangle resolution) and bisects
for the level at which that region stops escaping through the outer wall.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .fem import FluxField, triangle_gradients
from .mesh import INNER, OUTER, Mesh, points_in_polygon


class EmptyIsolineError(ValueError):
    """Requested level lies outside the field range on every triangle."""


class NoTransitionError(RuntimeError):
    """No closed-to-open contour transition: no X-point level in the domain."""


@dataclass(frozen=True)
class FieldSample:
    """Per-triangle constant magnetic field components (tesla)."""

    b_r: np.ndarray
    b_z: np.ndarray


@dataclass
class Isoline:
    """One flux level's contour: raw segments plus chained polylines.

    closed is True when every chained polyline is a closed loop;
    inside_domain is True when no polyline terminates on the outer boundary.
    """

    level: float
    segments: list
    polylines: list = field(default_factory=list)
    polyline_closed: list = field(default_factory=list)
    closed: bool = False
    inside_domain: bool = False

    def encircles(self, point) -> bool:
        """True if some closed polyline winds around the given point."""
        for poly, is_closed in zip(self.polylines, self.polyline_closed):
            if is_closed and points_in_polygon(
                    np.asarray(point, dtype=float)[None, :], poly[:-1])[0]:
                return True
        return False


def magnetic_field(fld: FluxField, mesh: Mesh | None = None) -> FieldSample:
    """(B_r, B_z) = (1/r)(-dpsi/dz, dpsi/dr) per triangle.

    P1 gradients are constant per triangle; the 1/r factor is evaluated at
    the triangle centroid.
    """
    mesh = mesh or fld.mesh
    grads, _ = triangle_gradients(mesh)
    g = np.einsum("mij,mi->mj", grads, fld.values[mesh.triangles])
    r_c = mesh.nodes[mesh.triangles][:, :, 0].mean(axis=1)
    return FieldSample(-g[:, 1] / r_c, g[:, 0] / r_c)


def extract_isoline(fld: FluxField, level: float,
                    mesh: Mesh | None = None) -> Isoline:
    """Marching triangles with exact per-edge linear interpolation.

    A level hitting a nodal value exactly is perturbed upward by
    1e-12 * (flux range) to avoid degenerate crossings.  Crossing points are
    computed once per mesh edge, so shared endpoints match bit-exactly and
    segments chain into polylines without tolerance games.
    """
    mesh = mesh or fld.mesh
    values = fld.values
    vmin, vmax = float(values.min()), float(values.max())
    if not (vmin <= level <= vmax):
        raise EmptyIsolineError(
            f"level {level} outside field range [{vmin}, {vmax}]")
    rng = max(vmax - vmin, 1e-300)
    lev = float(level)
    while np.any(values == lev):
        lev += 1e-12 * rng

    tri = mesh.triangles
    below = values[tri] < lev                     # (M, 3) strict by construction
    crossed_tris = np.flatnonzero(below.any(axis=1) & (~below).any(axis=1))

    edge_point: dict[tuple[int, int], np.ndarray] = {}
    edge_ids: dict[tuple[int, int], int] = {}

    def crossing(a: int, b: int):
        key = (a, b) if a < b else (b, a)
        if key not in edge_point:
            va, vb = values[key[0]], values[key[1]]
            t = (lev - va) / (vb - va)
            edge_point[key] = (1.0 - t) * mesh.nodes[key[0]] + t * mesh.nodes[key[1]]
            edge_ids[key] = len(edge_ids)
        return key

    segments = []
    seg_edges = []
    for ti in crossed_tris:
        a, b, c = tri[ti]
        cut = []
        for (p, q) in ((a, b), (b, c), (c, a)):
            if (values[p] < lev) != (values[q] < lev):
                cut.append(crossing(p, q))
        if len(cut) == 2:
            segments.append((edge_point[cut[0]].copy(), edge_point[cut[1]].copy()))
            seg_edges.append((cut[0], cut[1]))

    iso = Isoline(level=float(level), segments=segments)
    _chain(iso, seg_edges, edge_point, edge_ids, mesh)
    return iso


def _chain(iso: Isoline, seg_edges, edge_point, edge_ids, mesh: Mesh) -> None:
    """Chain segments into polylines via shared crossed mesh edges."""
    if not seg_edges:
        return
    adjacency: dict[tuple, list[int]] = {}
    for si, (ea, eb) in enumerate(seg_edges):
        adjacency.setdefault(ea, []).append(si)
        adjacency.setdefault(eb, []).append(si)

    boundary_keys = {(int(min(a, b)), int(max(a, b))): lab
                     for (a, b), lab in zip(mesh.boundary_edges, mesh.boundary_labels)}
    seen = [False] * len(seg_edges)

    def walk(start_edge):
        path = [start_edge]
        cur = start_edge
        while True:
            nxt_seg = [s for s in adjacency[cur] if not seen[s]]
            if not nxt_seg:
                return path, False
            s = nxt_seg[0]
            seen[s] = True
            ea, eb = seg_edges[s]
            cur = eb if ea == cur else ea
            if cur == start_edge:
                return path, True
            path.append(cur)

    # open chains first: start from crossed edges used once (contour endpoints)
    degree = {k: len(v) for k, v in adjacency.items()}
    touches_outer = False
    for start in sorted((k for k, d in degree.items() if d == 1),
                        key=lambda k: edge_ids[k]):
        if all(seen[s] for s in adjacency[start]):
            continue
        path, _ = walk(start)
        pts = np.array([edge_point[e] for e in path])
        iso.polylines.append(pts)
        iso.polyline_closed.append(False)
        for endpoint in (path[0], path[-1]):
            if boundary_keys.get(endpoint) == OUTER:
                touches_outer = True
    for start in sorted(adjacency, key=lambda k: edge_ids[k]):
        if all(seen[s] for s in adjacency[start]):
            continue
        path, is_closed = walk(start)
        pts = np.array([edge_point[e] for e in path])
        if is_closed:
            pts = np.vstack([pts, pts[:1]])
        iso.polylines.append(pts)
        iso.polyline_closed.append(bool(is_closed))
        if not is_closed:
            for endpoint in (path[0], path[-1]):
                if boundary_keys.get(endpoint) == OUTER:
                    touches_outer = True
    iso.closed = all(iso.polyline_closed) and bool(iso.polylines)
    iso.inside_domain = not touches_outer


# ---------------------------------------------------------------------------
# plasma boundary search
# ---------------------------------------------------------------------------

class _RegionClassifier:
    """Classify the inner-attached region of {psi > level} on the triangle graph.

    Two triangles are connected when their shared edge carries values above
    the level somewhere (max endpoint value > level), which is exactly the
    connectivity of the P1 superlevel set.  States:

      'empty'  - no inner-boundary edge reaches above the level;
      'closed' - the attached region exists and avoids the outer boundary;
      'open'   - the attached region touches the outer boundary.
    """

    def __init__(self, mesh: Mesh, values: np.ndarray):
        self.values = values
        tri = mesh.triangles
        owners: dict[tuple[int, int], list[int]] = {}
        for ti, (a, b, c) in enumerate(tri):
            for p, q in ((a, b), (b, c), (c, a)):
                key = (int(min(p, q)), int(max(p, q)))
                owners.setdefault(key, []).append(ti)
        inter = [(k, o) for k, o in owners.items() if len(o) == 2]
        self.edge_nodes = np.array([k for k, _ in inter], dtype=np.int64)
        self.edge_tris = np.array([o for _, o in inter], dtype=np.int64)

        def boundary_rows(label):
            mask = mesh.boundary_labels == label
            rows = []
            for a, b in mesh.boundary_edges[mask]:
                key = (int(min(a, b)), int(max(a, b)))
                rows.append((key[0], key[1], owners[key][0]))
            return np.array(rows, dtype=np.int64).reshape(-1, 3)

        self.inner_rows = boundary_rows(INNER)
        self.outer_rows = boundary_rows(OUTER)
        self.n_tris = len(tri)

    def state(self, level: float) -> str:
        v = self.values
        seeds = self.inner_rows[
            np.maximum(v[self.inner_rows[:, 0]], v[self.inner_rows[:, 1]]) > level, 2]
        if len(seeds) == 0:
            return "empty"
        emax = np.maximum(v[self.edge_nodes[:, 0]], v[self.edge_nodes[:, 1]])
        open_edges = self.edge_tris[emax > level]
        graph = coo_matrix(
            (np.ones(len(open_edges)), (open_edges[:, 0], open_edges[:, 1])),
            shape=(self.n_tris, self.n_tris))
        _, labels = connected_components(graph, directed=False)
        region = np.zeros(self.n_tris, dtype=bool)
        region[np.isin(labels, np.unique(labels[seeds]))] = True
        wall = self.outer_rows[
            np.maximum(v[self.outer_rows[:, 0]], v[self.outer_rows[:, 1]]) > level, 2]
        return "open" if region[wall].any() else "closed"


def find_plasma_boundary(fld: FluxField, mesh: Mesh | None = None,
                         limiter: np.ndarray | None = None,
                         tol_factor: float = 1e-6):
    """Plasma boundary flux value and its isoline.

    Without a limiter, bisects between the boundary trace extremes for the
    topological transition at which the inner-attached flux region changes
    from closed inside the domain to escaping through the outer wall (the
    X-point level).  With a limiter polyline, the boundary value is the
    extremal flux sampled along the limiter whose isoline is still closed
    around the inner boundary.

    Returns (psi_p, Isoline, mode) with mode 'xpoint' or 'limiter'.  Raises
    NoTransitionError when the closed state never occurs (every level's
    contour escapes), meaning no X-point exists in the domain.
    """
    mesh = mesh or fld.mesh
    b = mesh.boundary
    inner_trace = fld.values[b.inner_nodes]
    outer_trace = fld.values[b.outer_nodes]
    if len(inner_trace) == 0:
        raise ValueError("plasma boundary search requires an inner boundary")

    # plasma side: the inner boundary carries the extreme flux; work in a
    # sign convention where the plasma side is high
    sign = 1.0 if inner_trace.mean() >= outer_trace.mean() else -1.0
    values = sign * fld.values
    cls = _RegionClassifier(mesh, values)
    rng = float(values.max() - values.min())
    tol = tol_factor * rng

    if limiter is not None:
        psi_lim = sign * _sample_field(fld, mesh, np.asarray(limiter, dtype=float))
        level = float(psi_lim.max())
        if cls.state(level + 1e-9 * rng) != "closed":
            raise NoTransitionError(
                "no closed flux surface encircling the inner boundary "
                "inside the limiter")
        iso = extract_isoline(fld, sign * (level + 1e-9 * rng), mesh)
        return sign * level, iso, "limiter"

    hi = float((sign * inner_trace).max())
    lo = float((sign * outer_trace).min())
    state_lo = cls.state(lo)
    if state_lo != "open":
        raise NoTransitionError(
            f"contours never escape through the outer wall (state {state_lo!r} "
            "at the wall extreme); no X-point in the domain")

    # levels sweep monotonically through empty -> closed -> open as they
    # drop; locate the top of the non-empty range, then check whether a
    # closed band exists at all
    lo_e, hi_e = lo, hi
    while hi_e - lo_e > tol:
        mid = 0.5 * (lo_e + hi_e)
        if cls.state(mid) == "empty":
            hi_e = mid
        else:
            lo_e = mid
    found = lo_e
    if cls.state(found) != "closed":
        raise NoTransitionError(
            "the inner-attached flux region is never closed: contours are "
            "open at every level; no X-point in the domain")

    lo_b, hi_b = lo, found
    while hi_b - lo_b > tol:
        mid = 0.5 * (lo_b + hi_b)
        if cls.state(mid) == "closed":
            hi_b = mid
        else:
            lo_b = mid
    psi_p = 0.5 * (lo_b + hi_b)
    if cls.state(hi_b) != "closed" or (lo_b > lo and cls.state(lo_b) == "closed"):
        raise NoTransitionError("classifier is not monotone across the bracket")

    iso = extract_isoline(fld, sign * (psi_p + 2.0 * tol), mesh)
    return sign * psi_p, iso, "xpoint"


def _sample_field(fld: FluxField, mesh: Mesh, polyline: np.ndarray) -> np.ndarray:
    """P1 field values at points of a polyline (subdivided per segment).

    Points inside the inner hole are skipped; points outside the outer
    boundary raise.
    """
    h = mesh.max_edge_length
    samples = []
    closed = np.vstack([polyline, polyline[:1]])
    for a, b in zip(closed[:-1], closed[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / (0.5 * h))))
        for k in range(n):
            samples.append(a + (k / n) * (b - a))
    pts = np.asarray(samples)

    bidx = mesh.boundary
    outer_loop = mesh.nodes[bidx.outer_nodes]
    if not points_in_polygon(pts, outer_loop).all():
        raise ValueError("limiter leaves the outer boundary")
    if len(bidx.inner_nodes):
        in_hole = points_in_polygon(pts, mesh.nodes[bidx.inner_nodes])
        pts = pts[~in_hole]
    if len(pts) == 0:
        raise ValueError("limiter lies entirely inside the plasma hole")

    tri_pts = mesh.nodes[mesh.triangles]            # (M, 3, 2)
    v0 = tri_pts[:, 0]
    d1 = tri_pts[:, 1] - v0
    d2 = tri_pts[:, 2] - v0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    out = np.empty(len(pts))
    for i, p in enumerate(pts):
        rel = p - v0
        l1 = (rel[:, 0] * d2[:, 1] - rel[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * rel[:, 1] - d1[:, 1] * rel[:, 0]) / det
        ok = (l1 >= -1e-12) & (l2 >= -1e-12) & (l1 + l2 <= 1.0 + 1e-12)
        cand = np.flatnonzero(ok)
        if len(cand) == 0:
            raise ValueError(f"limiter point {p} is outside the mesh")
        t = cand[0]
        vals = fld.values[mesh.triangles[t]]
        out[i] = vals[0] * (1 - l1[t] - l2[t]) + vals[1] * l1[t] + vals[2] * l2[t]
    return out
