"""Conforming 2D triangulations with the vertex-star geometry used by the shock detector.

A mesh knows, for every vertex, the set of neighbouring vertices sharing a
macroelement (the union of incident triangles) and, once computed, the
"opposite" point where the line through a neighbour exits the macroelement
boundary on the far side of the vertex.  That opposite point is what the
two-sided gradient jump of the shock detector samples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

# Distance (relative to the local segment length) below which a ray hit is
# snapped onto a macroelement corner.  Deterministic tie-breaking.
CORNER_SNAP_REL = 1e-10


@dataclass(frozen=True)
class SymNodeReport:
    """Bookkeeping from the opposite-node construction (never silent)."""

    n_total: int = 0
    n_absent: int = 0
    snapped_pairs: tuple = ()
    absent_pairs: tuple = ()


class TriMesh:
    """Immutable conforming triangulation of a polygonal domain.

    Parameters
    ----------
    vertices : (V, 2) float array
    triangles : (T, 3) int array
        Vertex index triples.  Reordered to positive (CCW) orientation.
    """

    def __init__(self, vertices, triangles):
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise ValueError("vertices must be an (V, 2) array")
        if triangles.ndim != 2 or triangles.shape[1] != 3:
            raise ValueError("triangles must be a (T, 3) array")
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise ValueError("triangle vertex index out of range")
        if np.any(
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 0] == triangles[:, 2])
        ):
            raise ValueError("triangle with a repeated vertex")

        # Consistent orientation: flip any clockwise triangle.
        a = vertices[triangles[:, 0]]
        b = vertices[triangles[:, 1]]
        c = vertices[triangles[:, 2]]
        signed = 0.5 * np.cross(b - a, c - a)
        flip = signed < 0
        if np.any(flip):
            triangles = triangles.copy()
            triangles[flip, 1], triangles[flip, 2] = (
                triangles[flip, 2].copy(),
                triangles[flip, 1].copy(),
            )
            signed = np.abs(signed)
        if np.any(signed <= 0.0):
            raise ValueError("degenerate (zero-area) triangle")

        self.vertices = vertices
        self.triangles = triangles
        self.areas = signed

        self._build_topology()

        # Opposite-node data filled in by compute_symmetric_nodes.
        self.sym_report: SymNodeReport | None = None
        self._sym_present = None  # (2, E) bool, directed: row 0 = i->, row 1 = j->
        self._sym_seg = None      # (2, E, 2) int, interpolation segment endpoints
        self._sym_s = None        # (2, E) float, position on the segment
        self._sym_len = None      # (2, E) float, |opposite point - base vertex|

        for arr in (self.vertices, self.triangles, self.areas, self.pairs,
                    self.edge_lengths):
            arr.setflags(write=False)

    # ------------------------------------------------------------------
    # topology
    # ------------------------------------------------------------------
    def _build_topology(self):
        tris = self.triangles
        V = len(self.vertices)

        # Unordered adjacency pairs (i < j), one entry per mesh edge.
        raw = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [0, 2]]])
        raw.sort(axis=1)
        pairs, inverse, counts = np.unique(
            raw, axis=0, return_inverse=True, return_counts=True
        )
        if np.any(counts > 2):
            raise ValueError("non-conforming mesh: an edge is shared by >2 triangles")
        self.pairs = pairs
        self.n_pairs = len(pairs)
        # local pair order above: (0,1), (1,2), (0,2) blocks of T
        T = len(tris)
        self.tri_pairs = np.column_stack(
            [inverse[:T], inverse[T : 2 * T], inverse[2 * T :]]
        )

        boundary_edge = counts == 1
        self.boundary_pairs = np.flatnonzero(boundary_edge)
        is_boundary = np.zeros(V, dtype=bool)
        is_boundary[pairs[boundary_edge].ravel()] = True
        self.is_boundary_vertex = is_boundary
        self.boundary_vertices = np.flatnonzero(is_boundary)

        used = np.zeros(V, dtype=bool)
        used[tris.ravel()] = True
        if not used.all():
            raise ValueError("isolated vertex not referenced by any triangle")

        # vertex -> incident triangles (macroelements), CSR layout
        order = np.argsort(tris.ravel(), kind="stable")
        vert_of_slot = tris.ravel()[order]
        tri_of_slot = np.repeat(np.arange(T), 3)[order]
        starts = np.searchsorted(vert_of_slot, np.arange(V + 1))
        self._macro_ptr = starts
        self._macro_tri = tri_of_slot

        # vertex -> adjacency pairs, CSR layout over directed copies
        directed = np.concatenate([pairs[:, 0], pairs[:, 1]])
        pair_id = np.concatenate([np.arange(self.n_pairs)] * 2)
        order = np.argsort(directed, kind="stable")
        self._adj_ptr = np.searchsorted(directed[order], np.arange(V + 1))
        self._adj_pair = pair_id[order]
        self._adj_other = np.where(
            directed[order] == pairs[self._adj_pair, 0],
            pairs[self._adj_pair, 1],
            pairs[self._adj_pair, 0],
        )

        d = self.vertices[pairs[:, 1]] - self.vertices[pairs[:, 0]]
        self.edge_lengths = np.hypot(d[:, 0], d[:, 1])
        self.h_max = float(self.edge_lengths.max()) if self.n_pairs else 0.0

        self.interior_angles_ok = True  # set by audits, informational only

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def adjacency(self, i):
        """Vertex indices sharing a macroelement with vertex ``i``."""
        s, e = self._adj_ptr[i], self._adj_ptr[i + 1]
        return self._adj_other[s:e]

    def vertex_pairs(self, i):
        """Adjacency-pair indices incident to vertex ``i``."""
        s, e = self._adj_ptr[i], self._adj_ptr[i + 1]
        return self._adj_pair[s:e]

    def macroelement(self, i):
        """Indices of triangles incident to vertex ``i``."""
        s, e = self._macro_ptr[i], self._macro_ptr[i + 1]
        return self._macro_tri[s:e]

    def total_area(self):
        return float(self.areas.sum())

    def has_symmetric_nodes(self):
        return self._sym_present is not None

    def symmetric_node(self, i, j):
        """Opposite point for the ordered pair ``(i, j)`` or ``None`` if absent.

        Returns ``(point, (v1, v2), s)`` where the P1 value there is
        ``(1-s)*f[v1] + s*f[v2]``.
        """
        if not self.has_symmetric_nodes():
            raise RuntimeError("symmetric nodes not computed")
        e, side = self._pair_side(i, j)
        if not self._sym_present[side, e]:
            return None
        v1, v2 = self._sym_seg[side, e]
        s = self._sym_s[side, e]
        point = (1.0 - s) * self.vertices[v1] + s * self.vertices[v2]
        return point, (int(v1), int(v2)), float(s)

    def _pair_side(self, i, j):
        if i == j:
            raise ValueError("i == j has no adjacency pair")
        a, b = (i, j) if i < j else (j, i)
        cand = self.vertex_pairs(a)
        mask = (self.pairs[cand, 0] == a) & (self.pairs[cand, 1] == b)
        if not mask.any():
            raise ValueError(f"vertices {i} and {j} are not adjacent")
        e = int(cand[np.argmax(mask)])
        side = 0 if i == self.pairs[e, 0] else 1
        return e, side


# ----------------------------------------------------------------------
# generation
# ----------------------------------------------------------------------
def generate_disc_mesh(center, radius, target_h):
    """Triangulate a polygonal approximation of the disc B(center; radius).

    Concentric rings of vertices (6j points on ring j) joined ring-to-ring by
    an angular sweep.  Boundary vertices are equally spaced on the circle, so
    the polygon is convex with all interior angles equal.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if not (0 < target_h <= radius):
        raise ValueError("target_h must lie in (0, radius]")
    n_rings = int(np.ceil(radius / target_h))
    if 6 * n_rings < 3:
        raise ValueError("target_h yields fewer than 3 boundary segments")
    cx, cy = float(center[0]), float(center[1])

    verts = [(cx, cy)]
    ring_start = [0, 1]
    for j in range(1, n_rings + 1):
        r = radius * j / n_rings
        n = 6 * j
        theta = 2.0 * np.pi * np.arange(n) / n
        ring = np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])
        verts.append(ring)
        ring_start.append(ring_start[-1] + n)
    vertices = np.vstack([np.array(verts[0])[None, :]] + verts[1:])

    tris = []
    # innermost fan around the centre
    for t in range(6):
        tris.append((0, 1 + t, 1 + (t + 1) % 6))
    # annulus sweep between ring j (inner) and ring j+1 (outer)
    for j in range(1, n_rings):
        n_in, n_out = 6 * j, 6 * (j + 1)
        s_in, s_out = ring_start[j], ring_start[j + 1]
        i = o = 0
        while i < n_in or o < n_out:
            ang_i = (i + 1) / n_in if i < n_in else np.inf
            ang_o = (o + 1) / n_out if o < n_out else np.inf
            vi = s_in + i % n_in
            vo = s_out + o % n_out
            if ang_o < ang_i:
                tris.append((vi, vo, s_out + (o + 1) % n_out))
                o += 1
            else:
                tris.append((vi, vo, s_in + (i + 1) % n_in))
                i += 1
    mesh = TriMesh(vertices, np.array(tris))

    bnd = mesh.vertices[mesh.boundary_vertices]
    err = np.abs(np.hypot(bnd[:, 0] - cx, bnd[:, 1] - cy) - radius)
    if err.max() > 1e-12 * radius:
        raise AssertionError("boundary vertex off the circle")
    if mesh.h_max > 1.5 * target_h:
        raise AssertionError("max edge length exceeds 1.5 * target_h")
    return mesh


# ----------------------------------------------------------------------
# symmetric (opposite) nodes
# ----------------------------------------------------------------------
def compute_symmetric_nodes(mesh: TriMesh) -> TriMesh:
    """Attach the opposite-node data to ``mesh`` (returns a new TriMesh).

    For each ordered adjacent pair (i, j) the opposite node is where the ray
    from ``a_i`` pointing away from ``a_j`` crosses the macroelement boundary
    of ``a_i``.  At boundary vertices the ray may leave the domain without
    crossing; those entries are marked absent and counted.
    """
    out = TriMesh(mesh.vertices, mesh.triangles)
    E = out.n_pairs
    present = np.zeros((2, E), dtype=bool)
    seg = np.zeros((2, E, 2), dtype=np.int64)
    s_par = np.zeros((2, E), dtype=np.float64)
    length = np.zeros((2, E), dtype=np.float64)
    snapped = []
    absent = []

    verts = out.vertices
    tris = out.triangles
    for e in range(E):
        for side in range(2):
            i = int(out.pairs[e, side])
            j = int(out.pairs[e, 1 - side])
            hit = _shoot_ray(out, verts, tris, i, j)
            if hit is None:
                absent.append((i, j))
                continue
            v1, v2, s, t, was_snapped = hit
            present[side, e] = True
            seg[side, e] = (v1, v2)
            s_par[side, e] = s
            length[side, e] = t
            if was_snapped:
                snapped.append((i, j))

    if snapped:
        log.info("opposite-node construction snapped %d ray-corner hits", len(snapped))
    if absent:
        log.info("opposite-node construction: %d boundary-pair entries absent", len(absent))

    out.sym_report = SymNodeReport(
        n_total=2 * E,
        n_absent=len(absent),
        snapped_pairs=tuple(snapped),
        absent_pairs=tuple(absent),
    )
    out._sym_present = present
    out._sym_seg = seg
    out._sym_s = s_par
    out._sym_len = length
    return out


def _shoot_ray(mesh, verts, tris, i, j):
    """Intersect the ray from vertex i away from vertex j with the star boundary.

    Returns (v1, v2, s, t, snapped) or None; t is the distance from a_i.
    """
    ai = verts[i]
    d = ai - verts[j]
    d = d / np.hypot(d[0], d[1])
    best = None
    for tid in mesh.macroelement(i):
        tri = tris[tid]
        loc = [v for v in tri if v != i]
        p, q = verts[loc[0]], verts[loc[1]]
        pq = q - p
        denom = d[0] * (-pq[1]) - d[1] * (-pq[0])
        if abs(denom) < 1e-300:
            continue  # ray parallel to the segment
        rhs = p - ai
        t = (rhs[0] * (-pq[1]) - rhs[1] * (-pq[0])) / denom
        s = (d[0] * rhs[1] - d[1] * rhs[0]) / denom
        if t <= 1e-12 * mesh.h_max:
            continue
        if -1e-9 <= s <= 1.0 + 1e-9:
            s = min(max(s, 0.0), 1.0)
            if best is None or t < best[3]:
                best = [loc[0], loc[1], s, t, False]
    if best is None:
        # Boundary vertex whose star lies on one side: the ray may run along a
        # boundary edge incident to a_i.  Detect collinear exits.
        for nb in mesh.adjacency(i):
            r = verts[nb] - ai
            rn = np.hypot(r[0], r[1])
            if abs(np.cross(r, d)) <= 1e-12 * rn and np.dot(r, d) > 0:
                return int(nb), int(nb), 0.0, rn, False
        return None
    v1, v2, s, t, _ = best
    p, q = verts[v1], verts[v2]
    seg_len = np.hypot(*(q - p))
    if s * seg_len <= CORNER_SNAP_REL * mesh.h_max:
        s, snapped = 0.0, True
    elif (1.0 - s) * seg_len <= CORNER_SNAP_REL * mesh.h_max:
        s, snapped = 1.0, True
    else:
        snapped = False
    point = (1.0 - s) * p + s * q
    t = float(np.hypot(*(point - ai)))
    return int(v1), int(v2), float(s), t, snapped


# ----------------------------------------------------------------------
# audits
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class AcutenessReport:
    passed: bool
    offenders: tuple  # (i, j, stiffness off-diagonal value)


def check_weak_acuteness(mesh: TriMesh, tol: float = 1e-14) -> AcutenessReport:
    """Audit the sign condition for the P1 stiffness off-diagonal entries.

    A mesh is weakly acute when every assembled off-diagonal entry of the
    stiffness matrix is nonpositive (equivalently, the two angles opposite
    each interior edge sum to at most pi).
    """
    values = np.zeros(mesh.n_pairs)
    verts = mesh.vertices
    for tid, tri in enumerate(mesh.triangles):
        p = verts[tri]
        g = _p1_gradients(p)
        area = mesh.areas[tid]
        for k, (a, b) in enumerate(((0, 1), (1, 2), (0, 2))):
            values[mesh.tri_pairs[tid, k]] += area * float(g[a] @ g[b])
    scale = max(1.0, float(np.abs(values).max())) if mesh.n_pairs else 1.0
    bad = np.flatnonzero(values > tol * scale)
    offenders = tuple(
        (int(mesh.pairs[e, 0]), int(mesh.pairs[e, 1]), float(values[e])) for e in bad
    )
    return AcutenessReport(passed=len(offenders) == 0, offenders=offenders)


def _p1_gradients(p):
    """Gradients of the three nodal basis functions on triangle p (3x2)."""
    mat = np.array(
        [
            [p[1, 1] - p[2, 1], p[2, 0] - p[1, 0]],
            [p[2, 1] - p[0, 1], p[0, 0] - p[2, 0]],
            [p[0, 1] - p[1, 1], p[1, 0] - p[0, 0]],
        ]
    )
    det = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[2, 0] - p[0, 0]) * (
        p[1, 1] - p[0, 1]
    )
    return mat / det


def audit_conformity(mesh: TriMesh) -> bool:
    """Exhaustive pairwise intersection trichotomy (meant for small meshes).

    Any two distinct closed triangles must meet in nothing, a shared vertex,
    or a shared full edge.
    """
    from itertools import combinations

    verts = mesh.vertices
    tris = mesh.triangles
    for t1, t2 in combinations(range(len(tris)), 2):
        shared = set(tris[t1]) & set(tris[t2])
        if len(shared) >= 3:
            return False
        if not _intersection_matches(verts, tris[t1], tris[t2], shared):
            return False
    return True


def _intersection_matches(verts, tri1, tri2, shared):
    import itertools

    p1 = verts[tri1]
    p2 = verts[tri2]

    def seg_hits(a, b, c, d):
        # proper interior crossing of segments ab and cd
        d1 = np.cross(b - a, c - a)
        d2 = np.cross(b - a, d - a)
        d3 = np.cross(d - c, a - c)
        d4 = np.cross(d - c, b - c)
        eps = 1e-14 * max(np.abs([d1, d2, d3, d4]).max(), 1e-300)
        return (d1 * d2 < -eps) and (d3 * d4 < -eps)

    def point_strictly_inside(p, q):
        s1 = np.cross(q[1] - q[0], p - q[0])
        s2 = np.cross(q[2] - q[1], p - q[1])
        s3 = np.cross(q[0] - q[2], p - q[2])
        eps = 1e-14
        return (s1 > eps and s2 > eps and s3 > eps)

    edges1 = [(p1[a], p1[b]) for a, b in ((0, 1), (1, 2), (2, 0))]
    edges2 = [(p2[a], p2[b]) for a, b in ((0, 1), (1, 2), (2, 0))]
    for (a, b), (c, d) in itertools.product(edges1, edges2):
        if seg_hits(a, b, c, d):
            return False
    for k in range(3):
        if point_strictly_inside(p1[k], p2) or point_strictly_inside(p2[k], p1):
            return False
    if len(shared) == 2:
        # must be a full shared edge in both
        s = sorted(shared)
        e1 = {tuple(sorted(e)) for e in (tri1[[0, 1]], tri1[[1, 2]], tri1[[0, 2]])}
        e2 = {tuple(sorted(e)) for e in (tri2[[0, 1]], tri2[[1, 2]], tri2[[0, 2]])}
        if (s[0], s[1]) not in e1 or (s[0], s[1]) not in e2:
            return False
    return True


def check_angle_sums(mesh: TriMesh, tol: float = 1e-12):
    """Brute-force angle-sum variant of the acuteness audit (test oracle).

    Returns the list of interior pairs whose two opposite angles sum to more
    than pi + tol.
    """
    verts = mesh.vertices
    opp_angles = {}
    for tid, tri in enumerate(mesh.triangles):
        for k, (a, b) in enumerate(((0, 1), (1, 2), (0, 2))):
            e = mesh.tri_pairs[tid, k]
            other = [v for v in tri if v not in (tri[a], tri[b])][0]
            u = verts[tri[a]] - verts[other]
            w = verts[tri[b]] - verts[other]
            ang = np.arccos(
                np.clip((u @ w) / (np.hypot(*u) * np.hypot(*w)), -1.0, 1.0)
            )
            opp_angles.setdefault(e, []).append(ang)
    bad = []
    for e, angs in opp_angles.items():
        if len(angs) == 2 and angs[0] + angs[1] > np.pi + tol:
            bad.append((int(mesh.pairs[e, 0]), int(mesh.pairs[e, 1])))
    return bad


# ----------------------------------------------------------------------
# refinement
# ----------------------------------------------------------------------
def refine_region(mesh: TriMesh, inside, max_passes: int = 50) -> TriMesh:
    """Red refinement of triangles whose barycenter satisfies ``inside``.

    Hanging nodes are removed by closure: triangles acquiring two or three
    split edges are refined red as well, a single split edge is closed green
    (bisection).  Fails if the closure does not settle within ``max_passes``.
    """
    tris = mesh.triangles
    bary = mesh.vertices[tris].mean(axis=1)
    marked = np.array([bool(inside(p)) for p in bary])
    if not marked.any():
        return TriMesh(mesh.vertices, mesh.triangles)

    red = marked.copy()
    # propagate: a triangle with >= 2 split edges goes red
    for _ in range(max_passes):
        split_pair = np.zeros(mesh.n_pairs, dtype=bool)
        for tid in np.flatnonzero(red):
            split_pair[mesh.tri_pairs[tid]] = True
        n_split = split_pair[mesh.tri_pairs].sum(axis=1)
        grow = (~red) & (n_split >= 2)
        if not grow.any():
            break
        red |= grow
    else:
        raise RuntimeError("red-green closure did not terminate")

    verts = [mesh.vertices]
    next_vid = mesh.n_vertices
    midpoint = {}

    def mid(a, b):
        nonlocal next_vid
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            midpoint[key] = next_vid
            verts.append(((mesh.vertices[a] + mesh.vertices[b]) / 2.0)[None, :])
            next_vid += 1
        return midpoint[key]

    new_tris = []
    for tid, tri in enumerate(tris):
        a, b, c = (int(v) for v in tri)
        if red[tid]:
            mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
            new_tris += [(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)]
        else:
            split = [
                (pair, e)
                for pair, e in zip(
                    ((a, b), (b, c), (a, c)), mesh.tri_pairs[tid]
                )
                if split_pair[e]
            ]
            if not split:
                new_tris.append((a, b, c))
            else:
                # exactly one split edge after closure: green bisection
                (u, v), _ = split[0]
                w = ({a, b, c} - {u, v}).pop()
                m = mid(u, v)
                new_tris += [(u, m, w), (m, v, w)]
    out = TriMesh(np.vstack(verts), np.array(new_tris))
    if count_hanging_nodes(out) != 0:
        raise RuntimeError("refinement left hanging nodes")
    return out


def count_hanging_nodes(mesh: TriMesh) -> int:
    """Vertices lying strictly inside an edge of some triangle they do not span."""
    count = 0
    verts = mesh.vertices
    for e in range(mesh.n_pairs):
        a, b = mesh.pairs[e]
        pa, pb = verts[a], verts[b]
        mid = (pa + pb) / 2.0
        d2 = np.sum((verts - mid) ** 2, axis=1)
        near = np.flatnonzero(d2 <= (1e-12 * mesh.h_max) ** 2)
        for v in near:
            if v != a and v != b:
                count += 1
    return count


# ----------------------------------------------------------------------
# file format
# ----------------------------------------------------------------------
def save_mesh(mesh: TriMesh, path):
    """Write the line-oriented ASCII mesh format (17 significant digits)."""
    lines = ["trimesh 1", f"vertices {mesh.n_vertices}"]
    for v, flag in zip(mesh.vertices, mesh.is_boundary_vertex):
        lines.append(f"{v[0]:.17g} {v[1]:.17g} {1 if flag else 0}")
    lines.append(f"triangles {mesh.n_triangles}")
    for t in mesh.triangles:
        lines.append(f"{t[0]} {t[1]} {t[2]}")
    _atomic_write(path, "\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh]
    if not lines or lines[0] != "trimesh 1":
        raise ValueError(f"{path}: not a 'trimesh 1' file")
    k = 1
    if not lines[k].startswith("vertices "):
        raise ValueError(f"{path}:{k+1}: expected 'vertices N'")
    nv = int(lines[k].split()[1])
    verts = np.empty((nv, 2))
    flags = np.empty(nv, dtype=bool)
    for r in range(nv):
        parts = lines[k + 1 + r].split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{k+2+r}: expected 'x y boundary_flag'")
        verts[r] = (float(parts[0]), float(parts[1]))
        flags[r] = parts[2] == "1"
    k += 1 + nv
    if not lines[k].startswith("triangles "):
        raise ValueError(f"{path}:{k+1}: expected 'triangles M'")
    nt = int(lines[k].split()[1])
    tris = np.empty((nt, 3), dtype=np.int64)
    for r in range(nt):
        tris[r] = [int(x) for x in lines[k + 1 + r].split()]
    mesh = TriMesh(verts, tris)
    if not np.array_equal(mesh.is_boundary_vertex, flags):
        raise ValueError(f"{path}: stored boundary flags disagree with topology")
    return mesh


def _atomic_write(path, text):
    import os
    import tempfile

    path = str(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", text=True)
    try:
        with os.fdopen(fd, "w", encoding="ascii") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
