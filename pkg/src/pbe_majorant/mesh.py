"""Conforming triangle meshes with region/interface bookkeeping.

Triangles are stored counterclockwise and the refinement edge of every
triangle is the edge between its local vertices 0 and 1 (vertex 2 is the
"newest" vertex).  This convention makes newest-vertex bisection a pure
index manipulation and lets the text format carry the refinement edge
without an extra column.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

OMEGA1 = 1
OMEGA2 = 2


class MeshError(ValueError):
    """Invalid mesh input or geometry."""


class MeshFormatError(MeshError):
    """Malformed mesh file; carries the offending line and field."""

    def __init__(self, line: int, field_name: str, message: str):
        super().__init__(f"line {line}: {field_name}: {message}")
        self.line = line
        self.field = field_name


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming triangulation.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise, refinement edge (t0, t1)
    regions : (nt,) int array with values OMEGA1 / OMEGA2
    boundary_edges : (nb, 2) int array of edges on the outer boundary
    boundary_markers : (nb,) int array
    interface_edges : (ni, 2) int array of edges shared by different regions
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary_edges: np.ndarray
    boundary_markers: np.ndarray
    interface_edges: np.ndarray

    @classmethod
    def from_arrays(cls, vertices, triangles, regions=None, boundary_markers=None,
                    interface_edges=None, boundary_edges=None) -> "Mesh":
        """Build a mesh, fixing orientation and deriving missing edge sets."""
        vertices = np.ascontiguousarray(vertices, dtype=float).reshape(-1, 2)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3).copy()
        if len(triangles) == 0:
            raise MeshError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            bad = int(np.flatnonzero((triangles < 0).any(1) | (triangles >= len(vertices)).any(1))[0])
            raise MeshError(f"triangle {bad} references a missing vertex")
        area = _signed_areas(vertices, triangles)
        flip = area < 0
        # swapping t0 and t1 keeps the refinement edge and restores CCW order
        triangles[flip, 0], triangles[flip, 1] = triangles[flip, 1], triangles[flip, 0].copy()
        if regions is None:
            regions = np.full(len(triangles), OMEGA2, dtype=np.int64)
        regions = np.asarray(regions, dtype=np.int64).copy()
        mesh = cls(vertices, triangles, regions, np.zeros((0, 2), np.int64),
                   np.zeros(0, np.int64), np.zeros((0, 2), np.int64))
        if boundary_edges is None:
            boundary_edges = mesh.edges[mesh.edge_triangle_count == 1]
            markers = np.ones(len(boundary_edges), dtype=np.int64)
            if boundary_markers is not None:
                markers = np.asarray(boundary_markers, dtype=np.int64)
        else:
            boundary_edges = np.sort(np.asarray(boundary_edges, np.int64).reshape(-1, 2), axis=1)
            markers = (np.ones(len(boundary_edges), np.int64) if boundary_markers is None
                       else np.asarray(boundary_markers, np.int64))
        if interface_edges is None:
            interface_edges = mesh._region_jump_edges()
        interface_edges = np.sort(np.asarray(interface_edges, np.int64).reshape(-1, 2), axis=1)
        object.__setattr__(mesh, "boundary_edges", boundary_edges)
        object.__setattr__(mesh, "boundary_markers", markers)
        object.__setattr__(mesh, "interface_edges", interface_edges)
        return mesh

    # ------------------------------------------------------------------ sizes
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # --------------------------------------------------------------- geometry
    @cached_property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(nt, 3, 2) vertex coordinates per triangle."""
        return self.vertices[self.triangles]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def grad_hat(self) -> np.ndarray:
        """(nt, 3, 2) constant gradients of the three barycentric functions."""
        p = self.corners
        # grad lambda_k = rot(P_{k+2} - P_{k+1}) / (2|K|), rot(x, y) = (-y, x)
        d = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)
        g = np.stack([-d[..., 1], d[..., 0]], axis=-1)
        return g / (2.0 * self.areas)[:, None, None]

    @cached_property
    def h(self) -> np.ndarray:
        """Longest edge length per triangle."""
        return self.tri_edge_lengths.max(axis=1)

    def barycentric(self, elements: np.ndarray, xy: np.ndarray) -> np.ndarray:
        """Barycentric coordinates of points ``xy`` (n, 2) in ``elements`` (n,)."""
        p = self.corners[elements]
        g = self.grad_hat[elements]
        lam = np.einsum("nkd,nd->nk", g, xy - p[:, 0, :])
        lam[:, 0] += 1.0
        return lam

    # --------------------------------------------------------------- topology
    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge k is opposite local vertex k
        pairs = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        key = np.sort(pairs, axis=1)
        edges, inverse = np.unique(key, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @cached_property
    def edges(self) -> np.ndarray:
        """(ne, 2) global edges with sorted endpoints, lexicographically ordered."""
        return self._edge_data[0]

    @cached_property
    def tri_edges(self) -> np.ndarray:
        """(nt, 3) global edge id of local edge k (opposite local vertex k)."""
        return self._edge_data[1]

    @cached_property
    def tri_edge_signs(self) -> np.ndarray:
        """+1 where the global edge normal points out of the triangle."""
        t = self.triangles
        start = t[:, [1, 2, 0]]
        end = t[:, [2, 0, 1]]
        return np.where(start < end, 1.0, -1.0)

    @cached_property
    def tri_edge_lengths(self) -> np.ndarray:
        p = self.corners
        d = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)
        return np.hypot(d[..., 0], d[..., 1])

    @cached_property
    def edge_triangle_count(self) -> np.ndarray:
        return np.bincount(self.tri_edges.ravel(), minlength=len(self.edges))

    @cached_property
    def edge_triangles(self) -> np.ndarray:
        """(ne, 2) adjacent triangles per edge, -1 where missing."""
        out = np.full((len(self.edges), 2), -1, dtype=np.int64)
        flat = self.tri_edges.ravel()
        tri = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(flat, kind="stable")
        fe, ft = flat[order], tri[order]
        first = np.ones(len(fe), bool)
        first[1:] = fe[1:] != fe[:-1]
        out[fe[first], 0] = ft[first]
        out[fe[~first], 1] = ft[~first]
        return out

    def edge_ids(self, pairs: np.ndarray) -> np.ndarray:
        """Global ids of the given vertex pairs; raises if an edge is absent."""
        pairs = np.sort(np.asarray(pairs, np.int64).reshape(-1, 2), axis=1)
        nv = self.n_vertices
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        q = pairs[:, 0] * nv + pairs[:, 1]
        idx = np.searchsorted(keys, q)
        idx = np.minimum(idx, len(keys) - 1)
        if len(q) and not np.all(keys[idx] == q):
            raise MeshError("edge not present in mesh")
        return idx

    @cached_property
    def boundary_vertex_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, bool)
        mask[self.boundary_edges.ravel()] = True
        return mask

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.edges), bool)
        if len(self.boundary_edges):
            mask[self.edge_ids(self.boundary_edges)] = True
        return mask

    def _region_jump_edges(self) -> np.ndarray:
        et = self.edge_triangles
        inner = et[:, 1] >= 0
        jump = np.zeros(len(self.edges), bool)
        jump[inner] = self.regions[et[inner, 0]] != self.regions[et[inner, 1]]
        return self.edges[jump]

    # ---------------------------------------------------------------- patches
    @cached_property
    def vertex_patch_csr(self):
        """CSR arrays (ptr, elements, local_index) of elements around each vertex."""
        flat = self.triangles.ravel()
        tri = np.repeat(np.arange(self.n_triangles), 3)
        loc = np.tile(np.arange(3), self.n_triangles)
        order = np.lexsort((tri, flat))
        counts = np.bincount(flat, minlength=self.n_vertices)
        ptr = np.concatenate([[0], np.cumsum(counts)])
        return ptr, tri[order], loc[order]

    # ------------------------------------------------------------- validation
    def check(self) -> None:
        """Raise MeshError if any structural invariant is violated."""
        if np.any(self.areas <= 0):
            raise MeshError(f"triangle {int(np.argmin(self.areas))} has non-positive area")
        cnt = self.edge_triangle_count
        if np.any(cnt > 2):
            raise MeshError("edge shared by more than two triangles")
        outer = self.edges[cnt == 1]
        if set(map(tuple, outer)) != set(map(tuple, self.boundary_edges)):
            raise MeshError("boundary edge set inconsistent with connectivity")
        if set(map(tuple, self._region_jump_edges())) != set(map(tuple, self.interface_edges)):
            raise MeshError("interface edges inconsistent with region tags")
        if hanging_vertices(self):
            raise MeshError("mesh has hanging vertices")


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def hanging_vertices(mesh: Mesh, tol: float = 1e-12) -> list[int]:
    """Brute-force search for vertices lying inside single-sided edges."""
    outer = mesh.edges[mesh.edge_triangle_count == 1]
    v = mesh.vertices
    found = []
    for i, j in outer:
        a, b = v[i], v[j]
        ab = b - a
        L2 = ab @ ab
        s = (v - a) @ ab / L2
        cross = (v[:, 0] - a[0]) * ab[1] - (v[:, 1] - a[1]) * ab[0]
        inside = (s > tol) & (s < 1 - tol) & (np.abs(cross) <= tol * L2)
        found.extend(np.flatnonzero(inside).tolist())
    return sorted(set(found))


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _longest_edge_first(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Rotate each triangle so its longest edge is the refinement edge (t0, t1)."""
    p = vertices[triangles]
    d = np.roll(p, -2, axis=1) - np.roll(p, -1, axis=1)
    lengths = np.hypot(d[..., 0], d[..., 1])
    k = np.argmax(lengths, axis=1)
    # longest edge opposite local vertex k -> make that vertex local vertex 2
    shift = (k + 1) % 3
    idx = (np.arange(3)[None, :] + shift[:, None]) % 3
    return np.take_along_axis(triangles, idx, axis=1)


def rectangle(nx: int, ny: int, x0=0.0, x1=1.0, y0=0.0, y1=1.0) -> Mesh:
    """Structured criss-free right-triangle mesh of a rectangle (all Omega_2)."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    # diagonal a-c is the refinement edge of both halves
    tris = np.concatenate([np.column_stack([a, c, d]), np.column_stack([c, a, b])])
    order = np.argsort(np.concatenate([np.arange(len(a)) * 2, np.arange(len(a)) * 2 + 1]))
    return Mesh.from_arrays(verts, tris[order])


def _point_in_polygon(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), bool)
    n = len(poly)
    for i in range(n):
        (xa, ya), (xb, yb) = poly[i], poly[(i + 1) % n]
        crosses = (ya > y) != (yb > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = xa + (y - ya) * (xb - xa) / (yb - ya)
        inside ^= crosses & (x < xint)
    return inside


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    s = np.clip((points - a) @ ab / (ab @ ab), 0.0, 1.0)
    proj = a + s[:, None] * ab
    return np.hypot(*(points - proj).T)


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _validate_polygon(poly: np.ndarray, side: float) -> None:
    n = len(poly)
    if n < 3:
        raise MeshError("polygon needs at least 3 vertices")
    x, y = poly[:, 0], poly[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if abs(area) < 1e-14 * side * side:
        raise MeshError("degenerate polygon (zero area)")
    seg = np.hypot(*(np.roll(poly, -1, axis=0) - poly).T)
    if np.any(seg < 1e-12 * side):
        raise MeshError("degenerate polygon (repeated vertex)")
    half = side / 2.0
    if np.any(np.abs(poly) >= half * (1 - 1e-12)):
        raise MeshError("polygon touches or leaves the square")
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                raise MeshError("polygon is self-intersecting")


def regular_polygon(n: int, radius: float, center=(0.0, 0.0), phase: float = 0.0) -> np.ndarray:
    ang = phase + 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)])


def build_square_with_polygon(side: float, polygon, target_h: float) -> Mesh:
    """Mesh of the square [-side/2, side/2]^2 resolving a polygonal Omega_1.

    Polygon vertices become mesh vertices and every polygon edge is a union of
    mesh edges.  Triangles inside the polygon are tagged OMEGA1.
    """
    from scipy.spatial import Delaunay

    if side <= 0 or target_h <= 0:
        raise MeshError("side and target_h must be positive")
    poly = np.asarray(polygon, dtype=float).reshape(-1, 2)
    half = side / 2.0
    n = max(1, int(np.ceil(side / target_h - 1e-9)))
    gh = side / n
    g = np.linspace(-half, half, n + 1)
    X, Y = np.meshgrid(g, g)
    grid = np.column_stack([X.ravel(), Y.ravel()])
    if len(poly) == 0:
        pts = grid
        segments = np.zeros((0, 2), np.int64)
    else:
        _validate_polygon(poly, side)
        samples = []
        for i in range(len(poly)):
            a, b = poly[i], poly[(i + 1) % len(poly)]
            m = max(1, int(np.ceil(np.hypot(*(b - a)) / gh - 1e-9)))
            s = np.arange(m)[:, None] / m
            samples.append(a + s * (b - a))
        samples = np.concatenate(samples)
        seglen = np.hypot(*(np.roll(samples, -1, axis=0) - samples).T).max()
        clearance = max(0.5 * gh, 0.5 * seglen)
        dist = np.full(len(grid), np.inf)
        for i in range(len(poly)):
            dist = np.minimum(dist, _segment_distance(grid, poly[i], poly[(i + 1) % len(poly)]))
        # grid points coinciding with polygon samples are replaced by the samples
        keep = dist >= clearance * (1 - 1e-9)
        pts = np.concatenate([samples, grid[keep]])
        ns = len(samples)
        segments = np.column_stack([np.arange(ns), (np.arange(ns) + 1) % ns])

    for _ in range(20):
        tri = Delaunay(pts).simplices.astype(np.int64)
        area = _signed_areas(pts, tri)
        tri = tri[np.abs(area) > 1e-14 * gh * gh]
        if len(segments) == 0:
            break
        key = {tuple(sorted(e)) for t in tri for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
        missing = [k for k, (i, j) in enumerate(segments) if (min(i, j), max(i, j)) not in key]
        if not missing:
            break
        # split missing constraint segments and retry
        new_pts = [pts]
        new_segs = []
        nxt = len(pts)
        miss = set(missing)
        for k, (i, j) in enumerate(segments):
            if k in miss:
                new_pts.append(0.5 * (pts[i] + pts[j])[None, :])
                new_segs += [(i, nxt), (nxt, j)]
                nxt += 1
            else:
                new_segs.append((i, j))
        pts = np.concatenate(new_pts)
        segments = np.asarray(new_segs, np.int64)
    else:
        raise MeshError("could not recover polygon edges in the triangulation")

    regions = np.full(len(tri), OMEGA2, dtype=np.int64)
    if len(poly):
        cen = pts[tri].mean(axis=1)
        regions[_point_in_polygon(cen, poly)] = OMEGA1
    tri = _longest_edge_first(pts, tri)
    mesh = Mesh.from_arrays(pts, tri, regions)
    return mesh


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Refinement:
    """Result of one refine call: the new mesh plus transfer data.

    ``parent[k]`` is the coarse triangle containing fine triangle k and
    ``vertex_parents[j]`` are the endpoints of the coarse edge whose midpoint
    is fine vertex ``coarse.n_vertices + j``.
    """

    coarse: Mesh
    mesh: Mesh
    parent: np.ndarray
    vertex_parents: np.ndarray

    def prolong(self, values: np.ndarray) -> np.ndarray:
        """Exact transfer of a coarse P1 vector (vertex values) to the fine mesh."""
        values = np.asarray(values)
        mids = 0.5 * (values[self.vertex_parents[:, 0]] + values[self.vertex_parents[:, 1]])
        return np.concatenate([values, mids])


@dataclass(frozen=True, eq=False)
class Hierarchy:
    """Composition of nested refinements from ``coarse`` to ``mesh``."""

    coarse: Mesh
    mesh: Mesh
    steps: tuple = field(default_factory=tuple)

    @cached_property
    def ancestor(self) -> np.ndarray:
        anc = np.arange(self.mesh.n_triangles)
        for step in reversed(self.steps):
            anc = step.parent[anc]
        return anc

    def prolong(self, values: np.ndarray) -> np.ndarray:
        for step in self.steps:
            values = step.prolong(values)
        return values


def refine(mesh: Mesh, marked) -> Refinement:
    """Newest-vertex bisection of the marked triangles plus conforming closure."""
    if mesh.n_triangles == 0:
        raise MeshError("cannot refine an empty mesh")
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    nt, nv = mesh.n_triangles, mesh.n_vertices
    if len(marked) and (marked.min() < 0 or marked.max() >= nt):
        raise MeshError("marked element id out of range")
    if len(marked) == 0:
        return Refinement(mesh, mesh, np.arange(nt), np.zeros((0, 2), np.int64))

    E = mesh.tri_edges
    ref = E[:, 2]
    emark = np.zeros(len(mesh.edges), bool)
    emark[ref[marked]] = True
    while True:
        need = emark[E].any(axis=1) & ~emark[ref]
        if not need.any():
            break
        emark[ref[need]] = True

    split = np.flatnonzero(emark)
    mid = np.full(len(mesh.edges), -1, dtype=np.int64)
    mid[split] = nv + np.arange(len(split))
    vparents = mesh.edges[split]
    new_vertices = np.concatenate([mesh.vertices, 0.5 * mesh.vertices[vparents].sum(axis=1)])

    t = mesh.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    bis = emark[ref]
    keep = np.flatnonzero(~bis)
    tris = [t[keep]]
    par = [keep]
    seq = [np.zeros(len(keep), np.int64)]

    idx = np.flatnonzero(bis)
    m = mid[ref[idx]]
    # child (c, a, m) with refinement edge (c, a) = local edge 1 of the parent
    for slot, (x, y, e_loc) in enumerate(((c, a, 1), (b, c, 0))):
        xi, yi = x[idx], y[idx]
        m2 = mid[E[idx, e_loc]]
        again = m2 >= 0
        once = ~again
        tris.append(np.column_stack([xi[once], yi[once], m[once]]))
        par.append(idx[once])
        seq.append(np.full(once.sum(), 2 * slot, np.int64))
        # bisect (x, y, m) at (x, y): children (m, x, m2) and (y, m, m2)
        ii = np.flatnonzero(again)
        tris.append(np.column_stack([m[ii], xi[ii], m2[ii]]))
        par.append(idx[ii])
        seq.append(np.full(len(ii), 2 * slot, np.int64))
        tris.append(np.column_stack([yi[ii], m[ii], m2[ii]]))
        par.append(idx[ii])
        seq.append(np.full(len(ii), 2 * slot + 1, np.int64))

    tris = np.concatenate(tris)
    par = np.concatenate(par)
    seq = np.concatenate(seq)
    order = np.lexsort((seq, par))
    tris, par = tris[order], par[order]

    def split_edges(pairs, markers=None):
        if len(pairs) == 0:
            return pairs, markers
        ids = mesh.edge_ids(pairs)
        ms = mid[ids]
        s = ms >= 0
        out = [pairs[~s], np.column_stack([pairs[s, 0], ms[s]]), np.column_stack([ms[s], pairs[s, 1]])]
        out_m = None
        if markers is not None:
            out_m = np.concatenate([markers[~s], markers[s], markers[s]])
        return np.sort(np.concatenate(out), axis=1), out_m

    bnd, bm = split_edges(mesh.boundary_edges, mesh.boundary_markers)
    itf, _ = split_edges(mesh.interface_edges)
    fine = Mesh(new_vertices, tris, mesh.regions[par], bnd, bm, itf)
    return Refinement(mesh, fine, par, vparents)


def refine_hierarchy(mesh: Mesh, marked, times: int = 1) -> Hierarchy:
    """Refine ``marked`` and then all of its descendants ``times`` times in total."""
    steps = []
    current = mesh
    marked = np.asarray(marked, np.int64)
    mask = np.zeros(mesh.n_triangles, bool)
    mask[marked] = True
    for _ in range(times):
        step = refine(current, np.flatnonzero(mask))
        steps.append(step)
        mask = mask[step.parent]
        current = step.mesh
    return Hierarchy(mesh, current, tuple(steps))


def uniform_refine(mesh: Mesh, levels: int = 1) -> Hierarchy:
    """Halve the mesh size ``levels`` times (two bisections of every triangle per level)."""
    return refine_hierarchy(mesh, np.arange(mesh.n_triangles), 2 * levels)


# ---------------------------------------------------------------------------
# patches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VertexPatch:
    center: int
    elements: tuple[int, ...]


def vertex_patches(mesh: Mesh) -> list[VertexPatch]:
    ptr, elems, _ = mesh.vertex_patch_csr
    return [VertexPatch(i, tuple(int(e) for e in elems[ptr[i]:ptr[i + 1]]))
            for i in range(mesh.n_vertices)]


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def save(mesh: Mesh, path) -> None:
    lines = ["PBEMESH 1", f"VERTICES {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"TRIANGLES {mesh.n_triangles}")
    lines += [f"{i} {j} {k} {r}" for (i, j, k), r in zip(mesh.triangles.tolist(), mesh.regions.tolist())]
    lines.append(f"BOUNDARY {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {m}" for (i, j), m in zip(mesh.boundary_edges.tolist(), mesh.boundary_markers.tolist())]
    lines.append(f"INTERFACE {len(mesh.interface_edges)}")
    lines += [f"{i} {j}" for i, j in mesh.interface_edges.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load(path) -> Mesh:
    raw = Path(path).read_text().splitlines()
    pos = 0

    def take(section):
        nonlocal pos
        if pos >= len(raw):
            return None
        parts = raw[pos].split()
        if len(parts) != 2 or parts[0] != section:
            return None
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshFormatError(pos + 1, section, f"bad count {parts[1]!r}") from None
        start = pos + 1
        rows = raw[start:start + count]
        if len(rows) < count:
            raise MeshFormatError(len(raw) + 1, section, f"expected {count} rows")
        pos = start + count
        return start, rows

    if not raw or raw[0].split() != ["PBEMESH", "1"]:
        raise MeshFormatError(1, "header", "expected 'PBEMESH 1'")
    pos = 1

    def parse(block, section, ncols, types):
        if block is None:
            raise MeshFormatError(pos + 1, section, "section missing")
        start, rows = block
        out = []
        for k, row in enumerate(rows):
            parts = row.split()
            if len(parts) != ncols:
                raise MeshFormatError(start + k + 1, section, f"expected {ncols} fields, got {len(parts)}")
            try:
                out.append([typ(p) for typ, p in zip(types, parts)])
            except ValueError:
                raise MeshFormatError(start + k + 1, section, f"unparsable value in {row!r}") from None
        return out

    verts = np.array(parse(take("VERTICES"), "VERTICES", 2, (float, float)), dtype=float).reshape(-1, 2)
    tri_block = take("TRIANGLES")
    tri = np.array(parse(tri_block, "TRIANGLES", 4, (int,) * 4), dtype=np.int64).reshape(-1, 4)
    for k, row in enumerate(tri):
        if row[:3].min() < 0 or row[:3].max() >= len(verts):
            raise MeshFormatError(tri_block[0] + k + 1, "TRIANGLES",
                                  f"triangle {k} references a missing vertex")
    bnd_block = take("BOUNDARY")
    bnd = None
    markers = None
    if bnd_block is not None:
        b = np.array(parse(bnd_block, "BOUNDARY", 3, (int,) * 3), dtype=np.int64).reshape(-1, 3)
        bnd, markers = b[:, :2], b[:, 2]
    itf_block = take("INTERFACE")
    itf = None
    if itf_block is not None:
        itf = np.array(parse(itf_block, "INTERFACE", 2, (int, int)), dtype=np.int64).reshape(-1, 2)
    return Mesh.from_arrays(verts, tri[:, :3], tri[:, 3], boundary_markers=markers,
                            interface_edges=itf, boundary_edges=bnd)
