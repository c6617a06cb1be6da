"""Discrete closed surfaces and volume grids with quadrature.

A surface is a watertight triangulation carrying per-node outward unit
normals and vertex quadrature weights (one third of the incident flat
triangle areas).  Point classification against the surface goes through
the Gauss solid-angle integral.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import AmbiguousClassification

INTERIOR = "Interior"
EXTERIOR = "Exterior"
BOUNDARY = "Boundary"


def as_point(p) -> np.ndarray:
    """Coerce to a finite (3,) float array."""
    x = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite components")
    return x


@dataclass
class SurfaceMesh:
    """Triangulated closed boundary: nodes, triangles, outward normals, vertex weights."""

    nodes: np.ndarray          # (n, 3)
    triangles: np.ndarray      # (t, 3) int
    normals: np.ndarray        # (n, 3) unit outward
    weights: np.ndarray        # (n,) vertex quadrature weights
    _tree: cKDTree = field(default=None, repr=False, compare=False)
    _node_spacing: np.ndarray = field(default=None, repr=False, compare=False)
    _incident: list = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def total_area(self) -> float:
        return float(np.sum(self.weights))

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.nodes)
        return self._tree

    @property
    def node_spacing(self) -> np.ndarray:
        """Mean incident edge length per node."""
        if self._node_spacing is None:
            n = self.n_nodes
            acc = np.zeros(n)
            cnt = np.zeros(n)
            for (i, j, k) in self.triangles:
                for a, b in ((i, j), (j, k), (k, i)):
                    d = np.linalg.norm(self.nodes[a] - self.nodes[b])
                    acc[a] += d
                    acc[b] += d
                    cnt[a] += 1
                    cnt[b] += 1
            self._node_spacing = acc / np.maximum(cnt, 1)
        return self._node_spacing

    @property
    def incident_triangles(self) -> list:
        """For each node, indices of triangles touching it."""
        if self._incident is None:
            inc = [[] for _ in range(self.n_nodes)]
            for t, (i, j, k) in enumerate(self.triangles):
                inc[i].append(t)
                inc[j].append(t)
                inc[k].append(t)
            self._incident = [np.array(a, dtype=int) for a in inc]
        return self._incident

    def local_spacing(self, x) -> float:
        """Node spacing at the node nearest to x."""
        _, idx = self.tree.query(np.asarray(x, dtype=float).reshape(-1, 3))
        sp = self.node_spacing[idx]
        return float(sp[0]) if sp.size == 1 else sp

    def surface_distance(self, x) -> float:
        """Distance from x to the nearest node (proxy for distance to the surface)."""
        d, _ = self.tree.query(np.asarray(x, dtype=float).reshape(-1, 3))
        return float(d[0]) if d.size == 1 else d


def triangle_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = nodes[triangles[:, 0]]
    p1 = nodes[triangles[:, 1]]
    p2 = nodes[triangles[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=1)


def check_watertight(triangles: np.ndarray) -> bool:
    """Every undirected edge must be shared by exactly two triangles."""
    edges = {}
    for (i, j, k) in triangles:
        for a, b in ((i, j), (j, k), (k, i)):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    return all(c == 2 for c in edges.values())


def _vertex_weights(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    areas = triangle_areas(nodes, triangles)
    w = np.zeros(len(nodes))
    for t, (i, j, k) in enumerate(triangles):
        share = areas[t] / 3.0
        w[i] += share
        w[j] += share
        w[k] += share
    return w


def _vertex_normals(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident triangle normals, unit length, globally outward."""
    p0 = nodes[triangles[:, 0]]
    p1 = nodes[triangles[:, 1]]
    p2 = nodes[triangles[:, 2]]
    cr = np.cross(p1 - p0, p2 - p0)  # 2*area * unit normal (winding orientation)
    nrm = np.zeros_like(nodes)
    for t, (i, j, k) in enumerate(triangles):
        nrm[i] += cr[t]
        nrm[j] += cr[t]
        nrm[k] += cr[t]
    lengths = np.linalg.norm(nrm, axis=1)
    if np.any(lengths == 0):
        raise ValueError("degenerate vertex normal")
    nrm /= lengths[:, None]
    # orientation: signed volume of the cone over the origin-shifted surface
    centroid = nodes.mean(axis=0)
    q0, q1, q2 = p0 - centroid, p1 - centroid, p2 - centroid
    vol6 = np.sum(np.einsum("ij,ij->i", q0, np.cross(q1, q2)))
    if vol6 < 0:
        nrm = -nrm
    return nrm


# icosahedron with unit circumradius
_PHI = (1.0 + np.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
    [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
    [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
], dtype=float) / np.sqrt(1.0 + _PHI * _PHI)
_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=int)


def make_unit_sphere(refinement_level: int) -> SurfaceMesh:
    """Icosphere: subdivide the icosahedron `refinement_level` times, project to |P| = 1.

    Normals are the node positions; weights one third of incident areas.
    """
    if refinement_level < 0:
        raise ValueError("refinement_level must be >= 0")
    verts = [tuple(v) for v in _ICO_VERTS]
    faces = _ICO_FACES.copy()
    for _ in range(refinement_level):
        cache = {}
        new_faces = []

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = np.asarray(verts[a]) + np.asarray(verts[b])
                m /= np.linalg.norm(m)
                verts.append(tuple(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for (i, j, k) in faces:
            a = midpoint(i, j)
            b = midpoint(j, k)
            c = midpoint(k, i)
            new_faces += [[i, a, c], [j, b, a], [k, c, b], [a, b, c]]
        faces = np.array(new_faces, dtype=int)
    nodes = np.array(verts, dtype=float)
    nodes /= np.linalg.norm(nodes, axis=1)[:, None]
    return SurfaceMesh(
        nodes=nodes,
        triangles=faces,
        normals=nodes.copy(),
        weights=_vertex_weights(nodes, faces),
    )


def mesh_from_arrays(nodes, triangles) -> SurfaceMesh:
    """Build a mesh from raw node/triangle arrays; normals and weights recomputed."""
    nodes = np.asarray(nodes, dtype=float).reshape(-1, 3)
    triangles = np.asarray(triangles, dtype=int).reshape(-1, 3)
    if not check_watertight(triangles):
        raise ValueError("mesh is not watertight")
    return SurfaceMesh(
        nodes=nodes,
        triangles=triangles,
        normals=_vertex_normals(nodes, triangles),
        weights=_vertex_weights(nodes, triangles),
    )


def save_mesh(mesh: SurfaceMesh, path) -> None:
    with open(path, "w") as f:
        json.dump({"nodes": mesh.nodes.tolist(),
                   "triangles": mesh.triangles.tolist()}, f)


def load_mesh(path) -> SurfaceMesh:
    """Load {"nodes": ..., "triangles": ...}; normals/weights are never trusted from file."""
    with open(path) as f:
        data = json.load(f)
    return mesh_from_arrays(data["nodes"], data["triangles"])


def surface_integral(mesh: SurfaceMesh, values) -> float:
    """Vertex-rule surface integral sum_i w_i v_i."""
    v = np.asarray(values, dtype=float)
    if v.shape != (mesh.n_nodes,):
        raise ValueError(f"field length {v.shape} does not match node count {mesh.n_nodes}")
    return float(np.sum(mesh.weights * v))


@dataclass
class VolumeGrid:
    """Uniform cells whose centers lie inside the surface.

    Cells cut by the surface carry fractional weights (inside volume) and
    their center is the centroid of the inside part; full_cell marks the
    uncut ones.
    """

    centers: np.ndarray   # (c, 3)
    weights: np.ndarray   # (c,) cell volumes (fractional at the boundary)
    box_lo: np.ndarray    # (3,)
    box_hi: np.ndarray    # (3,)
    shape: tuple          # (nx, ny, nz) of the generating box grid
    inside_index: np.ndarray  # flat indices of the interior cells within the box grid
    full_cell: np.ndarray = None  # (c,) bool; True when the cell is entirely inside
    partial_points: dict = None   # cell -> (k, 3) inside-subcell centers for cut cells

    def __post_init__(self):
        if self.full_cell is None:
            self.full_cell = np.ones(len(self.centers), dtype=bool)
        if self.partial_points is None:
            self.partial_points = {}

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    @property
    def spacing(self) -> np.ndarray:
        return (self.box_hi - self.box_lo) / np.asarray(self.shape, dtype=float)


def box_cell_centers(box_lo, box_hi, shape):
    lo = np.asarray(box_lo, dtype=float)
    hi = np.asarray(box_hi, dtype=float)
    shape = tuple(int(s) for s in shape)
    axes = [lo[a] + (np.arange(shape[a]) + 0.5) * (hi[a] - lo[a]) / shape[a] for a in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def volume_grid_from_mesh(mesh: SurfaceMesh, shape, box_lo=None, box_hi=None,
                          subcells: int = 4) -> VolumeGrid:
    """Grid of the mesh bounding box with partial-volume weights at the boundary.

    Cell membership uses the exact polyhedron winding number (sharp down to
    the surface, consistent with the panel-exact near-field quadrature), not
    the banded trichotomy of classify_point, so the near-boundary shell is
    kept.  Cells straddling the surface are split into subcells^3 pieces; the
    cell gets the inside fraction as its weight and the inside centroid as its
    center, which keeps the mass distribution right to O(dx^2) for singular
    kernels integrated nearby.
    """
    from .potentials import winding_solid_angle

    if box_lo is None:
        box_lo = mesh.nodes.min(axis=0)
    if box_hi is None:
        box_hi = mesh.nodes.max(axis=0)
    box_lo = np.asarray(box_lo, dtype=float)
    box_hi = np.asarray(box_hi, dtype=float)
    shape = tuple(int(s) for s in shape)
    centers = box_cell_centers(box_lo, box_hi, shape)
    spacing = (box_hi - box_lo) / np.asarray(shape, dtype=float)
    vol = float(np.prod(spacing))
    inside = winding_solid_angle(mesh, centers) > 2.0 * np.pi

    dist, _ = mesh.tree.query(centers)
    margin = float(np.linalg.norm(spacing / 2.0)) + float(np.max(mesh.node_spacing))
    straddle = dist < margin
    keep = inside.copy()
    weights = np.full(len(centers), vol)
    new_centers = centers.copy()
    full = ~straddle
    sub_points = {}
    cand = np.nonzero(straddle)[0]
    if len(cand) and subcells > 1:
        t = (np.arange(subcells) + 0.5) / subcells - 0.5
        gx, gy, gz = np.meshgrid(t, t, t, indexing="ij")
        off = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1) * spacing[None, :]
        pts = (centers[cand][:, None, :] + off[None, :, :]).reshape(-1, 3)
        sub_in = (winding_solid_angle(mesh, pts) > 2.0 * np.pi).reshape(len(cand), -1)
        frac = sub_in.mean(axis=1)
        keep[cand] = frac > 0.0
        weights[cand] = vol * frac
        for r, c in enumerate(cand):
            if 0.0 < frac[r] < 1.0:
                inside_pts = centers[c] + off[sub_in[r]]
                new_centers[c] = inside_pts.mean(axis=0)
                sub_points[c] = inside_pts
        full[cand] = frac >= 1.0
    kept = np.nonzero(keep)[0]
    remap = {c: i for i, c in enumerate(kept)}
    return VolumeGrid(
        centers=new_centers[keep],
        weights=weights[keep],
        box_lo=box_lo,
        box_hi=box_hi,
        shape=shape,
        inside_index=kept,
        full_cell=full[keep],
        partial_points={remap[c]: p for c, p in sub_points.items() if c in remap},
    )


def classify_point(mesh: SurfaceMesh, x) -> str:
    """Gauss solid-angle trichotomy with a boundary band of one local node spacing."""
    from .potentials import solid_angle

    x = as_point(x)
    dist = mesh.surface_distance(x)
    if dist <= mesh.local_spacing(x):
        return BOUNDARY
    omega = solid_angle(mesh, x)
    band = np.pi / 2.0
    if abs(omega + 4.0 * np.pi) <= band:
        return INTERIOR
    if abs(omega) <= band:
        return EXTERIOR
    if abs(omega + 2.0 * np.pi) <= band:
        return BOUNDARY
    raise AmbiguousClassification(
        f"solid angle {omega:.4f} is between threshold bands; mesh too coarse near {x}")
