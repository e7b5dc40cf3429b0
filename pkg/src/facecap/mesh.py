"""Indexed triangle meshes and the topology/geometry queries built on them.

Geometry is 64-bit throughout. A TriMesh is immutable after construction
(arrays are marked read-only) and safe to share across threads; every
operation here is a pure function.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Per-vertex class names a SemanticAnnotation may use. Hair is deliberately
# absent: hair pixels only ever appear in external ground-truth masks.
CLASS_VOCABULARY = frozenset(
    {"skin", "nose", "ears", "eyes", "upper_lip", "lower_lip", "mouth_interior", "background"}
)

DEGENERATE_AREA = 1e-12


class MeshError(ValidationError):
    """Invalid mesh topology or geometry."""


@dataclass(frozen=True)
class TriMesh:
    """Vertices (n,3) float64, faces (m,3) int, optional per-vertex channels."""

    vertices: np.ndarray
    faces: np.ndarray
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        verts = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        faces = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {verts.shape}")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {faces.shape}")
        if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
            raise MeshError(
                f"face index out of range: vertex count {len(verts)}, "
                f"index range [{faces.min()}, {faces.max()}]"
            )
        if faces.size:
            a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
            dup = (a == b) | (b == c) | (a == c)
            if dup.any():
                raise MeshError(f"face {int(np.flatnonzero(dup)[0])} repeats a vertex")
        attrs = {}
        for name, vals in self.attributes.items():
            vals = np.ascontiguousarray(np.asarray(vals, dtype=np.float64))
            if vals.ndim == 1:
                vals = vals[:, None]
            if vals.shape[0] != len(verts):
                raise MeshError(
                    f"attribute '{name}' has {vals.shape[0]} rows for {len(verts)} vertices"
                )
            vals.setflags(write=False)
            attrs[name] = vals
        verts.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "attributes", attrs)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_attributes(self, **channels):
        """New mesh sharing geometry, with extra attribute channels."""
        merged = dict(self.attributes)
        merged.update(channels)
        return TriMesh(self.vertices, self.faces, merged)


@dataclass(frozen=True)
class BaryCoord:
    """A point on a mesh surface: face index plus barycentric weights."""

    face: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (3,):
            raise MeshError(f"barycentric weights must be length 3, got {w.shape}")
        if w.min() < -1e-9:
            raise MeshError(f"negative barycentric weight {w.min()}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise MeshError(f"barycentric weights sum to {w.sum()}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "face", int(self.face))


@dataclass(frozen=True)
class SemanticAnnotation:
    """Per-vertex class labels over an ordered list of class names."""

    classes: tuple
    labels: np.ndarray

    def __post_init__(self):
        classes = tuple(self.classes)
        unknown = [c for c in classes if c not in CLASS_VOCABULARY]
        if unknown:
            raise MeshError(f"class names {unknown} outside the fixed vocabulary")
        labels = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if labels.size and (labels.min() < 0 or labels.max() >= len(classes)):
            raise MeshError(
                f"label out of range for {len(classes)} classes: "
                f"[{labels.min()}, {labels.max()}]"
            )
        labels.setflags(write=False)
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "labels", labels)

    @property
    def n_classes(self):
        return len(self.classes)


def face_normals(mesh):
    """Unit outward normals per face (CCW winding).

    Returns (normals (m,3), degenerate (m,) bool); degenerate faces
    (area < 1e-12) get the zero vector and are flagged instead of rejected,
    so remeshing intermediates survive.
    """
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    norm = np.linalg.norm(cross, axis=1)
    degenerate = norm < 2.0 * DEGENERATE_AREA
    out = np.zeros_like(cross)
    ok = ~degenerate
    out[ok] = cross[ok] / norm[ok, None]
    return out, degenerate


def vertex_normals(mesh):
    """Area-weighted vertex normals, renormalized.

    The raw cross products are accumulated (their magnitude is twice the
    face area, giving the area weighting for free). Vertices with no
    usable normal — isolated, or with cancelling incident normals — fall
    back to (0,0,1) and are flagged.
    """
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, f[:, k], cross)
    norm = np.linalg.norm(acc, axis=1)
    flagged = norm < 1e-20
    out = np.zeros_like(acc)
    out[~flagged] = acc[~flagged] / norm[~flagged, None]
    out[flagged] = (0.0, 0.0, 1.0)
    return out, flagged


def vertex_neighbors(mesh):
    """Unique 1-ring neighbor lists, as (offsets, flat neighbor indices)."""
    f = mesh.faces
    if f.size == 0:
        offsets = np.zeros(mesh.n_vertices + 1, dtype=np.int64)
        return offsets, np.zeros(0, dtype=np.int64)
    pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    pairs = np.concatenate([pairs, pairs[:, ::-1]])
    pairs = np.unique(pairs, axis=0)
    counts = np.bincount(pairs[:, 0], minlength=mesh.n_vertices)
    offsets = np.zeros(mesh.n_vertices + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, pairs[:, 1]


def uniform_laplacian(mesh, values):
    """Graph Laplacian of a per-vertex field: neighbor mean minus value.

    Linear in ``values`` and zero on constants; vertices with an empty
    1-ring return zero rows.
    """
    values = np.asarray(values, dtype=np.float64)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[:, None]
    if values.shape[0] != mesh.n_vertices:
        raise MeshError(
            f"values have {values.shape[0]} rows for {mesh.n_vertices} vertices"
        )
    offsets, nbrs = vertex_neighbors(mesh)
    counts = np.diff(offsets)
    acc = np.zeros_like(values)
    src = np.repeat(np.arange(mesh.n_vertices), counts)
    np.add.at(acc, src, values[nbrs])
    out = np.zeros_like(values)
    ring = counts > 0
    out[ring] = acc[ring] / counts[ring, None] - values[ring]
    return out[:, 0] if squeeze else out


def edge_list(faces):
    """Unique undirected edges (k,2) with per-edge face counts (k,)."""
    faces = np.asarray(faces)
    if faces.size == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges, counts


def euler_characteristic(mesh):
    """V - E + F; 2 for a closed genus-0 surface."""
    edges, _ = edge_list(mesh.faces)
    return mesh.n_vertices - len(edges) + mesh.n_faces


def _project_on_triangles(q, a, b, c):
    """Closest point of ``q`` on each triangle (a, b, c).

    Region-based point/triangle projection evaluated for all faces at
    once; returns (bary (m,3), squared distances (m,)).
    """
    ab = b - a
    ac = c - a
    ap = q - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = q - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = q - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    m = len(a)
    u = np.empty(m)
    v = np.empty(m)
    done = np.zeros(m, dtype=bool)

    def settle(mask, uu, vv):
        mask = mask & ~done
        u[mask] = uu[mask] if isinstance(uu, np.ndarray) else uu
        v[mask] = vv[mask] if isinstance(vv, np.ndarray) else vv
        done[mask] = True

    settle((d1 <= 0) & (d2 <= 0), 0.0, 0.0)  # vertex a
    settle((d3 >= 0) & (d4 <= d3), 1.0, 0.0)  # vertex b
    settle((d6 >= 0) & (d5 <= d6), 0.0, 1.0)  # vertex c
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), t_ab, 0.0)  # edge ab
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), 0.0, t_ac)  # edge ac
        denom_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(denom_bc != 0, (d4 - d3) / denom_bc, 0.0)
        settle((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), 1.0 - t_bc, t_bc)
        denom = va + vb + vc
        inner_u = np.where(denom != 0, vb / denom, 1.0 / 3.0)
        inner_v = np.where(denom != 0, vc / denom, 1.0 / 3.0)
        settle(np.ones(m, dtype=bool), inner_u, inner_v)

    point = a + u[:, None] * ab + v[:, None] * ac
    d2q = np.einsum("ij,ij->i", q - point, q - point)
    bary = np.stack([1.0 - u - v, u, v], axis=1)
    return bary, d2q


def closest_point(mesh, query):
    """Globally closest surface point to ``query``.

    Brute force over all faces; ties resolved to the lowest face index so
    results are independent of traversal order. Returns (BaryCoord, distance).
    """
    if mesh.n_faces == 0:
        raise MeshError("closest_point on an empty mesh")
    q = np.asarray(query, dtype=np.float64)
    v = mesh.vertices
    f = mesh.faces
    bary, d2 = _project_on_triangles(q[None, :], v[f[:, 0]], v[f[:, 1]], v[f[:, 2]])
    idx = int(np.argmin(d2))
    w = np.clip(bary[idx], 0.0, 1.0)
    w = w / w.sum()
    return BaryCoord(idx, w), float(np.sqrt(d2[idx]))


def closest_points(mesh, queries):
    """Vectorized :func:`closest_point` over many queries.

    Returns (face indices (k,), bary weights (k,3), distances (k,)); results
    match the single-query routine exactly.
    """
    if mesh.n_faces == 0:
        raise MeshError("closest_point on an empty mesh")
    queries = np.asarray(queries, dtype=np.float64)
    v = mesh.vertices
    f = mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    faces_out = np.empty(len(queries), dtype=np.int64)
    bary_out = np.empty((len(queries), 3))
    dist_out = np.empty(len(queries))
    for i, q in enumerate(queries):
        bary, d2 = _project_on_triangles(q[None, :], a, b, c)
        idx = int(np.argmin(d2))
        w = np.clip(bary[idx], 0.0, 1.0)
        faces_out[i] = idx
        bary_out[i] = w / w.sum()
        dist_out[i] = np.sqrt(d2[idx])
    return faces_out, bary_out, dist_out


def bary_interpolate(mesh, channel, at):
    """Barycentric interpolation of an attribute channel at a surface point."""
    if channel not in mesh.attributes:
        raise MeshError(f"unknown attribute channel '{channel}'")
    values = mesh.attributes[channel]
    corners = mesh.faces[at.face]
    return at.weights @ values[corners]


def interpolate_at(values, faces, face_idx, weights):
    """Batch barycentric interpolation of per-vertex ``values``.

    ``face_idx`` (k,) selects rows of ``faces``; ``weights`` (k,3) are the
    barycentric weights. Returns (k, ...) interpolated values.
    """
    corners = faces[face_idx]  # (k,3)
    gathered = values[corners]  # (k,3,...)
    w = weights.reshape(weights.shape + (1,) * (gathered.ndim - 2))
    return (gathered * w).sum(axis=1)


def make_icosphere(subdivisions=3, radius=1.0):
    """Unit icosphere by repeated 1-to-4 subdivision of an icosahedron.

    Subdivision 3 gives 642 vertices / 1280 faces.
    """
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    for _ in range(subdivisions):
        verts_list = list(verts)
        midpoint = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoint:
                p = verts_list[i] + verts_list[j]
                p = p / np.linalg.norm(p)
                midpoint[key] = len(verts_list)
                verts_list.append(p)
            return midpoint[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(verts_list)
        faces = np.array(new_faces, dtype=np.int64)
    return TriMesh(verts * radius, faces)
