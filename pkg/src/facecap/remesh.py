"""Incremental isotropic remeshing with barycentric provenance.

Each iteration runs the classic four passes: split edges longer than 4/3
of the target length, collapse edges shorter than 4/5 of it (when the
collapse keeps all touched edges short enough and preserves the link
condition), flip edges toward valence 6 (4 on the boundary), and smooth
tangentially with the result projected back onto the input surface. All
passes visit edges in sorted order, so the result is deterministic.

Every output vertex records where it lives on the *input* surface as a
(face, barycentric) pair; those provenance records drive the transfer of
all per-vertex model tables onto the new topology.
"""

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .deform import DeformModel
from .errors import ValidationError
from .mesh import (
    SemanticAnnotation,
    TriMesh,
    closest_points,
    interpolate_at,
    vertex_normals,
)

SPLIT_FACTOR = 4.0 / 3.0
COLLAPSE_FACTOR = 4.0 / 5.0


class RemeshError(ValidationError):
    pass


@dataclass(frozen=True)
class Provenance:
    """Per-new-vertex location on the input mesh."""

    face: np.ndarray  # (n,)
    bary: np.ndarray  # (n,3), nonnegative, rows sum to 1

    def __post_init__(self):
        face = np.asarray(self.face, dtype=np.int64)
        bary = np.asarray(self.bary, dtype=np.float64)
        if bary.shape != (len(face), 3):
            raise RemeshError(f"provenance shapes disagree: {face.shape} vs {bary.shape}")
        if bary.min() < -1e-9 or np.abs(bary.sum(axis=1) - 1.0).max() > 1e-9:
            raise RemeshError("provenance barycentrics must be nonnegative and sum to 1")
        face.setflags(write=False)
        bary.setflags(write=False)
        object.__setattr__(self, "face", face)
        object.__setattr__(self, "bary", bary)


def save_provenance(path, prov):
    write_container(path, {"prov_face": prov.face.astype(np.uint32), "prov_bary": prov.bary})


def load_provenance(path):
    chunks = read_container(path)
    return Provenance(chunks["prov_face"].astype(np.int64), chunks["prov_bary"])


class _EditMesh:
    """Mutable mesh state shared by the remeshing passes."""

    def __init__(self, mesh):
        self.pos = [v.copy() for v in mesh.vertices]
        self.faces = [list(f) for f in mesh.faces]
        self.alive_face = [True] * len(self.faces)
        self.alive_vert = [True] * len(self.pos)
        self.edge_faces = {}
        for fi, f in enumerate(self.faces):
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                self.edge_faces.setdefault(self._key(a, b), []).append(fi)
        for key, incident in self.edge_faces.items():
            if len(incident) > 2:
                raise RemeshError(f"non-manifold edge {key}: {len(incident)} incident faces")
        directed = set()
        for f in self.faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                if (a, b) in directed:
                    raise RemeshError(f"inconsistently oriented edge ({a}, {b})")
                directed.add((a, b))

    @staticmethod
    def _key(a, b):
        return (a, b) if a < b else (b, a)

    def edge_length(self, key):
        return float(np.linalg.norm(self.pos[key[0]] - self.pos[key[1]]))

    def edges(self):
        return sorted(k for k, v in self.edge_faces.items() if v)

    def is_boundary_edge(self, key):
        return len(self.edge_faces.get(key, ())) == 1

    def boundary_vertices(self):
        out = set()
        for key, incident in self.edge_faces.items():
            if len(incident) == 1:
                out.update(key)
        return out

    def vertex_faces(self):
        vf = {}
        for fi, f in enumerate(self.faces):
            if not self.alive_face[fi]:
                continue
            for v in f:
                vf.setdefault(v, set()).add(fi)
        return vf

    def neighbors(self, vf, v):
        out = set()
        for fi in vf.get(v, ()):
            out.update(self.faces[fi])
        out.discard(v)
        return out

    def _register(self, fi):
        f = self.faces[fi]
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            self.edge_faces.setdefault(self._key(a, b), []).append(fi)

    def _unregister(self, fi):
        f = self.faces[fi]
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = self._key(a, b)
            if key in self.edge_faces and fi in self.edge_faces[key]:
                self.edge_faces[key].remove(fi)
                if not self.edge_faces[key]:
                    del self.edge_faces[key]

    def add_face(self, corners):
        self.faces.append(list(corners))
        self.alive_face.append(True)
        self._register(len(self.faces) - 1)
        return len(self.faces) - 1

    def kill_face(self, fi):
        self._unregister(fi)
        self.alive_face[fi] = False

    def compact(self):
        """Final arrays with dead vertices/faces dropped and indices remapped."""
        used = sorted({v for fi, f in enumerate(self.faces) if self.alive_face[fi] for v in f})
        remap = {old: new for new, old in enumerate(used)}
        verts = np.array([self.pos[v] for v in used])
        faces = np.array(
            [[remap[v] for v in f] for fi, f in enumerate(self.faces) if self.alive_face[fi]],
            dtype=np.int64,
        )
        return verts, faces


def _split_pass(em, max_len):
    """Split every edge longer than max_len at its midpoint (batch pass)."""
    long_edges = [k for k in em.edges() if em.edge_length(k) > max_len]
    if not long_edges:
        return 0
    midpoint = {}
    for key in long_edges:
        midpoint[key] = len(em.pos)
        em.pos.append((em.pos[key[0]] + em.pos[key[1]]) / 2.0)
        em.alive_vert.append(True)

    faces_now = [fi for fi in range(len(em.faces)) if em.alive_face[fi]]
    for fi in faces_now:
        f = em.faces[fi]
        keys = [em._key(f[0], f[1]), em._key(f[1], f[2]), em._key(f[2], f[0])]
        split = [k in midpoint for k in keys]
        if not any(split):
            continue
        em.kill_face(fi)
        v0, v1, v2 = f
        m01 = midpoint.get(keys[0])
        m12 = midpoint.get(keys[1])
        m20 = midpoint.get(keys[2])
        n_split = sum(split)
        if n_split == 3:
            em.add_face((v0, m01, m20))
            em.add_face((v1, m12, m01))
            em.add_face((v2, m20, m12))
            em.add_face((m01, m12, m20))
        elif n_split == 1:
            if m01 is not None:
                em.add_face((v0, m01, v2))
                em.add_face((m01, v1, v2))
            elif m12 is not None:
                em.add_face((v1, m12, v0))
                em.add_face((m12, v2, v0))
            else:
                em.add_face((v2, m20, v1))
                em.add_face((m20, v0, v1))
        else:
            # rotate so the un-split edge is (v2, v0)
            if m01 is None:
                v0, v1, v2 = v1, v2, v0
                ma, mb = m12, m20
            elif m12 is None:
                v0, v1, v2 = v2, v0, v1
                ma, mb = m20, m01
            else:
                ma, mb = m01, m12
            em.add_face((ma, v1, mb))
            em.add_face((v0, ma, mb))
            em.add_face((v0, mb, v2))
    return len(long_edges)


def _collapse_pass(em, min_len, max_len):
    """Collapse short edges to their midpoint when legal."""
    count = 0
    boundary = em.boundary_vertices()
    vf = em.vertex_faces()
    for key in em.edges():
        incident = em.edge_faces.get(key)
        if not incident:
            continue
        if em.edge_length(key) >= min_len:
            continue
        a, b = key
        na = em.neighbors(vf, a)
        nb = em.neighbors(vf, b)
        opposite = set()
        for fi in incident:
            opposite.update(v for v in em.faces[fi] if v not in key)
        if na & nb != opposite:
            continue  # link condition
        a_bnd, b_bnd = a in boundary, b in boundary
        interior_edge = not em.is_boundary_edge(key)
        if interior_edge and a_bnd and b_bnd:
            continue
        mid = (em.pos[a] + em.pos[b]) / 2.0
        ring = (na | nb) - {a, b}
        if any(np.linalg.norm(mid - em.pos[v]) >= max_len for v in sorted(ring)):
            continue
        # Refuse collapses that would duplicate a face (e.g. flattening a
        # tetrahedron into a two-face pillow); keeps small closed meshes valid.
        dying = set(incident)
        kept_a = {frozenset(em.faces[fi]) for fi in vf.get(a, set()) if fi not in dying}
        relabeled = {
            frozenset(a if v == b else v for v in em.faces[fi])
            for fi in vf.get(b, set()) if fi not in dying
        }
        if kept_a & relabeled or any(len(f) < 3 for f in relabeled):
            continue

        em.pos[a] = mid
        for fi in list(incident):
            em.kill_face(fi)
            for v in em.faces[fi]:
                vf.get(v, set()).discard(fi)
        for fi in sorted(vf.get(b, set())):
            if not em.alive_face[fi]:
                continue
            em._unregister(fi)
            em.faces[fi] = [a if v == b else v for v in em.faces[fi]]
            em._register(fi)
            vf.setdefault(a, set()).add(fi)
        vf.pop(b, None)
        em.alive_vert[b] = False
        if b_bnd:
            boundary.add(a)
        count += 1
    return count


def _flip_pass(em):
    """Flip interior edges that reduce squared valence deviation."""
    vf = em.vertex_faces()
    valence = {v: len(em.neighbors(vf, v)) for v in vf}
    boundary = em.boundary_vertices()

    def target(v):
        return 4 if v in boundary else 6

    count = 0
    for key in em.edges():
        incident = em.edge_faces.get(key)
        if not incident or len(incident) != 2:
            continue
        f1, f2 = incident
        a, b = key
        c = next(v for v in em.faces[f1] if v not in key)
        d = next(v for v in em.faces[f2] if v not in key)
        if c == d or em._key(c, d) in em.edge_faces:
            continue
        before = sum((valence[v] - target(v)) ** 2 for v in (a, b, c, d))
        after = (valence[a] - 1 - target(a)) ** 2 + (valence[b] - 1 - target(b)) ** 2 \
            + (valence[c] + 1 - target(c)) ** 2 + (valence[d] + 1 - target(d)) ** 2
        if after >= before:
            continue
        # orientation: f1 must traverse the directed edge a->b
        f = em.faces[f1]
        if (a, b) not in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            a, b = b, a
        em.kill_face(f1)
        em.kill_face(f2)
        em.add_face((a, d, c))
        em.add_face((d, b, c))
        valence[a] -= 1
        valence[b] -= 1
        valence[c] += 1
        valence[d] += 1
        count += 1
    return count


def _smooth_and_project(em, source_mesh):
    """Uniform-centroid tangential smoothing, then snap to the input surface."""
    vf = em.vertex_faces()
    alive = sorted(vf.keys())
    if not alive:
        return
    verts, faces = em.compact()
    tmp = TriMesh(verts, faces)
    normals, _ = vertex_normals(tmp)
    remap = {v: i for i, v in enumerate(alive)}
    boundary = em.boundary_vertices()
    new_pos = {}
    for v in alive:
        if v in boundary:
            continue
        nbrs = em.neighbors(vf, v)
        if not nbrs:
            continue
        centroid = np.mean([em.pos[u] for u in sorted(nbrs)], axis=0)
        n = normals[remap[v]]
        delta = centroid - em.pos[v]
        new_pos[v] = em.pos[v] + (delta - n * float(n @ delta))
    for v, p in new_pos.items():
        em.pos[v] = p
    interior = [v for v in alive if v not in boundary]
    if interior:
        pts = np.array([em.pos[v] for v in interior])
        fidx, bary, _ = closest_points(source_mesh, pts)
        proj = interpolate_at(source_mesh.vertices, source_mesh.faces, fidx, bary)
        for v, p in zip(interior, proj):
            em.pos[v] = p


def remesh(mesh, target_edge_length, iterations=5):
    """Isotropic remeshing toward ``target_edge_length``.

    Returns (new TriMesh, Provenance). The input must be manifold
    (boundary allowed); topology-preserving by construction, so the Euler
    characteristic of a closed input never changes.
    """
    if not target_edge_length > 0:
        raise RemeshError("target edge length must be positive")
    em = _EditMesh(mesh)
    max_len = SPLIT_FACTOR * target_edge_length
    min_len = COLLAPSE_FACTOR * target_edge_length
    for _ in range(iterations):
        _split_pass(em, max_len)
        _collapse_pass(em, min_len, max_len)
        _flip_pass(em)
        _smooth_and_project(em, mesh)
    verts, faces = em.compact()
    fidx, bary, _ = closest_points(mesh, verts)
    snapped = interpolate_at(mesh.vertices, mesh.faces, fidx, bary)
    return TriMesh(snapped, faces), Provenance(fidx, bary)


def reproject_tables(model, new_mesh, provenance):
    """Transfer every per-vertex model table onto a remeshed topology.

    Expression basis, pose correctives and skin weights interpolate
    barycentrically (weights renormalized to sum 1); labels take the
    barycentric-weight argmax (ties to the lowest class index). The joint
    regressor redistributes each old vertex's mass onto the corners of the
    nearest new-mesh face, keeping rows row-stochastic.
    """
    n_new = new_mesh.n_vertices
    if len(provenance.face) != n_new:
        raise RemeshError(
            f"provenance covers {len(provenance.face)} vertices, mesh has {n_new}"
        )
    faces_old = model.faces
    fidx, bary = provenance.face, provenance.bary

    expr = interpolate_at(model.expr_basis, faces_old, fidx, bary)
    corr = interpolate_at(model.pose_correctives, faces_old, fidx, bary)
    weights = interpolate_at(model.skin_weights, faces_old, fidx, bary)
    weights = np.clip(weights, 0.0, None)
    weights /= weights.sum(axis=1, keepdims=True)

    annotation = None
    if model.annotation is not None:
        labels_old = model.annotation.labels
        corners = faces_old[fidx]
        corner_labels = labels_old[corners]
        scores = np.zeros((n_new, model.annotation.n_classes))
        for c in range(model.annotation.n_classes):
            scores[:, c] = np.where(corner_labels == c, bary, 0.0).sum(axis=1)
        annotation = SemanticAnnotation(model.annotation.classes, np.argmax(scores, axis=1))

    # Joint regressor: old vertex mass -> barycentric corners of the nearest
    # point on the new surface; renormalize rows to their original sums.
    old_fidx, old_bary, _ = closest_points(new_mesh, model.canonical)
    regressor = np.zeros((model.n_joints, n_new))
    new_corners = new_mesh.faces[old_fidx]  # (n_old, 3)
    for j in range(model.n_joints):
        mass = model.joint_regressor[j][:, None] * old_bary
        np.add.at(regressor[j], new_corners.reshape(-1), mass.reshape(-1))
    row_old = model.joint_regressor.sum(axis=1)
    row_new = regressor.sum(axis=1)
    scale = np.where(row_new != 0, row_old / np.where(row_new != 0, row_new, 1.0), 1.0)
    regressor *= scale[:, None]

    extras = {}
    for name, value in model.extras.items():
        if name in ("albedo", "roughness", "specular"):
            extras[name] = interpolate_at(np.asarray(value, dtype=np.float64),
                                          faces_old, fidx, bary)
        elif name == "landmark_verts":
            old_pts = model.canonical[np.asarray(value, dtype=np.int64)]
            d2 = ((old_pts[:, None, :] - new_mesh.vertices[None, :, :]) ** 2).sum(axis=2)
            extras[name] = np.argmin(d2, axis=1).astype(np.uint32)
        else:
            extras[name] = value

    return DeformModel(
        canonical=new_mesh.vertices,
        faces=new_mesh.faces,
        expr_basis=expr,
        pose_correctives=corr,
        skin_weights=weights,
        joint_regressor=regressor,
        parents=model.parents,
        annotation=annotation,
        extras=extras,
    )
