"""Posed-geometry model: canonical vertices plus expression and pose-corrective
offsets, skinned by linear blend skinning over a small joint hierarchy.

The model is immutable and shareable across threads; posing is a pure
function of (model, pose, expression). Identity shape is baked into the
canonical vertices; joints are regressed from those canonical vertices so
expression changes never move the skeleton.
"""

from dataclasses import dataclass, field

import numpy as np

from .container import decode_text, encode_text, read_container, write_container
from .errors import NumericalError, ValidationError
from .mesh import SemanticAnnotation, TriMesh


class DeformError(ValidationError):
    """Inconsistent model tables or parameter dimensions."""


@dataclass(frozen=True)
class DeformModel:
    canonical: np.ndarray          # (n_V, 3)
    faces: np.ndarray              # (n_F, 3)
    expr_basis: np.ndarray         # (n_V, 3, n_e)
    pose_correctives: np.ndarray   # (n_V, 3, 9*(n_j-1))
    skin_weights: np.ndarray       # (n_V, n_j), rows sum to 1
    joint_regressor: np.ndarray    # (n_j, n_V)
    parents: np.ndarray            # (n_j,), root at 0 with parents[0] == 0
    annotation: SemanticAnnotation = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        canonical = np.asarray(self.canonical, dtype=np.float64)
        faces = np.asarray(self.faces, dtype=np.int64)
        expr = np.asarray(self.expr_basis, dtype=np.float64)
        corr = np.asarray(self.pose_correctives, dtype=np.float64)
        weights = np.asarray(self.skin_weights, dtype=np.float64)
        regressor = np.asarray(self.joint_regressor, dtype=np.float64)
        parents = np.asarray(self.parents, dtype=np.int64)

        n_v = len(canonical)
        n_j = len(parents)
        for name, table in (("expr_basis", expr), ("pose_correctives", corr),
                            ("skin_weights", weights)):
            if table.shape[0] != n_v:
                raise DeformError(f"{name} has {table.shape[0]} rows for {n_v} vertices")
        if expr.ndim != 3 or expr.shape[1] != 3:
            raise DeformError(f"expr_basis must be (n_V, 3, n_e), got {expr.shape}")
        if corr.ndim != 3 or corr.shape[1:] != (3, 9 * (n_j - 1)):
            raise DeformError(
                f"pose_correctives must be (n_V, 3, {9 * (n_j - 1)}), got {corr.shape}"
            )
        if weights.shape != (n_v, n_j):
            raise DeformError(f"skin_weights must be ({n_v}, {n_j}), got {weights.shape}")
        if weights.min() < 0:
            raise DeformError(f"negative skin weight {weights.min()}")
        sums = weights.sum(axis=1)
        worst = np.abs(sums - 1.0).max() if n_v else 0.0
        if worst > 1e-9:
            raise DeformError(f"skin weight rows must sum to 1 (worst deviation {worst:.3e})")
        if regressor.shape != (n_j, n_v):
            raise DeformError(f"joint_regressor must be ({n_j}, {n_v}), got {regressor.shape}")
        if parents[0] != 0:
            raise DeformError("joint 0 must be the root (parents[0] == 0)")
        for j in range(1, n_j):
            seen, p = set(), j
            while p != 0:
                if p in seen or parents[p] == p:
                    raise DeformError(f"parents array has a cycle through joint {j}")
                seen.add(p)
                p = int(parents[p])
        if self.annotation is not None and len(self.annotation.labels) != n_v:
            raise DeformError("annotation label count does not match vertex count")

        for arr in (canonical, faces, expr, corr, weights, regressor, parents):
            arr.setflags(write=False)
        object.__setattr__(self, "canonical", canonical)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "expr_basis", expr)
        object.__setattr__(self, "pose_correctives", corr)
        object.__setattr__(self, "skin_weights", weights)
        object.__setattr__(self, "joint_regressor", regressor)
        object.__setattr__(self, "parents", parents)

    @property
    def n_vertices(self):
        return len(self.canonical)

    @property
    def n_expr(self):
        return self.expr_basis.shape[2]

    @property
    def n_joints(self):
        return len(self.parents)

    def canonical_mesh(self):
        return TriMesh(self.canonical, self.faces)


@dataclass(frozen=True)
class PoseParams:
    """Axis-angle rotation per joint (radians x unit axis) plus a global
    translation in model units."""

    joint_rotations: np.ndarray  # (n_j, 3)
    global_translation: np.ndarray = None  # (3,)

    def __post_init__(self):
        rot = np.asarray(self.joint_rotations, dtype=np.float64)
        if rot.ndim != 2 or rot.shape[1] != 3:
            raise DeformError(f"joint_rotations must be (n_j, 3), got {rot.shape}")
        trans = self.global_translation
        trans = np.zeros(3) if trans is None else np.asarray(trans, dtype=np.float64)
        if not (np.isfinite(rot).all() and np.isfinite(trans).all()):
            raise DeformError("pose parameters must be finite")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "joint_rotations", rot)
        object.__setattr__(self, "global_translation", trans)

    @classmethod
    def rest(cls, n_joints):
        return cls(np.zeros((n_joints, 3)))

    def is_rest(self):
        return not self.joint_rotations.any() and not self.global_translation.any()


@dataclass(frozen=True)
class ExprParams:
    coeffs: np.ndarray  # (n_e,)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64)
        if c.ndim != 1 or not np.isfinite(c).all():
            raise DeformError("expression coefficients must be a finite 1-d vector")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, n_expr):
        return cls(np.zeros(n_expr))


def rodrigues(axis_angle):
    """Axis-angle (..., 3) to rotation matrices (..., 3, 3).

    The zero vector maps to the identity with no division by zero.
    """
    r = np.asarray(axis_angle, dtype=np.float64)
    single = r.ndim == 1
    r = np.atleast_2d(r)
    theta = np.linalg.norm(r, axis=-1)
    safe = np.where(theta > 0, theta, 1.0)
    k = r / safe[..., None]
    zeros = np.zeros_like(theta)
    K = np.stack(
        [
            np.stack([zeros, -k[..., 2], k[..., 1]], axis=-1),
            np.stack([k[..., 2], zeros, -k[..., 0]], axis=-1),
            np.stack([-k[..., 1], k[..., 0], zeros], axis=-1),
        ],
        axis=-2,
    )
    eye = np.broadcast_to(np.eye(3), K.shape)
    sin = np.sin(theta)[..., None, None]
    cos = np.cos(theta)[..., None, None]
    R = eye + sin * K + (1.0 - cos) * (K @ K)
    return R[0] if single else R


def expression_offset(model, psi):
    """Per-vertex offsets from the expression basis: linear in psi."""
    coeffs = psi.coeffs if isinstance(psi, ExprParams) else np.asarray(psi, dtype=np.float64)
    if coeffs.shape != (model.n_expr,):
        raise DeformError(
            f"expression has {coeffs.shape[0]} coefficients, model expects {model.n_expr}"
        )
    return model.expr_basis @ coeffs


def corrective_features(theta, n_joints):
    """Rotation-deviation feature: concat of vec(R(theta_j) - I) over
    non-root joints. Zero at rest, so correctives vanish in the rest pose."""
    rot = theta.joint_rotations if isinstance(theta, PoseParams) else np.asarray(theta)
    if rot.shape != (n_joints, 3):
        raise DeformError(f"pose has {rot.shape} rotations, model expects ({n_joints}, 3)")
    if n_joints <= 1:
        return np.zeros(0)
    R = rodrigues(rot[1:])
    return (R - np.eye(3)).reshape(-1)


def pose_correctives(model, theta):
    """Per-vertex corrective offsets, linear in the rotation deviations."""
    f = corrective_features(theta, model.n_joints)
    return model.pose_correctives @ f


def regress_joints(model, shaped_vertices):
    """Joint positions as linear combinations of mesh vertices."""
    verts = np.asarray(shaped_vertices, dtype=np.float64)
    if verts.shape != (model.n_vertices, 3):
        raise DeformError(
            f"vertex table {verts.shape} does not match model ({model.n_vertices}, 3)"
        )
    return model.joint_regressor @ verts


def _joint_order(parents):
    """Joint indices ordered so parents precede children."""
    n = len(parents)
    order, placed = [], np.zeros(n, dtype=bool)
    while len(order) < n:
        progressed = False
        for j in range(n):
            if not placed[j] and (j == 0 or placed[parents[j]]):
                order.append(j)
                placed[j] = True
                progressed = True
        if not progressed:
            raise DeformError("parents array is not a tree rooted at joint 0")
    return order


def lbs(vertices, joints, theta, weights, parents):
    """Standard linear blend skinning.

    World transforms compose root to leaf, each joint rotating about its
    rest position; every vertex gets the weight-blended rigid transform.
    The rest pose is an exact identity (plus global translation).
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    joints = np.asarray(joints, dtype=np.float64)
    parents = np.asarray(parents, dtype=np.int64)
    n_j = len(parents)
    rots = rodrigues(theta.joint_rotations)

    local = np.zeros((n_j, 4, 4))
    local[:, 3, 3] = 1.0
    local[:, :3, :3] = rots
    local[:, :3, 3] = joints - np.einsum("jab,jb->ja", rots, joints)

    world = np.zeros_like(local)
    for j in _joint_order(parents):
        world[j] = local[j] if j == 0 else world[parents[j]] @ local[j]

    blended = np.einsum("vj,jab->vab", weights, world)
    posed = np.einsum("vab,vb->va", blended[:, :3, :3], vertices) + blended[:, :3, 3]
    return posed + theta.global_translation


def pose_mesh(model, theta, psi):
    """Full deformation: canonical + correctives + expression, then skinning.

    Joints are regressed from the canonical vertices, not the displaced ones.
    """
    shaped = model.canonical + pose_correctives(model, theta) + expression_offset(model, psi)
    joints = regress_joints(model, model.canonical)
    return lbs(shaped, joints, theta, model.skin_weights, model.parents)


@dataclass(frozen=True)
class FitResult:
    params: ExprParams
    residual: float


def fit_expression(model, target, theta=None):
    """Least-squares expression coefficients at rest pose.

    Solves min_psi ||canonical + basis . psi - target||^2 by QR-backed
    least squares. Only valid in the linear rest-pose regime. Raises
    NumericalError naming the rank when the basis is rank-deficient.
    """
    if theta is not None and not theta.is_rest():
        raise DeformError("fit_expression requires the rest pose (theta = 0)")
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (model.n_vertices, 3):
        raise DeformError(
            f"target {target.shape} does not match model ({model.n_vertices}, 3)"
        )
    A = model.expr_basis.reshape(-1, model.n_expr)
    rank = np.linalg.matrix_rank(A)
    if rank < model.n_expr:
        raise NumericalError(
            f"expression basis is rank deficient: rank {rank} < {model.n_expr}"
        )
    rhs = (target - model.canonical).reshape(-1)
    psi, _, _, _ = np.linalg.lstsq(A, rhs, rcond=None)
    residual = float(np.linalg.norm(A @ psi - rhs))
    return FitResult(ExprParams(psi), residual)


# --- model container I/O -------------------------------------------------

def save_model(path, model):
    """Write a DeformModel (plus annotation and extras) as an FWB1 file."""
    chunks = {
        "canonical": model.canonical,
        "faces": model.faces.astype(np.uint32),
        "expr_basis": model.expr_basis,
        "pose_correctives": model.pose_correctives,
        "skin_weights": model.skin_weights,
        "joint_regressor": model.joint_regressor,
        "parents": model.parents.astype(np.uint32),
    }
    if model.annotation is not None:
        chunks["labels"] = model.annotation.labels.astype(np.uint32)
        chunks["class_names"] = encode_text("\n".join(model.annotation.classes))
    chunks.update(model.extras)
    write_container(path, chunks)


def load_model(path):
    chunks = read_container(path)
    needed = ("canonical", "faces", "expr_basis", "pose_correctives",
              "skin_weights", "joint_regressor", "parents")
    missing = [name for name in needed if name not in chunks]
    if missing:
        raise DeformError(f"{path}: model container missing chunks {missing}")
    annotation = None
    if "labels" in chunks and "class_names" in chunks:
        annotation = SemanticAnnotation(
            tuple(decode_text(chunks["class_names"]).split("\n")),
            chunks["labels"].astype(np.int64),
        )
    extras = {k: v for k, v in chunks.items() if k not in needed + ("labels", "class_names")}
    return DeformModel(
        canonical=chunks["canonical"],
        faces=chunks["faces"].astype(np.int64),
        expr_basis=chunks["expr_basis"],
        pose_correctives=chunks["pose_correctives"],
        skin_weights=chunks["skin_weights"],
        joint_regressor=chunks["joint_regressor"],
        parents=chunks["parents"].astype(np.int64),
        annotation=annotation,
        extras=extras,
    )
