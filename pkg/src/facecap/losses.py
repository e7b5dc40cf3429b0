"""Every in-scope term of the reconstruction objective, as pure evaluators.

Each loss is nonnegative and exactly zero at its stated minimum. The
perceptual (vgg) term stays in the weight table and the total-objective
signature for interface completeness, but its value must be zero — it
needs a pretrained network this artifact does not ship.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ValidationError
from .mesh import face_normals, uniform_laplacian

LOG_EPS = 1e-3
ROUGHNESS_PRIOR = 0.5
SPECULAR_PRIOR = 0.5
SMOOTH_RADIUS = 0.01


class LossError(ValidationError):
    pass


@dataclass(frozen=True)
class LossWeights:
    rgb: float = 1.0
    vgg: float = 0.1
    mask: float = 2.0
    flame: float = 20.0
    laplacian: float = 100.0
    normal: float = 0.1
    smooth: float = 0.01
    r: float = 0.01
    spec: float = 0.01
    light: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise LossError(f"loss weight '{f.name}' must be nonnegative")


def load_loss_config(path):
    """Parse a `key = value` UTF-8 config into (LossWeights, extra dict).

    Keys named after weight fields (optionally prefixed ``lambda_``)
    override the defaults; anything else lands in the extras dict. Blank
    lines and ``#`` comments are ignored.
    """
    names = {f.name for f in fields(LossWeights)}
    overrides, extras = {}, {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise LossError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key[len("lambda_"):] if key.startswith("lambda_") else key
            try:
                value = float(value)
            except ValueError:
                raise LossError(f"{path}:{lineno}: bad number '{value}'") from None
            (overrides if key in names else extras)[key] = value
    return LossWeights(**overrides), extras


def _check_same_shape(a, b, what):
    if a.shape != b.shape:
        raise LossError(f"{what}: shapes {a.shape} and {b.shape} differ")


def loss_rgb(rendered, target, mask=None, eps=LOG_EPS):
    """Photometric L2 in log space over masked pixels.

    Symmetric in its arguments. Scaling both images by the same factor
    leaves the value unchanged only in the eps -> 0 limit; at the default
    eps the dark end is deliberately compressed.
    """
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_same_shape(rendered, target, "rgb loss")
    diff = np.log(rendered + eps) - np.log(target + eps)
    sq = (diff * diff).sum(axis=-1)
    if mask is None:
        return float(sq.mean())
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != sq.shape:
        raise LossError(f"rgb loss: mask {mask.shape} does not match image {sq.shape}")
    if not mask.any():
        raise LossError("rgb loss: empty mask")
    return float(sq[mask].mean())


def loss_mask(rasterized, target):
    """Mean squared difference of binary coverage over all pixels."""
    rasterized = np.asarray(rasterized, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_same_shape(rasterized, target, "mask loss")
    diff = rasterized - target
    return float((diff * diff).mean())


def loss_flame_reg(predicted_basis, reference_basis):
    """Mean squared element difference between predicted and reference
    expression bases (the reference is the reprojected table after a remesh)."""
    pred = np.asarray(predicted_basis, dtype=np.float64)
    ref = np.asarray(reference_basis, dtype=np.float64)
    _check_same_shape(pred, ref, "basis regularizer")
    diff = pred - ref
    return float((diff * diff).mean())


def loss_laplacian(mesh, vertices=None):
    """Mean squared norm of the uniform Laplacian of vertex positions."""
    values = mesh.vertices if vertices is None else np.asarray(vertices, dtype=np.float64)
    lap = uniform_laplacian(mesh, values)
    return float((lap * lap).sum(axis=1).mean())


def loss_normal(mesh):
    """Mean (1 - cos angle) over adjacent face-normal pairs."""
    normals, _ = face_normals(mesh)
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    e = np.sort(e, axis=1)
    face_of_edge = np.tile(np.arange(len(f)), 3)
    order = np.lexsort((face_of_edge, e[:, 1], e[:, 0]))
    e, face_of_edge = e[order], face_of_edge[order]
    same = (e[1:] == e[:-1]).all(axis=1)
    if not same.any():
        raise LossError("normal loss: mesh has no adjacent face pairs")
    fa = face_of_edge[:-1][same]
    fb = face_of_edge[1:][same]
    cos = (normals[fa] * normals[fb]).sum(axis=1)
    return float((1.0 - cos).mean())


def loss_smooth(points, values, radius=SMOOTH_RADIUS):
    """Mean squared field difference over point pairs within ``radius``.

    Stand-in smoothness prior for albedo/roughness fields sampled at
    neighboring canonical points; zero when no pair falls inside the radius.
    """
    points = np.asarray(points, dtype=np.float64)
    values = np.atleast_2d(np.asarray(values, dtype=np.float64).T).T
    if len(points) == 0:
        raise LossError("smooth loss: empty sample set")
    if len(points) != len(values):
        raise LossError("smooth loss: point/value counts differ")
    delta = points[:, None, :] - points[None, :, :]
    d2 = (delta * delta).sum(axis=2)
    i, j = np.triu_indices(len(points), k=1)
    near = d2[i, j] <= radius * radius
    if not near.any():
        return 0.0
    diff = values[i[near]] - values[j[near]]
    return float((diff * diff).sum(axis=1).mean())


def loss_roughness(samples, prior=ROUGHNESS_PRIOR):
    """Mean squared deviation of roughness samples from the prior center."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise LossError("roughness loss: empty sample set")
    diff = samples - prior
    return float((diff * diff).mean())


def loss_specular(samples, prior=SPECULAR_PRIOR):
    """Mean squared deviation of specular-intensity samples from the prior."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise LossError("specular loss: empty sample set")
    diff = samples - prior
    return float((diff * diff).mean())


def loss_light(diffuse_samples):
    """Mean squared deviation of diffuse shading from its per-sample channel
    mean; zero exactly when the light is achromatic.

    Deviations are computed from channel differences so equal channels give
    an exact zero instead of mean-rounding noise.
    """
    ld = np.asarray(diffuse_samples, dtype=np.float64)
    if ld.size == 0:
        raise LossError("light loss: empty sample set")
    if ld.shape[-1] != 3:
        raise LossError(f"light loss expects RGB samples, got {ld.shape}")
    d1 = ld[..., 1] - ld[..., 0]
    d2 = ld[..., 2] - ld[..., 0]
    off = (d1 + d2) / 3.0
    dev = np.stack([-off, d1 - off, d2 - off], axis=-1)
    return float((dev * dev).mean())


TERM_ORDER = ("rgb", "vgg", "mask", "flame", "laplacian", "normal",
              "smooth", "r", "spec", "light")


def total_objective(terms, weights=None):
    """Weighted sum of the loss terms with a per-term breakdown.

    ``terms`` maps term names (see TERM_ORDER) to values; missing terms
    count as zero. The vgg slot is accepted but must be zero.
    """
    weights = weights or LossWeights()
    unknown = set(terms) - set(TERM_ORDER)
    if unknown:
        raise LossError(f"unknown loss terms {sorted(unknown)}")
    breakdown = {}
    total = 0.0
    for name in TERM_ORDER:
        value = float(terms.get(name, 0.0))
        if value < 0:
            raise LossError(f"loss term '{name}' is negative ({value})")
        if name == "vgg" and value != 0.0:
            raise LossError("the perceptual term is out of scope and must be 0")
        weighted = getattr(weights, name) * value
        breakdown[name] = weighted
        total += weighted
    return total, breakdown
