"""Split diffuse/specular shading: materials, per-video light networks, and
the color compositor C = albedo * l_d + specular * l_s.

The light networks consume a fixed degree-4 real spherical-harmonic feature
of the query direction concatenated with roughness — a deterministic
stand-in for a prefiltered directional encoding — and squash outputs to
[0,1] with a sigmoid. Diffuse queries use the surface normal at roughness
pinned to 1; specular queries use the reflection vector at the material
roughness.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .nn.mlp import Mlp, init_mlp, mlp_from_chunks, mlp_to_chunks

R_MIN = 0.04
SH_DIM = 25  # (degree+1)^2 for degree 4


class ShadingError(ValidationError):
    pass


@dataclass(frozen=True)
class MaterialSample:
    """Albedo (…,3), roughness (…,) and specular intensity (…,).

    All components are nonnegative (they come out of a softplus) and
    roughness is clamped to [R_MIN, 1] on construction. Scalar shapes hold
    a single sample; leading axes hold per-vertex or per-pixel batches.
    """

    albedo: np.ndarray
    roughness: np.ndarray
    specular: np.ndarray

    def __post_init__(self):
        albedo = np.asarray(self.albedo, dtype=np.float64)
        rough = np.asarray(self.roughness, dtype=np.float64)
        spec = np.asarray(self.specular, dtype=np.float64)
        if albedo.shape[-1] != 3:
            raise ShadingError(f"albedo must end in 3 channels, got {albedo.shape}")
        if albedo.shape[:-1] != rough.shape or rough.shape != spec.shape:
            raise ShadingError(
                f"material shapes disagree: albedo {albedo.shape}, "
                f"roughness {rough.shape}, specular {spec.shape}"
            )
        if albedo.min() < 0 or spec.min() < 0 or rough.min() < 0:
            raise ShadingError("material components must be nonnegative")
        rough = np.clip(rough, R_MIN, 1.0)
        for arr in (albedo, rough, spec):
            arr.setflags(write=False)
        object.__setattr__(self, "albedo", albedo)
        object.__setattr__(self, "roughness", rough)
        object.__setattr__(self, "specular", spec)


def reflect(view, normal):
    """Mirror the (unit) view vector about the (unit) normal."""
    v = np.asarray(view, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    for name, arr in (("view", v), ("normal", n)):
        norms = np.linalg.norm(arr, axis=-1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ShadingError(f"{name} vectors must be unit length within 1e-6")
    dot = (n * v).sum(axis=-1, keepdims=True)
    return 2.0 * dot * n - v


def sh_basis(dirs):
    """Real spherical harmonics through degree 4, hardcoded Cartesian forms.

    dirs: (..., 3) unit vectors; returns (..., 25). Constants follow the
    standard orthonormalized real basis (band order l = 0..4, m = -l..l).
    """
    d = np.asarray(dirs, dtype=np.float64)
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    x2, y2, z2 = x * x, y * y, z * z
    out = np.empty(d.shape[:-1] + (SH_DIM,))
    out[..., 0] = 0.28209479177387814
    out[..., 1] = 0.4886025119029199 * y
    out[..., 2] = 0.4886025119029199 * z
    out[..., 3] = 0.4886025119029199 * x
    out[..., 4] = 1.0925484305920792 * x * y
    out[..., 5] = 1.0925484305920792 * y * z
    out[..., 6] = 0.31539156525252005 * (3.0 * z2 - 1.0)
    out[..., 7] = 1.0925484305920792 * x * z
    out[..., 8] = 0.5462742152960396 * (x2 - y2)
    out[..., 9] = 0.5900435899266435 * y * (3.0 * x2 - y2)
    out[..., 10] = 2.890611442640554 * x * y * z
    out[..., 11] = 0.4570457994644658 * y * (5.0 * z2 - 1.0)
    out[..., 12] = 0.3731763325901154 * z * (5.0 * z2 - 3.0)
    out[..., 13] = 0.4570457994644658 * x * (5.0 * z2 - 1.0)
    out[..., 14] = 1.445305721320277 * z * (x2 - y2)
    out[..., 15] = 0.5900435899266435 * x * (x2 - 3.0 * y2)
    out[..., 16] = 2.5033429417967046 * x * y * (x2 - y2)
    out[..., 17] = 1.7701307697799304 * y * z * (3.0 * x2 - y2)
    out[..., 18] = 0.9461746957575601 * x * y * (7.0 * z2 - 1.0)
    out[..., 19] = 0.6690465435572892 * y * z * (7.0 * z2 - 3.0)
    out[..., 20] = 0.10578554691520431 * (35.0 * z2 * z2 - 30.0 * z2 + 3.0)
    out[..., 21] = 0.6690465435572892 * x * z * (7.0 * z2 - 3.0)
    out[..., 22] = 0.47308734787878004 * (x2 - y2) * (7.0 * z2 - 1.0)
    out[..., 23] = 1.7701307697799304 * x * z * (x2 - 3.0 * y2)
    out[..., 24] = 0.6258357354491761 * (x2 * (x2 - 3.0 * y2) - y2 * (3.0 * x2 - y2))
    return out


def light_input_dim():
    return SH_DIM + 1


class LightEvaluator:
    """One diffuse and one specular MLP per video, sigmoid outputs."""

    def __init__(self, diffuse, specular):
        if len(diffuse) != len(specular):
            raise ShadingError("diffuse/specular network counts differ")
        for net in list(diffuse) + list(specular):
            if not isinstance(net, Mlp) or net.output != "sigmoid":
                raise ShadingError("light networks must be sigmoid-output MLPs")
            if net.in_dim != light_input_dim() or net.out_dim != 3:
                raise ShadingError(
                    f"light networks map {light_input_dim()} features to RGB, "
                    f"got {net.in_dim}->{net.out_dim}"
                )
        self.diffuse = list(diffuse)
        self.specular = list(specular)

    @property
    def n_videos(self):
        return len(self.diffuse)

    def _check(self, video):
        if not 0 <= video < self.n_videos:
            raise ShadingError(
                f"video index {video} out of range for {self.n_videos} lights"
            )

    def eval_diffuse(self, video, normals):
        """Diffuse shading l_d for unit normals (...,3); roughness pinned to 1."""
        self._check(video)
        feats = _light_features(normals, 1.0)
        return self.diffuse[video].forward(feats)

    def eval_specular(self, video, reflections, roughness):
        """Specular shading l_s for unit reflection vectors and roughness."""
        self._check(video)
        feats = _light_features(reflections, roughness)
        return self.specular[video].forward(feats)


def _light_features(dirs, roughness):
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    rough = np.broadcast_to(np.asarray(roughness, dtype=np.float64), dirs.shape[:-1])
    return np.concatenate([sh_basis(dirs), rough[..., None]], axis=-1)


def eval_light(light, video, direction, roughness=1.0, kind="diffuse"):
    """Single entry point over the diffuse/specular queries.

    Diffuse evaluates the surface normal with roughness pinned to 1;
    specular evaluates the reflection direction at the material roughness.
    """
    if kind == "diffuse":
        return light.eval_diffuse(video, direction)
    if kind == "specular":
        return light.eval_specular(video, direction, roughness)
    raise ShadingError(f"unknown light query kind '{kind}'")


def make_light_evaluator(n_videos, hidden=(64, 64, 64), seed=0, scale=1.0):
    """Seeded light networks (3 hidden layers of 64, ReLU, sigmoid output)."""
    widths = [light_input_dim(), *hidden, 3]
    diffuse, specular = [], []
    for i in range(n_videos):
        d = init_mlp(widths, hidden="relu", output="sigmoid", seed=seed + 2 * i)
        s = init_mlp(widths, hidden="relu", output="sigmoid", seed=seed + 2 * i + 1)
        if scale != 1.0:
            for net in (d, s):
                net.weights = [w * scale for w in net.weights]
        diffuse.append(d)
        specular.append(s)
    return LightEvaluator(diffuse, specular)


def shade(material, l_d, l_s):
    """Color composition: albedo * diffuse + specular intensity * specular."""
    l_d = np.asarray(l_d, dtype=np.float64)
    l_s = np.asarray(l_s, dtype=np.float64)
    return material.albedo * l_d + material.specular[..., None] * l_s


def lights_to_chunks(light, prefix="light"):
    chunks = {}
    for i in range(light.n_videos):
        chunks.update(mlp_to_chunks(light.diffuse[i], f"{prefix}{i}_diff_"))
        chunks.update(mlp_to_chunks(light.specular[i], f"{prefix}{i}_spec_"))
    return chunks


def lights_from_chunks(chunks, prefix="light"):
    diffuse, specular = [], []
    i = 0
    while f"{prefix}{i}_diff_meta" in chunks:
        diffuse.append(mlp_from_chunks(chunks, f"{prefix}{i}_diff_"))
        specular.append(mlp_from_chunks(chunks, f"{prefix}{i}_spec_"))
        i += 1
    if not diffuse:
        raise ShadingError("no light network chunks found")
    return LightEvaluator(diffuse, specular)
