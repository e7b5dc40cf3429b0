"""Synthetic ground-truth harness: a toy head with exact everything.

The head is an ellipsoid icosphere with a three-joint hierarchy (root,
neck, jaw), procedural smooth skinning, eight smooth expression
blendshapes, seven semantic classes, trig-pattern materials and seeded
light networks. The ground-truth trajectory is smooth and periodic with
the default warp-metric interval (5 frames), with parameters computed
from (t mod period) so evaluated frame pairs have bitwise-identical
geometry — that is what makes exact self-consistency checks possible.
"""

from pathlib import Path

import numpy as np

from .deform import DeformModel, pose_mesh, save_model
from .imageio import save_png_gray, save_png_rgb
from .mesh import SemanticAnnotation, make_icosphere
from .metrics import DEFAULT_INTERVAL_MS
from .raster import Camera, project, rasterize, render_semantic, render_shaded
from .shading import (
    MaterialSample,
    lights_from_chunks,
    lights_to_chunks,
    make_light_evaluator,
)
from .track import ParamTrack, save_track

ELLIPSOID = np.array([0.78, 1.0, 0.88])
DEFAULT_PERIOD = 5  # frames; matches 170 ms at 30 fps

_CLASSES = ("skin", "nose", "ears", "eyes", "upper_lip", "lower_lip", "mouth_interior")

# Landmark anchors on the unit sphere (nose tip, chin, eyes, mouth corners, ears).
_LANDMARK_DIRS = np.array([
    [0.0, -0.05, 1.0],
    [0.0, -0.85, 0.5],
    [-0.38, 0.30, 0.85],
    [0.38, 0.30, 0.85],
    [-0.45, -0.52, 0.72],
    [0.45, -0.52, 0.72],
    [-1.0, 0.05, 0.0],
    [1.0, 0.05, 0.0],
])

_EXPR_CENTERS = np.array([
    [0.0, -0.05, 1.0],    # nose wrinkle
    [0.0, -0.62, 0.78],   # chin / lower lip
    [-0.5, -0.2, 0.85],   # left cheek
    [0.5, -0.2, 0.85],    # right cheek
    [-0.35, 0.42, 0.84],  # left brow
    [0.35, 0.42, 0.84],   # right brow
    [0.0, -0.42, 0.9],    # upper lip
    [0.0, 0.75, 0.65],    # forehead
])


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _semantic_labels(units):
    """Procedural 7-class labels from unit-sphere directions."""
    labels = np.zeros(len(units), dtype=np.int64)  # skin

    def disc(center, radius):
        return (units @ _unit(np.asarray(center, dtype=np.float64))) > np.cos(radius)

    labels[disc([0, -0.05, 1], 0.20)] = _CLASSES.index("nose")
    labels[disc([-1, 0.05, 0], 0.28) | disc([1, 0.05, 0], 0.28)] = _CLASSES.index("ears")
    labels[disc([-0.38, 0.3, 0.85], 0.16) | disc([0.38, 0.3, 0.85], 0.16)] = _CLASSES.index("eyes")
    front = units[:, 2] > 0.55
    mouth_w = np.abs(units[:, 0]) < 0.42
    y = units[:, 1]
    labels[front & mouth_w & (y > -0.50) & (y <= -0.36)] = _CLASSES.index("upper_lip")
    labels[front & mouth_w & (y > -0.56) & (y <= -0.50)] = _CLASSES.index("mouth_interior")
    labels[front & mouth_w & (y > -0.72) & (y <= -0.56)] = _CLASSES.index("lower_lip")
    return labels


def build_toy_head(n_expr=8, seed=0, subdivisions=3, n_videos=2):
    """Ellipsoid toy head with everything the pipeline needs baked in."""
    sphere = make_icosphere(subdivisions=subdivisions)
    units = sphere.vertices
    verts = units * ELLIPSOID
    n_v = len(verts)
    x, y, z = verts[:, 0], verts[:, 1], verts[:, 2]

    # Smooth skinning: positive scores normalized to a partition of unity.
    s_root = np.ones(n_v)
    s_neck = 2.2 * np.exp(-(((y + 1.0) / 0.45) ** 2))
    s_jaw = 2.8 * np.exp(-(((y + 0.45) / 0.32) ** 2 + ((z - 0.62) / 0.5) ** 2))
    scores = np.stack([s_root, s_neck, s_jaw], axis=1)
    skin_weights = scores / scores.sum(axis=1, keepdims=True)

    # Joint regressor rows: normalized Gaussians around anchor points.
    anchors = np.array([[0.0, 0.05, 0.0], [0.0, -0.8, -0.1], [0.0, -0.38, 0.32]])
    regressor = np.empty((3, n_v))
    for j, anchor in enumerate(anchors):
        w = np.exp(-((verts - anchor) ** 2).sum(axis=1) / 0.05)
        regressor[j] = w / w.sum()
    parents = np.array([0, 0, 1], dtype=np.int64)

    # Eight smooth blendshapes: Gaussian bumps displacing along the normal
    # direction with a small tangential swirl.
    basis = np.zeros((n_v, 3, n_expr))
    tangent = np.stack([-units[:, 1], units[:, 0], np.zeros(n_v)], axis=1)
    for k in range(n_expr):
        center = _unit(_EXPR_CENTERS[k % len(_EXPR_CENTERS)])
        bump = np.exp(-((units - center) ** 2).sum(axis=1) / 0.45)
        direction = units + 0.25 * np.sin(k + 1.0) * tangent
        basis[:, :, k] = 0.05 * bump[:, None] * direction

    # Mild pose correctives: smooth trig pattern, small amplitude.
    n_feat = 9 * (len(parents) - 1)
    feats = np.arange(n_feat)
    corr = 0.004 * np.sin(3.0 * verts[:, :, None] * ((feats % 3) + 1) + feats)

    labels = _semantic_labels(units)
    annotation = SemanticAnnotation(_CLASSES, labels)

    albedo = np.stack([
        0.5 + 0.4 * np.sin(9.0 * x + 1.0) * np.cos(7.0 * y),
        0.45 + 0.35 * np.sin(8.0 * z + 2.0) * np.cos(6.0 * x + 1.0),
        0.4 + 0.3 * np.cos(7.0 * y + 3.0 * z),
    ], axis=1)
    albedo = np.clip(albedo, 0.02, 0.98)
    roughness = np.clip(0.5 + 0.25 * np.sin(5.0 * x) * np.cos(3.0 * y), 0.04, 1.0)
    specular = 0.25 + 0.15 * np.cos(4.0 * z + x)

    d2 = 1.0 - units @ _unit(_LANDMARK_DIRS).T  # angular distance proxy
    landmark_verts = np.argmin(d2, axis=0).astype(np.uint32)

    lights = make_light_evaluator(n_videos, seed=seed, scale=0.6)
    extras = {
        "albedo": albedo,
        "roughness": roughness,
        "specular": specular,
        "landmark_verts": landmark_verts,
    }
    extras.update(lights_to_chunks(lights))

    return DeformModel(
        canonical=verts,
        faces=sphere.faces,
        expr_basis=basis,
        pose_correctives=corr,
        skin_weights=skin_weights,
        joint_regressor=regressor,
        parents=parents,
        annotation=annotation,
        extras=extras,
    )


def default_camera(width, height):
    """Front-facing perspective camera; model +y maps up in the image."""
    rot = np.diag([1.0, -1.0, -1.0])
    trans = np.array([0.0, 0.0, 2.8])
    return Camera.perspective(1.17 * width, width / 2.0, height / 2.0, rot, trans)


def make_trajectory(n_frames, camera, n_expr=8, period=DEFAULT_PERIOD):
    """Smooth periodic trajectory; parameters depend only on t mod period.

    Frames a whole period apart are bitwise identical, which pins the
    warp metric's ground-truth behavior to the exact identity.
    """
    theta = np.zeros((n_frames, 3, 3))
    trans = np.zeros((n_frames, 3))
    psi = np.zeros((n_frames, n_expr))
    harmonics = 1 + (np.arange(n_expr) % 3)
    phases = 0.7 * np.arange(n_expr)
    amps = 0.55 + 0.3 * np.sin(1.0 + np.arange(n_expr))
    for t in range(n_frames):
        ang = 2.0 * np.pi * (t % period) / period
        theta[t, 0] = (0.02 * np.sin(ang + 1.0), 0.05 * np.sin(ang), 0.02 * np.sin(2 * ang))
        theta[t, 1] = (0.06 * np.sin(ang), 0.10 * np.sin(2 * ang + 0.4), 0.03 * np.sin(ang + 2.0))
        theta[t, 2] = (0.12 * (0.5 - 0.5 * np.cos(ang)), 0.0, 0.0)
        trans[t] = (0.015 * np.sin(ang), 0.01 * np.sin(2 * ang + 1.0), 0.02 * np.sin(ang + 0.5))
        psi[t] = amps * np.sin(harmonics * ang + phases)
    cameras = tuple([camera] * n_frames)
    return ParamTrack(theta, trans, psi, cameras)


def perturb_track(track, sigma_deg, seed, joint=2, axis=0):
    """Add N(0, sigma) jaw-angle noise per frame.

    The unit noise draw depends only on the seed, so different sigma levels
    share direction and scale linearly — exactly what monotonicity checks
    want.
    """
    rng = np.random.default_rng(seed)
    unit_noise = rng.standard_normal(track.n_frames)
    theta = track.theta.copy()
    theta[:, joint, axis] += np.deg2rad(sigma_deg) * unit_noise
    return ParamTrack(theta, track.trans, track.psi, track.cameras)


def _materials_of(model):
    return MaterialSample(model.extras["albedo"], model.extras["roughness"],
                          model.extras["specular"])


def render_frame(model, track, frame, width, height, lights, video=0):
    """Pose, rasterize, shade, and label one frame; returns (rgb, classes)."""
    verts = pose_mesh(model, track.pose(frame), track.expression(frame))
    mesh = model.canonical_mesh()
    gbuf = rasterize(mesh, verts, track.camera(frame), width, height)
    rgb = render_shaded(gbuf, mesh, verts, _materials_of(model), lights, video,
                        track.camera(frame))
    classes = render_semantic(gbuf, mesh, model.annotation)
    return rgb, classes, verts


def generate_dataset(out_dir, n_frames=64, seed=7, noise_deg=0.0, width=256,
                     height=256, fps=30.0):
    """Write the synthetic dataset: model, GT track, perturbed track,
    frames, class masks and landmark files.

    Layout: model.fwb, track_gt.fwb, track_noise.fwb, frames/frame_%06d.png
    (+ lmk_%06d.txt), masks/mask_%06d.png.
    """
    out = Path(out_dir)
    (out / "frames").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    model = build_toy_head(seed=seed)
    camera = default_camera(width, height)
    period = max(1, int(round(DEFAULT_INTERVAL_MS * fps / 1000.0)))
    track = make_trajectory(n_frames, camera, n_expr=model.n_expr, period=period)
    noisy = perturb_track(track, noise_deg, seed + 1)

    save_model(out / "model.fwb", model)
    save_track(out / "track_gt.fwb", track)
    save_track(out / "track_noise.fwb", noisy)

    lights = lights_from_chunks(model.extras)
    lmk_idx = model.extras["landmark_verts"].astype(np.int64)
    for t in range(n_frames):
        rgb, classes, verts = render_frame(model, track, t, width, height, lights)
        save_png_rgb(out / "frames" / f"frame_{t:06d}.png", rgb)
        save_png_gray(out / "masks" / f"mask_{t:06d}.png", classes)
        pix, _, _ = project(track.camera(t), verts[lmk_idx], width, height)
        lines = [f"{float(p[0])!r} {float(p[1])!r}" for p in pix]
        (out / "frames" / f"lmk_{t:06d}.txt").write_text("\n".join(lines) + "\n",
                                                         encoding="utf-8")
    return model, track, noisy
