"""Posed-geometry evaluation: semantic IoU, geometry-based image warping
PSNR, and landmark L1 — all computed from G-buffers, images and class masks,
with no 3D ground truth required.

The warp metric reconstructs frame t from frame t-k through the tracked
geometry: every covered pixel of frame t maps to a surface point via its
rasterized barycentric coordinates, the same point is evaluated on the
posed geometry of frame t-k, projected, depth-tested against that frame's
G-buffer, and bilinearly sampled from its image. Pixels that were occluded,
off-screen, or on background/hair in either frame are cut from the
comparison by the occlusion mask.
"""

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .deform import pose_mesh
from .errors import ValidationError
from .imageio import load_png_gray, load_png_rgb
from .mesh import interpolate_at
from .raster import BACKGROUND_CLASS, project, rasterize, render_semantic

PSNR_CAP = 99.0
PSNR_CAP_MSE = 1e-10
DEFAULT_INTERVAL_MS = 170.0
DEFAULT_TAU_FRAC = 0.01


class MetricError(ValidationError):
    pass


class EmptyMaskError(MetricError):
    """No pixel survived the occlusion mask; the pair carries no signal."""


@dataclass(frozen=True)
class FramePair:
    """Everything the warp needs about frames t-k and t.

    Posed vertex arrays ride along with the images, masks and G-buffers:
    the source frame's geometry is required to evaluate surface points at
    barycentric coordinates that rarely sit on its own pixel centers.
    """

    t: int
    k: int
    img_t: np.ndarray
    img_tk: np.ndarray
    mask_t: np.ndarray
    mask_tk: np.ndarray
    gbuf_t: object
    gbuf_tk: object
    cam_t: object
    cam_tk: object
    verts_t: np.ndarray
    verts_tk: np.ndarray
    faces: np.ndarray
    exclude_labels: tuple = ()  # e.g. a hair label in external masks

    def __post_init__(self):
        dims = {self.img_t.shape[:2], self.img_tk.shape[:2],
                self.mask_t.shape, self.mask_tk.shape,
                (self.gbuf_t.height, self.gbuf_t.width),
                (self.gbuf_tk.height, self.gbuf_tk.width)}
        if len(dims) != 1:
            raise MetricError(f"frame pair rasters disagree on dimensions: {dims}")
        if self.verts_t.shape != self.verts_tk.shape:
            raise MetricError("frame pair geometries disagree on vertex count")


def bilinear_sample(img, points):
    """Sample (H,W,C) at continuous pixel coordinates (k,2).

    Pixel centers sit at (j+0.5, i+0.5); taps are clamped to the image
    border, so exact-center queries return the pixel value exactly.
    """
    img = np.asarray(img, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    h, w = img.shape[:2]
    u = pts[:, 0] - 0.5
    v = pts[:, 1] - 0.5
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fx = (u - x0)[:, None]
    fy = (v - y0)[:, None]
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    top = img[y0c, x0c] * (1 - fx) + img[y0c, x1c] * fx
    bot = img[y1c, x0c] * (1 - fx) + img[y1c, x1c] * fx
    return top * (1 - fy) + bot * fy


def warp_image(pair, tau_frac=DEFAULT_TAU_FRAC):
    """Reconstruct frame t from frame t-k through the tracked geometry.

    Returns (warped image, occlusion mask). Mask semantics: 1 where the
    surface point was visible and unmasked in both frames, 0 for occluded,
    off-screen, source-background, or background/hair pixels.
    """
    gb_t, gb_tk = pair.gbuf_t, pair.gbuf_tk
    h, w = pair.img_t.shape[:2]
    warped = np.zeros_like(pair.img_t, dtype=np.float64)
    occl = np.zeros((h, w), dtype=bool)
    yy, xx = np.nonzero(gb_t.coverage)
    if len(yy) == 0:
        return warped, occl

    tri = gb_t.tri[yy, xx]
    bary = gb_t.bary[yy, xx]
    surface = interpolate_at(np.asarray(pair.verts_tk, dtype=np.float64),
                             pair.faces, tri, bary)
    pix, depth, valid = project(pair.cam_tk, surface, w, h)

    sx = np.floor(pix[:, 0]).astype(np.int64)
    sy = np.floor(pix[:, 1]).astype(np.int64)
    onscreen = valid & (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    sxc = np.clip(sx, 0, w - 1)
    syc = np.clip(sy, 0, h - 1)

    src_covered = gb_tk.coverage[syc, sxc] & onscreen
    src_depth = gb_tk.depth[syc, sxc]
    covered_depths = gb_tk.depth[gb_tk.coverage]
    depth_range = float(covered_depths.max() - covered_depths.min()) if covered_depths.size else 0.0
    visible = src_covered & (np.abs(depth - src_depth) <= tau_frac * depth_range)

    bad_src = (pair.mask_tk[syc, sxc] == BACKGROUND_CLASS)
    bad_dst = (pair.mask_t[yy, xx] == BACKGROUND_CLASS)
    for label in pair.exclude_labels:
        bad_src |= pair.mask_tk[syc, sxc] == label
        bad_dst |= pair.mask_t[yy, xx] == label
    ok = visible & ~bad_src & ~bad_dst

    samples = bilinear_sample(pair.img_tk, pix)
    warped[yy, xx] = samples
    occl[yy, xx] = ok
    return warped, occl


def psnr(a, b, mask):
    """10*log10(1/MSE) over masked pixels, images in [0,1].

    MSE below 1e-10 caps the value at 99.0 dB so exact warps report a
    finite, documented number.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"psnr images disagree: {a.shape} vs {b.shape}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape[:2]:
        raise MetricError(f"psnr mask {mask.shape} does not match image {a.shape[:2]}")
    if not mask.any():
        raise EmptyMaskError("psnr over an empty mask")
    diff = (a - b)[mask]
    mse = float((diff * diff).mean())
    if mse < PSNR_CAP_MSE:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def warp_psnr(pair, tau_frac=DEFAULT_TAU_FRAC):
    """PSNR between frame t and its warp from t-k under the occlusion mask.

    Background and hair are removed from both frames (the mask built by
    :func:`warp_image` already cuts them on both sides).
    """
    warped, occl = warp_image(pair, tau_frac=tau_frac)
    return psnr(pair.img_t, warped, occl)


def sample_pairs(n_frames, fps, interval_ms=DEFAULT_INTERVAL_MS):
    """Frame pairs (t-k, t) at a fixed interval: k = round(interval*fps).

    170 ms at 30 fps gives k = 5. Sequences shorter than k+1 frames yield
    an empty list with a warning.
    """
    k = int(np.floor(interval_ms * fps / 1000.0 + 0.5))
    if k < 1:
        raise MetricError(
            f"interval {interval_ms} ms at {fps} fps gives k = {k}; k >= 1 required"
        )
    if n_frames <= k:
        warnings.warn(f"sequence of {n_frames} frames is too short for interval k={k}")
        return []
    return [(t - k, t) for t in range(k, n_frames, k)]


def landmark_l1(pred, gt, width, height):
    """Mean absolute landmark error, pixel coordinates normalized to [0,1]."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricError(f"landmark sets disagree: {pred.shape} vs {gt.shape}")
    scale = np.array([float(width), float(height)])
    return float(np.abs(pred / scale - gt / scale).mean())


@dataclass
class MetricReport:
    schema: int
    config: dict
    per_frame_iou: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    per_pair_warp_psnr: list = field(default_factory=list)
    per_frame_landmark_l1: list = field(default_factory=list)
    skipped_pairs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def aggregates(self):
        out = {}
        if self.per_frame_iou:
            out["mean_iou"] = float(np.mean(self.per_frame_iou))
        if self.per_pair_warp_psnr:
            out["mean_warp_psnr"] = float(np.mean(self.per_pair_warp_psnr))
        if self.per_frame_landmark_l1:
            out["mean_landmark_l1"] = float(np.mean(self.per_frame_landmark_l1))
        return out

    def to_dict(self):
        return {
            "schema": self.schema,
            "config": self.config,
            "per_frame_iou": self.per_frame_iou,
            "pairs": [list(p) for p in self.pairs],
            "per_pair_warp_psnr": self.per_pair_warp_psnr,
            "per_frame_landmark_l1": self.per_frame_landmark_l1,
            "skipped_pairs": [list(p) for p in self.skipped_pairs],
            "n_skipped_pairs": len(self.skipped_pairs),
            "warnings": self.warnings,
            **self.aggregates(),
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def semantic_iou(pred, gt, class_ids, exclude_labels=()):
    """Mean per-class intersection-over-union between class-index images.

    Pixels whose ground-truth label is in ``exclude_labels`` (hair, when
    present) are removed from every class's intersection and union. Classes
    absent from both images are skipped from the mean; a class present only
    in the prediction contributes zero.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise MetricError(f"class images disagree: {pred.shape} vs {gt.shape}")
    keep = np.ones(gt.shape, dtype=bool)
    for label in exclude_labels:
        keep &= gt != label
    scores = []
    for c in class_ids:
        p = (pred == c) & keep
        g = (gt == c) & keep
        union = int((p | g).sum())
        if union == 0:
            continue
        scores.append(int((p & g).sum()) / union)
    if not scores:
        raise MetricError("no evaluable classes (all unions empty)")
    return float(np.mean(scores))


def _frame_paths(directory, pattern, count):
    return [Path(directory) / (pattern % i) for i in range(count)]


def evaluate_sequence(model, track, frames_dir, masks_dir, *,
                      interval_ms=DEFAULT_INTERVAL_MS, fps=30.0,
                      do_iou=True, do_warp=True, tau_frac=DEFAULT_TAU_FRAC,
                      image_size=None, threads=1, exclude_labels=()):
    """Run the metric suite for a tracked sequence against stored frames/masks.

    Frames are ``frame_%06d.png``, masks ``mask_%06d.png``; landmark files
    ``lmk_%06d.txt`` in the frames directory are picked up when all are
    present and the model carries a ``landmark_verts`` chunk. Fully occluded
    pairs are skipped from aggregates and recorded with a warning.
    """
    n = track.n_frames
    if n == 0:
        raise MetricError("track has no frames")
    frame_paths = _frame_paths(frames_dir, "frame_%06d.png", n)
    mask_paths = _frame_paths(masks_dir, "mask_%06d.png", n)
    missing = [str(p) for p in frame_paths + mask_paths if not p.exists()]
    if missing:
        raise MetricError("missing sequence files: " + ", ".join(missing))

    pairs = sample_pairs(n, fps, interval_ms) if do_warp else []
    report = MetricReport(schema=1, config={
        "interval_ms": interval_ms,
        "fps": fps,
        "k": int(np.floor(interval_ms * fps / 1000.0 + 0.5)),
        "tau_frac": tau_frac,
        "psnr_cap_db": PSNR_CAP,
        "psnr_range": [0.0, 1.0],
        "n_frames": n,
    })
    if do_warp and not pairs:
        report.warnings.append(
            f"sequence too short for warp pairs at k={report.config['k']}"
        )

    needed = sorted(set(range(n) if do_iou else []) | {f for p in pairs for f in p})
    first = load_png_rgb(frame_paths[needed[0] if needed else 0])
    height, width = first.shape[:2] if image_size is None else (image_size[1], image_size[0])
    report.config["width"] = int(width)
    report.config["height"] = int(height)

    mesh = model.canonical_mesh()

    def prepare(f):
        verts = pose_mesh(model, track.pose(f), track.expression(f))
        gbuf = rasterize(mesh, verts, track.camera(f), width, height)
        return f, verts, gbuf

    frame_data = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for f, verts, gbuf in pool.map(prepare, needed):
                frame_data[f] = (verts, gbuf)
    else:
        for f in needed:
            _, verts, gbuf = prepare(f)
            frame_data[f] = (verts, gbuf)

    if do_iou:
        if model.annotation is None:
            raise MetricError("IoU needs a model with semantic labels")
        annotation = model.annotation
        class_ids = [i for i, name in enumerate(annotation.classes) if name != "background"]
        for f in range(n):
            gt = load_png_gray(mask_paths[f])
            if gt.shape != (height, width):
                raise MetricError(f"mask {mask_paths[f]} is {gt.shape}, expected {(height, width)}")
            rendered = render_semantic(frame_data[f][1], mesh, annotation)
            report.per_frame_iou.append(
                semantic_iou(rendered, gt, class_ids, exclude_labels)
            )

    for tk, t in pairs:
        pair = FramePair(
            t=t, k=t - tk,
            img_t=load_png_rgb(frame_paths[t]),
            img_tk=load_png_rgb(frame_paths[tk]),
            mask_t=load_png_gray(mask_paths[t]),
            mask_tk=load_png_gray(mask_paths[tk]),
            gbuf_t=frame_data[t][1], gbuf_tk=frame_data[tk][1],
            cam_t=track.camera(t), cam_tk=track.camera(tk),
            verts_t=frame_data[t][0], verts_tk=frame_data[tk][0],
            faces=model.faces, exclude_labels=tuple(exclude_labels),
        )
        try:
            value = warp_psnr(pair, tau_frac=tau_frac)
        except EmptyMaskError:
            report.skipped_pairs.append((tk, t))
            report.warnings.append(f"pair ({tk}, {t}) fully occluded; skipped")
            continue
        report.pairs.append((tk, t))
        report.per_pair_warp_psnr.append(value)

    lmk_paths = _frame_paths(frames_dir, "lmk_%06d.txt", n)
    have = [p.exists() for p in lmk_paths]
    if any(have):
        if not all(have):
            raise MetricError(
                "partial landmark files: " + ", ".join(str(p) for p, h in zip(lmk_paths, have) if not h)
            )
        if "landmark_verts" not in model.extras:
            raise MetricError("landmark files present but model has no landmark_verts chunk")
        lmk_verts = model.extras["landmark_verts"].astype(np.int64)
        for f in range(n):
            gt = np.loadtxt(lmk_paths[f], ndmin=2)
            if f in frame_data:
                verts = frame_data[f][0]
            else:
                verts = pose_mesh(model, track.pose(f), track.expression(f))
            pix, _, _ = project(track.camera(f), verts[lmk_verts], width, height)
            report.per_frame_landmark_l1.append(landmark_l1(pix, gt, width, height))

    return report
