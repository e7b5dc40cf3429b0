"""Deterministic software rasterizer producing G-buffers.

Conventions, fixed and documented here once:

* Pixel (row i, column j) has center (j + 0.5, i + 0.5); x grows right,
  y grows down.
* Perspective camera: camera space is x right, y down, z forward;
  projection is (f*x/z + cx, f*y/z + cy) with depth = camera-space z.
  Points with z <= 0 are flagged and their triangles skipped (no clipping).
* Scaled-orthographic camera: pixel = (s*x*W/2 + W/2 + tx*W/2, analog in y
  with H and ty); the camera looks along -z, so depth = -z (nearer is
  smaller, as the z-buffer expects).
* Coverage uses the top-left fill rule; the z-buffer keeps the nearest
  depth, with ties closer than 1e-12 resolved to the lower triangle id.
  Triangles are processed in id order, so rasterization is submission-order
  independent by construction.
* Tiled execution partitions the image into disjoint pixel tiles; each tile
  rasterizes independently, so the result is bitwise identical for any tile
  size and thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .mesh import TriMesh, vertex_normals
from .shading import MaterialSample, reflect, shade

BACKGROUND_ID = -1
BACKGROUND_CLASS = 255
DEPTH_TIE = 1e-12

PERSPECTIVE = "perspective"
ORTHO = "scaled_ortho"
_MODE_CODES = {PERSPECTIVE: 1, ORTHO: 2}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


class RasterError(ValidationError):
    pass


@dataclass(frozen=True)
class Camera:
    mode: str
    focal: float = 0.0
    cx: float = 0.0
    cy: float = 0.0
    rotation: np.ndarray = None   # (3,3) world-to-camera
    translation: np.ndarray = None  # (3,)
    scale: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if self.mode not in (PERSPECTIVE, ORTHO):
            raise RasterError(f"unknown camera mode '{self.mode}'")
        if self.mode == PERSPECTIVE:
            if not self.focal > 0:
                raise RasterError("perspective focal length must be positive")
            rot = np.eye(3) if self.rotation is None else np.asarray(self.rotation, dtype=np.float64)
            trans = np.zeros(3) if self.translation is None else np.asarray(self.translation, dtype=np.float64)
            if rot.shape != (3, 3) or trans.shape != (3,):
                raise RasterError("camera transform must be a (3,3) rotation and (3,) translation")
            rot.setflags(write=False)
            trans.setflags(write=False)
            object.__setattr__(self, "rotation", rot)
            object.__setattr__(self, "translation", trans)
        else:
            if not self.scale > 0:
                raise RasterError("orthographic scale must be positive")

    @classmethod
    def perspective(cls, focal, cx, cy, rotation=None, translation=None):
        return cls(PERSPECTIVE, focal=float(focal), cx=float(cx), cy=float(cy),
                   rotation=rotation, translation=translation)

    @classmethod
    def scaled_ortho(cls, scale, tx=0.0, ty=0.0):
        return cls(ORTHO, scale=float(scale), tx=float(tx), ty=float(ty))

    def to_row(self):
        """Flat parameter row for track files (15 for perspective, 3 ortho)."""
        if self.mode == PERSPECTIVE:
            return np.concatenate([[self.focal, self.cx, self.cy],
                                   self.rotation.reshape(-1), self.translation])
        return np.array([self.scale, self.tx, self.ty])

    @classmethod
    def from_row(cls, mode_code, row):
        mode = _MODE_NAMES.get(int(mode_code))
        if mode is None:
            raise RasterError(f"unknown camera mode code {mode_code}")
        row = np.asarray(row, dtype=np.float64)
        if mode == PERSPECTIVE:
            if row.shape != (15,):
                raise RasterError(f"perspective camera row must have 15 values, got {row.shape}")
            return cls.perspective(row[0], row[1], row[2], row[3:12].reshape(3, 3), row[12:15])
        if row.shape != (3,):
            raise RasterError(f"orthographic camera row must have 3 values, got {row.shape}")
        return cls.scaled_ortho(row[0], row[1], row[2])

    @property
    def mode_code(self):
        return _MODE_CODES[self.mode]

    def center_and_forward(self):
        """World-space camera center and viewing direction (for shading)."""
        if self.mode == PERSPECTIVE:
            center = -self.rotation.T @ self.translation
            forward = self.rotation.T @ np.array([0.0, 0.0, 1.0])
            return center, forward
        return None, np.array([0.0, 0.0, -1.0])


def project(cam, points, width, height):
    """Project world points; returns (pixels (N,2), depth (N,), valid (N,)).

    Perspective points behind the camera are flagged invalid, not clipped.
    """
    pts = np.asarray(points, dtype=np.float64)
    if not np.isfinite(pts).all():
        raise RasterError("projection input contains non-finite points")
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if cam.mode == PERSPECTIVE:
        p = pts @ cam.rotation.T + cam.translation
        z = p[:, 2]
        valid = z > 0
        safe = np.where(valid, z, 1.0)
        pix = np.stack([cam.focal * p[:, 0] / safe + cam.cx,
                        cam.focal * p[:, 1] / safe + cam.cy], axis=1)
        depth = z
    else:
        pix = np.stack([cam.scale * pts[:, 0] * width / 2 + width / 2 + cam.tx * width / 2,
                        cam.scale * pts[:, 1] * height / 2 + height / 2 + cam.ty * height / 2],
                       axis=1)
        depth = -pts[:, 2]
        valid = np.ones(len(pts), dtype=bool)
    if single:
        return pix[0], depth[0], valid[0]
    return pix, depth, valid


@dataclass
class GBuffer:
    width: int
    height: int
    tri: np.ndarray       # (H,W) int32, BACKGROUND_ID where uncovered
    bary: np.ndarray      # (H,W,3) float64, perspective-correct
    depth: np.ndarray     # (H,W) float64, undefined where uncovered
    coverage: np.ndarray  # (H,W) bool

    @classmethod
    def empty(cls, width, height):
        return cls(width, height,
                   np.full((height, width), BACKGROUND_ID, dtype=np.int32),
                   np.zeros((height, width, 3)),
                   np.full((height, width), np.inf),
                   np.zeros((height, width), dtype=bool))


def _top_left_flags(a, b):
    """Top-left ownership for effective directed edges a->b (y down)."""
    top = (a[:, 1] == b[:, 1]) & (b[:, 0] > a[:, 0])
    left = b[:, 1] < a[:, 1]
    return top | left


def _raster_tile(gbuf, x0, x1, y0, y1, order, pix, vz, faces, signs, perspective):
    """Rasterize triangles (id order) into the tile [x0,x1) x [y0,y1)."""
    tri_buf = gbuf.tri
    bary_buf = gbuf.bary
    depth_buf = gbuf.depth
    for t in order:
        corners = pix[faces[t]]  # (3,2)
        lo = np.floor(corners.min(axis=0) - 0.5).astype(np.int64)
        hi = np.floor(corners.max(axis=0) - 0.5).astype(np.int64) + 1
        px0, px1 = max(x0, lo[0]), min(x1, hi[0] + 1)
        py0, py1 = max(y0, lo[1]), min(y1, hi[1] + 1)
        if px0 >= px1 or py0 >= py1:
            continue
        gx = np.arange(px0, px1) + 0.5
        gy = np.arange(py0, py1) + 0.5
        qx = gx[None, :]
        qy = gy[:, None]
        sign = signs[t]
        p0, p1, p2 = corners
        edges_a = np.array([p1, p2, p0]) if sign > 0 else np.array([p2, p0, p1])
        edges_b = np.array([p2, p0, p1]) if sign > 0 else np.array([p1, p2, p0])
        accept = _top_left_flags(edges_a, edges_b)

        w = np.empty((3, py1 - py0, px1 - px0))
        for i, (a, b) in enumerate(zip(edges_a, edges_b)):
            w[i] = (b[0] - a[0]) * (qy - a[1]) - (b[1] - a[1]) * (qx - a[0])
        inside = np.ones(w.shape[1:], dtype=bool)
        for i in range(3):
            inside &= (w[i] > 0) | ((w[i] == 0) & accept[i])
        if not inside.any():
            continue

        area = w.sum(axis=0)
        b_screen = w / area  # screen-space barycentrics, rows (w0,w1,w2)
        z = vz[faces[t]]
        if perspective:
            over_z = b_screen / z[:, None, None]
            inv = over_z.sum(axis=0)
            bary = over_z / inv
            depth = 1.0 / inv
        else:
            bary = b_screen
            depth = (b_screen * z[:, None, None]).sum(axis=0)

        rows, cols = np.nonzero(inside)
        yy, xx = rows + py0, cols + px0
        d = depth[rows, cols]
        take = depth_buf[yy, xx] - d >= DEPTH_TIE
        take |= tri_buf[yy, xx] == BACKGROUND_ID
        if not take.any():
            continue
        yy, xx, rows, cols, d = yy[take], xx[take], rows[take], cols[take], d[take]
        tri_buf[yy, xx] = t
        depth_buf[yy, xx] = d
        bary_buf[yy, xx] = bary[:, rows, cols].T


def rasterize(mesh, posed_vertices=None, cam=None, width=None, height=None, *,
              backface_cull=True, tile_size=None, threads=1):
    """Rasterize a mesh into a GBuffer (triangle id, barycentric, depth).

    ``posed_vertices`` defaults to the mesh's own vertices. Barycentrics are
    perspective-correct under a perspective camera. Backface culling is on
    by default; disable it for open or inverted geometry.
    """
    if width is None or height is None or width < 1 or height < 1:
        raise RasterError(f"image size must be positive, got {width}x{height}")
    verts = mesh.vertices if posed_vertices is None else np.asarray(posed_vertices, dtype=np.float64)
    faces = mesh.faces
    pix, vz, valid = project(cam, verts, width, height)

    p0, p1, p2 = pix[faces[:, 0]], pix[faces[:, 1]], pix[faces[:, 2]]
    area = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) \
        - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    ok = valid[faces].all(axis=1)
    front_sign = -1.0 if cam.mode == PERSPECTIVE else 1.0
    if backface_cull:
        ok &= (area * front_sign) > 0
    else:
        ok &= area != 0
    signs = np.where(area > 0, 1.0, -1.0)

    gbuf = GBuffer.empty(width, height)
    order = np.flatnonzero(ok)
    perspective = cam.mode == PERSPECTIVE

    if tile_size is None or tile_size >= max(width, height):
        tiles = [(0, width, 0, height)]
    else:
        tiles = [
            (tx, min(tx + tile_size, width), ty, min(ty + tile_size, height))
            for ty in range(0, height, tile_size)
            for tx in range(0, width, tile_size)
        ]

    if threads > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(
                lambda tile: _raster_tile(gbuf, *tile, order, pix, vz, faces, signs, perspective),
                tiles,
            ))
    else:
        for tile in tiles:
            _raster_tile(gbuf, *tile, order, pix, vz, faces, signs, perspective)

    gbuf.coverage = gbuf.tri != BACKGROUND_ID
    return gbuf


def render_semantic(gbuf, mesh, annotation):
    """Class-index image: per pixel, the barycentric-weight majority class.

    Ties go to the lowest class index; background pixels get 255.
    """
    if len(annotation.labels) != mesh.n_vertices:
        raise RasterError(
            f"annotation covers {len(annotation.labels)} vertices, mesh has {mesh.n_vertices}"
        )
    out = np.full((gbuf.height, gbuf.width), BACKGROUND_CLASS, dtype=np.uint8)
    yy, xx = np.nonzero(gbuf.coverage)
    if len(yy) == 0:
        return out
    corners = mesh.faces[gbuf.tri[yy, xx]]          # (k,3)
    labels = annotation.labels[corners]             # (k,3)
    weights = gbuf.bary[yy, xx]                     # (k,3)
    scores = np.zeros((len(yy), annotation.n_classes))
    for c in range(annotation.n_classes):
        scores[:, c] = np.where(labels == c, weights, 0.0).sum(axis=1)
    out[yy, xx] = np.argmax(scores, axis=1).astype(np.uint8)
    return out


def interpolate_pixels(gbuf, faces, values):
    """Barycentric interpolation of per-vertex values at covered pixels.

    Returns (rows, cols, interpolated (k, ...)).
    """
    yy, xx = np.nonzero(gbuf.coverage)
    corners = faces[gbuf.tri[yy, xx]]
    weights = gbuf.bary[yy, xx]
    vals = np.asarray(values, dtype=np.float64)
    gathered = vals[corners]
    w = weights.reshape(weights.shape + (1,) * (gathered.ndim - 2))
    return yy, xx, (gathered * w).sum(axis=1)


def render_shaded(gbuf, mesh, posed_vertices, materials, light, video, cam):
    """Deferred shading of a GBuffer: interpolate normal and material,
    evaluate the per-video diffuse and specular lights, compose the color.
    Background pixels are black."""
    posed = TriMesh(posed_vertices, mesh.faces)
    normals, _ = vertex_normals(posed)
    out = np.zeros((gbuf.height, gbuf.width, 3))
    yy, xx, n = interpolate_pixels(gbuf, mesh.faces, normals)
    if len(yy) == 0:
        return out
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    _, _, position = interpolate_pixels(gbuf, mesh.faces, np.asarray(posed_vertices, dtype=np.float64))
    _, _, albedo = interpolate_pixels(gbuf, mesh.faces, materials.albedo)
    _, _, rough = interpolate_pixels(gbuf, mesh.faces, materials.roughness[:, None])
    _, _, spec = interpolate_pixels(gbuf, mesh.faces, materials.specular[:, None])
    rough = np.clip(rough[:, 0], 0.04, 1.0)
    spec = np.maximum(spec[:, 0], 0.0)
    albedo = np.maximum(albedo, 0.0)

    center, forward = cam.center_and_forward()
    if center is not None:
        view = center - position
        view /= np.linalg.norm(view, axis=1, keepdims=True)
    else:
        view = np.broadcast_to(-forward, position.shape)
    omega = reflect(view, n)
    l_d = light.eval_diffuse(video, n)
    l_s = light.eval_specular(video, omega, rough)
    color = shade(MaterialSample(albedo, rough, spec), l_d, l_s)
    out[yy, xx] = color
    return out


def render_normals(gbuf, mesh, posed_vertices):
    """Normals visualization: (n+1)/2 into RGB, black background."""
    posed = TriMesh(posed_vertices, mesh.faces)
    normals, _ = vertex_normals(posed)
    out = np.zeros((gbuf.height, gbuf.width, 3))
    yy, xx, n = interpolate_pixels(gbuf, mesh.faces, normals)
    if len(yy) == 0:
        return out
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    out[yy, xx] = (n + 1.0) / 2.0
    return out


def render_depth(gbuf):
    """Depth visualization: nearer is brighter, background black."""
    out = np.zeros((gbuf.height, gbuf.width))
    if not gbuf.coverage.any():
        return out
    d = gbuf.depth[gbuf.coverage]
    lo, hi = d.min(), d.max()
    span = hi - lo if hi > lo else 1.0
    out[gbuf.coverage] = 1.0 - (gbuf.depth[gbuf.coverage] - lo) / span
    return out
