import numpy as np
import pytest

from facecap.mesh import TriMesh, make_icosphere, vertex_normals
from facecap.metrics import (
    EmptyMaskError,
    FramePair,
    MetricError,
    MetricReport,
    bilinear_sample,
    landmark_l1,
    psnr,
    sample_pairs,
    semantic_iou,
    warp_image,
    warp_psnr,
)
from facecap.raster import Camera, rasterize
from facecap.synth import default_camera


# --- psnr ---------------------------------------------------------------------

def test_psnr_identical_capped():
    img = np.random.default_rng(0).random((8, 8, 3))
    assert psnr(img, img, np.ones((8, 8), bool)) == 99.0


def test_psnr_uniform_error_oracle():
    a = np.zeros((16, 16, 3))
    b = np.full((16, 16, 3), 0.0625)
    value = psnr(a, b, np.ones((16, 16), bool))
    # MSE = 0.0625^2 = 0.00390625 -> 10*log10(256) = 24.0824 dB
    assert abs(value - 24.0824) < 1e-4


def test_psnr_mask_mean_invariance():
    a = np.zeros((8, 8, 3))
    b = np.full((8, 8, 3), 0.125)
    full = np.ones((8, 8), bool)
    half = full.copy()
    half[:, 4:] = False
    assert np.isclose(psnr(a, b, full), psnr(a, b, half), atol=1e-12)


def test_psnr_monotone_in_mse():
    a = np.zeros((4, 4, 3))
    mask = np.ones((4, 4), bool)
    values = [psnr(a, np.full((4, 4, 3), err), mask) for err in (0.1, 0.2, 0.4)]
    assert values[0] > values[1] > values[2]


def test_psnr_empty_mask():
    with pytest.raises(EmptyMaskError):
        psnr(np.zeros((4, 4, 3)), np.zeros((4, 4, 3)), np.zeros((4, 4), bool))


# --- pair sampling ----------------------------------------------------------------

def test_sample_pairs_paper_interval():
    assert sample_pairs(30, 30)[0] == (0, 5)


def test_sample_pairs_proportional():
    pairs = sample_pairs(40, 60)
    assert pairs[0] == (0, 10)


def test_sample_pairs_arithmetic():
    assert sample_pairs(12, 30) == [(0, 5), (5, 10)]


def test_sample_pairs_short_sequence_warns():
    with pytest.warns(UserWarning, match="too short"):
        assert sample_pairs(3, 30) == []


def test_sample_pairs_interval_too_small():
    with pytest.raises(MetricError, match="k >= 1"):
        sample_pairs(30, 30, interval_ms=0)


# --- landmarks --------------------------------------------------------------------

def test_landmark_identity():
    pts = np.random.default_rng(1).random((7, 2)) * 64
    assert landmark_l1(pts, pts, 64, 64) == 0.0


def test_landmark_offset_arithmetic():
    gt = np.random.default_rng(2).random((5, 2)) * 100
    pred = gt + np.array([0.01 * 200, 0.0])
    assert np.isclose(landmark_l1(pred, gt, 200, 100), 0.005, atol=1e-12)


def test_landmark_vs_naive_loop():
    rng = np.random.default_rng(3)
    a, b = rng.random((9, 2)) * 50, rng.random((9, 2)) * 50
    total = 0.0
    for i in range(9):
        total += abs(a[i, 0] / 64 - b[i, 0] / 64)
        total += abs(a[i, 1] / 48 - b[i, 1] / 48)
    assert np.isclose(landmark_l1(a, b, 64, 48), total / 18, atol=1e-12)


def test_landmark_count_mismatch():
    with pytest.raises(MetricError):
        landmark_l1(np.zeros((3, 2)), np.zeros((4, 2)), 64, 64)


# --- semantic IoU -----------------------------------------------------------------

def test_iou_identity():
    img = np.random.default_rng(4).integers(0, 3, size=(16, 16)).astype(np.uint8)
    assert semantic_iou(img, img, [0, 1, 2]) == 1.0


def test_iou_disjoint():
    pred = np.array([[1, 255]], dtype=np.uint8)
    gt = np.array([[255, 1]], dtype=np.uint8)
    assert semantic_iou(pred, gt, [1]) == 0.0


def test_iou_counting():
    pred = np.array([[1, 1, 1, 255]], dtype=np.uint8)
    gt = np.array([[255, 1, 1, 1]], dtype=np.uint8)
    assert semantic_iou(pred, gt, [1]) == 0.5


def test_iou_skips_class_absent_from_both():
    pred = np.array([[1, 1]], dtype=np.uint8)
    gt = np.array([[1, 1]], dtype=np.uint8)
    assert semantic_iou(pred, gt, [1, 2]) == 1.0


def test_iou_class_only_in_pred_counts_zero():
    pred = np.array([[1, 2]], dtype=np.uint8)
    gt = np.array([[1, 1]], dtype=np.uint8)
    # class 1: inter 1, union 2 -> 0.5 ; class 2: inter 0, union 1 -> 0
    assert semantic_iou(pred, gt, [1, 2]) == 0.25


def test_iou_hair_exclusion():
    hair = 7
    pred = np.array([[1, 1, 1]], dtype=np.uint8)
    gt = np.array([[1, hair, 2]], dtype=np.uint8)
    # hair pixel removed entirely: class 1 -> inter 1 / union 2; class 2 -> 0/2
    value = semantic_iou(pred, gt, [1, 2], exclude_labels=(hair,))
    assert np.isclose(value, (0.5 + 0.0) / 2)


def test_iou_symmetric_without_exclusion():
    rng = np.random.default_rng(5)
    a = rng.integers(0, 4, size=(32, 32)).astype(np.uint8)
    b = rng.integers(0, 4, size=(32, 32)).astype(np.uint8)
    assert np.isclose(semantic_iou(a, b, [0, 1, 2, 3]),
                      semantic_iou(b, a, [0, 1, 2, 3]), atol=1e-15)


def test_iou_no_evaluable_classes():
    img = np.full((4, 4), 255, dtype=np.uint8)
    with pytest.raises(MetricError, match="no evaluable"):
        semantic_iou(img, img, [0, 1])


def test_iou_dimension_mismatch():
    with pytest.raises(MetricError):
        semantic_iou(np.zeros((2, 2), np.uint8), np.zeros((3, 3), np.uint8), [0])


# --- bilinear sampling ---------------------------------------------------------

def test_bilinear_exact_at_centers():
    img = np.random.default_rng(6).random((8, 8, 3))
    pts = np.array([[3.5, 2.5], [0.5, 0.5], [7.5, 7.5]])
    out = bilinear_sample(img, pts)
    assert np.array_equal(out[0], img[2, 3])
    assert np.array_equal(out[1], img[0, 0])
    assert np.array_equal(out[2], img[7, 7])


def test_bilinear_midpoint_average():
    img = np.zeros((2, 2, 1))
    img[0, 0] = 1.0
    img[0, 1] = 3.0
    out = bilinear_sample(img, np.array([[1.0, 0.5]]))
    assert np.isclose(out[0, 0], 2.0)


# --- warp -----------------------------------------------------------------------

def make_pair(mesh, verts_t, verts_tk, cam_t, cam_tk, img_t, img_tk, size=64):
    gb_t = rasterize(mesh, verts_t, cam_t, size, size)
    gb_tk = rasterize(mesh, verts_tk, cam_tk, size, size)
    mask_t = np.where(gb_t.coverage, 0, 255).astype(np.uint8)
    mask_tk = np.where(gb_tk.coverage, 0, 255).astype(np.uint8)
    return FramePair(
        t=5, k=5, img_t=img_t, img_tk=img_tk, mask_t=mask_t, mask_tk=mask_tk,
        gbuf_t=gb_t, gbuf_tk=gb_tk, cam_t=cam_t, cam_tk=cam_tk,
        verts_t=verts_t, verts_tk=verts_tk, faces=mesh.faces,
    )


def test_warp_identity_pair():
    mesh = make_icosphere(2)
    cam = default_camera(64, 64)
    img = np.random.default_rng(7).random((64, 64, 3))
    pair = make_pair(mesh, mesh.vertices, mesh.vertices, cam, cam, img, img)
    warped, occl = warp_image(pair)
    cov = pair.gbuf_t.coverage
    assert np.array_equal(occl, cov)  # every geometry pixel visible
    assert np.abs(warped[occl] - img[occl]).max() < 1e-6
    assert warp_psnr(pair) == 99.0


def test_warp_integer_translation_exact():
    # flat textured quad under a scaled-ortho camera translated by exactly
    # 8 pixels: the warp must reproduce the image exactly on the overlap
    quad = TriMesh(
        np.array([[-0.75, -0.75, 0.], [0.75, -0.75, 0], [0.75, 0.75, 0], [-0.75, 0.75, 0]]),
        np.array([[0, 2, 1], [0, 3, 2]]),
    )
    size = 64
    shift_px = 8
    cam_t = Camera.scaled_ortho(1.0, 0.0, 0.0)
    cam_tk = Camera.scaled_ortho(1.0, 2.0 * shift_px / size, 0.0)
    rng = np.random.default_rng(8)
    tex = rng.random((size, size, 3))
    gb_t = rasterize(quad, None, cam_t, size, size, backface_cull=False)
    gb_tk = rasterize(quad, None, cam_tk, size, size, backface_cull=False)
    # bake the identical per-surface-point texture into both frames by
    # shifting image columns, guarding the off-screen band
    img_t = np.zeros((size, size, 3))
    img_t[gb_t.coverage] = tex[gb_t.coverage]
    img_tk = np.zeros((size, size, 3))
    img_tk[:, shift_px:] = img_t[:, :-shift_px]
    mask_t = np.where(gb_t.coverage, 0, 255).astype(np.uint8)
    mask_tk = np.where(gb_tk.coverage, 0, 255).astype(np.uint8)
    pair = FramePair(t=1, k=1, img_t=img_t, img_tk=img_tk, mask_t=mask_t,
                     mask_tk=mask_tk, gbuf_t=gb_t, gbuf_tk=gb_tk,
                     cam_t=cam_t, cam_tk=cam_tk, verts_t=quad.vertices,
                     verts_tk=quad.vertices, faces=quad.faces)
    warped, occl = warp_image(pair)
    assert occl.sum() > 500
    assert np.abs(warped[occl] - img_t[occl]).max() < 1e-9


def test_warp_occludes_rotated_away_region():
    mesh = make_icosphere(2)
    cam = default_camera(64, 64)
    # frame t-k: sphere yawed 140 degrees, so the face seen at t is hidden
    from facecap.deform import rodrigues
    R = rodrigues(np.array([0.0, np.deg2rad(140.0), 0.0]))
    verts_tk = mesh.vertices @ R.T
    img = np.random.default_rng(9).random((64, 64, 3))
    pair = make_pair(mesh, mesh.vertices, verts_tk, cam, cam, img, img)
    warped, occl = warp_image(pair)
    cov = pair.gbuf_t.coverage
    assert occl.sum() < 0.6 * cov.sum()
    # strongly back-facing surface points in frame t-k must be masked out
    normals, _ = vertex_normals(TriMesh(verts_tk, mesh.faces))
    yy, xx = np.nonzero(cov)
    corners = mesh.faces[pair.gbuf_t.tri[yy, xx]]
    n_tk = (normals[corners] * pair.gbuf_t.bary[yy, xx][:, :, None]).sum(axis=1)
    cam_center = -cam.rotation.T @ cam.translation
    pts_tk = (verts_tk[corners] * pair.gbuf_t.bary[yy, xx][:, :, None]).sum(axis=1)
    toward = cam_center - pts_tk
    toward /= np.linalg.norm(toward, axis=1, keepdims=True)
    facing_away = (n_tk * toward).sum(axis=1) < -0.2
    assert not occl[yy[facing_away], xx[facing_away]].any()


def test_warp_psnr_fully_occluded_raises():
    mesh = make_icosphere(1)
    cam = default_camera(32, 32)
    img = np.zeros((32, 32, 3))
    pair = make_pair(mesh, mesh.vertices, mesh.vertices + np.array([100.0, 0, 0]),
                     cam, cam, img, img, size=32)
    with pytest.raises(EmptyMaskError):
        warp_psnr(pair)


def test_frame_pair_dimension_check():
    mesh = make_icosphere(1)
    cam = default_camera(32, 32)
    gb = rasterize(mesh, None, cam, 32, 32)
    with pytest.raises(MetricError, match="dimensions"):
        FramePair(t=1, k=1, img_t=np.zeros((16, 16, 3)), img_tk=np.zeros((32, 32, 3)),
                  mask_t=np.zeros((32, 32), np.uint8), mask_tk=np.zeros((32, 32), np.uint8),
                  gbuf_t=gb, gbuf_tk=gb, cam_t=cam, cam_tk=cam,
                  verts_t=mesh.vertices, verts_tk=mesh.vertices, faces=mesh.faces)


def test_report_aggregates_are_means():
    rep = MetricReport(schema=1, config={})
    rep.per_frame_iou = [0.5, 0.75, 1.0]
    rep.per_pair_warp_psnr = [30.0, 40.0]
    agg = rep.aggregates()
    assert abs(agg["mean_iou"] - np.mean(rep.per_frame_iou)) < 1e-12
    assert abs(agg["mean_warp_psnr"] - 35.0) < 1e-12
    d = rep.to_dict()
    assert d["schema"] == 1 and d["n_skipped_pairs"] == 0
