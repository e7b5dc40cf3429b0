"""facecap: personalized face-capture geometry core.

A deformation model with a neural expression basis, split diffuse/specular
shading, a deterministic software rasterizer, posed-geometry evaluation
metrics (semantic IoU and warp PSNR), incremental remeshing with table
reprojection, and a synthetic ground-truth harness that makes all of it
verifiable end to end.
"""

from .container import read_container, write_container
from .deform import (
    DeformModel,
    ExprParams,
    FitResult,
    PoseParams,
    expression_offset,
    fit_expression,
    lbs,
    load_model,
    pose_correctives,
    pose_mesh,
    regress_joints,
    rodrigues,
    save_model,
)
from .mesh import (
    BaryCoord,
    SemanticAnnotation,
    TriMesh,
    bary_interpolate,
    closest_point,
    closest_points,
    euler_characteristic,
    face_normals,
    make_icosphere,
    uniform_laplacian,
    vertex_normals,
)
from .meshio import load_mesh, save_mesh
from .metrics import (
    FramePair,
    MetricReport,
    evaluate_sequence,
    landmark_l1,
    psnr,
    sample_pairs,
    semantic_iou,
    warp_image,
    warp_psnr,
)
from .raster import Camera, GBuffer, project, rasterize, render_semantic, render_shaded
from .remesh import Provenance, remesh, reproject_tables
from .shading import LightEvaluator, MaterialSample, reflect, shade
from .track import ParamTrack, load_track, save_track

__version__ = "0.1.0"
