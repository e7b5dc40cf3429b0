"""Converter stub for licensed morphable-model releases.

This package ships no model data. If you hold a license for a FLAME-style
model release (a pickle/npz with the arrays listed below), this module
documents how its fields map onto the model container and will perform the
conversion; nothing here downloads or embeds the asset.

Expected source fields -> container chunks:

    v_template   (n_V, 3)                -> canonical            (f64)
    f            (n_F, 3)                -> faces                (u32)
    shapedirs[..., :n_expr tail]         -> expr_basis           (f64, n_V x 3 x n_e)
                                            (expression columns of the
                                            combined shape+expression basis)
    posedirs     (n_V, 3, 9*(n_j-1))     -> pose_correctives     (f64)
    weights      (n_V, n_j)              -> skin_weights         (f64)
    J_regressor  (n_j, n_V)              -> joint_regressor      (f64)
    kintree_table[0] / parents (n_j,)    -> parents              (u32, root self-parented at 0)
    shape coefficients used to bake v_template, if any
                                         -> beta                 (f64, opaque metadata)

Identity shape is baked into `canonical`; expression coefficients remain
runtime parameters.
"""

import numpy as np

from .deform import DeformModel, save_model
from .errors import ValidationError


def convert_arrays(fields, n_expr, out_path):
    """Build and save a model container from already-loaded source arrays.

    ``fields`` is a mapping with the source keys documented above;
    ``n_expr`` selects how many trailing basis columns are expression
    directions. Raises if required fields are missing.
    """
    required = ("v_template", "f", "shapedirs", "posedirs", "weights",
                "J_regressor", "parents")
    missing = [k for k in required if k not in fields]
    if missing:
        raise ValidationError(
            f"source is missing fields {missing}; see the module docstring "
            "for the expected layout"
        )
    shapedirs = np.asarray(fields["shapedirs"], dtype=np.float64)
    expr = shapedirs[:, :, -n_expr:]
    parents = np.asarray(fields["parents"], dtype=np.int64).copy()
    parents[0] = 0  # FLAME marks the root with -1; the container self-parents it
    extras = {}
    if "beta" in fields:
        extras["beta"] = np.asarray(fields["beta"], dtype=np.float64)
    model = DeformModel(
        canonical=fields["v_template"],
        faces=np.asarray(fields["f"], dtype=np.int64),
        expr_basis=expr,
        pose_correctives=fields["posedirs"],
        skin_weights=fields["weights"],
        joint_regressor=fields["J_regressor"],
        parents=parents,
        extras=extras,
    )
    save_model(out_path, model)
    return model
