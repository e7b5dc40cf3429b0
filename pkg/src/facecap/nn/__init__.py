from .adam import AdamState, adam_step
from .deformer import eval_deformer, pretrain_deformer
from .encoding import SinusoidalEncoding, pos_encode
from .hashgrid import (
    HashGrid,
    grid_from_chunks,
    grid_to_chunks,
    hash_cell,
    hash_encode,
    level_resolutions,
    set_active_levels,
)
from .mlp import Mlp, init_mlp, mlp_from_chunks, mlp_to_chunks, sigmoid, softplus

__all__ = [
    "AdamState", "adam_step", "eval_deformer", "pretrain_deformer",
    "SinusoidalEncoding", "pos_encode", "HashGrid", "grid_from_chunks",
    "grid_to_chunks", "hash_cell", "hash_encode", "level_resolutions",
    "set_active_levels", "Mlp", "init_mlp", "mlp_from_chunks",
    "mlp_to_chunks", "sigmoid", "softplus",
]
