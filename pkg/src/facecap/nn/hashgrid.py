"""Progressive multi-resolution hash encoding over the unit cube.

Sixteen feature grids at geometrically spaced resolutions from 16 to 4096,
two features per level, trilinear interpolation of hashed corner features.
Levels above the active count contribute exact zeros; the schedule enables
one level at iteration 0, one more every 250 iterations up to eight, and
all sixteen from iteration 2000.
"""

import json

import numpy as np

from ..container import decode_text, encode_text
from ..errors import ValidationError

HASH_PRIMES = (1, 2654435761, 805459861)


class HashGridError(ValidationError):
    pass


def level_resolutions(levels=16, base=16, top=4096):
    """Geometric resolution ladder, rounded to integers."""
    if levels == 1:
        return np.array([base], dtype=np.int64)
    growth = (top / base) ** (1.0 / (levels - 1))
    res = np.floor(base * growth ** np.arange(levels) + 0.5).astype(np.int64)
    res[0], res[-1] = base, top
    return res


def hash_cell(ix, iy, iz, table_size):
    """Spatial hash (i*1 xor j*2654435761 xor k*805459861) mod T.

    Evaluated in 64-bit; the factors keep products well under 2^64 for any
    resolution this grid uses, so there is no wraparound to worry about.
    """
    ix = np.asarray(ix, dtype=np.uint64)
    iy = np.asarray(iy, dtype=np.uint64)
    iz = np.asarray(iz, dtype=np.uint64)
    h = (ix * np.uint64(HASH_PRIMES[0])) ^ (iy * np.uint64(HASH_PRIMES[1])) \
        ^ (iz * np.uint64(HASH_PRIMES[2]))
    return (h % np.uint64(table_size)).astype(np.int64)


class HashGrid:
    def __init__(self, levels=16, base_res=16, top_res=4096, features=2,
                 max_table_size=2 ** 19, seed=0, init_scale=1e-4):
        self.resolutions = level_resolutions(levels, base_res, top_res)
        if not (np.diff(self.resolutions) > 0).all():
            raise HashGridError("resolutions must be strictly increasing")
        self.features = int(features)
        self.max_table_size = int(max_table_size)
        self.seed = int(seed)
        # Dense levels need only (N+1)^3 slots; finer levels cap at T.
        self.table_sizes = np.minimum((self.resolutions + 1) ** 3, self.max_table_size)
        rng = np.random.default_rng(seed)
        self.tables = [
            rng.uniform(-init_scale, init_scale, size=(int(t), self.features))
            for t in self.table_sizes
        ]
        self.active_levels = len(self.resolutions)

    @property
    def levels(self):
        return len(self.resolutions)

    @property
    def out_dim(self):
        return self.levels * self.features


def set_active_levels(grid, iteration):
    """Progressive schedule: 1 + iteration // 250 capped at 8, then all 16
    from iteration 2000. Mutates the grid and returns the active count."""
    if iteration < 0:
        raise HashGridError("iteration must be nonnegative")
    if iteration >= 2000:
        active = grid.levels
    else:
        active = min(1 + iteration // 250, 8)
    grid.active_levels = int(min(active, grid.levels))
    return grid.active_levels


def hash_encode(grid, x):
    """Encode (3,) or (B,3) points in [0,1]^3 to (B, levels*features).

    Each active level trilinearly blends the eight hashed corner features
    of its cell; inactive levels are exact zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != 3:
        raise HashGridError(f"points must be (B, 3), got {pts.shape}")
    if pts.min() < 0.0 or pts.max() > 1.0:
        raise HashGridError("hash encoding input must lie in the unit cube")
    out = np.zeros((len(pts), grid.out_dim))
    corner_offsets = np.array(
        [[dx, dy, dz] for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)],
        dtype=np.int64,
    )
    for level in range(grid.active_levels):
        res = grid.resolutions[level]
        scaled = pts * res
        base = np.floor(scaled).astype(np.int64)
        frac = scaled - base
        corners = base[:, None, :] + corner_offsets[None, :, :]  # (B, 8, 3)
        w = np.where(corner_offsets[None, :, :] == 1, frac[:, None, :],
                     1.0 - frac[:, None, :]).prod(axis=2)  # (B, 8)
        idx = hash_cell(corners[..., 0], corners[..., 1], corners[..., 2],
                        grid.table_sizes[level])
        feats = grid.tables[level][idx]  # (B, 8, F)
        col = level * grid.features
        out[:, col:col + grid.features] = (w[..., None] * feats).sum(axis=1)
    return out[0] if single else out


def grid_to_chunks(grid, prefix=""):
    chunks = {f"{prefix}hash_l{i}": t for i, t in enumerate(grid.tables)}
    meta = {
        "levels": grid.levels,
        "base_res": int(grid.resolutions[0]),
        "top_res": int(grid.resolutions[-1]),
        "features": grid.features,
        "max_table_size": grid.max_table_size,
        "seed": grid.seed,
        "active_levels": grid.active_levels,
    }
    chunks[f"{prefix}hash_meta"] = encode_text(json.dumps(meta, sort_keys=True))
    return chunks


def grid_from_chunks(chunks, prefix=""):
    meta = json.loads(decode_text(chunks[f"{prefix}hash_meta"]))
    grid = HashGrid(levels=meta["levels"], base_res=meta["base_res"],
                    top_res=meta["top_res"], features=meta["features"],
                    max_table_size=meta["max_table_size"], seed=meta["seed"])
    grid.tables = [chunks[f"{prefix}hash_l{i}"] for i in range(grid.levels)]
    grid.active_levels = meta["active_levels"]
    return grid
