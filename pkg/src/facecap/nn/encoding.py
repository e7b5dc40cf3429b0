"""Sinusoidal positional encoding for canonical-space coordinates."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SinusoidalEncoding:
    """L octaves of sin/cos pairs, optionally prefixed with the raw input.

    Frequencies are 2^k * pi for k = 0..L-1; L = 0 with include_input is
    the identity map.
    """

    frequencies: int = 10
    include_input: bool = True

    def __post_init__(self):
        if self.frequencies < 0:
            raise ValueError("frequency count must be nonnegative")

    @property
    def out_dim(self):
        return 3 * int(self.include_input) + 6 * self.frequencies


def pos_encode(enc, x):
    """Encode (3,) or (B,3) coordinates to (out_dim,) / (B, out_dim).

    Layout per point: the raw [x, y, z] when included, then for each octave
    k the six values (sin, cos) per coordinate in order.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    parts = [pts] if enc.include_input else []
    if enc.frequencies:
        freqs = (2.0 ** np.arange(enc.frequencies)) * np.pi
        angles = pts[:, None, :] * freqs[None, :, None]  # (B, L, 3)
        block = np.stack([np.sin(angles), np.cos(angles)], axis=-1)  # (B, L, 3, 2)
        parts.append(block.reshape(len(pts), -1))
    out = np.concatenate(parts, axis=1) if parts else np.zeros((len(pts), 0))
    return out[0] if single else out
