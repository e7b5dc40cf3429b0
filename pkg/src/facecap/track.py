"""Per-frame tracked parameters: pose, expression, and camera."""

from dataclasses import dataclass

import numpy as np

from .container import read_container, write_container
from .deform import ExprParams, PoseParams
from .errors import ValidationError
from .raster import Camera


class TrackError(ValidationError):
    pass


@dataclass(frozen=True)
class ParamTrack:
    theta: np.ndarray   # (F, n_j, 3) joint axis-angles
    trans: np.ndarray   # (F, 3) global translations
    psi: np.ndarray     # (F, n_e) expression coefficients
    cameras: tuple      # F Camera objects, all the same mode

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        trans = np.asarray(self.trans, dtype=np.float64)
        psi = np.asarray(self.psi, dtype=np.float64)
        cameras = tuple(self.cameras)
        n = len(theta)
        if theta.ndim != 3 or theta.shape[2] != 3:
            raise TrackError(f"theta must be (F, n_j, 3), got {theta.shape}")
        if trans.shape != (n, 3) or psi.shape[0] != n or len(cameras) != n:
            raise TrackError(
                f"track tables disagree on frame count: theta {len(theta)}, "
                f"trans {len(trans)}, psi {len(psi)}, cameras {len(cameras)}"
            )
        modes = {c.mode for c in cameras}
        if len(modes) > 1:
            raise TrackError("all track cameras must share one mode")
        for arr in (theta, trans, psi):
            arr.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "cameras", cameras)

    @property
    def n_frames(self):
        return len(self.theta)

    def pose(self, frame):
        if not 0 <= frame < self.n_frames:
            raise TrackError(f"frame {frame} out of range; track has {self.n_frames} frames")
        return PoseParams(self.theta[frame], self.trans[frame])

    def expression(self, frame):
        if not 0 <= frame < self.n_frames:
            raise TrackError(f"frame {frame} out of range; track has {self.n_frames} frames")
        return ExprParams(self.psi[frame])

    def camera(self, frame):
        return self.cameras[frame]


def save_track(path, track):
    rows = np.stack([c.to_row() for c in track.cameras])
    write_container(path, {
        "theta": track.theta,
        "trans": track.trans,
        "psi": track.psi,
        "camera": rows,
        "camera_mode": np.array([track.cameras[0].mode_code], dtype=np.uint8),
    })


def load_track(path):
    chunks = read_container(path)
    missing = [k for k in ("theta", "trans", "psi", "camera", "camera_mode") if k not in chunks]
    if missing:
        raise TrackError(f"{path}: track container missing chunks {missing}")
    mode = int(chunks["camera_mode"].reshape(-1)[0])
    cameras = tuple(Camera.from_row(mode, row) for row in chunks["camera"])
    return ParamTrack(chunks["theta"], chunks["trans"], chunks["psi"], cameras)
