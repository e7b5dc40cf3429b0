"""FWB1 binary container: named n-dimensional arrays in one file.

Every multi-array asset (deformation models, network weights, parameter
tracks, provenance) uses this format. Layout, all little-endian:

    magic bytes ``FWB1``, then repeated chunks:
        u16  name length
        ...  UTF-8 chunk name
        u8   dtype code (1=f64, 2=f32, 3=u32, 4=u8)
        u8   rank
        u64  dims, one per rank
        ...  raw little-endian payload

Chunk order is preserved; reading then writing a file reproduces it
byte for byte.
"""

import struct

import numpy as np

from .errors import ValidationError

MAGIC = b"FWB1"

_DTYPE_CODES = {
    1: np.dtype("<f8"),
    2: np.dtype("<f4"),
    3: np.dtype("<u4"),
    4: np.dtype("<u1"),
}
_CODE_FOR_KIND = {
    np.dtype(np.float64): 1,
    np.dtype(np.float32): 2,
    np.dtype(np.uint32): 3,
    np.dtype(np.uint8): 4,
}


class ContainerError(ValidationError):
    """Raised for malformed FWB1 files or unsupported array dtypes."""


def write_container(path, arrays):
    """Write ``arrays`` (an ordered name -> ndarray mapping) to ``path``."""
    blob = bytearray(MAGIC)
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = _CODE_FOR_KIND.get(arr.dtype.newbyteorder("="))
        if code is None:
            raise ContainerError(
                f"chunk '{name}': dtype {arr.dtype} not storable "
                "(supported: f64, f32, u32, u8)"
            )
        raw = name.encode("utf-8")
        blob += struct.pack("<H", len(raw))
        blob += raw
        blob += struct.pack("<BB", code, arr.ndim)
        for d in arr.shape:
            blob += struct.pack("<Q", d)
        blob += np.ascontiguousarray(arr, dtype=_DTYPE_CODES[code]).tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def read_container(path):
    """Read an FWB1 file into an ordered name -> ndarray dict."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    out = {}
    off = 4
    n = len(blob)

    def take(k, what):
        nonlocal off
        if off + k > n:
            raise ContainerError(f"{path}: truncated file while reading {what}")
        piece = blob[off : off + k]
        off += k
        return piece

    while off < n:
        (name_len,) = struct.unpack("<H", take(2, "chunk name length"))
        name = take(name_len, "chunk name").decode("utf-8")
        code, rank = struct.unpack("<BB", take(2, f"chunk '{name}' header"))
        dtype = _DTYPE_CODES.get(code)
        if dtype is None:
            raise ContainerError(f"{path}: chunk '{name}': unknown dtype code {code}")
        dims = tuple(
            struct.unpack("<Q", take(8, f"chunk '{name}' dims"))[0] for _ in range(rank)
        )
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = take(count * dtype.itemsize, f"chunk '{name}' payload")
        out[name] = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    return out


def encode_text(text):
    """UTF-8 text as a u8 chunk payload."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def decode_text(arr):
    """Inverse of :func:`encode_text`."""
    return bytes(np.asarray(arr, dtype=np.uint8)).decode("utf-8")
