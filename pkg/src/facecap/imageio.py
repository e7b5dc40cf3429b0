"""Image files: 8-bit PNG plus ASCII PPM/PGM for zero-dependency debugging.

Color PNGs are sRGB: linear [0,1] renders pass through the sRGB transfer
function before 8-bit quantization, and loading returns the encoded values
scaled to [0,1] without linearizing — metrics deliberately operate on the
quantized sRGB values, which is the usual practice for image-space PSNR.
Class-map PNGs are grayscale with the class index as the raw gray value
(255 = background sentinel).
"""

import numpy as np
from PIL import Image

from .errors import ValidationError


class ImageError(ValidationError):
    pass


def srgb_encode(linear):
    c = np.clip(np.asarray(linear, dtype=np.float64), 0.0, 1.0)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def to_uint8(img):
    return np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def save_png_rgb(path, linear_rgb):
    """Write a linear [0,1] (H,W,3) image as an 8-bit sRGB PNG."""
    img = np.asarray(linear_rgb)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"color image must be (H, W, 3), got {img.shape}")
    Image.fromarray(to_uint8(srgb_encode(img)), mode="RGB").save(path, format="PNG")


def load_png_rgb(path):
    """Read an RGB PNG to float64 [0,1] (sRGB-encoded values, not linearized)."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_png_gray(path, indices):
    """Write raw index values (e.g. class maps) as an 8-bit grayscale PNG."""
    arr = np.asarray(indices)
    if arr.ndim != 2:
        raise ImageError(f"index image must be (H, W), got {arr.shape}")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")


def load_png_gray(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.uint8)


def save_ppm(path, rgb01):
    """ASCII P3 with values already in [0,1] (no transfer function)."""
    img = to_uint8(rgb01)
    h, w, _ = img.shape
    lines = [f"P3 {w} {h} 255"]
    lines += [" ".join(str(v) for v in row.reshape(-1)) for row in img]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_ppm(path):
    tokens = _ascii_tokens(path, expect="P3")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array(tokens[4:], dtype=np.float64)
    if data.size != w * h * 3:
        raise ImageError(f"{path}: expected {w * h * 3} samples, found {data.size}")
    return data.reshape(h, w, 3) / maxval


def save_pgm(path, gray):
    img = np.asarray(gray).astype(np.uint8)
    h, w = img.shape
    lines = [f"P2 {w} {h} 255"]
    lines += [" ".join(str(v) for v in row) for row in img]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pgm(path):
    tokens = _ascii_tokens(path, expect="P2")
    w, h, _ = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array(tokens[4:], dtype=np.uint8)
    if data.size != w * h:
        raise ImageError(f"{path}: expected {w * h} samples, found {data.size}")
    return data.reshape(h, w)


def _ascii_tokens(path, expect):
    with open(path, "r", encoding="ascii") as fh:
        text = "\n".join(line.split("#", 1)[0] for line in fh)
    tokens = text.split()
    if not tokens or tokens[0] != expect:
        raise ImageError(f"{path}: expected {expect} header")
    return tokens
