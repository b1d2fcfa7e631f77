"""Per-pixel features: decoding, resizing, color spaces, oriented gradients.

A feature map stacks, per pixel,

    f = [y, M_0, M_90, M_180, M_270, color...]

where y is the vertical position measured from the top of the image and
stretched to [0, 1], the M planes are soft-binned gradient magnitudes at
the four axis orientations, and the color block is one of RGB, Lab, HSV
(3 channels) or normalized rg (2 channels). All channels land in [0, 1]:
position by construction, gradients by a per-image division by each
plane's maximum, colors by the fixed scalings below.
"""

from __future__ import annotations

import enum
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DimensionMismatchError

__all__ = [
    "ColorSpace",
    "load_image",
    "resize_bilinear",
    "convert_color",
    "oriented_gradients",
    "build_feature_map",
    "GRADIENT_BINS_DEG",
]

GRADIENT_BINS_DEG = (0.0, 90.0, 180.0, 270.0)

_BLACK_EPS = 1e-6

# sRGB -> XYZ (D65, 2 degree observer)
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65_WHITE = np.array([0.95047, 1.0, 1.08883])


class ColorSpace(enum.Enum):
    """Color block appended to the position/gradient features."""

    RGB = "rgb"
    LAB = "lab"
    HSV = "hsv"
    NRNG = "nrng"

    @property
    def color_dims(self) -> int:
        return 2 if self is ColorSpace.NRNG else 3

    @property
    def feature_dim(self) -> int:
        """Full per-pixel feature length: position + 4 gradients + color."""
        return 5 + self.color_dims


def load_image(path: str | Path) -> np.ndarray:
    """Decode an image file (PNG, PPM, ...) to float RGB in [0, 1].

    8-bit channel values are divided by 255; no gamma linearization is
    applied, descriptors operate on display-space values.
    """
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def resize_bilinear(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resampling to exactly (height, width), channels last.

    Sample positions follow the half-pixel-center convention: output
    center i maps to input coordinate (i + 0.5) * in/out - 0.5, clamped
    to the valid range, so resizing to the same size is the identity.
    """
    if width <= 0 or height <= 0:
        raise DimensionMismatchError(
            f"target size must be positive, got {width}x{height}"
        )
    img = np.asarray(img, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[:, :, None]
    h, w = img.shape[:2]

    def axis_coords(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = axis_coords(h, height)
    x0, x1, wx = axis_coords(w, width)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out[:, :, 0] if squeeze else out


def _require_rgb(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionMismatchError(
            f"expected an RGB image of shape (H, W, 3), got {img.shape}"
        )
    return img


def _rgb_to_lab(img: np.ndarray) -> np.ndarray:
    # Display-space sRGB -> linear -> XYZ (D65) -> CIELAB.
    c = img
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T
    t = xyz / _D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(t > delta ** 3, np.cbrt(t), t / (3 * delta ** 2) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lum = 116.0 * fy - 16.0
    a = 500.0 * (fx - fy)
    b = 200.0 * (fy - fz)
    return np.stack([lum / 100.0, (a + 128.0) / 255.0, (b + 128.0) / 255.0], axis=-1)


def _rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    # Hexcone model; hue scaled to [0, 1).
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    mx = np.max(img, axis=-1)
    mn = np.min(img, axis=-1)
    diff = mx - mn
    safe = np.where(diff > 0, diff, 1.0)
    h = np.zeros_like(mx)
    is_r = (mx == r) & (diff > 0)
    is_g = (mx == g) & (diff > 0) & ~is_r
    is_b = (diff > 0) & ~is_r & ~is_g
    h = np.where(is_r, ((g - b) / safe) % 6.0, h)
    h = np.where(is_g, (b - r) / safe + 2.0, h)
    h = np.where(is_b, (r - g) / safe + 4.0, h)
    s = np.where(mx > 0, diff / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h / 6.0, s, mx], axis=-1)


def _rgb_to_nrng(img: np.ndarray) -> np.ndarray:
    total = np.sum(img, axis=-1)
    dark = total < _BLACK_EPS
    safe = np.where(dark, 1.0, total)
    nr = np.where(dark, 1.0 / 3.0, img[..., 0] / safe)
    ng = np.where(dark, 1.0 / 3.0, img[..., 1] / safe)
    return np.stack([nr, ng], axis=-1)


def convert_color(img: np.ndarray, space: ColorSpace) -> np.ndarray:
    """Convert an RGB image in [0, 1] to the requested color block.

    Scalings keep every channel in [0, 1]: Lab becomes (L/100,
    (a+128)/255, (b+128)/255); HSV comes from the hexcone model with hue
    in turns; normalized rg maps a black pixel (R+G+B < 1e-6) to the
    neutral (1/3, 1/3).
    """
    img = _require_rgb(img)
    if space is ColorSpace.RGB:
        return img.copy()
    if space is ColorSpace.LAB:
        return _rgb_to_lab(img)
    if space is ColorSpace.HSV:
        return _rgb_to_hsv(img)
    return _rgb_to_nrng(img)


def oriented_gradients(img: np.ndarray) -> np.ndarray:
    """Soft-binned gradient magnitudes at 0, 90, 180, 270 degrees.

    Intensity is (R+G+B)/3. Derivatives use the [-1, 0, 1] stencil with
    replicated borders; the gradient orientation atan2(I_y, I_x) covers
    the full circle, and each pixel's magnitude is split between the two
    nearest bins with weights 1 - delta/90 and delta/90, so the four
    planes sum back to the magnitude exactly. No stretching happens
    here; :func:`build_feature_map` owns the per-image normalization.
    """
    img = _require_rgb(img)
    intensity = np.mean(img, axis=-1)
    padded = np.pad(intensity, 1, mode="edge")
    ix = padded[1:-1, 2:] - padded[1:-1, :-2]
    iy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    mag = np.hypot(ix, iy)
    ang = np.degrees(np.arctan2(iy, ix)) % 360.0
    low = np.floor(ang / 90.0).astype(int) % 4
    frac = ang / 90.0 - low
    h, w = intensity.shape
    planes = np.zeros((h, w, 4))
    # The two target bins are always distinct, so two writes suffice.
    np.put_along_axis(planes, low[..., None], (mag * (1.0 - frac))[..., None], axis=-1)
    np.put_along_axis(planes, ((low + 1) % 4)[..., None], (mag * frac)[..., None], axis=-1)
    return planes


def build_feature_map(img: np.ndarray, space: ColorSpace) -> np.ndarray:
    """Stack [y, M_0, M_90, M_180, M_270, color...] per pixel.

    y is row/(H-1) from the top (0 for a single-row image); each
    gradient plane is divided by its own per-image maximum, a zero-max
    plane staying all-zero; color channels pass through unchanged.
    """
    img = _require_rgb(img)
    h, w = img.shape[:2]
    y = np.zeros((h, w)) if h == 1 else np.repeat(
        (np.arange(h) / (h - 1))[:, None], w, axis=1
    )
    grads = oriented_gradients(img)
    peaks = grads.max(axis=(0, 1))
    scaled = np.where(peaks > 0, grads / np.where(peaks > 0, peaks, 1.0), 0.0)
    color = convert_color(img, space)
    return np.concatenate([y[..., None], scaled, color], axis=-1)
