"""Second-stream construction: Canny edge maps, resizing, normalization.

Pipeline conventions (recorded so the brute-force test reference can match
pixel-exact): grayscale uses the BT.601 luma weights; the Gaussian blur is
separable with radius ceil(3*sigma), reflect-padded, and its result is
rounded back to uint8 so the Sobel stage runs on exact integers; gradient
orientation is quantized to 4 bins for non-maximum suppression;
double-threshold hysteresis keeps weak pixels 8-connected to a strong one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InputError
from .tensor import Tensor


@dataclass
class Image:
    """8-bit image, row-major, channel-last. ``pixels`` has shape (H, W, C)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise InputError(f"image must be HxWx{{1,3}}, got shape {px.shape}")
        self.pixels = px

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return self.pixels.shape[2]


def to_grayscale(img):
    """BT.601 luma: round(0.299 R + 0.587 G + 0.114 B)."""
    if img.channels != 3:
        raise InputError(f"to_grayscale expects 3 channels, got {img.channels}")
    px = img.pixels.astype(np.float64)
    luma = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
    return Image(np.clip(np.round(luma), 0, 255).astype(np.uint8))


def gaussian_kernel(sigma):
    """Normalized 1-d Gaussian with radius ceil(3*sigma); weights sum to 1."""
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur_float(gray, sigma):
    """Separable reflect-padded Gaussian on a float64 (H, W) array."""
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    padded = np.pad(gray, ((r, r), (0, 0)), mode="reflect")
    tmp = np.zeros_like(gray)
    for t, w in enumerate(k):
        tmp += w * padded[t : t + gray.shape[0], :]
    padded = np.pad(tmp, ((0, 0), (r, r)), mode="reflect")
    out = np.zeros_like(gray)
    for t, w in enumerate(k):
        out += w * padded[:, t : t + gray.shape[1]]
    return out


def gaussian_blur(img, sigma):
    if img.channels != 1:
        raise InputError("gaussian_blur expects a single-channel image")
    out = _blur_float(img.pixels[:, :, 0].astype(np.float64), sigma)
    return Image(np.clip(np.round(out), 0, 255).astype(np.uint8))


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def _sobel(gray):
    padded = np.pad(gray, 1, mode="reflect")
    h, w = gray.shape
    gx = np.zeros_like(gray, dtype=np.float64)
    gy = np.zeros_like(gray, dtype=np.float64)
    for i in range(3):
        for j in range(3):
            win = padded[i : i + h, j : j + w]
            gx += _SOBEL_X[i, j] * win
            gy += _SOBEL_Y[i, j] * win
    return gx, gy


def _orientation_bin(gx, gy):
    """Quantize gradient direction to 0:E-W, 1:NE-SW, 2:N-S, 3:NW-SE."""
    angle = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.zeros(angle.shape, dtype=np.int64)
    bins[(angle >= 22.5) & (angle < 67.5)] = 1
    bins[(angle >= 67.5) & (angle < 112.5)] = 2
    bins[(angle >= 112.5) & (angle < 157.5)] = 3
    return bins

# Neighbor offsets along the gradient direction, per orientation bin.
_NMS_OFFSETS = {0: ((0, 1), (0, -1)), 1: ((-1, 1), (1, -1)), 2: ((-1, 0), (1, 0)), 3: ((-1, -1), (1, 1))}


def _nonmax_suppress(mag, bins):
    h, w = mag.shape
    padded = np.pad(mag, 1, mode="constant")
    keep = np.ones((h, w), dtype=bool)
    for b, ((di1, dj1), (di2, dj2)) in _NMS_OFFSETS.items():
        sel = bins == b
        n1 = padded[1 + di1 : 1 + di1 + h, 1 + dj1 : 1 + dj1 + w]
        n2 = padded[1 + di2 : 1 + di2 + h, 1 + dj2 : 1 + dj2 + w]
        keep &= ~sel | ((mag >= n1) & (mag >= n2))
    return np.where(keep, mag, 0.0)


def _hysteresis(mag, low, high):
    strong = mag >= high
    weak = (mag >= low) & ~strong
    out = strong.copy()
    # Flood weak pixels 8-connected to a strong pixel, to fixpoint.
    frontier = strong
    while frontier.any():
        grown = np.zeros_like(out)
        padded = np.pad(frontier, 1, mode="constant")
        h, w = out.shape
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                grown |= padded[1 + di : 1 + di + h, 1 + dj : 1 + dj + w]
        frontier = grown & weak & ~out
        out |= frontier
    return out


def canny(img, low=50.0, high=100.0, sigma=1.0):
    """Binary edge map (pixels in {0, 255}) via the standard Canny stages."""
    if not 0 <= low <= high:
        raise ConfigurationError(f"need 0 <= low <= high, got low={low}, high={high}")
    gray = to_grayscale(img) if img.channels == 3 else img
    blurred = gaussian_blur(gray, sigma)
    gx, gy = _sobel(blurred.pixels[:, :, 0].astype(np.float64))
    mag = np.sqrt(gx * gx + gy * gy)
    bins = _orientation_bin(gx, gy)
    suppressed = _nonmax_suppress(mag, bins)
    edges = _hysteresis(suppressed, low, high)
    return Image(np.where(edges, 255, 0).astype(np.uint8))


def resize(img, out_h, out_w):
    """Corner-aligned bilinear interpolation."""
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(f"output extents must be positive, got {out_h}x{out_w}")
    h, w = img.height, img.width
    if (out_h, out_w) == (h, w):
        return Image(img.pixels.copy())
    ys = np.linspace(0.0, h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    px = img.pixels.astype(np.float64)
    top = px[y0][:, x0] * (1 - fx) + px[y0][:, x1] * fx
    bot = px[y1][:, x0] * (1 - fx) + px[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy
    return Image(np.clip(np.round(out), 0, 255).astype(np.uint8))


def normalize(img):
    """Pixels / 255 as a float tensor in channel-first (C, H, W) layout."""
    return Tensor(img.pixels.astype(np.float64).transpose(2, 0, 1) / 255.0)


def denormalize(t):
    data = np.asarray(t.data if isinstance(t, Tensor) else t)
    return Image(np.round(data.transpose(1, 2, 0) * 255.0).astype(np.uint8))


def replicate_channels(img, channels=3):
    if img.channels == channels:
        return img
    return Image(np.repeat(img.pixels, channels, axis=2))


def make_second_stream(dataset, low=50.0, high=100.0, sigma=1.0):
    """Attach a Canny edge map of each primary image as the secondary stream.

    The edge map is replicated to the primary's channel count so both trunks
    share an input shape. Labels and ordering are untouched; provenance
    records the Canny parameters.
    """
    samples = [
        replace(
            s,
            secondary=replicate_channels(
                canny(s.primary, low, high, sigma), s.primary.channels
            ),
        )
        for s in dataset.samples
    ]
    provenance = dict(dataset.provenance)
    provenance["second_stream"] = {"kind": "canny", "low": low, "high": high, "sigma": sigma}
    return replace(dataset, samples=samples, provenance=provenance)


def write_pgm(img, path):
    """Dump a single-channel image as binary PGM (P5) for visual inspection."""
    if img.channels != 1:
        raise InputError("PGM dump expects a single-channel image")
    with open(path, "wb") as f:
        f.write(f"P5\n{img.width} {img.height}\n255\n".encode("ascii"))
        f.write(img.pixels[:, :, 0].tobytes())
