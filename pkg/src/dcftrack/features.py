"""Image handling, patch resampling and HOG feature extraction.

Images are stored as grayscale intensity grids normalized to the range
[-1/2, 1/2]. Patches are extracted around a sub-pixel center by bilinear
resampling with edge replication for out-of-bounds source pixels, so a
tracker can sample past the image border without special casing.

The HOG variant is the 31-channel one commonly used for tracking:
18 contrast-sensitive orientation channels, 9 contrast-insensitive ones,
and 4 gradient-energy channels, block-normalized over the four 2x2 cell
neighborhoods with truncation. Channel scaling keeps every output value
within [0, truncation].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path as _FsPath

import numpy as np

from .mcdcf import FeatureSample
from .spectral import circular_offsets, hann_window

__all__ = [
    "GrayImage",
    "Patch",
    "HogParams",
    "extract_patch",
    "compute_hog",
    "patch_feature_grid",
    "rounded_patch_size",
    "translation_sample",
    "scale_sample",
    "scale_model_size",
]

HOG_CHANNELS = 31
_ORIENTATIONS = 18  # signed bins; insensitive channels pair opposite bins
_TRUNCATION = 0.2
_NORM_EPS = 1e-10


@dataclass(frozen=True)
class GrayImage:
    """Grayscale image, row-major float pixels in [-1/2, 1/2]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=float)
        if px.ndim != 2 or px.size == 0:
            raise ValueError("image must be a non-empty 2-D grid")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_uint8(cls, raster: np.ndarray) -> "GrayImage":
        """Map 8-bit intensities (or RGB via luma weighting) to [-1/2, 1/2]."""
        raster = np.asarray(raster)
        if raster.ndim == 3:
            raster = (
                0.299 * raster[..., 0] + 0.587 * raster[..., 1] + 0.114 * raster[..., 2]
            )
        return cls(raster.astype(float) / 255.0 - 0.5)

    @classmethod
    def from_file(cls, path) -> "GrayImage":
        from PIL import Image

        with Image.open(_FsPath(path)) as im:
            if im.mode != "L":
                im = im.convert("L")
            return cls.from_uint8(np.asarray(im))


@dataclass(frozen=True)
class Patch:
    """Resampled view of a source rectangle (center/size in source pixels)."""

    pixels: np.ndarray
    center: tuple[float, float]  # (x, y)
    source_size: tuple[float, float]  # (width, height)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class HogParams:
    cell_size: int = 1

    def __post_init__(self):
        if self.cell_size < 1:
            raise ValueError("cell size must be >= 1")


def _axis_taps(center: float, size: float, out: int, limit: int):
    """Bilinear source indices and fractions for one axis of a resample."""
    pos = center - size / 2.0 + (np.arange(out) + 0.5) * (size / out)
    pos = np.clip(pos, 0.0, limit - 1.0)
    lo = np.floor(pos).astype(int)
    frac = pos - lo
    hi = np.minimum(lo + 1, limit - 1)
    return lo, hi, frac


def extract_patch(
    img: GrayImage,
    center: tuple[float, float],
    width: float,
    height: float,
    out_width: int,
    out_height: int,
) -> Patch:
    """Bilinearly resample an axis-aligned source rectangle.

    The rectangle is centered at ``center`` (pixel-center coordinates) and
    may extend past the image; samples outside replicate the nearest edge
    pixel.
    """
    if width <= 0 or height <= 0 or out_width < 1 or out_height < 1:
        raise ValueError("patch sizes must be positive")
    cx, cy = float(center[0]), float(center[1])
    x0, x1, fx = _axis_taps(cx, float(width), int(out_width), img.width)
    y0, y1, fy = _axis_taps(cy, float(height), int(out_height), img.height)
    px = img.pixels
    top = px[np.ix_(y0, x0)] * (1.0 - fx) + px[np.ix_(y0, x1)] * fx
    bot = px[np.ix_(y1, x0)] * (1.0 - fx) + px[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy)[:, None] + bot * fy[:, None]
    return Patch(out, (cx, cy), (float(width), float(height)))


def _gradients(px: np.ndarray):
    """Centered differences with replicated edges, unnormalized."""
    gx = np.empty_like(px)
    gy = np.empty_like(px)
    gx[:, 1:-1] = px[:, 2:] - px[:, :-2]
    gx[:, 0] = px[:, 1] - px[:, 0] if px.shape[1] > 1 else 0.0
    gx[:, -1] = px[:, -1] - px[:, -2] if px.shape[1] > 1 else 0.0
    gy[1:-1, :] = px[2:, :] - px[:-2, :]
    gy[0, :] = px[1, :] - px[0, :] if px.shape[0] > 1 else 0.0
    gy[-1, :] = px[-1, :] - px[-2, :] if px.shape[0] > 1 else 0.0
    return gx, gy


def _cell_histograms(px: np.ndarray, cell: int) -> np.ndarray:
    """Orientation-energy histograms per cell, bilinear spatial binning.

    Each pixel votes its gradient magnitude into the nearest of 18 signed
    orientation bins; the vote is shared bilinearly between the (up to)
    four cells whose centers surround the pixel.
    """
    gx, gy = _gradients(px)
    mag = np.hypot(gx, gy)
    theta = np.arctan2(gy, gx)
    bins = np.rint(theta / (np.pi / 9.0)).astype(int) % _ORIENTATIONS

    h_px, w_px = px.shape
    rows, cols = h_px // cell, w_px // cell
    sub = mag[: rows * cell, : cols * cell]
    bins = bins[: rows * cell, : cols * cell]

    ys = (np.arange(rows * cell) + 0.5) / cell - 0.5
    xs = (np.arange(cols * cell) + 0.5) / cell - 0.5
    cy0 = np.floor(ys).astype(int)
    cx0 = np.floor(xs).astype(int)
    wy1 = ys - cy0
    wx1 = xs - cx0

    hist = np.zeros(rows * cols * _ORIENTATIONS)
    stride = cols * _ORIENTATIONS
    for dy, wy in ((0, (1.0 - wy1)), (1, wy1)):
        ry = cy0 + dy
        oky = (ry >= 0) & (ry < rows)
        for dx, wx in ((0, (1.0 - wx1)), (1, wx1)):
            rx = cx0 + dx
            okx = (rx >= 0) & (rx < cols)
            w = np.outer(wy * oky, wx * okx) * sub
            flat = (
                np.clip(ry, 0, rows - 1)[:, None] * stride
                + np.clip(rx, 0, cols - 1)[None, :] * _ORIENTATIONS
                + bins
            )
            hist += np.bincount(flat.ravel(), weights=w.ravel(), minlength=hist.size)
    return hist.reshape(rows, cols, _ORIENTATIONS)


def compute_hog(patch: Patch, params: HogParams) -> FeatureSample:
    """31-channel HOG over floor(H/cell) x floor(W/cell) cells.

    Channel layout: 18 contrast-sensitive orientations, 9 contrast-
    insensitive orientations, 4 gradient-energy sums (one per block
    normalization). Out-of-range neighbor cells for normalization are
    edge-replicated; all channels land in [0, 0.2].
    """
    cell = params.cell_size
    if patch.height < cell or patch.width < cell:
        raise ValueError("patch smaller than one HOG cell")
    sens = _cell_histograms(patch.pixels, cell)
    insens = sens[..., :9] + sens[..., 9:]
    energy = np.sum(insens**2, axis=-1)

    epad = np.pad(energy, 1, mode="edge")
    rows, cols = energy.shape
    norms = []
    for dy in (-1, 1):
        for dx in (-1, 1):
            n = (
                epad[1 : 1 + rows, 1 : 1 + cols]
                + epad[1 + dy : 1 + dy + rows, 1 : 1 + cols]
                + epad[1 : 1 + rows, 1 + dx : 1 + dx + cols]
                + epad[1 + dy : 1 + dy + rows, 1 + dx : 1 + dx + cols]
            )
            norms.append(np.sqrt(n + _NORM_EPS))

    out = np.zeros((rows, cols, HOG_CHANNELS))
    texture = [np.zeros((rows, cols)) for _ in norms]
    for i, nrm in enumerate(norms):
        clipped = np.minimum(sens / nrm[..., None], _TRUNCATION)
        out[..., :_ORIENTATIONS] += 0.25 * clipped
        texture[i] = clipped.sum(axis=-1) / _ORIENTATIONS
        out[..., _ORIENTATIONS : _ORIENTATIONS + 9] += 0.25 * np.minimum(
            insens / nrm[..., None], _TRUNCATION
        )
    for i in range(4):
        out[..., _ORIENTATIONS + 9 + i] = texture[i]
    return FeatureSample(out, windowed=False)


def rounded_patch_size(w: float, h: float) -> tuple[int, int]:
    """Nearest-integer patch size in source pixels, at least 1 per axis."""
    return max(1, int(round(w))), max(1, int(round(h)))


def _gray_channel(patch_px: np.ndarray, cell: int) -> np.ndarray:
    """Intensity channel on the cell grid: raw pixels for 1x1 cells,
    per-cell average otherwise."""
    if cell == 1:
        return patch_px
    rows, cols = patch_px.shape[0] // cell, patch_px.shape[1] // cell
    sub = patch_px[: rows * cell, : cols * cell]
    return sub.reshape(rows, cell, cols, cell).mean(axis=(1, 3))


def patch_feature_grid(
    img: GrayImage,
    center: tuple[float, float],
    src_w: float,
    src_h: float,
    rows: int,
    cols: int,
    cell: int,
) -> np.ndarray:
    """Unwindowed 32-channel feature grid (31 HOG + intensity) of a patch
    resampled to rows x cols cells."""
    patch = extract_patch(img, center, src_w, src_h, cols * cell, rows * cell)
    hog = compute_hog(patch, HogParams(cell_size=cell))
    gray = _gray_channel(patch.pixels, cell)
    return np.concatenate([hog.data, gray[..., None]], axis=-1)


def translation_sample(img: GrayImage, state, config) -> FeatureSample:
    """Windowed 32-channel training/test sample for the translation filter.

    A patch of padding x current target size is resampled to the fixed
    model size, HOG is computed on the configured cell grid, the intensity
    channel is appended, and every channel is multiplied by a 2-D Hann
    window. The source size stays real-valued so that sub-pixel scale
    differences between resolutions remain distinguishable.
    """
    if state.base_w < 1 or state.base_h < 1 or state.scale <= 0:
        raise InvalidTargetError("degenerate target state")
    cell = config.hog_cell
    rows, cols = config.model_cells
    src_w = config.padding * state.scale * state.base_w
    src_h = config.padding * state.scale * state.base_h
    data = patch_feature_grid(img, (state.x, state.y), src_w, src_h, rows, cols, cell)
    data = data * hann_window((rows, cols))[..., None]
    return FeatureSample(data, windowed=True)


def scale_model_size(base_w: float, base_h: float, max_area: float = 512.0):
    """Fixed resample size for scale-filter patches.

    The initial target size, shrunk (aspect preserved) so its area does
    not exceed ``max_area`` pixels. Flooring keeps the area bound strict,
    which caps the flattened descriptor length at 31 * max_area / 16.
    """
    area = base_w * base_h
    k = 1.0 if area <= max_area else float(np.sqrt(max_area / area))
    return max(1, int(base_w * k)), max(1, int(base_h * k))


def scale_sample(
    img: GrayImage,
    state,
    scale_count: int,
    scale_step: float,
    fixed_model_size: tuple[int, int],
) -> FeatureSample:
    """1-D scale-filter sample: one flattened HOG descriptor per scale.

    Bin i of the sample holds the descriptor of the patch whose size is
    the current target size times step**n, n being the signed circular
    offset of i; a 1-D Hann window over the scale axis weights each bin.
    """
    if scale_step <= 1.0:
        raise ValueError("scale step must exceed 1")
    w_m, h_m = fixed_model_size
    cell = 4
    if w_m < cell or h_m < cell:
        raise InvalidTargetError("target too small for one HOG cell at model size")
    exponents = circular_offsets(scale_count)
    window = hann_window((scale_count,))
    # Natural-order window permuted to the wrap-around storage layout.
    nmin = int(exponents.min())
    rows = []
    for i, n in enumerate(exponents):
        factor = scale_step ** float(n)
        src_w, src_h = rounded_patch_size(
            factor * state.scale * state.base_w, factor * state.scale * state.base_h
        )
        patch = extract_patch(img, (state.x, state.y), src_w, src_h, w_m, h_m)
        desc = compute_hog(patch, HogParams(cell_size=cell)).data.reshape(-1)
        rows.append(desc * window[n - nmin])
    return FeatureSample(np.stack(rows, axis=0), windowed=True)


class InvalidTargetError(RuntimeError):
    """Target geometry cannot produce a valid feature sample."""
