"""Tracker variants built on the multi-channel correlation filter core.

Six per-frame trackers share one interface (``track(frame)`` returning a
bounding box plus diagnostics):

* ``translation`` - 2-D filter, position only.
* ``multires`` - translation filter applied to patches at several
  resolutions, joint argmax over location and resolution.
* ``joint`` / ``joint_iterative`` - a single 3-D filter over a scale
  pyramid cuboid; the iterative variant re-centers the pyramid on the
  running estimate to reduce shear bias.
* ``dsst`` - translation filter plus a separate 1-D scale filter applied
  at the new position.
* ``fdsst`` - dsst with a coarser translation feature grid recovered by
  trigonometric score interpolation, PCA-compressed translation features,
  QR-compressed scale features, a wider search area, and a sub-sampled
  scale axis interpolated back to full resolution.

Positions are tracked in pixel-center coordinates; boxes use the usual
continuous (x, y, w, h) convention with the origin at the top-left image
corner.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import compression, features, mcdcf
from .spectral import (
    circular_offsets,
    gaussian_response,
    hann_window,
    interpolate_scores,
    signed_offset,
)

__all__ = [
    "BoundingBox",
    "TargetState",
    "TrackerConfig",
    "FrameDiagnostics",
    "TRACKER_KINDS",
    "default_config",
    "init_tracker",
]

TRACKER_KINDS = (
    "translation",
    "multires",
    "joint",
    "joint_iterative",
    "dsst",
    "fdsst",
)


@dataclass(frozen=True)
class BoundingBox:
    x: float
    y: float
    width: float
    height: float

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("box sides must be positive")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.width / 2.0, self.y + self.height / 2.0)


@dataclass
class TargetState:
    x: float  # center, pixel-center coordinates
    y: float
    scale: float
    base_w: float
    base_h: float

    @property
    def width(self) -> float:
        return self.scale * self.base_w

    @property
    def height(self) -> float:
        return self.scale * self.base_h

    def to_box(self) -> BoundingBox:
        return BoundingBox(
            self.x + 0.5 - self.width / 2.0,
            self.y + 0.5 - self.height / 2.0,
            self.width,
            self.height,
        )


@dataclass(frozen=True)
class TrackerConfig:
    """Knobs shared by all tracker kinds; per-kind defaults come from
    :func:`default_config`. ``model_cells`` is resolved at init time."""

    lam: float = 0.01
    eta: float = 0.025
    padding: float = 2.0
    hog_cell: int = 1
    sigma_factor: float = 1.0 / 16.0
    scale_sigma_factor: float = 1.0 / 16.0
    scale_count: int = 33
    interp_scale_count: int | None = None
    scale_step: float = 1.02
    pca_dims: int | None = None
    scale_compression: bool = False
    interpolate_translation: bool = False
    max_iterations: int = 5
    scale_model_max_area: float = 512.0
    model_cells: tuple[int, int] | None = None


def default_config(kind: str) -> TrackerConfig:
    base = TrackerConfig()
    if kind == "translation":
        return base
    if kind == "multires":
        return replace(base, scale_count=5, scale_step=1.005)
    if kind in ("joint", "joint_iterative"):
        return base
    if kind == "dsst":
        return base
    if kind == "fdsst":
        # 17 scale samples subsample the 33-bin search range, so the sample
        # spacing is squared; interpolation restores 1.02 granularity.
        return replace(
            base,
            padding=3.0,
            hog_cell=4,
            pca_dims=18,
            scale_count=17,
            interp_scale_count=33,
            scale_step=1.02**2,
            scale_compression=True,
            interpolate_translation=True,
        )
    raise ValueError(f"unknown tracker kind {kind!r}; valid kinds: {', '.join(TRACKER_KINDS)}")


@dataclass
class FrameDiagnostics:
    """Per-frame bookkeeping consumed by the benchmark harness."""

    translation_peak: float = float("nan")
    scale_peak: float | None = None
    scale_bin: float | None = None
    resolution_bin: int | None = None
    iterations: int | None = None
    energy_retained: float | None = None
    sample_ms: float = 0.0
    detect_ms: float = 0.0
    update_ms: float = 0.0


class _Stopwatch:
    def __init__(self):
        self.t = time.perf_counter()

    def lap_ms(self) -> float:
        now = time.perf_counter()
        ms = (now - self.t) * 1e3
        self.t = now
        return ms


def _clamp_box(box: BoundingBox, width: int, height: int) -> BoundingBox:
    w = min(box.width, float(width))
    h = min(box.height, float(height))
    x = min(max(box.x, 0.0), width - w)
    y = min(max(box.y, 0.0), height - h)
    return BoundingBox(x, y, w, h)


def _even_cells(extent: float, cell: int) -> int:
    n = int(round(extent / cell))
    if n % 2:
        n += 1
    return max(n, 2)


class _TranslationMixin:
    """Translation-filter machinery shared by every tracker."""

    def _init_common(self, frame: features.GrayImage, bbox: BoundingBox, config):
        bbox = _clamp_box(bbox, frame.width, frame.height)
        if bbox.area < 4.0:
            raise ValueError("initial box must cover at least 4 px^2")
        cell = config.hog_cell
        rows = _even_cells(config.padding * bbox.height, cell)
        cols = _even_cells(config.padding * bbox.width, cell)
        self.config = replace(
            config,
            model_cells=(rows, cols),
            interp_scale_count=config.interp_scale_count or config.scale_count,
        )
        cx, cy = bbox.center
        self.state = TargetState(cx - 0.5, cy - 0.5, 1.0, bbox.width, bbox.height)
        self.image_size = (frame.width, frame.height)
        self.g_trans = gaussian_response(
            (rows, cols),
            (
                max(self.state.base_h * config.sigma_factor / cell, 1e-3),
                max(self.state.base_w * config.sigma_factor / cell, 1e-3),
            ),
        )
        self.trans_model = None
        self.frame_index = 0

    def _check_frame(self, frame: features.GrayImage):
        if (frame.width, frame.height) != self.image_size:
            raise ValueError("frame size changed mid-sequence")

    def _trans_ratio(self, scale: float) -> tuple[float, float]:
        """Image pixels represented by one model pixel, per axis."""
        rows, cols = self.config.model_cells
        cell = self.config.hog_cell
        src_w = self.config.padding * scale * self.state.base_w
        src_h = self.config.padding * scale * self.state.base_h
        return src_w / (cols * cell), src_h / (rows * cell)

    def _sample_at(self, frame, x: float, y: float, scale: float) -> mcdcf.FeatureSample:
        probe = replace_state(self.state, x=x, y=y, scale=scale)
        return features.translation_sample(frame, probe, self.config)

    def _clamp_position(self, x: float, y: float) -> tuple[float, float]:
        w, h = self.image_size
        return min(max(x, 0.0), w - 1.0), min(max(y, 0.0), h - 1.0)

    def _train_translation(self, frame):
        f = self._sample_at(frame, self.state.x, self.state.y, self.state.scale)
        if self.trans_model is None:
            self.trans_model = mcdcf.FilterModel.initial(f.dims, f.channels, self.config.lam)
        self.trans_model = mcdcf.update(self.trans_model, f, self.g_trans, self.config.eta)

    def _decode_translation(self, scores: mcdcf.CorrelationScores, scale: float):
        rows, cols = self.config.model_cells
        cell = self.config.hog_cell
        rx, ry = self._trans_ratio(scale)
        iy, ix = scores.argmax_index
        dx = signed_offset(ix, cols) * cell * rx
        dy = signed_offset(iy, rows) * cell * ry
        return dx, dy


def replace_state(state: TargetState, **kw) -> TargetState:
    merged = {
        "x": state.x,
        "y": state.y,
        "scale": state.scale,
        "base_w": state.base_w,
        "base_h": state.base_h,
    }
    merged.update(kw)
    return TargetState(**merged)


class TranslationDcfTracker(_TranslationMixin):
    """Position-only baseline; the scale stays at its initial value."""

    kind = "translation"

    def __init__(self, frame, bbox, config=None):
        self._init_common(frame, bbox, config or default_config(self.kind))
        self._train_translation(frame)
        self.frame_index = 1

    def track(self, frame):
        self._check_frame(frame)
        diag = FrameDiagnostics()
        sw = _Stopwatch()
        z = self._sample_at(frame, self.state.x, self.state.y, self.state.scale)
        diag.sample_ms += sw.lap_ms()
        scores = mcdcf.detect(self.trans_model, z)
        diag.translation_peak = scores.argmax_value
        dx, dy = self._decode_translation(scores, self.state.scale)
        self.state.x, self.state.y = self._clamp_position(
            self.state.x + dx, self.state.y + dy
        )
        diag.detect_ms += sw.lap_ms()
        self._train_translation(frame)
        diag.update_ms += sw.lap_ms()
        self.frame_index += 1
        return self.state.to_box(), diag


class MultiResolutionTracker(_TranslationMixin):
    """Translation filter evaluated on patches at several resolutions."""

    kind = "multires"

    def __init__(self, frame, bbox, config=None):
        self._init_common(frame, bbox, config or default_config(self.kind))
        if self.config.scale_count % 2 == 0:
            raise ValueError("resolution count must be odd")
        self._train_translation(frame)
        self.frame_index = 1

    def track(self, frame):
        self._check_frame(frame)
        diag = FrameDiagnostics()
        sw = _Stopwatch()
        half = self.config.scale_count // 2
        best = None
        for n in range(-half, half + 1):
            s_n = self.state.scale * self.config.scale_step**n
            z = self._sample_at(frame, self.state.x, self.state.y, s_n)
            scores = mcdcf.detect(self.trans_model, z)
            if best is None or scores.argmax_value > best[0]:
                best = (scores.argmax_value, n, s_n, scores)
        peak, n_star, s_star, scores = best
        diag.translation_peak = peak
        diag.resolution_bin = n_star
        dx, dy = self._decode_translation(scores, s_star)
        self.state.x, self.state.y = self._clamp_position(
            self.state.x + dx, self.state.y + dy
        )
        self.state.scale = s_star
        diag.detect_ms += sw.lap_ms()
        self._train_translation(frame)
        diag.update_ms += sw.lap_ms()
        self.frame_index += 1
        return self.state.to_box(), diag


class JointScaleSpaceTracker(_TranslationMixin):
    """Single 3-D filter over an M x N x S scale-pyramid cuboid.

    With ``iterative`` the detection step repeats with the pyramid
    re-centered on the latest estimate until the displacement falls below
    one cell with an unchanged scale bin, or the iteration budget is hit.
    """

    kind = "joint"

    def __init__(self, frame, bbox, config=None, iterative: bool = False):
        self._init_common(frame, bbox, config or default_config(self.kind))
        self.iterative = iterative
        if iterative:
            self.kind = "joint_iterative"
        rows, cols = self.config.model_cells
        s_bins = self.config.scale_count
        cell = self.config.hog_cell
        self.g_joint = gaussian_response(
            (rows, cols, s_bins),
            (
                max(self.state.base_h * self.config.sigma_factor / cell, 1e-3),
                max(self.state.base_w * self.config.sigma_factor / cell, 1e-3),
                s_bins * self.config.scale_sigma_factor,
            ),
        )
        exps = circular_offsets(s_bins)
        scale_window = hann_window((s_bins,))[exps - exps.min()]
        self.window3 = (
            hann_window((rows, cols))[:, :, None] * scale_window[None, None, :]
        )
        self.joint_model = None
        self._train_joint(frame)
        self.frame_index = 1

    def _pyramid(self, frame, x, y, scale):
        rows, cols = self.config.model_cells
        cell = self.config.hog_cell
        levels, ratios = [], []
        for n in circular_offsets(self.config.scale_count):
            s_n = scale * self.config.scale_step ** float(n)
            src_w = self.config.padding * s_n * self.state.base_w
            src_h = self.config.padding * s_n * self.state.base_h
            grid = features.patch_feature_grid(
                frame, (x, y), src_w, src_h, rows, cols, cell
            )
            levels.append(grid)
            ratios.append((src_w / (cols * cell), src_h / (rows * cell)))
        data = np.stack(levels, axis=2) * self.window3[..., None]
        return mcdcf.FeatureSample(data, windowed=True), ratios

    def _train_joint(self, frame):
        f, _ = self._pyramid(frame, self.state.x, self.state.y, self.state.scale)
        if self.joint_model is None:
            self.joint_model = mcdcf.FilterModel.initial(f.dims, f.channels, self.config.lam)
        self.joint_model = mcdcf.update(self.joint_model, f, self.g_joint, self.config.eta)

    def track(self, frame):
        self._check_frame(frame)
        diag = FrameDiagnostics()
        sw = _Stopwatch()
        rows, cols = self.config.model_cells
        cell = self.config.hog_cell
        s_bins = self.config.scale_count
        budget = self.config.max_iterations if self.iterative else 1
        iterations = 0
        while True:
            iterations += 1
            z, ratios = self._pyramid(frame, self.state.x, self.state.y, self.state.scale)
            scores = mcdcf.detect(self.joint_model, z)
            iy, ix, isc = scores.argmax_index
            dy_cells = signed_offset(iy, rows)
            dx_cells = signed_offset(ix, cols)
            ds = signed_offset(isc, s_bins)
            rx, ry = ratios[isc]
            self.state.x, self.state.y = self._clamp_position(
                self.state.x + dx_cells * cell * rx,
                self.state.y + dy_cells * cell * ry,
            )
            self.state.scale *= self.config.scale_step**ds
            diag.translation_peak = scores.argmax_value
            diag.scale_bin = float(ds)
            converged = ds == 0 and abs(dx_cells) < 1 and abs(dy_cells) < 1
            if converged or iterations >= budget:
                break
        diag.iterations = iterations
        diag.detect_ms += sw.lap_ms()
        self._train_joint(frame)
        diag.update_ms += sw.lap_ms()
        self.frame_index += 1
        return self.state.to_box(), diag


class DsstTracker(_TranslationMixin):
    """Translation filter plus a separate 1-D scale filter.

    Each frame first localizes the target with the translation filter at
    the previous scale, then estimates the scale at the new position, then
    extracts fresh training samples at the final state and updates both
    models. Optional switches (used by the fdsst configuration): PCA
    compression of translation features, trigonometric interpolation of
    translation scores to pixel density, QR compression of scale features
    and interpolation of the scale score axis.
    """

    kind = "dsst"

    def __init__(self, frame, bbox, config=None, kind: str | None = None):
        if kind is not None:
            self.kind = kind
        self._init_common(frame, bbox, config or default_config(self.kind))
        cfg = self.config
        if cfg.interp_scale_count < cfg.scale_count:
            raise ValueError("interpolated scale count cannot shrink the scale axis")
        self.g_scale = gaussian_response(
            (cfg.scale_count,), (cfg.scale_count * cfg.scale_sigma_factor,)
        )
        self.scale_model_px = features.scale_model_size(
            self.state.base_w, self.state.base_h, cfg.scale_model_max_area
        )
        # Translation model, optionally PCA compressed.
        self.trans_model = None
        self.trans_cmodel = None
        self.trans_template = None
        # Scale model, optionally QR compressed.
        self.scale_model = None
        self.scale_cmodel = None
        self.scale_template = None
        self._energy_retained = None
        self._update_models(frame)
        self.frame_index = 1

    # -- detection ---------------------------------------------------

    def _detect_translation(self, frame, diag):
        cfg = self.config
        rows, cols = cfg.model_cells
        cell = cfg.hog_cell
        z = self._sample_at(frame, self.state.x, self.state.y, self.state.scale)
        if cfg.pca_dims is not None:
            scores = compression.compressed_detect(self.trans_cmodel, z)
        else:
            scores = mcdcf.detect(self.trans_model, z)
        rx, ry = self._trans_ratio(self.state.scale)
        if cfg.interpolate_translation and cell > 1:
            dense = interpolate_scores(scores.spectrum, (rows * cell, cols * cell))
            iy, ix = np.unravel_index(int(np.argmax(dense)), dense.shape)
            diag.translation_peak = float(dense[iy, ix])
            dx = signed_offset(int(ix), cols * cell) * rx
            dy = signed_offset(int(iy), rows * cell) * ry
        else:
            diag.translation_peak = scores.argmax_value
            iy, ix = scores.argmax_index
            dx = signed_offset(ix, cols) * cell * rx
            dy = signed_offset(iy, rows) * cell * ry
        self.state.x, self.state.y = self._clamp_position(
            self.state.x + dx, self.state.y + dy
        )

    def _detect_scale(self, frame, diag):
        cfg = self.config
        z = features.scale_sample(
            frame, self.state, cfg.scale_count, cfg.scale_step, self.scale_model_px
        )
        if cfg.scale_compression:
            scores = compression.compressed_detect(self.scale_cmodel, z)
        else:
            scores = mcdcf.detect(self.scale_model, z)
        s_bins, s_interp = cfg.scale_count, cfg.interp_scale_count
        if s_interp > s_bins:
            dense = interpolate_scores(scores.spectrum, (s_interp,))
            idx = int(np.argmax(dense))
            diag.scale_peak = float(dense[idx])
            exponent = signed_offset(idx, s_interp) * (s_bins - 1) / (s_interp - 1)
        else:
            diag.scale_peak = scores.argmax_value
            exponent = float(signed_offset(scores.argmax_index[0], s_bins))
        diag.scale_bin = exponent
        self.state.scale *= cfg.scale_step**exponent

    # -- training ----------------------------------------------------

    def _update_models(self, frame):
        cfg = self.config
        f = self._sample_at(frame, self.state.x, self.state.y, self.state.scale)
        if cfg.pca_dims is not None:
            self.trans_template = compression.update_template(
                self.trans_template, f, cfg.eta
            )
            proj = compression.learn_projection(self.trans_template, cfg.pca_dims)
            spectrum = compression.projection_spectrum(self.trans_template)
            floor = 1e-12 * spectrum.max() if spectrum.size else 0.0
            spectrum = np.where(spectrum < floor, 0.0, spectrum)
            total = spectrum.sum()
            self._energy_retained = (
                float(spectrum[: cfg.pca_dims].sum() / total) if total > 0 else 1.0
            )
            if self.trans_cmodel is None:
                self.trans_cmodel = compression.CompressedFilterModel.initial(
                    f.dims, cfg.pca_dims, f.channels, cfg.lam
                )
            self.trans_cmodel = compression.compressed_update(
                self.trans_cmodel, f, self.trans_template, self.g_trans, cfg.eta, proj
            )
        else:
            if self.trans_model is None:
                self.trans_model = mcdcf.FilterModel.initial(
                    f.dims, f.channels, cfg.lam
                )
            self.trans_model = mcdcf.update(self.trans_model, f, self.g_trans, cfg.eta)

        f_s = features.scale_sample(
            frame, self.state, cfg.scale_count, cfg.scale_step, self.scale_model_px
        )
        if cfg.scale_compression:
            self.scale_template = compression.update_template(
                self.scale_template, f_s, cfg.eta
            )
            p_u, p_f = compression.qr_scale_projection(self.scale_template, f_s.data)
            if self.scale_cmodel is None:
                self.scale_cmodel = compression.CompressedFilterModel.initial(
                    f_s.dims, p_u.shape[0], f_s.channels, cfg.lam
                )
            self.scale_cmodel = compression.compressed_update(
                self.scale_cmodel,
                f_s,
                self.scale_template,
                self.g_scale,
                cfg.eta,
                p_u,
                sample_projection=p_f,
            )
        else:
            if self.scale_model is None:
                self.scale_model = mcdcf.FilterModel.initial(
                    f_s.dims, f_s.channels, cfg.lam
                )
            self.scale_model = mcdcf.update(self.scale_model, f_s, self.g_scale, cfg.eta)

    def track(self, frame):
        self._check_frame(frame)
        diag = FrameDiagnostics()
        sw = _Stopwatch()
        self._detect_translation(frame, diag)
        self._detect_scale(frame, diag)
        diag.detect_ms += sw.lap_ms()
        self._update_models(frame)
        diag.update_ms += sw.lap_ms()
        diag.energy_retained = self._energy_retained
        self.frame_index += 1
        return self.state.to_box(), diag


def init_tracker(kind: str, frame, bbox: BoundingBox, config: TrackerConfig | None = None):
    """Build a trained-on-frame-1 tracker of the requested kind."""
    if kind not in TRACKER_KINDS:
        raise ValueError(
            f"unknown tracker kind {kind!r}; valid kinds: {', '.join(TRACKER_KINDS)}"
        )
    cfg = config or default_config(kind)
    if kind == "translation":
        return TranslationDcfTracker(frame, bbox, cfg)
    if kind == "multires":
        return MultiResolutionTracker(frame, bbox, cfg)
    if kind == "joint":
        return JointScaleSpaceTracker(frame, bbox, cfg, iterative=False)
    if kind == "joint_iterative":
        return JointScaleSpaceTracker(frame, bbox, cfg, iterative=True)
    return DsstTracker(frame, bbox, cfg, kind=kind)
