"""Sequence ingestion, synthetic sequences, tracking metrics and protocols.

Sequences come from OTB-format directories (an ``img/`` directory of
numerically named frames plus ``groundtruth_rect.txt`` with one 1-based
"x,y,w,h" line per frame) or from parametric synthetic specifications
rendered in memory with exact ground truth.

Metric conventions: overlap precision (OP) counts frames whose
intersection-over-union strictly exceeds the threshold, distance
precision (DP) counts center errors strictly below 20 px, and the
success curve samples the fraction of frames with IoU >= threshold at
thresholds 0, 0.05, ..., 1 (21 samples; AUC is their mean, so a perfect
run scores 1 and an all-miss run scores the 1/21 contributed by the
zero threshold).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import GrayImage
from .trackers import BoundingBox, FrameDiagnostics, init_tracker

__all__ = [
    "Sequence",
    "SyntheticSpec",
    "MetricsReport",
    "TrackRun",
    "ResetResult",
    "SequenceLoadError",
    "iou",
    "center_distance",
    "compute_metrics",
    "run_tracker",
    "run_reset_protocol",
    "generate_sre_initializations",
    "generate_tre_segments",
    "load_otb_sequence",
    "write_otb_sequence",
    "render_synthetic",
    "mean_success_curve",
    "write_results_csv",
    "write_curves_csv",
    "write_report_txt",
]

SUCCESS_THRESHOLDS = tuple(np.round(np.arange(0.0, 1.0001, 0.05), 2))


class SequenceLoadError(RuntimeError):
    """A sequence directory could not be parsed into frames + ground truth."""


@dataclass
class Sequence:
    """Ordered frames with per-frame ground truth, on disk or in memory."""

    name: str
    ground_truth: list[BoundingBox]
    frames: list[GrayImage] | None = None
    frame_paths: list[Path] | None = None
    source: str = "memory"

    def __post_init__(self):
        n = len(self.ground_truth)
        stored = self.frames if self.frames is not None else self.frame_paths
        if stored is None or len(stored) != n:
            raise ValueError("ground-truth count must equal frame count")

    def __len__(self) -> int:
        return len(self.ground_truth)

    def load_frames(self) -> list[GrayImage]:
        if self.frames is not None:
            return self.frames
        return [GrayImage.from_file(p) for p in self.frame_paths]

    def slice_from(self, start: int, name: str | None = None) -> "Sequence":
        return Sequence(
            name=name or f"{self.name}@{start}",
            ground_truth=self.ground_truth[start:],
            frames=None if self.frames is None else self.frames[start:],
            frame_paths=None if self.frame_paths is None else self.frame_paths[start:],
            source=self.source,
        )


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes; 0 for disjoint boxes."""
    ix = min(a.x + a.width, b.x + b.width) - max(a.x, b.x)
    iy = min(a.y + a.height, b.y + b.height) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def center_distance(a: BoundingBox, b: BoundingBox) -> float:
    (ax, ay), (bx, by) = a.center, b.center
    return float(np.hypot(ax - bx, ay - by))


@dataclass
class MetricsReport:
    sequence: str = ""
    tracker: str = ""
    frame_ious: list[float] = field(default_factory=list)
    center_errors: list[float] = field(default_factory=list)
    op: float = 0.0
    dp: float = 0.0
    success_curve: list[tuple[float, float]] = field(default_factory=list)
    auc: float = 0.0
    fps: float = 0.0
    failures: int | None = None
    mean_overlap: float | None = None


def compute_metrics(
    predictions: list[BoundingBox],
    ground_truth: list[BoundingBox],
    fps: float = 0.0,
    op_threshold: float = 0.5,
    dp_threshold: float = 20.0,
) -> MetricsReport:
    """Per-sequence OP/DP/AUC metrics from predicted and true boxes."""
    if len(predictions) != len(ground_truth):
        raise ValueError("prediction and ground-truth counts differ")
    if not predictions:
        raise ValueError("cannot score an empty sequence")
    ious = [iou(p, g) for p, g in zip(predictions, ground_truth)]
    dists = [center_distance(p, g) for p, g in zip(predictions, ground_truth)]
    arr = np.asarray(ious)
    curve = [(float(t), float(np.mean(arr >= t))) for t in SUCCESS_THRESHOLDS]
    return MetricsReport(
        frame_ious=ious,
        center_errors=dists,
        op=float(np.mean(arr > op_threshold)),
        dp=float(np.mean(np.asarray(dists) < dp_threshold)),
        success_curve=curve,
        auc=float(np.mean([v for _, v in curve])),
        fps=fps,
    )


@dataclass
class TrackRun:
    boxes: list[BoundingBox]
    diagnostics: list[FrameDiagnostics]
    fps: float
    elapsed_s: float


def run_tracker(kind: str, sequence: Sequence, config=None) -> TrackRun:
    """Run one tracker over one sequence.

    Frames are decoded up front so the reported FPS covers only tracker
    init and per-frame tracking.
    """
    frames = sequence.load_frames()
    t0 = time.perf_counter()
    tracker = init_tracker(kind, frames[0], sequence.ground_truth[0], config)
    boxes = [tracker.state.to_box()]
    diagnostics = [FrameDiagnostics()]
    for frame in frames[1:]:
        box, diag = tracker.track(frame)
        boxes.append(box)
        diagnostics.append(diag)
    elapsed = time.perf_counter() - t0
    fps = len(frames) / elapsed if elapsed > 0 else 0.0
    return TrackRun(boxes, diagnostics, fps, elapsed)


@dataclass
class ResetResult:
    failures: int
    mean_overlap: float
    evaluated: list[tuple[int, float]]  # (frame index, overlap)
    reinit_frames: list[int]


def run_reset_protocol(
    tracker, sequence: Sequence, config=None, reinit_delay: int = 5
) -> ResetResult:
    """Failure-and-restart evaluation.

    A failure is a frame with zero overlap; the tracker is re-initialized
    from ground truth ``reinit_delay`` frames later, and the skipped gap
    frames are excluded from the overlap average. The failure frame's zero
    stays in the average; the re-initialization frame is evaluated with
    the freshly initialized box. ``tracker`` is a kind name or a
    ``factory(frame, box) -> tracker`` callable.
    """
    if callable(tracker):
        factory = tracker
    else:
        factory = lambda frame, box: init_tracker(tracker, frame, box, config)
    frames = sequence.load_frames()
    gt = sequence.ground_truth
    n = len(frames)
    handle = factory(frames[0], gt[0])
    evaluated: list[tuple[int, float]] = []
    reinits: list[int] = []
    failures = 0
    t = 1
    while t < n:
        box, _ = handle.track(frames[t])
        overlap = iou(box, gt[t])
        evaluated.append((t, overlap))
        if overlap == 0.0:
            failures += 1
            restart = t + reinit_delay
            if restart >= n:
                break
            handle = factory(frames[restart], gt[restart])
            reinits.append(restart)
            evaluated.append((restart, iou(handle.state.to_box(), gt[restart])))
            t = restart + 1
        else:
            t += 1
    mean_overlap = float(np.mean([o for _, o in evaluated])) if evaluated else 0.0
    return ResetResult(failures, mean_overlap, evaluated, reinits)


def generate_sre_initializations(box: BoundingBox) -> list[BoundingBox]:
    """Twelve perturbed initializations: 4 axis shifts, 4 diagonal shifts
    (magnitude 10% of the target size per direction) and 4 center-
    preserving rescales (0.8, 0.9, 1.1, 1.2)."""
    sx, sy = 0.1 * box.width, 0.1 * box.height
    shifts = [
        (sx, 0.0),
        (-sx, 0.0),
        (0.0, sy),
        (0.0, -sy),
        (sx, sy),
        (sx, -sy),
        (-sx, sy),
        (-sx, -sy),
    ]
    out = [
        BoundingBox(box.x + dx, box.y + dy, box.width, box.height) for dx, dy in shifts
    ]
    cx, cy = box.center
    for f in (0.8, 0.9, 1.1, 1.2):
        w, h = box.width * f, box.height * f
        out.append(BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h))
    return out


def generate_tre_segments(sequence: Sequence, segments: int = 20) -> list[Sequence]:
    """Sub-sequences starting at evenly spaced frames, each initialized
    from its first frame's ground truth and running to the end.

    Start offsets are floor(i * N / segments); a sequence shorter than the
    segment count falls back to one segment per frame.
    """
    n = len(sequence)
    if n < segments:
        starts = list(range(n))
    else:
        starts = [i * n // segments for i in range(segments)]
    return [
        sequence.slice_from(s, name=f"{sequence.name}@tre{k:02d}")
        for k, s in enumerate(starts)
    ]


# -- OTB-format ingestion -------------------------------------------------


def _frame_sort_key(path: Path):
    stem = path.stem
    return (0, int(stem)) if stem.isdigit() else (1, stem)


def load_otb_sequence(directory) -> Sequence:
    """Load an OTB-format sequence directory.

    Ground-truth boxes are converted from the 1-based pixel origin used
    by the text format to 0-based real-valued boxes.
    """
    directory = Path(directory)
    img_dir = directory / "img"
    gt_file = directory / "groundtruth_rect.txt"
    if not img_dir.is_dir():
        raise SequenceLoadError(f"missing image directory: {img_dir}")
    if not gt_file.is_file():
        raise SequenceLoadError(f"missing ground-truth file: {gt_file}")
    frame_paths = sorted(
        (p for p in img_dir.iterdir() if p.is_file()), key=_frame_sort_key
    )
    if len(frame_paths) < 2:
        raise SequenceLoadError(f"need at least 2 frames, found {len(frame_paths)}")
    boxes = []
    for lineno, line in enumerate(gt_file.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.replace(",", " ").replace("\t", " ").split()
        if len(parts) != 4:
            raise SequenceLoadError(f"{gt_file}:{lineno}: expected 4 fields, got {line!r}")
        try:
            x, y, w, h = (float(p) for p in parts)
        except ValueError as exc:
            raise SequenceLoadError(f"{gt_file}:{lineno}: non-numeric field") from exc
        boxes.append(BoundingBox(x - 1.0, y - 1.0, w, h))
    if len(boxes) != len(frame_paths):
        raise SequenceLoadError(
            f"{len(frame_paths)} frames but {len(boxes)} ground-truth lines"
        )
    return Sequence(
        name=directory.name,
        ground_truth=boxes,
        frame_paths=frame_paths,
        source=str(directory),
    )


def write_otb_sequence(directory, sequence: Sequence) -> None:
    """Materialize a sequence as an OTB-format directory (PGM frames)."""
    from PIL import Image

    directory = Path(directory)
    img_dir = directory / "img"
    img_dir.mkdir(parents=True, exist_ok=True)
    frames = sequence.load_frames()
    for i, frame in enumerate(frames, start=1):
        raster = np.clip((frame.pixels + 0.5) * 255.0, 0, 255).round().astype(np.uint8)
        Image.fromarray(raster, mode="L").save(img_dir / f"{i:04d}.pgm")
    lines = [
        f"{b.x + 1.0!r},{b.y + 1.0!r},{b.width!r},{b.height!r}"
        for b in sequence.ground_truth
    ]
    (directory / "groundtruth_rect.txt").write_text("\n".join(lines) + "\n")


# -- Synthetic sequences --------------------------------------------------


@dataclass
class SyntheticSpec:
    """Parametric synthetic sequence: a textured target over a textured
    background following a pan/zoom trajectory with exact ground truth."""

    name: str = "synthetic"
    canvas_w: int = 128
    canvas_h: int = 128
    frame_count: int = 50
    target_w: int = 24
    target_h: int = 24
    center_x: float | None = None
    center_y: float | None = None
    pan_amp_x: float = 0.0
    pan_amp_y: float = 0.0
    pan_period: float = 50.0
    drift_x: float = 0.0
    drift_y: float = 0.0
    zoom_start: float = 1.0
    zoom_end: float = 1.0
    noise: float = 0.0
    seed: int = 0
    texture_smooth: int = 1
    background_smooth: int = 6
    occlude_from: int = -1
    occlude_to: int = -1
    occlude_band: float = 0.25

    def trajectory(self) -> list[BoundingBox]:
        cx0 = self.canvas_w / 2.0 if self.center_x is None else self.center_x
        cy0 = self.canvas_h / 2.0 if self.center_y is None else self.center_y
        boxes = []
        for t in range(self.frame_count):
            phase = 2.0 * np.pi * t / self.pan_period
            cx = cx0 + self.drift_x * t + self.pan_amp_x * np.sin(phase)
            cy = cy0 + self.drift_y * t + self.pan_amp_y * np.sin(phase)
            frac = t / (self.frame_count - 1) if self.frame_count > 1 else 0.0
            s = self.zoom_start + (self.zoom_end - self.zoom_start) * frac
            if s <= 0:
                raise ValueError("scale path must stay positive")
            w, h = self.target_w * s, self.target_h * s
            boxes.append(BoundingBox(cx - w / 2.0, cy - h / 2.0, w, h))
        return boxes


def _box_smooth(a: np.ndarray, radius: int) -> np.ndarray:
    """Separable moving-average filter with edge-replicated borders."""
    if radius < 1:
        return a
    k = 2 * radius + 1
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        p = np.pad(a, pad, mode="edge")
        c = np.cumsum(p, axis=axis, dtype=float)
        zero = np.zeros_like(np.take(c, [0], axis=axis))
        c = np.concatenate([zero, c], axis=axis)
        hi = np.take(c, np.arange(k, c.shape[axis]), axis=axis)
        lo = np.take(c, np.arange(0, c.shape[axis] - k), axis=axis)
        a = (hi - lo) / k
    return a


def _normalized_texture(rng: np.random.Generator, shape, smooth: int, amplitude: float):
    tex = _box_smooth(rng.uniform(-1.0, 1.0, shape), smooth)
    peak = np.abs(tex).max()
    return tex / peak * amplitude if peak > 0 else tex


def _paint_target(canvas: np.ndarray, texture: np.ndarray, box: BoundingBox) -> None:
    h_c, w_c = canvas.shape
    th, tw = texture.shape
    cols = np.arange(
        max(0, int(np.ceil(box.x - 0.5))), min(w_c, int(np.ceil(box.x + box.width - 0.5)))
    )
    rows = np.arange(
        max(0, int(np.ceil(box.y - 0.5))), min(h_c, int(np.ceil(box.y + box.height - 0.5)))
    )
    if cols.size == 0 or rows.size == 0:
        return
    u = np.clip(((cols + 0.5) - box.x) / box.width * tw - 0.5, 0, tw - 1)
    v = np.clip(((rows + 0.5) - box.y) / box.height * th - 0.5, 0, th - 1)
    u0 = np.floor(u).astype(int)
    v0 = np.floor(v).astype(int)
    fu, fv = u - u0, v - v0
    u1 = np.minimum(u0 + 1, tw - 1)
    v1 = np.minimum(v0 + 1, th - 1)
    top = texture[np.ix_(v0, u0)] * (1 - fu) + texture[np.ix_(v0, u1)] * fu
    bot = texture[np.ix_(v1, u0)] * (1 - fu) + texture[np.ix_(v1, u1)] * fu
    canvas[np.ix_(rows, cols)] = top * (1 - fv)[:, None] + bot * fv[:, None]


def render_synthetic(spec: SyntheticSpec) -> Sequence:
    """Deterministically render a synthetic sequence from its spec."""
    boxes = spec.trajectory()
    for t, b in enumerate(boxes):
        ix = min(b.x + b.width, float(spec.canvas_w)) - max(b.x, 0.0)
        iy = min(b.y + b.height, float(spec.canvas_h)) - max(b.y, 0.0)
        inside = max(ix, 0.0) * max(iy, 0.0) / b.area
        if inside < 0.5:
            raise ValueError(f"frame {t}: trajectory leaves >50% of the target outside")
    rng = np.random.default_rng(spec.seed)
    background = _normalized_texture(
        rng, (spec.canvas_h, spec.canvas_w), spec.background_smooth, 0.2
    )
    texture = _normalized_texture(
        rng, (2 * spec.target_h, 2 * spec.target_w), spec.texture_smooth, 0.48
    )
    band_h = max(1, int(round(spec.occlude_band * spec.canvas_h)))
    occluder = _normalized_texture(rng, (band_h, spec.canvas_w), spec.background_smooth, 0.2)

    frames = []
    for t, box in enumerate(boxes):
        canvas = background.copy()
        _paint_target(canvas, texture, box)
        if spec.occlude_from <= t <= spec.occlude_to:
            r0 = (spec.canvas_h - band_h) // 2
            canvas[r0 : r0 + band_h, :] = occluder
        if spec.noise > 0:
            frame_rng = np.random.default_rng((spec.seed, 0x5EED, t))
            canvas = canvas + frame_rng.normal(0.0, spec.noise, canvas.shape)
        frames.append(GrayImage(np.clip(canvas, -0.5, 0.5)))
    return Sequence(name=spec.name, ground_truth=boxes, frames=frames, source="synthetic")


# -- Serialization --------------------------------------------------------


def mean_success_curve(reports: list[MetricsReport]) -> list[tuple[float, float]]:
    """Average the per-sequence success curves sample-wise."""
    if not reports:
        return [(float(t), 0.0) for t in SUCCESS_THRESHOLDS]
    values = np.mean([[v for _, v in r.success_curve] for r in reports], axis=0)
    return [(float(t), float(v)) for t, v in zip(SUCCESS_THRESHOLDS, values)]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_results_csv(path, reports: list[MetricsReport]) -> None:
    lines = ["sequence,tracker,op,dp,auc,fps,failures,mean_overlap"]
    for r in reports:
        lines.append(
            ",".join(
                [
                    r.sequence,
                    r.tracker,
                    _fmt(r.op),
                    _fmt(r.dp),
                    _fmt(r.auc),
                    _fmt(r.fps),
                    _fmt(r.failures),
                    _fmt(r.mean_overlap),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_curves_csv(path, curves: dict[str, list[tuple[float, float]]]) -> None:
    lines = ["tracker,threshold,mean_op"]
    for tracker in sorted(curves):
        for t, v in curves[tracker]:
            lines.append(f"{tracker},{t:.2f},{v:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_txt(path, reports: list[MetricsReport]) -> None:
    """Self-describing plain-text report, one key = value record per
    sequence, records separated by blank lines."""
    blocks = []
    for r in reports:
        rows = [
            f"sequence = {r.sequence}",
            f"tracker = {r.tracker}",
            f"frames = {len(r.frame_ious)}",
            f"op_0.50 = {_fmt(r.op)}",
            f"dp_20px = {_fmt(r.dp)}",
            f"auc = {_fmt(r.auc)}",
            f"fps = {_fmt(r.fps)}",
        ]
        if r.failures is not None:
            rows.append(f"failures = {r.failures}")
        if r.mean_overlap is not None:
            rows.append(f"mean_overlap = {_fmt(r.mean_overlap)}")
        blocks.append("\n".join(rows))
    Path(path).write_text("\n\n".join(blocks) + "\n")
