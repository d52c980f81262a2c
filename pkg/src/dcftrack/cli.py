"""Command-line entry point.

Commands: ``track`` (one tracker, one sequence), ``benchmark`` (tracker x
sequence cross product with CSV summaries), ``synth`` (materialize a
synthetic sequence as an OTB-format directory) and ``compare`` (diff two
results CSVs).

Configuration precedence: built-in per-kind defaults, then the config
file (INI-style ``key = value`` under ``[tracker]`` / ``[synthetic]``
sections; default path from $DCFTRACK_CONFIG), then command-line flags.

Exit codes: 0 success, 2 usage/config error, 3 ingestion/I-O error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

from . import evaluation
from .mcdcf import InvalidStateError
from .trackers import TRACKER_KINDS, TrackerConfig, default_config

CONFIG_ENV_VAR = "DCFTRACK_CONFIG"
PROTOCOLS = ("plain", "reset", "tre", "sre")

_BOOL_FIELDS = {"scale_compression", "interpolate_translation"}
_INT_FIELDS = {"hog_cell", "scale_count", "interp_scale_count", "pca_dims", "max_iterations"}


class ConfigError(ValueError):
    pass


def _parse_tracker_overrides(section) -> dict:
    overrides = {}
    valid = {f.name for f in fields(TrackerConfig)} - {"model_cells"}
    for key, raw in section.items():
        name = {"lambda": "lam"}.get(key, key)
        if name not in valid:
            raise ConfigError(f"unknown tracker option {key!r}")
        if name in _BOOL_FIELDS:
            overrides[name] = raw.strip().lower() in ("1", "true", "yes", "on")
        elif name in _INT_FIELDS:
            overrides[name] = int(raw)
        else:
            overrides[name] = float(raw)
    return overrides


def _load_config_file(path: str | None):
    """Returns (tracker overrides, synthetic overrides) from an INI file."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return {}, {}
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    tracker = (
        _parse_tracker_overrides(parser["tracker"]) if parser.has_section("tracker") else {}
    )
    synth = dict(parser["synthetic"]) if parser.has_section("synthetic") else {}
    return tracker, synth


def _flag_overrides(args) -> dict:
    overrides = {}
    for flag, name in (
        ("lam", "lam"),
        ("eta", "eta"),
        ("padding", "padding"),
        ("hog_cell", "hog_cell"),
        ("scale_count", "scale_count"),
        ("scale_step", "scale_step"),
        ("pca_dims", "pca_dims"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[name] = value
    return overrides


def resolve_tracker_config(kind: str, file_overrides: dict, args) -> TrackerConfig:
    cfg = default_config(kind)
    merged = dict(file_overrides)
    merged.update(_flag_overrides(args))
    if merged:
        cfg = replace(cfg, **merged)
    return cfg


_SYNTH_INT = {
    "canvas_w", "canvas_h", "frame_count", "target_w", "target_h", "seed",
    "texture_smooth", "background_smooth", "occlude_from", "occlude_to",
}
_SYNTH_STR = {"name"}


def _spec_from_mapping(mapping: dict) -> evaluation.SyntheticSpec:
    valid = {f.name for f in fields(evaluation.SyntheticSpec)}
    kwargs = {}
    for key, raw in mapping.items():
        if key not in valid:
            raise ConfigError(f"unknown synthetic option {key!r}")
        if key in _SYNTH_STR:
            kwargs[key] = raw
        elif key in _SYNTH_INT:
            kwargs[key] = int(raw)
        else:
            kwargs[key] = float(raw)
    return evaluation.SyntheticSpec(**kwargs)


def load_synthetic_spec(path) -> evaluation.SyntheticSpec:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read or not parser.has_section("synthetic"):
        raise ConfigError(f"not a synthetic spec file (needs [synthetic]): {path}")
    return _spec_from_mapping(dict(parser["synthetic"]))


def load_sequence(source: str, seed: int | None = None) -> evaluation.Sequence:
    path = Path(source)
    if path.is_dir():
        return evaluation.load_otb_sequence(path)
    if path.is_file():
        spec = load_synthetic_spec(path)
        if seed is not None:
            spec = replace(spec, seed=seed)
        return evaluation.render_synthetic(spec)
    raise evaluation.SequenceLoadError(f"sequence source not found: {source}")


def _evaluate_one(kind, sequence, config, protocol, timing):
    """One (tracker, sequence) cell of the benchmark table."""
    if protocol == "reset":
        run = evaluation.run_tracker(kind, sequence, config)
        reset = evaluation.run_reset_protocol(kind, sequence, config)
        report = evaluation.compute_metrics(
            run.boxes, sequence.ground_truth, fps=run.fps
        )
        report.failures = reset.failures
        report.mean_overlap = reset.mean_overlap
    elif protocol == "tre":
        segments = [s for s in evaluation.generate_tre_segments(sequence) if len(s) >= 2]
        partials = []
        fps_total, frames_total = 0.0, 0
        for seg in segments:
            run = evaluation.run_tracker(kind, seg, config)
            partials.append(evaluation.compute_metrics(run.boxes, seg.ground_truth))
            fps_total += run.elapsed_s
            frames_total += len(seg)
        report = _average_reports(partials)
        report.fps = frames_total / fps_total if fps_total > 0 else 0.0
    elif protocol == "sre":
        inits = evaluation.generate_sre_initializations(sequence.ground_truth[0])
        partials = []
        fps_total, frames_total = 0.0, 0
        for init_box in inits:
            perturbed = evaluation.Sequence(
                name=sequence.name,
                ground_truth=[init_box] + sequence.ground_truth[1:],
                frames=sequence.load_frames(),
                source=sequence.source,
            )
            run = evaluation.run_tracker(kind, perturbed, config)
            partials.append(
                evaluation.compute_metrics(run.boxes, sequence.ground_truth)
            )
            fps_total += run.elapsed_s
            frames_total += len(sequence)
        report = _average_reports(partials)
        report.fps = frames_total / fps_total if fps_total > 0 else 0.0
    else:
        run = evaluation.run_tracker(kind, sequence, config)
        report = evaluation.compute_metrics(run.boxes, sequence.ground_truth, fps=run.fps)
    report.sequence = sequence.name
    report.tracker = kind
    if timing == "none":
        report.fps = 0.0
    return report


def _average_reports(parts):
    import numpy as np

    out = evaluation.MetricsReport()
    if not parts:
        return out
    out.op = float(np.mean([p.op for p in parts]))
    out.dp = float(np.mean([p.dp for p in parts]))
    curves = np.mean([[v for _, v in p.success_curve] for p in parts], axis=0)
    out.success_curve = [
        (float(t), float(v)) for t, v in zip(evaluation.SUCCESS_THRESHOLDS, curves)
    ]
    out.auc = float(np.mean([p.auc for p in parts]))
    out.frame_ious = [i for p in parts for i in p.frame_ious]
    out.center_errors = [e for p in parts for e in p.center_errors]
    return out


def cmd_track(args) -> int:
    if args.protocol not in ("plain", "reset"):
        raise ConfigError("track supports the plain and reset protocols only")
    file_overrides, _ = _load_config_file(args.config)
    config = resolve_tracker_config(args.tracker, file_overrides, args)
    sequence = load_sequence(args.seq, args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    run = evaluation.run_tracker(args.tracker, sequence, config)
    report = evaluation.compute_metrics(run.boxes, sequence.ground_truth, fps=run.fps)
    if args.protocol == "reset":
        reset = evaluation.run_reset_protocol(args.tracker, sequence, config)
        report.failures = reset.failures
        report.mean_overlap = reset.mean_overlap
    report.sequence = sequence.name
    report.tracker = args.tracker
    if args.timing == "none":
        report.fps = 0.0

    box_lines = [
        f"{i},{b.x:.4f},{b.y:.4f},{b.width:.4f},{b.height:.4f}"
        for i, b in enumerate(run.boxes)
    ]
    (out_dir / "boxes.txt").write_text("\n".join(box_lines) + "\n")
    diag_lines = ["frame,translation_peak,scale_peak,scale_bin,energy_retained,detect_ms,update_ms"]
    for i, d in enumerate(run.diagnostics):
        diag_lines.append(
            f"{i},{d.translation_peak},{d.scale_peak},{d.scale_bin},"
            f"{d.energy_retained},{d.detect_ms:.3f},{d.update_ms:.3f}"
        )
    (out_dir / "diagnostics.csv").write_text("\n".join(diag_lines) + "\n")
    evaluation.write_report_txt(out_dir / "report.txt", [report])
    print(
        f"{sequence.name} [{args.tracker}] op={report.op:.3f} dp={report.dp:.3f} "
        f"auc={report.auc:.3f} fps={report.fps:.1f}"
    )
    return 0


def cmd_benchmark(args) -> int:
    file_overrides, _ = _load_config_file(args.config)
    sequences = [load_sequence(src, args.seed) for src in args.seq]
    jobs = []
    for kind in args.tracker:
        config = resolve_tracker_config(kind, file_overrides, args)
        for sequence in sequences:
            jobs.append((kind, sequence, config))

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            reports = list(
                pool.map(
                    lambda j: _evaluate_one(j[0], j[1], j[2], args.protocol, args.timing),
                    jobs,
                )
            )
    else:
        reports = [
            _evaluate_one(kind, seq, cfg, args.protocol, args.timing)
            for kind, seq, cfg in jobs
        ]
    reports.sort(key=lambda r: (r.tracker, r.sequence))

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_results_csv(out_dir / "results.csv", reports)
    curves = {}
    for kind in args.tracker:
        curves[kind] = evaluation.mean_success_curve(
            [r for r in reports if r.tracker == kind]
        )
    evaluation.write_curves_csv(out_dir / "curves.csv", curves)
    evaluation.write_report_txt(out_dir / "report.txt", reports)
    for r in reports:
        print(
            f"{r.sequence} [{r.tracker}] op={r.op:.3f} dp={r.dp:.3f} auc={r.auc:.3f}"
            + (f" failures={r.failures}" if r.failures is not None else "")
        )
    return 0


def cmd_synth(args) -> int:
    _, synth_overrides = _load_config_file(args.config)
    spec = load_synthetic_spec(args.spec)
    if synth_overrides:
        spec = _spec_from_mapping({**spec.__dict__, **synth_overrides})
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    sequence = evaluation.render_synthetic(spec)
    evaluation.write_otb_sequence(args.out, sequence)
    print(f"wrote {len(sequence)} frames to {args.out}")
    return 0


def cmd_compare(args) -> int:
    def read_rows(path):
        lines = Path(path).read_text().splitlines()
        header = lines[0].split(",")
        rows = {}
        for line in lines[1:]:
            parts = line.split(",")
            rows[(parts[0], parts[1])] = dict(zip(header[2:], parts[2:]))
        return rows

    a, b = read_rows(args.baseline), read_rows(args.candidate)
    shared = sorted(set(a) & set(b))
    if not shared:
        print("no common (sequence, tracker) rows")
        return 0
    print("sequence,tracker,metric,baseline,candidate,delta")
    for key in shared:
        for metric in ("op", "dp", "auc", "fps"):
            va, vb = a[key].get(metric, ""), b[key].get(metric, "")
            if va and vb:
                delta = float(vb) - float(va)
                print(f"{key[0]},{key[1]},{metric},{va},{vb},{delta:+.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dcftrack",
        description="Correlation-filter visual tracking and benchmarking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, multi=False):
        p.add_argument(
            "--tracker",
            action="append" if multi else "store",
            choices=TRACKER_KINDS,
            required=True,
            help="tracker kind" + (" (repeatable)" if multi else ""),
        )
        p.add_argument(
            "--seq",
            action="append" if multi else "store",
            required=True,
            help="OTB sequence directory or synthetic spec file"
            + (" (repeatable)" if multi else ""),
        )
        p.add_argument("--config", default=None, help=f"INI config (default ${CONFIG_ENV_VAR})")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--protocol", choices=PROTOCOLS, default="plain")
        p.add_argument("--seed", type=int, default=None, help="synthetic seed override")
        p.add_argument("--timing", choices=("wall", "none"), default="wall",
                       help="'none' writes fps=0 for byte-reproducible outputs")
        for flag, typ in (
            ("--lam", float), ("--eta", float), ("--padding", float),
            ("--hog-cell", int), ("--scale-count", int), ("--scale-step", float),
            ("--pca-dims", int),
        ):
            p.add_argument(flag, dest=flag[2:].replace("-", "_"), type=typ, default=None)

    p_track = sub.add_parser("track", help="run one tracker on one sequence")
    add_common(p_track)
    p_track.set_defaults(func=cmd_track)

    p_bench = sub.add_parser("benchmark", help="tracker x sequence cross product")
    add_common(p_bench, multi=True)
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.set_defaults(func=cmd_benchmark)

    p_synth = sub.add_parser("synth", help="render a synthetic spec to an OTB directory")
    p_synth.add_argument("--spec", required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--config", default=None)
    p_synth.set_defaults(func=cmd_synth)

    p_cmp = sub.add_parser("compare", help="diff two results.csv files")
    p_cmp.add_argument("baseline")
    p_cmp.add_argument("candidate")
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (evaluation.SequenceLoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InvalidStateError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
