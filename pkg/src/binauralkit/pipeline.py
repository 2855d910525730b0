"""Batch dataset construction and validation: manifest ingestion, duration
and silence filters, batch rendering and batch metric reports."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .audio import BinauralBuffer, frame_rms, read_wav, write_wav
from .heatmap import extract_features, load_heatmap_sequence
from .metrics import MetricConfig, spatial_report
from .render import RenderConfig, direction_from_features, render_trajectory
from .ambisonic import load_trajectory_csv

THREADS_ENV_VAR = "SV2A_THREADS"

_METRIC_FIELDS = ("iacc", "ild_db", "itd_ms", "isd", "ipd_rad")


def worker_count():
    """Worker cap from the environment (default 1; output is order-stable
    regardless)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV_VAR, "1")))
    except ValueError:
        return 1


def _map_ordered(fn, items):
    workers = worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ClipEntry:
    id: str
    audio: str
    heatmap: str = None
    trajectory: str = None
    caption: str = None


@dataclass(frozen=True)
class ClipManifest:
    entries: tuple
    base_dir: str = "."

    def __post_init__(self):
        entries = tuple(self.entries)
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def resolve(self, relative_path):
        return os.path.join(self.base_dir, relative_path)


def load_manifest(path):
    """Read a JSON-array manifest; relative paths resolve against its
    directory."""
    with open(path) as fh:
        items = json.load(fh)
    if not isinstance(items, list):
        raise ValueError(f"{path}: manifest must be a JSON array")
    entries = []
    for item in items:
        if "id" not in item or "audio" not in item:
            raise ValueError(f"{path}: every entry needs 'id' and 'audio'")
        entries.append(
            ClipEntry(
                id=str(item["id"]),
                audio=item["audio"],
                heatmap=item.get("heatmap"),
                trajectory=item.get("trajectory"),
                caption=item.get("caption"),
            )
        )
    return ClipManifest(tuple(entries), os.path.dirname(os.path.abspath(path)))


def save_manifest(path, manifest):
    items = []
    for e in manifest.entries:
        item = {"id": e.id, "audio": e.audio}
        for key in ("heatmap", "trajectory", "caption"):
            if getattr(e, key) is not None:
                item[key] = getattr(e, key)
        items.append(item)
    with open(path, "w") as fh:
        json.dump(items, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class PreprocessConfig:
    min_seconds: float = 10.0
    silence_frame: int = 400
    silence_hop: int = 160
    silence_threshold_dbfs: float = -50.0
    max_silence_fraction: float = 0.8
    clipping_fraction_max: float = 0.01
    dc_offset_max: float = 0.02


@dataclass
class PreprocessReport:
    kept: int = 0
    rejected_short: int = 0
    rejected_silent: int = 0
    rejected_unreadable: int = 0
    reasons: dict = field(default_factory=dict)
    quality_flags: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.kept + self.rejected_short + self.rejected_silent + self.rejected_unreadable

    def to_json(self):
        return json.dumps(
            {
                "kept": self.kept,
                "rejected_short": self.rejected_short,
                "rejected_silent": self.rejected_silent,
                "rejected_unreadable": self.rejected_unreadable,
                "reasons": self.reasons,
                "quality_flags": self.quality_flags,
            },
            sort_keys=True,
            indent=2,
        )


def silence_fraction(audio, frame=400, hop=160, threshold_dbfs=-50.0):
    """Fraction of frames whose RMS falls below the dBFS threshold."""
    rms = frame_rms(audio, frame, hop)
    if len(rms) == 0:
        raise ValueError("audio shorter than one analysis frame")
    threshold = 10.0 ** (threshold_dbfs / 20.0)
    return float(np.mean(rms < threshold))


def quality_flags(audio, cfg):
    """Clipping-rate and DC-offset sanity flags (informational, never a
    rejection)."""
    flags = []
    clipped = float(np.mean(np.abs(audio.samples) >= 1.0 - 1e-6))
    if clipped > cfg.clipping_fraction_max:
        flags.append(f"clipping fraction {clipped:.4f}")
    dc = float(np.mean(audio.samples)) if len(audio) else 0.0
    if abs(dc) > cfg.dc_offset_max:
        flags.append(f"dc offset {dc:.4f}")
    return flags


def _as_mono(loaded):
    if isinstance(loaded, BinauralBuffer):
        raise ValueError("expected mono audio, got 2 channels")
    return loaded


def preprocess(manifest, cfg=None):
    """Apply the duration and silence filters to every manifest entry.

    Per-clip failures never abort the batch: unreadable audio lands in
    rejected_unreadable. Returns (filtered manifest, report); the report
    counts always reconcile with the input size.
    """
    cfg = cfg or PreprocessConfig()
    report = PreprocessReport()

    def evaluate(entry):
        path = manifest.resolve(entry.audio)
        try:
            audio = _as_mono(read_wav(path))
            if audio.duration < cfg.min_seconds:
                return ("rejected_short", f"duration {audio.duration:.2f}s < {cfg.min_seconds}s", [])
            fraction = silence_fraction(
                audio, cfg.silence_frame, cfg.silence_hop, cfg.silence_threshold_dbfs
            )
            if fraction > cfg.max_silence_fraction:
                return ("rejected_silent", f"silence fraction {fraction:.3f}", [])
            return ("kept", None, quality_flags(audio, cfg))
        except Exception as exc:
            return ("rejected_unreadable", str(exc), [])

    results = _map_ordered(evaluate, list(manifest.entries))
    kept_entries = []
    for entry, (outcome, reason, flags) in zip(manifest.entries, results):
        if outcome == "kept":
            report.kept += 1
            kept_entries.append(entry)
            if flags:
                report.quality_flags[entry.id] = flags
        else:
            setattr(report, outcome, getattr(report, outcome) + 1)
            report.reasons[entry.id] = reason
    return ClipManifest(tuple(kept_entries), manifest.base_dir), report


def clip_trajectory(manifest, entry, fov=math.pi / 2):
    """Trajectory for one clip: its CSV if present, otherwise derived from
    its heatmap features."""
    if entry.trajectory is not None:
        return load_trajectory_csv(manifest.resolve(entry.trajectory))
    if entry.heatmap is not None:
        seq = load_heatmap_sequence(manifest.resolve(entry.heatmap))
        return direction_from_features(extract_features(seq), fov)
    raise ValueError(f"clip {entry.id} has neither a trajectory nor a heatmap")


def batch_render(manifest, render_cfg=None, out_dir=".", fov=math.pi / 2, encoding="float32"):
    """Render every clip to `<id>_binaural.wav`; per-clip failures are
    logged and the batch continues."""
    render_cfg = render_cfg or RenderConfig()
    os.makedirs(out_dir, exist_ok=True)
    probe = os.path.join(out_dir, ".write_probe")
    try:
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise OSError(f"output directory {out_dir} is not writable: {exc}") from exc

    def render_one(entry):
        try:
            mono = _as_mono(read_wav(manifest.resolve(entry.audio)))
            trajectory = clip_trajectory(manifest, entry, fov)
            rendered = render_trajectory(mono, trajectory, render_cfg)
            out_path = os.path.join(out_dir, f"{entry.id}_binaural.wav")
            write_wav(out_path, rendered, encoding)
            return {"id": entry.id, "status": "ok", "output": out_path}
        except Exception as exc:
            return {"id": entry.id, "status": "failed", "error": str(exc)}

    return _map_ordered(render_one, list(manifest.entries))


def _stereo_inputs(source):
    if isinstance(source, ClipManifest):
        return [(e.id, source.resolve(e.audio)) for e in source.entries]
    paths = sorted(
        f for f in os.listdir(source) if f.lower().endswith(".wav")
    )
    return [(os.path.splitext(name)[0], os.path.join(source, name)) for name in paths]


def batch_metrics(source, cfg=None):
    """Spatial metric report per stereo clip plus the dataset aggregate.

    `source` is a directory of WAVs or a ClipManifest. Returns
    (per_clip, aggregate, failures) where aggregate maps metric name to
    (mean, count).
    """
    cfg = cfg or MetricConfig()
    inputs = _stereo_inputs(source)
    if not inputs:
        raise ValueError("no stereo inputs")

    def measure(item):
        clip_id, path = item
        try:
            loaded = read_wav(path)
            if not isinstance(loaded, BinauralBuffer):
                raise ValueError("not a stereo file")
            return clip_id, spatial_report(loaded, cfg), None
        except Exception as exc:
            return clip_id, None, str(exc)

    results = _map_ordered(measure, inputs)
    per_clip = {}
    failures = {}
    for clip_id, report, error in results:
        if report is not None:
            per_clip[clip_id] = report
        else:
            failures[clip_id] = error
    if not per_clip:
        raise ValueError("no stereo inputs produced a metric report")
    aggregate = {}
    for name in _METRIC_FIELDS:
        values = [getattr(r, name) for r in per_clip.values()]
        aggregate[name] = (float(np.mean(values)), len(values))
    return per_clip, aggregate, failures


def write_metrics_json(path, per_clip, failures):
    payload = {
        "clips": {
            clip_id: json.loads(report.to_json()) for clip_id, report in per_clip.items()
        },
        "failures": failures,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_aggregate_csv(path, aggregate):
    with open(path, "w", newline="") as fh:
        fh.write("metric,mean,count\n")
        for name in _METRIC_FIELDS:
            mean, count = aggregate[name]
            fh.write(f"{name},{mean:.12g},{count}\n")


def validate_manifest(manifest):
    """Resolve every referenced path; returns a list of problem strings."""
    problems = []
    for entry in manifest.entries:
        for key in ("audio", "heatmap", "trajectory"):
            rel = getattr(entry, key)
            if rel is not None and not os.path.exists(manifest.resolve(rel)):
                problems.append(f"{entry.id}: missing {key} file {rel}")
    return problems
