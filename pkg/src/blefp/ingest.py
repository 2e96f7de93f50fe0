"""Binary IQ capture files: reading, burst detection and writing.

Captures are raw little-endian interleaved I/Q (float32 or float64). A JSON
sidecar ``<capture>.json`` records the sample rate, layout and, per frame,
the sample offset, length and labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import IoError, MalformedFile, NoFramesDetected, ValidationError
from .iq import FrameMeta, IqFrame

LAYOUTS = {"INTERLEAVED_F32": "<f4", "INTERLEAVED_F64": "<f8"}
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class Preframed:
    frame_len: int

    def __post_init__(self):
        if self.frame_len < 1:
            raise ValidationError("frame_len must be positive")


@dataclass(frozen=True)
class EnergyDetect:
    """Burst segmentation on smoothed instantaneous power.

    A burst is a run where the centred moving average of ``|x|^2`` over
    ``smooth`` samples exceeds ``threshold_rel`` times its maximum; runs
    separated by fewer than ``min_gap_samples`` are merged. ``align_offset``
    shifts every detected start (negative moves earlier).
    """

    threshold_rel: float = 0.1
    min_gap_samples: int = 16
    smooth: int = 5
    align_offset: int = 0
    min_len: int = 8

    def __post_init__(self):
        if not 0 < self.threshold_rel < 1:
            raise ValidationError("threshold_rel must lie in (0, 1)")
        if self.smooth < 1 or self.min_gap_samples < 0:
            raise ValidationError("smooth >= 1 and min_gap_samples >= 0 required")


Framing = Union[Preframed, EnergyDetect]


@dataclass(frozen=True)
class CaptureSpec:
    path: Union[str, Path]
    sample_rate_hz: float
    layout: str = "INTERLEAVED_F32"
    framing: Framing = field(default_factory=EnergyDetect)

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValidationError("sample_rate_hz must be positive")
        if self.layout not in LAYOUTS:
            raise ValidationError(f"layout must be one of {sorted(LAYOUTS)}")

    @property
    def manifest_path(self) -> Path:
        return manifest_path(self.path)


def manifest_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".json")


def read_samples(path, layout: str = "INTERLEAVED_F32") -> np.ndarray:
    dtype = np.dtype(LAYOUTS[layout])
    raw = Path(path).read_bytes()
    if len(raw) % (2 * dtype.itemsize):
        raise MalformedFile(f"{path}: {len(raw)} bytes is not a whole number of {layout} samples")
    iq = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    return iq[0::2] + 1j * iq[1::2]


def detect_bursts(x: np.ndarray, det: EnergyDetect):
    """``(start, stop)`` sample ranges of detected bursts, stop exclusive."""
    power = np.abs(x) ** 2
    kernel = np.ones(det.smooth) / det.smooth
    smoothed = np.convolve(power, kernel, mode="same")
    peak = smoothed.max() if smoothed.size else 0.0
    if not peak > 0:
        return []
    above = smoothed > det.threshold_rel * peak
    edges = np.diff(np.concatenate([[0], above.astype(np.int8), [0]]))
    starts = list(np.flatnonzero(edges == 1))
    stops = list(np.flatnonzero(edges == -1))
    merged = []
    for s, e in zip(starts, stops):
        if merged and s - merged[-1][1] < det.min_gap_samples:
            merged[-1][1] = e
        else:
            merged.append([s, e])
    out = []
    for s, e in merged:
        s = min(max(s + det.align_offset, 0), x.size)
        if e - s >= det.min_len:
            out.append((int(s), int(e)))
    return out


def _load_manifest(spec: CaptureSpec) -> Optional[dict]:
    p = spec.manifest_path
    if not p.exists():
        return None
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{p}: {exc}") from exc


def _meta(entry: dict) -> FrameMeta:
    pdu = entry.get("pdu_bits")
    return FrameMeta(entry.get("device_id"), entry.get("channel_index"), entry.get("domain_label", ""),
                     tuple(pdu) if pdu is not None else None)


def read_capture(spec: CaptureSpec) -> list:
    """Decode a capture into frames.

    Pre-framed captures with a sidecar manifest take their frame boundaries
    and labels from it; without one, the file is cut into ``frame_len``
    windows (a short tail is dropped).
    """
    x = read_samples(spec.path, spec.layout)
    if isinstance(spec.framing, Preframed):
        manifest = _load_manifest(spec)
        if manifest is not None and manifest.get("frames"):
            frames = []
            for e in manifest["frames"]:
                off, n = int(e["offset"]), int(e["length"])
                if off + n > x.size:
                    raise MalformedFile("manifest frame extends past end of capture")
                frames.append(IqFrame(x[off : off + n], spec.sample_rate_hz, _meta(e)))
            return frames
        n = spec.framing.frame_len
        count = x.size // n
        if count == 0:
            raise NoFramesDetected(f"capture shorter than one {n}-sample frame")
        return [IqFrame(x[k * n : (k + 1) * n], spec.sample_rate_hz) for k in range(count)]
    bursts = detect_bursts(x, spec.framing)
    if not bursts:
        raise NoFramesDetected(f"{spec.path}: no bursts above threshold")
    return [IqFrame(x[s:e], spec.sample_rate_hz) for s, e in bursts]


def write_capture(frames: Sequence[IqFrame], spec: CaptureSpec, extra: Optional[dict] = None) -> Path:
    """Write frames back to back plus the sidecar manifest.

    ``extra`` is merged into the manifest (the fleet module stores its fleet
    and scenario description there).
    """
    frames = list(frames)
    if not frames:
        raise ValidationError("no frames to write")
    dtype = np.dtype(LAYOUTS[spec.layout])
    entries, chunks, offset = [], [], 0
    for f in frames:
        iq = np.empty(2 * len(f), dtype=np.float64)
        iq[0::2] = f.samples.real
        iq[1::2] = f.samples.imag
        chunks.append(iq.astype(dtype).tobytes())
        m = f.meta
        entries.append({"offset": offset, "length": len(f), "device_id": m.device_id,
                        "channel_index": m.channel_index, "domain_label": m.domain_label,
                        "pdu_bits": list(m.pdu_bits) if m.pdu_bits is not None else None})
        offset += len(f)
    manifest = {"version": MANIFEST_VERSION, "sample_rate_hz": spec.sample_rate_hz, "layout": spec.layout,
                "offset_unit": "samples", "frames": entries}
    if extra:
        manifest.update(extra)
    path = Path(spec.path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"".join(chunks))
        spec.manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write capture {path}: {exc}") from exc
    return path


def capture_spec_from_manifest(path, framing: Optional[Framing] = None) -> CaptureSpec:
    """Rebuild a :class:`CaptureSpec` from a capture's sidecar."""
    try:
        manifest = json.loads(manifest_path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"cannot read manifest for {path}: {exc}") from exc
    frames = manifest.get("frames") or [{"length": 1}]
    return CaptureSpec(path, manifest["sample_rate_hz"], manifest["layout"],
                       framing or Preframed(int(frames[0]["length"])))
