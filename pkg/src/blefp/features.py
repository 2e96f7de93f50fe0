"""Classifier input representations: TPD, TP, Mbed and raw IQ."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import ValidationError, WindowExceedsFrame
from .gfsk import GfskConfig
from .iq import IqFrame, angle, next_pow2, normalize_power, psd, unwrap

METHODS = ("TPD", "TP", "MBED", "RAWIQ")
CHANNELS = {"TPD": 1, "TP": 2, "MBED": 3, "RAWIQ": 2}
CSV_HEADER = ("method", "device_id", "channel_index", "domain_label")


@dataclass(frozen=True)
class FeatureTensor:
    data: np.ndarray
    method: str
    device_id: Optional[int] = None
    channel_index: Optional[int] = None
    domain_label: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != CHANNELS[self.method]:
            raise ValidationError(f"{self.method} expects {CHANNELS[self.method]} channels, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValidationError("feature tensor contains non-finite values")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def length(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class WindowSpec:
    L: int

    def __post_init__(self):
        if self.L < 2:
            raise ValidationError("window must hold at least 2 samples")


def window_length(cfg: GfskConfig = GfskConfig()) -> WindowSpec:
    """Samples spanning the transient and the preamble."""
    return WindowSpec((cfg.transient_symbols + len(cfg.preamble_bits)) * cfg.sps)


def _window(frame: IqFrame, w: WindowSpec) -> np.ndarray:
    if len(frame) < w.L:
        raise WindowExceedsFrame(f"window of {w.L} samples exceeds {len(frame)}-sample frame")
    return normalize_power(frame.samples[: w.L])


def _tensor(frame: IqFrame, data, method) -> FeatureTensor:
    m = frame.meta
    return FeatureTensor(np.atleast_2d(data), method, m.device_id, m.channel_index, m.domain_label)


def tpd(frame: IqFrame, w: WindowSpec) -> FeatureTensor:
    """Transient-and-preamble phase derivative, length ``L - 1``.

    Power is normalized over the window before the phase is taken, though
    normalization cannot change the phase; it is kept so that every extractor
    sees the same preprocessed window.
    """
    x = _window(frame, w)
    sigma = unwrap(angle(x))
    return _tensor(frame, np.diff(sigma), "TPD")


def tp(frame: IqFrame, w: WindowSpec) -> FeatureTensor:
    x = _window(frame, w)
    return _tensor(frame, np.vstack([x.real, x.imag]), "TP")


def mbed(frame: IqFrame, w: WindowSpec, unwrap_phase: bool = False) -> FeatureTensor:
    """Magnitude, phase and periodogram stacked over the window.

    The periodogram is computed at the next power of two at or above L and
    truncated to the first L bins.
    """
    x = _window(frame, w)
    ph = angle(x)
    if unwrap_phase:
        ph = unwrap(ph)
    spec = psd(x, next_pow2(w.L))[: w.L]
    return _tensor(frame, np.vstack([np.abs(x), ph, spec]), "MBED")


def raw_iq(frame: IqFrame) -> FeatureTensor:
    x = normalize_power(frame.samples)
    return _tensor(frame, np.vstack([x.real, x.imag]), "RAWIQ")


def extract(frame: IqFrame, method: str, w: WindowSpec) -> FeatureTensor:
    method = method.upper()
    if method == "TPD":
        return tpd(frame, w)
    if method == "TP":
        return tp(frame, w)
    if method == "MBED":
        return mbed(frame, w)
    if method == "RAWIQ":
        return raw_iq(frame)
    raise ValidationError(f"unknown method {method!r}")


def stack(tensors, length: Optional[int] = None) -> np.ndarray:
    """Batch tensors into ``(n, channels, length)``.

    Shorter tensors are zero-padded and longer ones truncated when ``length``
    is given; otherwise all lengths must already agree.
    """
    tensors = list(tensors)
    if not tensors:
        raise ValidationError("nothing to stack")
    if length is None:
        lengths = {t.length for t in tensors}
        if len(lengths) != 1:
            raise ValidationError(f"mixed tensor lengths {sorted(lengths)}; pass length=")
        length = lengths.pop()
    out = np.zeros((len(tensors), tensors[0].data.shape[0], length))
    for i, t in enumerate(tensors):
        n = min(length, t.length)
        out[i, :, :n] = t.data[:, :n]
    return out


def _fmt(v) -> str:
    return "" if v is None else str(v)


def write_feature_csv(tensors: Iterable[FeatureTensor], fh) -> None:
    """One row per feature channel, grouped by tensor in input order.

    Columns are ``method,device_id,channel_index,domain_label`` followed by
    ``s0..s{n-1}``. Values use ``repr`` so they parse back exactly.
    """
    tensors = list(tensors)
    width = max(t.length for t in tensors)
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(CSV_HEADER) + [f"s{k}" for k in range(width)])
    for t in tensors:
        lead = [t.method, _fmt(t.device_id), _fmt(t.channel_index), t.domain_label]
        for row in t.data:
            writer.writerow(lead + [repr(float(v)) for v in row])


def read_feature_csv(fh) -> list:
    reader = csv.reader(fh)
    header = next(reader)
    if tuple(header[:4]) != CSV_HEADER:
        raise ValidationError(f"unexpected feature CSV header {header[:4]}")
    out, pending = [], []
    for row in reader:
        method = row[0]
        pending.append(row)
        if len(pending) == CHANNELS[method]:
            data = [[float(v) for v in r[4:] if v != ""] for r in pending]
            dev = int(row[1]) if row[1] else None
            ch = int(row[2]) if row[2] else None
            out.append(FeatureTensor(np.array(data), method, dev, ch, row[3]))
            pending = []
    if pending:
        raise ValidationError("feature CSV ends mid-tensor")
    return out


def feature_csv_text(tensors) -> str:
    buf = io.StringIO()
    write_feature_csv(tensors, buf)
    return buf.getvalue()
