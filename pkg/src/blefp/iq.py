"""Complex baseband frames and the numeric primitives built on them."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ChannelOutOfRange, NonPowerOfTwoLength, ValidationError, ZeroEnergyFrame

N_DATA_CHANNELS = 37


@dataclass(frozen=True)
class FrameMeta:
    device_id: Optional[int] = None
    channel_index: Optional[int] = None
    domain_label: str = ""
    pdu_bits: Optional[tuple] = None

    def __post_init__(self):
        if self.channel_index is not None and not 0 <= self.channel_index < N_DATA_CHANNELS:
            raise ChannelOutOfRange(f"channel_index {self.channel_index} outside [0, 36]")
        if self.device_id is not None and self.device_id < 0:
            raise ValidationError("device_id must be >= 0")


@dataclass(frozen=True)
class IqFrame:
    """Complex baseband samples at a fixed rate, plus labelling metadata.

    The sample buffer is stored as a read-only complex128 array so a frame can
    be shared freely between threads.
    """

    samples: np.ndarray
    sample_rate_hz: float
    meta: FrameMeta = field(default_factory=FrameMeta)

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.complex128, copy=True).reshape(-1)
        if x.size == 0:
            raise ValidationError("frame has no samples")
        if not np.all(np.isfinite(x)):
            raise ValidationError("frame contains non-finite samples")
        if not self.sample_rate_hz > 0:
            raise ValidationError("sample_rate_hz must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    def replace(self, samples=None, **meta_changes) -> "IqFrame":
        """Copy with new samples and/or metadata fields."""
        meta = dataclasses.replace(self.meta, **meta_changes) if meta_changes else self.meta
        return IqFrame(self.samples if samples is None else samples, self.sample_rate_hz, meta)


ArrayOrFrame = Union[IqFrame, np.ndarray, Sequence[complex]]


def _samples(x: ArrayOrFrame) -> np.ndarray:
    if isinstance(x, IqFrame):
        return x.samples
    return np.asarray(x, dtype=np.complex128).reshape(-1)


def angle(x: ArrayOrFrame) -> np.ndarray:
    """Four-quadrant phase of every sample, wrapped to (-pi, pi].

    ``atan2(+0, -1)`` is already ``pi``; the only adjustment is mapping a
    signed-zero imaginary part on the negative real axis to ``+pi`` and
    defining the phase of an exact zero sample as 0.
    """
    z = _samples(x)
    out = np.arctan2(z.imag, z.real)
    out[out == -np.pi] = np.pi
    out[(z.real == 0) & (z.imag == 0)] = 0.0
    return out


def unwrap(phases) -> np.ndarray:
    """Remove 2*pi jumps from a wrapped phase sequence.

    The first value passes through. Whenever a consecutive difference exceeds
    pi in magnitude, a cumulative multiple of 2*pi is added so that the
    corrected difference lands in (-pi, pi]. A difference of exactly +-pi is
    left untouched.
    """
    p = np.asarray(phases, dtype=np.float64).reshape(-1)
    if p.size < 2:
        return p.copy()
    d = np.diff(p)
    dmod = np.mod(d + np.pi, 2 * np.pi) - np.pi
    dmod[(dmod == -np.pi) & (d > 0)] = np.pi
    # count whole turns so the correction is an exact integer multiple of 2*pi
    turns = np.round((dmod - d) / (2 * np.pi))
    turns[np.abs(d) <= np.pi] = 0.0
    out = p.copy()
    out[1:] += 2 * np.pi * np.cumsum(turns)
    return out


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    if n < 1:
        raise ValidationError("length must be positive")
    return 1 << (int(n) - 1).bit_length()


def fft(x) -> np.ndarray:
    """Unnormalized forward DFT for power-of-two lengths."""
    z = np.asarray(x, dtype=np.complex128).reshape(-1)
    if not is_power_of_two(z.size):
        raise NonPowerOfTwoLength(f"fft length {z.size} is not a power of two")
    return np.fft.fft(z)


def psd(x: ArrayOrFrame, nfft: int) -> np.ndarray:
    """Periodogram ``|FFT(x zero-padded to nfft)|**2 / nfft``.

    The scaling makes the PSD sum equal the time-domain energy.
    """
    if not is_power_of_two(nfft):
        raise NonPowerOfTwoLength(f"nfft {nfft} is not a power of two")
    z = _samples(x)
    if z.size > nfft:
        raise ValidationError(f"nfft {nfft} shorter than the {z.size}-sample window")
    buf = np.zeros(nfft, dtype=np.complex128)
    buf[: z.size] = z
    spec = fft(buf)
    return (spec.real**2 + spec.imag**2) / nfft


def normalize_power(x: ArrayOrFrame):
    """Scale to unit mean per-sample power. Frames in, frames out."""
    z = _samples(x)
    p = np.mean(z.real**2 + z.imag**2)
    if not p > 0:
        raise ZeroEnergyFrame("cannot normalize a zero-energy frame")
    y = z / np.sqrt(p)
    if isinstance(x, IqFrame):
        return x.replace(samples=y)
    return y
