"""BLE 1M PHY GFSK baseband synthesis with transmitter/receiver impairments."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyBits, InvalidBt, InvalidImpairment, UnknownImpairmentField, ValidationError
from .iq import FrameMeta, IqFrame

SPEED_OF_LIGHT = 299_792_458.0

# Advertising-channel access address. It follows the preamble on air, so the
# Gaussian filter tail at the end of the preamble window always sees the same
# leading bits regardless of the PDU that follows.
ADV_ACCESS_ADDRESS = 0x8E89BED6


def bits_from_int(value: int, n_bits: int) -> tuple:
    """LSB-first bit expansion, the BLE on-air order."""
    return tuple((value >> k) & 1 for k in range(n_bits))


def bits_from_bytes(data: bytes) -> tuple:
    return tuple(b for byte in data for b in bits_from_int(byte, 8))


def access_address_bits(address: int = ADV_ACCESS_ADDRESS) -> tuple:
    return bits_from_int(address, 32)


@dataclass(frozen=True)
class GfskConfig:
    sample_rate_hz: float = 6e6
    symbol_rate_hz: float = 1e6
    bt_nominal: float = 0.5
    f_m_hz: float = 250e3
    filter_span_symbols: int = 3
    transient_symbols: int = 1
    preamble_bits: tuple = (0, 1, 0, 1, 0, 1, 0, 1)

    def __post_init__(self):
        object.__setattr__(self, "preamble_bits", tuple(int(b) for b in self.preamble_bits))
        ratio = self.sample_rate_hz / self.symbol_rate_hz
        if self.symbol_rate_hz <= 0 or ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("sample_rate_hz must be an integer multiple of symbol_rate_hz")
        if not 0 < self.bt_nominal <= 1:
            raise InvalidBt(f"bt_nominal {self.bt_nominal} outside (0, 1]")
        if self.f_m_hz <= 0:
            raise ValidationError("f_m_hz must be positive")
        if self.filter_span_symbols < 1:
            raise ValidationError("filter_span_symbols must be >= 1")
        if self.transient_symbols < 0:
            raise ValidationError("transient_symbols must be >= 0")
        _check_bits(self.preamble_bits, allow_empty=True)

    @property
    def sps(self) -> int:
        return int(round(self.sample_rate_hz / self.symbol_rate_hz))

    @property
    def transient_samples(self) -> int:
        return self.transient_symbols * self.sps


@dataclass(frozen=True)
class ImpairmentSet:
    """Per-device (or per-receiver) hardware signature.

    ``bt_actual`` and ``delta_f_hz`` only act on the transmit Gaussian filter
    and deviation; the remaining fields distort the baseband samples.
    """

    cfo_hz: float = 0.0
    iq_amp: float = 0.0
    iq_phase_rad: float = 0.0
    i_dc: float = 0.0
    q_dc: float = 0.0
    delta_f_hz: float = 0.0
    bt_actual: float = 0.5
    theta_po_rad: float = 0.0

    def validate(self):
        if not abs(self.iq_amp) < 1:
            raise InvalidImpairment(f"|iq_amp| must be < 1, got {self.iq_amp}")
        if not 0 < self.bt_actual <= 1:
            raise InvalidImpairment(f"bt_actual {self.bt_actual} outside (0, 1]")
        if not all(np.isfinite(v) for v in dataclasses.astuple(self)):
            raise InvalidImpairment("impairments must be finite")
        return self

    def as_vector(self) -> np.ndarray:
        return np.array(dataclasses.astuple(self), dtype=np.float64)

    @classmethod
    def ideal(cls, cfg: Optional[GfskConfig] = None) -> "ImpairmentSet":
        return cls(bt_actual=(cfg or GfskConfig()).bt_nominal)


IMPAIRMENT_FIELDS = tuple(f.name for f in dataclasses.fields(ImpairmentSet))
IMPAIRMENT_ALIASES = {
    "cfo": "cfo_hz",
    "iq_phase": "iq_phase_rad",
    "delta_f": "delta_f_hz",
    "mfd": "delta_f_hz",
    "bt": "bt_actual",
    "theta_po": "theta_po_rad",
    "phase_offset": "theta_po_rad",
}


def resolve_impairment_field(name: str) -> str:
    key = IMPAIRMENT_ALIASES.get(name, name)
    if key not in IMPAIRMENT_FIELDS:
        raise UnknownImpairmentField(
            f"unknown impairment {name!r}; expected one of {', '.join(IMPAIRMENT_FIELDS)}"
        )
    return key


@dataclass(frozen=True)
class ChannelParams:
    alpha: float = 1.0
    theta_channel_rad: float = 0.0
    snr_db: Optional[float] = None
    distance_m: float = 0.0
    carrier_hz: float = 2.406e9

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if self.distance_m < 0:
            raise ValidationError("distance_m must be >= 0")


def _check_bits(bits, allow_empty=False) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int64).reshape(-1)
    if arr.size == 0 and not allow_empty:
        raise EmptyBits("bit sequence is empty")
    if np.any((arr != 0) & (arr != 1)):
        raise ValidationError("bits must be 0 or 1")
    return arr


def nrz_encode(bits) -> np.ndarray:
    return 2.0 * _check_bits(bits) - 1.0


def gaussian_taps(bt: float, sps: int, span_symbols: int) -> np.ndarray:
    """Sampled Gaussian pulse-shaping filter, normalized to unit sum.

    ``h(t) = sqrt(pi)/a * exp(-pi^2 t^2 / a^2)`` with ``a = sqrt(ln2 / 2) / BT``
    and t in symbol periods.
    """
    if not bt > 0:
        raise InvalidBt(f"bt must be positive, got {bt}")
    if sps < 1 or span_symbols < 1:
        raise ValidationError("sps and span_symbols must be >= 1")
    half = (span_symbols * sps) // 2
    t = np.arange(-half, half + 1) / sps
    a = np.sqrt(np.log(2) / 2) / bt
    h = np.sqrt(np.pi) / a * np.exp(-(np.pi**2) * t**2 / a**2)
    h = h / h.sum()
    # the division can leave a last-ulp asymmetry
    return 0.5 * (h + h[::-1])


def _shaped(nrz: np.ndarray, taps: np.ndarray, sps: int) -> np.ndarray:
    d = np.repeat(nrz, sps)
    half = taps.size // 2
    padded = np.pad(d, half, mode="edge")
    return np.convolve(padded, taps, mode="valid")


def _phase_increments(nrz, bt, f_dev_hz, cfg: GfskConfig) -> np.ndarray:
    taps = gaussian_taps(bt, cfg.sps, cfg.filter_span_symbols)
    g = _shaped(nrz, taps, cfg.sps)
    return 2 * np.pi * f_dev_hz * g / cfg.sample_rate_hz


def _integrate(inc: np.ndarray, anchor: int = 0) -> np.ndarray:
    """Rectangular phase integration with phi[anchor] = 0."""
    phi = np.empty_like(inc)
    phi[anchor] = 0.0
    phi[anchor + 1 :] = np.cumsum(inc[anchor + 1 :])
    if anchor:
        phi[:anchor] = -np.cumsum(inc[anchor:0:-1])[::-1]
    return phi


def modulate(bits, cfg: GfskConfig = GfskConfig()) -> IqFrame:
    """Ideal constant-envelope GFSK at ``bt_nominal`` and ``f_m_hz``."""
    nrz = nrz_encode(bits)
    phi = _integrate(_phase_increments(nrz, cfg.bt_nominal, cfg.f_m_hz, cfg))
    return IqFrame(np.cos(phi) + 1j * np.sin(phi), cfg.sample_rate_hz)


def build_frame_bits(cfg: GfskConfig, pdu_bits=()) -> tuple:
    pdu = _check_bits(pdu_bits, allow_empty=True)
    return tuple(cfg.preamble_bits) + tuple(int(b) for b in pdu)


def transient_ramp(n: int) -> np.ndarray:
    """Raised-cosine amplitude rise sampled at bin centres, 0 -> 1 over n samples."""
    k = np.arange(n)
    return 0.5 * (1 - np.cos(np.pi * (k + 0.5) / n))


def modulate_frame(pdu_bits, cfg: GfskConfig = GfskConfig(), imp: Optional[ImpairmentSet] = None,
                   meta: Optional[FrameMeta] = None) -> IqFrame:
    """Impaired frame: power-up transient, preamble, then PDU.

    The transient replays the first preamble bit through the Gaussian filter
    (so its phase is the filter warm-up) under a raised-cosine amplitude ramp.
    Phase is anchored at zero on the first preamble sample, which keeps the
    post-transient samples identical to :func:`modulate` when unimpaired.
    DC offsets are added after the ramp, CFO and phase offset last.
    """
    imp = (imp if imp is not None else ImpairmentSet.ideal(cfg)).validate()
    bits = build_frame_bits(cfg, pdu_bits)
    if not bits:
        raise EmptyBits("frame has neither preamble nor PDU bits")
    n_tr = cfg.transient_samples
    ext = (bits[0],) * cfg.transient_symbols + bits
    inc = _phase_increments(nrz_encode(ext), imp.bt_actual, cfg.f_m_hz + imp.delta_f_hz, cfg)
    phi = _integrate(inc, anchor=n_tr)

    env = np.ones(phi.size)
    env[:n_tr] = transient_ramp(n_tr)
    y_i = env * (1 - imp.iq_amp) * np.cos(phi - imp.iq_phase_rad / 2) + imp.i_dc
    y_q = env * (1 + imp.iq_amp) * np.sin(phi + imp.iq_phase_rad / 2) + imp.q_dc
    n = np.arange(phi.size)
    rot = 2 * np.pi * imp.cfo_hz * n / cfg.sample_rate_hz + imp.theta_po_rad
    y = (y_i + 1j * y_q) * (np.cos(rot) + 1j * np.sin(rot))
    if meta is None:
        meta = FrameMeta(pdu_bits=tuple(bits[len(cfg.preamble_bits):]))
    return IqFrame(y, cfg.sample_rate_hz, meta)


def channel_phase(ch: ChannelParams) -> float:
    return ch.theta_channel_rad - 2 * np.pi * ch.carrier_hz * ch.distance_m / SPEED_OF_LIGHT


def apply_channel(frame: IqFrame, ch: ChannelParams, rng_seed=None) -> IqFrame:
    """Flat line-of-sight channel ``alpha * exp(j theta)`` plus optional AWGN.

    Noise power is set relative to the post-scaling mean signal power. The
    seed may be an int or a :class:`numpy.random.SeedSequence`.
    """
    theta = channel_phase(ch)
    y = frame.samples * (ch.alpha * (np.cos(theta) + 1j * np.sin(theta)))
    if ch.snr_db is not None:
        rng = np.random.default_rng(rng_seed)
        p_sig = np.mean(np.abs(y) ** 2)
        sigma = np.sqrt(p_sig / 10 ** (ch.snr_db / 10) / 2)
        y = y + sigma * (rng.standard_normal(y.size) + 1j * rng.standard_normal(y.size))
    return frame.replace(samples=y)


def impairment_sweep(name: str, values: Iterable[float], cfg: GfskConfig = GfskConfig(),
                     base_imp: Optional[ImpairmentSet] = None,
                     pdu_bits: Sequence[int] = access_address_bits()) -> list:
    """One frame per value of a single impairment, the rest held at ``base_imp``."""
    key = resolve_impairment_field(name)
    base = base_imp if base_imp is not None else ImpairmentSet.ideal(cfg)
    out = []
    for v in values:
        imp = dataclasses.replace(base, **{key: float(v)})
        out.append((float(v), modulate_frame(pdu_bits, cfg, imp)))
    return out
