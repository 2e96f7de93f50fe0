"""Synthetic device fleets and the domain scenarios they are observed under."""

from __future__ import annotations

import dataclasses
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ChannelOutOfRange, InvalidRanges, ValidationError
from .gfsk import (
    ADV_ACCESS_ADDRESS,
    IMPAIRMENT_FIELDS,
    ChannelParams,
    GfskConfig,
    ImpairmentSet,
    access_address_bits,
    apply_channel,
    bits_from_bytes,
    modulate_frame,
)
from .iq import FrameMeta, IqFrame, N_DATA_CHANNELS

DEFAULT_RANGES: Dict[str, Tuple[float, float]] = {
    "cfo_hz": (-50e3, 50e3),
    "iq_amp": (-0.05, 0.05),
    "iq_phase_rad": (-0.05, 0.05),
    "i_dc": (-0.02, 0.02),
    "q_dc": (-0.02, 0.02),
    "delta_f_hz": (-25e3, 25e3),
    "bt_actual": (0.45, 0.55),
    "theta_po_rad": (-np.pi, np.pi),
}

# Coax run used for every wired preset; it sets the geometric phase term.
WIRED_CABLE_M = 1.0
WIRED_SNR_DB = 40.0
# Wireless presets: SNR at 1 m, free-space falloff with distance.
WIRELESS_SNR_1M_DB = 32.0
WIRELESS_SNR_JITTER_DB = 2.0
PDU_PAYLOAD = b"TPD-fleet"

# Rx2 front end relative to Rx1. Magnitudes are illustrative, not measured.
RX2_IMPAIRMENT = ImpairmentSet(
    cfo_hz=3e3, iq_amp=0.02, iq_phase_rad=0.02, i_dc=0.01, q_dc=-0.01,
    delta_f_hz=0.0, bt_actual=0.5, theta_po_rad=0.8,
)
RX_CLEAN = ImpairmentSet(bt_actual=0.5)


def channel_center_hz(index: int) -> float:
    """Center frequency of BLE data channel ``index``."""
    if not 0 <= index < N_DATA_CHANNELS:
        raise ChannelOutOfRange(f"data channel {index} outside [0, 36]")
    mhz = 2404 + 2 * index if index <= 10 else 2428 + 2 * (index - 11)
    return mhz * 1e6


@dataclass(frozen=True)
class FleetSpec:
    n_devices: int = 10
    seed: int = 0
    ranges: Dict[str, Tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_RANGES))

    def __post_init__(self):
        if self.n_devices < 2:
            raise InvalidRanges("a fleet needs at least 2 devices")
        ranges = dict(DEFAULT_RANGES)
        for k, v in self.ranges.items():
            if k not in IMPAIRMENT_FIELDS:
                raise InvalidRanges(f"unknown impairment range {k!r}")
            lo, hi = (float(x) for x in v)
            if not lo <= hi:
                raise InvalidRanges(f"range for {k} has min > max")
            ranges[k] = (lo, hi)
        if max(abs(x) for x in ranges["iq_amp"]) >= 1:
            raise InvalidRanges("iq_amp range must stay inside (-1, 1)")
        lo, hi = ranges["bt_actual"]
        if lo <= 0 or hi > 1:
            raise InvalidRanges("bt_actual range must stay inside (0, 1]")
        object.__setattr__(self, "ranges", ranges)


@dataclass(frozen=True)
class DeviceSignature:
    device_id: int
    imp: ImpairmentSet


@dataclass(frozen=True)
class FixedPdu:
    bits: tuple

    def draw(self, rng) -> tuple:
        return self.bits


@dataclass(frozen=True)
class RandomPdu:
    min_bytes: int = 2
    max_bytes: int = 16

    def __post_init__(self):
        if not 0 <= self.min_bytes <= self.max_bytes:
            raise ValidationError("RandomPdu needs 0 <= min_bytes <= max_bytes")

    def draw(self, rng) -> tuple:
        n = int(rng.integers(self.min_bytes, self.max_bytes + 1))
        return bits_from_bytes(bytes(rng.integers(0, 256, size=n, dtype=np.uint8)))


PduPolicy = Union[FixedPdu, RandomPdu]


@dataclass(frozen=True)
class DomainScenario:
    """Where and how a fleet is observed.

    ``pdu_policy`` describes the bits after the access address; every frame is
    preamble + access address + PDU.
    """

    name: str
    channel_index: int = 1
    distance_m: float = WIRED_CABLE_M
    snr_db: Optional[float] = WIRED_SNR_DB
    receiver_imp: ImpairmentSet = RX_CLEAN
    pdu_policy: PduPolicy = field(default_factory=RandomPdu)
    snr_jitter_db: float = 0.0
    access_address: int = ADV_ACCESS_ADDRESS

    def __post_init__(self):
        if not 0 <= self.channel_index < N_DATA_CHANNELS:
            raise ChannelOutOfRange(f"channel_index {self.channel_index} outside [0, 36]")

    @property
    def carrier_hz(self) -> float:
        return channel_center_hz(self.channel_index)


@dataclass
class LabeledDataset:
    items: List[Tuple[IqFrame, int]]
    scenario: DomainScenario
    frame_seeds: List[tuple] = field(default_factory=list)
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.items:
            raise ValidationError("dataset is empty")

    @property
    def frames(self) -> List[IqFrame]:
        return [f for f, _ in self.items]

    @property
    def labels(self) -> np.ndarray:
        return np.array([d for _, d in self.items], dtype=np.int64)

    def subset(self, device_ids) -> "LabeledDataset":
        keep = set(device_ids)
        idx = [i for i, (_, d) in enumerate(self.items) if d in keep]
        return LabeledDataset([self.items[i] for i in idx], self.scenario,
                              [self.frame_seeds[i] for i in idx] if self.frame_seeds else [], self.seed)


def sample_fleet(spec: FleetSpec) -> List[DeviceSignature]:
    rng = np.random.default_rng(spec.seed)
    fleet = []
    for dev in range(spec.n_devices):
        vals = {k: float(rng.uniform(*spec.ranges[k])) for k in IMPAIRMENT_FIELDS}
        fleet.append(DeviceSignature(dev, ImpairmentSet(**vals).validate()))
    return fleet


def combine_impairments(device: ImpairmentSet, receiver: ImpairmentSet) -> ImpairmentSet:
    """Receiver terms add to the device ones; BT and deviation stay transmit-side."""
    return ImpairmentSet(
        cfo_hz=device.cfo_hz + receiver.cfo_hz,
        iq_amp=device.iq_amp + receiver.iq_amp,
        iq_phase_rad=device.iq_phase_rad + receiver.iq_phase_rad,
        i_dc=device.i_dc + receiver.i_dc,
        q_dc=device.q_dc + receiver.q_dc,
        delta_f_hz=device.delta_f_hz,
        bt_actual=device.bt_actual,
        theta_po_rad=device.theta_po_rad + receiver.theta_po_rad,
    ).validate()


def frame_seed(seed: int, device_id: int, frame_index: int) -> tuple:
    return (int(seed), int(device_id), int(frame_index))


def _synth_one(dev: DeviceSignature, scenario: DomainScenario, cfg: GfskConfig, entropy: tuple) -> IqFrame:
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    pdu = access_address_bits(scenario.access_address) + tuple(scenario.pdu_policy.draw(rng))
    snr = scenario.snr_db
    if snr is not None and scenario.snr_jitter_db:
        snr = snr + rng.uniform(-scenario.snr_jitter_db, scenario.snr_jitter_db)
    imp = combine_impairments(dev.imp, scenario.receiver_imp)
    meta = FrameMeta(dev.device_id, scenario.channel_index, scenario.name, pdu)
    frame = modulate_frame(pdu, cfg, imp, meta)
    ch = ChannelParams(snr_db=snr, distance_m=scenario.distance_m, carrier_hz=scenario.carrier_hz)
    return apply_channel(frame, ch, rng.integers(0, 2**63))


def generate_dataset(fleet: Sequence[DeviceSignature], scenario: DomainScenario, frames_per_device: int,
                     cfg: GfskConfig = GfskConfig(), seed: int = 0, threads: int = 1) -> LabeledDataset:
    """Synthesize ``frames_per_device`` frames per device under ``scenario``.

    Each frame draws from its own seed ``(seed, device_id, frame_index)``, so
    output is independent of ``threads`` and ordered by (device, frame).
    """
    if frames_per_device < 1:
        raise ValidationError("frames_per_device must be >= 1")
    jobs = [(dev, frame_seed(seed, dev.device_id, k)) for dev in fleet for k in range(frames_per_device)]

    def run(job):
        return _synth_one(job[0], scenario, cfg, job[1])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            frames = list(pool.map(run, jobs))
    else:
        frames = [run(j) for j in jobs]
    items = [(f, dev.device_id) for f, (dev, _) in zip(frames, jobs)]
    return LabeledDataset(items, scenario, [s for _, s in jobs], seed)


def channel_pdu_bits(channel_index: int) -> tuple:
    """Deterministic per-channel PDU: header, payload, then a CRC-like trailer.

    Hard-coding a channel changes the header and the CRC on real devices; the
    trailer here is a crc32 stand-in, not the BLE CRC.
    """
    header = bytes([0x02, len(PDU_PAYLOAD) + 1])
    body = header + PDU_PAYLOAD + bytes([channel_index])
    trailer = zlib.crc32(body).to_bytes(4, "little")[:3]
    return bits_from_bytes(body + trailer)


def make_paper_scenarios(noiseless: bool = False) -> Dict[str, DomainScenario]:
    """Presets for the channel, environment and receiver experiments."""
    out: Dict[str, DomainScenario] = {}
    for ch in (1, 2, 14, 32):
        name = f"wired-ch{ch}"
        out[name] = DomainScenario(name, ch, WIRED_CABLE_M, WIRED_SNR_DB, RX_CLEAN, FixedPdu(channel_pdu_bits(ch)))
    for i, d in enumerate((1.0, 1.5, 2.0, 3.0), start=1):
        name = f"loc{i}"
        snr = WIRELESS_SNR_1M_DB - 20 * np.log10(d)
        out[name] = DomainScenario(name, 1, d, float(snr), RX_CLEAN, FixedPdu(channel_pdu_bits(1)),
                                   snr_jitter_db=WIRELESS_SNR_JITTER_DB)
    out["rx1"] = dataclasses.replace(out["wired-ch1"], name="rx1")
    out["rx2"] = dataclasses.replace(out["wired-ch1"], name="rx2", receiver_imp=RX2_IMPAIRMENT)
    if noiseless:
        out = {k: dataclasses.replace(v, snr_db=None, snr_jitter_db=0.0) for k, v in out.items()}
    return out


def _strict(d: dict, allowed, what: str) -> dict:
    extra = set(d) - set(allowed)
    if extra:
        raise ValidationError(f"unknown {what} keys: {sorted(extra)}")
    return d


def impairment_from_dict(d: dict) -> ImpairmentSet:
    return ImpairmentSet(**_strict(d, IMPAIRMENT_FIELDS, "impairment")).validate()


def fleet_spec_to_dict(spec: FleetSpec) -> dict:
    return {"n_devices": spec.n_devices, "seed": spec.seed,
            "ranges": {k: list(v) for k, v in spec.ranges.items()}}


def fleet_spec_from_dict(d: dict) -> FleetSpec:
    _strict(d, ("n_devices", "seed", "ranges"), "fleet")
    return FleetSpec(d.get("n_devices", 10), d.get("seed", 0),
                     {k: tuple(v) for k, v in d.get("ranges", {}).items()})


def scenario_to_dict(s: DomainScenario) -> dict:
    if isinstance(s.pdu_policy, FixedPdu):
        policy = {"kind": "FIXED", "bits": "".join(str(b) for b in s.pdu_policy.bits)}
    else:
        policy = {"kind": "RANDOM", "min_bytes": s.pdu_policy.min_bytes, "max_bytes": s.pdu_policy.max_bytes}
    return {"name": s.name, "channel_index": s.channel_index, "distance_m": s.distance_m, "snr_db": s.snr_db,
            "receiver_imp": dataclasses.asdict(s.receiver_imp), "pdu_policy": policy,
            "snr_jitter_db": s.snr_jitter_db, "access_address": s.access_address}


def scenario_from_dict(d: dict) -> DomainScenario:
    fields_ = [f.name for f in dataclasses.fields(DomainScenario)]
    d = dict(_strict(d, fields_, "scenario"))
    if "receiver_imp" in d:
        d["receiver_imp"] = impairment_from_dict(d["receiver_imp"])
    if "pdu_policy" in d:
        p = dict(d["pdu_policy"])
        kind = p.pop("kind", "RANDOM").upper()
        if kind == "FIXED":
            _strict(p, ("bits",), "FIXED pdu policy")
            d["pdu_policy"] = FixedPdu(tuple(int(c) for c in p["bits"]))
        elif kind == "RANDOM":
            d["pdu_policy"] = RandomPdu(**_strict(p, ("min_bytes", "max_bytes"), "RANDOM pdu policy"))
        else:
            raise ValidationError(f"unknown pdu policy kind {kind!r}")
    return DomainScenario(**d)


def save_dataset(ds: LabeledDataset, path, fleet_spec: Optional[FleetSpec] = None,
                 layout: str = "INTERLEAVED_F64"):
    """Write frames as a pre-framed capture; the sidecar carries the dataset description."""
    from .ingest import CaptureSpec, Preframed, write_capture

    first = ds.items[0][0]
    extra = {"scenario": scenario_to_dict(ds.scenario), "dataset_seed": ds.seed,
             "frame_seeds": [list(s) for s in ds.frame_seeds]}
    if fleet_spec is not None:
        extra["fleet"] = fleet_spec_to_dict(fleet_spec)
    spec = CaptureSpec(path, first.sample_rate_hz, layout, Preframed(len(first)))
    return write_capture(ds.frames, spec, extra)


def load_dataset(path) -> LabeledDataset:
    import json

    from .ingest import capture_spec_from_manifest, read_capture

    spec = capture_spec_from_manifest(path)
    manifest = json.loads(spec.manifest_path.read_text())
    frames = read_capture(spec)
    if any(f.meta.device_id is None for f in frames):
        raise ValidationError(f"{path}: frames without device labels")
    scenario = scenario_from_dict(manifest["scenario"]) if "scenario" in manifest else DomainScenario("capture")
    seeds = [tuple(s) for s in manifest.get("frame_seeds", [])]
    return LabeledDataset([(f, f.meta.device_id) for f in frames], scenario, seeds, manifest.get("dataset_seed"))
