import json

import numpy as np
import pytest

from blefp.errors import IoError, MalformedFile, NoFramesDetected, ValidationError
from blefp.fleet import FleetSpec, generate_dataset, make_paper_scenarios, sample_fleet
from blefp.ingest import (
    CaptureSpec,
    EnergyDetect,
    Preframed,
    capture_spec_from_manifest,
    detect_bursts,
    read_capture,
    read_samples,
    write_capture,
)
from blefp.iq import IqFrame

FS = 6e6


def _frames(n=3, seed=0):
    ds = generate_dataset(sample_fleet(FleetSpec(2, seed)), make_paper_scenarios()["loc1"], n, seed=seed)
    return ds.frames


def _burst_in_silence(offset, total=2000, length=400, seed=0):
    rng = np.random.default_rng(seed)
    x = 1e-4 * (rng.normal(size=total) + 1j * rng.normal(size=total))
    n = np.arange(length)
    x[offset : offset + length] += np.exp(2j * np.pi * 0.05 * n + 1j * rng.uniform(0, 6))
    return x


def _write_raw(path, x, dtype="<f4"):
    iq = np.empty(2 * x.size)
    iq[0::2], iq[1::2] = x.real, x.imag
    path.write_bytes(iq.astype(dtype).tobytes())


class TestRoundTrip:
    def test_f64_exact(self, tmp_path):
        frames = _frames()
        spec = CaptureSpec(tmp_path / "c.iq", FS, "INTERLEAVED_F64", Preframed(len(frames[0])))
        write_capture(frames, spec)
        back = read_capture(spec)
        assert len(back) == len(frames)
        for a, b in zip(frames, back):
            assert a.samples.tobytes() == b.samples.tobytes()
            assert a.meta == b.meta
            assert b.sample_rate_hz == FS

    def test_f32_single_rounding(self, tmp_path):
        frames = _frames()
        f32 = CaptureSpec(tmp_path / "a.iq", FS, "INTERLEAVED_F32", Preframed(len(frames[0])))
        f64 = CaptureSpec(tmp_path / "b.iq", FS, "INTERLEAVED_F64", Preframed(len(frames[0])))
        write_capture(frames, f32)
        write_capture(frames, f64)
        for a, b in zip(read_capture(f32), read_capture(f64)):
            for part in (np.real, np.imag):
                ref = part(b.samples)
                assert np.all(np.abs(part(a.samples) - ref) <= np.spacing(np.float32(np.abs(ref))) / 2)

    def test_manifest_labels(self, tmp_path):
        frames = _frames(2)
        spec = CaptureSpec(tmp_path / "c.iq", FS, framing=Preframed(1))
        write_capture(frames, spec, extra={"note": "x"})
        manifest = json.loads(spec.manifest_path.read_text())
        assert [e["device_id"] for e in manifest["frames"]] == [f.meta.device_id for f in frames]
        assert manifest["sample_rate_hz"] == FS and manifest["layout"] == "INTERLEAVED_F32"
        assert manifest["note"] == "x"
        offsets = [e["offset"] for e in manifest["frames"]]
        assert offsets == list(np.cumsum([0] + [len(f) for f in frames[:-1]]))

    def test_spec_from_manifest(self, tmp_path):
        frames = _frames(1)
        write_capture(frames, CaptureSpec(tmp_path / "c.iq", 2e6, "INTERLEAVED_F64", Preframed(1)))
        spec = capture_spec_from_manifest(tmp_path / "c.iq")
        assert (spec.sample_rate_hz, spec.layout, spec.framing) == (2e6, "INTERLEAVED_F64", Preframed(len(frames[0])))

    def test_empty_write(self, tmp_path):
        with pytest.raises(ValidationError):
            write_capture([], CaptureSpec(tmp_path / "c.iq", FS))

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(IoError):
            write_capture(_frames(1), CaptureSpec(blocker / "c.iq", FS))


class TestPreframed:
    def test_windows_without_manifest(self, tmp_path):
        x = np.arange(25) * (1 + 0.5j)
        _write_raw(tmp_path / "r.iq", x, "<f8")
        frames = read_capture(CaptureSpec(tmp_path / "r.iq", FS, "INTERLEAVED_F64", Preframed(10)))
        assert len(frames) == 2
        np.testing.assert_array_equal(frames[1].samples, x[10:20])

    def test_too_short(self, tmp_path):
        _write_raw(tmp_path / "r.iq", np.ones(4, complex))
        with pytest.raises(NoFramesDetected):
            read_capture(CaptureSpec(tmp_path / "r.iq", FS, framing=Preframed(10)))

    def test_interleaving_order(self, tmp_path):
        (tmp_path / "r.iq").write_bytes(np.array([1, 2, 3, 4], "<f4").tobytes())
        assert read_samples(tmp_path / "r.iq").tolist() == [1 + 2j, 3 + 4j]


class TestMalformed:
    def test_odd_byte_count(self, tmp_path):
        (tmp_path / "r.iq").write_bytes(b"\0" * 12)
        with pytest.raises(MalformedFile):
            read_capture(CaptureSpec(tmp_path / "r.iq", FS, framing=Preframed(1)))

    def test_bad_manifest_json(self, tmp_path):
        _write_raw(tmp_path / "r.iq", np.ones(4, complex))
        (tmp_path / "r.iq.json").write_text("{not json")
        with pytest.raises(MalformedFile):
            read_capture(CaptureSpec(tmp_path / "r.iq", FS, framing=Preframed(2)))

    def test_manifest_past_end(self, tmp_path):
        _write_raw(tmp_path / "r.iq", np.ones(4, complex))
        (tmp_path / "r.iq.json").write_text(json.dumps({"frames": [{"offset": 2, "length": 5}]}))
        with pytest.raises(MalformedFile):
            read_capture(CaptureSpec(tmp_path / "r.iq", FS, framing=Preframed(2)))

    @pytest.mark.parametrize("kw", [{"sample_rate_hz": 0}, {"layout": "INT16"}])
    def test_bad_spec(self, kw):
        args = {"path": "x", "sample_rate_hz": FS, **kw}
        with pytest.raises(ValidationError):
            CaptureSpec(**args)

    def test_bad_framing(self):
        with pytest.raises(ValidationError):
            Preframed(0)
        with pytest.raises(ValidationError):
            EnergyDetect(threshold_rel=1.5)


class TestEnergyDetect:
    def test_zeros(self, tmp_path):
        _write_raw(tmp_path / "z.iq", np.zeros(500, complex))
        with pytest.raises(NoFramesDetected):
            read_capture(CaptureSpec(tmp_path / "z.iq", FS))

    @pytest.mark.parametrize("offset", [0, 137, 801, 1600])
    def test_known_offset(self, tmp_path, offset):
        _write_raw(tmp_path / "b.iq", _burst_in_silence(offset))
        frames = read_capture(CaptureSpec(tmp_path / "b.iq", FS))
        assert len(frames) == 1
        start = detect_bursts(read_samples(tmp_path / "b.iq"), EnergyDetect())[0][0]
        assert abs(start - offset) <= 3
        assert abs(len(frames[0]) - 400) <= 6

    def test_translation_equivariant(self):
        det = EnergyDetect()
        base = detect_bursts(_burst_in_silence(500, seed=3), det)[0][0]
        for k in range(1, 40, 3):
            got = detect_bursts(_burst_in_silence(500 + k, seed=3), det)[0][0]
            assert abs(got - (base + k)) <= 1

    def test_two_bursts_and_gap_merge(self):
        x = _burst_in_silence(100, total=3000)
        x[1000:1400] += _burst_in_silence(0, total=400, seed=1)
        assert len(detect_bursts(x, EnergyDetect())) == 2
        hole = x.copy()
        hole[250:258] = 0
        assert len(detect_bursts(hole, EnergyDetect(min_gap_samples=16))) == 2
        assert len(detect_bursts(hole, EnergyDetect(min_gap_samples=0))) == 3

    def test_align_offset(self):
        x = _burst_in_silence(300)
        a = detect_bursts(x, EnergyDetect())[0][0]
        b = detect_bursts(x, EnergyDetect(align_offset=-5))[0][0]
        assert b == a - 5

    def test_frames_are_iq_frames(self, tmp_path):
        _write_raw(tmp_path / "b.iq", _burst_in_silence(50))
        f = read_capture(CaptureSpec(tmp_path / "b.iq", 2e6))[0]
        assert isinstance(f, IqFrame) and f.sample_rate_hz == 2e6
