import dataclasses
import math

import numpy as np
import pytest

from blefp.errors import EmptyBits, InvalidBt, InvalidImpairment, UnknownImpairmentField, ValidationError
from blefp.features import tpd, window_length
from blefp.gfsk import (
    SPEED_OF_LIGHT,
    ChannelParams,
    GfskConfig,
    ImpairmentSet,
    access_address_bits,
    apply_channel,
    bits_from_bytes,
    bits_from_int,
    build_frame_bits,
    channel_phase,
    gaussian_taps,
    impairment_sweep,
    modulate,
    modulate_frame,
    nrz_encode,
    resolve_impairment_field,
    transient_ramp,
)
from blefp.iq import IqFrame, angle, unwrap
from oracles import gaussian_a

CFG = GfskConfig()
W = window_length(CFG)


def _bits(n, seed):
    return tuple(int(b) for b in np.random.default_rng(seed).integers(0, 2, n))


class TestBits:
    def test_nrz(self):
        assert nrz_encode([1, 0, 1]).tolist() == [1, -1, 1]
        assert nrz_encode([0]).tolist() == [-1]

    def test_nrz_preamble(self):
        out = nrz_encode(CFG.preamble_bits)
        assert out.tolist() == [-1, 1] * 4

    def test_empty_bits(self):
        with pytest.raises(EmptyBits):
            nrz_encode([])

    def test_non_binary(self):
        with pytest.raises(ValidationError):
            nrz_encode([0, 2])

    def test_lsb_first(self):
        assert bits_from_int(0b1101, 4) == (1, 0, 1, 1)
        assert bits_from_bytes(b"\x01\x80") == (1, 0, 0, 0, 0, 0, 0, 0) + (0,) * 7 + (1,)

    def test_access_address(self):
        aa = access_address_bits()
        assert len(aa) == 32
        assert sum(b << i for i, b in enumerate(aa)) == 0x8E89BED6

    def test_build_frame_bits(self):
        assert build_frame_bits(CFG, []) == (0, 1, 0, 1, 0, 1, 0, 1)
        assert build_frame_bits(CFG, [1, 1]) == (0, 1, 0, 1, 0, 1, 0, 1, 1, 1)
        assert len(build_frame_bits(CFG, _bits(13, 0))) == 8 + 13


class TestConfig:
    def test_sps_must_be_integer(self):
        with pytest.raises(ValidationError):
            GfskConfig(sample_rate_hz=2.5e6)

    def test_bad_bt(self):
        with pytest.raises(InvalidBt):
            GfskConfig(bt_nominal=1.5)

    def test_impairment_validation(self):
        with pytest.raises(InvalidImpairment):
            ImpairmentSet(iq_amp=1.0).validate()
        with pytest.raises(InvalidImpairment):
            ImpairmentSet(bt_actual=0.0).validate()

    def test_field_aliases(self):
        assert resolve_impairment_field("cfo") == "cfo_hz"
        assert resolve_impairment_field("theta_po") == "theta_po_rad"
        with pytest.raises(UnknownImpairmentField):
            resolve_impairment_field("gain")


class TestGaussianTaps:
    @pytest.mark.parametrize("bt,sps,span", [(0.5, 6, 3), (0.3, 8, 4), (1.0, 1, 1), (0.45, 6, 5)])
    def test_unit_sum_and_symmetry(self, bt, sps, span):
        h = gaussian_taps(bt, sps, span)
        assert h.size == 2 * (span * sps // 2) + 1
        assert abs(h.sum() - 1) <= 1e-15
        assert np.max(np.abs(h - h[::-1])) <= 1e-15

    def test_shape_against_high_precision(self):
        import mpmath

        a = gaussian_a(0.5)
        assert float(a) == pytest.approx(1.177410022515475, abs=1e-15)
        t = [mpmath.mpf(k) / 6 for k in range(-9, 10)]
        ref = [mpmath.sqrt(mpmath.pi) / a * mpmath.exp(-(mpmath.pi**2) * x**2 / a**2) for x in t]
        total = mpmath.fsum(ref)
        ref = np.array([float(r / total) for r in ref])
        assert np.max(np.abs(gaussian_taps(0.5, 6, 3) - ref)) < 1e-16

    def test_invalid(self):
        with pytest.raises(InvalidBt):
            gaussian_taps(0, 6, 3)


class TestModulate:
    def test_constant_envelope(self):
        y = modulate(_bits(100, 1), CFG).samples
        assert np.max(np.abs(np.abs(y) - 1)) < 1e-12

    def test_phase_starts_at_zero(self):
        assert modulate([1, 0], CFG).samples[0] == 1

    def test_all_zero_bits_settle(self):
        y = modulate([0] * 10, CFG).samples
        inc = np.diff(unwrap(angle(y)))
        assert np.max(np.abs(inc[20:] + 2 * np.pi * 250e3 / 6e6)) < 1e-12

    def test_matches_cumulative_sum_oracle(self):
        bits = _bits(20, 2)
        h = gaussian_taps(0.5, 6, 3)
        d = np.repeat(2.0 * np.array(bits) - 1, 6)
        d = np.concatenate([[d[0]] * 9, d, [d[-1]] * 9])
        g = [sum(d[n + k] * h[k] for k in range(19)) for n in range(len(bits) * 6)]
        phi = [0.0]
        for v in g[1:]:
            phi.append(phi[-1] + 2 * math.pi * 250e3 * v / 6e6)
        ref = np.cos(phi) + 1j * np.sin(phi)
        assert np.max(np.abs(modulate(bits, CFG).samples - ref)) < 1e-12

    def test_preamble_increments_alternate(self):
        y = modulate(CFG.preamble_bits, CFG).samples
        inc = np.diff(unwrap(angle(y)))
        peak = 2 * np.pi * 250e3 / 6e6
        assert np.max(np.abs(inc)) < peak
        # sign flips every 6 samples once past the first symbol
        centres = inc[8:44:6]
        assert np.all(np.sign(centres[1:]) == -np.sign(centres[:-1]))


class TestModulateFrame:
    def test_length(self):
        assert len(modulate_frame((), CFG)) == 54
        assert len(modulate_frame(_bits(40, 3), CFG)) == (1 + 8 + 40) * 6

    def test_ideal_reduces_to_modulate(self):
        pdu = _bits(24, 4)
        f = modulate_frame(pdu, CFG, ImpairmentSet.ideal(CFG))
        ref = modulate(build_frame_bits(CFG, pdu), CFG).samples
        np.testing.assert_array_equal(f.samples[6:], ref)

    def test_transient_ramp(self):
        f = modulate_frame((), CFG)
        r = transient_ramp(6)
        np.testing.assert_allclose(np.abs(f.samples[:6]), r, rtol=0, atol=1e-15)
        assert np.all(np.diff(r) > 0) and 0 < r[0] < 0.1 and 0.9 < r[-1] < 1

    def test_cfo_phase_law(self):
        ideal = modulate_frame((), CFG)
        off = modulate_frame((), CFG, ImpairmentSet(cfo_hz=10e3))
        d = np.diff(unwrap(angle(off.samples)) - unwrap(angle(ideal.samples)))
        assert 2 * np.pi * 10e3 / 6e6 == pytest.approx(0.0104720, abs=1e-7)
        assert np.max(np.abs(d - 2 * np.pi * 10e3 / 6e6)) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_cfo_linearity_any_bits(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.uniform(-100e3, 100e3)
        base = ImpairmentSet(iq_amp=0.03, i_dc=0.01, bt_actual=0.48)
        bits = _bits(30, seed)
        a = modulate_frame(bits, CFG, dataclasses.replace(base, cfo_hz=f)).samples
        b = modulate_frame(bits, CFG, base).samples
        d = np.diff(unwrap(angle(a)) - unwrap(angle(b)))
        assert np.max(np.abs(d - 2 * np.pi * f / 6e6)) < 1e-9

    def test_deterministic(self):
        imp = ImpairmentSet(cfo_hz=1e3, iq_amp=0.02, iq_phase_rad=0.01, i_dc=0.01, q_dc=-0.01,
                            delta_f_hz=5e3, bt_actual=0.47, theta_po_rad=1.0)
        a = modulate_frame(_bits(16, 5), CFG, imp)
        b = modulate_frame(_bits(16, 5), CFG, imp)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_iq_imbalance_formula(self):
        imp = ImpairmentSet(iq_amp=0.1, iq_phase_rad=0.2, i_dc=0.05, q_dc=-0.03)
        f = modulate_frame((), CFG, imp).samples[6:]
        phi = unwrap(angle(modulate(CFG.preamble_bits, CFG).samples))
        ref = 0.9 * np.cos(phi - 0.1) + 0.05 + 1j * (1.1 * np.sin(phi + 0.1) - 0.03)
        assert np.max(np.abs(f - ref)) < 1e-12


class TestChannel:
    def test_identity(self):
        f = modulate_frame(_bits(8, 6), CFG)
        g = apply_channel(f, ChannelParams(carrier_hz=2.406e9))
        np.testing.assert_array_equal(g.samples, f.samples)

    def test_power_scaling(self):
        f = modulate_frame(_bits(8, 7), CFG)
        g = apply_channel(f, ChannelParams(alpha=2.0))
        ratio = np.mean(np.abs(g.samples) ** 2) / np.mean(np.abs(f.samples) ** 2)
        assert abs(ratio - 4) < 1e-12

    def test_one_wavelength(self):
        f = modulate_frame(_bits(8, 8), CFG)
        lam = SPEED_OF_LIGHT / 2.406e9
        assert channel_phase(ChannelParams(distance_m=lam)) == pytest.approx(-2 * np.pi, abs=1e-12)
        g = apply_channel(f, ChannelParams(distance_m=lam))
        assert np.max(np.abs(g.samples - f.samples)) < 1e-9

    def test_phase_transparency(self):
        f = modulate_frame(_bits(8, 9), CFG, ImpairmentSet(i_dc=0.02))
        theta = 2.2
        g = apply_channel(f, ChannelParams(theta_channel_rad=theta))
        d = np.angle(np.exp(1j * (angle(g) - angle(f) - theta)))
        assert np.max(np.abs(d)) < 1e-12
        assert np.max(np.abs(np.abs(g.samples) - np.abs(f.samples))) < 1e-12

    def test_noise_seeded(self):
        f = modulate_frame(_bits(500, 10), CFG)
        ch = ChannelParams(snr_db=10.0)
        a, b, c = apply_channel(f, ch, 1), apply_channel(f, ch, 1), apply_channel(f, ch, 2)
        assert a.samples.tobytes() == b.samples.tobytes()
        assert not np.array_equal(a.samples, c.samples)
        noise = a.samples - f.samples
        snr = 10 * np.log10(np.mean(np.abs(f.samples) ** 2) / np.mean(np.abs(noise) ** 2))
        assert abs(snr - 10) < 0.3

    def test_bad_alpha(self):
        with pytest.raises(ValidationError):
            ChannelParams(alpha=0)


class TestSweep:
    def test_single_value_equals_base(self):
        base = ImpairmentSet(iq_amp=0.02)
        ((v, f),) = impairment_sweep("cfo", [0.0], CFG, base)
        assert v == 0.0
        np.testing.assert_array_equal(f.samples, modulate_frame(access_address_bits(), CFG, base).samples)

    def test_cfo_vertical_translates(self):
        sweep = impairment_sweep("cfo_hz", [-50e3, 0, 50e3], CFG)
        curves = [tpd(f, W).data[0] for _, f in sweep]
        step = 2 * np.pi * 50e3 / 6e6
        assert np.max(np.abs(curves[1] - curves[0] - step)) < 1e-9
        assert np.max(np.abs(curves[2] - curves[1] - step)) < 1e-9

    def test_lower_bt_lower_peaks(self):
        (_, lo), (_, hi) = impairment_sweep("bt", [0.3, 0.5], CFG)
        region = slice(6, W.L - 1)
        assert tpd(lo, W).data[0, region].max() < tpd(hi, W).data[0, region].max()

    def test_unknown_field(self):
        with pytest.raises(UnknownImpairmentField):
            impairment_sweep("gain", [1.0], CFG)

    def test_sweep_frames_are_frames(self):
        out = impairment_sweep("iq_amp", [-0.1, 0.1], CFG)
        assert all(isinstance(f, IqFrame) for _, f in out)
