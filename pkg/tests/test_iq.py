import math

import numpy as np
import pytest

from blefp.errors import NonPowerOfTwoLength, ValidationError, ZeroEnergyFrame
from blefp.iq import FrameMeta, IqFrame, angle, fft, next_pow2, normalize_power, psd, unwrap
from oracles import atan2_hp, naive_dft, unwrap_loop


def _rand(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=n) + 1j * rng.normal(size=n)


class TestFrameTypes:
    def test_frame_is_immutable(self):
        f = IqFrame([1 + 1j, 2], 6e6)
        with pytest.raises(ValueError):
            f.samples[0] = 0

    def test_rejects_empty_and_bad_rate(self):
        with pytest.raises(ValidationError):
            IqFrame([], 6e6)
        with pytest.raises(ValidationError):
            IqFrame([1], 0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValidationError):
            IqFrame([1, np.nan], 6e6)

    @pytest.mark.parametrize("ch", [-1, 37])
    def test_channel_index_range(self, ch):
        with pytest.raises(ValidationError):
            FrameMeta(channel_index=ch)

    def test_replace_meta(self):
        f = IqFrame([1j], 1.0, FrameMeta(device_id=3))
        g = f.replace(domain_label="rx2")
        assert g.meta.device_id == 3 and g.meta.domain_label == "rx2"
        assert np.array_equal(g.samples, f.samples)


class TestAngle:
    def test_positive_real(self):
        assert angle([1 + 0j]).tolist() == [0.0]

    def test_axes(self):
        assert angle([1j, -1 + 0j]).tolist() == [math.pi / 2, math.pi]

    def test_negative_zero_imag_maps_to_pi(self):
        assert angle([complex(-1.0, -0.0)])[0] == math.pi

    def test_zero_sample(self):
        assert angle([0j, 1j])[0] == 0.0

    def test_high_precision(self):
        got = angle([0.6 + 0.8j])[0]
        assert got == pytest.approx(0.927295218001612, abs=1e-15)
        assert abs(got - float(atan2_hp(0.8, 0.6))) < 1e-15

    def test_range(self):
        a = angle(_rand(500))
        assert np.all(a > -math.pi) and np.all(a <= math.pi)


class TestUnwrap:
    def test_no_jumps(self):
        assert unwrap([0, 1, 2]).tolist() == [0, 1, 2]

    def test_wrap_event(self):
        got = unwrap([0, 3.0, -3.0])
        assert got[:2].tolist() == [0, 3.0]
        assert got[2] == pytest.approx(3.283185307179586, abs=1e-15)

    def test_single_wrap_from_pi(self):
        got = unwrap([math.pi, -math.pi + 0.1])
        assert got.tolist() == pytest.approx([math.pi, math.pi + 0.1], abs=1e-15)

    def test_exact_pi_step_kept(self):
        assert unwrap([0.0, math.pi]).tolist() == [0.0, math.pi]

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = rng.uniform(-math.pi, math.pi, size=rng.integers(2, 100))
            np.testing.assert_array_equal(unwrap(p), unwrap_loop(list(p)))

    def test_properties(self):
        p = angle(_rand(1000, 2))
        u = unwrap(p)
        d = np.diff(u)
        assert u[0] == p[0]
        assert np.all(d > -math.pi) and np.all(d <= math.pi)
        k = (u - p) / (2 * math.pi)
        assert np.max(np.abs(k - np.round(k))) < 1e-12

    def test_short_inputs(self):
        assert unwrap([]).size == 0
        assert unwrap([2.5]).tolist() == [2.5]


class TestFft:
    def test_delta(self):
        np.testing.assert_allclose(fft([1, 0, 0, 0]), [1, 1, 1, 1])

    def test_dc(self):
        np.testing.assert_allclose(fft([1, 1, 1, 1]), [4, 0, 0, 0], atol=1e-15)

    def test_random_length_8(self):
        x = _rand(8, 3)
        assert np.max(np.abs(fft(x) - np.array(naive_dft(list(x))))) < 1e-12

    @pytest.mark.parametrize("n", [1, 2, 4, 16, 32, 64])
    def test_against_naive_dft(self, n):
        x = _rand(n, n)
        assert np.max(np.abs(fft(x) - np.array(naive_dft(list(x))))) <= 1e-10

    @pytest.mark.parametrize("n", [3, 6, 54, 0])
    def test_rejects_non_power_of_two(self, n):
        with pytest.raises(NonPowerOfTwoLength):
            fft(np.ones(n))

    def test_next_pow2(self):
        assert [next_pow2(n) for n in (1, 2, 3, 54, 64, 65)] == [1, 2, 4, 64, 64, 128]


class TestPsd:
    def test_tone_in_one_bin(self):
        nfft, k = 64, 5
        x = np.exp(2j * np.pi * k * np.arange(nfft) / nfft)
        p = psd(x, nfft)
        assert np.argmax(p) == k
        assert np.sum(np.delete(p, k)) < 1e-20

    def test_zero_frame(self):
        assert np.all(psd(np.zeros(10), 16) == 0)

    @pytest.mark.parametrize("n", [1, 54, 1000, 4096])
    def test_parseval(self, n):
        x = _rand(n, n)
        p = psd(x, next_pow2(n))
        assert p.size == next_pow2(n) and np.all(p >= 0)
        energy = np.sum(np.abs(x) ** 2)
        assert abs(p.sum() - energy) / energy < 1e-9

    def test_rejects_bad_nfft(self):
        with pytest.raises(NonPowerOfTwoLength):
            psd(np.ones(4), 6)
        with pytest.raises(ValidationError):
            psd(np.ones(9), 8)


class TestNormalizePower:
    def test_constant(self):
        np.testing.assert_array_equal(normalize_power(np.full(5, 2 + 0j)), np.ones(5))

    def test_scale_invariance(self):
        x = _rand(64, 4)
        np.testing.assert_allclose(normalize_power(0.37 * x), normalize_power(x), rtol=0, atol=1e-15)

    def test_unit_power(self):
        y = normalize_power(_rand(777, 5))
        assert abs(np.mean(np.abs(y) ** 2) - 1) < 1e-12

    def test_idempotent(self):
        y = normalize_power(_rand(300, 6))
        assert np.max(np.abs(normalize_power(y) - y)) < 1e-12

    def test_frames_in_frames_out(self):
        f = IqFrame(_rand(10), 6e6, FrameMeta(device_id=1))
        g = normalize_power(f)
        assert isinstance(g, IqFrame) and g.meta == f.meta

    def test_phase_unchanged(self):
        # Scaling both parts by a positive real rounds each of them, so atan2
        # can move by an ulp; most samples come out bit-identical.
        x = _rand(2000, 7)
        a, b = angle(x), angle(normalize_power(x))
        assert np.all(np.abs(a - b) <= 2 * np.spacing(np.abs(a)))
        assert np.mean(a == b) > 0.8

    def test_zero_energy(self):
        with pytest.raises(ZeroEnergyFrame):
            normalize_power(np.zeros(8))
