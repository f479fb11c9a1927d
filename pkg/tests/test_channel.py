"""AWGN channel calibration, statistics, and conversion tests."""

import numpy as np
import pytest

from specdeceive.channel import awgn, awgn_per_frame, draw_snr, ebn0_to_snr, snr_to_ebn0


def unit_power_signal(rng, n):
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return x / np.sqrt(np.mean(np.abs(x) ** 2))


class TestAwgn:
    def test_huge_snr_is_passthrough(self):
        rng = np.random.default_rng(0)
        x = unit_power_signal(rng, 1000)
        y = awgn(x, 300.0, rng)
        assert np.max(np.abs(y - x)) / np.max(np.abs(x)) < 1e-12

    def test_zero_db_noise_power(self):
        rng = np.random.default_rng(1)
        x = unit_power_signal(rng, 100_000)
        y = awgn(x, 0.0, rng)
        noise_power = np.mean(np.abs(y - x) ** 2)
        assert abs(noise_power - 1.0) < 0.05

    def test_deterministic_per_seed(self):
        x = unit_power_signal(np.random.default_rng(2), 256)
        a = awgn(x, 10.0, np.random.default_rng(99))
        b = awgn(x, 10.0, np.random.default_rng(99))
        np.testing.assert_array_equal(a, b)

    def test_zero_signal_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            awgn(np.zeros(16, dtype=complex), 10.0, np.random.default_rng(0))

    def test_power_calibration_within_fifth_db(self):
        rng = np.random.default_rng(3)
        x = unit_power_signal(rng, 100_000)
        for snr in (0.0, 10.0, 17.0):
            y = awgn(x, snr, rng)
            measured = 10 * np.log10(1.0 / np.mean(np.abs(y - x) ** 2))
            assert abs(measured - snr) < 0.2

    def test_noise_whiteness(self):
        rng = np.random.default_rng(4)
        x = unit_power_signal(rng, 100_000)
        noise = awgn(x, 0.0, rng) - x
        power = np.mean(np.abs(noise) ** 2)
        for lag in range(1, 11):
            corr = np.mean(noise[lag:] * np.conj(noise[:-lag]))
            assert abs(corr) / power < 0.02

    def test_noise_circularity(self):
        rng = np.random.default_rng(5)
        x = unit_power_signal(rng, 100_000)
        noise = awgn(x, 0.0, rng) - x
        var_i = np.var(noise.real)
        var_q = np.var(noise.imag)
        assert abs(var_i - var_q) / max(var_i, var_q) < 0.05
        cross = np.mean(noise.real * noise.imag)
        assert abs(cross) / np.mean(np.abs(noise) ** 2) < 0.02

    def test_explicit_reference_power(self):
        rng = np.random.default_rng(6)
        x = 0.1 * unit_power_signal(rng, 50_000)
        y = awgn(x, 0.0, rng, signal_power=1.0)
        noise_power = np.mean(np.abs(y - x) ** 2)
        assert abs(noise_power - 1.0) < 0.05

    def test_per_frame_snrs(self):
        rng = np.random.default_rng(7)
        frames = np.stack([unit_power_signal(rng, 10_000) for _ in range(2)])
        y = awgn_per_frame(frames, np.array([0.0, 20.0]), rng)
        noise = y - frames
        p0 = np.mean(np.abs(noise[0]) ** 2)
        p1 = np.mean(np.abs(noise[1]) ** 2)
        assert abs(p0 - 1.0) < 0.1
        assert abs(p1 - 0.01) < 0.002

    def test_per_frame_shape_validation(self):
        with pytest.raises(ValueError, match="one SNR per frame"):
            awgn_per_frame(np.ones((2, 8), dtype=complex), np.zeros(3),
                           np.random.default_rng(0))


class TestConversions:
    def test_identity_case(self):
        assert snr_to_ebn0(0.0, 1, 1) == pytest.approx(0.0)

    def test_oversampling_gain(self):
        assert snr_to_ebn0(0.0, 8, 2) == pytest.approx(10 * np.log10(4.0))

    def test_round_trip(self):
        for snr in (-3.0, 0.0, 7.5, 20.0):
            back = ebn0_to_snr(snr_to_ebn0(snr, 8, 4), 8, 4)
            assert back == pytest.approx(snr, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            snr_to_ebn0(0.0, 0, 1)
        with pytest.raises(ValueError):
            ebn0_to_snr(0.0, 1, 0)


class TestDrawSnr:
    def test_degenerate_interval(self):
        assert draw_snr(np.random.default_rng(0), 10.0, 10.0) == 10.0

    def test_moments_and_bounds(self):
        rng = np.random.default_rng(8)
        draws = draw_snr(rng, 0.0, 20.0, size=100_000)
        assert abs(np.mean(draws) - 10.0) < 0.2
        assert draws.min() >= 0.0
        assert draws.max() <= 20.0

    def test_reproducible(self):
        a = draw_snr(np.random.default_rng(42), 0.0, 20.0, size=16)
        b = draw_snr(np.random.default_rng(42), 0.0, 20.0, size=16)
        np.testing.assert_array_equal(a, b)

    def test_empty_interval_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            draw_snr(np.random.default_rng(0), 5.0, 1.0)
