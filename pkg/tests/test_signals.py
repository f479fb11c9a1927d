"""Signal container and spectral measurement tests.

The FFT is checked against an independent O(n^2) DFT implemented here from
the defining sum, never against itself.
"""

import numpy as np
import pytest

from specdeceive.modem import constellation, map_bits, shape_frames
from specdeceive.signals import (
    BandSpec,
    IQSignal,
    Spectrum,
    energy,
    export_psd_csv,
    fft,
    ifft,
    occupied_band,
    out_of_band_ratio,
    psd,
    psd_frequencies,
    spectral_energy_split,
)


def naive_dft(x: np.ndarray) -> np.ndarray:
    """Reference O(n^2) DFT straight from the definition."""
    n = x.size
    k = np.arange(n)
    twiddle = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return twiddle @ x


def random_signal(rng, n, sps=1):
    return IQSignal(rng.standard_normal(n) + 1j * rng.standard_normal(n), sps)


class TestIQSignal:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            IQSignal(np.array([], dtype=complex))

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            IQSignal(np.array([1.0, np.nan]))

    def test_rejects_inf(self):
        with pytest.raises(ValueError):
            IQSignal(np.array([1.0, np.inf * 1j]))

    def test_rejects_bad_sps(self):
        with pytest.raises(ValueError):
            IQSignal(np.ones(4), samples_per_symbol=0)


class TestFft:
    def test_impulse_flat_spectrum(self):
        spec = fft(IQSignal([1, 0, 0, 0]))
        np.testing.assert_allclose(spec.bins, np.ones(4), atol=1e-15)

    def test_constant_is_dc_only(self):
        spec = fft(IQSignal([1, 1, 1, 1]))
        np.testing.assert_allclose(spec.bins, [4, 0, 0, 0], atol=1e-12)

    def test_matches_naive_dft(self):
        rng = np.random.default_rng(11)
        sig = random_signal(rng, 256)
        np.testing.assert_allclose(
            fft(sig).bins, naive_dft(sig.samples), atol=1e-9
        )

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ValueError, match="power-of-two"):
            fft(IQSignal(np.ones(12)))

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        sig = random_signal(rng, 128)
        back = ifft(fft(sig))
        np.testing.assert_allclose(back.samples, sig.samples, atol=1e-9)

    def test_linearity(self):
        rng = np.random.default_rng(4)
        x = random_signal(rng, 64)
        y = random_signal(rng, 64)
        a, b = 2.0 - 1.0j, -0.5 + 3.0j
        combined = fft(IQSignal(a * x.samples + b * y.samples)).bins
        np.testing.assert_allclose(
            combined, a * fft(x).bins + b * fft(y).bins, atol=1e-9
        )

    def test_parseval(self):
        rng = np.random.default_rng(5)
        for n in (8, 64, 512):
            sig = random_signal(rng, n)
            time_e = energy(sig)
            freq_e = np.sum(np.abs(fft(sig).bins) ** 2) / n
            assert abs(time_e - freq_e) / time_e < 1e-9

    def test_spectrum_frequencies_cover_half_open_interval(self):
        f = Spectrum(np.ones(8)).frequencies()
        assert f.min() > -0.5
        assert f.max() == pytest.approx(0.5)


class TestEnergy:
    def test_zero_signal(self):
        assert energy(IQSignal(np.zeros(4))) == 0.0

    def test_unit_pair(self):
        assert energy(IQSignal([1.0, 1.0j])) == pytest.approx(2.0)

    def test_parseval_cross_check(self):
        rng = np.random.default_rng(6)
        sig = random_signal(rng, 64)
        freq_e = np.sum(np.abs(fft(sig).bins) ** 2) / 64
        assert energy(sig) == pytest.approx(freq_e, rel=1e-12)


class TestPsd:
    def test_single_tone_peak_location(self):
        n = 4096
        t = np.arange(n)
        sig = IQSignal(np.exp(2j * np.pi * 0.125 * t))
        db = psd(sig, nfft=256)
        freqs = psd_frequencies(256)
        peak_f = freqs[np.argmax(db)]
        assert abs(peak_f - 0.125) <= 1.0 / 256

    def test_white_noise_flat(self):
        rng = np.random.default_rng(7)
        n = 256 * 80  # >= 64 averaged segments at 50% overlap
        sig = IQSignal((rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2))
        db = psd(sig, nfft=256)
        assert db.max() - db.min() < 6.0  # flat within +-3 dB of mid level

    def test_zero_signal_floors(self):
        db = psd(IQSignal(np.zeros(1024)), nfft=256)
        assert np.all(np.isfinite(db))
        assert np.all(db == -300.0)

    def test_never_nan_for_finite_input(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            sig = random_signal(rng, 512)
            assert np.all(np.isfinite(psd(sig, nfft=128)))

    def test_peak_is_zero_db(self):
        rng = np.random.default_rng(9)
        assert psd(random_signal(rng, 1024), nfft=256).max() == pytest.approx(0.0)

    def test_short_signal_rejected(self):
        with pytest.raises(ValueError, match="shorter"):
            psd(IQSignal(np.ones(64)), nfft=256)

    def test_bad_nfft_rejected(self):
        with pytest.raises(ValueError, match="power of two"):
            psd(IQSignal(np.ones(1024)), nfft=100)

    def test_segment_cap_respected(self):
        rng = np.random.default_rng(10)
        sig = random_signal(rng, 2048)
        a = psd(sig, nfft=256, segments=2)
        b = psd(sig, nfft=256, segments=2)
        np.testing.assert_array_equal(a, b)


class TestOutOfBandRatio:
    def test_dc_tone_in_band(self):
        sig = IQSignal(np.ones(256))
        assert out_of_band_ratio(sig, BandSpec(0.1)) < 0.01

    def test_quarter_rate_tone_out_of_band(self):
        t = np.arange(256)
        sig = IQSignal(np.exp(2j * np.pi * 0.25 * t))
        assert out_of_band_ratio(sig, BandSpec(0.1)) > 0.99

    def test_shaped_qpsk_in_band(self):
        # numerically check the shaped waveform concentrates inside the
        # (1+roll_off)/(2*sps) main lobe
        rng = np.random.default_rng(12)
        const = constellation("qpsk")
        bits = rng.integers(0, 2, (64, 32)).astype(np.uint8)
        frames = shape_frames(map_bits(bits, const))
        sig = IQSignal(frames.ravel(), 8)
        band = occupied_band(8, 0.35)
        assert band.half_width == pytest.approx((1 + 0.35) / 16)
        assert out_of_band_ratio(sig, band) < 0.01

    def test_zero_signal_rejected(self):
        with pytest.raises(ValueError, match="all-zero"):
            out_of_band_ratio(IQSignal(np.zeros(64)), BandSpec(0.25))

    def test_in_band_plus_out_of_band_is_one(self):
        rng = np.random.default_rng(13)
        sig = random_signal(rng, 128)
        band = BandSpec(0.2)
        ratio = out_of_band_ratio(sig, band)
        bins = np.fft.fft(sig.samples)
        f = np.fft.fftfreq(128)
        in_band = np.sum(np.abs(bins[np.abs(f) <= band.half_width]) ** 2)
        total = np.sum(np.abs(bins) ** 2)
        assert ratio + in_band / total == pytest.approx(1.0, abs=1e-12)

    def test_pads_odd_lengths(self):
        t = np.arange(100)
        sig = IQSignal(np.exp(2j * np.pi * 0.25 * t))
        assert out_of_band_ratio(sig, BandSpec(0.1)) > 0.9

    def test_batch_split_matches_single(self):
        rng = np.random.default_rng(14)
        frames = rng.standard_normal((4, 128)) + 1j * rng.standard_normal((4, 128))
        band = BandSpec(0.15)
        out, total = spectral_energy_split(frames, band)
        singles = [
            out_of_band_ratio(IQSignal(f), band) * energy(IQSignal(f)) * 128
            for f in frames
        ]
        # per-frame spectral energies: sum |X_k|^2 = n * time energy
        assert out == pytest.approx(sum(singles), rel=1e-9)
        assert total == pytest.approx(128 * sum(energy(IQSignal(f)) for f in frames), rel=1e-12)


class TestBandSpec:
    def test_validates_range(self):
        with pytest.raises(ValueError):
            BandSpec(0.0)
        with pytest.raises(ValueError):
            BandSpec(0.6)


def test_psd_csv_export(tmp_path):
    rng = np.random.default_rng(15)
    sig = random_signal(rng, 1024)
    path = tmp_path / "psd.csv"
    export_psd_csv(path, sig, nfft=256)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "freq_normalized,psd_db"
    assert len(lines) == 257
    first_freq = float(lines[1].split(",")[0])
    assert first_freq == pytest.approx(-0.5)
    freqs = [float(l.split(",")[0]) for l in lines[1:]]
    assert freqs == sorted(freqs)
