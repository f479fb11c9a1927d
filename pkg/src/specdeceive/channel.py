"""AWGN channel with per-frame SNR draws and SNR/EbN0 conversions.

SNR is defined per complex sample against the measured mean power of the
input, which keeps the definition unambiguous when the transmitted signal
carries a perturbation of varying strength. Calibrated simulations (BER vs
theory) can pin the reference power explicitly instead.
"""

from __future__ import annotations

import numpy as np


def awgn(samples: np.ndarray, snr_db: float, rng: np.random.Generator,
         signal_power: float | None = None) -> np.ndarray:
    """Add circular complex Gaussian noise at the requested per-sample SNR.

    Noise variance is ``P / 10**(snr_db/10)`` where ``P`` is the measured
    mean |x|^2 of the input (or ``signal_power`` when given, for calibrated
    sweeps). Works on a single complex vector or a batch of frame rows; one
    noise field is drawn for the whole array.
    """
    x = np.asarray(samples)
    if signal_power is None:
        signal_power = float(np.mean(np.abs(x) ** 2))
    if signal_power <= 0.0:
        raise ValueError("awgn requires a nonzero input signal")
    sigma2 = signal_power / 10.0 ** (snr_db / 10.0)
    scale = np.sqrt(sigma2 / 2.0)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + scale * noise


def awgn_per_frame(frames: np.ndarray, snr_db: np.ndarray, rng: np.random.Generator,
                   signal_power: float | None = None) -> np.ndarray:
    """AWGN over frame rows with an independent SNR value per row."""
    frames = np.asarray(frames)
    snr_db = np.asarray(snr_db, dtype=float)
    if np.ndim(frames) != 2 or snr_db.shape != (frames.shape[0],):
        raise ValueError("expected (n_frames, n) frames and one SNR per frame")
    if signal_power is None:
        power = np.mean(np.abs(frames) ** 2, axis=1)
    else:
        power = np.full(frames.shape[0], float(signal_power))
    if np.any(power <= 0.0):
        raise ValueError("awgn requires nonzero frames")
    sigma2 = power / 10.0 ** (snr_db / 10.0)
    scale = np.sqrt(sigma2 / 2.0)[:, None]
    noise = rng.standard_normal(frames.shape) + 1j * rng.standard_normal(frames.shape)
    return frames + scale * noise


def snr_to_ebn0(snr_db: float, sps: int, bits_per_symbol: int) -> float:
    """Per-sample SNR (dB) to Eb/N0 (dB) for an sps-oversampled waveform."""
    if sps < 1 or bits_per_symbol < 1:
        raise ValueError("sps and bits_per_symbol must be >= 1")
    return float(snr_db + 10.0 * np.log10(sps) - 10.0 * np.log10(bits_per_symbol))


def ebn0_to_snr(ebn0_db: float, sps: int, bits_per_symbol: int) -> float:
    """Inverse of :func:`snr_to_ebn0`."""
    if sps < 1 or bits_per_symbol < 1:
        raise ValueError("sps and bits_per_symbol must be >= 1")
    return float(ebn0_db - 10.0 * np.log10(sps) + 10.0 * np.log10(bits_per_symbol))


def draw_snr(rng: np.random.Generator, lo_db: float, hi_db: float, size=None):
    """Uniform SNR draw(s) from [lo_db, hi_db]."""
    if lo_db > hi_db:
        raise ValueError(f"empty SNR interval [{lo_db}, {hi_db}]")
    if lo_db == hi_db:
        return lo_db if size is None else np.full(size, float(lo_db))
    return rng.uniform(lo_db, hi_db, size=size)
