"""Complex baseband signal container and spectral analysis.

Everything downstream (the modem, the channel, the loss functions, the
evaluation reports) moves complex baseband samples around; this module owns
the container type and the frequency-domain measurements made on it:
forward/inverse FFT, Welch power spectral density, total energy, and the
out-of-band power ratio used to score how "in-band" a perturbation is.

Frequency is always normalized to the sample rate (cycles/sample), so a
spectrum spans (-1/2, 1/2].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSD_FLOOR_DB = -300.0


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class IQSignal:
    """A finite sequence of complex baseband samples.

    Attributes:
        samples: complex ndarray, dimensionless baseband amplitude.
        samples_per_symbol: oversampling factor the waveform was built with.
    """

    samples: np.ndarray
    samples_per_symbol: int = 1

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("IQSignal requires a non-empty 1-D sample vector")
        if self.samples_per_symbol < 1:
            raise ValueError("samples_per_symbol must be a positive integer")
        if not np.all(np.isfinite(samples)):
            raise ValueError("IQSignal samples must be finite (no NaN/Inf)")

    @property
    def n(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class Spectrum:
    """Unnormalized DFT bins of a signal.

    Bin k corresponds to normalized frequency k/n, folded into (-1/2, 1/2]
    (see :meth:`frequencies`).
    """

    bins: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bins", np.asarray(self.bins, dtype=np.complex128))

    @property
    def n(self) -> int:
        return self.bins.size

    def frequencies(self) -> np.ndarray:
        """Normalized frequency of each bin, in (-1/2, 1/2]."""
        k = np.arange(self.n)
        f = k / self.n
        f[f > 0.5] -= 1.0
        return f

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.bins)


@dataclass(frozen=True)
class BandSpec:
    """Symmetric occupied band |f| <= half_width around DC (normalized freq)."""

    half_width: float

    def __post_init__(self):
        if not 0.0 < self.half_width <= 0.5:
            raise ValueError("band half_width must lie in (0, 0.5]")


def occupied_band(samples_per_symbol: int, roll_off: float) -> BandSpec:
    """Main-lobe band of a root-raised-cosine waveform: |f| <= (1+r)/(2*sps)."""
    return BandSpec((1.0 + roll_off) / (2.0 * samples_per_symbol))


def fft(signal: IQSignal) -> Spectrum:
    """Unnormalized forward DFT of a power-of-two-length signal.

    Lengths are restricted to powers of two; callers zero-pad. This keeps the
    transform cheap and the reference tests simple.
    """
    n = signal.n
    if not _is_power_of_two(n):
        raise ValueError(
            f"fft requires a power-of-two length, got {n}; zero-pad the signal first"
        )
    return Spectrum(np.fft.fft(signal.samples))


def ifft(spectrum: Spectrum, samples_per_symbol: int = 1) -> IQSignal:
    """Inverse of :func:`fft`: ifft(fft(x)) == x to double precision."""
    n = spectrum.n
    if not _is_power_of_two(n):
        raise ValueError(f"ifft requires a power-of-two length, got {n}")
    return IQSignal(np.fft.ifft(spectrum.bins), samples_per_symbol)


def energy(signal: IQSignal) -> float:
    """Total energy sum(|x_t|^2)."""
    return float(np.sum(np.abs(signal.samples) ** 2))


def psd(signal: IQSignal, nfft: int = 256, segments: int | None = None) -> np.ndarray:
    """Welch power spectral density in dB, normalized to a 0 dB peak.

    Averaged Hann-windowed periodograms with 50% overlap. The output is
    frequency-centered (DC in the middle) and has length ``nfft``. ``segments``
    caps the number of averaged segments; by default every segment the signal
    length allows is used. A zero signal produces a flat floor at
    ``PSD_FLOOR_DB`` rather than NaN.
    """
    if not _is_power_of_two(nfft):
        raise ValueError(f"nfft must be a power of two, got {nfft}")
    x = signal.samples
    if x.size < nfft:
        raise ValueError(f"signal length {x.size} is shorter than nfft {nfft}")
    hop = nfft // 2
    available = 1 + (x.size - nfft) // hop
    n_seg = available if segments is None else max(1, min(segments, available))
    window = np.hanning(nfft)
    win_power = np.sum(window**2)
    acc = np.zeros(nfft)
    for i in range(n_seg):
        seg = x[i * hop : i * hop + nfft] * window
        acc += np.abs(np.fft.fft(seg)) ** 2
    pxx = acc / (n_seg * win_power)
    pxx = np.fft.fftshift(pxx)
    peak = pxx.max()
    if peak <= 0.0:
        return np.full(nfft, PSD_FLOOR_DB)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(pxx / peak)
    return np.maximum(db, PSD_FLOOR_DB)


def psd_frequencies(nfft: int) -> np.ndarray:
    """Centered frequency axis for :func:`psd`, ascending from -0.5."""
    return np.fft.fftshift(np.fft.fftfreq(nfft))


def out_of_band_ratio(signal: IQSignal, band: BandSpec) -> float:
    """Fraction of spectral energy outside |f| <= band.half_width, in [0, 1].

    Non-power-of-two signals are zero-padded up to the next power of two
    before the transform (padding preserves total energy).
    """
    x = signal.samples
    total = np.sum(np.abs(x) ** 2)
    if total <= 0.0:
        raise ValueError("out-of-band ratio is undefined for an all-zero signal")
    n = x.size
    if not _is_power_of_two(n):
        n2 = 1 << (n - 1).bit_length()
        x = np.concatenate([x, np.zeros(n2 - n, dtype=np.complex128)])
        n = n2
    bins = np.fft.fft(x)
    f = np.fft.fftfreq(n)
    power = np.abs(bins) ** 2
    out = power[np.abs(f) > band.half_width].sum()
    return float(out / power.sum())


def spectral_energy_split(frames: np.ndarray, band: BandSpec) -> tuple[float, float]:
    """Aggregate (out-of-band, total) spectral energy over a batch of frames.

    ``frames`` is a 2-D complex array (n_frames, frame_len) with a
    power-of-two frame length. Used to report one out-of-band ratio for a
    whole population of perturbations.
    """
    frames = np.atleast_2d(frames)
    n = frames.shape[1]
    if not _is_power_of_two(n):
        raise ValueError(f"frame length must be a power of two, got {n}")
    bins = np.fft.fft(frames, axis=1)
    f = np.fft.fftfreq(n)
    power = np.abs(bins) ** 2
    out = float(power[:, np.abs(f) > band.half_width].sum())
    return out, float(power.sum())


def export_psd_csv(path, signal: IQSignal, nfft: int = 256, segments: int | None = None) -> None:
    """Write a PSD trace as CSV with columns ``freq_normalized,psd_db``."""
    db = psd(signal, nfft=nfft, segments=segments)
    freqs = psd_frequencies(nfft)
    with open(path, "w") as fh:
        fh.write("freq_normalized,psd_db\n")
        for f, v in zip(freqs, db):
            fh.write(f"{f:.10g},{v:.10g}\n")
