"""Digital modem: bit mapping, pulse shaping, demodulation, BER and EVM.

Five linear modulation schemes are supported (BPSK, QPSK, 8PSK, 16QAM,
64QAM), each with a fixed Gray labeling and unit average symbol energy.
Bit vectors are plain uint8 ndarrays of 0/1 values.

Waveforms are built frame-synchronously: k-bit groups map to symbols, the
symbol sequence is upsampled and shaped with a root-raised-cosine filter
applied cyclically, so a frame is self-contained (no edge transients leave
the frame and mean sample power stays at 1). The receiver matched-filters,
samples at the symbol instants, and makes minimum-distance hard decisions;
there is no timing or carrier recovery.

Labeling conventions (documented so waveforms are reproducible):
  * PSK: point i sits at angle offset + 2*pi*i/M and carries the Gray code
    of i. BPSK maps 0 -> +1, 1 -> -1; QPSK uses offset pi/4 so
    00 -> (+1+1j)/sqrt(2), 01 -> (-1+1j)/sqrt(2), 11 -> (-1-1j)/sqrt(2),
    10 -> (+1-1j)/sqrt(2); 8PSK starts at angle 0.
  * Square QAM: the first half of the bit word selects the I level, the
    second half the Q level, each axis Gray-coded from the positive end
    (so an all-zeros word lands in the first quadrant, matching QPSK).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import erfc

from .signals import IQSignal

SCHEMES = ("bpsk", "qpsk", "8psk", "16qam", "64qam")

# Frame standard used throughout: 16 symbols at 8 samples/symbol = 128 samples.
DEFAULT_SPS = 8
DEFAULT_ROLL_OFF = 0.35
DEFAULT_SPAN = 8
SYMBOLS_PER_FRAME = 16
FRAME_LEN = SYMBOLS_PER_FRAME * DEFAULT_SPS

# Symbols excluded from BER accounting at each frame edge.
EDGE_TRIM_SYMBOLS = DEFAULT_SPAN // 2


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def q_function(x) -> np.ndarray:
    """Gaussian tail probability Q(x) = 0.5*erfc(x/sqrt(2))."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


@dataclass(frozen=True)
class Constellation:
    """Symbol map for one modulation scheme.

    ``points[i]`` is the i-th geometric point and ``labels[i]`` its bit word;
    ``word_to_index`` inverts the labeling. Average point energy is 1.
    """

    scheme: str
    points: np.ndarray
    bits_per_symbol: int
    labels: np.ndarray
    word_to_index: np.ndarray = field(init=False)

    def __post_init__(self):
        m = 1 << self.bits_per_symbol
        if self.points.size != m or self.labels.size != m:
            raise ValueError("constellation size must be 2**bits_per_symbol")
        inv = np.empty(m, dtype=np.int64)
        inv[self.labels] = np.arange(m)
        object.__setattr__(self, "word_to_index", inv)

    @property
    def size(self) -> int:
        return self.points.size


def _psk(scheme: str, k: int, angle_offset: float) -> Constellation:
    m = 1 << k
    i = np.arange(m)
    points = np.exp(1j * (angle_offset + 2.0 * np.pi * i / m))
    labels = np.array([_gray(x) for x in i], dtype=np.int64)
    return Constellation(scheme, points, k, labels)


def _square_qam(scheme: str, k: int) -> Constellation:
    ka = k // 2
    levels_per_axis = 1 << ka
    # Descending PAM levels so the all-zeros Gray word takes the most positive
    # level on each axis, consistent with BPSK/QPSK sign conventions.
    desc = np.arange(levels_per_axis - 1, -levels_per_axis, -2, dtype=float)
    norm = np.sqrt(2.0 * np.mean(desc**2))
    points = np.empty(levels_per_axis**2, dtype=np.complex128)
    labels = np.empty(levels_per_axis**2, dtype=np.int64)
    for pi in range(levels_per_axis):
        for pq in range(levels_per_axis):
            idx = pi * levels_per_axis + pq
            points[idx] = (desc[pi] + 1j * desc[pq]) / norm
            labels[idx] = (_gray(pi) << ka) | _gray(pq)
    return Constellation(scheme, points, k, labels)


@lru_cache(maxsize=None)
def constellation(scheme: str) -> Constellation:
    """Constellation table for one of the five supported schemes."""
    scheme = scheme.lower()
    if scheme == "bpsk":
        return _psk("bpsk", 1, 0.0)
    if scheme == "qpsk":
        return _psk("qpsk", 2, np.pi / 4.0)
    if scheme == "8psk":
        return _psk("8psk", 3, 0.0)
    if scheme == "16qam":
        return _square_qam("16qam", 4)
    if scheme == "64qam":
        return _square_qam("64qam", 6)
    raise ValueError(f"unknown scheme {scheme!r}; valid: {','.join(SCHEMES)}")


def _rrc_impulse(roll_off: float, span_symbols: int, sps: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps, length span*sps + 1, symmetric."""
    n = span_symbols * sps + 1
    t = (np.arange(n) - (n - 1) / 2.0) / sps
    b = roll_off
    h = np.empty(n)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 + b * (4.0 / np.pi - 1.0)
        elif abs(abs(ti) - 1.0 / (4.0 * b)) < 1e-9:
            h[i] = (b / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * b))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * b))
            )
        else:
            num = np.sin(np.pi * ti * (1.0 - b)) + 4.0 * b * ti * np.cos(
                np.pi * ti * (1.0 + b)
            )
            den = np.pi * ti * (1.0 - (4.0 * b * ti) ** 2)
            h[i] = num / den
    return h / np.sqrt(np.sum(h**2))


@dataclass(frozen=True)
class PulseShape:
    """Root-raised-cosine shaping description. Taps are symmetric, unit energy."""

    roll_off: float = DEFAULT_ROLL_OFF
    span_symbols: int = DEFAULT_SPAN
    sps: int = DEFAULT_SPS
    kind: str = "rrc"

    def __post_init__(self):
        if self.kind != "rrc":
            raise ValueError("only root-raised-cosine shaping is supported")
        if not 0.0 < self.roll_off < 1.0:
            raise ValueError("roll_off must lie in (0, 1)")
        if self.span_symbols < 1 or self.sps < 1:
            raise ValueError("span_symbols and sps must be positive")

    @property
    def taps(self) -> np.ndarray:
        return _rrc_impulse(self.roll_off, self.span_symbols, self.sps)


DEFAULT_PULSE_SHAPE = PulseShape()


@lru_cache(maxsize=None)
def _shaping_matrices(n_symbols: int, roll_off: float, span: int, sps: int):
    """(G, M): cyclic shaping matrix and its matched-filter inverse.

    ``G`` is (n_samples, n_symbols) with G[:, k] the sqrt(sps)-scaled pulse of
    symbol k placed cyclically at sample k*sps; sqrt(sps) keeps mean sample
    power equal to mean symbol energy. ``M = G.T / sps`` matched-filters and
    decimates, so M @ G ~= I (residual ISI comes only from tap truncation).
    """
    h = _rrc_impulse(roll_off, span, sps)
    n = n_symbols * sps
    center = (h.size - 1) // 2
    h_circ = np.zeros(n)
    for i, v in enumerate(h):
        h_circ[(i - center) % n] += v
    g = np.empty((n, n_symbols))
    for k in range(n_symbols):
        g[:, k] = np.roll(h_circ, k * sps)
    g *= np.sqrt(sps)
    return g, g.T / sps


def shaping_matrix(n_symbols: int, shape: PulseShape = DEFAULT_PULSE_SHAPE) -> np.ndarray:
    return _shaping_matrices(n_symbols, shape.roll_off, shape.span_symbols, shape.sps)[0]


def matched_filter_matrix(n_symbols: int, shape: PulseShape = DEFAULT_PULSE_SHAPE) -> np.ndarray:
    return _shaping_matrices(n_symbols, shape.roll_off, shape.span_symbols, shape.sps)[1]


def validate_bits(bits) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bit vectors may contain only 0 and 1")
    return bits.astype(np.uint8)


def map_bits(bits: np.ndarray, const: Constellation) -> np.ndarray:
    """Gray-map bit rows (..., m*k) to symbol rows (..., m)."""
    bits = validate_bits(bits)
    k = const.bits_per_symbol
    if bits.shape[-1] % k != 0:
        raise ValueError(
            f"bit count {bits.shape[-1]} not divisible by {k} bits/symbol"
        )
    words = bits.reshape(*bits.shape[:-1], -1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    idx = const.word_to_index[words @ weights]
    return const.points[idx]


def unmap_symbols(indices: np.ndarray, const: Constellation) -> np.ndarray:
    """Point indices (..., m) back to bit rows (..., m*k)."""
    k = const.bits_per_symbol
    words = const.labels[indices]
    shifts = np.arange(k - 1, -1, -1)
    bits = (words[..., None] >> shifts) & 1
    return bits.reshape(*indices.shape[:-1], -1).astype(np.uint8)


def decide_symbols(estimates: np.ndarray, const: Constellation) -> np.ndarray:
    """Minimum-distance point index for each symbol estimate."""
    d = np.abs(estimates[..., None] - const.points) ** 2
    return np.argmin(d, axis=-1)


def shape_frames(symbols: np.ndarray, shape: PulseShape = DEFAULT_PULSE_SHAPE) -> np.ndarray:
    """Pulse-shape symbol rows (..., m) into sample rows (..., m*sps)."""
    g = shaping_matrix(symbols.shape[-1], shape)
    return symbols @ g.T


def matched_filter_frames(frames: np.ndarray, shape: PulseShape = DEFAULT_PULSE_SHAPE) -> np.ndarray:
    """Matched-filter sample rows (..., n) down to symbol estimates (..., n/sps)."""
    n = frames.shape[-1]
    if n % shape.sps != 0:
        raise ValueError(f"frame length {n} does not sit on a {shape.sps}-sample symbol grid")
    m = matched_filter_matrix(n // shape.sps, shape)
    return frames @ m.T


def modulate(bits, const: Constellation, shape: PulseShape = DEFAULT_PULSE_SHAPE) -> IQSignal:
    """Map a bit vector to a pulse-shaped baseband frame."""
    bits = validate_bits(np.atleast_1d(bits))
    symbols = map_bits(bits, const)
    return IQSignal(shape_frames(symbols, shape), shape.sps)


def demodulate(signal: IQSignal, const: Constellation, shape: PulseShape = DEFAULT_PULSE_SHAPE) -> np.ndarray:
    """Recover hard-decision bits from a frame produced by :func:`modulate`."""
    est = matched_filter_frames(signal.samples, shape)
    idx = decide_symbols(est, const)
    return unmap_symbols(idx, const)


def bit_error_rate(tx_bits, rx_bits) -> float:
    """Fraction of differing bits between two equal-length bit vectors."""
    tx = validate_bits(tx_bits).ravel()
    rx = validate_bits(rx_bits).ravel()
    if tx.size != rx.size:
        raise ValueError(f"bit vector lengths differ: {tx.size} vs {rx.size}")
    if tx.size == 0:
        raise ValueError("bit vectors are empty")
    return float(np.mean(tx != rx))


def evm(clean: IQSignal, perturbed: IQSignal, shape: PulseShape = DEFAULT_PULSE_SHAPE) -> float:
    """Mean symbol-instant error magnitude between two aligned frames.

    Both signals are matched-filtered and decimated to the symbol grid; the
    reported value is the mean absolute difference of the symbol estimates
    (the matched filter is linear, so the difference signal is filtered
    directly).
    """
    if clean.n != perturbed.n:
        raise ValueError(f"signal lengths differ: {clean.n} vs {perturbed.n}")
    diff = perturbed.samples - clean.samples
    sym_err = matched_filter_frames(diff, shape)
    return float(np.mean(np.abs(sym_err)))


def theoretical_ber(scheme: str, ebn0_db) -> np.ndarray | float:
    """Closed-form (Gray-coded, AWGN) bit error rate reference per scheme.

    BPSK/QPSK are exact; 8PSK and square QAM use the standard nearest-
    neighbour Gray approximations.
    """
    g = 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)
    scheme = scheme.lower()
    if scheme in ("bpsk", "qpsk"):
        ber = q_function(np.sqrt(2.0 * g))
    elif scheme == "8psk":
        k = 3
        ber = (2.0 / k) * q_function(np.sqrt(2.0 * k * g) * np.sin(np.pi / 8.0))
    elif scheme in ("16qam", "64qam"):
        m = 16 if scheme == "16qam" else 64
        k = int(np.log2(m))
        ber = (4.0 / k) * (1.0 - 1.0 / np.sqrt(m)) * q_function(
            np.sqrt(3.0 * k * g / (m - 1.0))
        )
    else:
        raise ValueError(f"unknown scheme {scheme!r}; valid: {','.join(SCHEMES)}")
    if np.isscalar(ebn0_db):
        return float(ber)
    return ber


def counted_symbol_slice(n_symbols: int) -> slice:
    """Symbols kept for BER accounting (filter edge symbols trimmed)."""
    trim = min(EDGE_TRIM_SYMBOLS, (n_symbols - 1) // 2)
    return slice(trim, n_symbols - trim)
