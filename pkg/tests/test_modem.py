"""Modem tests: labeling conventions, round trips, EVM, and BER references.

Closed-form BER values are checked against the complementary error function
directly, and one simulated point is held to the binomial error bar around
the Q-function value.
"""

import math

import numpy as np
import pytest
from scipy.special import erfc

from specdeceive.channel import awgn_per_frame, ebn0_to_snr
from specdeceive.modem import (
    DEFAULT_PULSE_SHAPE,
    PulseShape,
    SCHEMES,
    SYMBOLS_PER_FRAME,
    bit_error_rate,
    constellation,
    counted_symbol_slice,
    decide_symbols,
    demodulate,
    evm,
    map_bits,
    matched_filter_frames,
    matched_filter_matrix,
    modulate,
    shape_frames,
    theoretical_ber,
    unmap_symbols,
)
from specdeceive.signals import IQSignal


def q_ref(x: float) -> float:
    return 0.5 * erfc(x / math.sqrt(2.0))


class TestConstellations:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_sizes_and_unit_energy(self, scheme):
        c = constellation(scheme)
        assert c.size == 2**c.bits_per_symbol
        assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12

    @pytest.mark.parametrize("scheme", ["bpsk", "qpsk", "8psk"])
    def test_psk_gray_adjacency(self, scheme):
        c = constellation(scheme)
        m = c.size
        for i in range(m):
            a, b = c.labels[i], c.labels[(i + 1) % m]
            assert bin(a ^ b).count("1") == 1

    @pytest.mark.parametrize("scheme", ["16qam", "64qam"])
    def test_qam_axis_gray(self, scheme):
        c = constellation(scheme)
        # geometric neighbours along each axis differ in exactly one bit
        pts = c.points
        for i in range(c.size):
            for j in range(c.size):
                if i == j:
                    continue
                d = pts[i] - pts[j]
                gap = 2.0 / math.sqrt(10 if scheme == "16qam" else 42)
                if (abs(d.real) < 1e-9 and abs(abs(d.imag) - gap) < 1e-9) or (
                    abs(d.imag) < 1e-9 and abs(abs(d.real) - gap) < 1e-9
                ):
                    assert bin(c.labels[i] ^ c.labels[j]).count("1") == 1

    def test_qpsk_labeling_convention(self):
        c = constellation("qpsk")
        expected = {
            0b00: (1 + 1j) / math.sqrt(2),
            0b01: (-1 + 1j) / math.sqrt(2),
            0b11: (-1 - 1j) / math.sqrt(2),
            0b10: (1 - 1j) / math.sqrt(2),
        }
        for word, point in expected.items():
            idx = c.word_to_index[word]
            assert c.points[idx] == pytest.approx(point)

    def test_bpsk_convention(self):
        c = constellation("bpsk")
        assert c.points[c.word_to_index[0]] == pytest.approx(1.0)
        assert c.points[c.word_to_index[1]] == pytest.approx(-1.0)

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="bpsk,qpsk,8psk,16qam,64qam"):
            constellation("fsk")


class TestPulseShape:
    def test_taps_symmetric_unit_energy(self):
        shape = PulseShape()
        taps = shape.taps
        np.testing.assert_allclose(taps, taps[::-1], atol=1e-12)
        assert np.sum(taps**2) == pytest.approx(1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            PulseShape(roll_off=1.5)
        with pytest.raises(ValueError):
            PulseShape(kind="rect")


class TestModulateDemodulate:
    def test_qpsk_symbol_convention(self):
        sig = modulate(np.array([0, 0]), constellation("qpsk"))
        est = matched_filter_frames(sig.samples)
        assert est[0] == pytest.approx((1 + 1j) / math.sqrt(2), abs=1e-3)

    def test_bpsk_symbols(self):
        sig = modulate(np.array([0, 1]), constellation("bpsk"))
        est = matched_filter_frames(sig.samples)
        np.testing.assert_allclose(est, [1.0, -1.0], atol=1e-2)

    @pytest.mark.parametrize("scheme", SCHEMES)
    @pytest.mark.parametrize("n_symbols", [8, 16, 64])
    def test_noiseless_round_trip(self, scheme, n_symbols):
        rng = np.random.default_rng(hash(scheme) % 2**31)
        c = constellation(scheme)
        bits = rng.integers(0, 2, n_symbols * c.bits_per_symbol).astype(np.uint8)
        out = demodulate(modulate(bits, c), c)
        np.testing.assert_array_equal(bits, out)

    def test_indivisible_bit_count_rejected(self):
        with pytest.raises(ValueError, match="divisible"):
            modulate(np.array([0, 1, 0]), constellation("qpsk"))

    def test_off_grid_length_rejected(self):
        c = constellation("qpsk")
        sig = IQSignal(np.ones(100), 8)
        with pytest.raises(ValueError, match="symbol grid"):
            demodulate(sig, c)

    def test_symbol_energy_near_unity(self):
        rng = np.random.default_rng(21)
        c = constellation("qpsk")
        bits = rng.integers(0, 2, (50, 32)).astype(np.uint8)
        frames = shape_frames(map_bits(bits, c))
        est = matched_filter_frames(frames)
        keep = counted_symbol_slice(SYMBOLS_PER_FRAME)
        assert abs(np.mean(np.abs(est[:, keep]) ** 2) - 1.0) < 0.02

    def test_frame_power_near_unity_constant_modulus(self):
        rng = np.random.default_rng(22)
        for scheme in ("bpsk", "qpsk", "8psk"):
            c = constellation(scheme)
            bits = rng.integers(0, 2, (20, 16 * c.bits_per_symbol)).astype(np.uint8)
            frames = shape_frames(map_bits(bits, c))
            powers = np.mean(np.abs(frames) ** 2, axis=1)
            assert np.all(np.abs(powers - 1.0) < 0.05)

    def test_small_scaling_does_not_flip_decisions(self):
        rng = np.random.default_rng(23)
        c = constellation("16qam")
        bits = rng.integers(0, 2, 64).astype(np.uint8)
        sig = modulate(bits, c)
        scaled = IQSignal(sig.samples * 0.999, sig.samples_per_symbol)
        np.testing.assert_array_equal(demodulate(scaled, c), bits)

    def test_decide_unmap_inverse(self):
        rng = np.random.default_rng(24)
        c = constellation("64qam")
        bits = rng.integers(0, 2, (4, 96)).astype(np.uint8)
        sym = map_bits(bits, c)
        np.testing.assert_array_equal(unmap_symbols(decide_symbols(sym, c), c), bits)


class TestBitErrorRate:
    def test_identical(self):
        assert bit_error_rate([0, 1, 1, 0], [0, 1, 1, 0]) == 0.0

    def test_complement(self):
        assert bit_error_rate([0, 1, 1, 0], [1, 0, 0, 1]) == 1.0

    def test_quarter(self):
        assert bit_error_rate([0, 1, 1, 0], [0, 1, 0, 0]) == 0.25

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="lengths differ"):
            bit_error_rate([0, 1], [0, 1, 1])

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError, match="only 0 and 1"):
            bit_error_rate([0, 2], [0, 1])


class TestEvm:
    def _frame(self, rng):
        c = constellation("qpsk")
        bits = rng.integers(0, 2, 32).astype(np.uint8)
        return modulate(bits, c)

    def test_zero_for_identical(self):
        sig = self._frame(np.random.default_rng(31))
        assert evm(sig, sig) == 0.0

    def test_constant_symbol_offset(self):
        # perturb every symbol by the same complex constant c -> EVM == |c|
        rng = np.random.default_rng(32)
        sig = self._frame(rng)
        c = 0.3 - 0.4j
        offset_frame = shape_frames(np.full(SYMBOLS_PER_FRAME, c))
        perturbed = IQSignal(sig.samples + offset_frame, sig.samples_per_symbol)
        assert evm(sig, perturbed) == pytest.approx(abs(c), rel=1e-6)

    def test_homogeneity(self):
        rng = np.random.default_rng(33)
        sig = self._frame(rng)
        pert = rng.standard_normal(sig.n) + 1j * rng.standard_normal(sig.n)
        one = evm(sig, IQSignal(sig.samples + pert, 8))
        two = evm(sig, IQSignal(sig.samples + 2.0 * pert, 8))
        assert two == pytest.approx(2.0 * one, rel=1e-9)
        assert one >= 0.0

    def test_length_mismatch(self):
        sig = self._frame(np.random.default_rng(34))
        with pytest.raises(ValueError, match="lengths differ"):
            evm(sig, IQSignal(np.ones(64), 8))


class TestTheoreticalBer:
    def test_qpsk_10db(self):
        expected = q_ref(math.sqrt(2.0 * 10.0))
        assert theoretical_ber("qpsk", 10.0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(3.87e-6, rel=0.01)

    def test_qpsk_0db(self):
        expected = q_ref(math.sqrt(2.0))
        assert theoretical_ber("qpsk", 0.0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(7.86e-2, rel=0.01)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_monotone_to_zero(self, scheme):
        grid = np.arange(-2.0, 30.0, 2.0)
        ber = theoretical_ber(scheme, grid)
        assert np.all(np.diff(ber) < 0)
        assert theoretical_ber(scheme, 60.0) < 1e-12


def test_simulated_qpsk_ber_matches_theory():
    # one Monte-Carlo point at Eb/N0 = 4 dB against the Q-function oracle
    from specdeceive.harness import simulate_clean_ber

    ebn0 = 4.0
    expected = q_ref(math.sqrt(2.0 * 10 ** (ebn0 / 10.0)))
    ber, n_bits = simulate_clean_ber("qpsk", ebn0, min_bits=10**6, seed=1)
    sigma = math.sqrt(expected * (1 - expected) / n_bits)
    assert abs(ber - expected) < 3.0 * sigma


def test_matched_filter_cancels_shaping():
    # residual inter-symbol interference of the shape->matched-filter cascade
    # comes only from tap truncation and stays tiny
    from specdeceive.modem import shaping_matrix

    cascade = matched_filter_matrix(SYMBOLS_PER_FRAME) @ shaping_matrix(SYMBOLS_PER_FRAME)
    np.testing.assert_allclose(cascade, np.eye(SYMBOLS_PER_FRAME), atol=5e-3)
