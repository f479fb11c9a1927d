"""Experiment harness: datasets, classifier/attack training, and evaluation.

Everything here is deterministic given the config seed: child random streams
are derived per purpose (init, shuffling, channel draws, evaluation points),
so two runs of the same config produce identical models, reports, and CSVs.

Scale defaults target desk runs: 2000 frames per scheme, batch 32, Adam at
1e-3, SNR drawn uniformly per frame from [0, 20] dB.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import nn
from .adversary import (
    AmcModel,
    AmnModel,
    LossWeights,
    classify_batch,
    graph_adversarial,
    graph_communication,
    graph_third_loss,
    scheme_index,
)
from .autodiff import Tensor
from .channel import awgn_per_frame, draw_snr, ebn0_to_snr
from .modem import (
    DEFAULT_PULSE_SHAPE,
    FRAME_LEN,
    SCHEMES,
    SYMBOLS_PER_FRAME,
    constellation,
    counted_symbol_slice,
    decide_symbols,
    map_bits,
    matched_filter_frames,
    matched_filter_matrix,
    shape_frames,
    theoretical_ber,
    unmap_symbols,
)
from .signals import BandSpec, IQSignal, occupied_band, psd, psd_frequencies, spectral_energy_split

DEFAULT_SNR_GRID = tuple(range(0, 21, 2))
DEFAULT_FRAMES_PER_EPOCH = 2000
DEFAULT_BATCH_SIZE = 32
DEFAULT_LEARNING_RATE = 1e-3
DEFAULT_AMC_EPOCHS = 50
DEFAULT_AMN_EPOCHS = 30
VALIDATION_FRACTION = 0.1


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0x7FFFFFFF, *tags])


@dataclass(frozen=True)
class TrainingConfig:
    """Knobs shared by classifier and attack training."""

    scheme: str = "qpsk"
    frames_per_epoch: int = DEFAULT_FRAMES_PER_EPOCH
    epochs: int = DEFAULT_AMN_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_LEARNING_RATE
    snr_lo_db: float = 0.0
    snr_hi_db: float = 20.0
    weights: LossWeights | None = None
    seed: int = 0
    noiseless_eavesdropper: bool = False

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; valid: {','.join(SCHEMES)}")
        for name in ("frames_per_epoch", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.snr_lo_db > self.snr_hi_db:
            raise ValueError("snr_lo_db must not exceed snr_hi_db")


# ---------------------------------------------------------------------------
# datasets


def generate_dataset(scheme: str, n_frames: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random bits and their modulated frames: (n_frames, bits) uint8 and
    (n_frames, FRAME_LEN) complex rows. Deterministic per seed."""
    if n_frames <= 0:
        raise ValueError("n_frames must be positive")
    const = constellation(scheme)
    rng = _rng(seed, 1, scheme_index(scheme))
    bits = rng.integers(0, 2, size=(n_frames, SYMBOLS_PER_FRAME * const.bits_per_symbol),
                        dtype=np.uint8)
    frames = shape_frames(map_bits(bits, const))
    return bits, frames


def save_dataset(out_dir, scheme: str, n_frames: int, seed: int) -> dict:
    """Generate and persist a dataset plus its manifest; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bits, frames = generate_dataset(scheme, n_frames, seed)
    np.save(out / "bits.npy", bits)
    np.save(out / "frames.npy", frames)
    manifest = {
        "scheme": scheme,
        "frames": int(n_frames),
        "seed": int(seed),
        "frame_len": FRAME_LEN,
        "samples_per_symbol": DEFAULT_PULSE_SHAPE.sps,
        "bits_per_frame": int(bits.shape[1]),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def load_dataset(in_dir) -> tuple[np.ndarray, np.ndarray, dict]:
    src = Path(in_dir)
    with open(src / "manifest.json") as fh:
        manifest = json.load(fh)
    bits = np.load(src / "bits.npy")
    frames = np.load(src / "frames.npy")
    return bits, frames, manifest


# ---------------------------------------------------------------------------
# BER accounting


def _counted_ber(tx_bits: np.ndarray, rx_bits: np.ndarray, bits_per_symbol: int) -> tuple[float, int]:
    """BER over the kept (non-edge) symbols of each frame; returns (ber, n)."""
    n_sym = tx_bits.shape[1] // bits_per_symbol
    keep = counted_symbol_slice(n_sym)
    tx = tx_bits.reshape(-1, n_sym, bits_per_symbol)[:, keep, :]
    rx = rx_bits.reshape(-1, n_sym, bits_per_symbol)[:, keep, :]
    n = tx.size
    return float(np.mean(tx != rx)), n


def _demodulate_frames(rx: np.ndarray, const) -> np.ndarray:
    est = matched_filter_frames(rx)
    return unmap_symbols(decide_symbols(est, const), const)


def simulate_clean_ber(scheme: str, ebn0_db: float, min_bits: int = 100_000,
                       seed: int = 0) -> tuple[float, int]:
    """Monte-Carlo BER of the clean link at a pinned Eb/N0.

    Noise is calibrated against the nominal unit frame power (rather than
    per-frame measured power) so the result is comparable to the closed-form
    reference curves.
    """
    const = constellation(scheme)
    k = const.bits_per_symbol
    counted_per_frame = (counted_symbol_slice(SYMBOLS_PER_FRAME).stop
                         - counted_symbol_slice(SYMBOLS_PER_FRAME).start) * k
    n_frames = math.ceil(min_bits / counted_per_frame)
    bits, frames = generate_dataset(scheme, n_frames, seed)
    snr_db = ebn0_to_snr(ebn0_db, DEFAULT_PULSE_SHAPE.sps, k)
    rng = _rng(seed, 3)
    rx = awgn_per_frame(frames, np.full(n_frames, snr_db), rng, signal_power=1.0)
    rx_bits = _demodulate_frames(rx, const)
    return _counted_ber(bits, rx_bits, k)


# ---------------------------------------------------------------------------
# classifier training


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n - batch_size + 1, batch_size):
        yield order[start : start + batch_size]


def train_amc(config: TrainingConfig, data=None, log=None) -> tuple[AmcModel, list[dict]]:
    """Train the five-scheme classifier on noisy frames of every scheme.

    ``frames_per_epoch`` counts frames per scheme. Each epoch re-draws the
    per-frame SNR uniformly from the configured range, so the model sees
    fresh noise at every pass. ``data`` may supply pregenerated
    ``(frames, labels)`` arrays. Returns the model and per-epoch history
    rows (epoch, loss, val_accuracy).
    """
    if data is not None:
        frames, labels = data
        labels = np.asarray(labels, dtype=np.int64)
    else:
        per_class = config.frames_per_epoch
        all_frames, all_labels = [], []
        for scheme in SCHEMES:
            _, scheme_frames = generate_dataset(scheme, per_class, config.seed)
            all_frames.append(scheme_frames)
            all_labels.append(np.full(per_class, scheme_index(scheme), dtype=np.int64))
        frames = np.concatenate(all_frames)
        labels = np.concatenate(all_labels)

    split_rng = _rng(config.seed, 5)
    order = split_rng.permutation(frames.shape[0])
    n_val = max(1, int(VALIDATION_FRACTION * frames.shape[0]))
    val_idx, train_idx = order[:n_val], order[n_val:]

    model = AmcModel(_rng(config.seed, 7))
    opt = nn.Adam(model.parameters(), lr=config.learning_rate)
    shuffle_rng = _rng(config.seed, 9)
    noise_rng = _rng(config.seed, 11)
    val_rng = _rng(config.seed, 13)
    history = []
    for epoch in range(config.epochs):
        losses = []
        for batch in _epoch_batches(train_idx.size, config.batch_size, shuffle_rng):
            idx = train_idx[batch]
            snrs = draw_snr(noise_rng, config.snr_lo_db, config.snr_hi_db, size=idx.size)
            noisy = awgn_per_frame(frames[idx], snrs, noise_rng)
            x = Tensor(ad.complex_to_2ch(noisy, dtype=np.float32))
            opt.zero_grad()
            with ad.tape() as t:
                probs = model.probabilities(x)
                loss = ad.cross_entropy(probs, labels[idx])
            t.backward(loss)
            opt.step()
            losses.append(loss.item())
        val_snrs = draw_snr(val_rng, config.snr_lo_db, config.snr_hi_db, size=val_idx.size)
        val_noisy = awgn_per_frame(frames[val_idx], val_snrs, val_rng)
        val_probs = classify_batch(model, val_noisy)
        val_acc = float(np.mean(np.argmax(val_probs, axis=1) == labels[val_idx]))
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "val_accuracy": val_acc}
        history.append(row)
        if log:
            log(f"amc epoch {epoch}: loss {row['loss']:.4f} val_acc {val_acc:.3f}")
    return model, history


def amc_accuracy_by_snr(model: AmcModel, snr_grid, frames_per_scheme: int = 200,
                        seed: int = 1) -> list[tuple[float, float]]:
    """Held-out accuracy of a classifier at each SNR point (fresh frames)."""
    rows = []
    for i, snr in enumerate(sorted(snr_grid)):
        correct = total = 0
        for scheme in SCHEMES:
            _, frames = generate_dataset(scheme, frames_per_scheme, seed + 1000)
            rng = _rng(seed, 15, i, scheme_index(scheme))
            noisy = awgn_per_frame(frames, np.full(frames.shape[0], float(snr)), rng)
            probs = classify_batch(model, noisy)
            correct += int(np.sum(np.argmax(probs, axis=1) == scheme_index(scheme)))
            total += frames.shape[0]
        rows.append((float(snr), correct / total))
    return rows


# ---------------------------------------------------------------------------
# attack training


def train_amn(config: TrainingConfig, amc: AmcModel, data=None,
              log=None) -> tuple[AmnModel, list[dict]]:
    """Train a perturbation network against a frozen classifier.

    Per batch: the generator produces a perturbation; the eavesdropper branch
    classifies the adversarial frame through its own channel draw; the
    receiver branch demodulates an independent channel draw to measure BER,
    which scales the differentiable EVM term; the third branch scores
    perturbation power or spectral shape. Zero-weighted branches are skipped
    entirely (their history column reads 0). ``data`` may supply a
    pregenerated ``(bits, frames)`` pair for the configured scheme.
    """
    if config.weights is None:
        raise ValueError("attack training requires LossWeights in the config")
    weights = config.weights
    const = constellation(config.scheme)
    k = const.bits_per_symbol
    true_idx = scheme_index(config.scheme)
    mf = matched_filter_matrix(SYMBOLS_PER_FRAME)

    if data is not None:
        bits, frames = data
    else:
        bits, frames = generate_dataset(config.scheme, config.frames_per_epoch, config.seed)
    checksum_before = nn.parameter_checksum(amc)
    amc.freeze()
    amn = AmnModel(_rng(config.seed, 21))
    opt = nn.Adam(amn.parameters(), lr=config.learning_rate)
    shuffle_rng = _rng(config.seed, 23)
    chan_rng = _rng(config.seed, 25)

    history = []
    for epoch in range(config.epochs):
        sums = np.zeros(4)
        n_batches = 0
        for batch in _epoch_batches(frames.shape[0], config.batch_size, shuffle_rng):
            clean = frames[batch]
            x2 = Tensor(ad.complex_to_2ch(clean, dtype=np.float32))
            opt.zero_grad()
            with ad.tape() as t:
                pert_t = amn.forward(x2)
                adv = clean + ad.ch2_to_complex(pert_t.data.astype(np.float64))
                l_adv = l_comm = l_third = None
                if weights.alpha > 0.0:
                    if config.noiseless_eavesdropper:
                        noise = 0.0
                    else:
                        snrs = draw_snr(chan_rng, config.snr_lo_db, config.snr_hi_db,
                                        size=clean.shape[0])
                        noise = awgn_per_frame(adv, snrs, chan_rng) - adv
                    # eavesdropper sees pert + (clean + noise); only pert carries grad
                    eve_const = ad.complex_to_2ch(clean + noise, dtype=np.float32)
                    probs = amc.probabilities(ad.add_const(pert_t, eve_const))
                    l_adv = graph_adversarial(probs, true_idx)
                if weights.beta > 0.0:
                    snrs = draw_snr(chan_rng, config.snr_lo_db, config.snr_hi_db,
                                    size=clean.shape[0])
                    rx = awgn_per_frame(adv, snrs, chan_rng)
                    rx_bits = _demodulate_frames(rx, const)
                    b_r, _ = _counted_ber(bits[batch], rx_bits, k)
                    l_comm = graph_communication(pert_t, b_r, mf)
                if weights.gamma > 0.0:
                    l_third = graph_third_loss(pert_t, clean, weights)
                total = None
                for term, w in ((l_adv, weights.alpha), (l_comm, weights.beta),
                                (l_third, weights.gamma)):
                    if term is None:
                        continue
                    scaled = ad.scale(term, w)
                    total = scaled if total is None else ad.add(total, scaled)
            t.backward(total)
            opt.step()
            sums += [
                total.item(),
                l_adv.item() if l_adv is not None else 0.0,
                l_comm.item() if l_comm is not None else 0.0,
                l_third.item() if l_third is not None else 0.0,
            ]
            n_batches += 1
        means = sums / max(n_batches, 1)
        row = {
            "epoch": epoch,
            "loss_total": float(means[0]),
            "loss_adv": float(means[1]),
            "loss_comm": float(means[2]),
            "loss_third": float(means[3]),
        }
        history.append(row)
        if log:
            log(
                f"amn epoch {epoch}: total {means[0]:.4f} adv {means[1]:.4f} "
                f"comm {means[2]:.5f} third {means[3]:.5f}"
            )
    if nn.parameter_checksum(amc) != checksum_before:
        raise RuntimeError("classifier parameters changed during attack training")
    return amn, history


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalRow:
    snr_db: float
    ber: float
    ber_sigma: float
    acc: float
    mean_ps: float
    spr_db: float
    oob_ratio: float

    def __post_init__(self):
        if not 0.0 <= self.ber <= 1.0:
            raise ValueError(f"ber out of range: {self.ber}")
        if not 0.0 <= self.acc <= 1.0:
            raise ValueError(f"accuracy out of range: {self.acc}")
        if not 0.0 <= self.oob_ratio <= 1.0:
            raise ValueError(f"out-of-band ratio out of range: {self.oob_ratio}")


@dataclass(frozen=True)
class EvalReport:
    """Per-SNR metric rows plus run metadata; rows ascend in SNR."""

    rows: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        snrs = [r.snr_db for r in self.rows]
        if snrs != sorted(snrs):
            raise ValueError("report rows must ascend in snr_db")

    CSV_HEADER = "snr_db,ber,ber_sigma,acc,mean_ps,spr_db,oob_ratio"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for r in self.rows:
                fh.write(
                    f"{r.snr_db:.10g},{r.ber:.10g},{r.ber_sigma:.10g},{r.acc:.10g},"
                    f"{r.mean_ps:.10g},{r.spr_db:.10g},{r.oob_ratio:.10g}\n"
                )

    def write_metadata(self, path) -> None:
        with open(path, "w") as fh:
            for key in sorted(self.metadata):
                fh.write(f"{key} = {self.metadata[key]}\n")


def evaluate(amn: AmnModel | None, amc: AmcModel, scheme: str, snr_grid,
             n_acc_frames: int = 1000, min_ber_bits: int = 100_000,
             seed: int = 0, band: BandSpec | None = None) -> EvalReport:
    """Sweep the adversarial link over an SNR grid.

    Per point: Monte-Carlo BER over at least ``min_ber_bits`` counted bits,
    eavesdropper accuracy and mean true-class confidence over
    ``n_acc_frames`` frames, plus the perturbation's signal-to-perturbation
    ratio and out-of-band power ratio. ``amn=None`` evaluates the clean
    (null-attack) baseline; its SPR is infinite and its out-of-band ratio is
    reported as 0.
    """
    grid = sorted(float(s) for s in snr_grid)
    if not grid:
        raise ValueError("snr grid must be nonempty")
    const = constellation(scheme)
    k = const.bits_per_symbol
    counted_per_frame = (counted_symbol_slice(SYMBOLS_PER_FRAME).stop
                         - counted_symbol_slice(SYMBOLS_PER_FRAME).start) * k
    n_frames = max(n_acc_frames, math.ceil(min_ber_bits / counted_per_frame))
    bits, frames = generate_dataset(scheme, n_frames, seed)
    if amn is None:
        pert = np.zeros_like(frames)
    else:
        pert = amn.perturbation(frames)
    adv = frames + pert
    band = band or occupied_band(DEFAULT_PULSE_SHAPE.sps, DEFAULT_PULSE_SHAPE.roll_off)

    e_s = float(np.sum(np.abs(frames) ** 2))
    e_p = float(np.sum(np.abs(pert) ** 2))
    if e_p > 0.0:
        spr_db = 10.0 * np.log10(e_s / e_p)
        out_e, tot_e = spectral_energy_split(pert, band)
        oob = out_e / tot_e
    else:
        spr_db = float("inf")
        oob = 0.0

    true_idx = scheme_index(scheme)
    rows = []
    for i, snr in enumerate(grid):
        rx_rng = _rng(seed, 31, i)
        eve_rng = _rng(seed, 37, i)
        rx = awgn_per_frame(adv, np.full(n_frames, snr), rx_rng)
        rx_bits = _demodulate_frames(rx, const)
        ber, n_bits = _counted_ber(bits, rx_bits, k)
        sigma = math.sqrt(ber * (1.0 - ber) / n_bits)
        eve = awgn_per_frame(adv[:n_acc_frames], np.full(min(n_acc_frames, n_frames), snr),
                             eve_rng)
        probs = classify_batch(amc, eve)
        acc = float(np.mean(np.argmax(probs, axis=1) == true_idx))
        mean_ps = float(np.mean(probs[:, true_idx]))
        rows.append(EvalRow(snr, ber, sigma, acc, mean_ps, spr_db, oob))
    metadata = {
        "scheme": scheme,
        "seed": int(seed),
        "n_frames": int(n_frames),
        "n_acc_frames": int(min(n_acc_frames, n_frames)),
        "min_ber_bits": int(min_ber_bits),
        "band_half_width": band.half_width,
        "null_attack": amn is None,
    }
    return EvalReport(tuple(rows), metadata)


# ---------------------------------------------------------------------------
# PSD comparison


@dataclass(frozen=True)
class PsdComparison:
    """Aligned PSD traces of clean signal, perturbation, and adversarial sum."""

    freq_normalized: np.ndarray
    clean_db: np.ndarray
    pert_db: np.ndarray
    adv_db: np.ndarray

    CSV_HEADER = "freq_normalized,clean_db,pert_db,adv_db"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for f, c, p, a in zip(self.freq_normalized, self.clean_db,
                                  self.pert_db, self.adv_db):
                fh.write(f"{f:.10g},{c:.10g},{p:.10g},{a:.10g}\n")


def psd_compare(clean: IQSignal, perturbation: IQSignal, adversarial: IQSignal,
                nfft: int = 256, segments: int | None = None) -> PsdComparison:
    """PSDs of clean/perturbation/adversarial signals on one frequency axis."""
    if not (clean.n == perturbation.n == adversarial.n):
        raise ValueError("psd_compare requires equal-length signals")
    return PsdComparison(
        psd_frequencies(nfft),
        psd(clean, nfft, segments),
        psd(perturbation, nfft, segments),
        psd(adversarial, nfft, segments),
    )


def perturbation_psd_traces(amn: AmnModel | None, scheme: str, n_frames: int = 200,
                            seed: int = 0, nfft: int = 256) -> PsdComparison:
    """Convenience: generate frames, run the attack, and compare PSDs of the
    concatenated clean/perturbation/adversarial streams."""
    _, frames = generate_dataset(scheme, n_frames, seed)
    pert = np.zeros_like(frames) if amn is None else amn.perturbation(frames)
    sps = DEFAULT_PULSE_SHAPE.sps
    return psd_compare(
        IQSignal(frames.ravel(), sps),
        IQSignal(pert.ravel(), sps),
        IQSignal((frames + pert).ravel(), sps),
        nfft,
    )


def theoretical_reference(scheme: str, snr_grid, sps: int = DEFAULT_PULSE_SHAPE.sps):
    """Closed-form BER at each per-sample SNR point for the clean link."""
    from .channel import snr_to_ebn0

    k = constellation(scheme).bits_per_symbol
    return [
        (float(snr), float(theoretical_ber(scheme, snr_to_ebn0(snr, sps, k))))
        for snr in sorted(snr_grid)
    ]
