"""Spectrally deceptive evasion attacks on RF modulation classifiers.

A numpy/scipy library covering the full pipeline: complex baseband signal
tools, a five-scheme digital modem, an AWGN channel, a small reverse-mode
autodiff engine with the layers and Adam optimizer the attack networks need,
the classifier/perturbation models with their loss functions, and a
deterministic experiment harness. See ``specdeceive.cli`` for the
command-line front end.
"""

from .adversary import (
    AmcModel,
    AmnModel,
    LossWeights,
    classify,
    classify_batch,
    loss_adversarial,
    loss_communication,
    loss_huber_fft,
    loss_mse_fft,
    loss_power,
    loss_total,
)
from .channel import awgn, draw_snr, ebn0_to_snr, snr_to_ebn0
from .harness import (
    EvalReport,
    EvalRow,
    PsdComparison,
    TrainingConfig,
    evaluate,
    generate_dataset,
    psd_compare,
    simulate_clean_ber,
    train_amc,
    train_amn,
)
from .modem import (
    Constellation,
    PulseShape,
    bit_error_rate,
    constellation,
    demodulate,
    evm,
    modulate,
    theoretical_ber,
)
from .signals import (
    BandSpec,
    IQSignal,
    Spectrum,
    energy,
    fft,
    ifft,
    occupied_band,
    out_of_band_ratio,
    psd,
)

__version__ = "0.1.0"
