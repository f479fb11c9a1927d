"""Eavesdropper classifier, perturbation generator, and the training losses.

The eavesdropper runs a small 1-D CNN over raw I/Q frames and outputs a
probability for each of the five modulation schemes. The attacker trains a
residual perturbation network (one per scheme) whose additive output is
shaped by a weighted sum of three losses:

  * adversarial:   -log(1 - p_true), driving the eavesdropper's confidence
                   in the true scheme toward zero;
  * communication: measured BER times the symbol-instant EVM, so the error
                   rate scales a differentiable surrogate;
  * a third loss selected per run: perturbation-to-signal energy ratio
    ("power"), or one of the two spectral-shape losses that compare the
    perturbation's spectrum against the clean signal's ("mse_fft",
    "huber_fft").

Both spectral losses compare magnitude spectra by default, since the goal is
power-spectral shape; set ``mode="complex"`` to penalize complex differences
instead. Each is normalized by the clean spectrum's mean-square magnitude and
clamped so a zero perturbation scores exactly 1 and a spectrum-matched
perturbation scores 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .modem import SCHEMES, FRAME_LEN
from .signals import IQSignal, energy

P_S_CEILING = 1.0 - 1e-7
DECEPTION_KINDS = ("power", "mse_fft", "huber_fft")


@dataclass(frozen=True)
class LossWeights:
    """Loss mix (alpha, beta, gamma); the weights must sum to 1.

    ``gamma`` scales the third loss, chosen by ``deception_kind``; ``delta``
    is the Huber corner (1 unless a sensitivity study says otherwise).
    """

    alpha: float
    beta: float
    gamma: float
    deception_kind: str = "power"
    delta: float = 1.0

    def __post_init__(self):
        for name, v in (("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)):
            if v < 0.0 or not np.isfinite(v):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        total = self.alpha + self.beta + self.gamma
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"loss weights must sum to 1, got {total}")
        if self.deception_kind not in DECEPTION_KINDS:
            raise ValueError(
                f"unknown deception kind {self.deception_kind!r}; valid: {','.join(DECEPTION_KINDS)}"
            )
        if self.delta <= 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")


# ---------------------------------------------------------------------------
# models


class AmcModel:
    """Five-class modulation classifier over 2 x frame_len I/Q inputs."""

    def __init__(self, rng: np.random.Generator, frame_len: int = FRAME_LEN,
                 dropout: float = 0.0, dtype=np.float32):
        self.frame_len = frame_len
        self.dropout = dropout
        self.conv1 = nn.Conv1d(2, 64, 8, rng, init="he", dtype=dtype)
        self.conv2 = nn.Conv1d(64, 32, 8, rng, init="he", dtype=dtype)
        self.fc1 = nn.Dense(32 * frame_len, 128, rng, init="he", dtype=dtype)
        self.fc2 = nn.Dense(128, len(SCHEMES), rng, init="he", dtype=dtype)

    def named_parameters(self):
        out = []
        for name in ("conv1", "conv2", "fc1", "fc2"):
            out.extend(nn.layer_parameters(name, getattr(self, name)))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def freeze(self):
        for p in self.parameters():
            p.requires_grad = False

    def forward(self, x: Tensor, rng: np.random.Generator | None = None,
                training: bool = False) -> Tensor:
        """Logits for a (B, 2, frame_len) batch."""
        h = ad.relu(self.conv1(x))
        h = ad.relu(self.conv2(h))
        h = ad.reshape(h, (h.shape[0], -1))
        h = ad.relu(self.fc1(h))
        if training and self.dropout > 0.0:
            if rng is None:
                raise ValueError("dropout requires an rng during training")
            h = ad.dropout(h, self.dropout, rng, training=True)
        return self.fc2(h)

    def probabilities(self, x: Tensor) -> Tensor:
        return ad.softmax(self.forward(x))

    def save(self, path):
        nn.save_checkpoint(self, path)

    @classmethod
    def load(cls, path, frame_len: int = FRAME_LEN) -> "AmcModel":
        model = cls(np.random.default_rng(0), frame_len=frame_len)
        nn.restore_parameters(model, nn.load_checkpoint(path))
        return model


class AmnModel:
    """Residual perturbation generator: frame in, additive perturbation out.

    The final layer starts near zero so training begins from an effectively
    unperturbed (benign) transmission; the perturbation itself stays an
    explicit signal whose power and spectrum can be inspected directly.
    """

    FINAL_INIT_SCALE = 1e-3

    def __init__(self, rng: np.random.Generator, frame_len: int = FRAME_LEN,
                 dtype=np.float32):
        self.frame_len = frame_len
        self.conv1 = nn.Conv1d(2, 32, 5, rng, init="glorot", dtype=dtype)
        self.conv2 = nn.Conv1d(32, 32, 5, rng, init="glorot", dtype=dtype)
        self.conv3 = nn.Conv1d(32, 2, 5, rng, init="normal",
                               init_scale=self.FINAL_INIT_SCALE, dtype=dtype)

    def named_parameters(self):
        out = []
        for name in ("conv1", "conv2", "conv3"):
            out.extend(nn.layer_parameters(name, getattr(self, name)))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def forward(self, x: Tensor) -> Tensor:
        """Perturbation tensor (B, 2, frame_len) for a clean input batch."""
        h = ad.tanh(self.conv1(x))
        h = ad.tanh(self.conv2(h))
        return self.conv3(h)

    def perturbation(self, frames: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Inference-mode perturbation for complex frame rows (B, N)."""
        frames = np.atleast_2d(frames)
        parts = []
        for start in range(0, frames.shape[0], chunk):
            x = Tensor(ad.complex_to_2ch(frames[start : start + chunk], dtype=np.float32))
            parts.append(ad.ch2_to_complex(self.forward(x).data.astype(np.float64)))
        return np.concatenate(parts)

    def apply(self, frames: np.ndarray) -> np.ndarray:
        """Adversarial frames: input plus perturbation."""
        return np.atleast_2d(frames) + self.perturbation(frames)

    def save(self, path):
        nn.save_checkpoint(self, path)

    @classmethod
    def load(cls, path, frame_len: int = FRAME_LEN) -> "AmnModel":
        model = cls(np.random.default_rng(0), frame_len=frame_len)
        nn.restore_parameters(model, nn.load_checkpoint(path))
        return model


def classify_batch(model: AmcModel, frames: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Class probabilities for complex frame rows (B, N) -> (B, 5)."""
    frames = np.atleast_2d(frames)
    if frames.shape[1] != model.frame_len:
        raise ValueError(f"expected frames of length {model.frame_len}, got {frames.shape[1]}")
    parts = []
    for start in range(0, frames.shape[0], chunk):
        x = Tensor(ad.complex_to_2ch(frames[start : start + chunk], dtype=np.float32))
        parts.append(model.probabilities(x).data.astype(np.float64))
    return np.concatenate(parts)


def classify(model: AmcModel, signal: IQSignal) -> np.ndarray:
    """Probability vector over the five schemes for one frame."""
    return classify_batch(model, signal.samples[None, :])[0]


def scheme_index(scheme: str) -> int:
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; valid: {','.join(SCHEMES)}")
    return SCHEMES.index(scheme)


# ---------------------------------------------------------------------------
# scalar loss metrics (numpy path)


def loss_adversarial(p_s) -> float | np.ndarray:
    """Evasion loss -log(1 - p_s); p_s is clamped below 1 to stay finite."""
    p = np.clip(np.asarray(p_s, dtype=float), 0.0, P_S_CEILING)
    out = -np.log1p(-p)
    return float(out) if np.isscalar(p_s) else out


def loss_communication(b_r: float, clean: IQSignal, perturbed: IQSignal) -> float:
    """Measured BER times symbol-instant EVM. The BER factor carries no
    gradient; it only sets the magnitude of the EVM term."""
    from .modem import evm

    if not 0.0 <= b_r <= 1.0:
        raise ValueError(f"bit error rate must lie in [0, 1], got {b_r}")
    return b_r * evm(clean, perturbed)


def loss_power(clean: IQSignal, perturbation: IQSignal) -> float:
    """Perturbation-to-signal energy ratio (inverse SPR)."""
    e_s = energy(clean)
    if e_s <= 0.0:
        raise ValueError("power loss is undefined for a zero-energy clean signal")
    return energy(perturbation) / e_s


def _spectral_pair(clean: IQSignal, perturbation: IQSignal):
    if clean.n != perturbation.n:
        raise ValueError(f"signal lengths differ: {clean.n} vs {perturbation.n}")
    from .signals import fft

    s = fft(clean).bins
    p = fft(perturbation).bins
    denom = float(np.mean(np.abs(s) ** 2))
    if denom <= 0.0:
        raise ValueError("spectral losses are undefined for a zero clean signal")
    return s, p, denom


def loss_mse_fft(clean: IQSignal, perturbation: IQSignal, mode: str = "magnitude",
                 normalize: bool = True) -> float:
    """Mean squared spectral difference, normalized into [0, 1]."""
    s, p, denom = _spectral_pair(clean, perturbation)
    if mode == "magnitude":
        d = np.abs(s) - np.abs(p)
    elif mode == "complex":
        d = np.abs(s - p)
    else:
        raise ValueError(f"unknown comparison mode {mode!r}")
    raw = float(np.mean(d**2))
    if not normalize:
        return raw
    return float(np.clip(raw / denom, 0.0, 1.0))


def loss_huber_fft(clean: IQSignal, perturbation: IQSignal, delta: float = 1.0,
                   mode: str = "magnitude", normalize: bool = True) -> float:
    """Mean per-bin Huber spectral difference, normalized into [0, 1].

    Quadratic for |difference| <= delta and linear beyond, so single-bin
    outliers (common early in training) cannot dominate the average.
    """
    if delta <= 0.0:
        raise ValueError(f"huber delta must be positive, got {delta}")
    s, p, denom = _spectral_pair(clean, perturbation)
    if mode == "magnitude":
        d = np.abs(s) - np.abs(p)
    elif mode == "complex":
        d = np.abs(s - p)
    else:
        raise ValueError(f"unknown comparison mode {mode!r}")
    a = np.abs(d)
    per_bin = np.where(a <= delta, 0.5 * d**2, delta * a - 0.5 * delta**2)
    raw = float(np.mean(per_bin))
    if not normalize:
        return raw
    return float(np.clip(raw / denom, 0.0, 1.0))


def loss_total(weights: LossWeights, l_adv: float, l_comm: float, l_third: float) -> float:
    """Weighted total loss alpha*l_adv + beta*l_comm + gamma*l_third."""
    return weights.alpha * l_adv + weights.beta * l_comm + weights.gamma * l_third


# ---------------------------------------------------------------------------
# differentiable (taped) loss graph pieces used during training


def graph_adversarial(probs: Tensor, true_index: int | np.ndarray) -> Tensor:
    """Mean -log(1 - p_true) over a batch of probability rows."""
    labels = np.full(probs.shape[0], true_index, dtype=np.int64) \
        if np.isscalar(true_index) else np.asarray(true_index, dtype=np.int64)
    p_s = ad.gather_classes(probs, labels)
    p_s = ad.clamp(p_s, hi=P_S_CEILING)
    one_minus = ad.add_const(ad.scale(p_s, -1.0), 1.0)
    return ad.scale(ad.mean_all(ad.log(one_minus)), -1.0)


def graph_evm(pert: Tensor, mf_matrix: np.ndarray) -> Tensor:
    """Mean symbol-instant magnitude of a perturbation batch (B, 2, N).

    ``mf_matrix`` is the matched-filter/decimation operator (m, N); the EVM
    between clean and perturbed frames equals the filtered perturbation's
    mean magnitude because the receiver chain is linear.
    """
    sym = ad.linear_last(pert, np.asarray(mf_matrix, dtype=pert.dtype).T)
    return ad.mean_all(ad.magnitude_2ch(sym))


def graph_communication(pert: Tensor, b_r: float, mf_matrix: np.ndarray) -> Tensor:
    """BER-scaled EVM; ``b_r`` enters as a constant so gradients flow only
    through the EVM factor."""
    return ad.scale(graph_evm(pert, mf_matrix), float(b_r))


def graph_power(pert: Tensor, clean_energy: np.ndarray) -> Tensor:
    """Mean per-frame perturbation-to-signal energy ratio."""
    e_p = ad.sum_axis(ad.square(pert), (1, 2))
    inv = (1.0 / np.asarray(clean_energy, dtype=float)).astype(pert.dtype)
    return ad.mean_all(ad.scale(e_p, inv))


def graph_deception(pert: Tensor, clean_frames: np.ndarray, kind: str,
                    delta: float = 1.0, mode: str = "magnitude") -> Tensor:
    """Spectral deception loss of a perturbation batch against clean frames.

    ``clean_frames`` is complex (B, N); the clean spectrum is a constant of
    the graph. Matches the scalar metrics bin for bin.
    """
    clean_frames = np.atleast_2d(clean_frames)
    spec_clean = np.fft.fft(clean_frames, axis=1)
    denom = np.mean(np.abs(spec_clean) ** 2, axis=1)
    if np.any(denom <= 0.0):
        raise ValueError("spectral losses are undefined for zero clean frames")
    spec_p = ad.fft_2ch(pert)
    if mode == "magnitude":
        mag_clean = np.abs(spec_clean).astype(pert.dtype)
        d = ad.add_const(ad.scale(ad.magnitude_2ch(spec_p), -1.0), mag_clean)
    elif mode == "complex":
        clean_2ch = ad.complex_to_2ch(spec_clean, dtype=pert.dtype)
        d = ad.magnitude_2ch(ad.add_const(ad.scale(spec_p, -1.0), clean_2ch))
    else:
        raise ValueError(f"unknown comparison mode {mode!r}")
    if kind == "mse_fft":
        per_bin = ad.square(d)
    elif kind == "huber_fft":
        per_bin = ad.huber(d, delta)
    else:
        raise ValueError(f"unknown spectral loss kind {kind!r}")
    per_frame = ad.scale(ad.mean_axis(per_bin, 1), (1.0 / denom).astype(pert.dtype))
    return ad.mean_all(ad.clamp(per_frame, 0.0, 1.0))


def graph_third_loss(pert: Tensor, clean_frames: np.ndarray, weights: LossWeights) -> Tensor:
    """The gamma-weighted loss term selected by ``weights.deception_kind``."""
    if weights.deception_kind == "power":
        clean_energy = np.sum(np.abs(np.atleast_2d(clean_frames)) ** 2, axis=1)
        return graph_power(pert, clean_energy)
    return graph_deception(pert, clean_frames, weights.deception_kind, weights.delta)
