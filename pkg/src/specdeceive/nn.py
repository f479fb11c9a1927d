"""Network building blocks: layers, initializers, Adam, and checkpoints.

Models are small explicit classes holding named parameter tensors; training
code drives them with an active tape and an :class:`Adam` optimizer.
Parameters are float32 so checkpoints (which store raw little-endian float32)
round-trip bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_MAGIC = b"SDNN"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    """Malformed, truncated, or incompatible checkpoint file."""


def he_normal(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=np.float32) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv1d:
    """Same-length 1-D convolution layer over (B, C, L) inputs."""

    def __init__(self, in_channels: int, out_channels: int, width: int,
                 rng: np.random.Generator, init: str = "he", init_scale: float = 1.0,
                 dtype=np.float32):
        fan_in = in_channels * width
        fan_out = out_channels * width
        shape = (out_channels, in_channels, width)
        if init == "he":
            w = he_normal(rng, shape, fan_in, dtype)
        elif init == "glorot":
            w = glorot_uniform(rng, shape, fan_in, fan_out, dtype)
        elif init == "normal":
            w = (rng.standard_normal(shape) * init_scale).astype(dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv1d(x, self.weight, self.bias)


class Dense:
    """Fully connected layer over (B, F) inputs."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 init: str = "he", dtype=np.float32):
        shape = (out_features, in_features)
        if init == "he":
            w = he_normal(rng, shape, in_features, dtype)
        elif init == "glorot":
            w = glorot_uniform(rng, shape, in_features, out_features, dtype)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.dense(x, self.weight, self.bias)


def layer_parameters(prefix: str, layer) -> list[tuple[str, Tensor]]:
    return [(f"{prefix}.weight", layer.weight), (f"{prefix}.bias", layer.bias)]


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Per-parameter first/second moment buffers plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=0,
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update; mutates params and state in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads, and state buffers must align")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data -= (state.lr * update).astype(p.data.dtype, copy=False)
    return state


class Adam:
    """Optimizer facade over :func:`adam_step` for a fixed parameter list."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState.for_params(self.params, lr, beta1, beta2, eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = []
        for p in self.params:
            grads.append(np.zeros_like(p.data) if p.grad is None else p.grad)
        adam_step(self.params, grads, self.state)


# ---------------------------------------------------------------------------
# checkpoint serialization


def save_checkpoint(model, path) -> None:
    """Write named float32 parameters: magic, version, count, then per tensor
    name, rank, dims, and raw little-endian float32 values."""
    named = model.named_parameters() if hasattr(model, "named_parameters") else list(model)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(named)))
        for name, tensor in named:
            data = np.ascontiguousarray(tensor.data, dtype="<f4")
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError("truncated checkpoint file")
    return buf


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as an ordered name -> float32 array mapping."""
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"bad checkpoint magic {magic!r}")
        version, count = struct.unpack("<II", _read_exact(fh, 8))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(fh, 4))
            name = _read_exact(fh, name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank))
            n_values = int(np.prod(dims)) if rank else 1
            raw = _read_exact(fh, 4 * n_values)
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after final tensor")
    return tensors


def restore_parameters(model, tensors: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into a model, validating the shape table."""
    named = model.named_parameters()
    expected = {name: t.data.shape for name, t in named}
    found = {name: arr.shape for name, arr in tensors.items()}
    if expected != found:
        raise CheckpointError(
            f"checkpoint shape table mismatch: expected {expected}, found {found}"
        )
    for name, tensor in named:
        tensor.data = tensors[name].astype(tensor.data.dtype)

def parameter_checksum(model) -> float:
    """Order-stable digest of all parameters; detects accidental updates."""
    total = 0.0
    for _, tensor in model.named_parameters():
        total += float(np.sum(np.abs(tensor.data.astype(np.float64))))
    return total
