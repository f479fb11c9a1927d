"""Minimal reverse-mode automatic differentiation over numpy buffers.

Operations executed while a :class:`Tape` is active are recorded in execution
order; ``tape.backward(loss)`` replays them once in reverse and accumulates
gradients into every tensor created with ``requires_grad=True``. Ops run in
whatever float width their inputs carry: float64 for gradient verification,
float32 for training.

The op set is exactly what the attack networks and losses need: dense and
same-length 1-D convolution over channel-major batches, elementwise
nonlinearities, softmax/cross-entropy, reductions, a DFT over an I/Q channel
pair, and the elementwise pieces (square root, Huber, clamp) the spectral
losses are built from.

Any NaN or Inf produced in a forward or backward pass raises
:class:`NumericsError` immediately instead of propagating.
"""

from __future__ import annotations

import numpy as np

_EPS_MAG = 1e-24  # keeps |z| differentiable at the origin


class NumericsError(ArithmeticError):
    """A forward or backward op produced a non-finite value."""


class Tensor:
    """An n-dimensional value buffer with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError("item() requires a scalar tensor")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Recorded operation sequence; single-threaded during record/backward."""

    def __init__(self):
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._tracked: set[int] = set()
        self._consumed = False

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already active; nested tapes are not supported")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def tracks(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward_fn) -> None:
        self._entries.append((out, inputs, backward_fn))
        self._tracked.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Populate ``.grad`` of every requires_grad tensor reaching ``loss``."""
        if self._consumed:
            raise RuntimeError("tape already consumed by a previous backward pass")
        if loss.data.size != 1:
            raise ValueError("backward requires a scalar loss tensor")
        self._consumed = True
        grads: dict[int, np.ndarray] = {
            id(loss): np.ones_like(loss.data)
        }
        leaves: dict[int, Tensor] = {}
        for out, inputs, backward_fn in reversed(self._entries):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            in_grads = backward_fn(g)
            for t, gi in zip(inputs, in_grads):
                if gi is None:
                    continue
                _guard("backward", gi)
                acc = grads.get(id(t))
                grads[id(t)] = gi if acc is None else acc + gi
                if t.requires_grad:
                    leaves[id(t)] = t
        for tid, t in leaves.items():
            g_leaf = grads.get(tid)
            if g_leaf is not None:
                g_leaf = g_leaf.astype(t.dtype, copy=False)
                t.grad = g_leaf if t.grad is None else t.grad + g_leaf


def tape() -> Tape:
    return Tape()


def _active_for(*tensors: Tensor) -> Tape | None:
    t = _ACTIVE_TAPE
    if t is None:
        return None
    return t if any(t.tracks(x) for x in tensors) else None


def _guard(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values produced by op {name!r}")


def _make(name: str, data: np.ndarray) -> Tensor:
    _guard(name, data)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _make("add", a.data + b.data)
    t = _active_for(a, b)
    if t:
        t.record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = _make("sub", a.data - b.data)
    t = _active_for(a, b)
    if t:
        t.record(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _make("mul", a.data * b.data)
    t = _active_for(a, b)
    if t:
        t.record(
            out,
            (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        )
    return out


def scale(x: Tensor, c) -> Tensor:
    """Multiply by a constant scalar or (non-differentiated) ndarray."""
    c = np.asarray(c)
    out = _make("scale", x.data * c)
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (_unbroadcast(g * c, x.shape),))
    return out


def add_const(x: Tensor, c) -> Tensor:
    c = np.asarray(c)
    out = _make("add_const", x.data + c)
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (_unbroadcast(g, x.shape),))
    return out


def square(x: Tensor) -> Tensor:
    out = _make("square", x.data * x.data)
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (g * 2.0 * x.data,))
    return out


def sqrt(x: Tensor) -> Tensor:
    root = np.sqrt(x.data)
    out = _make("sqrt", root)
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (g * 0.5 / np.maximum(root, _EPS_MAG),))
    return out


def log(x: Tensor) -> Tensor:
    out = _make("log", np.log(x.data))
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (g / x.data,))
    return out


def clamp(x: Tensor, lo: float | None = None, hi: float | None = None) -> Tensor:
    data = np.clip(x.data, lo, hi)
    out = _make("clamp", data)
    t = _active_for(x)
    if t:
        inside = np.ones_like(x.data, dtype=bool)
        if lo is not None:
            inside &= x.data >= lo
        if hi is not None:
            inside &= x.data <= hi
        t.record(out, (x,), lambda g: (g * inside,))
    return out


def huber(x: Tensor, delta: float) -> Tensor:
    """Elementwise Huber penalty: quadratic inside |x| <= delta, linear outside."""
    if delta <= 0.0:
        raise ValueError("huber delta must be positive")
    a = np.abs(x.data)
    small = a <= delta
    data = np.where(small, 0.5 * x.data**2, delta * a - 0.5 * delta**2)
    out = _make("huber", data)
    t = _active_for(x)
    if t:
        grad_local = np.where(small, x.data, delta * np.sign(x.data))
        t.record(out, (x,), lambda g: (g * grad_local,))
    return out


# ---------------------------------------------------------------------------
# reductions and shaping


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (g.reshape(x.shape),))
    return out


def sum_all(x: Tensor) -> Tensor:
    out = _make("sum", np.asarray(x.data.sum()))
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))
    return out


def mean_all(x: Tensor) -> Tensor:
    out = _make("mean", np.asarray(x.data.mean()))
    t = _active_for(x)
    if t:
        n = x.data.size
        t.record(out, (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))
    return out


def sum_axis(x: Tensor, axis) -> Tensor:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = _make("sum_axis", x.data.sum(axis=axes))
    t = _active_for(x)
    if t:
        def bwd(g):
            ge = g
            for ax in sorted(axes):
                ge = np.expand_dims(ge, ax)
            return (np.broadcast_to(ge, x.shape).copy(),)
        t.record(out, (x,), bwd)
    return out


def mean_axis(x: Tensor, axis) -> Tensor:
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum_axis(x, axes), 1.0 / count)


# ---------------------------------------------------------------------------
# layers


def relu(x: Tensor) -> Tensor:
    out = _make("relu", np.maximum(x.data, 0.0))
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (g * (x.data > 0.0),))
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    out = _make("tanh", y)
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (g * (1.0 - y * y),))
    return out


def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Fully connected layer: x (B, F) with weight (O, F) and bias (O,)."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"dense shape mismatch: x {x.shape} vs weight {weight.shape}"
        )
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data
    out = _make("dense", data)
    inputs = (x, weight) if bias is None else (x, weight, bias)
    t = _active_for(*inputs)
    if t:
        def bwd(g):
            gx = g @ weight.data
            gw = g.T @ x.data
            if bias is None:
                return (gx, gw)
            return (gx, gw, g.sum(axis=0))
        t.record(out, inputs, bwd)
    return out


def _im2col(xp: np.ndarray, length: int, k: int) -> np.ndarray:
    """Padded (B, C, L+K-1) buffer to contiguous (B*length, C*K) windows."""
    b, c, _ = xp.shape
    s0, s1, s2 = xp.strides
    windows = np.lib.stride_tricks.as_strided(
        xp, shape=(b, c, length, k), strides=(s0, s1, s2, s2)
    )
    return np.ascontiguousarray(windows.transpose(0, 2, 1, 3)).reshape(b * length, c * k)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-length 1-D convolution: x (B, Ci, L), weight (Co, Ci, K), bias (Co,).

    Zero padding keeps the output length equal to the input length so
    perturbations stay aligned sample-for-sample with their inputs.
    """
    if x.data.ndim != 3 or weight.data.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ValueError(
            f"conv1d shape mismatch: x {x.shape} vs weight {weight.shape}"
        )
    b, ci, length = x.shape
    co, _, k = weight.shape
    pad_l = (k - 1) // 2
    pad_r = k - 1 - pad_l
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad_l, pad_r)))
    cols = _im2col(xp, length, k)
    w2 = weight.data.reshape(co, ci * k)
    data = (cols @ w2.T).reshape(b, length, co).transpose(0, 2, 1)
    if bias is not None:
        data = data + bias.data[None, :, None]
    out = _make("conv1d", np.ascontiguousarray(data))
    inputs = (x, weight) if bias is None else (x, weight, bias)
    t = _active_for(*inputs)
    if t:
        def bwd(g):
            gmat = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(b * length, co)
            gw = (gmat.T @ cols).reshape(co, ci, k)
            # transposed convolution for the input gradient
            gp = np.pad(g, ((0, 0), (0, 0), (k - 1 - pad_l, k - 1 - pad_r)))
            gcols = _im2col(gp, length, k)
            wflip = weight.data[:, :, ::-1].transpose(1, 0, 2).reshape(ci, co * k)
            gx = (gcols @ wflip.T).reshape(b, length, ci).transpose(0, 2, 1)
            gx = np.ascontiguousarray(gx)
            if bias is None:
                return (gx, gw)
            return (gx, gw, g.sum(axis=(0, 2)))
        t.record(out, inputs, bwd)
    return out


def linear_last(x: Tensor, matrix: np.ndarray) -> Tensor:
    """Apply a fixed (non-trained) matrix along the last axis: y = x @ matrix."""
    matrix = np.asarray(matrix)
    out = _make("linear_last", x.data @ matrix)
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (g @ matrix.T,))
    return out


def softmax(x: Tensor) -> Tensor:
    """Row softmax over the last axis; rows sum to 1."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = _make("softmax", s)
    t = _active_for(x)
    if t:
        def bwd(g):
            dot = (g * s).sum(axis=-1, keepdims=True)
            return (s * (g - dot),)
        t.record(out, (x,), bwd)
    return out


def gather_classes(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Select probs[i, labels[i]] for each row."""
    labels = np.asarray(labels, dtype=np.int64)
    if probs.data.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError("gather_classes expects (B, C) probs and (B,) labels")
    rows = np.arange(probs.shape[0])
    out = _make("gather_classes", probs.data[rows, labels])
    t = _active_for(probs)
    if t:
        def bwd(g):
            gp = np.zeros_like(probs.data)
            gp[rows, labels] = g
            return (gp,)
        t.record(out, (probs,), bwd)
    return out


def cross_entropy(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-probability of the true class.

    Takes post-softmax probabilities and integer labels; probabilities are
    floored at 1e-12 before the log.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if probs.data.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError("cross_entropy expects (B, C) probs and (B,) labels")
    rows = np.arange(probs.shape[0])
    sel = np.maximum(probs.data[rows, labels], 1e-12)
    out = _make("cross_entropy", np.asarray(-np.mean(np.log(sel))))
    t = _active_for(probs)
    if t:
        def bwd(g):
            gp = np.zeros_like(probs.data)
            gp[rows, labels] = -g / (len(rows) * sel)
            return (gp,)
        t.record(out, (probs,), bwd)
    return out


def dropout(x: Tensor, p: float, rng: np.random.Generator, training: bool = True) -> Tensor:
    """Inverted dropout; disabled by default in the shipped architectures."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must lie in [0, 1)")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    mask = mask.astype(x.dtype)
    out = _make("dropout", x.data * mask)
    t = _active_for(x)
    if t:
        t.record(out, (x,), lambda g: (g * mask,))
    return out


# ---------------------------------------------------------------------------
# complex <-> I/Q-channel helpers and spectral ops


def complex_to_2ch(frames: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Pack complex frame rows (..., N) into channel-major (..., 2, N) reals."""
    frames = np.asarray(frames)
    return np.stack([frames.real, frames.imag], axis=-2).astype(dtype)


def ch2_to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`complex_to_2ch`."""
    x = np.asarray(x)
    return x[..., 0, :] + 1j * x[..., 1, :]


def fft_2ch(x: Tensor) -> Tensor:
    """Unnormalized DFT along the last axis of an (..., 2, N) I/Q tensor.

    The adjoint of the DFT is N times the inverse DFT, which gives the
    backward rule directly.
    """
    if x.shape[-2] != 2:
        raise ValueError("fft_2ch expects an (..., 2, N) I/Q tensor")
    n = x.shape[-1]
    xc = x.data[..., 0, :] + 1j * x.data[..., 1, :]
    spec = np.fft.fft(xc, axis=-1)
    data = np.stack([spec.real, spec.imag], axis=-2).astype(x.dtype)
    out = _make("fft_2ch", data)
    t = _active_for(x)
    if t:
        def bwd(g):
            gc = g[..., 0, :] + 1j * g[..., 1, :]
            gi = np.fft.ifft(gc, axis=-1) * n
            return (np.stack([gi.real, gi.imag], axis=-2).astype(x.dtype),)
        t.record(out, (x,), bwd)
    return out


def magnitude_2ch(x: Tensor) -> Tensor:
    """Pointwise complex magnitude of an (..., 2, N) tensor -> (..., N)."""
    if x.shape[-2] != 2:
        raise ValueError("magnitude_2ch expects an (..., 2, N) I/Q tensor")
    i = x.data[..., 0, :]
    q = x.data[..., 1, :]
    r = np.sqrt(i * i + q * q + _EPS_MAG)
    out = _make("magnitude_2ch", r)
    t = _active_for(x)
    if t:
        def bwd(g):
            gi = g * i / r
            gq = g * q / r
            return (np.stack([gi, gq], axis=-2),)
        t.record(out, (x,), bwd)
    return out
