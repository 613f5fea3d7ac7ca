"""Minimal dense-network substrate with reverse-mode gradients.

Fixed feedforward topology only: alternating affine layers and elementwise
activations ("tanh", "relu", "identity").  The backward pass is hand-derived,
which keeps the package free of autodiff frameworks and makes every gradient
checkable against finite differences.

Checkpoint format (little-endian), lossless round trip:

    magic   4 bytes  b"DNET"
    version u32      = 1
    nlayers u32
    dims    u32 * (nlayers + 1)
    acts    u8  * nlayers        (0 tanh, 1 relu, 2 identity)
    params  f64 * count          (per layer: W row-major, then b)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import AmbleError, NumericalError

NET_MAGIC = b"DNET"
NET_VERSION = 1
_ACT_CODES = {"tanh": 0, "relu": 1, "identity": 2}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass
class DenseNet:
    """Feedforward network: weights[i] maps dims[i] -> dims[i+1]."""

    dims: tuple[int, ...]
    activations: tuple[str, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.activations) != len(self.dims) - 1:
            raise AmbleError("need one activation per layer")
        for act in self.activations:
            if act not in _ACT_CODES:
                raise AmbleError(f"unknown activation {act!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.dims[i + 1], self.dims[i]) or b.shape != (self.dims[i + 1],):
                raise AmbleError(f"layer {i} parameter shape mismatch")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    @property
    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "DenseNet":
        return DenseNet(self.dims, self.activations,
                        [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights) and \
            all(np.all(np.isfinite(b)) for b in self.biases)


@dataclass
class GradientTape:
    """Per-parameter gradients aligned with a DenseNet, plus the input gradient."""

    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]
    d_input: np.ndarray

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.d_weights) and \
            all(np.all(np.isfinite(g)) for g in self.d_biases)

    def scaled(self, factor: float) -> "GradientTape":
        return GradientTape([g * factor for g in self.d_weights],
                            [g * factor for g in self.d_biases],
                            self.d_input * factor)

    def add(self, other: "GradientTape") -> "GradientTape":
        return GradientTape(
            [a + b for a, b in zip(self.d_weights, other.d_weights)],
            [a + b for a, b in zip(self.d_biases, other.d_biases)],
            self.d_input + other.d_input)


def zero_tape(net: DenseNet, batch_shape=()) -> GradientTape:
    return GradientTape([np.zeros_like(w) for w in net.weights],
                        [np.zeros_like(b) for b in net.biases],
                        np.zeros(batch_shape + (net.in_dim,)))


def orthogonal_init(dims, activations, rng: np.random.Generator,
                    output_gain: float = 1.0) -> DenseNet:
    """Orthogonal weights with per-activation gain, zero biases."""
    gains = {"tanh": 5.0 / 3.0, "relu": np.sqrt(2.0), "identity": 1.0}
    weights, biases = [], []
    for i, act in enumerate(activations):
        rows, cols = dims[i + 1], dims[i]
        a = rng.standard_normal((rows, cols))
        if rows < cols:
            a = a.T
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        if rows < cols:
            q = q.T
        gain = output_gain if i == len(activations) - 1 else gains[act]
        weights.append(np.ascontiguousarray(q * gain))
        biases.append(np.zeros(rows))
    return DenseNet(tuple(dims), tuple(activations), weights, biases)


def _act(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a * a
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Affine-then-activation composition.  Accepts (d,) or (batch, d) input."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.in_dim:
        raise AmbleError(f"input dim {x.shape[-1]} != network input {net.in_dim}")
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        h = _act(act, h @ w.T + b)
    return h


def forward_cached(net: DenseNet, x: np.ndarray):
    """Forward pass that records layer inputs and pre-activations for backward."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.in_dim:
        raise AmbleError(f"input dim {x.shape[-1]} != network input {net.in_dim}")
    inputs, preacts, acts = [], [], []
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w.T + b
        h = _act(act, z)
        preacts.append(z)
        acts.append(h)
    return h, (inputs, preacts, acts)


def backward(net: DenseNet, cache, output_grad: np.ndarray) -> GradientTape:
    """Reverse-mode gradients of sum(output * output_grad) w.r.t. parameters
    and input.  Batched inputs accumulate parameter gradients over the batch."""
    inputs, preacts, acts = cache
    if not inputs:
        raise AmbleError("backward called without a recorded forward pass")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != acts[-1].shape:
        raise AmbleError("output_grad shape must match the forward output")
    batched = g.ndim == 2
    d_weights = [None] * net.n_layers
    d_biases = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        g = g * _act_grad(net.activations[i], preacts[i], acts[i])
        if batched:
            d_weights[i] = g.T @ inputs[i]
            d_biases[i] = g.sum(axis=0)
        else:
            d_weights[i] = np.outer(g, inputs[i])
            d_biases[i] = g.copy()
        g = g @ net.weights[i]
    return GradientTape(d_weights, d_biases, g)


def input_gradient(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Gradient of the scalar output w.r.t. the input, for scalar-output nets."""
    if net.out_dim != 1:
        raise AmbleError("input_gradient requires a scalar-output network")
    out, cache = forward_cached(net, x)
    return backward(net, cache, np.ones_like(out)).d_input


@dataclass
class AdamState:
    """First/second moment accumulators for one DenseNet."""

    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(net: DenseNet, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState([np.zeros_like(w) for w in net.weights],
                     [np.zeros_like(b) for b in net.biases],
                     [np.zeros_like(w) for w in net.weights],
                     [np.zeros_like(b) for b in net.biases],
                     0, beta1, beta2, eps)


def _adam_step(p, g, m, v, lr, b1, b2, eps, t):
    m *= b1
    m += (1 - b1) * g
    v *= b2
    v += (1 - b2) * g * g
    mhat = m / (1 - b1 ** t)
    vhat = v / (1 - b2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def adam_update(net: DenseNet, tape: GradientTape, state: AdamState,
                lr: float) -> None:
    """One in-place adaptive-moment step with bias correction.

    Raises NumericalError on non-finite gradients; the network is untouched
    in that case.
    """
    if not tape.all_finite():
        raise NumericalError("non-finite gradient in adam_update")
    state.step += 1
    for i in range(net.n_layers):
        _adam_step(net.weights[i], tape.d_weights[i], state.m_weights[i],
                   state.v_weights[i], lr, state.beta1, state.beta2,
                   state.eps, state.step)
        _adam_step(net.biases[i], tape.d_biases[i], state.m_biases[i],
                   state.v_biases[i], lr, state.beta1, state.beta2,
                   state.eps, state.step)
    if not net.all_finite():
        raise NumericalError("non-finite parameter after adam_update")


@dataclass
class VectorAdam:
    """Adam for a bare parameter vector (e.g. policy log-std)."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, param: np.ndarray) -> "VectorAdam":
        return cls(np.zeros_like(param), np.zeros_like(param))

    def update(self, param: np.ndarray, grad: np.ndarray, lr: float) -> None:
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite gradient in VectorAdam.update")
        self.step += 1
        _adam_step(param, grad, self.m, self.v, lr, self.beta1, self.beta2,
                   self.eps, self.step)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def net_to_bytes(net: DenseNet) -> bytes:
    head = NET_MAGIC + struct.pack("<II", NET_VERSION, net.n_layers)
    head += struct.pack(f"<{len(net.dims)}I", *net.dims)
    head += struct.pack(f"<{net.n_layers}B",
                        *[_ACT_CODES[a] for a in net.activations])
    blobs = []
    for w, b in zip(net.weights, net.biases):
        blobs.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        blobs.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return head + b"".join(blobs)


def net_from_bytes(data: bytes) -> DenseNet:
    if data[:4] != NET_MAGIC:
        raise AmbleError("bad network checkpoint magic")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != NET_VERSION:
        raise AmbleError(f"unsupported network checkpoint version {version}")
    off = 12
    dims = struct.unpack_from(f"<{n_layers + 1}I", data, off)
    off += 4 * (n_layers + 1)
    acts = struct.unpack_from(f"<{n_layers}B", data, off)
    off += n_layers
    weights, biases = [], []
    for i in range(n_layers):
        rows, cols = dims[i + 1], dims[i]
        w = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=off)
        off += 8 * rows * cols
        b = np.frombuffer(data, dtype="<f8", count=rows, offset=off)
        off += 8 * rows
        weights.append(w.reshape(rows, cols).copy())
        biases.append(b.copy())
    return DenseNet(tuple(int(d) for d in dims),
                    tuple(_ACT_NAMES[a] for a in acts), weights, biases)


def save_net(net: DenseNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(net_to_bytes(net))


def load_net(path) -> DenseNet:
    with open(path, "rb") as fh:
        return net_from_bytes(fh.read())
