"""Adversarial motion prior: discriminator losses, training step, style reward.

The discriminator scores a state transition, i.e. the concatenation of two
consecutive discriminator observations.  Least-squares targets drive reference
transitions towards +1 and policy transitions towards -1; a gradient penalty
on reference samples stabilizes training; the policy's imitation reward maps
the score into [0, 1].

Input normalization is part of the discriminator: the gradient penalty and
its parameter gradient differentiate through it.  The penalty's parameter
gradient is computed in closed form, which is exact for piecewise-linear
activations (relu/identity) -- the only kind the discriminator uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import netcore
from .errors import AmbleError


def make_pair(obs_t: np.ndarray, obs_tp1: np.ndarray) -> np.ndarray:
    """Concatenate two discriminator observations into one transition pair."""
    if obs_t.shape != obs_tp1.shape:
        raise AmbleError("transition pair observations must have equal dimension")
    pair = np.concatenate([obs_t, obs_tp1])
    if not np.all(np.isfinite(pair)):
        raise AmbleError("transition pair contains non-finite values")
    return pair


def _as_batch(pairs: np.ndarray) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.float64)
    if pairs.ndim == 1:
        pairs = pairs[None, :]
    if pairs.shape[0] == 0:
        raise AmbleError("empty transition batch")
    return pairs


@dataclass(frozen=True)
class AmpConfig:
    gp_weight: float = 10.0
    learning_rate: float = 1e-4
    batch_size: int = 256
    policy_buffer_capacity: int = 100_000
    demo_buffer_capacity: int = 200_000
    updates_per_iteration: int = 2
    hidden: tuple[int, ...] = (128, 128)
    normalize_inputs: bool = True

    def __post_init__(self):
        if self.gp_weight < 0:
            raise AmbleError("gradient-penalty weight must be >= 0")
        if self.policy_buffer_capacity <= 0 or self.demo_buffer_capacity <= 0:
            raise AmbleError("buffer capacities must be > 0")


class RunningNormalizer:
    """Per-dimension running mean/variance, applied identically to all streams."""

    VAR_FLOOR = 1e-8

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0

    def update(self, batch: np.ndarray) -> None:
        batch = _as_batch(batch)
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        if self.count == 0:
            self.mean, self.var, self.count = b_mean, b_var, float(b_count)
            return
        total = self.count + b_count
        delta = b_mean - self.mean
        self.var = (self.var * self.count + b_var * b_count
                    + delta * delta * self.count * b_count / total) / total
        self.mean = self.mean + delta * b_count / total
        self.count = total

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.var, self.VAR_FLOOR))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.std

    def state_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(),
                "count": self.count}

    @classmethod
    def from_state(cls, state: dict) -> "RunningNormalizer":
        out = cls(len(state["mean"]))
        out.mean = np.asarray(state["mean"], dtype=np.float64)
        out.var = np.asarray(state["var"], dtype=np.float64)
        out.count = float(state["count"])
        return out


def normalize_transitions(buffer: np.ndarray) -> RunningNormalizer:
    """Fit a normalizer to a non-empty transition buffer."""
    buffer = _as_batch(buffer)
    norm = RunningNormalizer(buffer.shape[1])
    norm.update(buffer)
    return norm


@dataclass
class Discriminator:
    """Scalar-output scoring net plus its (optional) input normalizer."""

    net: netcore.DenseNet
    normalizer: RunningNormalizer | None = None

    def scores(self, pairs: np.ndarray) -> np.ndarray:
        pairs = _as_batch(pairs)
        if self.normalizer is not None:
            pairs = self.normalizer.apply(pairs)
        return netcore.forward(self.net, pairs)[:, 0]


def build_discriminator(pair_dim: int, cfg: AmpConfig,
                        rng: np.random.Generator) -> Discriminator:
    dims = (pair_dim, *cfg.hidden, 1)
    acts = ("relu",) * len(cfg.hidden) + ("identity",)
    net = netcore.orthogonal_init(dims, acts, rng, output_gain=1.0)
    norm = RunningNormalizer(pair_dim) if cfg.normalize_inputs else None
    return Discriminator(net=net, normalizer=norm)


def expert_loss(disc: Discriminator, demo_pairs: np.ndarray) -> float:
    """Mean squared distance of demonstration scores from +1."""
    s = disc.scores(demo_pairs)
    return float(np.mean((s - 1.0) ** 2))


def policy_loss(disc: Discriminator, policy_pairs: np.ndarray) -> float:
    """Mean squared distance of policy scores from -1."""
    s = disc.scores(policy_pairs)
    return float(np.mean((s + 1.0) ** 2))


def input_gradients(disc: Discriminator, pairs: np.ndarray) -> np.ndarray:
    """Gradient of each score w.r.t. its raw (pre-normalization) input."""
    pairs = _as_batch(pairs)
    x = disc.normalizer.apply(pairs) if disc.normalizer is not None else pairs
    _, cache = netcore.forward_cached(disc.net, x)
    seed = np.ones((pairs.shape[0], 1))
    grad = netcore.backward(disc.net, cache, seed).d_input
    if disc.normalizer is not None:
        grad = grad / disc.normalizer.std
    return grad


def gradient_penalty(disc: Discriminator, demo_pairs: np.ndarray) -> float:
    """Mean squared Euclidean norm of the score's input gradient at
    demonstration samples."""
    grad = input_gradients(disc, demo_pairs)
    return float(np.mean(np.sum(grad * grad, axis=1)))


def _gp_param_grads(disc: Discriminator, demo_pairs: np.ndarray):
    """Closed-form parameter gradient of the mean gradient penalty.

    Valid for piecewise-linear activations: the activation masks are locally
    constant in the parameters, so the input gradient is multilinear in the
    weights and bias gradients vanish.
    """
    for act in disc.net.activations:
        if act not in ("relu", "identity"):
            raise AmbleError("gradient-penalty backward needs relu/identity activations")
    pairs = _as_batch(demo_pairs)
    x = disc.normalizer.apply(pairs) if disc.normalizer is not None else pairs
    net = disc.net
    _, (inputs, preacts, acts) = netcore.forward_cached(net, x)
    B = x.shape[0]
    # downward sweep: v[i] is the batch of backward vectors entering layer i
    masks = [netcore._act_grad(a, z, h) for a, z, h in
             zip(net.activations, preacts, acts)]
    v = [None] * net.n_layers
    g = np.ones((B, 1))
    for i in range(net.n_layers - 1, -1, -1):
        g = g * masks[i]
        v[i] = g
        g = g @ net.weights[i]
    g_input = g                            # (B, in) d score / d normalized input
    scale = 1.0 / disc.normalizer.std if disc.normalizer is not None else 1.0
    gp_each = np.sum((g_input * scale) ** 2, axis=1)
    # upward sweep: p[i] is the batch of forward vectors leaving layer i
    p = g_input * (scale ** 2 if disc.normalizer is not None else 1.0)
    d_weights = []
    for i in range(net.n_layers):
        d_weights.append(2.0 * v[i].T @ p / B)
        p = (p @ net.weights[i].T) * masks[i]
    tape = netcore.GradientTape(d_weights,
                                [np.zeros_like(b) for b in net.biases],
                                np.zeros((net.in_dim,)))
    return float(gp_each.mean()), tape


def imitation_reward(disc: Discriminator, pair: np.ndarray) -> float:
    """Style reward in [0, 1]: max(0, 1 - (score - 1)^2 / 4)."""
    return imitation_reward_from_score(float(disc.scores(pair)[0]))


def imitation_reward_from_score(score: float) -> float:
    return max(0.0, 1.0 - 0.25 * (score - 1.0) ** 2)


def imitation_rewards(disc: Discriminator, pairs: np.ndarray) -> np.ndarray:
    s = disc.scores(pairs)
    return np.maximum(0.0, 1.0 - 0.25 * (s - 1.0) ** 2)


@dataclass(frozen=True)
class AmpLossReport:
    expert: float
    policy: float
    grad_penalty: float
    total: float
    demo_score_mean: float
    policy_score_mean: float


def amp_update(disc: Discriminator, demo_pairs: np.ndarray,
               policy_pairs: np.ndarray, cfg: AmpConfig,
               adam: netcore.AdamState) -> AmpLossReport:
    """One optimizer step on 0.5 * expert + 0.5 * policy + gp_weight * penalty."""
    demo = _as_batch(demo_pairs)
    pol = _as_batch(policy_pairs)
    norm = disc.normalizer
    demo_n = norm.apply(demo) if norm is not None else demo
    pol_n = norm.apply(pol) if norm is not None else pol

    demo_out, demo_cache = netcore.forward_cached(disc.net, demo_n)
    pol_out, pol_cache = netcore.forward_cached(disc.net, pol_n)
    demo_s = demo_out[:, 0]
    pol_s = pol_out[:, 0]
    l_expert = float(np.mean((demo_s - 1.0) ** 2))
    l_policy = float(np.mean((pol_s + 1.0) ** 2))

    # d(0.5 * mean((s-1)^2))/ds = (s-1)/B, likewise for the policy side
    demo_seed = ((demo_s - 1.0) / demo.shape[0])[:, None]
    pol_seed = ((pol_s + 1.0) / pol.shape[0])[:, None]
    tape = netcore.backward(disc.net, demo_cache, demo_seed)
    tape = tape_add_params(tape, netcore.backward(disc.net, pol_cache, pol_seed))

    if cfg.gp_weight > 0.0:
        gp_value, gp_tape = _gp_param_grads(disc, demo)
        tape = tape_add_params(tape, gp_tape.scaled(cfg.gp_weight))
    else:
        gp_value = gradient_penalty(disc, demo)

    netcore.adam_update(disc.net, tape, adam, cfg.learning_rate)
    total = 0.5 * l_expert + 0.5 * l_policy + cfg.gp_weight * gp_value
    return AmpLossReport(expert=l_expert, policy=l_policy, grad_penalty=gp_value,
                         total=total, demo_score_mean=float(demo_s.mean()),
                         policy_score_mean=float(pol_s.mean()))


def tape_add_params(a: netcore.GradientTape, b: netcore.GradientTape) -> netcore.GradientTape:
    """Sum parameter gradients of two tapes (input gradients are not combined)."""
    return netcore.GradientTape(
        [x + y for x, y in zip(a.d_weights, b.d_weights)],
        [x + y for x, y in zip(a.d_biases, b.d_biases)],
        a.d_input)


class TransitionBuffer:
    """FIFO buffer of transition pairs with a fixed capacity."""

    def __init__(self, dim: int, capacity: int):
        if capacity <= 0:
            raise AmbleError("buffer capacity must be > 0")
        self.capacity = capacity
        self._data = np.empty((0, dim))

    def __len__(self) -> int:
        return self._data.shape[0]

    @property
    def data(self) -> np.ndarray:
        return self._data

    def append(self, pairs: np.ndarray) -> None:
        pairs = _as_batch(pairs)
        self._data = np.concatenate([self._data, pairs])[-self.capacity:]

    def replace(self, pairs: np.ndarray) -> None:
        """Drop previous contents; used for the per-iteration policy buffer."""
        self._data = _as_batch(pairs)[-self.capacity:]

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if len(self) == 0:
            raise AmbleError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self), size=count)
        return self._data[idx]
