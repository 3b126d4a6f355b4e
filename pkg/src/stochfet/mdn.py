"""Mixture density network with per-device embeddings and Mish hidden layers.

The network maps ``[v_gate, e_1, ..., e_d]`` through fully connected Mish
layers to a head of width ``3K`` that is split into mixing logits, component
means and raw spreads.  Mixing weights come from a softmax, means are linear
and spreads are ``softplus(raw) + sigma_floor``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DeviceLookupError, ShapeError
from .special import mish_with_prime, softmax

__all__ = [
    "NetworkConfig",
    "NetworkParams",
    "MixtureParams",
    "init_params",
    "forward",
    "forward_with_embedding",
    "forward_batch",
    "backward",
    "mixture_pdf",
    "mixture_from_head",
]


@dataclass(frozen=True)
class NetworkConfig:
    n_components: int = 3
    hidden_sizes: tuple = (64, 64)
    embedding_dim: int = 4
    embedding_enabled: bool = True
    sigma_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.n_components < 1:
            raise ConfigError("n_components must be >= 1")
        if self.embedding_dim < 1:
            raise ConfigError("embedding_dim must be >= 1")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError("hidden_sizes must be a nonempty list of positive integers")
        if not self.sigma_floor > 0:
            raise ConfigError("sigma_floor must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")

    @property
    def input_width(self):
        return 1 + self.embedding_dim if self.embedding_enabled else 1

    @property
    def head_width(self):
        return 3 * self.n_components

    @property
    def layer_sizes(self):
        return (self.input_width, *self.hidden_sizes, self.head_width)


@dataclass
class NetworkParams:
    config: NetworkConfig
    weights: list
    biases: list

    def __post_init__(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeError("layer count does not match config")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ShapeError(
                    f"layer {i}: expected W{(sizes[i], sizes[i + 1])}, b({sizes[i + 1]},), "
                    f"got W{w.shape}, b{b.shape}"
                )

    def arrays(self):
        """Weights and biases interleaved, in layer order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self):
        return NetworkParams(
            self.config, [w.copy() for w in self.weights], [b.copy() for b in self.biases]
        )


@dataclass
class MixtureParams:
    """One Gaussian mixture: K triples (alpha_k, mu_k, sigma_k)."""

    alphas: np.ndarray
    mus: np.ndarray
    sigmas: np.ndarray
    sigma_floor: float = field(default=1e-6)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.mus = np.asarray(self.mus, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        if not (self.alphas.shape == self.mus.shape == self.sigmas.shape) or self.alphas.ndim != 1:
            raise ShapeError("alphas, mus and sigmas must be 1-D of equal length")
        if self.alphas.size < 1:
            raise ShapeError("a mixture needs at least one component")
        if np.any(self.sigmas <= 0):
            raise ShapeError("sigmas must be positive")

    @property
    def n_components(self):
        return self.alphas.size


def init_params(config, device_count=0):
    """Draw initial weights (normal, std 1/sqrt(fan_in)), zero biases and N(0, 0.1^2) embeddings.

    Returns ``(params, table)``; ``table`` is ``None`` when embeddings are disabled.
    """
    rng = np.random.default_rng(config.seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    table = None
    if config.embedding_enabled:
        if device_count < 1:
            raise ConfigError("device_count must be >= 1 when embeddings are enabled")
        table = rng.normal(0.0, 0.1, size=(device_count, config.embedding_dim))
    return NetworkParams(config, weights, biases), table


def build_inputs(config, table, device_ids, v_scaled):
    v = np.asarray(v_scaled, dtype=float).reshape(-1, 1)
    if not config.embedding_enabled:
        return v
    ids = np.asarray(device_ids, dtype=np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        bad = ids[(ids < 0) | (ids >= table.shape[0])][0]
        raise DeviceLookupError(f"unknown device id {bad} (table has {table.shape[0]} rows)")
    return np.hstack([v, table[ids]])


def forward_batch(params, inputs):
    """Run the network on an ``(n, input_width)`` array.

    Returns ``(alpha, mu, sigma, cache)``; ``cache`` feeds :func:`backward`.
    """
    cfg = params.config
    K = cfg.n_components
    h = inputs
    acts = [h]
    primes = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        a = h @ w + b
        if i < last:
            h, dh = mish_with_prime(a)
            acts.append(h)
            primes.append(dh)
        else:
            h = a
    logits, mu, sraw = h[:, :K], h[:, K : 2 * K], h[:, 2 * K :]
    alpha = softmax(logits)
    sp = np.maximum(sraw, 0.0) + np.log1p(np.exp(-np.abs(sraw)))
    sigma = sp + cfg.sigma_floor
    sig_r = 0.5 * (1.0 + np.tanh(0.5 * sraw))
    return alpha, mu, sigma, (acts, primes, alpha, sig_r)


def backward(params, cache, g_alpha, g_mu, g_sigma):
    """Backpropagate partials of a loss w.r.t. (alpha, mu, sigma).

    Returns ``(grad_weights, grad_biases, grad_inputs)``.
    """
    acts, primes, alpha, sig_r = cache
    d_logits = alpha * (g_alpha - np.sum(alpha * g_alpha, axis=1, keepdims=True))
    delta = np.hstack([d_logits, g_mu, g_sigma * sig_r])
    n_layers = len(params.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i].T
        if i > 0:
            delta = delta * primes[i - 1]
    return gw, gb, delta


def _row_to_mixture(alpha, mu, sigma, floor):
    return MixtureParams(alpha[0].copy(), mu[0].copy(), sigma[0].copy(), floor)


def forward(params, table, device_id, v_gate):
    """Mixture prediction for a known device at a (scaled) gate voltage."""
    inputs = build_inputs(params.config, table, [device_id], [v_gate])
    alpha, mu, sigma, _ = forward_batch(params, inputs)
    return _row_to_mixture(alpha, mu, sigma, params.config.sigma_floor)


def forward_with_embedding(params, embedding, v_gate):
    """Mixture prediction for an arbitrary embedding vector (e.g. a synthetic device)."""
    cfg = params.config
    if cfg.embedding_enabled:
        e = np.asarray(embedding, dtype=float).reshape(-1)
        if e.size != cfg.embedding_dim:
            raise ShapeError(f"embedding has length {e.size}, expected {cfg.embedding_dim}")
        inputs = np.concatenate([[float(v_gate)], e])[None, :]
    else:
        inputs = np.array([[float(v_gate)]])
    alpha, mu, sigma, _ = forward_batch(params, inputs)
    return _row_to_mixture(alpha, mu, sigma, cfg.sigma_floor)


def mixture_from_head(head, sigma_floor=1e-6):
    """Build a mixture from one raw head vector ``[logits | mu | sigma_raw]``."""
    head = np.asarray(head, dtype=float)
    if head.ndim != 1 or head.size % 3:
        raise ShapeError("head must be a 1-D vector of length 3K")
    K = head.size // 3
    sraw = head[2 * K :]
    sp = np.maximum(sraw, 0.0) + np.log1p(np.exp(-np.abs(sraw)))
    return MixtureParams(softmax(head[:K]), head[K : 2 * K].copy(), sp + sigma_floor, sigma_floor)


def mixture_pdf(mix, x):
    """Density of the (untruncated) Gaussian mixture at ``x``; vectorised over ``x``."""
    x = np.asarray(x, dtype=float)
    z = (x[..., None] - mix.mus) / mix.sigmas
    dens = np.sum(mix.alphas * np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * mix.sigmas), axis=-1)
    return dens if dens.ndim else float(dens)
