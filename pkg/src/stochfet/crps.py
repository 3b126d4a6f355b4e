"""Closed-form CRPS for Gaussian mixtures, its gradients, and the GNLL baseline."""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError

__all__ = [
    "HeadGradient",
    "gaussian_abs_moment",
    "crps_mixture",
    "crps_gradient",
    "gnll_loss",
    "gnll_gradient",
    "crps_batch",
    "gnll_batch",
    "LOSSES",
]


@dataclass
class HeadGradient:
    """Partials of a scalar loss w.r.t. the raw network head."""

    d_alpha_logits: np.ndarray
    d_mu: np.ndarray
    d_sigma_raw: np.ndarray


def gaussian_abs_moment(mu, sigma, y):
    """E|X - y| for X ~ N(mu, sigma^2)."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return _kernels.abs_moment(float(mu), float(sigma), float(y))


def _rows(mix):
    return mix.alphas[None, :], mix.mus[None, :], mix.sigmas[None, :]


def crps_batch(alpha, mu, sigma, y):
    """Per-row CRPS and partials w.r.t. (alpha, mu, sigma); arrays of shape (n, K)."""
    return _kernels.crps_batch(
        np.ascontiguousarray(alpha, dtype=float),
        np.ascontiguousarray(mu, dtype=float),
        np.ascontiguousarray(sigma, dtype=float),
        np.ascontiguousarray(y, dtype=float),
    )


def gnll_batch(alpha, mu, sigma, y):
    """Per-row -ln p(y) and partials w.r.t. (alpha, mu, sigma), via log-sum-exp."""
    z = (y[:, None] - mu) / sigma
    log_comp = -0.5 * z * z - np.log(sigma) - 0.5 * np.log(2.0 * np.pi)
    with np.errstate(divide="ignore"):
        log_w = np.log(alpha) + log_comp
    top = np.max(log_w, axis=1, keepdims=True)
    lse = top + np.log(np.sum(np.exp(log_w - top), axis=1, keepdims=True))
    resp = np.exp(log_w - lse)
    loss = -lse[:, 0]
    g_alpha = -np.exp(log_comp - lse)
    g_mu = -resp * z / sigma
    g_sigma = resp * (1.0 - z * z) / sigma
    return loss, g_alpha, g_mu, g_sigma


LOSSES = {"crps": crps_batch, "gnll": gnll_batch}


def _head_gradient(mix, g_alpha, g_mu, g_sigma):
    a = mix.alphas
    d_logits = a * (g_alpha - np.dot(a, g_alpha))
    # d softplus(r)/dr = sigmoid(r) = 1 - exp(-softplus(r))
    sig_r = -np.expm1(-(mix.sigmas - mix.sigma_floor))
    return HeadGradient(d_logits, g_mu.copy(), g_sigma * sig_r)


def crps_mixture(mix, y):
    """CRPS of a Gaussian mixture at observation ``y``."""
    loss, *_ = crps_batch(*_rows(mix), np.array([float(y)]))
    return max(float(loss[0]), 0.0)


def crps_gradient(mix, y):
    """Analytic CRPS gradient w.r.t. the raw head that produced ``mix``."""
    _, ga, gm, gs = crps_batch(*_rows(mix), np.array([float(y)]))
    return _head_gradient(mix, ga[0], gm[0], gs[0])


def gnll_loss(mix, y):
    loss, *_ = gnll_batch(*_rows(mix), np.array([float(y)]))
    return float(loss[0])


def gnll_gradient(mix, y):
    _, ga, gm, gs = gnll_batch(*_rows(mix), np.array([float(y)]))
    return _head_gradient(mix, ga[0], gm[0], gs[0])
