"""Gaussian fit, PCA and synthetic-device generation over learned device embeddings."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MetricError, ShapeError

__all__ = [
    "EmbeddingGaussian",
    "PcaModel",
    "SyntheticDeviceSet",
    "fit_gaussian",
    "sample_embedding",
    "structured_embeddings",
    "pca_fit",
    "pca_project",
    "principal_axes",
]

PSD_TOL = 1e-10


@dataclass
class EmbeddingGaussian:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self):
        return self.mean.size


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows are principal directions
    explained_variance: np.ndarray
    total_variance: float

    @property
    def explained_variance_ratio(self):
        if self.total_variance == 0:
            return np.zeros_like(self.explained_variance)
        return self.explained_variance / self.total_variance


@dataclass
class SyntheticDeviceSet:
    labels: list
    embeddings: np.ndarray  # (n, dim)

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(zip(self.labels, self.embeddings))


def principal_axes(cov):
    """Eigenvalues (descending, clamped at 0) and unit eigenvectors as rows.

    Each eigenvector is signed so its largest-magnitude entry is positive.
    """
    cov = np.asarray(cov, dtype=float)
    w, u = np.linalg.eigh(0.5 * (cov + cov.T))
    order = np.argsort(w)[::-1]
    w, vecs = w[order], u[:, order].T.copy()
    for row in vecs:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return np.clip(w, 0.0, None), vecs


def _sample_cov(table):
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[0] < 2:
        raise MetricError("need at least two embedding rows")
    mean = table.mean(axis=0)
    centred = table - mean
    return mean, centred.T @ centred / (table.shape[0] - 1)


def fit_gaussian(table):
    """Sample mean and (n-1)-normalised covariance of the embedding rows, PSD-clamped."""
    mean, cov = _sample_cov(table)
    w, u = np.linalg.eigh(cov)
    if w.min() < -PSD_TOL:
        raise MetricError(f"covariance has eigenvalue {w.min():.3g} < -{PSD_TOL}")
    if w.min() < 0:
        cov = (u * np.clip(w, 0.0, None)) @ u.T
    return EmbeddingGaussian(mean, cov)


def _factor(g):
    # eigen square root: L @ L.T == cov, well defined for singular covariance
    w, vecs = principal_axes(g.cov)
    # eigenvalues at roundoff level would leak ~sqrt(eps) noise into null directions
    w = np.where(w > w.size * np.finfo(float).eps * w.max(initial=0.0), w, 0.0)
    return vecs.T * np.sqrt(w)


def sample_embedding(g, rng, size=None):
    """Draw ``mean + L z`` with ``L L^T = cov``; ``size`` draws give an (size, dim) array."""
    L = _factor(g)
    if size is None:
        return g.mean + L @ rng.standard_normal(g.dim)
    return g.mean + rng.standard_normal((size, g.dim)) @ L.T


def structured_embeddings(g, n_random, rng):
    """Mean, mean +- 2 sqrt(lambda_i) u_i along every principal axis, then random draws."""
    if n_random < 0:
        raise ConfigError("n_random must be >= 0")
    w, vecs = principal_axes(g.cov)
    labels = ["mean"]
    points = [g.mean.copy()]
    for i, (lam, u) in enumerate(zip(w, vecs), start=1):
        step = 2.0 * np.sqrt(lam) * u
        labels += [f"plus2sd_axis_{i}", f"minus2sd_axis_{i}"]
        points += [g.mean + step, g.mean - step]
    if n_random:
        draws = sample_embedding(g, rng, size=n_random)
        labels += [f"random_{j}" for j in range(1, n_random + 1)]
        points += list(draws)
    return SyntheticDeviceSet(labels, np.array(points))


def pca_fit(table, n_components=2):
    table = np.asarray(table, dtype=float)
    if table.ndim != 2:
        raise ShapeError("embedding table must be 2-D")
    if not 1 <= n_components <= table.shape[1]:
        raise ConfigError(f"n_components must lie in 1..{table.shape[1]}")
    mean, cov = _sample_cov(table)
    w, vecs = principal_axes(cov)
    return PcaModel(mean, vecs[:n_components], w[:n_components], float(np.trace(cov)))


def pca_project(model, vector):
    x = np.asarray(vector, dtype=float)
    if x.shape[-1] != model.mean.size:
        raise ShapeError(f"vector has length {x.shape[-1]}, expected {model.mean.size}")
    return (x - model.mean) @ model.components.T
