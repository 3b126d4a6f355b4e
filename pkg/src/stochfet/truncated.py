"""Gaussian mixtures truncated to x >= 0: density, CDF, inverse CDF, mean."""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BracketError, ConvergenceError, DegenerateComponentError, DomainError
from .mdn import MixtureParams

__all__ = [
    "TruncatedMixture",
    "MIN_COMPONENT_MASS",
    "truncate",
    "trunc_pdf",
    "trunc_cdf",
    "inverse_cdf",
    "inverse_cdf_batch",
    "clip_quantile",
    "truncated_mean",
    "truncated_mean_batch",
    "trunc_pdf_batch",
    "check_truncatable",
]

MIN_COMPONENT_MASS = 1e-12
BRENT_MAXITER = 200


@dataclass(frozen=True)
class TruncatedMixture:
    base: MixtureParams
    znorm: np.ndarray  # per-component mass above zero, 1 - Phi(-mu/sigma)


def _norms(mus, sigmas):
    # 1 - Phi(-mu/sigma) == Phi(mu/sigma), through the complementary erf
    from scipy.special import erfc

    return 0.5 * erfc(-mus / (sigmas * _kernels.SQRT2))


def check_truncatable(mu, sigma):
    """Raise :class:`DegenerateComponentError` for the first row/component with mass < 1e-12.

    Works on (K,) or (n, K) arrays and returns the normalisers.
    """
    z = _norms(np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float))
    bad = np.argwhere(z < MIN_COMPONENT_MASS)
    if bad.size:
        if z.ndim == 1:
            raise DegenerateComponentError(int(bad[0][0]), float(z[bad[0][0]]))
        i, k = bad[0]
        raise DegenerateComponentError(int(k), float(z[i, k]), index=int(i))
    return z


def truncate(mix, strict=True):
    """Restrict ``mix`` to x >= 0.

    With ``strict`` (the default) a component with less than 1e-12 of its mass above zero
    raises :class:`DegenerateComponentError`.  Otherwise such components are kept and
    evaluated through the far-tail (Mills ratio) formulas, which amounts to a near point
    mass at zero carrying weight ``alpha_k``.
    """
    if strict:
        check_truncatable(mix.mus, mix.sigmas)
    return TruncatedMixture(mix, _kernels.trunc_norms(mix.mus, mix.sigmas))


def trunc_pdf(tm, x):
    m = tm.base
    return _kernels.trunc_pdf_scalar(m.alphas, m.mus, m.sigmas, tm.znorm, float(x))


def trunc_cdf(tm, x):
    m = tm.base
    return _kernels.trunc_cdf_scalar(m.alphas, m.mus, m.sigmas, tm.znorm, float(x))


def clip_quantile(q, lo=0.05, hi=0.95):
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"quantile {q} outside [0, 1]")
    return max(lo, min(hi, q))


def _raise_status(status, q):
    if status == _kernels.BRENT_BRACKET:
        raise BracketError(f"could not bracket the {q} quantile")
    if status == _kernels.BRENT_NOCONV:
        raise ConvergenceError(f"Brent did not converge for the {q} quantile")


def inverse_cdf(tm, q):
    """x >= 0 with F(x) = q, by Brent's method."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile {q} outside (0, 1)")
    m = tm.base
    x, status, _ = _kernels.inverse_cdf_scalar(
        m.alphas, m.mus, m.sigmas, tm.znorm, q, BRENT_MAXITER
    )
    _raise_status(status, q)
    return x


def inverse_cdf_batch(alpha, mu, sigma, q, strict=True):
    """Row-wise inverse CDF for (n, K) mixture arrays and n quantiles."""
    alpha = np.ascontiguousarray(alpha, dtype=float)
    mu = np.ascontiguousarray(mu, dtype=float)
    sigma = np.ascontiguousarray(sigma, dtype=float)
    q = np.ascontiguousarray(np.broadcast_to(q, (alpha.shape[0],)), dtype=float)
    if np.any((q <= 0.0) | (q >= 1.0)):
        raise DomainError("quantiles must lie in (0, 1)")
    if strict:
        check_truncatable(mu, sigma)
    x, status = _kernels.inverse_cdf_rows(alpha, mu, sigma, q, BRENT_MAXITER)
    if np.any(status):
        i = int(np.flatnonzero(status)[0])
        _raise_status(status[i], q[i])
    return x


def _hazard(beta):
    # phi(beta) / (1 - Phi(beta)) == 1 / (sqrt(pi/2) * erfcx(beta / sqrt 2)), finite for any beta
    from scipy.special import erfcx

    return 1.0 / (np.sqrt(0.5 * np.pi) * erfcx(beta / _kernels.SQRT2))


def truncated_mean(tm):
    """Sum_k alpha_k (mu_k + sigma_k phi(beta_k) / Z_k), beta_k = -mu_k / sigma_k."""
    m = tm.base
    return float(np.sum(m.alphas * (m.mus + m.sigmas * _hazard(-m.mus / m.sigmas))))


def truncated_mean_batch(alpha, mu, sigma, strict=True):
    if strict:
        check_truncatable(mu, sigma)
    return np.sum(alpha * (mu + sigma * _hazard(-mu / sigma)), axis=-1)


def trunc_pdf_batch(alpha, mu, sigma, x, strict=True):
    """Densities of n truncated mixtures on a shared grid; shape (n, len(x))."""
    if strict:
        check_truncatable(mu, sigma)
    return _kernels.trunc_pdf_rows(
        np.ascontiguousarray(alpha, dtype=float),
        np.ascontiguousarray(mu, dtype=float),
        np.ascontiguousarray(sigma, dtype=float),
        np.ascontiguousarray(x, dtype=float),
    )
