"""Scalar special functions and a bracketing root finder."""
import math

import numpy as np

from . import _kernels
from ._accel import py_func
from .errors import BracketError, ConvergenceError, DomainError

__all__ = [
    "erf",
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_pdf",
    "softplus",
    "sigmoid",
    "mish",
    "mish_prime",
    "softmax",
    "brent_root",
]

BRENT_MAXITER = 200


def _finite(x, name="x"):
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def erf(x):
    """Error function, accurate to within a few ulp (libm)."""
    return math.erf(_finite(x))


def std_normal_cdf(x):
    """Phi(x) = (1 + erf(x / sqrt 2)) / 2."""
    return _kernels.ncdf(_finite(x))


def std_normal_sf(x):
    """Upper tail 1 - Phi(x), without cancellation for large x."""
    return _kernels.nsf(_finite(x))


def std_normal_pdf(x):
    return _kernels.npdf(_finite(x))


def softplus(x):
    """ln(1 + e^x), stable for large |x|. Works elementwise on arrays."""
    x = np.asarray(x, dtype=float)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return out if out.ndim else float(out)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = 0.5 * (1.0 + np.tanh(0.5 * x))
    return out if out.ndim else float(out)


def mish(x):
    """x * tanh(softplus(x))."""
    x = np.asarray(x, dtype=float)
    out = x * np.tanh(softplus(x))
    return out if out.ndim else float(out)


def mish_prime(x):
    """Analytic derivative of :func:`mish`."""
    x = np.asarray(x, dtype=float)
    t = np.tanh(softplus(x))
    out = t + x * (1.0 - t * t) * sigmoid(x)
    return out if out.ndim else float(out)


def mish_with_prime(x):
    """Return ``(mish(x), mish_prime(x))`` for an array, sharing the softplus/tanh work."""
    sp = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    t = np.tanh(sp)
    sig = 0.5 * (1.0 + np.tanh(0.5 * x))
    return x * t, t + x * (1.0 - t * t) * sig


def softmax(logits):
    """Softmax over the last axis, with max subtraction."""
    v = np.asarray(logits, dtype=float)
    if v.size == 0 or v.shape[-1] == 0:
        raise DomainError("softmax of an empty vector")
    if not np.all(np.isfinite(v)):
        raise DomainError("softmax logits must be finite")
    e = np.exp(v - np.max(v, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def brent_root(f, lo, hi, tol=None, maxiter=BRENT_MAXITER):
    """Find a root of ``f`` bracketed by ``[lo, hi]`` with Brent's method.

    Parameters
    ----------
    f : callable
        Continuous real function with ``f(lo) * f(hi) <= 0``.
    lo, hi : float
        Bracket ends.
    tol : float, optional
        Absolute x tolerance. Defaults to ``1e-12 * max(1, |hi - lo|)``.

    Raises
    ------
    BracketError
        If the interval does not bracket a sign change.
    ConvergenceError
        If ``maxiter`` iterations pass without meeting the tolerance.
    """
    lo = _finite(lo, "lo")
    hi = _finite(hi, "hi")
    if tol is None:
        tol = 1e-12 * max(1.0, abs(hi - lo))
    if not tol > 0:
        raise DomainError("tol must be positive")

    def g(x, _args):
        return float(f(x))

    root, status, _ = py_func(_kernels.brent)(g, (), lo, hi, tol, 4.0 * _kernels.EPS, maxiter)
    if status == _kernels.BRENT_BRACKET:
        raise BracketError(f"f({lo}) and f({hi}) have the same sign")
    if status == _kernels.BRENT_NOCONV:
        raise ConvergenceError(f"no convergence after {maxiter} iterations")
    return root
