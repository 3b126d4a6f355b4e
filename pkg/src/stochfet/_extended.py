"""Extended-precision (np.longdouble) reference evaluation of the network loss.

Used only as the finite-difference side of gradient checks.  Central
differences with step 1e-6 in float64 carry ~1e-10 of roundoff, which swamps
gradient components near 1e-8; with x87 80-bit long doubles it drops to ~1e-13.
Deliberately shares no code with the float64 kernels.
"""
import numpy as np

LD = np.longdouble
PI = np.arctan(LD(1)) * 4
SQRT_PI = np.sqrt(PI)
SQRT2 = np.sqrt(LD(2))


def _erf_scalar(x):
    ax = abs(x)
    if ax < 3:
        # erf(x) = 2x/sqrt(pi) e^{-x^2} sum_n (2x^2)^n / (2n+1)!!  (positive terms only)
        two_x2 = 2 * ax * ax
        term = LD(1)
        total = LD(1)
        n = 0
        while term > total * LD(1e-22):
            n += 1
            term = term * two_x2 / (2 * n + 1)
            total += term
        val = 2 * ax / SQRT_PI * np.exp(-ax * ax) * total
    else:
        # erfc(x) = e^{-x^2}/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        f = ax
        for n in range(300, 0, -1):
            f = ax + LD(n) / 2 / f
        val = 1 - np.exp(-ax * ax) / SQRT_PI / f
    return val if x >= 0 else -val


def ncdf(z):
    z = np.asarray(z, dtype=LD)
    out = np.empty_like(z)
    for i, v in np.ndenumerate(z):
        out[i] = (1 + _erf_scalar(v / SQRT2)) / 2
    return out


def npdf(z):
    return np.exp(-z * z / 2) / np.sqrt(2 * PI)


def _softplus(x):
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def mixture(weights, biases, x, n_components, sigma_floor):
    """Forward pass for one input row; returns (alpha, mu, sigma) as long doubles."""
    h = np.asarray(x, dtype=LD)
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        a = h @ np.asarray(w, dtype=LD) + np.asarray(b, dtype=LD)
        h = a * np.tanh(_softplus(a)) if i < last else a
    K = n_components
    logits = h[:K] - np.max(h[:K])
    e = np.exp(logits)
    return e / np.sum(e), h[K : 2 * K], _softplus(h[2 * K :]) + LD(sigma_floor)


def crps(alpha, mu, sigma, y):
    y = LD(y)

    def abs_moment(m, s, t):
        z = (t - m) / s
        return s * (z * (2 * ncdf(z) - 1) + 2 * npdf(z))

    first = np.sum(alpha * abs_moment(mu, sigma, y))
    s = np.sqrt(sigma[:, None] ** 2 + sigma[None, :] ** 2)
    cross = abs_moment(mu[:, None] - mu[None, :], s, LD(0))
    return first - np.sum(alpha[:, None] * alpha[None, :] * cross) / 2


def gnll(alpha, mu, sigma, y):
    z = (LD(y) - mu) / sigma
    logs = np.log(alpha) - z * z / 2 - np.log(sigma * np.sqrt(2 * PI))
    top = np.max(logs)
    return -(top + np.log(np.sum(np.exp(logs - top))))


LOSSES = {"crps": crps, "gnll": gnll}


# ---------------------------------------------------------------------------
# arbitrary precision (mpmath) variant, for losses so large that long-double
# roundoff in central differences exceeds the check tolerance


def mp_mixture(weights, biases, x, n_components, sigma_floor):
    """Forward pass with mpmath scalars; ``weights`` are nested lists of mpf."""
    import mpmath as mp

    h = list(x)
    last = len(weights) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        a = [mp.fsum(h[r] * w[r][c] for r in range(len(h))) + b[c] for c in range(len(b))]
        h = [v * mp.tanh(mp.log1p(mp.exp(v))) for v in a] if i < last else a
    K = n_components
    top = max(h[:K])
    e = [mp.exp(v - top) for v in h[:K]]
    total = mp.fsum(e)
    sigma = [mp.log1p(mp.exp(v)) + sigma_floor for v in h[2 * K :]]
    return [v / total for v in e], h[K : 2 * K], sigma


def mp_crps(alpha, mu, sigma, y):
    import mpmath as mp

    def abs_moment(m, s, t):
        z = (t - m) / s
        return s * (z * (2 * mp.ncdf(z) - 1) + 2 * mp.npdf(z))

    K = len(alpha)
    first = mp.fsum(alpha[k] * abs_moment(mu[k], sigma[k], y) for k in range(K))
    cross = mp.fsum(
        alpha[k] * alpha[l] * abs_moment(mu[k] - mu[l], mp.sqrt(sigma[k] ** 2 + sigma[l] ** 2), 0)
        for k in range(K)
        for l in range(K)
    )
    return first - cross / 2


def mp_gnll(alpha, mu, sigma, y):
    import mpmath as mp

    return -mp.log(mp.fsum(a * mp.npdf(y, m, s) for a, m, s in zip(alpha, mu, sigma)))


MP_LOSSES = {"crps": mp_crps, "gnll": mp_gnll}
