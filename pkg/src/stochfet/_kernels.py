"""Hot numeric kernels.

Every function here is written in the subset of Python that numba compiles in
nopython mode.  When numba is disabled (``STOCHFET_DISABLE_JIT=1``) they run
as ordinary Python, and the batch CRPS path switches to a vectorised numpy
implementation instead of the per-row loop.
"""
import math

import numpy as np

from ._accel import USING_NUMBA, njit

SQRT2 = math.sqrt(2.0)
INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)
EPS = np.finfo(np.float64).eps

BRENT_OK = 0
BRENT_BRACKET = 1
BRENT_NOCONV = 2


@njit
def ncdf(x):
    # erfc(-t) == 1 + erf(t); the complement keeps relative accuracy in the lower tail
    return 0.5 * math.erfc(-x / SQRT2)


@njit
def nsf(x):
    return 0.5 * math.erfc(x / SQRT2)


@njit
def npdf(x):
    return INV_SQRT2PI * math.exp(-0.5 * x * x)


@njit
def abs_moment(mu, sigma, y):
    z = (y - mu) / sigma
    return sigma * (z * (2.0 * ncdf(z) - 1.0) + 2.0 * npdf(z))


@njit
def brent(f, args, xa, xb, xtol, rtol, maxiter):
    """Brent's method on ``f(x, args)``. Returns ``(root, status, iterations)``."""
    xpre = xa
    xcur = xb
    fpre = f(xpre, args)
    fcur = f(xcur, args)
    if fpre * fcur > 0.0:
        return xcur, BRENT_BRACKET, 0
    if fpre == 0.0:
        return xpre, BRENT_OK, 0
    if fcur == 0.0:
        return xcur, BRENT_OK, 0

    xblk = 0.0
    fblk = 0.0
    spre = 0.0
    scur = 0.0
    for i in range(maxiter):
        if fpre != 0.0 and fcur != 0.0 and ((fpre < 0.0) != (fcur < 0.0)):
            xblk = xpre
            fblk = fpre
            spre = xcur - xpre
            scur = spre
        if abs(fblk) < abs(fcur):
            xpre = xcur
            xcur = xblk
            xblk = xpre
            fpre = fcur
            fcur = fblk
            fblk = fpre

        delta = 0.5 * (xtol + rtol * abs(xcur))
        sbis = 0.5 * (xblk - xcur)
        if fcur == 0.0 or abs(sbis) < delta:
            return xcur, BRENT_OK, i

        if abs(spre) > delta and abs(fcur) < abs(fpre):
            if xpre == xblk:
                # secant
                stry = -fcur * (xcur - xpre) / (fcur - fpre)
            else:
                # inverse quadratic interpolation
                dpre = (fpre - fcur) / (xpre - xcur)
                dblk = (fblk - fcur) / (xblk - xcur)
                stry = -fcur * (fblk * dblk - fpre * dpre) / (dblk * dpre * (fblk - fpre))
            if 2.0 * abs(stry) < min(abs(spre), 3.0 * abs(sbis) - delta):
                spre = scur
                scur = stry
            else:
                spre = sbis
                scur = sbis
        else:
            spre = sbis
            scur = sbis

        xpre = xcur
        fpre = fcur
        if abs(scur) > delta:
            xcur += scur
        elif sbis > 0.0:
            xcur += delta
        else:
            xcur -= delta
        fcur = f(xcur, args)
    return xcur, BRENT_NOCONV, maxiter


# ---------------------------------------------------------------------------
# truncated-at-zero mixture
#
# A component whose mass above zero underflows (beta = -mu/sigma large) is
# handled through the Mills ratio R(t) = (1 - Phi(t)) / phi(t), so ratios of
# vanishing tails stay finite.

FAR_TAIL = 30.0


@njit
def mills_ratio(t):
    if t < FAR_TAIL:
        return nsf(t) / npdf(t)
    # continued fraction 1/(t + 1/(t + 2/(t + 3/(t + ...)))), evaluated backwards
    f = t
    for n in range(60, 0, -1):
        f = t + n / f
    return 1.0 / f


@njit
def trunc_norms(mu, sigma):
    out = np.empty(mu.shape[0])
    for k in range(mu.shape[0]):
        out[k] = nsf(-mu[k] / sigma[k])
    return out


@njit
def trunc_pdf_scalar(alpha, mu, sigma, znorm, x):
    if x < 0.0:
        return 0.0
    total = 0.0
    for k in range(mu.shape[0]):
        z = (x - mu[k]) / sigma[k]
        beta = -mu[k] / sigma[k]
        if beta <= FAR_TAIL:
            total += alpha[k] * npdf(z) / (sigma[k] * znorm[k])
        else:
            total += alpha[k] * math.exp(-0.5 * (z - beta) * (z + beta)) / (sigma[k] * mills_ratio(beta))
    return total


@njit
def trunc_cdf_scalar(alpha, mu, sigma, znorm, x):
    if x <= 0.0:
        return 0.0
    total = 0.0
    for k in range(mu.shape[0]):
        beta = -mu[k] / sigma[k]
        z = (x - mu[k]) / sigma[k]
        if beta > FAR_TAIL:
            expo = -0.5 * (z - beta) * (z + beta) + math.log(mills_ratio(z) / mills_ratio(beta))
            total += -alpha[k] * math.expm1(expo)
        elif beta > 0.0:
            total += alpha[k] * (nsf(beta) - nsf(z)) / znorm[k]
        else:
            total += alpha[k] * (ncdf(z) - ncdf(beta)) / znorm[k]
    return total


@njit
def _cdf_gap(x, args):
    alpha, mu, sigma, znorm, q = args
    return trunc_cdf_scalar(alpha, mu, sigma, znorm, x) - q


@njit(cache=False)
def inverse_cdf_scalar(alpha, mu, sigma, znorm, q, maxiter):
    """Solve F(x) = q on [0, max mu + 10 max sigma], doubling the upper end up to 4 times."""
    hi = np.max(mu) + 10.0 * np.max(sigma)
    if hi <= 0.0:
        hi = 10.0 * np.max(sigma)
    args = (alpha, mu, sigma, znorm, q)
    for _ in range(4):
        if _cdf_gap(hi, args) >= 0.0:
            break
        hi *= 2.0
    xtol = 1e-13 * max(1.0, hi)
    return brent(_cdf_gap, args, 0.0, hi, xtol, 4.0 * EPS, maxiter)


@njit(cache=False)
def inverse_cdf_rows(alpha, mu, sigma, q, maxiter):
    n = alpha.shape[0]
    x = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    for i in range(n):
        znorm = trunc_norms(mu[i], sigma[i])
        r, s, _ = inverse_cdf_scalar(alpha[i], mu[i], sigma[i], znorm, q[i], maxiter)
        x[i] = r
        status[i] = s
    return x, status


@njit
def trunc_pdf_rows(alpha, mu, sigma, x):
    """Density of row i's truncated mixture at every grid point; shape (rows, grid)."""
    n = alpha.shape[0]
    out = np.empty((n, x.shape[0]))
    for i in range(n):
        znorm = trunc_norms(mu[i], sigma[i])
        for j in range(x.shape[0]):
            out[i, j] = trunc_pdf_scalar(alpha[i], mu[i], sigma[i], znorm, x[j])
    return out


# ---------------------------------------------------------------------------
# CRPS over a batch: loss and partials with respect to (alpha, mu, sigma)


@njit
def crps_batch_loop(alpha, mu, sigma, y):
    n, K = alpha.shape
    loss = np.empty(n)
    g_alpha = np.empty((n, K))
    g_mu = np.empty((n, K))
    g_sigma = np.empty((n, K))
    for b in range(n):
        total = 0.0
        for k in range(K):
            s = sigma[b, k]
            z = (y[b] - mu[b, k]) / s
            c = 2.0 * ncdf(z) - 1.0
            p = npdf(z)
            a = s * (z * c + 2.0 * p)
            total += alpha[b, k] * a
            g_alpha[b, k] = a
            g_mu[b, k] = -alpha[b, k] * c
            g_sigma[b, k] = 2.0 * alpha[b, k] * p
        for k in range(K):
            ak = alpha[b, k]
            sk = sigma[b, k]
            for l in range(K):
                al = alpha[b, l]
                skl = math.sqrt(sk * sk + sigma[b, l] * sigma[b, l])
                z = (mu[b, k] - mu[b, l]) / skl
                c = 2.0 * ncdf(z) - 1.0
                p = npdf(z)
                cross = skl * (z * c + 2.0 * p)
                total -= 0.5 * ak * al * cross
                g_alpha[b, k] -= al * cross
                g_mu[b, k] -= ak * al * c
                g_sigma[b, k] -= 2.0 * ak * al * p * sk / skl
        loss[b] = total
    return loss, g_alpha, g_mu, g_sigma


def _ncdf_np(z):
    from scipy.special import erfc

    return 0.5 * erfc(-z / SQRT2)


def crps_batch_numpy(alpha, mu, sigma, y):
    z = (y[:, None] - mu) / sigma
    c = 2.0 * _ncdf_np(z) - 1.0
    p = INV_SQRT2PI * np.exp(-0.5 * z * z)
    a = sigma * (z * c + 2.0 * p)

    skl = np.sqrt(sigma[:, :, None] ** 2 + sigma[:, None, :] ** 2)
    zc = (mu[:, :, None] - mu[:, None, :]) / skl
    cc = 2.0 * _ncdf_np(zc) - 1.0
    pc = INV_SQRT2PI * np.exp(-0.5 * zc * zc)
    cross = skl * (zc * cc + 2.0 * pc)
    aa = alpha[:, :, None] * alpha[:, None, :]

    loss = np.sum(alpha * a, axis=1) - 0.5 * np.sum(aa * cross, axis=(1, 2))
    g_alpha = a - np.einsum("bkl,bl->bk", cross, alpha)
    g_mu = -alpha * c - np.sum(aa * cc, axis=2)
    g_sigma = 2.0 * alpha * p - 2.0 * sigma * np.sum(aa * pc / skl, axis=2)
    return loss, g_alpha, g_mu, g_sigma


crps_batch = crps_batch_loop if USING_NUMBA else crps_batch_numpy
