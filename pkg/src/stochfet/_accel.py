"""Optional numba acceleration.

Set ``STOCHFET_DISABLE_JIT=1`` to run every kernel as plain Python/numpy.
"""
import os

_DISABLED = os.environ.get("STOCHFET_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    USING_NUMBA = True
except ImportError:
    numba = None
    USING_NUMBA = False


def njit(fn=None, *, cache=True):
    """Compile ``fn`` in nopython mode when numba is active, else return it unchanged.

    Kernels that receive other kernels as arguments cannot be cached on disk;
    pass ``cache=False`` for those.
    """
    if fn is None:
        return lambda f: njit(f, cache=cache)
    if USING_NUMBA:
        return numba.njit(cache=cache, nogil=True)(fn)
    return fn


def py_func(fn):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(fn, "py_func", fn)
