"""Numba switch.

Set ``POPPROTO_NO_NUMBA=1`` to run every kernel as plain Python on numpy
arrays. Both paths execute the same source, so traces are identical.
"""
import os

NUMBA_ENABLED = os.environ.get("POPPROTO_NO_NUMBA", "0").lower() not in ("1", "true", "yes")

if NUMBA_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover
        NUMBA_ENABLED = False


def njit(func=None, **kwargs):
    """``numba.njit(cache=True, nogil=True)`` or the identity, per the env flag."""
    if func is None:
        return lambda f: njit(f, **kwargs)
    if not NUMBA_ENABLED:
        return func
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    kwargs.setdefault("error_model", "numpy")
    return numba.njit(**kwargs)(func)
