"""Compute-backend selection for the hot kernels.

The coordinate-ascent sweeps and the Gibbs chains exist in two functionally
equivalent implementations: numba ``@njit`` kernels and pure-numpy vectorized
fallbacks. The active one is chosen by the ``SEMVB_BACKEND`` environment
variable (``numba`` or ``numpy``); unset means numba when importable, numpy
otherwise. ``benchmarks/bench_backends.py`` compares the two.
"""

import os

_ENV_VAR = "SEMVB_BACKEND"
_VALID = ("numba", "numpy")

_numba_ok = None


def numba_available() -> bool:
    global _numba_ok
    if _numba_ok is None:
        try:
            import numba  # noqa: F401

            _numba_ok = True
        except ImportError:
            _numba_ok = False
    return _numba_ok


def active_backend() -> str:
    """Resolve the backend name currently in effect."""
    env = os.environ.get(_ENV_VAR, "").strip().lower()
    if env:
        if env not in _VALID:
            raise ValueError(
                f"{_ENV_VAR}={env!r} not understood; expected one of {_VALID}"
            )
        if env == "numba" and not numba_available():
            raise RuntimeError(f"{_ENV_VAR}=numba but numba is not importable")
        return env
    return "numba" if numba_available() else "numpy"
