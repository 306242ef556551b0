"""Backend dispatch for the hot numeric kernels.

Each kernel exists twice with identical signatures and semantics: a numba
``@njit`` build in :mod:`.numba_impl` and a vectorized numpy build in
:mod:`.numpy_impl`. ``get_impl`` returns the module for the requested (or
environment-selected) backend; callers never import an impl module directly.
"""

from ..backend import active_backend

_KERNELS = ("mfvb_single", "mfvb_multi", "gibbs_single_chain", "gibbs_multi_chain")


def get_impl(backend: str = None):
    name = backend if backend is not None else active_backend()
    if name == "numba":
        from . import numba_impl as impl
    elif name == "numpy":
        from . import numpy_impl as impl
    else:
        raise ValueError(f"unknown backend {name!r}")
    return impl


def kernel_names() -> tuple:
    return _KERNELS
