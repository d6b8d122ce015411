"""Kernel backend selection.

Hot numeric kernels (sphere tracing, path tracing, counter RNG) exist twice:
a scalar-loop version compiled with numba and a vectorized pure-numpy
fallback.  ``INVSG_BACKEND`` picks one at import time:

    INVSG_BACKEND=numba   force numba (error if unavailable)
    INVSG_BACKEND=numpy   force the pure-numpy fallback
    unset / "auto"        numba when importable, numpy otherwise

Both paths share the same counter-based RNG streams, so results agree to
floating-point roundoff regardless of backend.
"""

import os

_choice = os.environ.get("INVSG_BACKEND", "auto").strip().lower()

if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"INVSG_BACKEND must be auto|numba|numpy, got {_choice!r}")

if _choice == "numpy":
    USING_NUMBA = False
else:
    try:
        import numba  # noqa: F401
        USING_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise RuntimeError("INVSG_BACKEND=numba but numba is not importable")
        USING_NUMBA = False

if USING_NUMBA:
    from numba import njit, prange  # noqa: F401

    def jit_kernel(func):
        """JIT a scalar kernel; cached to disk so repeat runs skip compilation."""
        return njit(func, cache=True)

    def jit_parallel(func):
        return njit(func, cache=True, parallel=True)
else:
    prange = range

    def jit_kernel(func):
        return func

    def jit_parallel(func):
        return func


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"
