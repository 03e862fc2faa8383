"""Kernel backend selection.

The lattice dynamic-programming kernels exist twice: a numba-jitted loop
version (fast, the default) and a pure-numpy wavefront version. The env
var ENT_BACKEND picks one at call time:

    ENT_BACKEND=numba   force the jitted kernels (error if numba missing)
    ENT_BACKEND=numpy   force the vectorized numpy fallback
    unset / auto        numba when importable, numpy otherwise

`benchmarks/bench_transducer.py` compares the two paths.
"""

import os

from .errors import ArgumentError

ENV_VAR = "ENT_BACKEND"

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False


def backend_name() -> str:
    """Resolve the active backend, honoring ENT_BACKEND."""
    choice = os.environ.get(ENV_VAR, "auto").strip().lower() or "auto"
    if choice == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if choice not in ("numba", "numpy"):
        raise ArgumentError(
            f"{ENV_VAR} must be 'numba', 'numpy', or 'auto', got {choice!r}"
        )
    if choice == "numba" and not HAVE_NUMBA:
        raise ArgumentError(f"{ENV_VAR}=numba but numba is not importable")
    return choice


def use_numba() -> bool:
    return backend_name() == "numba"
