"""Compute backend selection for the hot numeric kernels.

Two interchangeable kernel implementations exist:

* ``numpy``  - im2col + BLAS matmul convolutions (the default; on typical
  desktop CPUs the BLAS path wins, see benchmarks/bench_kernels.py)
* ``numba``  - @njit loop kernels, compiled on first use

The active backend is chosen once at import from the environment variable
``FUNDUSEG_BACKEND`` (``numpy`` or ``numba``) and can be overridden at
runtime with set_backend(), which tests and the benchmark use.
"""

import os

from .errors import ConfigError

ENV_VAR = "FUNDUSEG_BACKEND"

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_VALID = ("numpy", "numba")
_active = None


def _from_env() -> str:
    name = os.environ.get(ENV_VAR, "numpy").strip().lower()
    if name not in _VALID:
        raise ConfigError(f"{ENV_VAR}={name!r}: expected one of {_VALID}")
    return name


def set_backend(name: str) -> None:
    """Select the kernel backend by name ('numpy' or 'numba')."""
    global _active
    if name not in _VALID:
        raise ConfigError(f"unknown backend {name!r}: expected one of {_VALID}")
    if name == "numba" and not HAS_NUMBA:
        raise ConfigError("backend 'numba' requested but numba is not installed")
    _active = name


def get_backend() -> str:
    """Name of the active kernel backend."""
    global _active
    if _active is None:
        set_backend(_from_env())
    return _active
