"""Small shared helpers: sinc convention, float/CSV formatting, threading."""

from __future__ import annotations

import os

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

THREADS_ENV_VAR = "FREQCOMB_THREADS"


def sinc(x):
    """Unnormalized sinc, sin(x)/x with sinc(0) = 1.

    numpy's ``sinc`` is the normalized sin(pi x)/(pi x); every time-window
    average in this package uses the unnormalized convention.
    """
    return np.sinc(np.asarray(x) / np.pi)


def format_float(x: float) -> str:
    """Deterministic decimal rendering with 17 significant digits."""
    x = float(x)
    if x == 0.0:
        x = 0.0  # fold negative zero
    return format(x, ".17g")


def worker_count() -> int:
    """Parallelism cap: FREQCOMB_THREADS if set, else the CPU count."""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is not None:
        n = int(raw)
        if n < 1:
            raise ValueError(f"{THREADS_ENV_VAR} must be a positive integer, got {raw!r}")
        return n
    return os.cpu_count() or 1


def complex_to_pair(z: complex) -> list[float]:
    return [float(np.real(z)), float(np.imag(z))]


def pair_to_complex(pair) -> complex:
    re, im = pair
    return complex(re, im)


def complex_matrix_to_lists(m: np.ndarray) -> list:
    """Row-major nested lists of [re, im] pairs (arbitrary array rank)."""
    m = np.asarray(m)
    if m.ndim == 0:
        return complex_to_pair(complex(m))
    return [complex_matrix_to_lists(row) for row in m]


def lists_to_complex_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise ValueError("complex data must be nested [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]
