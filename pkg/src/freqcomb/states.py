"""Frequency-comb Hilbert space: combs, photon states, and unitary maps.

A comb of N evenly spaced lines omega_k = omega0 + k*delta_omega defines an
N-dimensional single-photon space. States hold complex amplitude vectors
(or matrices, for photon pairs) over those lines. All frequencies are
angular (rad/s); only frequency differences ever enter observables, so
omega0 is bookkeeping.

Everything is immutable after construction and every operation is a pure
function, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._util import complex_matrix_to_lists, lists_to_complex_matrix

NORM_TOL = 1e-12
UNITARY_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FrequencyComb:
    """Evenly spaced frequency grid (omega0, delta_omega, n_modes)."""

    omega0: float
    delta_omega: float
    n_modes: int

    def __post_init__(self):
        if self.delta_omega <= 0:
            raise ValueError("delta_omega must be positive")
        if self.n_modes < 1:
            raise ValueError("n_modes must be at least 1")

    @property
    def frequencies(self) -> np.ndarray:
        """Mode frequencies omega_k, strictly increasing."""
        return self.omega0 + self.delta_omega * np.arange(self.n_modes)

    @property
    def beat_period(self) -> float:
        """2*pi/delta_omega, the natural time scale of the comb."""
        return 2.0 * np.pi / self.delta_omega

    def same_grid(self, other: "FrequencyComb") -> bool:
        return (
            self.n_modes == other.n_modes
            and self.omega0 == other.omega0
            and self.delta_omega == other.delta_omega
        )

    def to_dict(self) -> dict:
        return {
            "omega0_rad_s": self.omega0,
            "delta_omega_rad_s": self.delta_omega,
            "n_modes": self.n_modes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrequencyComb":
        return cls(d["omega0_rad_s"], d["delta_omega_rad_s"], int(d["n_modes"]))


def _check_same_comb(a: FrequencyComb, b: FrequencyComb):
    if not a.same_grid(b):
        raise ValueError("frequency combs do not match")


@dataclass(frozen=True, eq=False)
class SinglePhotonState:
    """Single photon spread over the comb: amplitude c_k on line omega_k."""

    comb: FrequencyComb
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex)
        if amp.shape != (self.comb.n_modes,):
            raise ValueError(
                f"expected {self.comb.n_modes} amplitudes, got shape {amp.shape}"
            )
        norm_sq = float(np.sum(np.abs(amp) ** 2))
        if abs(norm_sq - 1.0) > NORM_TOL * max(1.0, norm_sq):
            raise ValueError(f"state is not normalized: sum |c_k|^2 = {norm_sq!r}")
        object.__setattr__(self, "amplitudes", _readonly(amp))

    def to_dict(self) -> dict:
        return {
            "comb": self.comb.to_dict(),
            "amplitudes": complex_matrix_to_lists(self.amplitudes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SinglePhotonState":
        return cls(FrequencyComb.from_dict(d["comb"]), lists_to_complex_matrix(d["amplitudes"]))


@dataclass(frozen=True, eq=False)
class BipartitePhotonState:
    """Photon pair over a shared comb: c_{kl} multiplies a+_k b+_l."""

    comb: FrequencyComb
    amplitudes: np.ndarray

    def __post_init__(self):
        n = self.comb.n_modes
        amp = np.array(self.amplitudes, dtype=complex)
        if amp.shape != (n, n):
            raise ValueError(f"expected {n}x{n} amplitude matrix, got shape {amp.shape}")
        norm_sq = float(np.sum(np.abs(amp) ** 2))
        if abs(norm_sq - 1.0) > NORM_TOL * max(1.0, norm_sq):
            raise ValueError(f"state is not normalized: sum |c_kl|^2 = {norm_sq!r}")
        object.__setattr__(self, "amplitudes", _readonly(amp))

    def to_dict(self) -> dict:
        return {
            "comb": self.comb.to_dict(),
            "amplitudes": complex_matrix_to_lists(self.amplitudes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BipartitePhotonState":
        return cls(FrequencyComb.from_dict(d["comb"]), lists_to_complex_matrix(d["amplitudes"]))


@dataclass(frozen=True, eq=False)
class UnitaryMap:
    """N x N unitary acting on comb-mode amplitudes."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("unitary must be a square matrix")
        dev = np.linalg.norm(m @ m.conj().T - np.eye(m.shape[0]))
        if dev > UNITARY_TOL:
            raise ValueError(f"matrix is not unitary: ||U U+ - I||_F = {dev:.3e}")
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def n_modes(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        return {"matrix": complex_matrix_to_lists(self.matrix)}

    @classmethod
    def from_dict(cls, d: dict) -> "UnitaryMap":
        return cls(lists_to_complex_matrix(d["matrix"]))


def basis_state(comb: FrequencyComb, k: int) -> SinglePhotonState:
    """The photon sitting entirely on line omega_k."""
    if not 0 <= k < comb.n_modes:
        raise IndexError(f"mode index {k} out of range for {comb.n_modes} modes")
    amp = np.zeros(comb.n_modes, dtype=complex)
    amp[k] = 1.0
    return SinglePhotonState(comb, amp)


def make_bell_state(comb: FrequencyComb) -> BipartitePhotonState:
    """Maximally entangled pair with anti-correlated lines.

    c_{k,l} = 1/sqrt(N) when l = N-1-k and 0 otherwise: detecting photon a
    on line k pins photon b to the mirrored line N-1-k.
    """
    n = comb.n_modes
    amp = np.zeros((n, n), dtype=complex)
    amp[np.arange(n), n - 1 - np.arange(n)] = 1.0 / np.sqrt(n)
    return BipartitePhotonState(comb, amp)


def apply_unitary(state: SinglePhotonState, u: UnitaryMap) -> SinglePhotonState:
    """Mix comb modes: amplitudes' = U @ amplitudes."""
    if u.n_modes != state.comb.n_modes:
        raise ValueError(
            f"dimension mismatch: unitary is {u.n_modes}-mode, state is "
            f"{state.comb.n_modes}-mode"
        )
    return SinglePhotonState(state.comb, u.matrix @ state.amplitudes)


def inner_product(a: SinglePhotonState, b: SinglePhotonState) -> complex:
    """<a|b> = sum_k conj(a_k) b_k."""
    _check_same_comb(a.comb, b.comb)
    return complex(np.vdot(a.amplitudes, b.amplitudes))
