"""Collective spin operators and canonical states in the symmetric Dicke basis.

Index convention: basis index ``i`` in ``[0, N]`` carries ``m = j - i``, so
index 0 is the all-up state ``|N/2, +N/2>`` and index ``N`` is all-down.
Half-integers are kept as twice-value integers (``twice_j``, ``twice_m``).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

__all__ = [
    "SpinBasis",
    "StateVector",
    "TridiagonalOperator",
    "make_basis",
    "op_jz",
    "op_jz2",
    "op_jx",
    "dense_jy",
    "spin_coherent_x",
    "cat_state",
    "basis_state",
    "overlap",
    "expectation",
    "fix_global_phase",
]


@dataclass(frozen=True)
class SpinBasis:
    """Dicke basis of the ``j = N/2`` multiplet for ``n_ions`` spin-1/2 ions."""

    n_ions: int

    def __post_init__(self):
        if isinstance(self.n_ions, bool) or int(self.n_ions) != self.n_ions:
            raise TypeError(f"n_ions must be an integer, got {self.n_ions!r}")
        if self.n_ions < 1:
            raise ValueError(f"n_ions must be >= 1, got {self.n_ions}")
        object.__setattr__(self, "n_ions", int(self.n_ions))

    @property
    def twice_j(self) -> int:
        return self.n_ions

    @property
    def j(self) -> Fraction:
        return Fraction(self.n_ions, 2)

    @property
    def dim(self) -> int:
        return self.n_ions + 1

    def twice_m(self, index: int) -> int:
        if not 0 <= index <= self.n_ions:
            raise IndexError(f"index {index} outside [0, {self.n_ions}]")
        return self.n_ions - 2 * index

    def index_to_m(self, index: int) -> Fraction:
        return Fraction(self.twice_m(index), 2)

    def m_to_index(self, m) -> int:
        twice_m = Fraction(m) * 2
        if twice_m.denominator != 1:
            raise ValueError(f"m={m} is not a half-integer")
        twice_m = int(twice_m)
        if abs(twice_m) > self.n_ions or (self.n_ions - twice_m) % 2:
            raise ValueError(f"m={m} not in the j={self.j} multiplet")
        return (self.n_ions - twice_m) // 2

    @property
    def m_values(self) -> np.ndarray:
        """Float array of m, ordered by index (``+j`` first)."""
        return (self.n_ions - 2 * np.arange(self.dim)) / 2.0

    @property
    def top(self) -> int:
        """Index of ``m = +j``."""
        return 0

    @property
    def bottom(self) -> int:
        """Index of ``m = -j``."""
        return self.n_ions

    def reflection(self) -> np.ndarray:
        """Index permutation implementing ``m -> -m``."""
        return np.arange(self.dim)[::-1].copy()


def make_basis(n_ions: int) -> SpinBasis:
    return SpinBasis(n_ions)


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: SpinBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.basis.dim,):
            raise ValueError(
                f"amplitudes have shape {amps.shape}, expected ({self.basis.dim},)"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        return StateVector(self.basis, self.amplitudes / self.norm)

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def amplitude_at(self, m) -> complex:
        return complex(self.amplitudes[self.basis.m_to_index(m)])


@dataclass(frozen=True, eq=False)
class TridiagonalOperator:
    """Real symmetric tridiagonal operator on a Dicke basis."""

    basis: SpinBasis
    diagonal: np.ndarray
    off_diagonal: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diagonal, dtype=float)
        off = np.array(self.off_diagonal, dtype=float)
        if diag.shape != (self.basis.dim,) or off.shape != (self.basis.dim - 1,):
            raise ValueError("diagonal/off_diagonal sizes do not match the basis")
        diag.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "diagonal", diag)
        object.__setattr__(self, "off_diagonal", off)

    def to_dense(self) -> np.ndarray:
        return (
            np.diag(self.diagonal)
            + np.diag(self.off_diagonal, 1)
            + np.diag(self.off_diagonal, -1)
        )

    def apply(self, vec: np.ndarray) -> np.ndarray:
        vec = np.asarray(vec)
        out = self.diagonal * vec
        out[:-1] += self.off_diagonal * vec[1:]
        out[1:] += self.off_diagonal * vec[:-1]
        return out

    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        rows = np.abs(self.diagonal).copy()
        rows[:-1] += np.abs(self.off_diagonal)
        rows[1:] += np.abs(self.off_diagonal)
        return float(rows.max())

    def __add__(self, other: "TridiagonalOperator") -> "TridiagonalOperator":
        _check_same_basis(self.basis, other.basis)
        return TridiagonalOperator(
            self.basis,
            self.diagonal + other.diagonal,
            self.off_diagonal + other.off_diagonal,
        )

    def __mul__(self, scalar: float) -> "TridiagonalOperator":
        return TridiagonalOperator(
            self.basis, self.diagonal * scalar, self.off_diagonal * scalar
        )

    __rmul__ = __mul__

    def __neg__(self) -> "TridiagonalOperator":
        return self * -1.0

    def __sub__(self, other: "TridiagonalOperator") -> "TridiagonalOperator":
        return self + (-other)


def _check_same_basis(a: SpinBasis, b: SpinBasis) -> None:
    if a != b:
        raise ValueError(f"basis mismatch: N={a.n_ions} vs N={b.n_ions}")


def ladder_elements(basis: SpinBasis) -> np.ndarray:
    """``<j, m+1| J+ |j, m>`` for consecutive index pairs (i, i+1).

    Entry ``k`` couples index ``k`` (m) with index ``k+1`` (m-1); the
    value is ``sqrt(j(j+1) - m(m-1))`` computed in exact integers as
    ``sqrt((2j+2m)(2j-2m+2))/2``.
    """
    tj = basis.twice_j
    tm = tj - 2 * np.arange(basis.dim - 1)
    return np.sqrt((tj + tm) * (tj - tm + 2)) / 2.0


def op_jz(basis: SpinBasis) -> TridiagonalOperator:
    return TridiagonalOperator(basis, basis.m_values, np.zeros(basis.dim - 1))


def op_jz2(basis: SpinBasis) -> TridiagonalOperator:
    return TridiagonalOperator(basis, basis.m_values**2, np.zeros(basis.dim - 1))


def op_jx(basis: SpinBasis) -> TridiagonalOperator:
    return TridiagonalOperator(basis, np.zeros(basis.dim), ladder_elements(basis) / 2)


def dense_jy(basis: SpinBasis) -> np.ndarray:
    """Jy = (J+ - J-)/(2i) as a dense Hermitian matrix (not tridiagonal-real)."""
    jplus = np.diag(ladder_elements(basis), 1)
    return (jplus - jplus.T) / 2j


def fix_global_phase(amplitudes: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Rotate so the first (largest-m) non-negligible entry is real and >= 0."""
    amps = np.asarray(amplitudes, dtype=complex)
    mags = np.abs(amps)
    if mags.max() == 0:
        return amps.copy()
    first = int(np.argmax(mags > tol * mags.max()))
    return amps * (np.conj(amps[first]) / mags[first])


def spin_coherent_x(basis: SpinBasis, orientation: int = 1) -> StateVector:
    """Extremal Jx eigenstate with eigenvalue ``orientation * j``.

    Amplitudes are ``sqrt(C(N, i)) / 2**(N/2)`` at index ``i``, times
    ``(-1)**i`` for ``orientation = -1``. Physically this is a pi/2 pulse
    applied to the fully polarized state.
    """
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    n = basis.n_ions
    amps = np.sqrt([comb(n, i) for i in range(basis.dim)]) / 2.0 ** (n / 2)
    if orientation == -1:
        amps = amps * (-1.0) ** np.arange(basis.dim)
    return StateVector(basis, amps)


def cat_state(basis: SpinBasis, relative_phase: float = 0.0) -> StateVector:
    """``(|j, +j> + exp(i*phase) |j, -j>) / sqrt(2)``."""
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.top] += 1 / np.sqrt(2)
    amps[basis.bottom] += np.exp(1j * relative_phase) / np.sqrt(2)
    return StateVector(basis, amps)


def basis_state(basis: SpinBasis, m) -> StateVector:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.m_to_index(m)] = 1.0
    return StateVector(basis, amps)


def overlap(a: StateVector, b: StateVector) -> complex:
    _check_same_basis(a.basis, b.basis)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def expectation(op: TridiagonalOperator, s: StateVector) -> float:
    _check_same_basis(op.basis, s.basis)
    return float(np.real(np.vdot(s.amplitudes, op.apply(s.amplitudes))))
