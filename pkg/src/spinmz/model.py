"""Effective giant-spin Hamiltonian and the laboratory parameter map.

The Hamiltonian is ``H = delta*Jz - Bx*Jx - lambda*Jz**2``. All frequencies
are angular (rad/s).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .collective_spin import SpinBasis, TridiagonalOperator, ladder_elements

__all__ = [
    "HamiltonianParams",
    "PhysicalParams",
    "lambda_from_physical",
    "gamma0_from_physical",
    "build_hamiltonian",
    "hamiltonian_arrays",
    "spectrum_physical",
    "dephasing_physical",
]


@dataclass(frozen=True)
class HamiltonianParams:
    basis: SpinBasis
    delta: float = 0.0
    bx: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        for name in ("delta", "bx", "lam"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")


@dataclass(frozen=True)
class PhysicalParams:
    """Laboratory parameters (angular frequencies in rad/s)."""

    n_ions: int
    omega_z: float
    eta_z: float
    big_delta: float
    nu: float = 2 * math.pi * 1e6
    omega0: float = 2 * math.pi * 3e9
    gamma0_prime: float = 2 * math.pi * 20e6
    delta_prime: float = 2 * math.pi * 20e9

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if self.big_delta == 0:
            raise ValueError("detuning big_delta must be nonzero")
        if self.nu and abs(self.big_delta) > 0.1 * abs(self.nu):
            warnings.warn(
                f"|big_delta| = {abs(self.big_delta):.3g} is not << nu = {self.nu:.3g}; "
                "the Jz^2 interaction may be poorly approximated",
                stacklevel=3,
            )
        if self.delta_prime and abs(self.delta_prime) < 10 * abs(self.gamma0_prime):
            warnings.warn(
                "Raman detuning delta_prime is not >> gamma0_prime; the excited state "
                "is not adiabatically eliminated",
                stacklevel=3,
            )


def lambda_from_physical(p: PhysicalParams) -> float:
    """Nonlinearity ``8 Omega_z**2 eta_z**2 / (N Delta)``; sign follows Delta."""
    if p.big_delta == 0:
        raise ValueError("big_delta must be nonzero")
    return 8.0 * p.omega_z**2 * p.eta_z**2 / (p.n_ions * p.big_delta)


def gamma0_from_physical(p: PhysicalParams) -> float:
    """Single-ion Raman dephasing rate ``gamma0' Omega_z**2 / Delta'**2`` (1/s)."""
    if p.delta_prime == 0:
        raise ValueError("delta_prime must be nonzero")
    return p.gamma0_prime * p.omega_z**2 / p.delta_prime**2


def hamiltonian_arrays(basis: SpinBasis, delta, bx, lam):
    """Diagonal and off-diagonal arrays of H; ``delta``/``bx`` may be arrays.

    Array inputs broadcast along a leading axis, which the propagator uses
    to build a batch of midpoint Hamiltonians at once.
    """
    m = basis.m_values
    delta = np.asarray(delta, dtype=float)[..., None]
    bx = np.asarray(bx, dtype=float)[..., None]
    diag = delta * m - lam * m**2
    off = -0.5 * bx * ladder_elements(basis)
    return diag, off


def build_hamiltonian(hp: HamiltonianParams) -> TridiagonalOperator:
    diag, off = hamiltonian_arrays(hp.basis, hp.delta, hp.bx, hp.lam)
    return TridiagonalOperator(hp.basis, diag, off)


def spectrum_physical(n_ions: int) -> PhysicalParams:
    """Parameter set behind the N=10 and N=40 spectra.

    eta_z = 0.1, Delta = 0.01 MHz, Omega_z = 2pi x 100 kHz (N <= 10) or
    2pi x 200 kHz (otherwise).
    """
    omega_z = 2 * math.pi * (100e3 if n_ions <= 10 else 200e3)
    return PhysicalParams(n_ions=n_ions, omega_z=omega_z, eta_z=0.1,
                          big_delta=2 * math.pi * 1e4)


def dephasing_physical(n_ions: int) -> PhysicalParams:
    """Decoherence-study parameters: Omega_z = 2pi x 200 kHz, Delta' = 2pi x 20 GHz."""
    return PhysicalParams(n_ions=n_ions, omega_z=2 * math.pi * 200e3, eta_z=0.1,
                          big_delta=2 * math.pi * 1e4,
                          gamma0_prime=2 * math.pi * 20e6,
                          delta_prime=2 * math.pi * 20e9)
