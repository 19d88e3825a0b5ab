"""Correlated dephasing during free evolution.

Master equation on the Dicke basis::

    d rho/dt = -i omega0 [Jz, rho] + gamma (2 Jz rho Jz - Jz^2 rho - rho Jz^2)

so entry ``(m, m')`` evolves as ``exp(-i omega0 (m-m') t - gamma (m-m')^2 t)``.
``gamma`` is the single-ion rate by default, which makes the N-ion cat
coherence decay as ``exp(-gamma N^2 t)``; see :func:`dephasing_rate` for the
alternative readings of the rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collective_spin import SpinBasis, StateVector, cat_state

__all__ = [
    "DensityMatrix",
    "DephasingParams",
    "IntegrationError",
    "GAMMA_CONVENTIONS",
    "dephasing_rate",
    "ghz_initial",
    "pure_density",
    "dephase_analytic",
    "dephase_numeric",
    "coherence_magnitude",
    "trace_distance",
    "write_decoherence_csv",
]

GAMMA_CONVENTIONS = ("single_ion", "n_squared", "fixed_reference")


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    basis: SpinBasis
    entries: np.ndarray

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"density matrix shape {rho.shape} does not match dim {self.basis.dim}")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.entries)))

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.entries @ self.entries)))

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.entries)).copy()

    def hermiticity_error(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh((self.entries + self.entries.conj().T) / 2).min())


@dataclass(frozen=True)
class DephasingParams:
    omega0: float
    gamma: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")


def dephasing_rate(gamma0: float, n_ions: int, convention: str = "single_ion",
                   n_reference: int = 40) -> float:
    """Rate entering the master equation for a given single-ion rate ``gamma0``.

    ``single_ion``: the rate is ``gamma0`` (cat coherence ~ exp(-gamma0 N^2 t)).
    ``n_squared``: the rate is ``N^2 gamma0`` (cat coherence ~ exp(-gamma0 N^4 t)).
    ``fixed_reference``: the rate is ``n_reference^2 gamma0`` for every N, i.e. a
    fixed ``gamma T`` evaluated at one ensemble size.
    """
    if convention == "single_ion":
        return gamma0
    if convention == "n_squared":
        return gamma0 * n_ions**2
    if convention == "fixed_reference":
        return gamma0 * n_reference**2
    raise ValueError(f"unknown gamma convention {convention!r}; use one of {GAMMA_CONVENTIONS}")


def pure_density(state: StateVector) -> DensityMatrix:
    a = state.amplitudes
    return DensityMatrix(state.basis, np.outer(a, a.conj()))


def ghz_initial(basis: SpinBasis) -> DensityMatrix:
    return pure_density(cat_state(basis))


def _delta_m(basis: SpinBasis) -> np.ndarray:
    m = basis.m_values
    return m[:, None] - m[None, :]


def dephase_analytic(rho0: DensityMatrix, p: DephasingParams, t: float) -> DensityMatrix:
    if t < 0:
        raise ValueError("t must be >= 0")
    dm = _delta_m(rho0.basis)
    factor = np.exp(-1j * p.omega0 * t * dm - p.gamma * t * dm**2)
    return DensityMatrix(rho0.basis, rho0.entries * factor)


def _generator(jz, jz2, p: DephasingParams):
    def rhs(rho):
        comm = jz @ rho - rho @ jz
        return -1j * p.omega0 * comm + p.gamma * (2 * jz @ rho @ jz - jz2 @ rho - rho @ jz2)
    return rhs


def dephase_numeric(rho0: DensityMatrix, p: DephasingParams, t: float,
                    dt: float | None = None) -> DensityMatrix:
    """Fixed-step classical RK4 integration of the master equation.

    The default step keeps ``dt * (omega0 N + gamma N^2) <= 0.01``. Steps
    beyond ``2.5`` in that product are outside the RK4 stability region
    and are rejected.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    basis = rho0.basis
    n = basis.n_ions
    rate = abs(p.omega0) * n + p.gamma * n * n
    if dt is None:
        dt = 0.01 / rate if rate > 0 else max(t, 1.0)
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if dt * rate > 2.5:
        raise IntegrationError(
            f"dt*(|omega0| N + gamma N^2) = {dt * rate:.3g} > 2.5 is RK4-unstable; "
            f"use dt <= {2.5 / rate:.3e}"
        )
    if t == 0:
        return rho0
    steps = max(1, math.ceil(t / dt * (1 - 1e-12)))
    h = t / steps
    m = basis.m_values
    jz = np.diag(m).astype(complex)
    jz2 = np.diag(m * m).astype(complex)
    f = _generator(jz, jz2, p)
    rho = np.array(rho0.entries)
    trace0 = np.trace(rho)
    for _ in range(steps):
        k1 = f(rho)
        k2 = f(rho + 0.5 * h * k1)
        k3 = f(rho + 0.5 * h * k2)
        k4 = f(rho + h * k3)
        rho = rho + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
    drift = abs(np.trace(rho) - trace0)
    if drift > 1e-10:
        raise IntegrationError(f"trace drift {drift:.3e} exceeds 1e-10")
    if not np.all(np.isfinite(rho)):
        raise IntegrationError("integration produced non-finite entries")
    return DensityMatrix(basis, rho)


def coherence_magnitude(rho: DensityMatrix) -> float:
    """``|rho(+N/2, -N/2)|``."""
    return float(abs(rho.entries[rho.basis.top, rho.basis.bottom]))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    diff = a.entries - b.entries
    return float(0.5 * np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


def write_decoherence_csv(times, rhos, path: str | Path) -> Path:
    path = Path(path)
    basis = rhos[0].basis
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        twice_m = basis.n_ions - 2 * np.arange(basis.dim)
        writer.writerow(["t", "coherence", "purity"] + [f"p_2m={tm}" for tm in twice_m])
        for t, rho in zip(times, rhos):
            writer.writerow([repr(float(t)), repr(coherence_magnitude(rho)), repr(rho.purity)]
                            + [repr(float(x)) for x in rho.populations()])
    return path
