"""Exact diagonalization of the spin-boson model behind the Jz^2 interaction.

The rotating-frame Hamiltonian ``Delta a^dag a - (2 Omega_z eta_z / sqrt(N)) Jz (a^dag + a)``
commutes with Jz, so each ``m`` sector is a displaced oscillator with
coupling ``g_m = 2 m Omega_z eta_z / sqrt(N)``. Its exact ground energy is
``-g_m^2 / Delta``, which makes the induced interaction ``-c m^2`` with
``c = 4 Omega_z^2 eta_z^2 / (N Delta)``. The module measures ``c`` on a
truncated Fock space and reports it against the prefactor 8 used by
:func:`spinmz.model.lambda_from_physical`.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .collective_spin import SpinBasis
from .parallel import parallel_map

__all__ = [
    "MAX_COMPOSITE_DIM",
    "CutoffWarning",
    "SpinBosonSystem",
    "SectorFamily",
    "PrefactorReport",
    "sector_coupling",
    "build_spin_boson",
    "sector_spectrum",
    "effective_prefactor",
]

MAX_COMPOSITE_DIM = 20_000


class CutoffWarning(UserWarning):
    """The Fock cutoff is too small for the requested coupling."""


@dataclass(frozen=True)
class SpinBosonSystem:
    basis: SpinBasis
    n_max: int
    omega_z: float
    eta_z: float
    big_delta: float

    def __post_init__(self):
        if self.n_max < 4:
            raise ValueError("n_max must be >= 4")
        if self.big_delta == 0:
            raise ValueError("big_delta must be nonzero")
        dim = self.basis.dim * (self.n_max + 1)
        if dim > MAX_COMPOSITE_DIM:
            raise ValueError(f"composite dimension {dim} exceeds {MAX_COMPOSITE_DIM}")

    @property
    def coupling(self) -> float:
        """``Omega_z eta_z / sqrt(N)``."""
        return self.omega_z * self.eta_z / math.sqrt(self.basis.n_ions)

    @property
    def prefactor_polaron(self) -> float:
        return 4 * self.omega_z**2 * self.eta_z**2 / (self.basis.n_ions * self.big_delta)

    @property
    def prefactor_model(self) -> float:
        return 8 * self.omega_z**2 * self.eta_z**2 / (self.basis.n_ions * self.big_delta)


def sector_coupling(sys: SpinBosonSystem) -> np.ndarray:
    """``g_m`` for every Dicke index (``m = j - i``)."""
    return 2 * sys.basis.m_values * sys.coupling


@dataclass(frozen=True, eq=False)
class SectorFamily:
    m_values: np.ndarray
    matrices: np.ndarray          # shape (dim, n_max+1, n_max+1)
    cutoff_flagged: np.ndarray    # per sector


def _sector_matrix(delta: float, g: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    h = np.diag(delta * n).astype(float)
    off = -g * np.sqrt(n[1:])
    h[n[1:], n[:-1]] = off
    h[n[:-1], n[1:]] = off
    return h


def build_spin_boson(sys: SpinBosonSystem) -> SectorFamily:
    """One real symmetric ``(n_max+1)``-square block per ``m`` sector.

    A sector is flagged when its mean displaced phonon number
    ``(g_m / Delta)^2`` exceeds ``n_max / 4``.
    """
    g = sector_coupling(sys)
    mats = np.stack([_sector_matrix(sys.big_delta, gm, sys.n_max) for gm in g])
    flagged = (g / sys.big_delta) ** 2 > sys.n_max / 4
    if flagged.any():
        warnings.warn(
            f"Fock cutoff n_max={sys.n_max} too small for max (g/Delta)^2 = "
            f"{np.max((g / sys.big_delta) ** 2):.3g}", CutoffWarning, stacklevel=2)
    return SectorFamily(sys.basis.m_values, mats, flagged)


def _eigvalsh(matrix: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(matrix)


def sector_spectrum(sys: SpinBosonSystem, *, workers: int = 1) -> np.ndarray:
    """Eigenvalues per sector, shape ``(dim, n_max+1)``, ascending in each row."""
    family = build_spin_boson(sys)
    rows = parallel_map(_eigvalsh, list(family.matrices), workers)
    return np.array(rows)


@dataclass(frozen=True, eq=False)
class PrefactorReport:
    c_measured: float
    offset: float
    fit_residual: float
    excited_residual: float
    convergence_change: float
    n_checked: int
    ratio_to_model: float
    ratio_to_polaron: float
    flagged: bool
    messages: list = field(default_factory=list)
    sector_energies: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "params": self.params,
            "c_measured": self.c_measured,
            "c_model": self.params["c_model"],
            "c_polaron": self.params["c_polaron"],
            "ratio_to_model": self.ratio_to_model,
            "ratio_to_polaron": self.ratio_to_polaron,
            "offset": self.offset,
            "fit_residual": self.fit_residual,
            "excited_residual": self.excited_residual,
            "convergence_change": self.convergence_change,
            "n_checked": self.n_checked,
            "flagged": self.flagged,
            "messages": self.messages,
            "sector_energies": self.sector_energies,
        }, sort_keys=True, indent=2)

    def summary(self) -> str:
        p = self.params
        lines = [
            f"spin-boson validation: N={p['n_ions']}, n_max={p['n_max']}",
            f"  measured c           = {self.c_measured!r} rad/s",
            f"  4 W^2 eta^2/(N Delta) = {p['c_polaron']!r} rad/s  (ratio {self.ratio_to_polaron:.9f})",
            f"  8 W^2 eta^2/(N Delta) = {p['c_model']!r} rad/s  (ratio {self.ratio_to_model:.9f})",
            f"  ground-fit residual  = {self.fit_residual:.3e} rad/s",
            f"  excited residual     = {self.excited_residual:.3e} rad/s over n < {self.n_checked}",
            f"  cutoff x1.5 change   = {self.convergence_change:.3e} rad/s",
        ]
        lines += [f"  ! {m}" for m in self.messages]
        lines.append("  status: " + ("FLAGGED" if self.flagged else "ok"))
        return "\n".join(lines)


def effective_prefactor(sys: SpinBosonSystem, *, n_check: int | None = None,
                        residual_tol: float = 1e-8, workers: int = 1) -> PrefactorReport:
    """Fit ``E_0(m) = -c m^2 + const`` over all sectors and check excited levels.

    Excited levels ``n < n_check`` (default ``n_max // 4``) are compared with
    ``Delta n - c m^2``; convergence is checked by repeating the
    diagonalization with a 50% larger cutoff. Residuals are in units of
    rad/s; ``flagged`` is set when either residual exceeds
    ``residual_tol * |Delta|`` or a sector hits the cutoff warning.
    """
    messages = []
    g_max = float(np.max(np.abs(sector_coupling(sys))))
    if g_max >= abs(sys.big_delta):
        messages.append(f"outside perturbative regime: |g_max| = {g_max:.3g} >= |Delta|")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CutoffWarning)
        spectrum = sector_spectrum(sys, workers=workers)
    messages += [str(w.message) for w in caught]

    m = sys.basis.m_values
    design = np.column_stack([-(m**2), np.ones_like(m)])
    (c, offset), *_ = np.linalg.lstsq(design, spectrum[:, 0], rcond=None)
    fit_residual = float(np.max(np.abs(design @ np.array([c, offset]) - spectrum[:, 0])))

    n_check = max(1, sys.n_max // 4) if n_check is None else n_check
    levels = np.arange(n_check)
    predicted = sys.big_delta * levels[None, :] - c * m[:, None] ** 2 + offset
    excited_residual = float(np.max(np.abs(spectrum[:, :n_check] - predicted)))

    bigger = SpinBosonSystem(sys.basis, int(math.ceil(1.5 * sys.n_max)), sys.omega_z,
                             sys.eta_z, sys.big_delta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CutoffWarning)
        spectrum_big = sector_spectrum(bigger, workers=workers)
    convergence = float(np.max(np.abs(spectrum_big[:, :n_check] - spectrum[:, :n_check])))

    limit = residual_tol * abs(sys.big_delta)
    flagged = fit_residual > limit or excited_residual > limit or bool(caught)
    if fit_residual > limit:
        messages.append(f"ground-energy fit residual {fit_residual:.3e} above "
                        f"{residual_tol:g}*|Delta|; increase n_max")
    if excited_residual > limit:
        messages.append(f"excited-level residual {excited_residual:.3e} above "
                        f"{residual_tol:g}*|Delta|; increase n_max or lower n_check")
    c_pub, c_pol = sys.prefactor_model, sys.prefactor_polaron
    n = sys.basis.n_ions
    energies = {repr(float(mm)): [float(x) for x in spectrum[i, :n_check]] for i, mm in enumerate(m)}
    return PrefactorReport(
        c_measured=float(c),
        offset=float(offset),
        fit_residual=fit_residual,
        excited_residual=excited_residual,
        convergence_change=convergence,
        n_checked=n_check,
        ratio_to_model=float(c / c_pub),
        ratio_to_polaron=float(c / c_pol),
        flagged=flagged,
        messages=messages,
        sector_energies=energies,
        params={"n_ions": n, "n_max": sys.n_max, "omega_z": sys.omega_z, "eta_z": sys.eta_z,
                "big_delta": sys.big_delta, "c_model": c_pub, "c_polaron": c_pol},
    )
