"""Quantum Fisher information, Cramer-Rao bounds and frequency-uncertainty curves."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .collective_spin import SpinBasis
from .decoherence import DensityMatrix, DephasingParams, dephase_analytic, dephasing_rate, ghz_initial
from .protocol import ProtocolConfig, beam_split, recombination, sample_measurements

__all__ = [
    "MetrologyCurve",
    "MonteCarloResult",
    "sld",
    "qfi_from_sld",
    "qfi",
    "qfi_closed_form",
    "cramer_rao",
    "uncertainty_curve",
    "pole_probabilities_dephased",
    "monte_carlo_estimate",
    "write_metrology_csv",
]

SLD_CUTOFF = 1e-12


def _as_matrix(x) -> np.ndarray:
    return np.asarray(x.entries if isinstance(x, DensityMatrix) else x, dtype=complex)


def sld(rho, drho, *, cutoff: float = SLD_CUTOFF) -> np.ndarray:
    """Symmetric logarithmic derivative ``A`` with ``drho = (A rho + rho A) / 2``.

    Computed in the eigenbasis of ``rho``: ``A_ij = 2 drho_ij / (p_i + p_j)``,
    with entries where ``p_i + p_j <= cutoff * tr(rho)`` set to zero.
    """
    r = _as_matrix(rho)
    d = _as_matrix(drho)
    for name, mat in (("rho", r), ("drho", d)):
        if np.abs(mat - mat.conj().T).max() > 1e-10 * max(1.0, np.abs(mat).max()):
            raise ValueError(f"{name} is not Hermitian")
    p, v = np.linalg.eigh(r)
    d_eig = v.conj().T @ d @ v
    denom = p[:, None] + p[None, :]
    keep = denom > cutoff * np.real(np.trace(r))
    a_eig = np.where(keep, 2 * d_eig / np.where(keep, denom, 1.0), 0.0)
    a = v @ a_eig @ v.conj().T
    return 0.5 * (a + a.conj().T)


def qfi_from_sld(rho, drho) -> float:
    r = _as_matrix(rho)
    a = sld(r, drho)
    return float(np.real(np.trace(r @ a @ a)))


def _dephased_ghz(basis: SpinBasis, omega0: float, t: float, gamma: float):
    rho = dephase_analytic(ghz_initial(basis), DephasingParams(omega0, gamma), t)
    m = basis.m_values
    drho = rho.entries * (-1j * (m[:, None] - m[None, :]) * t)
    return rho, drho


def qfi(basis: SpinBasis, omega0: float, t: float, gamma: float) -> float:
    """QFI with respect to ``omega0`` of the dephased cat state, from the numerical SLD."""
    if t < 0 or gamma < 0:
        raise ValueError("t and gamma must be >= 0")
    rho, drho = _dephased_ghz(basis, omega0, t, gamma)
    return qfi_from_sld(rho, drho)


def qfi_closed_form(n_ions: int, t: float, gamma: float) -> float:
    return n_ions**2 * t**2 * math.exp(-2 * gamma * t * n_ions**2)


def cramer_rao(fisher: float, k: int) -> float:
    if not fisher > 0:
        raise ValueError("Fisher information must be > 0")
    if k < 1:
        raise ValueError("k must be >= 1")
    return 1.0 / math.sqrt(k * fisher)


@dataclass(frozen=True, eq=False)
class MetrologyCurve:
    n_grid: np.ndarray
    delta_omega_entangled: np.ndarray
    delta_omega_sql: np.ndarray
    delta_omega_hl: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def omega0(self) -> float:
        return self.params["omega0"]

    def normalized(self) -> dict[str, np.ndarray]:
        w = self.omega0
        return {
            "entangled": self.delta_omega_entangled / w,
            "sql": self.delta_omega_sql / w,
            "hl": self.delta_omega_hl / w,
        }


def uncertainty_curve(n_grid, t: float, k: int, gamma0: float, omega0: float, *,
                      convention: str = "single_ion", n_reference: int = 40) -> MetrologyCurve:
    """Entangled (cat), product-state (SQL) and Heisenberg-limit uncertainties.

    The entangled column is the Cramer-Rao bound of the dephased cat. The
    SQL column is independent single-ion Ramsey with the same per-ion
    coherence decay, ``exp(gamma T) / (sqrt(k N) T)``.
    """
    n = np.asarray(n_grid, dtype=int)
    if n.size == 0 or np.any(n < 1):
        raise ValueError("n_grid must be a nonempty list of positive integers")
    gam = np.array([dephasing_rate(gamma0, int(x), convention, n_reference) for x in n])
    entangled = np.exp(gam * t * n**2) / (math.sqrt(k) * n * t)
    sql = np.exp(gam * t) / (np.sqrt(k * n) * t)
    hl = 1.0 / (math.sqrt(k) * n * t)
    return MetrologyCurve(
        n_grid=n,
        delta_omega_entangled=entangled,
        delta_omega_sql=sql,
        delta_omega_hl=hl,
        params={"T": t, "k": k, "gamma0": gamma0, "omega0": omega0,
                "convention": convention, "n_reference": n_reference},
    )


def _pipeline_arrays(config: ProtocolConfig):
    psi = beam_split(config).state.amplitudes
    return np.outer(psi, psi.conj()), recombination(config).unitary


def pole_probabilities_dephased(config: ProtocolConfig, phase, gamma: float):
    """Pole probabilities ``(p_a, p_b)`` of the simulated sequence with dephased free evolution.

    ``phase`` is the accumulated ``omega0 * t_free`` (scalar or array); the
    dephasing rate ``gamma`` acts for ``config.t_free``.
    """
    rho_split, u = _pipeline_arrays(config)
    basis = config.basis
    m = basis.m_values
    dm = m[:, None] - m[None, :]
    decayed = rho_split * np.exp(-gamma * config.t_free * dm**2)
    phase = np.atleast_1d(np.asarray(phase, dtype=float))
    rotation = np.exp(-1j * phase[:, None, None] * dm)
    out = []
    for row in (u[basis.top], u[basis.bottom]):
        # p = sum_{m m'} U[row, m] rho_{m m'} e^{-i phi (m - m')} conj(U[row, m'])
        weights = row[:, None] * decayed * row.conj()[None, :]
        out.append(np.clip(np.real(np.einsum("ij,pij->p", weights, rotation)), 0.0, 1.0))
    return out[0], out[1]


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    delta_omega: float          # empirical spread of the frequency estimates, rad/s
    delta_omega_stderr: float   # statistical uncertainty of delta_omega
    cramer_rao: float           # 1/sqrt(k F_Q) for the same k, T, gamma
    estimates: np.ndarray       # omega0 deviations from the working point, rad/s
    k: int
    saturated: int              # estimates stuck at a branch edge
    flagged: bool

    def as_dict(self) -> dict:
        return {"delta_omega": self.delta_omega, "delta_omega_stderr": self.delta_omega_stderr,
                "cramer_rao": self.cramer_rao, "k": self.k, "n_estimates": len(self.estimates),
                "saturated": self.saturated, "flagged": self.flagged}


def monte_carlo_estimate(config: ProtocolConfig, k: int, rng_seed, *, gamma: float = 0.0,
                         n_estimates: int = 200, working_phase: float | None = None,
                         table_points: int = 8001) -> MonteCarloResult:
    """Empirical frequency uncertainty from ``n_estimates`` repetitions of ``k`` probes.

    Each probe is one run of the simulated sequence ending in a single pole
    measurement. An estimate inverts the observed pole-a frequency on the
    falling fringe branch that contains ``working_phase`` (default: the
    mid-fringe point of that branch). Only ``omega0 * t_free`` modulo the
    fringe period matters.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    n = config.basis.n_ions
    t = config.t_free
    if not t > 0:
        raise ValueError("Monte Carlo estimation needs t_free > 0")
    period = 2 * math.pi / n
    grid = np.linspace(0.0, period, table_points, endpoint=False)
    fringe, _ = pole_probabilities_dephased(config, grid, gamma)
    # Monotonic falling branch between the tabulated maximum and the next minimum.
    i_max = int(np.argmax(fringe))
    rolled_grid = np.concatenate([grid[i_max:], grid[:i_max] + period])
    rolled = np.concatenate([fringe[i_max:], fringe[:i_max]])
    i_min = int(np.argmin(rolled))
    branch, table = rolled_grid[:i_min + 1], rolled[:i_min + 1]
    if working_phase is None:
        phi_star = float(np.interp(0.5 * (table[0] + table[-1]), table[::-1], branch[::-1]))
    else:
        phi_star = branch[0] + (working_phase - branch[0]) % period
    if not branch[0] < phi_star < branch[-1] or not np.all(np.diff(table) < 0):
        raise ValueError("working point is not on a monotonic fringe branch; cannot invert")
    branch, table = branch[::-1], table[::-1]
    pa, pb = pole_probabilities_dephased(config, phi_star, gamma)
    counts = sample_measurements((pa[0], pb[0]), k, np.random.default_rng(rng_seed), size=n_estimates)
    freq = counts[:, 0] / k
    saturated = int(np.sum((freq <= table[0]) | (freq >= table[-1])))
    phi_hat = np.interp(freq, table, branch)
    estimates = (phi_hat - phi_star) / t
    spread = float(np.std(estimates, ddof=1))
    stderr = spread / math.sqrt(2 * (n_estimates - 1))
    fq = qfi_closed_form(n, t, gamma)
    return MonteCarloResult(
        delta_omega=spread,
        delta_omega_stderr=stderr,
        cramer_rao=cramer_rao(fq, k),
        estimates=estimates,
        k=k,
        saturated=saturated,
        flagged=saturated > 0 or spread == 0.0,
    )


def write_metrology_csv(curve: MetrologyCurve, path: str | Path) -> Path:
    path = Path(path)
    norm = curve.normalized()
    with path.open("w", newline="", encoding="utf-8") as fh:
        for key in sorted(curve.params):
            fh.write(f"# {key}={curve.params[key]!r}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "delta_omega_entangled", "delta_omega_sql", "delta_omega_hl",
                         "rel_entangled", "rel_sql", "rel_hl"])
        for i, n in enumerate(curve.n_grid):
            writer.writerow([str(int(n))] + [repr(float(x)) for x in (
                curve.delta_omega_entangled[i], curve.delta_omega_sql[i], curve.delta_omega_hl[i],
                norm["entangled"][i], norm["sql"][i], norm["hl"][i])])
    return path


def metrology_summary_json(curve: MetrologyCurve, monte_carlo: MonteCarloResult | None = None) -> str:
    n = curve.n_grid
    best = int(np.argmin(curve.delta_omega_entangled))
    summary = {
        "params": curve.params,
        "optimal_n": int(n[best]),
        "min_delta_omega_entangled": float(curve.delta_omega_entangled[best]),
        "entangled_exceeds_sql": [int(x) for x, e, s in zip(
            n, curve.delta_omega_entangled, curve.delta_omega_sql) if e > s],
    }
    if monte_carlo is not None:
        summary["monte_carlo"] = monte_carlo.as_dict()
    return json.dumps(summary, sort_keys=True, indent=2)
