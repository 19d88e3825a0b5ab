"""The Mach-Zehnder sequence: split, free evolution, two-stage recombination, readout.

Pole ``a`` is ``m = +N/2`` (all up), pole ``b`` is ``m = -N/2`` (all down).

Recombination maps the even cat component onto the ground state at strong
Bx (inverse splitter at delta = 0), then switches on ``delta`` and ramps Bx
back to zero so the two lowest levels end on distinct poles. With
``H = delta*Jz - lambda*Jz**2`` the ground state at Bx = 0 is ``m = -N/2``
for delta > 0. ``recombine_sign = -1`` (the default) applies
``-delta_recombine`` so the even (cos) branch lands on pole a.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache, partial
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .collective_spin import SpinBasis, StateVector, cat_state, spin_coherent_x
from .dynamics import (
    AdiabaticityReport,
    RampSchedule,
    Segment,
    default_dt,
    free_evolve,
    instantaneous_eigenvector,
    max_energy,
    sampled_propagator,
)
from .model import HamiltonianParams, build_hamiltonian
from .parallel import parallel_map
from .spectra import eigensystem

__all__ = [
    "ProtocolConfig",
    "AdiabaticityError",
    "SplitResult",
    "Recombination",
    "ReadoutResult",
    "RunRecord",
    "FringeResult",
    "beam_split_schedule",
    "recombination_schedules",
    "beam_split",
    "recombination",
    "recombine_and_read",
    "ideal_readout",
    "pole_probabilities",
    "run_mz_sequence",
    "fringe_scan",
    "fit_fringe",
    "sample_measurements",
    "suggested_dt",
    "write_fringe_csv",
]


class AdiabaticityError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    """Parameters of one interferometer sequence (rad/s, s, rad/s^2)."""

    basis: SpinBasis
    lam: float
    alpha: float
    beta: float
    delta_recombine: float | None = None  # default lambda/8
    t_free: float = 5e-3
    dt: float | None = None
    shots: int | None = None
    rng_seed: int = 0
    recombine_sign: int = -1
    adiabatic_floor: float = 0.98
    leakage_tol: float = 0.02
    initial: str = "coherent"
    trajectory_samples: int = 40
    strict: bool = False

    def __post_init__(self):
        if self.delta_recombine is None:
            object.__setattr__(self, "delta_recombine", self.lam / 8)
        if not self.lam > 0:
            raise ValueError("protocol requires lambda > 0")
        if not self.alpha > 0:
            raise ValueError("ramp start alpha must be > 0")
        if not self.beta > 0:
            raise ValueError("ramp rate beta must be > 0")
        if not 0 < self.delta_recombine < self.lam / 4:
            raise ValueError(
                f"delta_recombine={self.delta_recombine:.6g} must lie in (0, lambda/4) = "
                f"(0, {self.lam / 4:.6g})"
            )
        if self.recombine_sign not in (1, -1):
            raise ValueError("recombine_sign must be +1 or -1")
        if self.t_free < 0:
            raise ValueError("t_free must be >= 0")
        if self.initial not in ("coherent", "ground"):
            raise ValueError("initial must be 'coherent' or 'ground'")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1 (or None for exact probabilities)")

    @property
    def ramp_duration(self) -> float:
        return self.alpha / self.beta

    @property
    def total_duration(self) -> float:
        return 3 * self.ramp_duration + self.t_free

    def as_dict(self) -> dict:
        d = asdict(self)
        d["n_ions"] = self.basis.n_ions
        del d["basis"]
        return d


def suggested_dt(config: ProtocolConfig, phase_per_step: float = 0.4) -> float:
    """``dt`` giving ``phase_per_step`` radians per step at the largest ||H||."""
    emax = max(max_energy(config.basis, s)
               for s in (beam_split_schedule(config), *recombination_schedules(config)))
    return phase_per_step / emax


def beam_split_schedule(config: ProtocolConfig) -> RampSchedule:
    return RampSchedule((Segment(config.ramp_duration, config.alpha, 0.0),), config.lam)


def recombination_schedules(config: ProtocolConfig) -> tuple[RampSchedule, RampSchedule]:
    delta = config.recombine_sign * config.delta_recombine
    stage1 = RampSchedule((Segment(config.ramp_duration, 0.0, config.alpha),), config.lam)
    stage2 = RampSchedule((Segment(config.ramp_duration, config.alpha, 0.0, delta, delta),),
                          config.lam)
    return stage1, stage2


def _dt(config: ProtocolConfig, schedule: RampSchedule) -> float:
    return config.dt if config.dt is not None else default_dt(config.basis, schedule)


def _report(times, overlaps, gaps) -> AdiabaticityReport:
    overlaps = np.asarray(overlaps)
    worst = int(np.argmin(overlaps))
    return AdiabaticityReport(float(overlaps[worst]), float(overlaps.mean()),
                              float(times[worst]), float(gaps[worst]), len(overlaps))


def _track(basis, schedule, snapshots, psi0, level, parity):
    times, overlaps, gaps = [], [], []
    for t, u in snapshots:
        target, gap = instantaneous_eigenvector(basis, schedule, t, level, parity)
        times.append(t)
        overlaps.append(min(1.0, abs(np.vdot(target, u @ psi0)) ** 2))
        gaps.append(gap)
    return _report(times, overlaps, gaps)


@dataclass(frozen=True, eq=False)
class SplitResult:
    state: StateVector
    cat_fidelity: float
    report: AdiabaticityReport
    flagged: bool
    duration: float


def _dynamics_key(config: ProtocolConfig) -> ProtocolConfig:
    """Config with fields that do not affect the coherent dynamics normalised."""
    return replace(config, shots=None, rng_seed=0, strict=False, t_free=0.0,
                   leakage_tol=0.02, adiabatic_floor=0.98)


def beam_split(config: ProtocolConfig) -> SplitResult:
    """Prepare the strong-coupling ground state and ramp Bx from alpha to 0 at delta = 0.

    Diagnostics track the lowest even-parity level, which the exact parity
    symmetry at delta = 0 keeps isolated from the near-degenerate odd level.
    """
    state, fidelity, report, duration = _beam_split(_dynamics_key(config))
    flagged = report.min_overlap < config.adiabatic_floor
    if flagged and config.strict:
        raise AdiabaticityError(
            f"beam splitter not adiabatic: min even-ground overlap {report.min_overlap:.4f} "
            f"< floor {config.adiabatic_floor} at t={report.worst_time:.3e} s"
        )
    return SplitResult(state, fidelity, report, bool(flagged), duration)


@lru_cache(maxsize=32)
def _beam_split(config: ProtocolConfig):
    basis = config.basis
    schedule = beam_split_schedule(config)
    if config.initial == "coherent":
        psi0 = spin_coherent_x(basis, +1)
    else:
        h = build_hamiltonian(HamiltonianParams(basis, 0.0, config.alpha, config.lam))
        psi0 = eigensystem(h, 1).states[0]
    snaps = sampled_propagator(basis, schedule, _dt(config, schedule), config.trajectory_samples)
    final = StateVector(basis, snaps[-1][1] @ psi0.amplitudes)
    report = _track(basis, schedule, snaps, psi0.amplitudes, 0, 1)
    fidelity = abs(np.vdot(cat_state(basis).amplitudes, final.amplitudes)) ** 2
    return final, float(fidelity), report, schedule.total_duration


@dataclass(frozen=True, eq=False)
class Recombination:
    unitary: np.ndarray
    reports: dict[str, AdiabaticityReport]
    flagged: bool
    duration: float


def recombination(config: ProtocolConfig) -> Recombination:
    """Unitary of both recombination stages plus per-branch adiabaticity reports."""
    unitary, reports, duration = _recombination(_dynamics_key(config))
    flagged = any(r.min_overlap < config.adiabatic_floor for r in reports.values())
    if flagged and config.strict:
        worst = min(reports.items(), key=lambda kv: kv[1].min_overlap)
        raise AdiabaticityError(f"recombination not adiabatic in {worst[0]}: {worst[1]}")
    return Recombination(unitary, reports, bool(flagged), duration)


@lru_cache(maxsize=32)
def _recombination(config: ProtocolConfig):
    basis = config.basis
    stage1, stage2 = recombination_schedules(config)
    snaps1 = sampled_propagator(basis, stage1, _dt(config, stage1), config.trajectory_samples)
    snaps2 = sampled_propagator(basis, stage2, _dt(config, stage2), config.trajectory_samples)
    u1 = snaps1[-1][1]
    even = cat_state(basis, 0.0).amplitudes
    odd = cat_state(basis, math.pi).amplitudes
    reports = {
        "stage1_even": _track(basis, stage1, snaps1, even, 0, 1),
        "stage1_odd": _track(basis, stage1, snaps1, odd, 0, -1),
        "stage2_ground": _track(basis, stage2, snaps2, u1 @ even, 0, None),
        "stage2_excited": _track(basis, stage2, snaps2, u1 @ odd, 1, None),
    }
    u = snaps2[-1][1] @ u1
    u.setflags(write=False)
    return u, reports, stage1.total_duration + stage2.total_duration


@dataclass(frozen=True)
class ReadoutResult:
    p_pole_a: float
    p_pole_b: float
    leakage: float
    leakage_flagged: bool
    adiabaticity_flagged: bool

    def __iter__(self):
        return iter((self.p_pole_a, self.p_pole_b))


def pole_probabilities(state: StateVector) -> tuple[float, float]:
    pops = state.populations()
    return float(pops[state.basis.top]), float(pops[state.basis.bottom])


def recombine_and_read(state: StateVector, config: ProtocolConfig) -> ReadoutResult:
    if state.basis != config.basis:
        raise ValueError("state basis does not match config")
    if abs(state.norm - 1) > 1e-9:
        raise ValueError("state must be normalized")
    rec = recombination(config)
    out = StateVector(config.basis, rec.unitary @ state.amplitudes)
    pa, pb = pole_probabilities(out)
    leak = max(0.0, 1.0 - pa - pb)
    return ReadoutResult(pa, pb, leak, leak > config.leakage_tol, rec.flagged)


def ideal_readout(state: StateVector) -> tuple[float, float]:
    """Adiabatic-limit recombination: weights of the even/odd cat components."""
    b = state.basis
    pa = abs(np.vdot(cat_state(b, 0.0).amplitudes, state.amplitudes)) ** 2
    pb = abs(np.vdot(cat_state(b, math.pi).amplitudes, state.amplitudes)) ** 2
    return float(pa), float(pb)


def sample_measurements(probabilities, shots: int, rng_seed, size=None) -> np.ndarray:
    """Multinomial counts for the outcomes in ``probabilities`` plus a final 'other' bin.

    ``rng_seed`` may be an int, a SeedSequence or a Generator. ``size``
    draws that many independent repetitions (leading axis).
    """
    p = np.clip(np.asarray(probabilities, dtype=float), 0.0, 1.0)
    total = p.sum()
    if total > 1 + 1e-9:
        raise ValueError(f"probabilities sum to {total:.12f} > 1")
    p = np.append(p, max(0.0, 1.0 - total))
    p = p / p.sum()
    rng = np.random.default_rng(rng_seed)
    return rng.multinomial(int(shots), p, size=size)


@dataclass(frozen=True)
class RunRecord:
    params: dict
    phase: float
    p_pole_a: float
    p_pole_b: float
    leakage: float
    split_fidelity: float
    diagnostics: dict
    flags: dict
    total_duration: float
    counts: list | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


def run_mz_sequence(config: ProtocolConfig, omega0: float | None = None, *,
                    phase: float | None = None, rng_seed=None) -> RunRecord:
    """Split, evolve freely by ``omega0 * t_free`` (or ``phase``), recombine, read out."""
    split = beam_split(config)
    if phase is None:
        if omega0 is None:
            raise ValueError("give omega0 or phase")
        phase = omega0 * config.t_free
    evolved = free_evolve(split.state, phase=phase)
    readout = recombine_and_read(evolved, config)
    rec = recombination(config)
    counts = None
    if config.shots:
        seed = config.rng_seed if rng_seed is None else rng_seed
        counts = sample_measurements((readout.p_pole_a, readout.p_pole_b), config.shots, seed).tolist()
    diagnostics = {"beam_split": asdict(split.report)}
    diagnostics.update({k: asdict(v) for k, v in rec.reports.items()})
    return RunRecord(
        params=config.as_dict(),
        phase=float(phase),
        p_pole_a=readout.p_pole_a,
        p_pole_b=readout.p_pole_b,
        leakage=readout.leakage,
        split_fidelity=split.cat_fidelity,
        diagnostics=diagnostics,
        flags={"split_adiabaticity": split.flagged,
               "recombine_adiabaticity": rec.flagged,
               "leakage": readout.leakage_flagged},
        total_duration=split.duration + config.t_free + rec.duration,
        counts=counts,
    )


@dataclass(frozen=True, eq=False)
class FringeResult:
    phase_grid: np.ndarray
    p_pole_a: np.ndarray
    p_pole_b: np.ndarray
    visibility: float
    fitted_phase_offset: float
    fitted_frequency: float
    fitted_period: float
    fit_params: dict = field(default_factory=dict)
    fit_stderr: dict = field(default_factory=dict)
    fit_ok: bool = True
    message: str = ""
    records: list = field(default_factory=list)

    def fitted_curve(self, phi=None) -> np.ndarray:
        phi = self.phase_grid if phi is None else np.asarray(phi)
        p = self.fit_params
        return _fringe_model(phi, p["A"], p["nu"], p["phi0"], p["C"])


def _fringe_model(phi, a, nu, phi0, c):
    return a * np.cos(nu * (phi - phi0) / 2) ** 2 + c


def fit_fringe(phi, p, nu_guess: float, sigma=None) -> tuple[dict, dict, bool, str]:
    """Least-squares fit of ``A cos^2(nu (phi - phi0) / 2) + C``.

    Returns (params, standard errors, ok, message). Parameters are
    normalised to ``A >= 0`` and ``phi0`` in ``[0, 2pi/nu)``.
    """
    phi = np.asarray(phi, dtype=float)
    p = np.asarray(p, dtype=float)
    # Linear start: A cos^2(x) + C = (C + A/2) + (A/2) cos(2x).
    design = np.column_stack([np.ones_like(phi), np.cos(nu_guess * phi), np.sin(nu_guess * phi)])
    coef, *_ = np.linalg.lstsq(design, p, rcond=None)
    amp = 2 * math.hypot(coef[1], coef[2])
    if amp < 1e-9:
        params = {"A": 0.0, "nu": float(nu_guess), "phi0": 0.0, "C": float(p.mean())}
        return params, {}, False, "no fringe contrast; frequency and phase undetermined"
    phi0 = math.atan2(coef[2], coef[1]) / nu_guess
    start = [amp, nu_guess, phi0, coef[0] - amp / 2]
    try:
        popt, pcov = curve_fit(_fringe_model, phi, p, p0=start, sigma=sigma,
                               absolute_sigma=sigma is not None, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        params = dict(zip(("A", "nu", "phi0", "C"), map(float, start)))
        return params, {}, False, f"fit failed: {exc}"
    a, nu, phi0, c = map(float, popt)
    if a < 0:
        a, c, phi0 = -a, c + a, phi0 + math.pi / nu
    if nu < 0:
        nu, phi0 = -nu, -phi0
    phi0 = phi0 % (2 * math.pi / nu)
    with np.errstate(invalid="ignore"):
        err = np.sqrt(np.diag(pcov))
    stderr = dict(zip(("A", "nu", "phi0", "C"), map(float, err)))
    return {"A": a, "nu": nu, "phi0": phi0, "C": c}, stderr, True, ""


def _run_point(args, config):
    phase, seed = args
    return run_mz_sequence(config, phase=phase, rng_seed=seed)


def fringe_scan(config: ProtocolConfig, phase_grid=None, *, t_grid=None, omega0=None,
                workers: int = 1, keep_records: bool = False) -> FringeResult:
    """Run the sequence over a grid of accumulated phases ``omega0 * T``.

    With ``t_grid`` and ``omega0`` the free-evolution time is scanned instead;
    ``fitted_frequency`` is then in rad/s (ideally ``N * omega0``). With a
    phase grid it is the dimensionless fringe multiplier (ideally ``N``).
    With ``config.shots`` set, sampled frequencies replace exact probabilities.
    """
    if t_grid is not None:
        if omega0 is None:
            raise ValueError("scanning T requires omega0")
        phases = omega0 * np.asarray(t_grid, dtype=float)
    else:
        phases = np.asarray(phase_grid, dtype=float)
    if phases.size < 8:
        raise ValueError("fringe scan needs at least 8 grid points")
    seeds = [int(s.generate_state(1)[0])
             for s in np.random.SeedSequence(config.rng_seed).spawn(len(phases))]
    # Build the cached stages once in this process before any fan-out.
    beam_split(config)
    recombination(config)
    records = parallel_map(partial(_run_point, config=config),
                           list(zip(phases.tolist(), seeds)), workers)
    if config.shots:
        counts = np.array([r.counts for r in records], dtype=float)
        pa, pb = counts[:, 0] / config.shots, counts[:, 1] / config.shots
        sigma = np.sqrt(np.clip(pa * (1 - pa), 1 / config.shots, None) / config.shots)
    else:
        pa = np.array([r.p_pole_a for r in records])
        pb = np.array([r.p_pole_b for r in records])
        sigma = None
    n = config.basis.n_ions
    params, stderr, ok, msg = fit_fringe(phases, pa, float(n), sigma)
    a, c = params["A"], params["C"]
    visibility = a / (a + 2 * c) if ok and a + 2 * c > 0 else 0.0
    nu = params["nu"]
    freq = nu * omega0 if t_grid is not None else nu
    return FringeResult(
        phase_grid=phases,
        p_pole_a=pa,
        p_pole_b=pb,
        visibility=float(min(max(visibility, 0.0), 1.0)),
        fitted_phase_offset=params["phi0"],
        fitted_frequency=float(freq),
        fitted_period=float(2 * math.pi / nu) if nu else float("inf"),
        fit_params=params,
        fit_stderr=stderr,
        fit_ok=ok,
        message=msg,
        records=records if keep_records else [],
    )


def write_fringe_csv(result: FringeResult, path: str | Path) -> Path:
    path = Path(path)
    fit = result.fitted_curve() if result.fit_params else np.full_like(result.phase_grid, np.nan)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["phi", "p_a", "p_b", "fit"])
        for row in zip(result.phase_grid, result.p_pole_a, result.p_pole_b, fit):
            writer.writerow([repr(float(x)) for x in row])
    return path
