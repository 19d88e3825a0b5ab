"""Schrodinger propagation under piecewise-linear Bx/delta ramps.

Each step of length ``dt`` applies the exact exponential of the Hamiltonian
frozen at the step midpoint (second-order exponential midpoint rule). Step
unitaries for a block of steps are built from one batched eigendecomposition
and multiplied together by pairwise reduction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .collective_spin import SpinBasis, StateVector
from .model import hamiltonian_arrays
from .spectra import parity_isometry

__all__ = [
    "Segment",
    "RampSchedule",
    "TrajectorySample",
    "PropagationResult",
    "AdiabaticityReport",
    "StepSizeError",
    "linear_ramp",
    "max_energy",
    "default_dt",
    "propagate",
    "propagator",
    "sampled_propagator",
    "free_evolve",
    "adiabaticity_report",
    "write_trajectory_csv",
]

MAX_PHASE_PER_STEP = 0.5
DEFAULT_PHASE_PER_STEP = 0.05
_CHUNK_ELEMENTS = 2**21


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    duration: float
    bx_start: float
    bx_end: float
    delta_start: float = 0.0
    delta_end: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration}")

    def at(self, tau: float) -> tuple[float, float]:
        f = tau / self.duration
        return (self.bx_start + (self.bx_end - self.bx_start) * f,
                self.delta_start + (self.delta_end - self.delta_start) * f)


@dataclass(frozen=True)
class RampSchedule:
    segments: tuple[Segment, ...]
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("schedule needs at least one segment")

    @property
    def total_duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    def at(self, t: float) -> tuple[float, float]:
        """(Bx, delta) at absolute time ``t``."""
        start = 0.0
        for seg in self.segments:
            if t <= start + seg.duration:
                return seg.at(min(max(t - start, 0.0), seg.duration))
            start += seg.duration
        return self.segments[-1].at(self.segments[-1].duration)

    def reversed(self) -> "RampSchedule":
        return RampSchedule(
            tuple(Segment(s.duration, s.bx_end, s.bx_start, s.delta_end, s.delta_start)
                  for s in reversed(self.segments)),
            self.lam,
        )

    def then(self, other: "RampSchedule") -> "RampSchedule":
        if other.lam != self.lam:
            raise ValueError("cannot concatenate schedules with different lambda")
        return RampSchedule(self.segments + other.segments, self.lam)


def linear_ramp(bx_start: float, bx_end: float, rate: float, lam: float,
                delta: float = 0.0) -> RampSchedule:
    """Bx moving linearly at ``|rate|`` (rad/s^2) from start to end at fixed delta."""
    if not rate > 0:
        raise ValueError("ramp rate must be > 0")
    duration = abs(bx_end - bx_start) / rate
    return RampSchedule((Segment(duration, bx_start, bx_end, delta, delta),), lam)


def _norm_bound(basis: SpinBasis, delta: float, bx: float, lam: float) -> float:
    n = basis.n_ions
    return abs(delta) * n / 2 + abs(lam) * n * n / 4 + abs(bx) * n / 2


def max_energy(basis: SpinBasis, schedule: RampSchedule) -> float:
    """max_t ||H(t)||, exact: the spectral norm is convex along an affine path."""
    best = 0.0
    for seg in schedule.segments:
        for bx, delta in ((seg.bx_start, seg.delta_start), (seg.bx_end, seg.delta_end)):
            diag, off = hamiltonian_arrays(basis, delta, bx, schedule.lam)
            if basis.dim == 1:
                w = diag
            else:
                w = eigvalsh_tridiagonal(diag, off)
            best = max(best, float(np.abs(w).max()))
    return best


def default_dt(basis: SpinBasis, schedule: RampSchedule,
               phase_per_step: float = DEFAULT_PHASE_PER_STEP) -> float:
    bound = max(
        _norm_bound(basis, d, b, schedule.lam)
        for seg in schedule.segments
        for b, d in ((seg.bx_start, seg.delta_start), (seg.bx_end, seg.delta_end))
    )
    if bound == 0:
        return schedule.total_duration
    return phase_per_step / bound


@dataclass(frozen=True, eq=False)
class TrajectorySample:
    time: float
    state: StateVector
    overlap: float
    gap: float


@dataclass(frozen=True, eq=False)
class PropagationResult:
    final_state: StateVector
    sampled_trajectory: list[TrajectorySample] = field(default_factory=list)
    min_ground_overlap: float = float("nan")
    norm_drift: float = 0.0
    n_steps: int = 0


@dataclass(frozen=True)
class AdiabaticityReport:
    min_overlap: float
    mean_overlap: float
    worst_time: float
    gap_at_worst: float
    n_samples: int


def _step_unitaries(basis, bx, delta, lam, dt):
    d = basis.dim
    diag, off = hamiltonian_arrays(basis, delta, bx, lam)
    h = np.zeros((len(bx), d, d))
    idx = np.arange(d)
    h[:, idx, idx] = diag
    h[:, idx[:-1], idx[1:]] = off
    h[:, idx[1:], idx[:-1]] = off
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * dt)[:, None, :]) @ np.swapaxes(v, 1, 2)


def _ordered_product(u: np.ndarray) -> np.ndarray:
    """``u[n-1] @ ... @ u[1] @ u[0]``."""
    while len(u) > 1:
        if len(u) % 2:
            u = np.concatenate([u, np.eye(u.shape[1])[None]])
        u = u[1::2] @ u[0::2]
    return u[0]


def _evolve(basis, columns, schedule, dt, checkpoints=()):
    """Advance ``columns`` through the schedule.

    Yields ``(step_index, time, columns)`` at every global step index in
    ``checkpoints`` (0 = initial), and finally at the last step.
    """
    cols = np.array(columns, dtype=complex)
    chunk = max(1, _CHUNK_ELEMENTS // (basis.dim * basis.dim))
    wanted = sorted(set(int(c) for c in checkpoints))
    global_step, t0 = 0, 0.0
    if 0 in wanted:
        yield 0, 0.0, cols
    for seg in schedule.segments:
        n = max(1, math.ceil(seg.duration / dt * (1 - 1e-12)))
        h = seg.duration / n
        local = 0
        while local < n:
            stop = min(n, local + chunk)
            for c in wanted:
                if global_step < c < global_step + (stop - local):
                    stop = local + (c - global_step)
                    break
            f = (np.arange(local, stop) + 0.5) * h / seg.duration
            bx = seg.bx_start + (seg.bx_end - seg.bx_start) * f
            delta = seg.delta_start + (seg.delta_end - seg.delta_start) * f
            cols = _ordered_product(_step_unitaries(basis, bx, delta, schedule.lam, h)) @ cols
            global_step += stop - local
            local = stop
            if global_step in wanted:
                yield global_step, t0 + local * h, cols
        t0 += seg.duration
    if global_step not in wanted:
        yield global_step, t0, cols


def _total_steps(schedule: RampSchedule, dt: float) -> int:
    return sum(max(1, math.ceil(s.duration / dt * (1 - 1e-12))) for s in schedule.segments)


def _check_dt(basis, schedule, dt):
    if dt is None:
        dt = default_dt(basis, schedule)
    if not dt > 0:
        raise StepSizeError(f"dt must be > 0, got {dt}")
    emax = max_energy(basis, schedule)
    if dt * emax > MAX_PHASE_PER_STEP:
        raise StepSizeError(
            f"dt*max|E| = {dt * emax:.3g} exceeds {MAX_PHASE_PER_STEP}; "
            f"use dt <= {MAX_PHASE_PER_STEP / emax:.3e} s "
            f"(default rule gives {default_dt(basis, schedule):.3e} s)"
        )
    return dt


def _instantaneous_target(basis, bx, delta, lam, level, parity):
    diag, off = hamiltonian_arrays(basis, delta, bx, lam)
    h = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    if parity is not None:
        q = parity_isometry(basis, parity)
        w, v = np.linalg.eigh(q.T @ h @ q)
        v = q @ v
    else:
        w, v = np.linalg.eigh(h)
    if level >= len(w):
        raise ValueError(f"level {level} not available in sector of size {len(w)}")
    neighbours = [abs(w[level] - w[i]) for i in (level - 1, level + 1) if 0 <= i < len(w)]
    return v[:, level], (min(neighbours) if neighbours else float("inf"))


def propagate(initial: StateVector, schedule: RampSchedule, dt: float | None = None, *,
              samples: int = 0, track_level: int = 0, parity: int | None = None) -> PropagationResult:
    """Evolve ``initial`` through ``schedule``.

    ``samples`` interior sample points (plus both endpoints) record the
    overlap with the instantaneous eigenstate ``track_level``, counted in
    the given parity sector (``+1``/``-1``) or in the full space.
    """
    basis = initial.basis
    if abs(initial.norm - 1) > 1e-9:
        raise ValueError(f"initial state not normalized (norm={initial.norm:.12f})")
    dt = _check_dt(basis, schedule, dt)
    n_total = _total_steps(schedule, dt)
    checkpoints = np.unique(np.linspace(0, n_total, samples + 2).round().astype(int))
    trajectory = []
    final = None
    for step, t, cols in _evolve(basis, initial.amplitudes, schedule, dt, checkpoints):
        final = cols
        bx, delta = schedule.at(t)
        target, gap = _instantaneous_target(basis, bx, delta, schedule.lam, track_level, parity)
        ov = float(min(1.0, abs(np.vdot(target, cols)) ** 2))
        trajectory.append(TrajectorySample(t, StateVector(basis, cols), ov, gap))
    norm_drift = abs(float(np.linalg.norm(final)) - 1.0)
    return PropagationResult(
        final_state=StateVector(basis, final),
        sampled_trajectory=trajectory,
        min_ground_overlap=min(s.overlap for s in trajectory),
        norm_drift=norm_drift,
        n_steps=n_total,
    )


def propagator(basis: SpinBasis, schedule: RampSchedule, dt: float | None = None) -> np.ndarray:
    """Full unitary of the schedule (columns are evolved basis states)."""
    dt = _check_dt(basis, schedule, dt)
    *_, (_, _, u) = _evolve(basis, np.eye(basis.dim), schedule, dt)
    return u


def sampled_propagator(basis: SpinBasis, schedule: RampSchedule, dt: float | None = None,
                       samples: int = 0) -> list[tuple[float, np.ndarray]]:
    """``[(t, U(t)), ...]`` at both endpoints and ``samples`` interior points."""
    dt = _check_dt(basis, schedule, dt)
    n_total = _total_steps(schedule, dt)
    checkpoints = np.unique(np.linspace(0, n_total, samples + 2).round().astype(int))
    return [(t, u) for _, t, u in _evolve(basis, np.eye(basis.dim), schedule, dt, checkpoints)]


def instantaneous_eigenvector(basis: SpinBasis, schedule: RampSchedule, t: float,
                              level: int = 0, parity: int | None = None):
    """``(vector, gap_to_neighbours)`` of H(t), optionally within a parity sector."""
    bx, delta = schedule.at(t)
    return _instantaneous_target(basis, bx, delta, schedule.lam, level, parity)


def free_evolve(state: StateVector, omega0: float | None = None, t: float | None = None, *,
                phase: float | None = None) -> StateVector:
    """Laser-off evolution: the amplitude at ``m`` picks up ``exp(-i m omega0 t)``.

    Pass either ``omega0`` and ``t`` or the accumulated phase
    ``phase = omega0 * t``. The phase is reduced modulo 4*pi, which is
    exact also for half-integer m.
    """
    if phase is None:
        if omega0 is None or t is None:
            raise ValueError("give omega0 and t, or phase")
        if t < 0:
            raise ValueError("free evolution time must be >= 0")
        phase = omega0 * t
    elif omega0 is not None or t is not None:
        raise ValueError("give either phase or (omega0, t), not both")
    phase = math.fmod(phase, 4 * math.pi)
    twice_m = basis_twice_m(state.basis)
    return StateVector(state.basis, state.amplitudes * np.exp(-0.5j * twice_m * phase))


def basis_twice_m(basis: SpinBasis) -> np.ndarray:
    return basis.n_ions - 2 * np.arange(basis.dim)


def adiabaticity_report(result: PropagationResult) -> AdiabaticityReport:
    samples = result.sampled_trajectory
    if not samples:
        raise ValueError("propagation result carries no trajectory samples")
    overlaps = np.array([s.overlap for s in samples])
    worst = int(np.argmin(overlaps))
    return AdiabaticityReport(
        min_overlap=float(overlaps[worst]),
        mean_overlap=float(overlaps.mean()),
        worst_time=samples[worst].time,
        gap_at_worst=samples[worst].gap,
        n_samples=len(samples),
    )


def write_trajectory_csv(result: PropagationResult, path: str | Path) -> Path:
    path = Path(path)
    samples = result.sampled_trajectory
    basis = result.final_state.basis
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time"] + [f"p_2m={tm}" for tm in basis_twice_m(basis)] + ["ground_overlap"])
        for s in samples:
            writer.writerow([repr(float(s.time))]
                            + [repr(float(p)) for p in s.state.populations()]
                            + [repr(s.overlap)])
    return path
