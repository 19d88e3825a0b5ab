import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from spinmz.collective_spin import (
    StateVector,
    basis_state,
    cat_state,
    expectation,
    make_basis,
    op_jz,
    spin_coherent_x,
)
from spinmz.dynamics import (
    RampSchedule,
    Segment,
    StepSizeError,
    adiabaticity_report,
    default_dt,
    free_evolve,
    instantaneous_eigenvector,
    linear_ramp,
    max_energy,
    propagate,
    propagator,
    write_trajectory_csv,
)
from spinmz.model import HamiltonianParams, build_hamiltonian


def test_schedule_basics():
    s = linear_ramp(5.0, 0.0, 2.0, 1.0)
    assert s.total_duration == pytest.approx(2.5)
    assert s.at(0.0) == (5.0, 0.0)
    assert s.at(1.25) == pytest.approx((2.5, 0.0))
    assert s.at(10.0) == (0.0, 0.0)
    r = s.reversed()
    assert r.at(0.0) == (0.0, 0.0) and r.at(2.5) == (5.0, 0.0)
    both = s.then(r)
    assert both.total_duration == pytest.approx(5.0)
    with pytest.raises(ValueError):
        s.then(linear_ramp(1, 0, 1, 2.0))
    with pytest.raises(ValueError):
        Segment(0.0, 1, 0)
    with pytest.raises(ValueError):
        linear_ramp(1, 0, 0.0, 1.0)


def test_constant_hamiltonian_matches_matrix_exponential():
    b = make_basis(4)
    hp = HamiltonianParams(b, delta=0.3, bx=1.1, lam=0.7)
    t = 3.0
    sched = RampSchedule((Segment(t, hp.bx, hp.bx, hp.delta, hp.delta),), hp.lam)
    u = propagator(b, sched, dt=0.01)
    exact = expm(-1j * t * build_hamiltonian(hp).to_dense())
    # Frozen midpoint is exact for a time-independent H.
    assert np.allclose(u, exact, atol=1e-10)


def test_single_spin_rabi_oracle():
    # N=1, H = -Bx Jx: |up> -> cos(Bx t/2)|up> + i sin(Bx t/2)|down>.
    b = make_basis(1)
    bx, t = 2.0, 0.9
    sched = RampSchedule((Segment(t, bx, bx),), 0.0)
    res = propagate(basis_state(b, "1/2"), sched, dt=1e-3)
    expected = np.array([math.cos(bx * t / 2), 1j * math.sin(bx * t / 2)])
    assert np.allclose(res.final_state.amplitudes, expected, atol=1e-12)


def test_linear_ramp_second_order_convergence():
    b = make_basis(6)
    sched = linear_ramp(8.0, 0.5, 4.0, 1.0, delta=0.2)
    psi0 = spin_coherent_x(b)
    ref = propagate(psi0, sched, dt=2e-4).final_state.amplitudes
    errs = []
    for dt in (0.01, 0.005):
        out = propagate(psi0, sched, dt=dt).final_state.amplitudes
        errs.append(1 - abs(np.vdot(ref, out)) ** 2)
    assert errs[0] / errs[1] > 3.5


@given(st.integers(1, 10), st.floats(0.1, 5), st.floats(-1, 1))
def test_unitarity(n, bx, delta):
    b = make_basis(n)
    sched = RampSchedule((Segment(1.0, bx, 0.0, delta, -delta),), 1.0)
    res = propagate(spin_coherent_x(b), sched)
    assert res.norm_drift <= 1e-8
    u = propagator(b, sched)
    assert np.allclose(u.conj().T @ u, np.eye(b.dim), atol=1e-10)


def test_time_reversal():
    # H is real, so conj(U(T)) applied through the reversed schedule undoes it.
    b = make_basis(8)
    sched = RampSchedule((Segment(2.0, 6.0, 0.5, 0.0, 0.3), Segment(1.0, 0.5, 3.0, 0.3, 0.3)), 1.0)
    psi0 = spin_coherent_x(b)
    forward = propagate(psi0, sched, dt=1e-3).final_state
    back = propagate(type(forward)(b, forward.amplitudes.conj()), sched.reversed(), dt=1e-3).final_state
    fid = abs(np.vdot(psi0.amplitudes.conj(), back.amplitudes)) ** 2
    assert fid >= 1 - 1e-6


def test_step_size_guard():
    b = make_basis(10)
    sched = linear_ramp(10.0, 0.0, 1.0, 1.0)
    emax = max_energy(b, sched)
    with pytest.raises(StepSizeError, match="exceeds"):
        propagate(spin_coherent_x(b), sched, dt=0.6 / emax)
    with pytest.raises(StepSizeError):
        propagate(spin_coherent_x(b), sched, dt=-1.0)
    propagate(spin_coherent_x(b), sched, dt=0.49 / emax)


def test_max_energy_exact_and_default_dt_rule():
    b = make_basis(5)
    sched = RampSchedule((Segment(1.0, 3.0, 0.0, 0.5, 0.0),), 1.0)
    ts = np.linspace(0, 1, 401)
    dense = max(np.abs(np.linalg.eigvalsh(build_hamiltonian(
        HamiltonianParams(b, *sched.at(t)[::-1], lam=1.0)).to_dense())).max() for t in ts)
    assert max_energy(b, sched) == pytest.approx(dense, rel=1e-12)
    dt = default_dt(b, sched)
    assert dt * (0.5 * 5 / 2 + 25 / 4 + 3.0 * 5 / 2) == pytest.approx(0.05)


def test_adiabatic_tracking_reports_overlap():
    b = make_basis(4)
    # Linear spin (lambda = 0) in a field rotating from x towards z.
    sched = linear_ramp(5.0, 0.0, 0.05, 0.0, delta=1.0)
    ground, gap = instantaneous_eigenvector(b, sched, 0.0)
    assert gap > 0
    res = propagate(StateVector(b, ground), sched, samples=10)
    assert res.sampled_trajectory[0].overlap == pytest.approx(1.0)
    rep = adiabaticity_report(res)
    assert rep.n_samples == 12
    assert 0.98 < rep.min_overlap <= 1.0
    assert res.sampled_trajectory[0].time == 0.0
    assert res.sampled_trajectory[-1].time == pytest.approx(sched.total_duration)


def test_write_trajectory(tmp_path):
    b = make_basis(2)
    res = propagate(spin_coherent_x(b), linear_ramp(2.0, 0.0, 1.0, 1.0), samples=3)
    lines = write_trajectory_csv(res, tmp_path / "t.csv").read_text().splitlines()
    assert len(lines) == 1 + len(res.sampled_trajectory)
    assert lines[0].startswith("time,") and lines[0].endswith("ground_overlap")


@given(st.integers(1, 20), st.floats(-50, 50), st.floats(0, 10))
def test_free_evolution_preserves_jz(n, omega0, t):
    b = make_basis(n)
    s = spin_coherent_x(b)
    out = free_evolve(s, omega0, t)
    assert expectation(op_jz(b), out) == pytest.approx(expectation(op_jz(b), s), abs=1e-12)
    assert np.allclose(out.populations(), s.populations())


def test_free_evolution_cat_phase():
    b = make_basis(5)
    phi = 0.37
    out = free_evolve(cat_state(b), phase=phi)
    rel = out.amplitudes[b.bottom] / out.amplitudes[b.top]
    assert np.angle(rel) == pytest.approx(5 * phi)


@given(st.integers(1, 9), st.floats(0, 100))
def test_phase_reduction_is_exact(n, phi):
    # Reduction modulo 4 pi must not change the state, including half-integer m.
    b = make_basis(n)
    s = spin_coherent_x(b)
    direct = s.amplitudes * np.exp(-1j * b.m_values * phi)
    assert np.allclose(free_evolve(s, phase=phi).amplitudes, direct, atol=1e-9)


def test_huge_omega0_phase():
    b = make_basis(3)
    omega0, t = 2 * math.pi * 3e9, 5e-3
    out = free_evolve(cat_state(b), omega0, t)
    assert abs(out.norm - 1) < 1e-12


def test_free_evolve_argument_errors():
    b = make_basis(2)
    with pytest.raises(ValueError):
        free_evolve(cat_state(b))
    with pytest.raises(ValueError):
        free_evolve(cat_state(b), 1.0, 1.0, phase=1.0)
    with pytest.raises(ValueError):
        free_evolve(cat_state(b), 1.0, -1.0)
