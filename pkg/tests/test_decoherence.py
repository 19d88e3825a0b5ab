import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinmz.collective_spin import make_basis, spin_coherent_x
from spinmz.decoherence import (
    DensityMatrix,
    DephasingParams,
    IntegrationError,
    coherence_magnitude,
    dephase_analytic,
    dephase_numeric,
    dephasing_rate,
    ghz_initial,
    pure_density,
    trace_distance,
    write_decoherence_csv,
)


def _random_density(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n + 1, n + 1)) + 1j * rng.normal(size=(n + 1, n + 1))
    rho = a @ a.conj().T
    return DensityMatrix(make_basis(n), rho / np.trace(rho))


def _check_physical(rho):
    assert rho.hermiticity_error() <= 1e-10
    assert abs(rho.trace - 1) <= 1e-10
    assert rho.min_eigenvalue() >= -1e-9


def test_ghz_initial():
    rho = ghz_initial(make_basis(4))
    assert rho.purity == pytest.approx(1.0)
    nz = np.argwhere(np.abs(rho.entries) > 0)
    assert len(nz) == 4
    assert np.allclose(rho.entries[tuple(nz.T)], 0.5)
    assert rho.hermiticity_error() == 0
    assert coherence_magnitude(rho) == pytest.approx(0.5)


def test_analytic_ghz_factor():
    n, omega0, gamma, t = 5, 3.0, 0.2, 0.7
    rho = dephase_analytic(ghz_initial(make_basis(n)), DephasingParams(omega0, gamma), t)
    b = make_basis(n)
    expected = 0.5 * np.exp(-gamma * t * n * n - 1j * omega0 * n * t)
    assert rho.entries[b.top, b.bottom] == pytest.approx(expected, rel=1e-12)
    assert rho.entries[b.bottom, b.top] == pytest.approx(np.conj(expected), rel=1e-12)


def test_n2_example():
    rho = dephase_analytic(ghz_initial(make_basis(2)), DephasingParams(0.0, 0.5), 1.0)
    assert coherence_magnitude(rho) / 0.5 == pytest.approx(math.exp(-2), rel=1e-12)
    assert coherence_magnitude(rho) / 0.5 == pytest.approx(0.13534, abs=1e-5)


def test_zero_gamma_is_unitary():
    rho0 = pure_density(spin_coherent_x(make_basis(6)))
    rho = dephase_analytic(rho0, DephasingParams(4.0, 0.0), 2.3)
    assert rho.purity == pytest.approx(1.0, abs=1e-12)


@given(st.integers(1, 10), st.integers(0, 2**32), st.floats(0, 5), st.floats(0, 1), st.floats(0, 2))
def test_analytic_invariants(n, seed, omega0, gamma, t):
    rho0 = _random_density(n, seed)
    rho = dephase_analytic(rho0, DephasingParams(omega0, gamma), t)
    _check_physical(rho)
    assert np.array_equal(np.diag(rho.entries), np.diag(rho0.entries))


@given(st.integers(1, 8), st.floats(0, 3), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_semigroup(n, omega0, gamma, t1, t2):
    p = DephasingParams(omega0, gamma)
    rho0 = ghz_initial(make_basis(n))
    direct = dephase_analytic(rho0, p, t1 + t2)
    composed = dephase_analytic(dephase_analytic(rho0, p, t1), p, t2)
    assert np.allclose(direct.entries, composed.entries, rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("n", [2, 5, 10])
@pytest.mark.parametrize("gamma_t", [0.1, 1.0])
def test_numeric_matches_analytic(n, gamma_t):
    t = 1.0
    p = DephasingParams(omega0=2.0, gamma=gamma_t / t)
    for rho0 in (ghz_initial(make_basis(n)), _random_density(n, n)):
        a = dephase_analytic(rho0, p, t)
        b = dephase_numeric(rho0, p, t)
        assert trace_distance(a, b) <= 1e-8
        _check_physical(b)


def test_numeric_fourth_order():
    rho0 = _random_density(4, 3)
    p = DephasingParams(1.0, 0.5)
    exact = dephase_analytic(rho0, p, 1.0)
    e1 = trace_distance(exact, dephase_numeric(rho0, p, 1.0, dt=0.04))
    e2 = trace_distance(exact, dephase_numeric(rho0, p, 1.0, dt=0.02))
    assert 12 < e1 / e2 < 20


def test_numeric_fixed_point_and_errors():
    rho0 = DensityMatrix(make_basis(3), np.diag([0.1, 0.2, 0.3, 0.4]))
    out = dephase_numeric(rho0, DephasingParams(0.0, 0.0), 1.0)
    assert np.array_equal(out.entries, rho0.entries)
    with pytest.raises(IntegrationError, match="unstable"):
        dephase_numeric(ghz_initial(make_basis(4)), DephasingParams(1.0, 1.0), 1.0, dt=1.0)
    with pytest.raises(ValueError):
        dephase_numeric(rho0, DephasingParams(0.0, 0.0), -1.0)
    with pytest.raises(ValueError):
        DephasingParams(0.0, -1.0)
    with pytest.raises(ValueError):
        DensityMatrix(make_basis(3), np.eye(3))


def test_decay_exponent_scales_as_n_squared():
    gamma = 0.3
    rates = []
    ns = [2, 4, 8]
    t = np.linspace(0, 1, 11)
    for n in ns:
        rho0 = ghz_initial(make_basis(n))
        coh = [coherence_magnitude(dephase_analytic(rho0, DephasingParams(0, gamma), x)) for x in t]
        rates.append(-np.polyfit(t, np.log(coh), 1)[0])
    slope = np.polyfit(np.log(ns), np.log(rates), 1)[0]
    assert slope == pytest.approx(2.0, rel=0.01)
    assert rates[0] == pytest.approx(gamma * 4, rel=1e-9)


def test_dephasing_rate_conventions():
    assert dephasing_rate(0.5, 3) == 0.5
    assert dephasing_rate(0.5, 3, "n_squared") == 4.5
    assert dephasing_rate(0.5, 3, "fixed_reference", 40) == 800.0
    with pytest.raises(ValueError):
        dephasing_rate(0.5, 3, "bogus")


def test_trace_distance_properties():
    a, b = _random_density(3, 1), _random_density(3, 2)
    assert trace_distance(a, a) == pytest.approx(0.0, abs=1e-15)
    assert trace_distance(a, b) == pytest.approx(trace_distance(b, a))
    assert 0 < trace_distance(a, b) <= 1


def test_csv(tmp_path):
    rho0 = ghz_initial(make_basis(2))
    rhos = [dephase_analytic(rho0, DephasingParams(0, 1.0), t) for t in (0, 0.5)]
    lines = write_decoherence_csv([0, 0.5], rhos, tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,coherence,purity,p_2m=2,p_2m=0,p_2m=-2"
    assert len(lines) == 3
