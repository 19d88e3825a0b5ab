import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinmz.boson_validation import (
    CutoffWarning,
    SpinBosonSystem,
    build_spin_boson,
    effective_prefactor,
    sector_coupling,
    sector_spectrum,
)
from spinmz.collective_spin import make_basis

DELTA = 2 * math.pi * 1e4


def weak(n, n_max=60, ratio=0.1):
    # Omega_z eta_z / sqrt(N) = ratio * Delta
    return SpinBosonSystem(make_basis(n), n_max, ratio * DELTA * math.sqrt(n) / 0.1, 0.1, DELTA)


def test_zero_m_sector_is_bare_oscillator():
    spec = sector_spectrum(weak(4))
    m = make_basis(4).m_values
    row = spec[np.flatnonzero(m == 0)[0]]
    assert np.allclose(row, DELTA * np.arange(61), atol=1e-9 * DELTA)


def test_no_coupling_without_drive():
    s = SpinBosonSystem(make_basis(3), 10, 0.0, 0.1, DELTA)
    assert np.all(sector_coupling(s) == 0)


def test_coupling_values():
    s = weak(4)
    assert np.allclose(sector_coupling(s), 2 * make_basis(4).m_values * 0.1 * DELTA)


@given(st.integers(1, 8), st.floats(0.01, 0.5))
def test_sectors_pm_m_isospectral(n, ratio):
    spec = sector_spectrum(weak(n, 30, ratio))
    assert np.allclose(spec, spec[::-1], atol=1e-9 * DELTA)


def test_ground_energy_oracle():
    s = weak(4)
    spec = sector_spectrum(s)
    g = sector_coupling(s)
    assert np.allclose(spec[:, 0], -g**2 / DELTA, atol=1e-9 * DELTA)


def test_prefactor_report():
    s = weak(4)
    r = effective_prefactor(s)
    c_exact = 4 * s.omega_z**2 * s.eta_z**2 / (4 * DELTA)
    assert r.c_measured == pytest.approx(c_exact, rel=1e-6)
    assert r.fit_residual <= 1e-8 * DELTA
    assert r.excited_residual <= 1e-6 * DELTA
    assert r.ratio_to_model == pytest.approx(0.5, rel=1e-6)
    assert r.ratio_to_polaron == pytest.approx(1.0, rel=1e-6)
    assert not r.flagged
    data = json.loads(r.to_json())
    assert data["ratio_to_model"] == r.ratio_to_model
    assert "0.5" in r.summary()


def test_cutoff_convergence():
    r = effective_prefactor(weak(6, 40, 0.3))
    assert r.convergence_change <= 1e-9 * DELTA


def test_cutoff_flag():
    s = SpinBosonSystem(make_basis(10), 8, 2 * math.pi * 1e5, 0.1, DELTA)
    with pytest.warns(CutoffWarning):
        fam = build_spin_boson(s)
    assert fam.cutoff_flagged.any()
    r = effective_prefactor(s)
    assert r.flagged and r.messages


def test_validation():
    with pytest.raises(ValueError):
        SpinBosonSystem(make_basis(2), 3, 1.0, 0.1, DELTA)
    with pytest.raises(ValueError):
        SpinBosonSystem(make_basis(200), 200, 1.0, 0.1, DELTA)
    with pytest.raises(ValueError):
        SpinBosonSystem(make_basis(2), 10, 1.0, 0.1, 0.0)


def test_parallel_sectors_identical():
    s = weak(6, 30)
    assert np.array_equal(sector_spectrum(s, workers=1), sector_spectrum(s, workers=2))
