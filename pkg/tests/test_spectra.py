import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from spinmz.collective_spin import make_basis
from spinmz.model import HamiltonianParams, build_hamiltonian
from spinmz.spectra import (
    SpectrumSweep,
    degeneracy_threshold,
    dense_eigensystem,
    eigensystem,
    is_reflection_symmetric,
    parity_isometry,
    precise_lowest_pair,
    spectrum_sweep,
    write_spectrum_csv,
)


def _h(n, delta=0.0, bx=0.0, lam=0.0):
    return build_hamiltonian(HamiltonianParams(make_basis(n), delta, bx, lam))


def test_single_spin_example():
    es = eigensystem(_h(1, bx=2.0), 2)
    assert np.allclose(es.energies, [-1, 1])


def test_bx_zero_delta_zero_is_degenerate_with_poles():
    es = eigensystem(_h(10, lam=1.0), 2)
    assert es.gap == 0.0
    assert es.energies[0] == pytest.approx(-25.0)
    # Diagonal case: ties keep the larger m first.
    assert np.argmax(np.abs(es.vectors[:, 0])) == 0
    assert np.argmax(np.abs(es.vectors[:, 1])) == 10


@given(st.integers(1, 25), st.floats(-2, 2), st.floats(0, 20), st.floats(-2, 2), st.integers(1, 4))
@example(1, 0.0, 2.225073858507203e-309, 2.225073858507203e-309, 1)
@example(1, 0.0, 0.0, 2.225073858507203e-309, 1)
def test_matches_dense_oracle(n, delta, bx, lam, k):
    k = min(k, n + 1)
    h = _h(n, delta, bx, lam)
    es = eigensystem(h, k)
    w, _ = dense_eigensystem(h)
    scale = max(h.norm_bound(), 1.0)
    assert np.allclose(es.energies, w[:k], atol=1e-9 * scale)
    assert np.all(np.diff(es.energies) >= 0)
    v = es.vectors
    assert np.allclose(v.T @ v, np.eye(k), atol=1e-9)
    residual = np.linalg.norm(h.to_dense() @ v - v * es.energies, axis=0)
    assert np.all(residual <= 1e-9 * scale)


@given(st.integers(2, 30), st.floats(1e-3, 50))
def test_parity_labels_at_zero_delta(n, bx):
    es = eigensystem(_h(n, 0.0, bx, 1.0), 2)
    assert list(es.parities) == [1, -1]
    refl = make_basis(n).reflection()
    assert np.allclose(es.vectors[refl, 0], es.vectors[:, 0])
    assert np.allclose(es.vectors[refl, 1], -es.vectors[:, 1])


@given(st.integers(1, 20), st.sampled_from([1, -1]))
def test_parity_isometry(n, parity):
    q = parity_isometry(make_basis(n), parity)
    assert np.allclose(q.T @ q, np.eye(q.shape[1]))
    refl = make_basis(n).reflection()
    assert np.allclose(q[refl], parity * q)
    other = parity_isometry(make_basis(n), -parity)
    assert q.shape[1] + other.shape[1] == n + 1


def test_reflection_check():
    assert is_reflection_symmetric(_h(6, 0.0, 1.0, 1.0))
    assert not is_reflection_symmetric(_h(6, 0.1, 1.0, 1.0))


def test_eigenvector_sign_convention():
    es = eigensystem(_h(6, 0.3, 2.0, 1.0), 3)
    for col in es.vectors.T:
        first = np.argmax(np.abs(col) > 1e-10 * np.abs(col).max())
        assert col[first] > 0


def test_k_out_of_range():
    with pytest.raises(ValueError):
        eigensystem(_h(2, bx=1.0), 4)


def _mp_gap_oracle(n, bx, lam, dps=200):
    """Gap from mpmath's dense eigensolver at high precision."""
    import mpmath
    h = _h(n, 0.0, bx, lam).to_dense()
    with mpmath.workdps(dps):
        w = sorted(mpmath.eigsy(mpmath.matrix(h.tolist()), eigvals_only=True))
        return float(w[0]), float(w[1] - w[0])


@pytest.mark.parametrize("n, bx", [(10, 0.5), (16, 0.2), (20, 1.0)])
def test_precise_lowest_pair_against_mpmath(n, bx):
    e0, gap = precise_lowest_pair(_h(n, 0.0, bx, 1.0))
    e0_ref, gap_ref = _mp_gap_oracle(n, bx, 1.0)
    assert e0 == pytest.approx(e0_ref, rel=1e-12)
    assert gap == pytest.approx(gap_ref, rel=1e-6)
    assert gap > 0


def test_perturbative_gap_scaling():
    # Splitting of the +-j pair at small Bx is O(Bx^N); check the ratio for
    # doubling Bx in a regime far below double precision.
    h1 = _h(12, 0.0, 0.01, 1.0)
    h2 = _h(12, 0.0, 0.02, 1.0)
    r = precise_lowest_pair(h2)[1] / precise_lowest_pair(h1)[1]
    assert r == pytest.approx(2**12, rel=1e-3)


def test_sweep_gap_positive_and_degenerate_at_zero():
    lam = 1.0
    grid = np.linspace(0, 10, 41)
    s = spectrum_sweep(make_basis(10), lam, 0.0, grid)
    assert s.gap[0] <= 1e-9 * lam
    assert np.all(s.gap[1:] > 0)
    assert np.array_equal(s.e1, s.e0 + s.gap)


def test_sweep_delta_quarter():
    lam = 2.0
    s = spectrum_sweep(make_basis(10), lam, lam / 4, [0.0, 1.0, 5.0])
    assert s.gap[0] == pytest.approx(10 * lam / 4, rel=1e-12)


def test_sweep_rejects_bad_input():
    with pytest.raises(ValueError):
        spectrum_sweep(make_basis(3), 1.0, 0.0, [])
    with pytest.raises(ValueError):
        spectrum_sweep(make_basis(3), -1.0, 0.0, [0.0])


def test_sweep_parallel_identical():
    grid = np.linspace(0, 8, 17)
    a = spectrum_sweep(make_basis(12), 1.0, 0.0, grid, workers=1)
    b = spectrum_sweep(make_basis(12), 1.0, 0.0, grid, workers=2)
    assert np.array_equal(a.gap, b.gap) and np.array_equal(a.e0, b.e0)


def test_degeneracy_threshold():
    s = SpectrumSweep(np.array([0.0, 1.0, 2.0, 3.0]), np.zeros(4), np.zeros(4),
                      np.array([0.0, 1e-12, 0.5, 2.0]))
    assert degeneracy_threshold(s, 1e-9) == 1.0
    assert degeneracy_threshold(s, 1.0) == 2.0
    assert degeneracy_threshold(s, 0.0) == 0.0
    with pytest.raises(ValueError):
        degeneracy_threshold(SpectrumSweep(np.array([1.0, 0.0]), *(np.zeros(2),) * 3), 1.0)


def test_degeneracy_threshold_delta_quarter_below_oracle_minimum():
    # At delta = lambda/4 the gap never falls below ~0.75 N delta (N=10) over Bx,
    # so any epsilon below that finds no degenerate point.
    lam = 1.0
    grid = np.linspace(0, 20, 201)
    s = spectrum_sweep(make_basis(10), lam, lam / 4, grid)
    oracle_min = min(np.diff(dense_eigensystem(_h(10, lam / 4, b, lam))[0][:2])[0] for b in grid)
    assert s.gap.min() == pytest.approx(oracle_min, rel=1e-9)
    assert degeneracy_threshold(s, 0.5 * 10 * lam / 4) == 0.0


def test_write_csv(tmp_path):
    s = spectrum_sweep(make_basis(4), 1.0, 0.0, [0.0, 1.0])
    text = write_spectrum_csv(s, tmp_path / "s.csv").read_text()
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    assert lines[0] == "bx,e0,e1,gap"
    assert len(lines) == 3
    assert "# n_ions=4" in text
