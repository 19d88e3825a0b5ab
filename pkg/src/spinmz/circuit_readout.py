"""Individually addressed readout on the full 2^N register.

Conventions: qubit 1 is the most significant bit of the computational
index, bit value 1 is spin up and bit value 0 is spin down, so
``|0...0>`` is all ions down. Qubit indices are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collective_spin import StateVector
from .dynamics import free_evolve

__all__ = [
    "MAX_QUBITS",
    "FullRegisterState",
    "embed_dicke",
    "apply_cnot_fanout",
    "apply_hadamard",
    "first_qubit_marginals",
    "collective_jz_full",
    "readout_sequence",
]

MAX_QUBITS = 14

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2)


@dataclass(frozen=True, eq=False)
class FullRegisterState:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits={self.n_qubits} outside [1, {MAX_QUBITS}]")
        amp = np.array(self.amplitudes, dtype=complex)
        if amp.shape != (2**self.n_qubits,):
            raise ValueError(f"need {2**self.n_qubits} amplitudes, got shape {amp.shape}")
        norm = np.linalg.norm(amp)
        if abs(norm - 1) > 1e-9:
            raise ValueError(f"register state norm {norm:.12f} differs from 1 by more than 1e-9")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    def tensor(self) -> np.ndarray:
        """Amplitudes as an array with one axis of length 2 per qubit (qubit 1 first)."""
        return self.amplitudes.reshape((2,) * self.n_qubits)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _popcounts(n: int) -> np.ndarray:
    idx = np.arange(2**n)
    return np.array([bin(i).count("1") for i in idx])


def embed_dicke(state: StateVector) -> FullRegisterState:
    """Map ``|j, m>`` to the uniform superposition of bitstrings with ``j + m`` up-spins."""
    n = state.basis.n_ions
    if n > MAX_QUBITS:
        raise ValueError(f"N={n} exceeds the {MAX_QUBITS}-qubit register limit")
    ups = _popcounts(n)
    # Dicke index i has m = j - i, i.e. N - i up-spins.
    coeff = state.amplitudes[n - ups]
    weights = np.array([math.comb(n, int(k)) for k in ups], dtype=float)
    return FullRegisterState(n, coeff / np.sqrt(weights))


def _check_qubit(state: FullRegisterState, qubit: int) -> None:
    if not 1 <= qubit <= state.n_qubits:
        raise ValueError(f"qubit index {qubit} outside [1, {state.n_qubits}]")


def apply_cnot_fanout(state: FullRegisterState, control_index: int = 1) -> FullRegisterState:
    """Flip every other qubit when ``control_index`` is up."""
    _check_qubit(state, control_index)
    psi = state.tensor().copy()
    axis = control_index - 1
    sel = [slice(None)] * state.n_qubits
    sel[axis] = 1
    sub = psi[tuple(sel)]
    # Flipping all targets reverses every remaining axis.
    psi[tuple(sel)] = sub[(slice(None, None, -1),) * sub.ndim]
    return FullRegisterState(state.n_qubits, psi.reshape(-1))


def apply_hadamard(state: FullRegisterState, qubit_index: int = 1) -> FullRegisterState:
    """Standard Hadamard on one qubit, with down = ``|0>``."""
    _check_qubit(state, qubit_index)
    psi = np.moveaxis(np.tensordot(_HADAMARD, state.tensor(), axes=([1], [qubit_index - 1])),
                      0, qubit_index - 1)
    return FullRegisterState(state.n_qubits, psi.reshape(-1))


def first_qubit_marginals(state: FullRegisterState) -> tuple[float, float]:
    """``(P(qubit 1 down), P(qubit 1 up))``."""
    probs = np.abs(state.amplitudes) ** 2
    half = probs.size // 2
    p_down = float(probs[:half].sum())
    p_up = float(probs[half:].sum())
    total = p_down + p_up
    return p_down / total, p_up / total


def collective_jz_full(n_qubits: int) -> np.ndarray:
    """Diagonal of ``sum_i sigma_z^i / 2`` over the computational basis."""
    return _popcounts(n_qubits) - n_qubits / 2


def readout_sequence(psi_p_prime: StateVector, omega0: float | None = None, t: float | None = None,
                     *, phase: float | None = None) -> tuple[float, float]:
    """CNOT fan-out from qubit 1, Hadamard on qubit 1, then measure qubit 1.

    ``psi_p_prime`` is the state after free evolution. If ``omega0`` and
    ``t`` (or ``phase``) are given, that free evolution is applied here
    first, so the cat state itself can be passed. For the cat input the
    result is ``(cos^2(N phi / 2), sin^2(N phi / 2))`` with ``phi = omega0 t``.
    """
    state = psi_p_prime
    if phase is not None or omega0 is not None or t is not None:
        state = free_evolve(state, omega0, t, phase=phase)
    reg = embed_dicke(state.normalized())
    reg = apply_hadamard(apply_cnot_fanout(reg, 1), 1)
    return first_qubit_marginals(reg)

