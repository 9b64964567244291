#!/usr/bin/env python3
"""
Execution backends for randomized and purity benchmarking.

A backend holds the two-qubit state (4×4 density matrix, or a 4-vector for
vector-only backends) and applies Clifford elements to it. Basis order is
|Q1 Q2⟩ = 00, 01, 10, 11 with the coupler already traced out.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod

import numpy as np
from numpy.typing import NDArray

from clifford_group import CliffordCircuit, NativeGate, native_gate_unitary
from device_model import COMPUTATIONAL_LABELS, basis_index
from evolution import PulseSimulator, computational_projection
from logging_config import getLogger
from pulses import Schedule

logger = getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]

_GROUND = np.zeros((4, 4), dtype=np.complex128)
_GROUND[0, 0] = 1.0


class Backend(ABC):
    """Applies Clifford elements to a two-qubit state."""

    supports_density: bool = True

    def initial_state(self) -> ComplexMatrix:
        if self.supports_density:
            return _GROUND.copy()
        vec = np.zeros(4, dtype=np.complex128)
        vec[0] = 1.0
        return vec

    @abstractmethod
    def apply(self, state: ComplexMatrix, element: CliffordCircuit) -> ComplexMatrix:
        """Return the state after ``element``."""

    def ground_population(self, state: ComplexMatrix) -> float:
        """Population of |00⟩."""
        if state.ndim == 1:
            return float(abs(state[0]) ** 2)
        return float(np.real(state[0, 0]))

    def purity(self, state: ComplexMatrix) -> float:
        """Tr(ρ²) of the two-qubit state."""
        return float(np.real(np.trace(state @ state)))


def _conjugate(state: ComplexMatrix, u: ComplexMatrix) -> ComplexMatrix:
    if state.ndim == 1:
        return u @ state
    return u @ state @ u.conj().T


class IdealBackend(Backend):
    """Noise-free gates; ``density=False`` keeps a state vector only."""

    def __init__(self, density: bool = True) -> None:
        self.supports_density = density

    def apply(self, state: ComplexMatrix, element: CliffordCircuit) -> ComplexMatrix:
        return _conjugate(state, element.unitary)


class DepolarizingBackend(Backend):
    """Ideal Clifford followed by ρ → (1 − d)ρ + d·I/4."""

    def __init__(self, strength: float) -> None:
        if not 0.0 <= strength <= 1.0:
            raise ValueError(f"depolarizing strength must be in [0, 1], got {strength}")
        self.strength = strength

    def apply(self, state: ComplexMatrix, element: CliffordCircuit) -> ComplexMatrix:
        rotated = _conjugate(state, element.unitary)
        return (1.0 - self.strength) * rotated + self.strength * np.eye(4) / 4.0


class CoherentErrorBackend(Backend):
    """Ideal Clifford followed by a fixed unitary error."""

    def __init__(self, error: ComplexMatrix) -> None:
        self.error = np.asarray(error, dtype=np.complex128)

    @classmethod
    def over_rotation(cls, angle: float) -> CoherentErrorBackend:
        """exp(−iε(X⊗I + I⊗X)/2): both qubits over-rotated about X by ε."""
        c, s = math.cos(angle / 2), math.sin(angle / 2)
        single = np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
        return cls(np.kron(single, single))

    def apply(self, state: ComplexMatrix, element: CliffordCircuit) -> ComplexMatrix:
        return _conjugate(state, self.error @ element.unitary)


def _partial_trace(rho: ComplexMatrix, qubit: int) -> ComplexMatrix:
    r = rho.reshape(2, 2, 2, 2)
    if qubit == 0:
        return np.einsum("aiaj->ij", r)
    return np.einsum("iaja->ij", r)


def depolarize_qubit(rho: ComplexMatrix, qubit: int, strength: float) -> ComplexMatrix:
    """Single-qubit depolarizing channel of strength λ on one qubit."""
    rest = _partial_trace(rho, qubit)
    mixed = np.eye(2) / 2.0
    replaced = np.kron(mixed, rest) if qubit == 0 else np.kron(rest, mixed)
    return (1.0 - strength) * rho + strength * replaced


def idle_kraus(duration: float, t1: float, t_phi: float) -> list[ComplexMatrix]:
    """Amplitude and phase damping of one qubit over ``duration``."""
    gamma = 0.0 if math.isinf(t1) else 1.0 - math.exp(-duration / t1)
    coherence = 1.0 if math.isinf(t_phi) else math.exp(-duration / t_phi)
    damping = [
        np.array([[1.0, 0.0], [0.0, math.sqrt(1.0 - gamma)]], dtype=np.complex128),
        np.array([[0.0, math.sqrt(gamma)], [0.0, 0.0]], dtype=np.complex128),
    ]
    p = math.sqrt((1.0 + coherence) / 2.0)
    q = math.sqrt((1.0 - coherence) / 2.0)
    dephasing = [
        p * np.eye(2, dtype=np.complex128),
        q * np.diag([1.0, -1.0]).astype(np.complex128),
    ]
    return [d @ k for d in dephasing for k in damping]


def _apply_kraus(
    rho: ComplexMatrix, kraus: list[ComplexMatrix], qubit: int
) -> ComplexMatrix:
    eye = np.eye(2, dtype=np.complex128)
    out = np.zeros_like(rho)
    for k in kraus:
        full = np.kron(k, eye) if qubit == 0 else np.kron(eye, k)
        out += full @ rho @ full.conj().T
    return out


class LindbladBackend(Backend):
    """Pulse-level CZ with decoherence and noisy single-qubit gates.

    The CZ is the 16×16 process (column-stacked) obtained by evolving every
    computational basis operator |i⟩⟨j| through the calibrated schedule,
    projecting onto the computational block in the idle frame and removing
    the single-qubit phases with virtual Z. Population that leaks out of
    the block is lost. Single-qubit gates are ideal unitaries followed by
    depolarizing noise λ = 2(1 − F) and T1/T_φ idling for the gate time.
    """

    def __init__(
        self,
        simulator: PulseSimulator,
        cz_schedule: Schedule,
        include_decoherence: bool = True,
        single_qubit_fidelity: tuple[float, float] = (1.0, 1.0),
        single_qubit_gate_time: float = 0.0,
    ) -> None:
        self.simulator = simulator
        self.include_decoherence = include_decoherence
        self.depolarizing = tuple(2.0 * (1.0 - f) for f in single_qubit_fidelity)
        params = simulator.params
        self.idle = [
            idle_kraus(single_qubit_gate_time, params.t1[q], params.t_phi[q])
            if include_decoherence and single_qubit_gate_time > 0.0
            else None
            for q in (0, 1)
        ]
        self.cz_process = self._cz_process(cz_schedule)

    def _cz_process(self, schedule: Schedule) -> ComplexMatrix:
        params = self.simulator.params
        idx = [basis_index(params, label) for label in COMPUTATIONAL_LABELS]
        dim = params.hilbert_dim
        basis_ops = np.zeros((16, dim, dim), dtype=np.complex128)
        for col in range(16):
            i, j = col % 4, col // 4
            basis_ops[col, idx[i], idx[j]] = 1.0

        logger.info(
            "Building CZ process from pulse simulation",
            extra={
                "backends.cz_process.duration": schedule.total_duration,
                "backends.cz_process.decoherence": self.include_decoherence,
            },
        )
        evolved = self.simulator.evolve_batch(
            basis_ops, schedule, self.include_decoherence
        )
        result = computational_projection(self.simulator.unitary(schedule), params)
        phi_1, phi_2 = result.phase_q1, result.phase_q2
        correction = np.exp(-1j * np.array([0.0, phi_2, phi_1, phi_1 + phi_2]))
        process = np.empty((16, 16), dtype=np.complex128)
        for col in range(16):
            block = evolved[col][np.ix_(idx, idx)]
            block = correction[:, np.newaxis] * block * correction.conj()[np.newaxis, :]
            process[:, col] = block.reshape(-1, order="F")
        return process

    def _apply_single(self, rho: ComplexMatrix, gate: NativeGate) -> ComplexMatrix:
        if gate.qubit is None:
            raise ValueError(f"single-qubit gate {gate.name} has no target qubit")
        rho = _conjugate(rho, native_gate_unitary(gate))
        rho = depolarize_qubit(rho, gate.qubit, self.depolarizing[gate.qubit])
        kraus = self.idle[gate.qubit]
        if kraus is not None:
            rho = _apply_kraus(rho, kraus, gate.qubit)
        return rho

    def apply(self, state: ComplexMatrix, element: CliffordCircuit) -> ComplexMatrix:
        rho = state
        for gate in element.gates:
            if gate.name == "CZ":
                vec = self.cz_process @ rho.reshape(-1, order="F")
                rho = vec.reshape(4, 4, order="F")
            else:
                rho = self._apply_single(rho, gate)
        return rho
