"""
Tests for the benchmarking backends.
"""

import numpy as np
import pytest

from backends import (
    CoherentErrorBackend,
    DepolarizingBackend,
    IdealBackend,
    LindbladBackend,
    depolarize_qubit,
    idle_kraus,
)
from clifford_group import clifford_group
from evolution import PulseSimulator
from pulses import Schedule

GROUND = np.diag([1.0, 0.0, 0.0, 0.0]).astype(np.complex128)


@pytest.fixture(scope="module")
def group():
    return clifford_group()


def test_ideal_backend_inverse_returns_to_ground(group) -> None:
    backend = IdealBackend()
    element = group[4321]
    state = backend.apply(backend.initial_state(), element)
    state = backend.apply(state, group.inverse(element.unitary))

    assert backend.ground_population(state) == pytest.approx(1.0)
    assert backend.purity(state) == pytest.approx(1.0)


def test_ideal_backend_can_track_vectors(group) -> None:
    backend = IdealBackend(density=False)
    state = backend.initial_state()

    assert state.shape == (4,)
    state = backend.apply(state, group[77])
    assert np.linalg.norm(state) == pytest.approx(1.0)


def test_depolarizing_backend_mixes_towards_identity(group) -> None:
    backend = DepolarizingBackend(0.1)
    state = backend.apply(backend.initial_state(), group.inverse(np.eye(4)))

    assert backend.ground_population(state) == pytest.approx(0.9 + 0.1 / 4)
    assert np.real(np.trace(state)) == pytest.approx(1.0)


def test_depolarizing_strength_is_bounded() -> None:
    with pytest.raises(ValueError):
        DepolarizingBackend(1.5)


def test_coherent_error_backend_with_zero_angle_is_ideal(group) -> None:
    noisy = CoherentErrorBackend.over_rotation(0.0)
    ideal = IdealBackend()
    element = group[1000]

    assert np.allclose(
        noisy.apply(noisy.initial_state(), element),
        ideal.apply(ideal.initial_state(), element),
    )


def test_coherent_error_keeps_purity(group) -> None:
    backend = CoherentErrorBackend.over_rotation(0.05)
    state = backend.initial_state()
    for index in (5, 50, 500):
        state = backend.apply(state, group[index])

    assert backend.purity(state) == pytest.approx(1.0)


def test_depolarize_qubit_replaces_one_qubit() -> None:
    out = depolarize_qubit(GROUND, 0, 1.0)

    assert np.allclose(out, np.diag([0.5, 0.0, 0.5, 0.0]))


def test_idle_kraus_is_trace_preserving() -> None:
    kraus = idle_kraus(20e-9, 20.9e-6, 40e-6)
    total = sum(k.conj().T @ k for k in kraus)

    assert np.allclose(total, np.eye(2))


def test_idle_kraus_without_decoherence_is_identity() -> None:
    kraus = idle_kraus(20e-9, float("inf"), float("inf"))
    total = sum(k.conj().T @ k for k in kraus)

    assert np.allclose(total, np.eye(2))
    assert np.allclose(kraus[0], np.eye(2))


def test_lindblad_backend_idle_process_keeps_populations(device) -> None:
    backend = LindbladBackend(
        PulseSimulator(device), Schedule(duration=10e-9), include_decoherence=False
    )
    vec = backend.cz_process @ GROUND.reshape(-1, order="F")

    assert backend.cz_process.shape == (16, 16)
    assert np.allclose(vec.reshape(4, 4, order="F"), GROUND, atol=1e-6)


def test_lindblad_backend_noisy_single_qubit_gates(device, group) -> None:
    backend = LindbladBackend(
        PulseSimulator(device),
        Schedule(duration=10e-9),
        include_decoherence=False,
        single_qubit_fidelity=(0.99, 0.99),
    )
    single_qubit_only = next(e for e in group.elements if e.gates and e.cz_count == 0)

    state = backend.apply(backend.initial_state(), single_qubit_only)

    assert backend.depolarizing == pytest.approx((0.02, 0.02))
    assert np.real(np.trace(state)) == pytest.approx(1.0)
    assert backend.purity(state) < 1.0
