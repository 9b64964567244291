"""
Tests for the calibration experiments: spectroscopy, chevrons, Ramsey and scans.
"""

import math

import numpy as np
import pytest

from device_model import Element, basis_index, build_static_hamiltonian
from errors import ConfigError, LowContrastError, SamplingError
from evolution import PulseSimulator, wrap_phase
from experiments import (
    DEFAULT_ALPHA_GRID,
    Map2D,
    conditional_phase,
    conditional_phase_scan,
    coupler_spectroscopy,
    coupling_from_chevron,
    fit_cosine,
    iswap_chevron,
    leakage_map,
    parallel_map,
    ramsey_conditional_phase,
)
from pulses import adiabatic_cz_schedule
from tests.conftest import GHZ, MHZ

RESONANCE = 4.110 * GHZ


def test_parallel_map_keeps_order() -> None:
    assert parallel_map(lambda x: x * x, range(10), threads=4) == [
        x * x for x in range(10)
    ]


def test_map2d_checks_shape() -> None:
    with pytest.raises(ValueError):
        Map2D("x", np.zeros(3), "y", np.zeros(2), np.zeros((3, 2)), "v")


def test_spectroscopy_rejects_empty_grid(device) -> None:
    with pytest.raises(ConfigError):
        coupler_spectroscopy(device, [])


def test_spectroscopy_labels_branches_at_idle(device) -> None:
    result = coupler_spectroscopy(device, [0.0, 0.01])

    assert result.labels[0] == ["100", "001", "010"]
    assert result.frequencies.shape == (2, 3)
    assert result.coupler_frequency[0] == pytest.approx(device.idle[2], rel=1e-9)


def test_spectroscopy_finds_coupler_q2_anticrossing(device) -> None:
    """The coupler tunes through Q2 near 0.23 V; the gap is close to 2·g_2c."""
    result = coupler_spectroscopy(device, np.linspace(0.0, 0.25, 51))
    upper = [c for c in result.anticrossings if c.branches == (1, 2)]

    assert len(upper) == 1
    crossing = upper[0]
    assert crossing.coupler_frequency / GHZ == pytest.approx(4.68, abs=0.05)
    assert 150.0 < crossing.gap / MHZ < 250.0


def _exact_exchange_coupling(params, omega_c: float) -> float:
    """Half the splitting of the two qubit-like single-excitation branches."""
    h = build_static_hamiltonian(params, (RESONANCE, RESONANCE, omega_c))
    idx = [basis_index(params, label) for label in ("100", "010", "001")]
    energies = np.linalg.eigvalsh(h[np.ix_(idx, idx)])
    return float(0.5 * (energies[1] - energies[0]))


def test_chevron_starts_in_q1(small_device) -> None:
    tau = np.linspace(0.0, 100e-9, 11)
    chevron = iswap_chevron(small_device, [0.0, 0.1], tau, RESONANCE)

    assert chevron.values.shape == (11, 2)
    assert np.allclose(chevron.values[0], 1.0)
    assert np.all((chevron.values >= -1e-12) & (chevron.values <= 1.0 + 1e-12))


def test_chevron_rejects_negative_times(small_device) -> None:
    with pytest.raises(ConfigError):
        iswap_chevron(small_device, [0.0], [-1e-9, 0.0], RESONANCE)


def test_coupling_from_chevron_recovers_exchange_rate(small_device) -> None:
    tau = np.linspace(0.0, 2e-6, 2001)
    chevron = iswap_chevron(small_device, [0.0], tau, RESONANCE)

    curve = coupling_from_chevron(chevron)
    expected = _exact_exchange_coupling(small_device.params, small_device.idle[2])

    assert curve.coupling[0] == pytest.approx(expected, rel=0.03)
    assert curve.resolution == pytest.approx(1.0 / 2e-6)


def test_chevron_with_decoherence_matches_coherent_start(small_device) -> None:
    params = small_device.params.model_copy(update={"t1": (20.9e-6, 28.8e-6, 10e-6)})
    device = small_device.model_copy(update={"params": params})
    tau = np.linspace(0.0, 40e-9, 5)

    lossy = iswap_chevron(device, [0.0], tau, RESONANCE, include_decoherence=True)
    ideal = iswap_chevron(device, [0.0], tau, RESONANCE)

    assert lossy.values[0, 0] == pytest.approx(1.0)
    assert np.allclose(lossy.values, ideal.values, atol=1e-2)


def test_coupling_is_nan_for_flat_column() -> None:
    tau = np.linspace(0.0, 1e-7, 11)
    chevron = Map2D("V_b", np.array([0.0]), "tau", tau, np.ones((11, 1)), "P")

    assert math.isnan(coupling_from_chevron(chevron).coupling[0])


def test_coupling_needs_enough_time_points() -> None:
    tau = np.array([0.0, 1e-9, 2e-9])
    chevron = Map2D("V_b", np.array([0.0]), "tau", tau, np.ones((3, 1)), "P")

    with pytest.raises(SamplingError):
        coupling_from_chevron(chevron)


def test_fit_cosine_recovers_phase_and_contrast() -> None:
    alpha = np.asarray(DEFAULT_ALPHA_GRID)
    p = 0.5 * (1.0 + 0.8 * np.cos(alpha + 0.7))

    fit = fit_cosine(alpha, p)

    assert fit.phase == pytest.approx(0.7)
    assert fit.contrast == pytest.approx(0.8)
    assert fit.offset == pytest.approx(0.5)
    assert fit.residual == pytest.approx(0.0, abs=1e-12)


def test_fit_cosine_rejects_flat_fringe() -> None:
    alpha = np.asarray(DEFAULT_ALPHA_GRID)

    with pytest.raises(LowContrastError):
        fit_cosine(alpha, np.full(alpha.size, 0.5))


def test_ramsey_without_gate_has_zero_phase(device) -> None:
    result = ramsey_conditional_phase(
        PulseSimulator(device), None, DEFAULT_ALPHA_GRID, control_excited=True
    )

    assert result.fit.phase == pytest.approx(0.0, abs=1e-12)
    assert result.fit.contrast == pytest.approx(1.0)
    assert result.target is Element.Q2


def test_ramsey_rejects_short_phase_grid(device) -> None:
    with pytest.raises(ConfigError):
        ramsey_conditional_phase(
            PulseSimulator(device), None, [0.0, 0.1, 0.2], control_excited=False
        )


def test_ramsey_sampling_is_seeded(device) -> None:
    simulator = PulseSimulator(device)
    args = (simulator, None, DEFAULT_ALPHA_GRID, True)
    kwargs = {"shots": 200, "assignment_error": 0.02, "rng_seed": 11}

    first = ramsey_conditional_phase(*args, **kwargs)
    second = ramsey_conditional_phase(*args, **kwargs)

    assert np.array_equal(first.p_excited, second.p_excited)
    assert np.allclose(first.p_excited * 200, np.round(first.p_excited * 200))
    assert abs(first.fit.phase) < 0.3


def test_ramsey_conditional_phase_matches_process(device) -> None:
    simulator = PulseSimulator(device)
    schedule = adiabatic_cz_schedule(0.1, 20e-9)

    measured = conditional_phase(simulator, schedule, DEFAULT_ALPHA_GRID)
    process = simulator.gate_result(schedule).conditional_phase

    assert wrap_phase(measured - process) == pytest.approx(0.0, abs=0.02)


def test_phase_scan_shape_and_validity(device) -> None:
    scan = conditional_phase_scan(
        PulseSimulator(device), [0.0, 0.1], duration=20e-9, threads=2
    )

    assert scan.values.shape == (1, 2)
    assert scan.valid is not None and scan.valid.all()
    assert np.all(np.abs(scan.values) <= math.pi)


def test_phase_scan_rejects_empty_grid(device) -> None:
    with pytest.raises(ConfigError):
        conditional_phase_scan(PulseSimulator(device), [])


def test_phase_scan_needs_third_level(small_device) -> None:
    with pytest.raises(ConfigError, match="dims >= 3"):
        conditional_phase_scan(PulseSimulator(small_device), [0.1])


def test_leakage_map_needs_third_level(small_device) -> None:
    with pytest.raises(ConfigError):
        leakage_map(PulseSimulator(small_device), [0.1], [0.05], 18e-9)


def test_leakage_map_is_empty_at_idle(device) -> None:
    maps = leakage_map(PulseSimulator(device), [0.0], [0.0], 10e-9)

    assert maps.direct.values.shape == (1, 1)
    assert maps.direct.values[0, 0] == pytest.approx(0.0, abs=1e-6)
    assert maps.ground_population.values[0, 0] == pytest.approx(0.0, abs=1e-6)
    assert bool(maps.lower_is_q1[0])


@pytest.mark.parametrize("coupling_mhz", [2.0, 10.0, 40.0, 80.0])
def test_coupling_from_synthetic_chevron(coupling_mhz: float) -> None:
    """P = cos²(g̃τ) oscillates at 2·|g̃|/2π."""
    tau = np.linspace(0.0, 2e-6, 4001)
    values = np.cos(coupling_mhz * MHZ * tau)[:, np.newaxis] ** 2
    chevron = Map2D("V_b", np.array([0.0]), "tau", tau, values, "P")

    curve = coupling_from_chevron(chevron)

    assert curve.coupling[0] / MHZ == pytest.approx(coupling_mhz, rel=0.02)


def test_chevron_coupling_follows_coupler_bias(small_device) -> None:
    bias = [0.0, 0.15, 0.25, 0.29]
    tau = np.linspace(0.0, 2e-6, 4001)
    chevron = iswap_chevron(small_device, bias, tau, RESONANCE)

    curve = coupling_from_chevron(chevron)
    expected = [
        _exact_exchange_coupling(
            small_device.params, float(small_device.frequency(Element.C, v))
        )
        for v in bias
    ]

    assert curve.coupling == pytest.approx(expected, rel=0.05)
    assert np.all(np.diff(curve.coupling) > 0.0)
    assert curve.coupling[0] / MHZ < 3.0
    assert curve.coupling[-1] / MHZ > 30.0


def test_conditional_phase_grows_with_coupler_bias(device) -> None:
    scan = conditional_phase_scan(
        PulseSimulator(device), [0.0, 0.05, 0.1, 0.15], duration=30e-9
    )

    magnitude = np.abs(np.unwrap(scan.values[0]))
    assert magnitude[0] == pytest.approx(0.0, abs=0.02)
    assert np.all(np.diff(magnitude) > 0.0)


def test_leakage_map_shows_second_level_ridge(device) -> None:
    """|101⟩ swaps into |002⟩ where ω2 ≈ ω1 − α2."""
    q_bias = np.linspace(0.0, 0.1, 21)
    maps = leakage_map(PulseSimulator(device), [0.15], q_bias, 18e-9, rise=2e-9)

    leakage = maps.direct.values[:, 0]
    peak = int(np.argmax(leakage))
    assert 0.04 <= maps.direct.y[peak] <= 0.075
    assert leakage[peak] > 0.5
    assert leakage[0] < 0.15
    assert maps.ground_population.values[peak, 0] == pytest.approx(
        leakage[peak], abs=0.05
    )
