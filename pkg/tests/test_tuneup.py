"""
Tests for the Nelder-Mead optimiser and the CZ tune-up loops.
"""

import math
from types import SimpleNamespace

import numpy as np
import pytest

import tuneup
from benchmarking import RBConfig
from config import CZSettings
from device_model import Device
from errors import CalibrationError, ConfigError, OptimizerAbortedError
from evolution import CZ_IDEAL, GateResult, PulseSimulator, wrap_phase
from experiments import LeakageMaps, Map2D
from tests.conftest import IDLE, make_params
from tuneup import (
    NMConfig,
    calibrate_conditional_phase,
    diabatic_starting_point,
    gate_infidelity,
    nelder_mead,
    phase_crossing,
    tune_adiabatic_cz,
    tune_diabatic_cz,
)


def _quadratic(x: np.ndarray) -> float:
    return float((x[0] - 1.0) ** 2 + 2.0 * (x[1] + 0.5) ** 2)


def test_nelder_mead_finds_quadratic_minimum() -> None:
    config = NMConfig(scale=(0.5,), max_evaluations=400, fatol=1e-14)

    result = nelder_mead(_quadratic, [0.0, 0.0], config)

    assert result.x == pytest.approx([1.0, -0.5], abs=1e-4)
    assert result.value == pytest.approx(0.0, abs=1e-8)
    assert result.converged
    assert result.value == min(value for _, value in result.trace)


def test_nelder_mead_stops_at_budget() -> None:
    result = nelder_mead(_quadratic, [0.0, 0.0], NMConfig(max_evaluations=10))

    assert result.evaluations == 10
    assert not result.converged
    assert result.value <= _quadratic(np.zeros(2))


def test_nelder_mead_needs_room_for_a_simplex() -> None:
    with pytest.raises(ConfigError):
        nelder_mead(_quadratic, [0.0, 0.0, 0.0], NMConfig(max_evaluations=3))


def test_nelder_mead_aborts_on_non_finite_objective() -> None:
    def objective(x: np.ndarray) -> float:
        return math.nan if x[0] > 0.0 else _quadratic(x)

    with pytest.raises(OptimizerAbortedError) as info:
        nelder_mead(objective, [0.0, 0.0], NMConfig(scale=(0.1,)))

    assert len(info.value.trace) == 2
    assert math.isnan(info.value.trace[-1][1])


def test_nm_config_validates_scale() -> None:
    with pytest.raises(ValueError):
        NMConfig(scale=(0.0,))
    with pytest.raises(ConfigError):
        NMConfig(scale=(0.1, 0.2)).steps(3)
    assert list(NMConfig(scale=(0.1,)).steps(3)) == [0.1, 0.1, 0.1]


def _scan(phases: list[float]) -> Map2D:
    x = np.linspace(0.0, 0.1 * (len(phases) - 1), len(phases))
    return Map2D("V_b", x, "V_q", np.array([0.0]), np.array([phases]), "phi_c")


def test_phase_crossing_interpolates() -> None:
    crossing = phase_crossing(_scan([0.0, -1.0, -2.0, -4.0]))

    assert crossing == pytest.approx(0.2 + 0.1 * (2.0 - math.pi) / (2.0 - 4.0))


def test_phase_crossing_skips_invalid_points() -> None:
    crossing = phase_crossing(_scan([0.0, math.nan, 2.0, 4.0]))

    assert 0.2 < crossing < 0.3


def test_phase_crossing_without_crossing_raises() -> None:
    with pytest.raises(CalibrationError):
        phase_crossing(_scan([0.0, 0.5, 1.0]))


def _grid(values) -> Map2D:
    values = np.asarray(values, dtype=np.float64)
    return Map2D(
        "V_b", np.array([0.1, 0.2]), "V_q", np.array([0.02, 0.05]), values, "v"
    )


def test_diabatic_start_prefers_low_leakage() -> None:
    phases = _grid([[3.1, 1.0], [2.0, 3.0]])
    leakage = _grid([[0.5, 0.0], [0.0, 0.001]])

    assert diabatic_starting_point(phases, leakage) == (0.2, 0.05)


def test_diabatic_start_without_low_leakage_raises() -> None:
    with pytest.raises(CalibrationError):
        diabatic_starting_point(_grid([[3.1, 3.0], [2.0, 1.0]]), _grid(np.ones((2, 2))))


def test_gate_infidelity_of_ideal_cz_is_zero() -> None:
    gate = GateResult(
        block=CZ_IDEAL * np.exp(0.3j),
        leakage=0.0,
        average_leakage=0.0,
        conditional_phase=math.pi,
        phase_q1=0.0,
        phase_q2=0.0,
    )

    assert gate_infidelity(gate) == pytest.approx(0.0, abs=1e-12)


def test_tune_adiabatic_starts_at_crossing(device, monkeypatch) -> None:
    monkeypatch.setattr(
        tuneup, "conditional_phase_scan", lambda *a, **k: _scan([2.0, 4.0])
    )
    simulator = PulseSimulator(device)

    result = tune_adiabatic_cz(
        simulator, [0.0, 0.1], config=NMConfig(scale=(0.005, 1.0), max_evaluations=5)
    )

    start = 0.1 * (2.0 - math.pi) / (2.0 - 4.0)
    assert result.trace[0][0] == pytest.approx([start, 30.0])
    assert len(result.trace) == 5
    assert result.kind == "adiabatic"
    assert set(result.parameters) == {"v_b", "duration"}
    assert result.objective <= min(value for _, value in result.trace) + 1e-12
    assert result.notes == []


def test_tune_diabatic_uses_scan_start(device, monkeypatch) -> None:
    phases = _grid([[3.1, 1.0], [2.0, 3.0]])
    leakage = _grid([[0.5, 0.0], [0.0, 0.001]])
    monkeypatch.setattr(tuneup, "conditional_phase_scan", lambda *a, **k: phases)
    monkeypatch.setattr(
        tuneup,
        "leakage_map",
        lambda *a, **k: LeakageMaps(leakage, leakage, np.array([True, True])),
    )

    result = tune_diabatic_cz(
        PulseSimulator(device),
        [0.1, 0.2],
        [0.02, 0.05],
        config=NMConfig(scale=(0.005, 0.005, 1.0), max_evaluations=4),
    )

    assert result.trace[0][0] == pytest.approx([0.2, 0.05, 18.0])
    assert set(result.parameters) == {"v_b", "v_q", "duration", "rise"}
    assert result.parameters["rise"] == pytest.approx(2e-9)
    assert 0.0 <= result.gate.leakage <= 1.0


@pytest.mark.slow
def test_tune_adiabatic_with_rb_objective(device, monkeypatch) -> None:
    monkeypatch.setattr(
        tuneup, "conditional_phase_scan", lambda *a, **k: _scan([2.0, 4.0])
    )

    result = tune_adiabatic_cz(
        PulseSimulator(device),
        [0.0, 0.1],
        config=NMConfig(scale=(0.005, 1.0), max_evaluations=3),
        objective="rb",
        rb=RBConfig(lengths=(2,), samples=2),
    )

    assert len(result.trace) == 3
    assert all(0.0 <= value <= 1.0 for _, value in result.trace)


def _rosenbrock(x: np.ndarray) -> float:
    return float(100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2)


def test_nelder_mead_rosenbrock_within_budget() -> None:
    # 5 % steps along each coordinate of the start point
    config = NMConfig(scale=(-0.06, 0.05), max_evaluations=200)

    result = nelder_mead(_rosenbrock, [-1.2, 1.0], config)

    assert result.evaluations <= 200
    assert result.value < 1e-4
    assert result.x == pytest.approx([1.0, 1.0], abs=3e-2)


def _fake_simulator(slope: float) -> SimpleNamespace:
    """Gate whose conditional phase is wrap(slope · V_b)."""

    def gate_result(v_b: float) -> GateResult:
        return GateResult(
            block=CZ_IDEAL,
            leakage=0.0,
            average_leakage=0.0,
            conditional_phase=wrap_phase(slope * v_b),
            phase_q1=0.0,
            phase_q2=0.0,
        )

    return SimpleNamespace(gate_result=gate_result)


@pytest.mark.parametrize("slope", [20.0, -20.0])
def test_calibrate_conditional_phase_refines_crossing(slope) -> None:
    v_b = calibrate_conditional_phase(
        _fake_simulator(slope), lambda v: v, np.linspace(0.0, 0.3, 7)
    )

    assert v_b == pytest.approx(math.pi / 20.0, abs=1e-6)


def test_calibrate_conditional_phase_without_crossing() -> None:
    with pytest.raises(CalibrationError):
        calibrate_conditional_phase(
            _fake_simulator(5.0), lambda v: v, np.linspace(0.0, 0.3, 7)
        )


@pytest.fixture(scope="module")
def published_simulator() -> PulseSimulator:
    return PulseSimulator(Device.at_idle(make_params(), IDLE))


@pytest.fixture(scope="module")
def tuned_adiabatic(published_simulator) -> tuneup.CalibrationResult:
    return tune_adiabatic_cz(
        published_simulator,
        np.linspace(0.0, 0.22, 45),
        config=NMConfig(scale=(0.005, 1.0), max_evaluations=100),
    )


@pytest.mark.slow
def test_default_cz_amplitude_gives_pi_phase(published_simulator) -> None:
    settings = CZSettings()

    v_b = calibrate_conditional_phase(
        published_simulator,
        settings.schedule_at,
        settings.calibration_bias.values(),
    )
    calibrated = settings.model_copy(update={"v_b": v_b})
    gate = published_simulator.gate_result(calibrated.schedule())

    assert abs(abs(gate.conditional_phase) - math.pi) < 0.01


@pytest.mark.slow
def test_tuned_adiabatic_cz_is_a_cz(tuned_adiabatic) -> None:
    gate = tuned_adiabatic.gate

    assert abs(abs(gate.conditional_phase) - math.pi) < 0.01
    assert gate.leakage < 1e-3
    assert tuned_adiabatic.infidelity < 1e-3
    assert tuned_adiabatic.parameters["duration"] == pytest.approx(30e-9, rel=0.2)


@pytest.mark.slow
def test_tuned_diabatic_cz_is_shorter(published_simulator, tuned_adiabatic) -> None:
    result = tune_diabatic_cz(
        published_simulator,
        np.linspace(0.10, 0.22, 13),
        np.linspace(0.02, 0.08, 13),
        config=NMConfig(scale=(0.005, 0.005, 1.0), max_evaluations=100),
    )

    assert result.parameters["duration"] <= 20e-9
    assert abs(abs(result.gate.conditional_phase) - math.pi) < 0.02
    assert result.infidelity < 5e-3
    assert result.parameters["duration"] < tuned_adiabatic.parameters["duration"]
