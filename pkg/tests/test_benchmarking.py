"""
Tests for RB/PB sequences, decay fits and derived error rates.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from backends import (
    Backend,
    CoherentErrorBackend,
    DepolarizingBackend,
    IdealBackend,
    LindbladBackend,
)
from benchmarking import (
    BenchmarkTable,
    DecayFit,
    RBConfig,
    as_interleave,
    error_rates,
    fit_decay,
    ideal_product_is_identity,
    interleaved_gate,
    rb_sequence,
    run_pb,
    run_rb,
)
from config import CZSettings, load_device
from errors import (
    BackendError,
    FitError,
    InvalidInterleaveError,
    UnsupportedControlError,
)
from evolution import PulseSimulator
from tuneup import calibrate_conditional_phase

DEVICE_TOML = Path(__file__).resolve().parent.parent / "device.toml"
LENGTHS = (1, 5, 10, 20, 40, 60)


def _p_from_r(r: float) -> float:
    return 1.0 - 4.0 * r / 3.0


@pytest.mark.parametrize("interleave", ["none", "cz", "identity"])
@pytest.mark.parametrize("m", [1, 7, 30])
def test_sequences_compose_to_identity(m, interleave) -> None:
    sequence = rb_sequence(m, interleaved_gate(interleave), rng_seed=[5, m, 0])

    assert ideal_product_is_identity(sequence)


def test_interleaved_sequence_alternates() -> None:
    gate = interleaved_gate("cz")
    sequence = rb_sequence(4, gate, rng_seed=1)

    assert len(sequence.cliffords) == 8
    assert all(c is gate for c in sequence.cliffords[1::2])


def test_sequence_is_reproducible_from_seed() -> None:
    first = rb_sequence(10, rng_seed=[1, 10, 3])
    second = rb_sequence(10, rng_seed=[1, 10, 3])

    assert [c.index for c in first.cliffords] == [c.index for c in second.cliffords]


def test_sequence_rejects_zero_length() -> None:
    with pytest.raises(ValueError):
        rb_sequence(0)


def test_non_clifford_interleave_is_rejected() -> None:
    t_gate = np.diag([1.0, 1.0, 1.0, np.exp(1j * math.pi / 4)])

    with pytest.raises(InvalidInterleaveError):
        as_interleave(t_gate)


def test_interleaved_gates() -> None:
    assert interleaved_gate("none") is None
    assert interleaved_gate("cz").cz_count == 1
    assert interleaved_gate("identity").gates == ()


def test_rb_config_rejects_bad_values() -> None:
    with pytest.raises(ValueError):
        RBConfig(lengths=(0, 5))
    with pytest.raises(ValueError):
        RBConfig(lengths=(1,), samples=0)


def test_ideal_backend_gives_unit_fidelity() -> None:
    table = run_rb(RBConfig(lengths=(1, 5), samples=3), IdealBackend())

    assert np.allclose(table.mean, 1.0)
    assert table.rows()[0][0] == 1


def test_depolarizing_fit_recovers_strength() -> None:
    d = 0.02
    config = RBConfig(lengths=LENGTHS, samples=3, seed=9)
    table = run_rb(config, DepolarizingBackend(d))

    fit = fit_decay(table)
    report = error_rates(fit)

    assert fit.decay == pytest.approx(1.0 - d, abs=1e-6)
    assert fit.offset == pytest.approx(0.25, abs=1e-6)
    assert report.r_ref.value == pytest.approx(0.75 * d, abs=1e-6)


def test_depolarizing_purity_decay_is_fully_incoherent() -> None:
    d = 0.03
    table = run_pb(RBConfig(lengths=LENGTHS, samples=2), DepolarizingBackend(d))

    fit = fit_decay(table, "purity")

    assert fit.decay == pytest.approx((1.0 - d) ** 2, abs=1e-6)
    reference = DecayFit(amplitude=0.75, decay=1.0 - d, offset=0.25)
    report = error_rates(reference, purity_reference=fit)
    assert report.r_incoherent_ref.value == pytest.approx(0.75 * d, abs=1e-6)
    assert report.incoherent_fraction_ref == pytest.approx(1.0, abs=1e-4)


def test_results_do_not_depend_on_thread_count() -> None:
    backend = DepolarizingBackend(0.01)
    serial = run_rb(RBConfig(lengths=(2, 4), samples=4, seed=3), backend)
    threaded = run_rb(RBConfig(lengths=(2, 4), samples=4, seed=3, threads=4), backend)

    assert np.array_equal(serial.mean, threaded.mean)


def test_purity_needs_density_backend() -> None:
    with pytest.raises(UnsupportedControlError):
        run_pb(RBConfig(lengths=(1,)), IdealBackend(density=False))


class _FailingBackend(Backend):
    def apply(self, state, element):
        raise RuntimeError("boom")


def test_backend_failure_is_wrapped() -> None:
    with pytest.raises(BackendError, match="m=1, sample=0"):
        run_rb(RBConfig(lengths=(1,), samples=1), _FailingBackend())


def _table(lengths, values) -> BenchmarkTable:
    return BenchmarkTable(
        lengths=np.asarray(lengths, dtype=np.float64),
        mean=np.asarray(values, dtype=np.float64),
        std=np.zeros(len(values)),
        samples=1,
        quantity="fidelity",
    )


def test_fit_needs_three_lengths() -> None:
    with pytest.raises(FitError) as info:
        fit_decay(_table((1, 5), (0.9, 0.8)))

    assert info.value.diagnostics["lengths"] == [1.0, 5.0]


def test_fit_rejects_flat_data() -> None:
    with pytest.raises(FitError):
        fit_decay(_table((1, 5, 10), (0.5, 0.5, 0.5)))


def test_fit_keeps_decay_within_bounds() -> None:
    m = np.array(LENGTHS, dtype=np.float64)
    rng = np.random.default_rng(4)
    values = 0.7 * 0.97**m + 0.25 + rng.normal(0.0, 1e-3, m.size)

    fit = fit_decay(_table(LENGTHS, values))

    assert 0.0 < fit.decay <= 1.0
    assert fit.decay == pytest.approx(0.97, abs=5e-3)
    assert fit.decay_stderr > 0.0
    assert np.allclose(fit.evaluate(m), values, atol=5e-3)


def test_error_rates_reproduce_interleaved_cz_error() -> None:
    reference = DecayFit(amplitude=0.75, decay=0.96773, offset=0.25)
    interleaved = DecayFit(amplitude=0.75, decay=0.96187, offset=0.25)

    report = error_rates(reference, interleaved)

    assert report.r_ref.value == pytest.approx(0.0242, abs=1e-4)
    assert report.r_int.value == pytest.approx(0.0286, abs=1e-4)
    assert report.r_cz.value == pytest.approx(0.0046, abs=1e-4)
    assert report.fidelity_cz.value == pytest.approx(0.9954, abs=1e-4)


def test_error_rates_for_diabatic_decays() -> None:
    reference = DecayFit(amplitude=0.75, decay=_p_from_r(0.0280), offset=0.25)
    interleaved = DecayFit(amplitude=0.75, decay=_p_from_r(0.0407), offset=0.25)

    report = error_rates(reference, interleaved)

    assert report.r_cz.value == pytest.approx(0.0127, abs=1e-3)


def test_error_rates_reject_zero_reference_decay() -> None:
    reference = DecayFit(amplitude=0.75, decay=0.0, offset=0.25)

    with pytest.raises(ZeroDivisionError):
        error_rates(reference, DecayFit(amplitude=0.75, decay=0.9, offset=0.25))


def test_error_rates_without_optional_fits() -> None:
    report = error_rates(DecayFit(amplitude=0.75, decay=0.99, offset=0.25))

    assert report.r_cz is None
    assert report.incoherent_fraction_ref is None


def test_fit_of_undecayed_data_is_unit_decay() -> None:
    fit = fit_decay(_table((1, 5, 10), (1.0, 1.0, 1.0)), "purity")

    assert fit.decay == 1.0
    assert fit.evaluate(np.array([1.0, 50.0])) == pytest.approx([1.0, 1.0])


def test_over_rotation_error_is_coherent() -> None:
    config = RBConfig(lengths=LENGTHS, samples=20, seed=11)
    backend = CoherentErrorBackend.over_rotation(0.2)

    fidelity = fit_decay(run_rb(config, backend))
    purity = fit_decay(run_pb(config, backend), "purity")
    report = error_rates(fidelity, purity_reference=purity)

    assert report.r_ref.value > 1e-3
    assert report.r_incoherent_ref.value < 0.1 * report.r_ref.value


@pytest.mark.slow
def test_published_device_error_is_mostly_incoherent() -> None:
    setup = load_device(DEVICE_TOML)
    simulator = PulseSimulator(setup.device)
    settings = CZSettings()
    v_b = calibrate_conditional_phase(
        simulator, settings.schedule_at, settings.calibration_bias.values()
    )
    backend = LindbladBackend(
        simulator,
        settings.schedule_at(v_b),
        include_decoherence=True,
        single_qubit_fidelity=setup.gates.single_qubit_fidelity,
        single_qubit_gate_time=setup.gates.gate_time,
    )
    config = RBConfig(lengths=LENGTHS, samples=30, seed=5)

    fidelity = fit_decay(run_rb(config, backend))
    purity = fit_decay(run_pb(config, backend), "purity")
    report = error_rates(fidelity, purity_reference=purity)

    assert report.r_ref.value > 0.0
    assert 0.4 <= report.incoherent_fraction_ref <= 1.1
