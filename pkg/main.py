#!/usr/bin/env python3
"""
Command-line entry point.

    main.py --config device.toml --seed 7 --out out <subcommand>

Each subcommand writes ``<out>/<subcommand>.csv`` and
``<out>/<subcommand>.json``. Exit status is 0 on success, 2 for invalid
configuration and 1 for a failure during the run, in which case
``<out>/<subcommand>_error.json`` holds the diagnostics.
"""

from __future__ import annotations

import argparse
import math
import sys
import tomllib
from collections.abc import Callable
from pathlib import Path
from typing import Any, Literal

import numpy as np

from artifacts import (
    calibration_record,
    config_hash,
    map_rows,
    write_csv,
    write_json,
)
from backends import Backend, DepolarizingBackend, IdealBackend, LindbladBackend
from benchmarking import (
    BenchmarkTable,
    DecayFit,
    ErrorReport,
    RBConfig,
    error_rates,
    fit_decay,
    run_pb,
    run_rb,
)
from config import (
    GHZ,
    MHZ,
    NS,
    SUBCOMMANDS,
    BenchmarkRun,
    ChevronRun,
    CZSettings,
    DeviceSetup,
    LeakageMapRun,
    PhaseScanRun,
    RamseyRun,
    RunConfig,
    SimulationSettings,
    SpectroscopyRun,
    TuneAdiabaticRun,
    TuneDiabaticRun,
    ZZRun,
    device_setup,
    load_run_config,
)
from device_model import Element, compute_zz, effective_coupling, zz_scan
from errors import CalibrationError, ConfigError, FitError, OptimizerAbortedError
from evolution import PulseSimulator, wrap_phase
from experiments import (
    conditional_phase_scan,
    coupler_spectroscopy,
    coupling_from_chevron,
    iswap_chevron,
    leakage_map,
    ramsey_conditional_phase,
)
from logging_config import getLogger, set_all_loggers_level
from tuneup import (
    CalibrationResult,
    NMConfig,
    calibrate_conditional_phase,
    phase_crossing,
    tune_adiabatic_cz,
    tune_diabatic_cz,
)

logger = getLogger(__name__)

Runner = Callable[[RunConfig, Any, DeviceSetup, str], None]


def _project_version() -> tuple[str, str]:
    """Name and version of this simulator as declared in pyproject.toml."""
    with (Path(__file__).parent / "pyproject.toml").open("rb") as handle:
        project = tomllib.load(handle)["project"]
    return str(project["name"]), str(project["version"])


def _simulator(config: RunConfig, setup: DeviceSetup) -> PulseSimulator:
    return PulseSimulator(
        setup.device,
        frame=config.frame,
        dt=config.dt,
        max_dim=config.max_hilbert_dim,
        line_filter=setup.line_filter,
        predistort=setup.predistort,
    )


def _out(config: RunConfig, name: str, suffix: str) -> Path:
    return config.output_dir / f"{name}.{suffix}"


def _run_spectroscopy(
    config: RunConfig, section: SpectroscopyRun, setup: DeviceSetup, digest: str
) -> None:
    result = coupler_spectroscopy(
        setup.device, section.bias.values(), config.max_hilbert_dim
    )
    rows = [
        (
            float(v),
            float(wc) / GHZ,
            *(float(f) / GHZ for f in freqs),
            *(label or "" for label in labels),
        )
        for v, wc, freqs, labels in zip(
            result.bias, result.coupler_frequency, result.frequencies, result.labels
        )
    ]
    header = ["v_b", "coupler_ghz", "branch0_ghz", "branch1_ghz", "branch2_ghz"]
    write_csv(
        _out(config, "spectroscopy", "csv"),
        header + ["label0", "label1", "label2"],
        rows,
        digest,
    )
    write_json(
        _out(config, "spectroscopy", "json"),
        "spectroscopy",
        {
            "seed": config.seed,
            "anticrossings": [
                {
                    "bias_v": a.bias,
                    "coupler_ghz": a.coupler_frequency / GHZ,
                    "gap_mhz": a.gap / MHZ,
                    "branches": list(a.branches),
                }
                for a in result.anticrossings
            ],
        },
        digest,
    )


def _chevron(config: RunConfig, section: ChevronRun, setup: DeviceSetup) -> Any:
    return iswap_chevron(
        setup.device,
        section.bias.values(),
        section.tau_ns.values(NS),
        section.resonance_ghz * GHZ,
        include_decoherence=config.decoherence,
        threads=config.threads,
        max_dim=config.max_hilbert_dim,
    )


def _run_chevron(
    config: RunConfig, section: ChevronRun, setup: DeviceSetup, digest: str
) -> None:
    chevron = _chevron(config, section, setup)
    rows = [
        (vb, tau / NS, p)
        for vb, tau, p in map_rows(chevron.x, chevron.y, chevron.values)
    ]
    write_csv(
        _out(config, "chevron", "csv"), ["v_b", "tau_ns", "p_q1_excited"], rows, digest
    )
    write_json(
        _out(config, "chevron", "json"),
        "chevron",
        {
            "seed": config.seed,
            "bias_points": len(chevron.x),
            "time_points": len(chevron.y),
            "resonance_ghz": section.resonance_ghz,
            "decoherence": config.decoherence,
        },
        digest,
    )


def _run_coupling(
    config: RunConfig, section: ChevronRun, setup: DeviceSetup, digest: str
) -> None:
    curve = coupling_from_chevron(_chevron(config, section, setup))
    device = setup.device
    omega = section.resonance_ghz * GHZ
    rows = []
    for v, g in zip(curve.bias, curve.coupling):
        omega_c = float(device.frequency(Element.C, float(v)))
        rows.append(
            (
                float(v),
                omega_c / GHZ,
                float(g) / MHZ,
                abs(effective_coupling(device.params, omega, omega, omega_c)) / MHZ,
            )
        )
    write_csv(
        _out(config, "coupling", "csv"),
        ["v_b", "coupler_ghz", "g_measured_mhz", "g_perturbative_mhz"],
        rows,
        digest,
    )
    measured = curve.coupling[np.isfinite(curve.coupling)] / MHZ
    write_json(
        _out(config, "coupling", "json"),
        "coupling",
        {
            "seed": config.seed,
            "resolution_mhz": curve.resolution / 1e6,
            "g_min_mhz": float(measured.min()) if measured.size else None,
            "g_max_mhz": float(measured.max()) if measured.size else None,
        },
        digest,
    )


def _resolve_cz(
    config: RunConfig, settings: CZSettings, simulator: PulseSimulator
) -> CZSettings:
    """Settings with V_b filled in, calibrating it when the table leaves it out."""
    if settings.v_b is not None:
        return settings
    v_b = calibrate_conditional_phase(
        simulator,
        settings.schedule_at,
        settings.calibration_bias.values(),
        threads=config.threads,
    )
    return settings.model_copy(update={"v_b": v_b})


def _run_ramsey(
    config: RunConfig, section: RamseyRun, setup: DeviceSetup, digest: str
) -> None:
    simulator = _simulator(config, setup)
    cz = _resolve_cz(config, section.cz_settings(), simulator)
    schedule = cz.schedule()
    alpha = np.linspace(0.0, 2.0 * math.pi, section.alpha_points, endpoint=False)
    target = Element(section.target)
    shots = None if config.exact else int(config.shots)
    fringes = [
        ramsey_conditional_phase(
            simulator,
            schedule,
            alpha,
            control_excited,
            shots=shots,
            target=target,
            include_decoherence=config.decoherence,
            assignment_error=section.assignment_error,
            rng_seed=None if config.seed is None else config.seed + k,
        )
        for k, control_excited in enumerate((False, True))
    ]
    rows = list(zip(alpha, fringes[0].p_excited, fringes[1].p_excited))
    write_csv(
        _out(config, "ramsey-phase", "csv"),
        ["alpha", "p_control_ground", "p_control_excited"],
        rows,
        digest,
    )
    gate = simulator.gate_result(schedule)
    write_json(
        _out(config, "ramsey-phase", "json"),
        "ramsey-phase",
        {
            "seed": config.seed,
            "shots": config.shots,
            "target": section.target,
            "cz_v_b": cz.v_b,
            "phase_control_ground": fringes[0].fit.phase,
            "phase_control_excited": fringes[1].fit.phase,
            "contrast_control_ground": fringes[0].fit.contrast,
            "contrast_control_excited": fringes[1].fit.contrast,
            "conditional_phase": wrap_phase(
                fringes[1].fit.phase - fringes[0].fit.phase
            ),
            "conditional_phase_process": gate.conditional_phase,
        },
        digest,
    )


def _run_phase_scan(
    config: RunConfig, section: PhaseScanRun, setup: DeviceSetup, digest: str
) -> None:
    simulator = _simulator(config, setup)
    scan = conditional_phase_scan(
        simulator,
        section.bias.values(),
        section.q_bias.values() if section.q_bias is not None else None,
        duration=section.duration_ns * NS,
        rise=section.rise_ns * NS,
        threads=config.threads,
    )
    write_csv(
        _out(config, "phase-scan", "csv"),
        ["v_b", "v_q", "phi_c"],
        map_rows(scan.x, scan.y, scan.values),
        digest,
    )
    crossing: float | None = None
    if section.q_bias is None:
        try:
            crossing = phase_crossing(scan)
        except CalibrationError:
            crossing = None
    write_json(
        _out(config, "phase-scan", "json"),
        "phase-scan",
        {
            "seed": config.seed,
            "mode": "adiabatic" if section.q_bias is None else "diabatic",
            "invalid_points": int(np.count_nonzero(~np.isfinite(scan.values))),
            "pi_crossing_v_b": crossing,
        },
        digest,
    )


def _run_leakage_map(
    config: RunConfig, section: LeakageMapRun, setup: DeviceSetup, digest: str
) -> None:
    maps = leakage_map(
        _simulator(config, setup),
        section.bias.values(),
        section.q_bias.values(),
        section.duration_ns * NS,
        section.rise_ns * NS,
        config.threads,
    )
    direct = maps.direct
    rows = [
        (vb, vq, g, leak)
        for (vb, vq, g), (_, _, leak) in zip(
            map_rows(direct.x, direct.y, maps.ground_population.values),
            map_rows(direct.x, direct.y, direct.values),
        )
    ]
    write_csv(
        _out(config, "leakage-map", "csv"),
        ["v_b", "v_q", "ground_population", "leakage"],
        rows,
        digest,
    )
    row, col = np.unravel_index(int(np.argmin(direct.values)), direct.values.shape)
    write_json(
        _out(config, "leakage-map", "json"),
        "leakage-map",
        {
            "seed": config.seed,
            "min_leakage": float(direct.values[row, col]),
            "min_leakage_v_b": float(direct.x[col]),
            "min_leakage_v_q": float(direct.y[row]),
            "lower_is_q1": maps.lower_is_q1,
        },
        digest,
    )


def _backend(config: RunConfig, section: BenchmarkRun, setup: DeviceSetup) -> Backend:
    if section.backend == "ideal":
        return IdealBackend()
    if section.backend == "depolarizing":
        return DepolarizingBackend(section.depolarizing_strength)
    gates = setup.gates
    simulator = _simulator(config, setup)
    cz = _resolve_cz(config, section.cz_settings(), simulator)
    return LindbladBackend(
        simulator,
        cz.schedule(),
        include_decoherence=config.decoherence,
        single_qubit_fidelity=gates.single_qubit_fidelity,
        single_qubit_gate_time=gates.gate_time if config.decoherence else 0.0,
    )


def _fit_summary(fit: DecayFit) -> dict[str, float]:
    return {
        "amplitude": fit.amplitude,
        "decay": fit.decay,
        "decay_stderr": fit.decay_stderr,
        "offset": fit.offset,
        "residual_norm": fit.residual_norm,
    }


def _report_summary(report: ErrorReport) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for name, value in vars(report).items():
        if value is None or isinstance(value, float):
            out[name] = value
        else:
            out[name] = {"value": value.value, "stderr": value.stderr}
    return out


def _run_benchmark(
    config: RunConfig,
    section: BenchmarkRun,
    setup: DeviceSetup,
    digest: str,
    name: Literal["rb", "pb"],
) -> None:
    backend = _backend(config, section, setup)
    seed = config.seed if config.seed is not None else 0
    variants = ["none"]
    if section.interleave != "none":
        variants.append(section.interleave)
    tables: dict[str, BenchmarkTable] = {}
    for interleave in variants:
        rb = RBConfig(
            lengths=section.lengths,
            samples=section.samples,
            interleave=interleave,  # type: ignore[arg-type]
            seed=seed,
            threads=config.threads,
        )
        tables[f"fidelity_{interleave}"] = run_rb(rb, backend)
        if name == "pb":
            tables[f"purity_{interleave}"] = run_pb(rb, backend)

    fits = {
        key: fit_decay(table, "purity" if key.startswith("purity") else "fidelity")
        for key, table in tables.items()
    }
    interleaved = section.interleave if section.interleave != "none" else None
    report = error_rates(
        fits["fidelity_none"],
        fits.get(f"fidelity_{interleaved}") if interleaved else None,
        fits.get("purity_none"),
        fits.get(f"purity_{interleaved}") if interleaved else None,
    )

    header = ["m"]
    columns = []
    for key, table in tables.items():
        header += [f"{key}_mean", f"{key}_std"]
        columns += [table.mean, table.std]
    rows = [
        (int(m), *(float(c[n]) for c in columns))
        for n, m in enumerate(section.lengths)
    ]
    write_csv(_out(config, name, "csv"), header, rows, digest)
    write_json(
        _out(config, name, "json"),
        name,
        {
            "seed": seed,
            "samples": section.samples,
            "backend": section.backend,
            "interleave": section.interleave,
            "fits": {key: _fit_summary(fit) for key, fit in fits.items()},
            "error_rates": _report_summary(report),
        },
        digest,
    )


def _write_calibration(
    config: RunConfig, name: str, result: CalibrationResult, digest: str
) -> None:
    if result.kind == "adiabatic":
        keys = ["v_b", "duration_ns"]
    else:
        keys = ["v_b", "v_q", "duration_ns"]
    rows = [(n, *point, value) for n, (point, value) in enumerate(result.trace)]
    write_csv(
        _out(config, name, "csv"), ["evaluation", *keys, "objective"], rows, digest
    )
    gate = result.gate
    report = {
        "fidelity": result.fidelity,
        "infidelity": result.infidelity,
        "objective": result.objective,
        "leakage": gate.leakage,
        "average_leakage": gate.average_leakage,
        "conditional_phase": gate.conditional_phase,
        "phase_q1": gate.phase_q1,
        "phase_q2": gate.phase_q2,
        "notes": result.notes,
    }
    payload = calibration_record(result.kind, result.parameters, result.trace, report)
    write_json(
        _out(config, name, "json"), name, {"seed": config.seed, **payload}, digest
    )


def _run_tune_adiabatic(
    config: RunConfig, section: TuneAdiabaticRun, setup: DeviceSetup, digest: str
) -> None:
    result = tune_adiabatic_cz(
        _simulator(config, setup),
        section.bias.values(),
        duration=section.duration_ns * NS,
        config=NMConfig(scale=section.scale, max_evaluations=section.max_evaluations),
        objective=section.objective,
        threads=config.threads,
    )
    _write_calibration(config, "tune-adiabatic", result, digest)


def _run_tune_diabatic(
    config: RunConfig, section: TuneDiabaticRun, setup: DeviceSetup, digest: str
) -> None:
    result = tune_diabatic_cz(
        _simulator(config, setup),
        section.bias.values(),
        section.q_bias.values(),
        duration=section.duration_ns * NS,
        rise=section.rise_ns * NS,
        leakage_weight=section.leakage_weight,
        config=NMConfig(scale=section.scale, max_evaluations=section.max_evaluations),
        objective=section.objective,
        threads=config.threads,
    )
    _write_calibration(config, "tune-diabatic", result, digest)


def _run_zz(config: RunConfig, section: ZZRun, setup: DeviceSetup, digest: str) -> None:
    device = setup.device
    params = device.params
    zeta = compute_zz(params, device.idle, config.max_hilbert_dim)
    rows: list[tuple[float, float]] = []
    if section.coupler_ghz is not None:
        couplers = section.coupler_ghz.values(GHZ)
        scan = zz_scan(
            params, device.idle[0], device.idle[1], couplers, config.max_hilbert_dim
        )
        rows = [(float(wc) / GHZ, float(z) / MHZ) for wc, z in zip(couplers, scan)]
    write_csv(_out(config, "zz", "csv"), ["coupler_ghz", "zz_mhz"], rows, digest)
    write_json(
        _out(config, "zz", "json"),
        "zz",
        {
            "seed": config.seed,
            "idle_ghz": [w / GHZ for w in device.idle],
            "zz_mhz": zeta / MHZ,
            "effective_coupling_mhz": effective_coupling(params, *device.idle) / MHZ,
        },
        digest,
    )


RUNNERS: dict[str, Runner] = {
    "spectroscopy": _run_spectroscopy,
    "chevron": _run_chevron,
    "coupling": _run_coupling,
    "ramsey-phase": _run_ramsey,
    "phase-scan": _run_phase_scan,
    "leakage-map": _run_leakage_map,
    "rb": lambda c, s, d, h: _run_benchmark(c, s, d, h, "rb"),
    "pb": lambda c, s, d, h: _run_benchmark(c, s, d, h, "pb"),
    "tune-adiabatic": _run_tune_adiabatic,
    "tune-diabatic": _run_tune_diabatic,
    "zz": _run_zz,
}


def _diagnostics(exc: Exception) -> dict[str, Any]:
    details: dict[str, Any] = {
        "error_type": type(exc).__name__,
        "message": str(exc),
    }
    if isinstance(exc, FitError):
        details["diagnostics"] = exc.diagnostics
    if isinstance(exc, OptimizerAbortedError):
        details["trace"] = [{"point": p, "value": v} for p, v in exc.trace]
    return details


def execute(config: RunConfig, subcommand: str) -> int:
    """Run one subcommand and write its artifacts.

    Returns:
        0 on success, 2 for invalid configuration, 1 for a runtime failure
    """
    try:
        section = config.section(subcommand)
        setup = device_setup(config.device_tables, config.device_path)
        digest = config_hash(config.hash_payload(subcommand))
        try:
            config.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory not writable: {exc}") from exc
    except ConfigError as exc:
        logger.error(
            f"Invalid configuration: {exc}",
            extra={
                "main.config_error.subcommand": subcommand,
                "main.config_error.error": str(exc),
            },
        )
        return 2

    logger.info(
        f"Running {subcommand}",
        extra={"main.run.subcommand": subcommand, "main.run.config_hash": digest},
    )
    try:
        RUNNERS[subcommand](config, section, setup, digest)
    except Exception as exc:
        logger.error(
            f"Run failed: {type(exc).__name__}: {exc}",
            extra={
                "main.application_error.error": str(exc),
                "main.application_error.error_type": type(exc).__name__,
                "main.application_error.message": f"{subcommand} failed",
            },
        )
        try:
            write_json(
                _out(config, f"{subcommand}_error", "json"),
                "error",
                _diagnostics(exc),
                digest,
            )
        except OSError as write_exc:
            logger.warning(
                f"Could not write diagnostics for {subcommand}: {write_exc}",
                extra={
                    "main.application_error.error": str(write_exc),
                    "main.application_error.error_type": type(write_exc).__name__,
                    "main.application_error.message": "diagnostics not written",
                },
            )
        return 1
    logger.info(
        f"Finished {subcommand}",
        extra={"main.run.subcommand": subcommand, "main.run.config_hash": digest},
    )
    return 0


def _shots(value: str) -> int | Literal["exact"]:
    if value == "exact":
        return "exact"
    try:
        shots = int(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            "expected a positive integer or 'exact'"
        ) from exc
    if shots < 1:
        raise argparse.ArgumentTypeError("expected a positive integer or 'exact'")
    return shots


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cz-sim",
        description="Pulse-level simulation of a tunable-coupler CZ gate.",
    )
    parser.add_argument("--config", type=Path, default=Path("device.toml"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--shots", type=_shots, default="exact")
    parser.add_argument("--decoherence", type=_on_off, default=False)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    return parser


def main(argv: list[str] | None = None) -> None:
    """Parse arguments, load configuration and run one subcommand.

    Exits:
        0: Success
        1: Runtime failure (diagnostics written next to the artifacts)
        2: Invalid arguments or configuration
    """
    args = build_parser().parse_args(argv)
    try:
        name, version = _project_version()
        logger.info(
            f"Starting {name} {version}",
            extra={"main.start.project": name, "main.start.version": version},
        )

        settings = SimulationSettings()
        set_all_loggers_level(settings.log_level)
        config = load_run_config(
            args.config,
            settings,
            seed=args.seed,
            output_dir=args.out,
            threads=args.threads,
            shots=args.shots,
            decoherence=args.decoherence,
        )
    except (ConfigError, ValueError) as exc:
        logger.error(
            f"Invalid configuration: {exc}",
            extra={
                "main.config_error.subcommand": args.subcommand,
                "main.config_error.error": str(exc),
            },
        )
        sys.exit(2)
    sys.exit(execute(config, args.subcommand))


if __name__ == "__main__":
    main()
