#!/usr/bin/env python3
"""
Configuration loading and validation.

Process-wide settings come from environment variables (prefix CZSIM_).
The device and the per-experiment run settings live in one TOML file:
- [device], [flux], [distortion] and [gates] describe the hardware in
  GHz, MHz, µs, ns and V,
- [run.<subcommand>] tables hold grids and options of each experiment.
Values are converted to rad/s and seconds when the models are built.
"""

from __future__ import annotations

import json
import math
import tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic_settings import BaseSettings, SettingsConfigDict

from benchmarking import Interleave
from device_model import DEFAULT_MAX_HILBERT_DIM, Device, DeviceParams
from errors import ConfigError
from logging_config import getLogger
from pulses import (
    Schedule,
    StepResponseFilter,
    adiabatic_cz_schedule,
    diabatic_cz_schedule,
)

logger = getLogger(__name__)

TWO_PI = 2.0 * math.pi
GHZ = TWO_PI * 1e9
MHZ = TWO_PI * 1e6
NS = 1e-9
US = 1e-6

Frame = Literal["rotating", "lab"]
Triple = tuple[float, float, float]

SUBCOMMANDS = (
    "spectroscopy",
    "chevron",
    "coupling",
    "ramsey-phase",
    "phase-scan",
    "leakage-map",
    "rb",
    "pb",
    "tune-adiabatic",
    "tune-diabatic",
    "zz",
)
Subcommand = Literal[
    "spectroscopy",
    "chevron",
    "coupling",
    "ramsey-phase",
    "phase-scan",
    "leakage-map",
    "rb",
    "pb",
    "tune-adiabatic",
    "tune-diabatic",
    "zz",
]
STOCHASTIC_SUBCOMMANDS = frozenset({"rb", "pb"})


class SimulationSettings(BaseSettings):
    """Process-wide numerical settings read from the environment."""

    model_config = SettingsConfigDict(
        env_prefix="CZSIM_",
        case_sensitive=False,
        extra="ignore",
        env_ignore_empty=True,
    )

    output_dir: Path = Field(
        default=Path("out"),
        description="Default directory for artifacts when --out is not given",
    )
    log_level: str = Field(
        default="INFO",
        validation_alias="LOG_LEVEL",
        description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)",
    )
    max_hilbert_dim: int = Field(
        default=DEFAULT_MAX_HILBERT_DIM,
        gt=0,
        description="Refuse Hamiltonians larger than this dimension",
    )
    dt_rotating_ns: float = Field(
        default=0.1, gt=0.0, description="Sampling step in the rotating frame, ns"
    )
    dt_lab_ns: float = Field(
        default=0.02, gt=0.0, description="Sampling step in the lab frame, ns"
    )
    frame: Frame = Field(default="rotating", description="Integration frame")

    @property
    def dt(self) -> float:
        """Sampling step of the selected frame, in seconds."""
        step = self.dt_rotating_ns if self.frame == "rotating" else self.dt_lab_ns
        return step * NS


class DeviceSection(BaseModel):
    """[device] table. Order of triples is (Q1, Q2, C)."""

    model_config = ConfigDict(extra="forbid")

    omega_max_ghz: Triple
    alpha_mhz: Triple
    idle_ghz: Triple
    g_1c_mhz: float = Field(..., ge=0.0)
    g_2c_mhz: float = Field(..., ge=0.0)
    g_12_mhz: float
    t1_us: Triple | None = Field(default=None, description="None disables relaxation")
    t2_us: Triple | None = Field(
        default=None, description="Ramsey T2; defaults to T1 when T1 is given"
    )
    dims: tuple[int, int, int] = (3, 3, 3)

    def dephasing_times(self) -> Triple:
        """Pure dephasing T_φ from 1/T_φ = 1/T2 − 1/(2T1), in seconds."""
        if self.t1_us is None:
            return (math.inf, math.inf, math.inf)
        t2 = self.t2_us if self.t2_us is not None else self.t1_us
        out = []
        for t1, t2_k in zip(self.t1_us, t2):
            rate = 1.0 / t2_k - 0.5 / t1
            out.append(math.inf if rate <= 0.0 else US / rate)
        return (out[0], out[1], out[2])

    def to_params(self) -> DeviceParams:
        t1 = (
            (math.inf, math.inf, math.inf)
            if self.t1_us is None
            else tuple(t * US for t in self.t1_us)
        )
        omega_max = tuple(w * GHZ for w in self.omega_max_ghz)
        return DeviceParams(
            omega_max=omega_max,  # type: ignore[arg-type]
            alpha=tuple(a * MHZ for a in self.alpha_mhz),  # type: ignore[arg-type]
            g_1c=self.g_1c_mhz * MHZ,
            g_2c=self.g_2c_mhz * MHZ,
            g_12=self.g_12_mhz * MHZ,
            t1=t1,  # type: ignore[arg-type]
            t_phi=self.dephasing_times(),
            dims=self.dims,
        )


class FluxSection(BaseModel):
    """[flux] table: flux period and tunability per element."""

    model_config = ConfigDict(extra="forbid")

    v_period: Triple = (1.0, 1.0, 1.0)
    tunable: tuple[bool, bool, bool] = (True, True, True)


class DistortionSection(BaseModel):
    """[distortion] table: single-pole flux-line response."""

    model_config = ConfigDict(extra="forbid")

    fraction: float = 0.0
    time_constant_ns: float = Field(default=30.0, gt=0.0)
    predistort: bool = True

    def to_filter(self) -> StepResponseFilter:
        return StepResponseFilter(
            fraction=self.fraction, time_constant=self.time_constant_ns * NS
        )


class GateSettings(BaseModel):
    """[gates] table: single-qubit gate quality used by the RB backend."""

    model_config = ConfigDict(extra="forbid")

    single_qubit_fidelity: tuple[float, float] = (0.996, 0.997)
    single_qubit_gate_time_ns: float = Field(default=20.0, ge=0.0)

    @field_validator("single_qubit_fidelity")
    @classmethod
    def check_fidelity(cls, value: tuple[float, float]) -> tuple[float, float]:
        if any(not 0.5 <= f <= 1.0 for f in value):
            raise ValueError("single-qubit fidelities must lie in [0.5, 1]")
        return value

    @property
    def depolarizing_strength(self) -> tuple[float, float]:
        """λ = 2(1 − F) per qubit."""
        return (
            2.0 * (1.0 - self.single_qubit_fidelity[0]),
            2.0 * (1.0 - self.single_qubit_fidelity[1]),
        )

    @property
    def gate_time(self) -> float:
        return self.single_qubit_gate_time_ns * NS


class DeviceFile(BaseModel):
    """Hardware tables of the TOML file."""

    model_config = ConfigDict(extra="ignore")

    device: DeviceSection
    flux: FluxSection = FluxSection()
    distortion: DistortionSection = DistortionSection()
    gates: GateSettings = GateSettings()


@dataclass(frozen=True)
class DeviceSetup:
    """Everything the simulator needs to know about the hardware."""

    device: Device
    line_filter: StepResponseFilter
    predistort: bool
    gates: GateSettings


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        with path.open("rb") as f:
            return tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        logger.error(
            "Configuration file unreadable",
            extra={
                "config.config_file_error.path": str(path),
                "config.config_file_error.error": str(exc),
            },
        )
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc


def _validation_failed(path: Path, expected: str, exc: Exception) -> ConfigError:
    logger.error(
        "Configuration validation failed",
        extra={
            "config.config_type_error.expected": expected,
            "config.config_type_error.actual": "invalid",
            "config.config_type_error.path": str(path),
        },
    )
    return ConfigError(f"Configuration validation failed: {exc}")


def device_setup(data: dict[str, Any], path: Path = Path("<memory>")) -> DeviceSetup:
    """Build a DeviceSetup from parsed TOML tables.

    Raises:
        ConfigError: If a table is missing or a value is out of range
    """
    try:
        parsed = DeviceFile.model_validate(data)
        params = parsed.device.to_params()
        idle = tuple(w * GHZ for w in parsed.device.idle_ghz)
        device = Device.at_idle(
            params,
            idle,  # type: ignore[arg-type]
            v_period=parsed.flux.v_period,
            tunable=parsed.flux.tunable,
        )
    except (ValidationError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise _validation_failed(path, "DeviceFile", exc) from exc
    return DeviceSetup(
        device=device,
        line_filter=parsed.distortion.to_filter(),
        predistort=parsed.distortion.predistort,
        gates=parsed.gates,
    )


def load_device(path: Path) -> DeviceSetup:
    """Read the hardware tables of a TOML file.

    Raises:
        ConfigError: If the file cannot be read or fails validation
    """
    return device_setup(_read_toml(path), path)


class Grid(BaseModel):
    """Evenly spaced axis: ``num`` points from ``start`` to ``stop`` inclusive."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    start: float
    stop: float
    num: int = Field(..., ge=1)

    def values(self, scale: float = 1.0) -> NDArray[np.float64]:
        return np.linspace(self.start, self.stop, self.num) * scale


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpectroscopyRun(_Section):
    bias: Grid = Grid(start=0.0, stop=0.25, num=251)


class ChevronRun(_Section):
    bias: Grid = Grid(start=0.0, stop=0.22, num=23)
    tau_ns: Grid = Grid(start=0.0, stop=400.0, num=801)
    resonance_ghz: float = Field(default=4.110, gt=0.0)


class CZSettings(_Section):
    """Pulse parameters of a CZ (V, ns).

    With ``v_b`` unset the coupler amplitude is calibrated before use: it
    is placed where the process conditional phase of the pulse reaches π,
    searching ``calibration_bias`` with the other parameters held fixed.
    """

    kind: Literal["adiabatic", "diabatic"] = "adiabatic"
    v_b: float | None = None
    v_q: float = 0.0
    duration_ns: float = Field(default=30.0, gt=0.0)
    rise_ns: float = Field(default=0.0, ge=0.0)
    calibration_bias: Grid = Grid(start=0.0, stop=0.22, num=45)

    def schedule_at(self, v_b: float) -> Schedule:
        if self.kind == "adiabatic":
            return adiabatic_cz_schedule(v_b, self.duration_ns * NS)
        return diabatic_cz_schedule(
            v_b, self.v_q, self.duration_ns * NS, self.rise_ns * NS
        )

    def schedule(self) -> Schedule:
        """Schedule of a calibrated pulse.

        Raises:
            ConfigError: If ``v_b`` has not been calibrated
        """
        if self.v_b is None:
            raise ConfigError("CZ amplitude v_b is not calibrated")
        return self.schedule_at(self.v_b)

    @classmethod
    def from_record(cls, path: Path) -> CZSettings:
        """Pulse parameters from a calibration record written by a tune-up run.

        Raises:
            ConfigError: If the record cannot be read or lacks parameters
        """
        try:
            record = json.loads(path.read_text(encoding="utf-8"))
            p = record["parameters"]
            return cls(
                kind=record["gate"],
                v_b=p["v_b"],
                v_q=p.get("v_q", 0.0),
                duration_ns=p["duration"] / NS,
                rise_ns=p.get("rise", 0.0) / NS,
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise _validation_failed(path, "CalibrationRecord", exc) from exc


class _GateRun(_Section):
    """A run that applies the CZ given by ``cz`` or by a calibration record."""

    cz: CZSettings = CZSettings()
    calibration: Path | None = Field(
        default=None, description="Calibration record overriding cz"
    )

    def cz_settings(self) -> CZSettings:
        if self.calibration is not None:
            return CZSettings.from_record(self.calibration)
        return self.cz


class RamseyRun(_GateRun):
    alpha_points: int = Field(default=16, ge=3)
    target: Literal["Q1", "Q2"] = "Q2"
    assignment_error: float = Field(default=0.0, ge=0.0, le=0.5)


class PhaseScanRun(_Section):
    bias: Grid = Grid(start=0.0, stop=0.22, num=45)
    q_bias: Grid | None = None
    duration_ns: float = Field(default=30.0, gt=0.0)
    rise_ns: float = Field(default=0.0, ge=0.0)


class LeakageMapRun(_Section):
    bias: Grid = Grid(start=0.10, stop=0.22, num=25)
    q_bias: Grid = Grid(start=0.02, stop=0.08, num=25)
    duration_ns: float = Field(default=18.0, gt=0.0)
    rise_ns: float = Field(default=2.0, ge=0.0)


class BenchmarkRun(_GateRun):
    """[run.rb] / [run.pb]: reference and interleaved runs on one backend."""

    lengths: tuple[int, ...] = (1, 5, 10, 20, 40, 60, 80, 100)
    samples: int = Field(default=100, ge=1)
    interleave: Interleave = "cz"
    backend: Literal["lindblad", "depolarizing", "ideal"] = "lindblad"
    depolarizing_strength: float = Field(default=0.01, ge=0.0, le=1.0)


class TuneAdiabaticRun(_Section):
    bias: Grid = Grid(start=0.0, stop=0.22, num=45)
    duration_ns: float = Field(default=30.0, gt=0.0)
    max_evaluations: int = Field(default=60, ge=3)
    scale: tuple[float, float] = (0.005, 1.0)
    objective: Literal["process", "rb"] = "process"


class TuneDiabaticRun(_Section):
    bias: Grid = Grid(start=0.10, stop=0.22, num=13)
    q_bias: Grid = Grid(start=0.02, stop=0.08, num=13)
    duration_ns: float = Field(default=18.0, gt=0.0)
    rise_ns: float = Field(default=2.0, ge=0.0)
    leakage_weight: float = Field(default=1.0, ge=0.0)
    max_evaluations: int = Field(default=80, ge=4)
    scale: tuple[float, float, float] = (0.005, 0.005, 1.0)
    objective: Literal["process", "rb"] = "process"


class ZZRun(_Section):
    coupler_ghz: Grid | None = Grid(start=4.8, stop=5.419, num=64)


SECTION_MODELS: dict[str, type[_Section]] = {
    "spectroscopy": SpectroscopyRun,
    "chevron": ChevronRun,
    "coupling": ChevronRun,
    "ramsey-phase": RamseyRun,
    "phase-scan": PhaseScanRun,
    "leakage-map": LeakageMapRun,
    "rb": BenchmarkRun,
    "pb": BenchmarkRun,
    "tune-adiabatic": TuneAdiabaticRun,
    "tune-diabatic": TuneDiabaticRun,
    "zz": ZZRun,
}


class RunConfig(BaseModel):
    """One CLI invocation: device file, flags and raw [run.*] tables."""

    model_config = ConfigDict(frozen=True)

    device_path: Path
    device_tables: dict[str, Any]
    run_tables: dict[str, Any] = Field(default_factory=dict)
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    output_dir: Path
    threads: int = Field(default=1, ge=1)
    shots: int | Literal["exact"] = "exact"
    decoherence: bool = False
    frame: Frame = "rotating"
    dt: float = Field(default=0.1e-9, gt=0.0)
    max_hilbert_dim: int = Field(default=DEFAULT_MAX_HILBERT_DIM, gt=0)

    @field_validator("shots")
    @classmethod
    def check_shots(cls, value: int | str) -> int | str:
        if isinstance(value, int) and value < 1:
            raise ValueError("shots must be a positive integer or 'exact'")
        return value

    @model_validator(mode="after")
    def check_tables(self) -> RunConfig:
        unknown = set(self.run_tables) - set(SUBCOMMANDS)
        if unknown:
            raise ValueError(f"unknown [run.*] tables: {', '.join(sorted(unknown))}")
        return self

    @property
    def exact(self) -> bool:
        return self.shots == "exact"

    def section(self, subcommand: str) -> _Section:
        """Validated settings of one subcommand.

        Raises:
            ConfigError: If the subcommand is unknown, the table is invalid,
                or a stochastic run has no seed
        """
        model = SECTION_MODELS.get(subcommand)
        if model is None:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        stochastic = subcommand in STOCHASTIC_SUBCOMMANDS or (
            subcommand == "ramsey-phase" and not self.exact
        )
        if stochastic and self.seed is None:
            logger.error(
                "Stochastic run without seed",
                extra={"config.missing_seed.subcommand": subcommand},
            )
            raise ConfigError(f"{subcommand} is stochastic and needs --seed")
        try:
            return model.model_validate(self.run_tables.get(subcommand, {}))
        except ValidationError as exc:
            raise _validation_failed(self.device_path, model.__name__, exc) from exc

    def hash_payload(self, subcommand: str) -> dict[str, Any]:
        """Everything that determines the artifacts of one subcommand."""
        return {
            "subcommand": subcommand,
            "device": self.device_tables,
            "run": self.section(subcommand).model_dump(mode="json"),
            "seed": self.seed,
            "shots": self.shots,
            "decoherence": self.decoherence,
            "frame": self.frame,
            "dt": self.dt,
            "max_hilbert_dim": self.max_hilbert_dim,
        }


def load_run_config(
    path: Path,
    settings: SimulationSettings,
    seed: int | None = None,
    output_dir: Path | None = None,
    threads: int = 1,
    shots: int | Literal["exact"] = "exact",
    decoherence: bool = False,
) -> RunConfig:
    """Combine the TOML file, CLI flags and environment settings.

    Raises:
        ConfigError: If the file cannot be read or a value is invalid
    """
    data = _read_toml(path)
    device_tables = {k: v for k, v in data.items() if k != "run"}
    try:
        return RunConfig(
            device_path=path,
            device_tables=device_tables,
            run_tables=data.get("run", {}),
            seed=seed,
            output_dir=output_dir if output_dir is not None else settings.output_dir,
            threads=threads,
            shots=shots,
            decoherence=decoherence,
            frame=settings.frame,
            dt=settings.dt,
            max_hilbert_dim=settings.max_hilbert_dim,
        )
    except ValidationError as exc:
        raise _validation_failed(path, "RunConfig", exc) from exc
