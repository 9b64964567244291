#!/usr/bin/env python3
"""
Nelder-Mead calibration of the adiabatic and diabatic CZ pulses.

The adiabatic gate is a half-cosine coupler excursion tuned over
(V_b, duration); the diabatic gate is a pair of square pulses on the
coupler and Q2 tuned over (V_b, V_q, duration). The default objective is
the process-level average gate infidelity after virtual-Z compensation;
the diabatic objective adds weighted leakage.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq

from backends import LindbladBackend
from benchmarking import RBConfig, run_rb
from errors import (
    CalibrationError,
    ConfigError,
    DegenerateLabelingError,
    InvalidShapeError,
    OptimizerAbortedError,
)
from evolution import (
    CZ_IDEAL,
    GateResult,
    PulseSimulator,
    average_gate_fidelity,
    virtual_z_compensation,
    wrap_phase,
)
from experiments import Map2D, conditional_phase_scan, leakage_map, parallel_map
from logging_config import getLogger
from pulses import (
    Schedule,
    adiabatic_cz_schedule,
    diabatic_cz_schedule,
    quantize_duration,
)

logger = getLogger(__name__)

RealArray = NDArray[np.float64]
Trace = list[tuple[list[float], float]]
Objective = Literal["process", "rb"]

# Objective value for parameter points the device cannot realise.
_INFEASIBLE = 10.0
_INFEASIBLE_ERRORS = (ConfigError, DegenerateLabelingError, InvalidShapeError)


class NMConfig(BaseModel):
    """Simplex size, coefficients and budget of the Nelder-Mead search."""

    model_config = ConfigDict(frozen=True)

    scale: tuple[float, ...] = Field(
        default=(0.05,),
        description="Initial simplex step per dimension (one value broadcasts)",
    )
    reflection: float = Field(default=1.0, gt=0.0)
    expansion: float = Field(default=2.0, gt=0.0)
    contraction: float = Field(default=0.5, gt=0.0, lt=1.0)
    shrink: float = Field(default=0.5, gt=0.0, lt=1.0)
    max_evaluations: int = Field(default=100, ge=2)
    fatol: float = Field(
        default=1e-12, ge=0.0, description="Stop when f spread falls below"
    )

    @model_validator(mode="after")
    def check_scale(self) -> NMConfig:
        if any(s == 0.0 for s in self.scale):
            raise ValueError("simplex scale must be non-zero")
        return self

    def steps(self, dim: int) -> RealArray:
        if len(self.scale) == 1:
            return np.full(dim, self.scale[0])
        if len(self.scale) != dim:
            raise ConfigError(f"scale has {len(self.scale)} entries, problem has {dim}")
        return np.asarray(self.scale, dtype=np.float64)


@dataclass(frozen=True)
class NMResult:
    x: RealArray
    value: float
    trace: Trace
    converged: bool

    @property
    def evaluations(self) -> int:
        return len(self.trace)


class _BudgetExhausted(Exception):
    pass


class _Recorder:
    """Counts evaluations, records the trace and tracks the best point."""

    def __init__(self, objective: Callable[[RealArray], float], budget: int) -> None:
        self._objective = objective
        self._budget = budget
        self.trace: Trace = []
        self.best_x: RealArray | None = None
        self.best_value = math.inf

    def __call__(self, x: RealArray) -> float:
        if len(self.trace) >= self._budget:
            raise _BudgetExhausted
        value = float(self._objective(x))
        self.trace.append(([float(v) for v in x], value))
        if not math.isfinite(value):
            logger.error(
                "Objective returned a non-finite value",
                extra={
                    "tuneup.optimizer_aborted.evaluations": len(self.trace),
                    "tuneup.optimizer_aborted.point": ", ".join(f"{v:.6g}" for v in x),
                },
            )
            raise OptimizerAbortedError(
                f"objective returned {value} at evaluation {len(self.trace)}",
                self.trace,
            )
        if value < self.best_value:
            self.best_value = value
            self.best_x = np.array(x, dtype=np.float64)
        return value


def nelder_mead(
    objective: Callable[[RealArray], float],
    x0: Sequence[float],
    config: NMConfig | None = None,
) -> NMResult:
    """Downhill simplex minimisation with a fixed evaluation budget.

    The reported point is the best one ever evaluated, so the result is
    never worse than any entry of the trace.

    Raises:
        ConfigError: If the budget is smaller than dim + 1
        OptimizerAbortedError: If the objective returns a non-finite value
    """
    config = config or NMConfig()
    x0_arr = np.asarray(x0, dtype=np.float64)
    dim = x0_arr.size
    if config.max_evaluations < dim + 1:
        raise ConfigError(
            f"max_evaluations {config.max_evaluations} < dimension + 1 = {dim + 1}"
        )
    f = _Recorder(objective, config.max_evaluations)
    steps = config.steps(dim)
    converged = False

    try:
        simplex = [x0_arr.copy()]
        for i in range(dim):
            vertex = x0_arr.copy()
            vertex[i] += steps[i]
            simplex.append(vertex)
        values = [f(x) for x in simplex]

        while True:
            order = np.argsort(values, kind="stable")
            simplex = [simplex[i] for i in order]
            values = [values[i] for i in order]
            if values[-1] - values[0] <= config.fatol:
                converged = True
                break

            centroid = np.mean(simplex[:-1], axis=0)
            worst = simplex[-1]
            reflected = centroid + config.reflection * (centroid - worst)
            f_r = f(reflected)

            if f_r < values[0]:
                expanded = centroid + config.expansion * (reflected - centroid)
                f_e = f(expanded)
                if f_e < f_r:
                    simplex[-1], values[-1] = expanded, f_e
                else:
                    simplex[-1], values[-1] = reflected, f_r
                continue
            if f_r < values[-2]:
                simplex[-1], values[-1] = reflected, f_r
                continue

            if f_r < values[-1]:
                contracted = centroid + config.contraction * (reflected - centroid)
                f_c = f(contracted)
                if f_c <= f_r:
                    simplex[-1], values[-1] = contracted, f_c
                    continue
            else:
                contracted = centroid + config.contraction * (worst - centroid)
                f_c = f(contracted)
                if f_c < values[-1]:
                    simplex[-1], values[-1] = contracted, f_c
                    continue

            for i in range(1, dim + 1):
                simplex[i] = simplex[0] + config.shrink * (simplex[i] - simplex[0])
                values[i] = f(simplex[i])
    except _BudgetExhausted:
        pass

    best_x = f.best_x if f.best_x is not None else x0_arr
    logger.debug(
        "Nelder-Mead finished",
        extra={
            "tuneup.nelder_mead.evaluations": len(f.trace),
            "tuneup.nelder_mead.best": f.best_value,
        },
    )
    return NMResult(x=best_x, value=f.best_value, trace=f.trace, converged=converged)


@dataclass(frozen=True)
class CalibrationResult:
    """Calibrated pulse, its gate quantities and the optimiser trace.

    Parameters are in SI units (V, s).
    """

    kind: Literal["adiabatic", "diabatic"]
    parameters: dict[str, float]
    gate: GateResult
    fidelity: float
    objective: float
    trace: Trace
    schedule: Schedule
    notes: list[str] = field(default_factory=list)

    @property
    def infidelity(self) -> float:
        return 1.0 - self.fidelity


def gate_infidelity(gate: GateResult) -> float:
    """1 − F_avg of the virtual-Z compensated block against CZ."""
    return 1.0 - average_gate_fidelity(virtual_z_compensation(gate), CZ_IDEAL)


def _first_bracket(
    scan: Map2D, target: float
) -> tuple[float, float, float, float] | None:
    """First grid interval where the unwrapped |φ_c| passes ``target``.

    Returns (lower, upper, interpolated crossing, sign of the accumulated
    phase), or None when no interval brackets the target.
    """
    phases = scan.values[0]
    valid = np.isfinite(phases)
    if np.count_nonzero(valid) < 2:
        return None
    v = scan.x[valid]
    unwrapped = np.unwrap(phases[valid])
    mag = np.abs(unwrapped) - target
    for n in range(len(v) - 1):
        if mag[n] == 0.0:
            return float(v[n]), float(v[n]), float(v[n]), float(np.sign(unwrapped[n]))
        if mag[n] * mag[n + 1] < 0.0:
            frac = mag[n] / (mag[n] - mag[n + 1])
            crossing = float(v[n] + frac * (v[n + 1] - v[n]))
            sign = float(np.sign(unwrapped[n + 1]))
            return float(v[n]), float(v[n + 1]), crossing, sign
    return None


def _no_crossing(points: int) -> CalibrationError:
    logger.error(
        "No conditional-phase crossing in scan range",
        extra={
            "tuneup.calibration_failure.points": points,
            "tuneup.calibration_failure.kind": "adiabatic",
        },
    )
    return CalibrationError("no φ_c = π crossing in the scanned V_b range")


def phase_crossing(scan: Map2D, target: float = math.pi) -> float:
    """First bias where the unwrapped |φ_c| of a 1D scan reaches ``target``.

    Linear interpolation between the bracketing grid points.

    Raises:
        CalibrationError: If no crossing lies in the scanned range
    """
    bracket = _first_bracket(scan, target)
    if bracket is None:
        raise _no_crossing(int(scan.x.size))
    return bracket[2]


def calibrate_conditional_phase(
    simulator: PulseSimulator,
    schedule_for: Callable[[float], Schedule],
    v_b_grid: Sequence[float],
    target: float = math.pi,
    xtol: float = 1e-7,
    threads: int = 1,
) -> float:
    """Coupler amplitude V_b at which the gate's process φ_c equals ``target``.

    The process conditional phase of ``schedule_for(V_b)`` is evaluated on
    the grid; the first interval where its unwrapped magnitude passes the
    target is refined with Brent's method. Other pulse parameters stay as
    ``schedule_for`` fixes them.

    Raises:
        CalibrationError: If no grid interval brackets the target
    """
    bias = np.asarray(list(v_b_grid), dtype=np.float64)

    def phase(v_b: float) -> float:
        return simulator.gate_result(schedule_for(float(v_b))).conditional_phase

    phases = np.array(parallel_map(phase, bias, threads), dtype=np.float64)
    scan = Map2D(
        "V_b (V)", bias, "V_q (V)", np.zeros(1), phases[np.newaxis, :], "phi_c"
    )
    bracket = _first_bracket(scan, target)
    if bracket is None:
        raise _no_crossing(int(bias.size))
    lower, upper, crossing, sign = bracket

    def residual(v_b: float) -> float:
        # continuous through the wrap of φ_c at ±π
        return wrap_phase(sign * phase(v_b) - target)

    if lower == upper:
        v_b = crossing
    else:
        v_b = float(brentq(residual, lower, upper, xtol=xtol))
    logger.info(
        "Conditional phase calibrated",
        extra={
            "tuneup.phase_calibration.v_b": v_b,
            "tuneup.phase_calibration.points": int(bias.size),
        },
    )
    return v_b


def _rb_objective(
    simulator: PulseSimulator, schedule: Schedule, rb: RBConfig
) -> float:
    backend = LindbladBackend(simulator, schedule, include_decoherence=False)
    table = run_rb(rb.model_copy(update={"interleave": "cz"}), backend)
    return float(1.0 - table.mean[-1])


def _evaluate(
    simulator: PulseSimulator,
    schedule: Schedule,
    objective: Objective,
    rb: RBConfig,
) -> tuple[GateResult, float]:
    gate = simulator.gate_result(schedule)
    if objective == "rb":
        return gate, _rb_objective(simulator, schedule, rb)
    return gate, gate_infidelity(gate)


_DEFAULT_RB_OBJECTIVE = RBConfig(lengths=(10,), samples=10)


def tune_adiabatic_cz(
    simulator: PulseSimulator,
    v_b_grid: Sequence[float],
    duration: float = 30e-9,
    config: NMConfig | None = None,
    objective: Objective = "process",
    rb: RBConfig = _DEFAULT_RB_OBJECTIVE,
    threads: int = 1,
) -> CalibrationResult:
    """Calibrate the half-cosine CZ over (V_b, duration).

    V_b starts at the φ_c = π crossing of a conditional-phase scan at the
    nominal duration. Durations are quantised to the sampling step.

    Raises:
        CalibrationError: If the scan has no φ_c = π crossing
        OptimizerAbortedError: If the objective becomes non-finite
    """
    dt = simulator.dt
    duration = quantize_duration(duration, dt)
    scan = conditional_phase_scan(
        simulator, v_b_grid, duration=duration, threads=threads
    )
    v_start = phase_crossing(scan)
    logger.info(
        "Adiabatic tune-up started",
        extra={
            "tuneup.start.v_b": v_start,
            "tuneup.start.duration": duration,
            "tuneup.start.kind": "adiabatic",
        },
    )

    def schedule_for(x: RealArray) -> Schedule:
        d = quantize_duration(float(x[1]) * 1e-9, dt)
        return adiabatic_cz_schedule(float(x[0]), d)

    def cost(x: RealArray) -> float:
        try:
            return _evaluate(simulator, schedule_for(x), objective, rb)[1]
        except _INFEASIBLE_ERRORS:
            return _INFEASIBLE

    config = config or NMConfig(scale=(0.005, 1.0))
    result = nelder_mead(cost, [v_start, duration * 1e9], config)
    schedule = schedule_for(result.x)
    gate, value = _evaluate(simulator, schedule, objective, rb)
    best_duration = schedule.total_duration

    notes = []
    adiabatic_limit = 2.0 * math.pi / simulator.params.g_1c
    if best_duration < adiabatic_limit:
        notes.append("duration below 2π/g_1c; the excursion may not be adiabatic")
        logger.warning(
            "Adiabatic pulse shorter than 2π/g_1c",
            extra={
                "tuneup.adiabaticity.duration": best_duration,
                "tuneup.adiabaticity.limit": adiabatic_limit,
            },
        )
    parameters = {"v_b": float(result.x[0]), "duration": best_duration}
    return _finish("adiabatic", parameters, gate, value, result, schedule, notes)


def _finish(
    kind: Literal["adiabatic", "diabatic"],
    parameters: dict[str, float],
    gate: GateResult,
    value: float,
    result: NMResult,
    schedule: Schedule,
    notes: list[str],
) -> CalibrationResult:
    fidelity = 1.0 - gate_infidelity(gate)
    logger.info(
        "Tune-up finished",
        extra={
            "tuneup.finished.kind": kind,
            "tuneup.finished.infidelity": 1.0 - fidelity,
            "tuneup.finished.leakage": gate.leakage,
            "tuneup.finished.conditional_phase": gate.conditional_phase,
            "tuneup.finished.evaluations": result.evaluations,
        },
    )
    return CalibrationResult(
        kind=kind,
        parameters=parameters,
        gate=gate,
        fidelity=fidelity,
        objective=value,
        trace=result.trace,
        schedule=schedule,
        notes=notes,
    )


def diabatic_starting_point(
    phase_map: Map2D, leakage: Map2D, max_leakage: float = 1e-2
) -> tuple[float, float]:
    """(V_b, V_q) on the φ_c = π contour inside the low-leakage region.

    Picks the valid grid point with leakage below ``max_leakage`` whose
    φ_c is closest to π.

    Raises:
        CalibrationError: If no grid point has leakage below the threshold
    """
    distance = np.abs(np.abs(phase_map.values) - math.pi)
    usable = np.isfinite(distance) & (leakage.values < max_leakage)
    if not np.any(usable):
        logger.error(
            "No low-leakage point in diabatic scan",
            extra={
                "tuneup.calibration_failure.points": int(distance.size),
                "tuneup.calibration_failure.kind": "diabatic",
            },
        )
        raise CalibrationError(f"no scan point with leakage below {max_leakage}")
    masked = np.where(usable, distance, np.inf)
    row, col = np.unravel_index(int(np.argmin(masked)), masked.shape)
    return float(phase_map.x[col]), float(phase_map.y[row])


def tune_diabatic_cz(
    simulator: PulseSimulator,
    v_b_grid: Sequence[float],
    v_q_grid: Sequence[float],
    duration: float = 18e-9,
    rise: float = 2e-9,
    leakage_weight: float = 1.0,
    config: NMConfig | None = None,
    objective: Objective = "process",
    rb: RBConfig = _DEFAULT_RB_OBJECTIVE,
    threads: int = 1,
) -> CalibrationResult:
    """Calibrate the square-pulse CZ over (V_b, V_q, duration).

    The start point comes from a 2D conditional-phase scan and a leakage
    map at the nominal duration. The objective is infidelity plus
    ``leakage_weight`` times leakage.

    Raises:
        CalibrationError: If the scans have no low-leakage point
        OptimizerAbortedError: If the objective becomes non-finite
    """
    dt = simulator.dt
    duration = quantize_duration(duration, dt)
    phase_map = conditional_phase_scan(
        simulator, v_b_grid, v_q_grid, duration=duration, rise=rise, threads=threads
    )
    maps = leakage_map(simulator, v_b_grid, v_q_grid, duration, rise, threads)
    v_b0, v_q0 = diabatic_starting_point(phase_map, maps.direct)
    logger.info(
        "Diabatic tune-up started",
        extra={
            "tuneup.start.v_b": v_b0,
            "tuneup.start.duration": duration,
            "tuneup.start.kind": "diabatic",
        },
    )

    def schedule_for(x: RealArray) -> Schedule:
        d = quantize_duration(float(x[2]) * 1e-9, dt)
        return diabatic_cz_schedule(float(x[0]), float(x[1]), d, min(rise, d / 2.0))

    def cost(x: RealArray) -> float:
        try:
            gate, value = _evaluate(simulator, schedule_for(x), objective, rb)
        except _INFEASIBLE_ERRORS:
            return _INFEASIBLE
        return value + leakage_weight * gate.leakage

    config = config or NMConfig(scale=(0.005, 0.005, 1.0))
    result = nelder_mead(cost, [v_b0, v_q0, duration * 1e9], config)
    schedule = schedule_for(result.x)
    gate, value = _evaluate(simulator, schedule, objective, rb)
    parameters = {
        "v_b": float(result.x[0]),
        "v_q": float(result.x[1]),
        "duration": schedule.total_duration,
        "rise": min(rise, schedule.total_duration / 2.0),
    }
    return _finish(
        "diabatic",
        parameters,
        gate,
        value + leakage_weight * gate.leakage,
        result,
        schedule,
        [],
    )
