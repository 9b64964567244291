#!/usr/bin/env python3
"""
Virtual calibration experiments.

Each experiment reproduces a measurement done on the device and returns
plot-ready data:
- coupler spectroscopy from the single-excitation spectrum,
- iSWAP chevrons and the effective coupling extracted from them,
- Ramsey measurement of the conditional phase and its scans,
- leakage maps of the diabatic gate.

Grid points are independent and run on a thread pool; results are
assembled in grid order so the output does not depend on scheduling.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TypeVar

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar
from scipy.signal import get_window
from scipy.sparse.linalg import expm_multiply

from device_model import (
    COMPUTATIONAL_LABELS,
    Device,
    Element,
    basis_index,
    basis_labels,
    build_static_hamiltonian,
)
from errors import ConfigError, LowContrastError, SamplingError
from evolution import (
    ComplexMatrix,
    PulseSimulator,
    QuantumState,
    collapse_operators,
    liouvillian,
    measure,
    wrap_phase,
)
from logging_config import format_angular_frequency, getLogger
from pulses import Schedule, adiabatic_cz_schedule, diabatic_cz_schedule

logger = getLogger(__name__)

RealArray = NDArray[np.float64]
T = TypeVar("T")
R = TypeVar("R")

SINGLE_EXCITATION_LABELS = ("100", "010", "001")
BRANCH_LABEL_OVERLAP = 0.5
MIN_RAMSEY_CONTRAST = 0.1
CHEVRON_ZERO_PADDING = 8


def parallel_map(
    func: Callable[[T], R], items: Iterable[T], threads: int = 1
) -> list[R]:
    """Ordered map over independent work items.

    numpy releases the GIL inside LAPACK, so threads give real speed-up for
    the dense linear algebra done per item.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


@dataclass(frozen=True)
class Map2D:
    """Measured quantity over two swept axes.

    ``values[i, j]`` belongs to ``y[i]`` and ``x[j]``; ``valid`` marks
    entries that could be measured.
    """

    x_label: str
    x: RealArray
    y_label: str
    y: RealArray
    values: RealArray
    value_label: str
    valid: NDArray[np.bool_] | None = None

    def __post_init__(self) -> None:
        expected = (len(self.y), len(self.x))
        if np.shape(self.values) != expected:
            raise ValueError(f"values shape {np.shape(self.values)} != {expected}")
        if self.valid is not None and np.shape(self.valid) != expected:
            raise ValueError(f"valid mask shape {np.shape(self.valid)} != {expected}")

    def column(self, j: int) -> RealArray:
        return np.asarray(self.values[:, j])


@dataclass(frozen=True)
class AntiCrossing:
    """Minimum splitting between two adjacent dressed branches."""

    bias: float
    coupler_frequency: float
    gap: float
    branches: tuple[int, int]


@dataclass(frozen=True)
class SpectroscopyResult:
    """Dressed single-excitation branches versus coupler bias.

    ``frequencies[n, k]`` is branch k (ascending energy) at ``bias[n]``;
    ``labels[n][k]`` its bare-state label, or None when no bare state
    has overlap above one half.
    """

    bias: RealArray
    coupler_frequency: RealArray
    frequencies: RealArray
    labels: list[list[str | None]]
    anticrossings: list[AntiCrossing] = field(default_factory=list)


def _single_excitation_spectrum(
    device: Device, v: float, max_dim: int
) -> tuple[RealArray, ComplexMatrix]:
    params = device.params
    omega_c = float(device.frequency(Element.C, v))
    freqs = (device.idle[0], device.idle[1], omega_c)
    h = build_static_hamiltonian(params, freqs, max_dim)
    idx = [basis_index(params, label) for label in SINGLE_EXCITATION_LABELS]
    energies, vectors = np.linalg.eigh(h[np.ix_(idx, idx)])
    return energies, vectors


def _branch_gap(device: Device, v: float, k: int, max_dim: int) -> float:
    energies, _ = _single_excitation_spectrum(device, v, max_dim)
    return float(energies[k + 1] - energies[k])


def coupler_spectroscopy(
    device: Device, v_grid: Iterable[float], max_dim: int = 512
) -> SpectroscopyResult:
    """Dressed qubit and coupler frequencies versus coupler bias.

    Qubits stay at their idle frequencies. The single-excitation block is
    exact because the Hamiltonian conserves excitation number. Gaps are
    located as local minima of adjacent-branch splittings on the grid and
    refined by a bounded scalar minimisation between the neighbouring grid
    points.

    Raises:
        ConfigError: If the grid is empty
    """
    bias = np.asarray(list(v_grid), dtype=np.float64)
    if bias.size == 0:
        raise ConfigError("spectroscopy grid is empty")

    logger.info(
        "Coupler spectroscopy started",
        extra={"experiments.spectroscopy.points": int(bias.size)},
    )
    freqs = np.empty((bias.size, 3))
    labels: list[list[str | None]] = []
    for n, v in enumerate(bias):
        energies, vectors = _single_excitation_spectrum(device, float(v), max_dim)
        freqs[n] = energies
        row: list[str | None] = []
        for k in range(3):
            weights = np.abs(vectors[:, k]) ** 2
            best = int(np.argmax(weights))
            row.append(
                SINGLE_EXCITATION_LABELS[best]
                if weights[best] > BRANCH_LABEL_OVERLAP
                else None
            )
        labels.append(row)

    anticrossings = []
    for k in range(2):
        gaps = freqs[:, k + 1] - freqs[:, k]
        for n in range(1, bias.size - 1):
            if not (gaps[n] <= gaps[n - 1] and gaps[n] <= gaps[n + 1]):
                continue
            lo, hi = sorted((float(bias[n - 1]), float(bias[n + 1])))
            res = minimize_scalar(
                lambda v, k=k: _branch_gap(device, v, k, max_dim),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-10},
            )
            v_min = float(res.x) if res.fun <= gaps[n] else float(bias[n])
            gap = min(float(res.fun), float(gaps[n]))
            crossing = AntiCrossing(
                bias=v_min,
                coupler_frequency=float(device.frequency(Element.C, v_min)),
                gap=gap,
                branches=(k, k + 1),
            )
            anticrossings.append(crossing)
            logger.debug(
                "Anticrossing located",
                extra={
                    "experiments.anticrossing.bias": crossing.bias,
                    "experiments.anticrossing.gap": crossing.gap,
                },
            )

    return SpectroscopyResult(
        bias=bias,
        coupler_frequency=np.asarray(
            device.frequency(Element.C, bias), dtype=np.float64
        ),
        frequencies=freqs,
        labels=labels,
        anticrossings=anticrossings,
    )


def _excited_mask(device: Device, element: Element) -> NDArray[np.bool_]:
    slot = element.tensor_slot
    return np.array([label[slot] == 1 for label in basis_labels(device.params)])


def iswap_chevron(
    device: Device,
    v_b_grid: Iterable[float],
    tau_grid: Iterable[float],
    resonance_freq: float,
    include_decoherence: bool = False,
    threads: int = 1,
    max_dim: int = 512,
) -> Map2D:
    """P(Q1 excited) after exchanging |100⟩ with Q2 for time τ at bias V_b.

    Both qubits are parked at ``resonance_freq`` (rad/s). The Hamiltonian
    is constant for each V_b, so one diagonalisation serves the whole τ
    axis; with decoherence the Liouvillian exponential is applied to the
    initial state over the τ grid instead.
    """
    bias = np.asarray(list(v_b_grid), dtype=np.float64)
    tau = np.asarray(list(tau_grid), dtype=np.float64)
    if bias.size == 0 or tau.size == 0:
        raise ConfigError("chevron grids must be non-empty")
    if np.any(tau < 0.0):
        raise ConfigError("evolution times must be non-negative")

    params = device.params
    excited = _excited_mask(device, Element.Q1)
    start = basis_index(params, "100")
    ops = collapse_operators(params, max_dim) if include_decoherence else []

    def column(v: float) -> RealArray:
        omega_c = float(device.frequency(Element.C, v))
        freqs = (resonance_freq, resonance_freq, omega_c)
        h = build_static_hamiltonian(params, freqs, max_dim)
        if not ops:
            energies, vectors = np.linalg.eigh(h)
            coeffs = vectors.conj().T[:, start]
            phases = np.exp(-1j * np.outer(energies, tau))
            amplitudes = vectors @ (coeffs[:, np.newaxis] * phases)
            return np.sum(np.abs(amplitudes[excited]) ** 2, axis=0)
        dim = params.hilbert_dim
        rho0 = np.zeros((dim, dim), dtype=np.complex128)
        rho0[start, start] = 1.0
        gen = liouvillian(h, ops)
        vec0 = rho0.reshape(-1, order="F")
        vecs = np.stack([expm_multiply(gen * t, vec0) for t in tau])
        diag = np.real(vecs[:, :: dim + 1])
        return np.sum(diag[:, excited], axis=1)

    logger.info(
        "iSWAP chevron started",
        extra={
            "experiments.chevron.bias_points": int(bias.size),
            "experiments.chevron.time_points": int(tau.size),
            "experiments.chevron.resonance": format_angular_frequency(resonance_freq),
        },
    )
    columns = parallel_map(column, (float(v) for v in bias), threads)
    return Map2D(
        x_label="V_b (V)",
        x=bias,
        y_label="tau (s)",
        y=tau,
        values=np.stack(columns, axis=1),
        value_label="P(Q1 excited)",
    )


@dataclass(frozen=True)
class CouplingCurve:
    """|g̃| (rad/s) per bias; NaN where the oscillation is below resolution."""

    bias: RealArray
    coupling: RealArray
    resolution: float


def _peak_frequency(samples: RealArray, step: float) -> float | None:
    signal = samples - np.mean(samples)
    if np.max(np.abs(signal)) < 1e-9:
        return None
    n = len(signal)
    windowed = signal * get_window("hann", n, fftbins=False)
    n_fft = CHEVRON_ZERO_PADDING * n
    spectrum = np.abs(np.fft.rfft(windowed, n=n_fft))
    k = int(np.argmax(spectrum[1:])) + 1
    shift = 0.0
    if k < len(spectrum) - 1:
        a, b, c = spectrum[k - 1], spectrum[k], spectrum[k + 1]
        denom = a - 2.0 * b + c
        if denom != 0.0:
            shift = 0.5 * (a - c) / denom
    return (k + shift) / (n_fft * step)


def coupling_from_chevron(chevron: Map2D) -> CouplingCurve:
    """Effective coupling from the oscillation frequency of each chevron column.

    f_peak from a zero-padded, Hann-windowed DFT with quadratic peak
    interpolation; |g̃|/2π = f_peak/2. Frequencies below 1/τ_span are not
    resolved and reported as NaN.

    Raises:
        SamplingError: If the τ axis is not uniform
    """
    tau = chevron.y
    if len(tau) < 4:
        raise SamplingError("need at least four time points")
    steps = np.diff(tau)
    step = float(steps[0])
    if step <= 0.0 or np.max(np.abs(steps - step)) > 1e-9 * step:
        raise SamplingError("chevron time axis is not uniform")
    span = float(tau[-1] - tau[0])
    resolution = 1.0 / span

    coupling = np.full(len(chevron.x), np.nan)
    for j in range(len(chevron.x)):
        f_peak = _peak_frequency(chevron.column(j), step)
        if f_peak is None or f_peak < resolution:
            logger.debug(
                "Chevron column below resolution",
                extra={"experiments.chevron_fft.bias": float(chevron.x[j])},
            )
            continue
        coupling[j] = 2.0 * math.pi * f_peak / 2.0
    return CouplingCurve(
        bias=np.asarray(chevron.x), coupling=coupling, resolution=resolution
    )


@dataclass(frozen=True)
class CosineFit:
    """P(α) = offset + ½·contrast·cos(α + phase)."""

    phase: float
    contrast: float
    offset: float
    residual: float


def fit_cosine(alpha: RealArray, p: RealArray) -> CosineFit:
    """Linear least squares on (1, cos α, sin α).

    Raises:
        LowContrastError: If the fitted contrast is below 0.1
    """
    design = np.column_stack([np.ones_like(alpha), np.cos(alpha), np.sin(alpha)])
    coef, *_ = np.linalg.lstsq(design, p, rcond=None)
    a, b, c = (float(x) for x in coef)
    contrast = 2.0 * math.hypot(b, c)
    residual = float(np.linalg.norm(design @ coef - p))
    if contrast < MIN_RAMSEY_CONTRAST:
        logger.error(
            "Ramsey contrast too low",
            extra={
                "experiments.ramsey_fit.contrast": contrast,
                "experiments.ramsey_fit.residual": residual,
            },
        )
        raise LowContrastError(
            f"fringe contrast {contrast:.3f} below {MIN_RAMSEY_CONTRAST}"
        )
    return CosineFit(
        phase=wrap_phase(math.atan2(-c, b)),
        contrast=contrast,
        offset=a,
        residual=residual,
    )


def _qubit_gate(device: Device, target: Element, gate: ComplexMatrix) -> ComplexMatrix:
    """Embed a 2×2 gate on levels {0, 1} of one qubit; other levels untouched."""
    params = device.params
    slot = target.tensor_slot
    labels = basis_labels(params)
    index = {label: i for i, label in enumerate(labels)}
    full = np.eye(params.hilbert_dim, dtype=np.complex128)
    for label in labels:
        if label[slot] != 0:
            continue
        raised = list(label)
        raised[slot] = 1
        i0, i1 = index[label], index[tuple(raised)]
        full[np.ix_([i0, i1], [i0, i1])] = gate
    return full


def x_half(phase: float = 0.0) -> ComplexMatrix:
    """π/2 rotation about the axis (cos α, −sin α, 0)."""
    s = 1.0 / math.sqrt(2.0)
    return np.array(
        [[s, -1j * s * np.exp(1j * phase)], [-1j * s * np.exp(-1j * phase), s]],
        dtype=np.complex128,
    )


@dataclass(frozen=True)
class RamseyResult:
    alpha: RealArray
    p_excited: RealArray
    fit: CosineFit
    control_excited: bool
    target: Element


def _ramsey_trace(
    device: Device,
    gate: Callable[[ComplexMatrix], ComplexMatrix],
    alpha: RealArray,
    control_excited: bool,
    target: Element,
) -> tuple[RealArray, ComplexMatrix]:
    """P(target excited) per α from a gate acting on density matrices."""
    control = Element.Q1 if target is Element.Q2 else Element.Q2
    labels = ["0", "0", "0"]
    if control_excited:
        labels[control.tensor_slot] = "1"
    params = device.params
    rho = QuantumState.from_label("".join(labels), params.dims, "density").data
    first = _qubit_gate(device, target, x_half())
    rho = gate(first @ rho @ first.conj().T)
    excited = _excited_mask(device, target)
    p = np.empty(len(alpha))
    for n, a in enumerate(alpha):
        second = _qubit_gate(device, target, x_half(float(a)))
        populations = np.real(np.diagonal(second @ rho @ second.conj().T))
        p[n] = float(np.sum(populations[excited]))
    return p, rho


def _check_alpha_grid(alpha: RealArray) -> None:
    if alpha.size < 3:
        raise ConfigError("Ramsey phase grid needs at least three points")
    step = (alpha[-1] - alpha[0]) / (alpha.size - 1)
    if alpha[-1] - alpha[0] + step < 2.0 * math.pi - 1e-9:
        raise ConfigError("Ramsey phase grid must cover a full 2π period")


def ramsey_conditional_phase(
    simulator: PulseSimulator,
    cz_schedule: Schedule | None,
    alpha_grid: Iterable[float],
    control_excited: bool,
    shots: int | None = None,
    target: Element = Element.Q2,
    include_decoherence: bool = False,
    assignment_error: float = 0.0,
    rng_seed: int | None = None,
) -> RamseyResult:
    """Ramsey fringe of the target qubit with the control in |0⟩ or |1⟩.

    X/2 on the target, the gate, then X/2 with phase α. The fitted phase
    of P = ½(1 + C·cos(α + φ)) is the phase the gate imprints on the
    target's |1⟩; the difference between control states is φ_c. Single-
    qubit gates are ideal. ``shots`` None gives expectation values.

    Raises:
        ConfigError: If the α grid does not cover 2π
        LowContrastError: If the fringe contrast is below 0.1
    """
    alpha = np.asarray(list(alpha_grid), dtype=np.float64)
    _check_alpha_grid(alpha)
    device = simulator.device

    if cz_schedule is None:
        def gate(rho: ComplexMatrix) -> ComplexMatrix:
            return rho
    elif include_decoherence:
        def gate(rho: ComplexMatrix) -> ComplexMatrix:
            return simulator.evolve_batch(rho, cz_schedule, include_decoherence=True)
    else:
        u = simulator.unitary(cz_schedule)

        def gate(rho: ComplexMatrix) -> ComplexMatrix:
            return u @ rho @ u.conj().T

    p, rho = _ramsey_trace(device, gate, alpha, control_excited, target)
    if shots is not None:
        p = _sampled_probabilities(
            simulator, rho, alpha, target, shots, assignment_error, rng_seed
        )
    fit = fit_cosine(alpha, p)
    logger.debug(
        "Ramsey fringe fitted",
        extra={
            "experiments.ramsey_fit.phase": fit.phase,
            "experiments.ramsey_fit.contrast": fit.contrast,
        },
    )
    return RamseyResult(alpha, p, fit, control_excited, target)


def _sampled_probabilities(
    simulator: PulseSimulator,
    rho: ComplexMatrix,
    alpha: RealArray,
    target: Element,
    shots: int,
    assignment_error: float,
    rng_seed: int | None,
) -> RealArray:
    device = simulator.device
    slot = target.tensor_slot
    seeds = np.random.SeedSequence(rng_seed).spawn(len(alpha))
    p = np.empty(len(alpha))
    for n, a in enumerate(alpha):
        second = _qubit_gate(device, target, x_half(float(a)))
        final = second @ rho @ second.conj().T
        final = 0.5 * (final + final.conj().T)
        state = QuantumState("density", final, device.params.dims)
        counts = measure(
            state, shots, assignment_error, int(seeds[n].generate_state(1)[0])
        )
        p[n] = sum(c for label, c in counts.items() if label[slot] == "1") / shots
    return p


def conditional_phase(
    simulator: PulseSimulator,
    schedule: Schedule,
    alpha_grid: Iterable[float],
    target: Element = Element.Q2,
) -> float:
    """φ_c = φ_X − φ_Id from a pair of noise-free Ramsey measurements.

    Raises:
        LowContrastError: If either fringe has contrast below 0.1
    """
    alpha = np.asarray(list(alpha_grid), dtype=np.float64)
    _check_alpha_grid(alpha)
    u = simulator.unitary(schedule)

    def gate(rho: ComplexMatrix) -> ComplexMatrix:
        return u @ rho @ u.conj().T

    phases = []
    for control_excited in (True, False):
        p, _ = _ramsey_trace(simulator.device, gate, alpha, control_excited, target)
        phases.append(fit_cosine(alpha, p).phase)
    return wrap_phase(phases[0] - phases[1])


DEFAULT_ALPHA_GRID = tuple(np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False))


def conditional_phase_scan(
    simulator: PulseSimulator,
    v_b_grid: Iterable[float],
    v_q_grid: Iterable[float] | None = None,
    duration: float = 30e-9,
    rise: float = 0.0,
    alpha_grid: Iterable[float] = DEFAULT_ALPHA_GRID,
    threads: int = 1,
) -> Map2D:
    """φ_c over V_b (adiabatic half-cosine) or over (V_b, V_q) (diabatic square).

    Without ``v_q_grid`` the map has a single row at V_q = 0. Points where
    a fringe has too little contrast are NaN and marked invalid.

    Raises:
        ConfigError: If a grid is empty or a qubit lacks its |2⟩ level
    """
    if not simulator.params.supports_cz:
        raise ConfigError(
            f"conditional phase needs qubit dims >= 3, got {simulator.params.dims}"
        )
    bias = np.asarray(list(v_b_grid), dtype=np.float64)
    diabatic = v_q_grid is not None
    q_bias = np.asarray(list(v_q_grid) if diabatic else [0.0], dtype=np.float64)
    if bias.size == 0 or q_bias.size == 0:
        raise ConfigError("phase-scan grids must be non-empty")
    alpha = list(alpha_grid)

    def point(args: tuple[float, float]) -> float:
        v_b, v_q = args
        if diabatic:
            schedule = diabatic_cz_schedule(v_b, v_q, duration, rise)
        else:
            schedule = adiabatic_cz_schedule(v_b, duration)
        try:
            return conditional_phase(simulator, schedule, alpha)
        except LowContrastError:
            return math.nan

    logger.info(
        "Conditional-phase scan started",
        extra={
            "experiments.phase_scan.points": int(bias.size * q_bias.size),
            "experiments.phase_scan.duration": duration,
        },
    )
    grid = [(float(vb), float(vq)) for vq in q_bias for vb in bias]
    values = np.array(parallel_map(point, grid, threads)).reshape(
        q_bias.size, bias.size
    )
    return Map2D(
        x_label="V_b (V)",
        x=bias,
        y_label="V_q (V)",
        y=q_bias,
        values=values,
        value_label="phi_c (rad)",
        valid=np.isfinite(values),
    )


@dataclass(frozen=True)
class LeakageMaps:
    """Leakage of |101⟩ under the diabatic pulse.

    ``ground_population`` is the increase of the ground-state population of
    whichever qubit is lower in frequency at the plateau (marked per V_q in
    ``lower_is_q1``); ``direct`` is the population outside the computational
    subspace.
    """

    ground_population: Map2D
    direct: Map2D
    lower_is_q1: NDArray[np.bool_]


def leakage_map(
    simulator: PulseSimulator,
    v_b_grid: Iterable[float],
    v_q_grid: Iterable[float],
    tau: float,
    rise: float = 0.0,
    threads: int = 1,
) -> LeakageMaps:
    """Prepare |101⟩, apply the diabatic schedule and measure both estimators.

    Raises:
        ConfigError: If a grid is empty or a qubit lacks its |2⟩ level
    """
    device = simulator.device
    params = device.params
    if not params.supports_cz:
        raise ConfigError(f"leakage map needs qubit dims >= 3, got {params.dims}")
    bias = np.asarray(list(v_b_grid), dtype=np.float64)
    q_bias = np.asarray(list(v_q_grid), dtype=np.float64)
    if bias.size == 0 or q_bias.size == 0:
        raise ConfigError("leakage-map grids must be non-empty")

    start = basis_index(params, "101")
    computational = [basis_index(params, label) for label in COMPUTATIONAL_LABELS]
    ground_q1 = np.array([label[0] == 0 for label in basis_labels(params)])
    ground_q2 = np.array([label[2] == 0 for label in basis_labels(params)])
    omega_q2 = np.asarray(device.frequency(Element.Q2, q_bias), dtype=np.float64)
    lower_is_q1 = device.idle[0] <= omega_q2

    def point(args: tuple[int, float]) -> tuple[float, float]:
        row, v_b = args
        u = simulator.unitary(diabatic_cz_schedule(v_b, float(q_bias[row]), tau, rise))
        pops = np.abs(u[:, start]) ** 2
        ground = ground_q1 if lower_is_q1[row] else ground_q2
        return float(np.sum(pops[ground])), float(1.0 - np.sum(pops[computational]))

    logger.info(
        "Leakage map started",
        extra={
            "experiments.leakage_map.points": int(bias.size * q_bias.size),
            "experiments.leakage_map.duration": tau,
        },
    )
    grid = [(row, float(vb)) for row in range(q_bias.size) for vb in bias]
    results = np.array(parallel_map(point, grid, threads)).reshape(
        q_bias.size, bias.size, 2
    )
    common = {"x_label": "V_b (V)", "x": bias, "y_label": "V_q (V)", "y": q_bias}
    return LeakageMaps(
        ground_population=Map2D(
            values=results[..., 0],
            value_label="lower-qubit ground population",
            **common,
        ),
        direct=Map2D(
            values=np.clip(results[..., 1], 0.0, 1.0), value_label="leakage", **common
        ),
        lower_is_q1=np.asarray(lower_is_q1),
    )
