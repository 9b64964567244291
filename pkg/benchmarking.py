#!/usr/bin/env python3
"""
Randomized benchmarking, interleaved RB and purity benchmarking.

Sequence fidelity is the |00⟩ population after the recovery Clifford;
sequence purity is Tr(ρ²) of the two-qubit state before it. Decays are
fitted to F = A·p^m + B and P = A′·u^(m−1) + B′, and turned into error
rates r = 3/4(1 − p), r_CZ = 3/4(1 − p_int/p_ref) and
r_incoherent = 3/4(1 − √u).

Each (m, sample) work item draws its own generator from the master seed,
so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.optimize import curve_fit

from backends import Backend
from clifford_group import (
    CZ_UNITARY,
    CliffordCircuit,
    NativeGate,
    clifford_group,
    phase_insensitive_overlap,
)
from errors import (
    BackendError,
    FitError,
    InvalidInterleaveError,
    SimulatorError,
    UnsupportedControlError,
)
from experiments import parallel_map
from logging_config import getLogger

logger = getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]
RealArray = NDArray[np.float64]

FIDELITY_ASYMPTOTE = 0.25
PURITY_ASYMPTOTE = 0.25

Interleave = Literal["none", "cz", "identity"]


def interleaved_gate(name: Interleave) -> CliffordCircuit | None:
    """Physical gate interleaved after every random Clifford."""
    if name == "none":
        return None
    unitary = CZ_UNITARY if name == "cz" else np.eye(4, dtype=np.complex128)
    index = clifford_group().index_of(unitary)
    if index is None:
        raise InvalidInterleaveError(f"{name} is missing from the Clifford group")
    gates = (NativeGate("CZ"),) if name == "cz" else ()
    return CliffordCircuit(index, gates, unitary)


def as_interleave(gate: CliffordCircuit | ComplexMatrix) -> CliffordCircuit:
    """Validate an interleaved gate given as a circuit or a 4×4 unitary.

    Raises:
        InvalidInterleaveError: If the unitary is not a two-qubit Clifford
    """
    group = clifford_group()
    unitary = gate.unitary if isinstance(gate, CliffordCircuit) else np.asarray(gate)
    index = group.index_of(unitary) if unitary.shape == (4, 4) else None
    if index is None:
        logger.error(
            "Interleaved gate is not a Clifford",
            extra={"benchmarking.invalid_interleave.shape": str(unitary.shape)},
        )
        raise InvalidInterleaveError("interleaved gate is not a two-qubit Clifford")
    if isinstance(gate, CliffordCircuit):
        return gate
    return group[index]


@dataclass(frozen=True)
class RBSequence:
    """Random Cliffords (interleaved gates included) and the recovery element."""

    cliffords: tuple[CliffordCircuit, ...]
    recovery: CliffordCircuit

    def ideal_unitary(self) -> ComplexMatrix:
        u = np.eye(4, dtype=np.complex128)
        for element in (*self.cliffords, self.recovery):
            u = element.unitary @ u
        return u


def rb_sequence(
    m: int,
    interleave: CliffordCircuit | ComplexMatrix | None = None,
    rng_seed: int | list[int] | None = None,
) -> RBSequence:
    """m uniformly random Cliffords, optionally interleaved, plus recovery.

    Raises:
        ValueError: If m < 1
        InvalidInterleaveError: If the interleaved gate is not a Clifford
    """
    if m < 1:
        raise ValueError(f"sequence length must be >= 1, got {m}")
    group = clifford_group()
    gate = as_interleave(interleave) if interleave is not None else None
    rng = np.random.default_rng(rng_seed)

    elements: list[CliffordCircuit] = []
    total = np.eye(4, dtype=np.complex128)
    for index in rng.integers(0, len(group), size=m):
        element = group[int(index)]
        elements.append(element)
        total = element.unitary @ total
        if gate is not None:
            elements.append(gate)
            total = gate.unitary @ total
    return RBSequence(tuple(elements), group.inverse(total))


class RBConfig(BaseModel):
    """Sequence lengths, averaging and seeding of an RB or PB run."""

    model_config = ConfigDict(frozen=True)

    lengths: tuple[int, ...] = Field(..., min_length=1)
    samples: int = Field(default=100, ge=1)
    interleave: Interleave = "none"
    seed: int = Field(default=0, ge=0)
    threads: int = Field(default=1, ge=1)

    @field_validator("lengths")
    @classmethod
    def check_lengths(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if any(m < 1 for m in value):
            raise ValueError("sequence lengths must be >= 1")
        return value


@dataclass(frozen=True)
class BenchmarkTable:
    """Per-length mean and standard deviation over samples."""

    lengths: RealArray
    mean: RealArray
    std: RealArray
    samples: int
    quantity: str

    def rows(self) -> list[tuple[int, float, float]]:
        return [
            (int(m), float(mu), float(s))
            for m, mu, s in zip(self.lengths, self.mean, self.std)
        ]


def _run_sequences(
    config: RBConfig, backend: Backend, purity: bool
) -> BenchmarkTable:
    gate = interleaved_gate(config.interleave)
    items = [(m, k) for m in config.lengths for k in range(config.samples)]

    def run(item: tuple[int, int]) -> float:
        m, k = item
        seed = [config.seed, m, k]
        try:
            sequence = rb_sequence(m, gate, seed)
            state = backend.initial_state()
            for element in sequence.cliffords:
                state = backend.apply(state, element)
            if purity:
                return backend.purity(state)
            state = backend.apply(state, sequence.recovery)
            return backend.ground_population(state)
        except (SimulatorError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            logger.error(
                "Backend failed on sequence",
                extra={
                    "benchmarking.backend_failure.length": m,
                    "benchmarking.backend_failure.sample": k,
                    "benchmarking.backend_failure.seed": config.seed,
                    "benchmarking.backend_failure.error": str(exc),
                },
            )
            raise BackendError(
                f"backend failed on sequence m={m}, sample={k}, "
                f"seed={config.seed}: {exc}"
            ) from exc

    quantity = "purity" if purity else "fidelity"
    logger.info(
        "Benchmark run started",
        extra={
            "benchmarking.run.quantity": quantity,
            "benchmarking.run.sequences": len(items),
            "benchmarking.run.interleave": config.interleave,
        },
    )
    values = np.array(parallel_map(run, items, config.threads)).reshape(
        len(config.lengths), config.samples
    )
    if config.samples > 1:
        std = values.std(axis=1, ddof=1)
    else:
        std = np.zeros(len(config.lengths))
    table = BenchmarkTable(
        lengths=np.asarray(config.lengths, dtype=np.float64),
        mean=values.mean(axis=1),
        std=std,
        samples=config.samples,
        quantity=quantity,
    )
    logger.info(
        "Benchmark run finished",
        extra={
            "benchmarking.run.quantity": quantity,
            "benchmarking.run.sequences": len(items),
            "benchmarking.run.interleave": config.interleave,
        },
    )
    return table


def run_rb(config: RBConfig, backend: Backend) -> BenchmarkTable:
    """Mean |00⟩ population after recovery, per sequence length.

    Raises:
        BackendError: If the backend fails on a sequence
    """
    return _run_sequences(config, backend, purity=False)


def run_pb(config: RBConfig, backend: Backend) -> BenchmarkTable:
    """Mean sequence purity Tr(ρ²) before recovery, per sequence length.

    Raises:
        UnsupportedControlError: If the backend tracks state vectors only
        BackendError: If the backend fails on a sequence
    """
    if not backend.supports_density:
        logger.error(
            "Purity benchmarking needs a density-matrix backend",
            extra={"benchmarking.unsupported_backend.backend": type(backend).__name__},
        )
        raise UnsupportedControlError("purity benchmarking needs density matrices")
    return _run_sequences(config, backend, purity=True)


@dataclass(frozen=True)
class DecayFit:
    """Fitted A·x^m + B (fidelity) or A·x^(m−1) + B (purity).

    ``decay`` holds p for fidelity fits and u for purity fits.
    """

    amplitude: float
    decay: float
    offset: float
    model: Literal["fidelity", "purity"] = "fidelity"
    covariance: RealArray = field(default_factory=lambda: np.zeros((3, 3)))
    residual_norm: float = 0.0

    @property
    def decay_stderr(self) -> float:
        return float(math.sqrt(max(self.covariance[1, 1], 0.0)))

    def evaluate(self, m: RealArray) -> RealArray:
        shift = 1.0 if self.model == "purity" else 0.0
        exponent = np.asarray(m, dtype=np.float64) - shift
        return self.amplitude * self.decay**exponent + self.offset


def _model(kind: str) -> Callable[..., RealArray]:
    shift = 1.0 if kind == "purity" else 0.0

    def decay(m: RealArray, a: float, x: float, b: float) -> RealArray:
        return a * np.power(x, m - shift) + b

    return decay


def fit_decay(
    table: BenchmarkTable, model: Literal["fidelity", "purity"] = "fidelity"
) -> DecayFit:
    """Bounded nonlinear least squares with 0 < p ≤ 1.

    The initial guess comes from a log-linear fit of (y − 1/4) against m,
    1/4 being the two-qubit asymptote of both quantities.

    Data that stay at 1 for every length carry no decay and give p = 1
    (a noiseless fidelity or a purely unitary purity curve).

    Raises:
        FitError: If fewer than 3 distinct lengths are given, the data are
            flat below 1, or the fit does not converge
    """
    m = np.asarray(table.lengths, dtype=np.float64)
    y = np.asarray(table.mean, dtype=np.float64)
    diagnostics: dict[str, object] = {
        "lengths": m.tolist(),
        "values": y.tolist(),
        "model": model,
    }
    if len(np.unique(m)) < 3:
        raise FitError("need at least 3 distinct sequence lengths", diagnostics)
    asymptote = PURITY_ASYMPTOTE if model == "purity" else FIDELITY_ASYMPTOTE
    if np.ptp(y) < 1e-9:
        if abs(float(y[0]) - 1.0) < 1e-9:
            return DecayFit(
                amplitude=1.0 - asymptote, decay=1.0, offset=asymptote, model=model
            )
        logger.error(
            "Decay not identifiable from flat data",
            extra={"benchmarking.fit_failure.model": model},
        )
        raise FitError("data are flat; decay is not identifiable", diagnostics)

    shift = 1.0 if model == "purity" else 0.0
    above = y - asymptote
    usable = above > 1e-12
    if np.count_nonzero(usable) >= 2:
        slope, intercept = np.polyfit(m[usable] - shift, np.log(above[usable]), 1)
        p0 = float(np.clip(np.exp(slope), 1e-6, 1.0))
        a0 = float(np.exp(intercept))
    else:
        p0, a0 = 0.99, float(y[0] - asymptote)

    try:
        popt, pcov = curve_fit(
            _model(model),
            m,
            y,
            p0=[a0, p0, asymptote],
            bounds=([-2.0, 1e-9, -1.0], [2.0, 1.0, 2.0]),
            maxfev=20000,
            ftol=1e-14,
            xtol=1e-14,
            gtol=1e-14,
        )
    except (RuntimeError, ValueError) as exc:
        diagnostics["error"] = str(exc)
        logger.error(
            "Decay fit did not converge",
            extra={"benchmarking.fit_failure.model": model},
        )
        raise FitError(f"decay fit did not converge: {exc}", diagnostics) from exc

    if not np.all(np.isfinite(pcov)):
        logger.error(
            "Decay fit covariance undefined",
            extra={"benchmarking.fit_failure.model": model},
        )
        diagnostics["parameters"] = popt.tolist()
        raise FitError("fit covariance is undefined", diagnostics)

    residual = float(np.linalg.norm(_model(model)(m, *popt) - y))
    return DecayFit(
        amplitude=float(popt[0]),
        decay=float(popt[1]),
        offset=float(popt[2]),
        model=model,
        covariance=np.asarray(pcov),
        residual_norm=residual,
    )


@dataclass(frozen=True)
class Rate:
    value: float
    stderr: float


@dataclass(frozen=True)
class ErrorReport:
    """Error rates derived from the fitted decays; missing fits give None."""

    r_ref: Rate
    r_int: Rate | None = None
    r_cz: Rate | None = None
    fidelity_cz: Rate | None = None
    r_incoherent_ref: Rate | None = None
    r_incoherent_int: Rate | None = None
    incoherent_fraction_ref: float | None = None
    incoherent_fraction_int: float | None = None


def error_per_clifford(fit: DecayFit) -> Rate:
    return Rate(0.75 * (1.0 - fit.decay), 0.75 * fit.decay_stderr)


def incoherent_error(fit: DecayFit) -> Rate:
    """3/4(1 − √u) from a purity fit."""
    root = math.sqrt(fit.decay)
    stderr = 0.75 * fit.decay_stderr / (2.0 * root) if root > 0.0 else math.inf
    return Rate(0.75 * (1.0 - root), stderr)


def _fraction(incoherent: Rate | None, total: Rate | None) -> float | None:
    if incoherent is None or total is None:
        return None
    return incoherent.value / total.value if total.value != 0.0 else math.nan


def error_rates(
    reference: DecayFit,
    interleaved: DecayFit | None = None,
    purity_reference: DecayFit | None = None,
    purity_interleaved: DecayFit | None = None,
) -> ErrorReport:
    """Error rates from reference, interleaved and purity fits.

    Raises:
        ZeroDivisionError: If p_ref is 0 and an interleaved fit is given
    """
    r_ref = error_per_clifford(reference)
    r_int = r_cz = fidelity_cz = None
    if interleaved is not None:
        r_int = error_per_clifford(interleaved)
        p_ref, p_int = reference.decay, interleaved.decay
        if p_ref == 0.0:
            logger.error(
                "Reference decay is zero",
                extra={"benchmarking.error_rates.p_int": p_int},
            )
            raise ZeroDivisionError("p_ref is zero; interleaved error undefined")
        value = 0.75 * (1.0 - p_int / p_ref)
        stderr = 0.75 * math.hypot(
            interleaved.decay_stderr / p_ref, p_int * reference.decay_stderr / p_ref**2
        )
        r_cz = Rate(value, stderr)
        fidelity_cz = Rate(1.0 - value, stderr)

    r_inc_ref = (
        incoherent_error(purity_reference) if purity_reference is not None else None
    )
    r_inc_int = (
        incoherent_error(purity_interleaved) if purity_interleaved is not None else None
    )
    return ErrorReport(
        r_ref=r_ref,
        r_int=r_int,
        r_cz=r_cz,
        fidelity_cz=fidelity_cz,
        r_incoherent_ref=r_inc_ref,
        r_incoherent_int=r_inc_int,
        incoherent_fraction_ref=_fraction(r_inc_ref, r_ref),
        incoherent_fraction_int=_fraction(r_inc_int, r_int),
    )


def ideal_product_is_identity(sequence: RBSequence, tol: float = 1e-8) -> bool:
    """True when the ideal composition equals I up to global phase."""
    return phase_insensitive_overlap(np.eye(4), sequence.ideal_unitary()) > 1.0 - tol
