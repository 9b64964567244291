#!/usr/bin/env python3
"""
Physical model of two tunable transmons coupled through a tunable coupler.

The Hilbert space is the truncated product space ordered Q1 ⊗ C ⊗ Q2, and
basis states are labelled |Q1, C, Q2⟩ (so "101" has both qubits excited and
the coupler in its ground state). Parameter arrays on DeviceParams are
ordered (Q1, Q2, C). All frequencies are angular (rad/s), all times in
seconds.

The static Hamiltonian is

    H = Σ_i ω_i a_i†a_i + (α_i/2) a_i†a_i†a_i a_i
        + Σ_{i<j} g_ij (a_i†a_j + a_i a_j†)

with the quartic anharmonic term kept in normal-ordered form.
"""

from __future__ import annotations

import math
from enum import StrEnum
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq, linear_sum_assignment

from errors import (
    ConfigError,
    DegenerateLabelingError,
    InvalidDimensionError,
    ResourceLimitError,
    SingularityError,
    UnsupportedControlError,
)
from logging_config import format_angular_frequency, getLogger

logger = getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]
RealArray = NDArray[np.float64]

DEFAULT_MAX_HILBERT_DIM = 512

# Labels of the two-qubit computational states, coupler in its ground state.
COMPUTATIONAL_LABELS: tuple[str, ...] = ("000", "001", "100", "101")


class Element(StrEnum):
    """Circuit element. Value order matches the DeviceParams arrays."""

    Q1 = "Q1"
    Q2 = "Q2"
    C = "C"

    @property
    def param_index(self) -> int:
        return {"Q1": 0, "Q2": 1, "C": 2}[self.value]

    @property
    def tensor_slot(self) -> int:
        return {"Q1": 0, "C": 1, "Q2": 2}[self.value]


class DeviceParams(BaseModel):
    """Physical parameters of Q1, Q2 and the coupler C.

    Arrays are ordered (Q1, Q2, C). Infinite coherence times disable the
    corresponding dissipator.
    """

    model_config = ConfigDict(frozen=True)

    omega_max: tuple[float, float, float] = Field(
        ..., description="Maximum (sweet-spot) angular frequencies, rad/s"
    )
    alpha: tuple[float, float, float] = Field(
        ..., description="Anharmonicities, rad/s (negative)"
    )
    g_1c: float = Field(..., ge=0.0, description="Q1-coupler coupling, rad/s")
    g_2c: float = Field(..., ge=0.0, description="Q2-coupler coupling, rad/s")
    g_12: float = Field(..., description="Direct Q1-Q2 coupling, rad/s")
    t1: tuple[float, float, float] = Field(
        default=(math.inf, math.inf, math.inf), description="Relaxation times, s"
    )
    t_phi: tuple[float, float, float] = Field(
        default=(math.inf, math.inf, math.inf), description="Pure dephasing times, s"
    )
    dims: tuple[int, int, int] = Field(
        default=(3, 3, 3), description="Truncation levels for (Q1, Q2, C)"
    )

    @model_validator(mode="after")
    def check_ranges(self) -> DeviceParams:
        """Reject parameters outside the transmon model's validity."""
        if any(w <= 0.0 for w in self.omega_max):
            raise ValueError("omega_max must be positive for every element")
        if any(a >= 0.0 for a in self.alpha):
            raise ValueError("alpha must be negative for every element")
        if any(d < 2 for d in self.dims):
            raise InvalidDimensionError(f"dims must be >= 2, got {self.dims}")
        if any(t <= 0.0 for t in self.t1 + self.t_phi):
            raise ValueError("coherence times must be positive")
        return self

    @property
    def tensor_dims(self) -> tuple[int, int, int]:
        """Truncation levels in tensor order (Q1, C, Q2)."""
        return (self.dims[0], self.dims[2], self.dims[1])

    @property
    def hilbert_dim(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    @property
    def in_dispersive_regime(self) -> bool:
        """True for g_1c, g_2c > |g_12| > 0, the regime the device is built for."""
        return min(self.g_1c, self.g_2c) > abs(self.g_12) > 0.0

    @property
    def supports_cz(self) -> bool:
        """CZ dynamics need the |2⟩ level of both qubits."""
        return self.dims[0] >= 3 and self.dims[1] >= 3


class FluxMap(BaseModel):
    """Bias-voltage to frequency map of one element.

    ``v_offset`` shifts the bias so V = 0 can sit anywhere on the curve;
    with v_offset = 0, V = 0 is the sweet spot.
    """

    model_config = ConfigDict(frozen=True)

    v_period: float = Field(default=1.0, gt=0.0, description="Flux period, V")
    v_offset: float = Field(default=0.0, description="Bias offset, V")
    tunable: bool = Field(default=True)


class HamiltonianTerms(NamedTuple):
    """Frequency-independent pieces of the Hamiltonian on the full space."""

    static: ComplexMatrix
    number: dict[Element, ComplexMatrix]
    lowering: dict[Element, ComplexMatrix]


def annihilation_operator(dim: int) -> ComplexMatrix:
    """Truncated bosonic lowering operator with √n on the first superdiagonal.

    Raises:
        InvalidDimensionError: If dim < 2
    """
    if dim < 2:
        raise InvalidDimensionError(f"annihilation operator needs dim >= 2, got {dim}")
    return np.diag(np.sqrt(np.arange(1, dim, dtype=np.float64)), k=1).astype(
        np.complex128
    )


@lru_cache(maxsize=16)
def _mode_operators(tensor_dims: tuple[int, int, int]) -> tuple[ComplexMatrix, ...]:
    """Lowering operators of the three modes embedded in the full space."""
    ops = []
    for slot, dim in enumerate(tensor_dims):
        factors = [np.eye(d, dtype=np.complex128) for d in tensor_dims]
        factors[slot] = annihilation_operator(dim)
        ops.append(np.kron(np.kron(factors[0], factors[1]), factors[2]))
    return tuple(ops)


def _check_size(params: DeviceParams, max_dim: int) -> None:
    if params.hilbert_dim > max_dim:
        logger.error(
            "Hilbert space exceeds configured cap",
            extra={
                "device_model.resource_limit.hilbert_dim": params.hilbert_dim,
                "device_model.resource_limit.max_dim": max_dim,
            },
        )
        raise ResourceLimitError(
            f"Hilbert dimension {params.hilbert_dim} exceeds cap {max_dim}"
        )


@lru_cache(maxsize=32)
def hamiltonian_terms(
    params: DeviceParams, max_dim: int = DEFAULT_MAX_HILBERT_DIM
) -> HamiltonianTerms:
    """Split the Hamiltonian into a static part and per-element number operators.

    H(ω) = static + Σ_i ω_i · number[i]; the static part holds the
    anharmonicities and all couplings.

    Raises:
        ResourceLimitError: If the product dimension exceeds max_dim
    """
    _check_size(params, max_dim)
    a_q1, a_c, a_q2 = _mode_operators(params.tensor_dims)
    lowering = {Element.Q1: a_q1, Element.Q2: a_q2, Element.C: a_c}

    dim = params.hilbert_dim
    static = np.zeros((dim, dim), dtype=np.complex128)
    number: dict[Element, ComplexMatrix] = {}
    for element, a in lowering.items():
        ad = a.conj().T
        number[element] = ad @ a
        static += 0.5 * params.alpha[element.param_index] * (ad @ ad @ a @ a)

    for (i, j), g in (
        ((Element.Q1, Element.C), params.g_1c),
        ((Element.Q2, Element.C), params.g_2c),
        ((Element.Q1, Element.Q2), params.g_12),
    ):
        hop = lowering[i].conj().T @ lowering[j]
        static += g * (hop + hop.conj().T)

    return HamiltonianTerms(static=static, number=number, lowering=lowering)


def build_static_hamiltonian(
    params: DeviceParams,
    freqs: tuple[float, float, float],
    max_dim: int = DEFAULT_MAX_HILBERT_DIM,
) -> ComplexMatrix:
    """Hamiltonian at fixed element frequencies.

    Args:
        params: Device parameters
        freqs: Angular frequencies (ω1, ω2, ωc)
        max_dim: Cap on the product dimension

    Returns:
        Hermitian matrix of dimension dims[0]·dims[1]·dims[2] in Q1 ⊗ C ⊗ Q2 order

    Raises:
        ValueError: If a frequency is not positive
        ResourceLimitError: If the product dimension exceeds max_dim
    """
    if any(w <= 0.0 for w in freqs):
        raise ValueError(f"frequencies must be positive, got {freqs}")
    terms = hamiltonian_terms(params, max_dim)
    h = terms.static.copy()
    for element in Element:
        h += freqs[element.param_index] * terms.number[element]
    return h


def basis_index(params: DeviceParams, label: str | tuple[int, int, int]) -> int:
    """Index of |Q1, C, Q2⟩ in the full space."""
    n1, nc, n2 = (int(ch) for ch in label) if isinstance(label, str) else label
    d1, dc, d2 = params.tensor_dims
    if not (0 <= n1 < d1 and 0 <= nc < dc and 0 <= n2 < d2):
        raise InvalidDimensionError(f"label {label} outside truncation {params.dims}")
    return (n1 * dc + nc) * d2 + n2


def basis_labels(params: DeviceParams) -> list[tuple[int, int, int]]:
    """All (n1, nc, n2) labels in basis order."""
    d1, dc, d2 = params.tensor_dims
    return [(n1, nc, n2) for n1 in range(d1) for nc in range(dc) for n2 in range(d2)]


def excitation_numbers(params: DeviceParams) -> NDArray[np.int64]:
    """Total excitation number of every basis state."""
    return np.array([sum(label) for label in basis_labels(params)], dtype=np.int64)


class DressedBasis(NamedTuple):
    """Eigenbasis of H with one-to-one bare labels.

    ``vectors[:, k]`` is the eigenvector labelled by bare basis state k,
    phase-fixed so ⟨k|v_k⟩ is real and positive; ``energies[k]`` its energy.
    """

    energies: RealArray
    vectors: ComplexMatrix
    overlaps: RealArray


def dressed_basis(
    params: DeviceParams,
    freqs: tuple[float, float, float],
    max_dim: int = DEFAULT_MAX_HILBERT_DIM,
    required: tuple[str, ...] = COMPUTATIONAL_LABELS,
) -> DressedBasis:
    """Diagonalise H and assign each eigenvector to a bare state.

    Labels are assigned one-to-one by maximising the total squared overlap.

    Raises:
        DegenerateLabelingError: If a state in ``required`` has overlap < 0.5
            with its eigenvector
    """
    h = build_static_hamiltonian(params, freqs, max_dim)
    energies, vectors = np.linalg.eigh(h)
    weights = np.abs(vectors) ** 2  # weights[bare, eigen]
    bare_idx, eigen_idx = linear_sum_assignment(-weights)
    order = np.empty_like(eigen_idx)
    order[bare_idx] = eigen_idx

    labelled = vectors[:, order]
    diag = np.diagonal(labelled)
    phases = np.where(np.abs(diag) > 0.0, diag / np.abs(diag), 1.0)
    labelled = labelled / phases[np.newaxis, :]
    overlaps = np.abs(diag) ** 2

    for label in required:
        k = basis_index(params, label)
        if overlaps[k] < 0.5:
            logger.error(
                "Ambiguous dressed-state labelling",
                extra={
                    "device_model.degenerate_labeling.label": label,
                    "device_model.degenerate_labeling.overlap": float(overlaps[k]),
                },
            )
            raise DegenerateLabelingError(
                f"state |{label}⟩ has overlap {overlaps[k]:.3f} < 0.5 "
                f"with its eigenvector"
            )
    return DressedBasis(
        energies=energies[order],
        vectors=labelled.astype(np.complex128),
        overlaps=overlaps,
    )


def effective_coupling(
    params: DeviceParams, omega_1: float, omega_2: float, omega_c: float
) -> float:
    """Coupler-mediated plus direct qubit-qubit coupling.

    g̃ = (g_1c g_2c / 2)(1/Δ_1c + 1/Δ_2c) + g_12 with Δ_ic = ω_i − ω_c.

    Raises:
        SingularityError: If the coupler is resonant with a qubit
    """
    delta_1c = omega_1 - omega_c
    delta_2c = omega_2 - omega_c
    scale = max(abs(omega_1), abs(omega_2), abs(omega_c))
    if min(abs(delta_1c), abs(delta_2c)) <= 1e-12 * scale:
        logger.error(
            "Coupler resonant with a qubit in effective coupling",
            extra={
                "device_model.singularity.omega_c": omega_c,
                "device_model.singularity.delta_1c": delta_1c,
                "device_model.singularity.delta_2c": delta_2c,
            },
        )
        raise SingularityError(
            f"coupler at {format_angular_frequency(omega_c)} is resonant with a qubit"
        )
    return 0.5 * params.g_1c * params.g_2c * (1.0 / delta_1c + 1.0 / delta_2c) + (
        params.g_12
    )


def flux_to_frequency(
    flux_map: FluxMap,
    params: DeviceParams,
    element: Element,
    v: float | RealArray,
) -> float | RealArray:
    """Symmetric-transmon tuning curve.

    ω(V) = (ω_max − α)·√|cos(π(V + v_offset)/v_period)| + α

    Raises:
        UnsupportedControlError: If the element is not flux tunable
    """
    if not flux_map.tunable:
        raise UnsupportedControlError(f"element {element} has no flux control")
    omega_max = params.omega_max[element.param_index]
    alpha = params.alpha[element.param_index]
    phase = np.pi * (np.asarray(v, dtype=np.float64) + flux_map.v_offset) / (
        flux_map.v_period
    )
    omega = (omega_max - alpha) * np.sqrt(np.abs(np.cos(phase))) + alpha
    if np.ndim(omega) == 0:
        return float(omega)
    return omega


def frequency_to_flux(
    flux_map: FluxMap, params: DeviceParams, element: Element, omega: float
) -> float:
    """Inverse of flux_to_frequency on the branch V + v_offset ∈ [0, v_period/2).

    Raises:
        UnsupportedControlError: If the element is not flux tunable
        ConfigError: If omega is not reachable on the branch
    """
    if not flux_map.tunable:
        raise UnsupportedControlError(f"element {element} has no flux control")
    omega_max = params.omega_max[element.param_index]
    alpha = params.alpha[element.param_index]
    if math.isclose(omega, omega_max, rel_tol=1e-15, abs_tol=0.0):
        return -flux_map.v_offset
    # stay clear of the cos = 0 cusp
    u_hi = 0.5 - 1e-9
    omega_lo = (omega_max - alpha) * math.sqrt(abs(math.cos(math.pi * u_hi))) + alpha
    if not omega_lo < omega <= omega_max:
        raise ConfigError(
            f"{format_angular_frequency(omega)} is outside the tuning range "
            f"of {element}"
        )

    def residual(u: float) -> float:
        envelope = math.sqrt(abs(math.cos(math.pi * u)))
        return (omega_max - alpha) * envelope + alpha - omega

    u = brentq(residual, 0.0, u_hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    return float(u) * flux_map.v_period - flux_map.v_offset


def compute_zz(
    params: DeviceParams,
    freqs: tuple[float, float, float],
    max_dim: int = DEFAULT_MAX_HILBERT_DIM,
) -> float:
    """Static ZZ rate ζ = E(101) + E(000) − E(100) − E(001).

    Raises:
        InvalidDimensionError: If any truncation is below 3
        DegenerateLabelingError: If a computational state cannot be identified
    """
    if min(params.dims) < 3:
        raise InvalidDimensionError(f"ZZ needs dims >= 3, got {params.dims}")
    basis = dressed_basis(params, freqs, max_dim)
    e = {
        label: basis.energies[basis_index(params, label)]
        for label in COMPUTATIONAL_LABELS
    }
    return float(e["101"] + e["000"] - e["100"] - e["001"])


def zz_scan(
    params: DeviceParams,
    omega_1: float,
    omega_2: float,
    coupler_freqs: RealArray,
    max_dim: int = DEFAULT_MAX_HILBERT_DIM,
) -> RealArray:
    """ZZ rate at each coupler frequency with the qubits held fixed."""
    return np.array(
        [
            compute_zz(params, (omega_1, omega_2, float(wc)), max_dim)
            for wc in coupler_freqs
        ]
    )


class Device(BaseModel):
    """Device parameters together with flux control and the idle point.

    Flux maps carry the idle bias in ``v_offset``, so a pulse amplitude of
    0 V leaves every element at its idle frequency.
    """

    model_config = ConfigDict(frozen=True)

    params: DeviceParams
    flux_maps: tuple[FluxMap, FluxMap, FluxMap]
    idle: tuple[float, float, float] = Field(
        ..., description="Idle angular frequencies (ω1, ω2, ωc)"
    )

    @classmethod
    def at_idle(
        cls,
        params: DeviceParams,
        idle: tuple[float, float, float],
        v_period: tuple[float, float, float] = (1.0, 1.0, 1.0),
        tunable: tuple[bool, bool, bool] = (True, True, True),
    ) -> Device:
        """Build flux maps whose zero bias reproduces the idle frequencies."""
        if not params.in_dispersive_regime:
            logger.warning(
                "Couplings outside g_1c, g_2c > |g_12| > 0",
                extra={
                    "device_model.coupling_regime.g_1c": params.g_1c,
                    "device_model.coupling_regime.g_2c": params.g_2c,
                    "device_model.coupling_regime.g_12": params.g_12,
                },
            )
        maps = []
        for element in Element:
            k = element.param_index
            base = FluxMap(v_period=v_period[k], v_offset=0.0, tunable=tunable[k])
            if tunable[k]:
                # positive bias detunes below idle
                offset = frequency_to_flux(base, params, element, idle[k])
            else:
                offset = 0.0
            maps.append(
                FluxMap(v_period=v_period[k], v_offset=offset, tunable=tunable[k])
            )
        logger.debug(
            "Flux maps placed at idle point",
            extra={
                "device_model.idle_bias.offsets": ", ".join(
                    f"{m.v_offset:.6f}" for m in maps
                )
            },
        )
        return cls(params=params, flux_maps=(maps[0], maps[1], maps[2]), idle=idle)

    def flux_map(self, element: Element) -> FluxMap:
        return self.flux_maps[element.param_index]

    def frequency(self, element: Element, v: float | RealArray) -> float | RealArray:
        """Frequency of ``element`` at pulse bias ``v`` (relative to idle)."""
        fmap = self.flux_map(element)
        if not fmap.tunable:
            idle = self.idle[element.param_index]
            return idle if np.ndim(v) == 0 else np.full(np.shape(v), idle)
        return flux_to_frequency(fmap, self.params, element, v)

    def bias_for(self, element: Element, omega: float) -> float:
        """Pulse bias that moves ``element`` to ``omega``."""
        return frequency_to_flux(self.flux_map(element), self.params, element, omega)
