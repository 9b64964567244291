#!/usr/bin/env python3
"""
Time evolution of the qubit-coupler-qubit system under sampled controls.

Controls are piecewise constant on the sampling grid. The unitary path
multiplies exact per-step exponentials; the density-matrix path integrates
the Lindblad equation with a fixed-step 4th-order Runge-Kutta scheme in the
interaction picture of each step's Hamiltonian, so that with zero rates it
reduces to the unitary path exactly.

Two frames are supported:
- "lab": the Hamiltonian as written,
- "rotating": ω_ref·N subtracted, N the total excitation number. H conserves
  N, so this frame is exact and only shifts phases per excitation.

Gate quantities are computed in the idle frame: the eigenbasis of the idle
Hamiltonian (labelled by bare states), with the single-excitation dressed
energies removed linearly. Residual ZZ at idle therefore shows up in the
conditional phase, while single-qubit dynamical phases are left for the
virtual-Z compensation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from device_model import (
    COMPUTATIONAL_LABELS,
    DEFAULT_MAX_HILBERT_DIM,
    Device,
    DeviceParams,
    DressedBasis,
    Element,
    basis_index,
    basis_labels,
    dressed_basis,
    excitation_numbers,
    hamiltonian_terms,
)
from errors import ConfigError, IntegrationError, SamplingError, StateError
from logging_config import getLogger
from pulses import (
    DEFAULT_DT_LAB,
    DEFAULT_DT_ROTATING,
    Channel,
    SampledControl,
    Schedule,
    StepResponseFilter,
    distortion_model,
    sample_schedule,
)

logger = getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]
RealArray = NDArray[np.float64]
Frame = Literal["lab", "rotating"]

STATE_TOLERANCE = 1e-9
TRACE_DRIFT_LIMIT = 1e-6

CZ_IDEAL = np.diag([1.0, 1.0, 1.0, -1.0]).astype(np.complex128)


def wrap_phase(phase: float) -> float:
    """Map a phase onto (−π, π]."""
    return float(math.pi - (math.pi - phase) % (2.0 * math.pi))


@dataclass(frozen=True)
class QuantumState:
    """State vector or density matrix over the truncated product space.

    ``dims`` follows the DeviceParams order (Q1, Q2, C); the data is laid
    out in tensor order Q1 ⊗ C ⊗ Q2.
    """

    representation: Literal["vector", "density"]
    data: ComplexMatrix
    dims: tuple[int, int, int]

    def __post_init__(self) -> None:
        size = self.dims[0] * self.dims[1] * self.dims[2]
        data = np.asarray(self.data)
        if self.representation == "vector":
            if data.shape != (size,):
                raise StateError(f"vector shape {data.shape} != ({size},)")
            norm = float(np.linalg.norm(data))
            if abs(norm - 1.0) > STATE_TOLERANCE:
                raise StateError(f"state vector norm {norm} != 1")
            return
        if data.shape != (size, size):
            raise StateError(f"density shape {data.shape} != ({size}, {size})")
        if np.max(np.abs(data - data.conj().T)) > STATE_TOLERANCE:
            raise StateError("density matrix is not Hermitian")
        trace = float(np.real(np.trace(data)))
        if abs(trace - 1.0) > STATE_TOLERANCE:
            raise StateError(f"density matrix trace {trace} != 1")
        if float(np.min(np.linalg.eigvalsh(data))) < -STATE_TOLERANCE:
            raise StateError("density matrix has negative eigenvalues")

    @classmethod
    def from_label(
        cls,
        label: str,
        dims: tuple[int, int, int],
        representation: Literal["vector", "density"] = "vector",
    ) -> QuantumState:
        """Basis state |Q1, C, Q2⟩, e.g. "101"."""
        n1, nc, n2 = (int(ch) for ch in label)
        d1, d2, dc = dims
        size = d1 * d2 * dc
        if not (n1 < d1 and nc < dc and n2 < d2):
            raise StateError(f"label {label} outside truncation {dims}")
        vec = np.zeros(size, dtype=np.complex128)
        vec[(n1 * dc + nc) * d2 + n2] = 1.0
        state = cls("vector", vec, dims)
        return state if representation == "vector" else state.as_density()

    def as_density(self) -> QuantumState:
        if self.representation == "density":
            return self
        return QuantumState("density", np.outer(self.data, self.data.conj()), self.dims)

    def populations(self) -> RealArray:
        if self.representation == "vector":
            return np.abs(self.data) ** 2
        return np.clip(np.real(np.diagonal(self.data)), 0.0, None)

    def qubit_populations(self) -> RealArray:
        """P[n1, n2] with the coupler traced out."""
        d1, d2, dc = self.dims
        return self.populations().reshape(d1, dc, d2).sum(axis=1)

    def reduced_computational(self) -> ComplexMatrix:
        """Coupler-traced density matrix restricted to qubit levels {0, 1}.

        Basis order |Q1 Q2⟩ = 00, 01, 10, 11. The trace falls below one
        when population has leaked.
        """
        d1, d2, dc = self.dims
        rho = self.as_density().data.reshape(d1, dc, d2, d1, dc, d2)
        reduced = np.einsum("acbdce->abde", rho)[:2, :2, :2, :2]
        return reduced.reshape(4, 4)

    def to_text(self) -> str:
        """Complex-matrix dump for debugging (real and imaginary parts)."""
        data = np.atleast_2d(self.data)
        lines = [f"# {self.representation} dims={self.dims}"]
        for row in data:
            lines.append(" ".join(f"{z.real:+.12e}{z.imag:+.12e}j" for z in row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GateResult:
    """Computational block of a gate and the phases read off its diagonal.

    Block order |000⟩, |001⟩, |100⟩, |101⟩. ``leakage`` is the worst case
    over computational inputs, ``average_leakage`` the mean.
    """

    block: ComplexMatrix
    leakage: float
    average_leakage: float
    conditional_phase: float
    phase_q1: float
    phase_q2: float


def controls_from_arrays(
    times: RealArray,
    flux: dict[Channel, RealArray] | None = None,
) -> SampledControl:
    """Wrap user-provided flux arrays on a time grid as SampledControl.

    Raises:
        SamplingError: If the grid is not uniform
    """
    times = np.asarray(times, dtype=np.float64)
    if len(times) < 2:
        raise SamplingError("need at least two sample times to infer dt")
    steps = np.diff(times)
    dt = float(steps[0])
    if dt <= 0.0 or np.max(np.abs(steps - dt)) > 1e-9 * dt:
        logger.error(
            "Non-uniform control grid",
            extra={
                "evolution.nonuniform_grid.min_step": float(np.min(steps)),
                "evolution.nonuniform_grid.max_step": float(np.max(steps)),
            },
        )
        raise SamplingError("control samples are not uniformly spaced")
    n = len(times)
    flux_arrays = {ch: np.zeros(n) for ch in (Channel.Z_Q1, Channel.Z_Q2, Channel.Z_C)}
    for ch, values in (flux or {}).items():
        flux_arrays[ch] = np.asarray(values, dtype=np.float64)
    xy = (Channel.XY_Q1, Channel.XY_Q2)
    drive = {ch: np.zeros(n, dtype=np.complex128) for ch in xy}
    carrier = {ch: np.zeros(n) for ch in xy}
    try:
        return SampledControl(dt=dt, flux=flux_arrays, drive=drive, carrier=carrier)
    except ValueError as exc:
        raise SamplingError(str(exc)) from exc


def frame_frequency(device: Device) -> float:
    """Reference frequency of the rotating frame: mean idle qubit frequency."""
    return 0.5 * (device.idle[0] + device.idle[1])


class _StepHamiltonians:
    """Yields the piecewise-constant Hamiltonian of each sample."""

    def __init__(
        self,
        controls: SampledControl,
        device: Device,
        frame: Frame,
        max_dim: int,
    ) -> None:
        if controls.dt <= 0.0:
            raise SamplingError(f"dt must be positive, got {controls.dt}")
        lengths = {len(v) for v in (*controls.flux.values(), *controls.drive.values())}
        if len(lengths) > 1:
            raise SamplingError(f"channel lengths differ: {sorted(lengths)}")

        self._terms = hamiltonian_terms(device.params, max_dim)
        self._n = controls.n_samples
        self._dt = controls.dt
        self._rotating = frame == "rotating"
        self._omega_ref = frame_frequency(device)

        channel_of = {
            Element.Q1: Channel.Z_Q1,
            Element.Q2: Channel.Z_Q2,
            Element.C: Channel.Z_C,
        }
        zeros = np.zeros(self._n)
        self.freqs: dict[Element, RealArray] = {}
        for element, channel in channel_of.items():
            v = controls.flux.get(channel, zeros)
            omega = np.asarray(device.frequency(element, v), dtype=np.float64)
            if self._n and (not np.all(np.isfinite(omega)) or np.min(omega) <= 0.0):
                raise ConfigError(
                    f"flux pulse drives {element} to a non-positive frequency"
                )
            self.freqs[element] = np.broadcast_to(omega, (self._n,))

        self._drives = []
        for channel, element in (
            (Channel.XY_Q1, Element.Q1),
            (Channel.XY_Q2, Element.Q2),
        ):
            env = controls.drive.get(channel)
            if env is None or not np.any(env):
                continue
            t = controls.times
            carrier = controls.carrier[channel]
            offset = self._omega_ref if self._rotating else 0.0
            # ½(ε e^{-i(ω_d − ω_ref)t} a† + h.c.)
            coeff = 0.5 * env * np.exp(-1j * (carrier - offset) * t)
            self._drives.append((coeff, self._terms.lowering[element]))

        self._n_total = sum(self._terms.number.values())

    def __len__(self) -> int:
        return self._n

    def key(self, k: int) -> tuple[complex, ...]:
        parts: list[complex] = [self.freqs[e][k] for e in Element]
        parts.extend(coeff[k] for coeff, _ in self._drives)
        return tuple(parts)

    def hamiltonian(self, k: int) -> ComplexMatrix:
        h = self._terms.static.copy()
        for element in Element:
            h += self.freqs[element][k] * self._terms.number[element]
        if self._rotating:
            h -= self._omega_ref * self._n_total
        for coeff, a in self._drives:
            raising = coeff[k] * a.conj().T
            h += raising + raising.conj().T
        return h


def _exp_step(h: ComplexMatrix, tau: float) -> ComplexMatrix:
    energies, vectors = np.linalg.eigh(h)
    return (vectors * np.exp(-1j * energies * tau)) @ vectors.conj().T


def propagator(
    controls: SampledControl,
    device: Device,
    frame: Frame = "rotating",
    max_dim: int = DEFAULT_MAX_HILBERT_DIM,
) -> ComplexMatrix:
    """Unitary of the sampled controls in the requested frame.

    Element frequencies come from the device flux maps at every sample.

    Raises:
        SamplingError: If the controls are inconsistent
    """
    steps = _StepHamiltonians(controls, device, frame, max_dim)
    dim = device.params.hilbert_dim
    u = np.eye(dim, dtype=np.complex128)
    last_key: tuple[complex, ...] | None = None
    step = u
    for k in range(len(steps)):
        key = steps.key(k)
        if key != last_key:
            step = _exp_step(steps.hamiltonian(k), controls.dt)
            last_key = key
        u = step @ u
    return u


def _collapse_operators(params: DeviceParams, max_dim: int) -> list[ComplexMatrix]:
    terms = hamiltonian_terms(params, max_dim)
    ops = []
    for element in Element:
        t1 = params.t1[element.param_index]
        t_phi = params.t_phi[element.param_index]
        if math.isfinite(t1):
            ops.append(math.sqrt(1.0 / t1) * terms.lowering[element])
        if math.isfinite(t_phi):
            ops.append(math.sqrt(2.0 / t_phi) * terms.number[element])
    return ops


def _dissipator(
    rho: ComplexMatrix, ops: list[ComplexMatrix], decay: ComplexMatrix
) -> ComplexMatrix:
    out = -0.5 * (decay @ rho + rho @ decay)
    for op in ops:
        out += op @ rho @ op.conj().T
    return out


def collapse_operators(
    params: DeviceParams, max_dim: int = DEFAULT_MAX_HILBERT_DIM
) -> list[ComplexMatrix]:
    """Jump operators √(1/T1)·a and √(2/T_φ)·a†a of every element."""
    return _collapse_operators(params, max_dim)


def liouvillian(h: ComplexMatrix, ops: list[ComplexMatrix]) -> ComplexMatrix:
    """Generator of dvec(ρ)/dt for a constant Hamiltonian, column-stacked vec."""
    dim = h.shape[0]
    eye = np.eye(dim, dtype=np.complex128)
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for op in ops:
        decay = op.conj().T @ op
        anti = np.kron(eye, decay) + np.kron(decay.T, eye)
        gen += np.kron(op.conj(), op) - 0.5 * anti
    return gen


def evolve_density_array(
    rho: ComplexMatrix,
    controls: SampledControl,
    device: Device,
    include_decoherence: bool = True,
    frame: Frame = "rotating",
    max_dim: int = DEFAULT_MAX_HILBERT_DIM,
) -> ComplexMatrix:
    """Evolve one density matrix (D, D) or a stack (B, D, D).

    Operators need not be valid states (the stack may hold |i⟩⟨j|); the
    trace of each item is monitored for drift.

    Raises:
        IntegrationError: If any trace drifts by more than 1e-6
    """
    steps = _StepHamiltonians(controls, device, frame, max_dim)
    ops = _collapse_operators(device.params, max_dim) if include_decoherence else []
    dim = device.params.hilbert_dim
    decay = sum(
        (op.conj().T @ op for op in ops), np.zeros((dim, dim), dtype=np.complex128)
    )
    h_step = controls.dt

    state = np.array(rho, dtype=np.complex128, copy=True)
    trace0 = np.trace(state, axis1=-2, axis2=-1)
    last_key: tuple[complex, ...] | None = None
    u_half = u_full = np.eye(dim, dtype=np.complex128)

    for k in range(len(steps)):
        key = steps.key(k)
        if key != last_key:
            u_half = _exp_step(steps.hamiltonian(k), 0.5 * h_step)
            u_full = u_half @ u_half
            last_key = key
        if ops:
            uh_dag = u_half.conj().T
            uf_dag = u_full.conj().T

            def rhs(
                x: ComplexMatrix, u: ComplexMatrix, u_dag: ComplexMatrix
            ) -> ComplexMatrix:
                return u_dag @ _dissipator(u @ x @ u_dag, ops, decay) @ u

            k1 = _dissipator(state, ops, decay)
            k2 = rhs(state + 0.5 * h_step * k1, u_half, uh_dag)
            k3 = rhs(state + 0.5 * h_step * k2, u_half, uh_dag)
            k4 = rhs(state + h_step * k3, u_full, uf_dag)
            state = state + (h_step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        state = u_full @ state @ u_full.conj().T

        drift = float(np.max(np.abs(np.trace(state, axis1=-2, axis2=-1) - trace0)))
        if not drift <= TRACE_DRIFT_LIMIT:
            logger.error(
                "Trace drift during density evolution",
                extra={
                    "evolution.trace_drift.step": k,
                    "evolution.trace_drift.drift": drift,
                    "evolution.trace_drift.dt": h_step,
                },
            )
            raise IntegrationError(f"trace drifted by {drift:.2e} at step {k}")
    return state


def evolve_density(
    rho0: QuantumState,
    controls: SampledControl,
    device: Device,
    include_decoherence: bool = True,
    frame: Frame = "rotating",
    max_dim: int = DEFAULT_MAX_HILBERT_DIM,
) -> QuantumState:
    """Lindblad evolution of a density matrix in the bare basis.

    Collapse operators per element: √(1/T1)·a and √(2/T_φ)·a†a.

    Raises:
        IntegrationError: If the trace drifts by more than 1e-6
    """
    rho = rho0.as_density().data
    final = evolve_density_array(
        rho, controls, device, include_decoherence, frame, max_dim
    )
    final = 0.5 * (final + final.conj().T)
    return QuantumState("density", final, rho0.dims)


def _computational_indices(params: DeviceParams) -> list[int]:
    return [basis_index(params, label) for label in COMPUTATIONAL_LABELS]


def computational_projection(u: ComplexMatrix, params: DeviceParams) -> GateResult:
    """Computational block, leakage and phases of a full-space gate.

    Leakage is taken per computational input: column j of the block holds
    the amplitudes that input j keeps inside the subspace, so
    ``leakage = 1 - min_j sum_i |U_ij|^2`` is the worst population lost
    by any prepared basis state. ``average_leakage`` is the mean over the
    four inputs, 1 - Tr(M†M)/4.

    φ_1 = arg(U_100/U_000), φ_2 = arg(U_001/U_000) and
    φ_c = arg U_101 − φ_1 − φ_2 − arg U_000, all wrapped to (−π, π].
    """
    idx = _computational_indices(params)
    block = np.asarray(u[np.ix_(idx, idx)], dtype=np.complex128)
    retained = np.sum(np.abs(block) ** 2, axis=0)
    leakage = float(np.clip(1.0 - np.min(retained), 0.0, 1.0))
    average_leakage = float(np.clip(1.0 - np.mean(retained), 0.0, 1.0))

    arg = np.angle(np.diagonal(block))
    phase_q1 = wrap_phase(arg[2] - arg[0])
    phase_q2 = wrap_phase(arg[1] - arg[0])
    conditional = wrap_phase(arg[3] - arg[2] - arg[1] + arg[0])
    return GateResult(
        block=block,
        leakage=leakage,
        average_leakage=average_leakage,
        conditional_phase=conditional,
        phase_q1=phase_q1,
        phase_q2=phase_q2,
    )


def virtual_z_compensation(result: GateResult) -> ComplexMatrix:
    """Undo the single-qubit phases φ_1, φ_2 with frame rotations.

    The |000⟩ phase is removed as a global phase; φ_c is untouched.
    """
    phi_1, phi_2 = result.phase_q1, result.phase_q2
    correction = np.exp(-1j * np.array([0.0, phi_2, phi_1, phi_1 + phi_2]))
    global_phase = np.exp(-1j * np.angle(result.block[0, 0]))
    return (correction[:, np.newaxis] * result.block) * global_phase


def average_gate_fidelity(
    block: ComplexMatrix, target: ComplexMatrix = CZ_IDEAL
) -> float:
    """Average gate fidelity of a (possibly leaky) block against a unitary.

    F = (Tr(M M†) + |Tr(U† M)|²) / (d(d + 1))
    """
    d = target.shape[0]
    overlap = np.trace(target.conj().T @ block)
    return float(
        (np.real(np.trace(block @ block.conj().T)) + abs(overlap) ** 2) / (d * (d + 1))
    )


def measure(
    state: QuantumState,
    shots: int,
    assignment_error: float = 0.0,
    rng_seed: int | None = None,
) -> dict[str, int]:
    """Projective readout with symmetric assignment error on both qubits.

    Outcomes are full |Q1, C, Q2⟩ labels sampled from the diagonal
    populations, so leaked population shows up as labels holding a "2" or
    an excited coupler. Bit flips act on qubit levels 0 and 1 only.

    Raises:
        ConfigError: If shots < 1 or assignment_error is outside [0, 0.5)
    """
    if shots < 1:
        raise ConfigError(f"shots must be >= 1, got {shots}")
    if not 0.0 <= assignment_error < 0.5:
        raise ConfigError(
            f"assignment_error must be in [0, 0.5), got {assignment_error}"
        )

    d1, d2, dc = state.dims
    pops = state.populations()
    rng = np.random.default_rng(rng_seed)
    outcome = rng.choice(len(pops), size=shots, p=pops / pops.sum())
    levels = np.stack(np.unravel_index(outcome, (d1, dc, d2)), axis=1)
    if assignment_error > 0.0:
        qubit_slots = levels[:, [0, 2]]
        flips = (rng.random(qubit_slots.shape) < assignment_error) & (qubit_slots < 2)
        levels[:, [0, 2]] = np.where(flips, 1 - qubit_slots, qubit_slots)

    codes, counts = np.unique(
        np.ravel_multi_index(levels.T, (d1, dc, d2)), return_counts=True
    )
    result = {}
    for code, count in zip(codes, counts):
        n1, nc, n2 = np.unravel_index(code, (d1, dc, d2))
        result[f"{n1}{nc}{n2}"] = int(count)
    return result


class PulseSimulator:
    """Runs schedules on a device and reports gate-level quantities.

    Coordinates sampling, the flux-line response, evolution and the change
    to the idle frame. All results are expressed in the labelled idle
    eigenbasis.
    """

    def __init__(
        self,
        device: Device,
        frame: Frame = "rotating",
        dt: float | None = None,
        max_dim: int = DEFAULT_MAX_HILBERT_DIM,
        line_filter: StepResponseFilter | None = None,
        predistort: bool = True,
    ) -> None:
        """Initialise simulator.

        Args:
            device: Device parameters, flux maps and idle point
            frame: Integration frame
            dt: Sampling step; defaults to 0.1 ns (rotating) or 0.02 ns (lab)
            max_dim: Cap on the Hilbert-space dimension
            line_filter: Optional flux-line distortion
            predistort: Pre-correct flux waveforms with the inverse filter
        """
        self.device = device
        self.frame: Frame = frame
        self.dt = dt if dt is not None else (
            DEFAULT_DT_ROTATING if frame == "rotating" else DEFAULT_DT_LAB
        )
        self.max_dim = max_dim
        self.line_filter = line_filter
        self.predistort = predistort

    @property
    def params(self) -> DeviceParams:
        return self.device.params

    @cached_property
    def dressed(self) -> DressedBasis:
        return dressed_basis(self.params, self.device.idle, self.max_dim)

    @cached_property
    def _frame_energies(self) -> RealArray:
        """Idle energies extended linearly from the single excitations."""
        e = self.dressed.energies
        p = self.params
        e0 = e[basis_index(p, "000")]
        eps = {
            "q1": e[basis_index(p, "100")] - e0,
            "c": e[basis_index(p, "010")] - e0,
            "q2": e[basis_index(p, "001")] - e0,
        }
        return np.array(
            [
                e0 + n1 * eps["q1"] + nc * eps["c"] + n2 * eps["q2"]
                for n1, nc, n2 in basis_labels(p)
            ]
        )

    def _frame_phases(self, duration: float) -> ComplexMatrix:
        energies = self._frame_energies
        if self.frame == "rotating":
            omega_ref = frame_frequency(self.device)
            energies = energies - omega_ref * excitation_numbers(self.params)
        return np.exp(1j * energies * duration)

    def sample(self, schedule: Schedule) -> SampledControl:
        """Sample a schedule and pass flux channels through the line model."""
        controls = sample_schedule(schedule, self.dt)
        if self.line_filter is not None and self.line_filter.fraction != 0.0:
            if self.predistort:
                controls = distortion_model(controls, self.line_filter, invert=True)
            controls = distortion_model(controls, self.line_filter)
        return controls

    def unitary(self, schedule: Schedule) -> ComplexMatrix:
        """Idle-frame unitary of a schedule in the labelled dressed basis."""
        controls = self.sample(schedule)
        u = propagator(controls, self.device, self.frame, self.max_dim)
        v = self.dressed.vectors
        phases = self._frame_phases(controls.duration)
        return phases[:, np.newaxis] * (v.conj().T @ u @ v)

    def gate_result(self, schedule: Schedule) -> GateResult:
        return computational_projection(self.unitary(schedule), self.params)

    def evolve_batch(
        self, rhos: ComplexMatrix, schedule: Schedule, include_decoherence: bool
    ) -> ComplexMatrix:
        """Evolve operators given in the idle-frame dressed basis."""
        controls = self.sample(schedule)
        v = self.dressed.vectors
        bare = v @ rhos @ v.conj().T
        final = evolve_density_array(
            bare, controls, self.device, include_decoherence, self.frame, self.max_dim
        )
        phases = self._frame_phases(controls.duration)
        dressed = v.conj().T @ final @ v
        return phases[:, np.newaxis] * dressed * phases.conj()[np.newaxis, :]

    def evolve(
        self, state: QuantumState, schedule: Schedule, include_decoherence: bool = True
    ) -> QuantumState:
        """Evolve a state given in the idle-frame dressed basis."""
        final = self.evolve_batch(
            state.as_density().data, schedule, include_decoherence
        )
        final = 0.5 * (final + final.conj().T)
        return QuantumState("density", final, state.dims)

    def dressed_state(self, label: str) -> QuantumState:
        """Basis state of the labelled idle eigenbasis (unit vector)."""
        return QuantumState.from_label(label, self.params.dims)
