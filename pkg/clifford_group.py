#!/usr/bin/env python3
"""
Two-qubit Clifford group in the native gate set {±X/2, ±Y/2, X, Y, CZ}.

Every element is a pair of single-qubit Cliffords followed by one of four
entangling classes:
- single-qubit class: nothing more (576 elements),
- CNOT-like class: one CZ and single-qubit rotations (5184),
- iSWAP-like class: two CZs and single-qubit rotations (5184),
- SWAP-like class: three CZs (576).

Element index i splits as (i // 480, (i % 480) // 20, i % 20). Gate lists
are in time order; Q1 is the first tensor factor. Elements are compared up
to global phase through a canonical key of their 4×4 unitary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from logging_config import getLogger

logger = getLogger(__name__)

ComplexMatrix = NDArray[np.complex128]

GROUP_SIZE = 11520

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
}

CZ_UNITARY = np.diag([1.0, 1.0, 1.0, -1.0]).astype(np.complex128)


class NativeGate(NamedTuple):
    """A native gate: "CZ" (qubit None) or a rotation such as "-Y/2" on qubit 0/1."""

    name: str
    qubit: int | None = None


def rotation(axis: str, turns: float) -> ComplexMatrix:
    """exp(−iθσ/2) with θ = π·turns about the X or Y axis."""
    theta = math.pi * turns
    return (
        math.cos(theta / 2) * np.eye(2, dtype=np.complex128)
        - 1j * math.sin(theta / 2) * _PAULI[axis]
    )


def _gate_name(axis: str, turns: float) -> str:
    if turns == 1.0:
        return axis
    return f"{'-' if turns < 0 else ''}{axis}/2"


_SINGLE_QUBIT_GATES = {
    _gate_name(axis, turns): rotation(axis, turns)
    for axis in ("X", "Y")
    for turns in (1.0, 0.5, -0.5)
}


def single_qubit_unitary(name: str) -> ComplexMatrix:
    return _SINGLE_QUBIT_GATES[name]


Rotations = list[tuple[str, float]]


def _single_qubit_cliffords() -> list[Rotations]:
    """The 24 single-qubit Cliffords as X/Y rotation sequences."""
    c1: list[Rotations] = []
    for first, second in itertools.product((1.0, 0.5, -0.5), (0.0, 0.5, -0.5)):
        c1.append([("X", first), ("Y", second)])
        c1.append([("Y", first), ("X", second)])
    c1.append([])
    c1.append([("Y", 1.0), ("X", 1.0)])
    for y0, x, y1 in (
        (-0.5, 0.5, 0.5),
        (-0.5, -0.5, 0.5),
        (0.5, 0.5, 0.5),
        (-0.5, 0.5, -0.5),
    ):
        c1.append([("Y", y0), ("X", x), ("Y", y1)])
    return [[(axis, t) for axis, t in seq if t != 0.0] for seq in c1]


_S1: list[Rotations] = [[], [("Y", 0.5), ("X", 0.5)], [("X", -0.5), ("Y", -0.5)]]
_S1_X: list[Rotations] = [
    [("X", 0.5)],
    [("X", 0.5), ("Y", 0.5), ("X", 0.5)],
    [("Y", -0.5)],
]
_S1_Y: list[Rotations] = [
    [("Y", 0.5)],
    [("X", -0.5), ("Y", -0.5), ("X", 0.5)],
    [("Y", 1.0), ("X", 0.5)],
]


def _on(qubit: int, rotations: Rotations) -> list[NativeGate]:
    return [NativeGate(_gate_name(axis, t), qubit) for axis, t in rotations]


def split_index(index: int) -> tuple[int, int, int]:
    """(first-qubit Clifford, second-qubit Clifford, entangling class index)."""
    return index // 480, (index % 480) // 20, index % 20


def _native_gates(index: int, c1: list[Rotations]) -> list[NativeGate]:
    idx0, idx1, idx2 = split_index(index)
    gates = _on(0, c1[idx0]) + _on(1, c1[idx1])
    cz = NativeGate("CZ")
    if idx2 == 1:
        gates += [cz, *_on(0, [("Y", -0.5)]), *_on(1, [("Y", 0.5)])]
        gates += [cz, *_on(0, [("Y", 0.5)]), *_on(1, [("Y", -0.5)])]
        gates += [cz, *_on(1, [("Y", 0.5)])]
    elif 2 <= idx2 <= 10:
        a, b = divmod(idx2 - 2, 3)
        gates += [cz, *_on(0, _S1[a]), *_on(1, _S1_Y[b])]
    elif idx2 >= 11:
        a, b = divmod(idx2 - 11, 3)
        gates += [cz, *_on(0, [("Y", 0.5)]), *_on(1, [("X", -0.5)])]
        gates += [cz, *_on(0, _S1_Y[a]), *_on(1, _S1_X[b])]
    return gates


def native_gate_unitary(gate: NativeGate) -> ComplexMatrix:
    """4×4 unitary of one native gate."""
    if gate.name == "CZ":
        return CZ_UNITARY
    single = single_qubit_unitary(gate.name)
    eye = np.eye(2, dtype=np.complex128)
    return np.kron(single, eye) if gate.qubit == 0 else np.kron(eye, single)


def compose(gates: list[NativeGate] | tuple[NativeGate, ...]) -> ComplexMatrix:
    """Unitary of a time-ordered gate list."""
    u = np.eye(4, dtype=np.complex128)
    for gate in gates:
        u = native_gate_unitary(gate) @ u
    return u


def canonical_key(u: ComplexMatrix) -> bytes:
    """Hashable form of a Clifford unitary, invariant under global phase.

    Nonzero entries of two-qubit Cliffords have magnitude ≥ 1/2, so the
    first entry above 0.3 fixes the phase reliably.
    """
    flat = np.asarray(u, dtype=np.complex128).ravel()
    pivot = flat[int(np.argmax(np.abs(flat) > 0.3))]
    normalised = np.round(flat * (abs(pivot) / pivot), 6)
    return np.concatenate([normalised.real + 0.0, normalised.imag + 0.0]).tobytes()


def phase_insensitive_overlap(u: ComplexMatrix, v: ComplexMatrix) -> float:
    """|Tr(U†V)|/d; 1 when U and V agree up to global phase."""
    return float(abs(np.trace(u.conj().T @ v)) / u.shape[0])


@dataclass(frozen=True)
class CliffordCircuit:
    """A group element with its native decomposition and ideal unitary."""

    index: int
    gates: tuple[NativeGate, ...]
    unitary: ComplexMatrix

    @property
    def cz_count(self) -> int:
        return sum(1 for gate in self.gates if gate.name == "CZ")


class CliffordGroup:
    """Indexed two-qubit Clifford group with lookup by unitary."""

    def __init__(self) -> None:
        c1 = _single_qubit_cliffords()
        self.elements: list[CliffordCircuit] = []
        self._by_key: dict[bytes, int] = {}
        for index in range(GROUP_SIZE):
            gates = tuple(_native_gates(index, c1))
            unitary = compose(gates)
            self.elements.append(CliffordCircuit(index, gates, unitary))
            self._by_key.setdefault(canonical_key(unitary), index)
        if len(self._by_key) != GROUP_SIZE:
            logger.error(
                "Clifford decomposition produced duplicates",
                extra={"clifford_group.size_check.distinct": len(self._by_key)},
            )
            raise RuntimeError(
                f"expected {GROUP_SIZE} distinct Cliffords, got {len(self._by_key)}"
            )
        logger.debug(
            "Clifford group built",
            extra={"clifford_group.size_check.distinct": len(self._by_key)},
        )

    def __len__(self) -> int:
        return len(self.elements)

    def __getitem__(self, index: int) -> CliffordCircuit:
        return self.elements[index]

    def index_of(self, unitary: ComplexMatrix) -> int | None:
        """Group index of a unitary (up to phase), None if not a Clifford."""
        return self._by_key.get(canonical_key(unitary))

    def inverse(self, unitary: ComplexMatrix) -> CliffordCircuit:
        """Element equal to U† up to phase.

        Raises:
            KeyError: If U is not in the group
        """
        index = self.index_of(unitary.conj().T)
        if index is None:
            raise KeyError("unitary is not a two-qubit Clifford")
        return self.elements[index]

    def average_cz_count(self) -> float:
        return sum(e.cz_count for e in self.elements) / len(self.elements)


@lru_cache(maxsize=1)
def clifford_group() -> CliffordGroup:
    """All 11,520 two-qubit Cliffords (built once per process)."""
    return CliffordGroup()
