#!/usr/bin/env python3
"""
Exceptions raised by the simulator.

Validation problems derive from ValueError, failures that happen while a
computation runs derive from RuntimeError. All of them share SimulatorError.
"""

from __future__ import annotations

from typing import Any


class SimulatorError(Exception):
    """Base class for all simulator errors."""


class InvalidDimensionError(SimulatorError, ValueError):
    """Truncation dimension too small for the requested operation."""


class ResourceLimitError(SimulatorError, RuntimeError):
    """Hilbert space larger than the configured cap."""


class SingularityError(SimulatorError, ValueError):
    """Resonant denominator in a perturbative formula."""


class UnsupportedControlError(SimulatorError, ValueError):
    """Control requested on an element or backend that does not support it."""


class DegenerateLabelingError(SimulatorError, RuntimeError):
    """Eigenstate cannot be matched to a bare-state label."""


class InvalidShapeError(SimulatorError, ValueError):
    """Pulse shape parameters out of range."""


class ScheduleError(SimulatorError, ValueError):
    """Schedule is malformed (overlaps, negative start times, bad text)."""


class FilterError(SimulatorError, ValueError):
    """Distortion filter cannot be applied or inverted."""


class SamplingError(SimulatorError, ValueError):
    """Sampled controls are not uniformly spaced or inconsistent."""


class IntegrationError(SimulatorError, RuntimeError):
    """Density-matrix integration lost trace."""


class StateError(SimulatorError, ValueError):
    """Quantum state is not normalised or not a valid density matrix."""


class ConfigError(SimulatorError, ValueError):
    """Invalid configuration or argument values."""


class LowContrastError(SimulatorError, RuntimeError):
    """Ramsey fringe contrast too small to fit a phase."""


class InvalidInterleaveError(SimulatorError, ValueError):
    """Interleaved gate is not an element of the Clifford group."""


class BackendError(SimulatorError, RuntimeError):
    """Benchmarking backend failed on a sequence."""


class FitError(SimulatorError, RuntimeError):
    """Decay fit did not converge or the data cannot identify the model."""

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CalibrationError(SimulatorError, RuntimeError):
    """Gate tune-up cannot find a valid starting point."""


class OptimizerAbortedError(SimulatorError, RuntimeError):
    """Objective returned a non-finite value; trace holds every evaluation."""

    def __init__(self, message: str, trace: list[tuple[list[float], float]]) -> None:
        super().__init__(message)
        self.trace = trace
