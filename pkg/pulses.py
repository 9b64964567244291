#!/usr/bin/env python3
"""
Pulse envelopes, multi-channel schedules and their sampling.

Flux (Z) channels carry bias voltages relative to the idle point; drive
(XY) channels carry a complex Rabi-rate envelope with a carrier frequency.
Virtual-Z segments take no time: they shift the frame of later XY pulses on
the same qubit and are reported as frame updates.

The line distortion of flux channels is a single-pole step response
s(t) = 1 + A·exp(−t/τ); its exact discrete inverse pre-corrects waveforms.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field
from scipy.signal import lfilter

from errors import FilterError, InvalidShapeError, ScheduleError
from logging_config import getLogger

logger = getLogger(__name__)

RealArray = NDArray[np.float64]
ComplexArray = NDArray[np.complex128]

DEFAULT_DT_ROTATING = 0.1e-9
DEFAULT_DT_LAB = 0.02e-9

# relative tolerance when mapping times onto the sample grid
_GRID_EPS = 1e-9


class Shape(StrEnum):
    HALF_COSINE = "half-cosine"
    SQUARE = "square"
    CONSTANT = "constant"
    VIRTUAL_Z = "virtual-z"


class Channel(StrEnum):
    Z_Q1 = "Z_Q1"
    Z_Q2 = "Z_Q2"
    Z_C = "Z_C"
    XY_Q1 = "XY_Q1"
    XY_Q2 = "XY_Q2"

    @property
    def is_flux(self) -> bool:
        return self.value.startswith("Z_")

    @property
    def target(self) -> str:
        """Element name the channel acts on ("Q1", "Q2" or "C")."""
        return self.value.split("_", 1)[1]


FLUX_CHANNELS = (Channel.Z_Q1, Channel.Z_Q2, Channel.Z_C)
DRIVE_CHANNELS = (Channel.XY_Q1, Channel.XY_Q2)


@dataclass(frozen=True)
class PulseSegment:
    """One pulse on one channel.

    ``amplitude`` is in volts on Z channels and a Rabi rate (rad/s) on XY
    channels. ``rise`` is the width of the cosine ramps of a square pulse.
    """

    shape: Shape
    amplitude: float
    duration: float
    channel: Channel
    phase: float = 0.0
    drive_frequency: float = 0.0
    rise: float = 0.0

    def __post_init__(self) -> None:
        if self.duration < 0.0:
            raise InvalidShapeError(f"duration must be >= 0, got {self.duration}")
        if self.shape is Shape.VIRTUAL_Z:
            if self.duration != 0.0:
                raise InvalidShapeError("virtual-z segments have zero duration")
            if self.channel.is_flux:
                raise InvalidShapeError("virtual-z acts on XY channels only")
        if self.shape is Shape.HALF_COSINE and self.duration <= 0.0:
            raise InvalidShapeError("half-cosine needs a positive duration")
        if self.rise < 0.0 or 2.0 * self.rise > self.duration:
            raise InvalidShapeError(
                f"rise {self.rise} incompatible with duration {self.duration}"
            )

    def shape_values(self, t: RealArray) -> RealArray:
        """Unit-peak shape at times t measured from the segment start."""
        t = np.asarray(t, dtype=np.float64)
        inside = (t >= 0.0) & (t <= self.duration)
        if self.shape is Shape.HALF_COSINE:
            values = 0.5 * (1.0 - np.cos(2.0 * np.pi * t / self.duration))
        elif self.shape is Shape.SQUARE and self.rise > 0.0:
            ramp_up = 0.5 * (1.0 - np.cos(np.pi * t / self.rise))
            ramp_down = 0.5 * (1.0 - np.cos(np.pi * (self.duration - t) / self.rise))
            values = np.where(
                t < self.rise,
                ramp_up,
                np.where(t > self.duration - self.rise, ramp_down, 1.0),
            )
        elif self.shape is Shape.VIRTUAL_Z:
            values = np.zeros_like(t)
        else:
            values = np.ones_like(t)
        return np.where(inside, values, 0.0)

    def envelope(self, t: RealArray) -> RealArray | ComplexArray:
        """Envelope at times t from the segment start.

        Real volts for flux channels, complex amplitude·e^{iφ} for drives.
        """
        values = self.amplitude * self.shape_values(t)
        if self.channel.is_flux:
            return values
        return values * np.exp(1j * self.phase)

    @property
    def area(self) -> float:
        """Analytic integral of the envelope magnitude over the segment."""
        if self.shape is Shape.HALF_COSINE:
            return self.amplitude * self.duration / 2.0
        if self.shape is Shape.VIRTUAL_Z:
            return 0.0
        return self.amplitude * (self.duration - self.rise)


def half_cosine_segment(
    amplitude: float, duration: float, channel: Channel = Channel.Z_C
) -> PulseSegment:
    """Half-period cosine e(t) = A(1 − cos(2πt/T))/2, zero at both ends."""
    if duration <= 0.0:
        raise InvalidShapeError(f"half-cosine needs duration > 0, got {duration}")
    return PulseSegment(Shape.HALF_COSINE, amplitude, duration, channel)


def square_segment(
    amplitude: float,
    duration: float,
    rise: float = 0.0,
    channel: Channel = Channel.Z_C,
) -> PulseSegment:
    """Flat-top pulse with optional cosine ramps of width ``rise``.

    Raises:
        InvalidShapeError: If 2·rise > duration or rise < 0
    """
    if rise < 0.0 or 2.0 * rise > duration:
        raise InvalidShapeError(f"rise {rise} too large for duration {duration}")
    return PulseSegment(Shape.SQUARE, amplitude, duration, channel, rise=rise)


def virtual_z_segment(phase: float, channel: Channel) -> PulseSegment:
    """Zero-duration frame rotation on a drive channel."""
    return PulseSegment(Shape.VIRTUAL_Z, 0.0, 0.0, channel, phase=phase)


@dataclass(frozen=True)
class ScheduledPulse:
    start: float
    segment: PulseSegment

    @property
    def end(self) -> float:
        return self.start + self.segment.duration


@dataclass(frozen=True)
class Schedule:
    """Time-aligned pulses on any number of channels.

    ``duration`` may extend the schedule past its last pulse (idle tail).
    """

    pulses: tuple[ScheduledPulse, ...] = ()
    duration: float | None = None

    def __post_init__(self) -> None:
        for pulse in self.pulses:
            if pulse.start < 0.0:
                raise ScheduleError(f"start time {pulse.start} is negative")
        check_overlaps(self)
        if self.duration is not None and self.duration < self.end_of_pulses - 1e-18:
            raise ScheduleError(
                f"duration {self.duration} shorter than last pulse end "
                f"{self.end_of_pulses}"
            )

    @property
    def end_of_pulses(self) -> float:
        return max((p.end for p in self.pulses), default=0.0)

    @property
    def total_duration(self) -> float:
        return self.end_of_pulses if self.duration is None else self.duration

    def on_channel(self, channel: Channel) -> list[ScheduledPulse]:
        return sorted(
            (p for p in self.pulses if p.segment.channel is channel),
            key=lambda p: p.start,
        )

    @classmethod
    def sequential(
        cls, segments: list[PulseSegment], duration: float | None = None
    ) -> Schedule:
        """Place segments back to back on their channels, all starting at 0."""
        cursor: dict[Channel, float] = {}
        pulses = []
        for seg in segments:
            start = cursor.get(seg.channel, 0.0)
            pulses.append(ScheduledPulse(start, seg))
            cursor[seg.channel] = start + seg.duration
        return cls(tuple(pulses), duration)


def check_overlaps(schedule: Schedule) -> None:
    """Raise ScheduleError when two timed segments on a channel overlap."""
    by_channel: dict[Channel, list[ScheduledPulse]] = {}
    for pulse in schedule.pulses:
        if pulse.segment.duration > 0.0:
            by_channel.setdefault(pulse.segment.channel, []).append(pulse)
    for channel, pulses in by_channel.items():
        pulses.sort(key=lambda p: p.start)
        for prev, nxt in zip(pulses, pulses[1:]):
            if nxt.start < prev.end - _GRID_EPS * max(prev.segment.duration, 1e-12):
                raise ScheduleError(
                    f"segments on {channel} overlap: [{prev.start}, {prev.end}) "
                    f"and [{nxt.start}, {nxt.end})"
                )


@dataclass(frozen=True)
class FrameUpdate:
    time: float
    channel: Channel
    phase: float


@dataclass(frozen=True)
class SampledControl:
    """Piecewise-constant controls on a uniform grid t_n = n·dt.

    ``flux`` holds volts per Z channel; ``drive`` holds the complex envelope
    per XY channel and ``carrier`` its carrier frequency per sample (rad/s).
    """

    dt: float
    flux: dict[Channel, RealArray]
    drive: dict[Channel, ComplexArray]
    carrier: dict[Channel, RealArray]
    frame_updates: tuple[FrameUpdate, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ScheduleError(f"dt must be positive, got {self.dt}")
        lengths = {len(a) for a in (*self.flux.values(), *self.drive.values())}
        lengths |= {len(a) for a in self.carrier.values()}
        if len(lengths) > 1:
            raise ScheduleError(f"channel arrays differ in length: {sorted(lengths)}")

    @property
    def n_samples(self) -> int:
        for arrays in (self.flux, self.drive):
            for values in arrays.values():
                return len(values)
        return 0

    @property
    def duration(self) -> float:
        return self.n_samples * self.dt

    @property
    def times(self) -> RealArray:
        return np.arange(self.n_samples, dtype=np.float64) * self.dt


def n_samples_for(duration: float, dt: float) -> int:
    """ceil(duration/dt), robust to floating-point noise on exact multiples."""
    return max(0, math.ceil(duration / dt - _GRID_EPS))


def sample_schedule(schedule: Schedule, dt: float) -> SampledControl:
    """Sample every channel on the left-aligned grid t_n = n·dt.

    Channels without segments are filled with idle values (0 V, no drive).
    Virtual-Z segments produce no samples; their accumulated phase is applied
    to later drive samples on the same qubit and reported as frame updates.

    Raises:
        ScheduleError: If dt <= 0 or segments on one channel overlap
    """
    if dt <= 0.0:
        raise ScheduleError(f"dt must be positive, got {dt}")
    check_overlaps(schedule)
    n = n_samples_for(schedule.total_duration, dt)
    t = np.arange(n, dtype=np.float64) * dt

    flux = {ch: np.zeros(n, dtype=np.float64) for ch in FLUX_CHANNELS}
    drive = {ch: np.zeros(n, dtype=np.complex128) for ch in DRIVE_CHANNELS}
    carrier = {ch: np.zeros(n, dtype=np.float64) for ch in DRIVE_CHANNELS}
    updates: list[FrameUpdate] = []

    for channel in Channel:
        frame = 0.0
        for pulse in schedule.on_channel(channel):
            seg = pulse.segment
            if seg.shape is Shape.VIRTUAL_Z:
                frame += seg.phase
                updates.append(FrameUpdate(pulse.start, channel, seg.phase))
                continue
            first = n_samples_for(pulse.start, dt)
            last = min(n, n_samples_for(pulse.end, dt))
            if last <= first:
                continue
            local = t[first:last] - pulse.start
            values = seg.envelope(local)
            if channel.is_flux:
                flux[channel][first:last] += np.real(values)
            else:
                drive[channel][first:last] += values * np.exp(-1j * frame)
                carrier[channel][first:last] = seg.drive_frequency

    logger.debug(
        "Schedule sampled",
        extra={
            "pulses.schedule_sampled.samples": n,
            "pulses.schedule_sampled.dt": dt,
        },
    )
    return SampledControl(
        dt=dt, flux=flux, drive=drive, carrier=carrier, frame_updates=tuple(updates)
    )


class StepResponseFilter(BaseModel):
    """Single-pole line model.

    Step response: 1 + fraction·exp(−t/time_constant).
    """

    model_config = ConfigDict(frozen=True)

    fraction: float = Field(default=0.0)
    time_constant: float = Field(default=30e-9)


def _filter_coefficients(
    filt: StepResponseFilter, dt: float
) -> tuple[list[float], list[float]]:
    if filt.time_constant <= 0.0:
        raise FilterError(f"time constant must be positive, got {filt.time_constant}")
    lam = math.exp(-dt / filt.time_constant)
    a = filt.fraction
    # y = x + a·z, z[n] = lam·z[n-1] + x[n] − x[n-1]
    return [1.0 + a, -(lam + a)], [1.0, -lam]


def distortion_model(
    samples: SampledControl, filt: StepResponseFilter, invert: bool = False
) -> SampledControl:
    """Apply the line distortion to flux channels, or its exact inverse.

    Drive channels pass through unchanged.

    Raises:
        FilterError: If the time constant is not positive or the inverse is
            unstable (fraction <= −1 or inverse pole outside the unit circle)
    """
    numerator, denominator = _filter_coefficients(filt, samples.dt)
    if invert:
        if filt.fraction <= -1.0 or abs(numerator[1] / numerator[0]) >= 1.0:
            logger.error(
                "Unstable inverse distortion filter",
                extra={
                    "pulses.filter_unstable.fraction": filt.fraction,
                    "pulses.filter_unstable.time_constant": filt.time_constant,
                },
            )
            raise FilterError(
                f"inverse filter unstable for fraction {filt.fraction}"
            )
        numerator, denominator = denominator, numerator

    flux = {
        ch: np.asarray(lfilter(numerator, denominator, values), dtype=np.float64)
        for ch, values in samples.flux.items()
    }
    return replace(samples, flux=flux)


def adiabatic_cz_schedule(v_b: float, duration: float) -> Schedule:
    """Half-cosine coupler excursion of peak bias v_b."""
    return Schedule((ScheduledPulse(0.0, half_cosine_segment(v_b, duration)),))


def diabatic_cz_schedule(
    v_b: float, v_q: float, duration: float, rise: float = 0.0
) -> Schedule:
    """Simultaneous square pulses on the coupler (v_b) and on Q2 (v_q)."""
    return Schedule(
        (
            ScheduledPulse(0.0, square_segment(v_b, duration, rise, Channel.Z_C)),
            ScheduledPulse(0.0, square_segment(v_q, duration, rise, Channel.Z_Q2)),
        )
    )


def quantize_duration(duration: float, dt: float) -> float:
    """Round a duration to the nearest whole number of samples (at least one)."""
    return max(1, round(duration / dt)) * dt


_TEXT_FIELDS = (
    "channel",
    "shape",
    "start",
    "duration",
    "amplitude",
    "phase",
    "rise",
    "drive_frequency",
)


def schedule_to_text(schedule: Schedule) -> str:
    """Serialise a schedule as CSV, one segment per row, SI units."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["#duration", repr(schedule.total_duration)])
    writer.writerow(_TEXT_FIELDS)
    for pulse in sorted(schedule.pulses, key=lambda p: (p.start, p.segment.channel)):
        seg = pulse.segment
        writer.writerow(
            [
                seg.channel.value,
                seg.shape.value,
                repr(pulse.start),
                repr(seg.duration),
                repr(seg.amplitude),
                repr(seg.phase),
                repr(seg.rise),
                repr(seg.drive_frequency),
            ]
        )
    return buffer.getvalue()


def schedule_from_text(text: str) -> Schedule:
    """Parse the output of schedule_to_text.

    Raises:
        ScheduleError: If the text is malformed
    """
    rows = list(csv.reader(io.StringIO(text)))
    try:
        if rows[0][0] != "#duration" or tuple(rows[1]) != _TEXT_FIELDS:
            raise ScheduleError("missing schedule header")
        duration = float(rows[0][1])
        pulses = []
        for row in rows[2:]:
            if not row:
                continue
            record = dict(zip(_TEXT_FIELDS, row, strict=True))
            segment = PulseSegment(
                shape=Shape(record["shape"]),
                amplitude=float(record["amplitude"]),
                duration=float(record["duration"]),
                channel=Channel(record["channel"]),
                phase=float(record["phase"]),
                drive_frequency=float(record["drive_frequency"]),
                rise=float(record["rise"]),
            )
            pulses.append(ScheduledPulse(float(record["start"]), segment))
    except (IndexError, ValueError, KeyError) as exc:
        if isinstance(exc, ScheduleError):
            raise
        raise ScheduleError(f"malformed schedule text: {exc}") from exc
    return Schedule(tuple(pulses), duration)
