"""
Shared fixtures: the published device operating point.
"""

import math

import pytest

from device_model import Device, DeviceParams

GHZ = 2.0 * math.pi * 1e9
MHZ = 2.0 * math.pi * 1e6

IDLE = (4.283 * GHZ, 4.679 * GHZ, 5.419 * GHZ)


def make_params(**overrides: object) -> DeviceParams:
    values: dict[str, object] = {
        "omega_max": (4.508 * GHZ, 4.701 * GHZ, 5.419 * GHZ),
        "alpha": (-290.0 * MHZ, -306.0 * MHZ, -124.0 * MHZ),
        "g_1c": 100.0 * MHZ,
        "g_2c": 100.0 * MHZ,
        "g_12": 5.0 * MHZ,
    }
    values.update(overrides)
    return DeviceParams(**values)  # type: ignore[arg-type]


@pytest.fixture
def params() -> DeviceParams:
    return make_params()


@pytest.fixture
def device(params: DeviceParams) -> Device:
    return Device.at_idle(params, IDLE)


@pytest.fixture
def small_device() -> Device:
    """Two-level truncation: fast, enough for single-excitation physics."""
    return Device.at_idle(make_params(dims=(2, 2, 2)), IDLE)
