"""Simulated chest-strap and watch devices with controllable ground truth."""

from .models import (
    ActivityProtocol,
    HrModel,
    LatencyModel,
    MotionModel,
    Phase,
    VirtualClock,
)

__all__ = [
    "ActivityProtocol",
    "HrModel",
    "LatencyModel",
    "MotionModel",
    "Phase",
    "VirtualClock",
]
