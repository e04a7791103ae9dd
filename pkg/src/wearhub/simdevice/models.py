"""Ground-truth models for the simulated devices.

VirtualClock is the clock disparity the sync handshake exists to measure;
the rest shapes plausible heart-rate and motion signals over an activity
protocol.  Everything is deterministic under a seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..timebase import EPOCH2000_OFFSET_NS

PHASE_LABELS = ("rest", "walk", "run")


@dataclass(frozen=True)
class Phase:
    label: str
    duration_s: float


@dataclass(frozen=True)
class ActivityProtocol:
    """Sequence of rest/walk/run phases driven by the simulator."""

    phases: tuple[Phase, ...]

    def __post_init__(self) -> None:
        if not self.phases or self.total_s <= 0:
            raise ValueError("protocol needs at least one phase with positive duration")
        for p in self.phases:
            if p.label not in PHASE_LABELS:
                raise ValueError(f"unknown phase label {p.label!r}")

    @property
    def total_s(self) -> float:
        return sum(p.duration_s for p in self.phases)

    def phase_at(self, t_s: float) -> tuple[int, Phase, float]:
        """(index, phase, phase start time) active at t_s; end time maps
        to the final phase."""
        if t_s < 0 or t_s > self.total_s:
            raise ValueError(f"t={t_s} outside protocol of {self.total_s}s")
        start = 0.0
        for i, p in enumerate(self.phases):
            end = start + p.duration_s
            if t_s < end:
                return i, p, start
            start = end
        return len(self.phases) - 1, self.phases[-1], start - self.phases[-1].duration_s

    def label_at(self, t_s: float) -> str:
        return self.phase_at(t_s)[1].label


@dataclass
class VirtualClock:
    """Device clock defined relative to the hub clock.

    true_offset_ns is hub_time minus device_time at the drift reference
    instant; drift_ppm skews the device rate relative to the hub.  Origin
    "boot" yields boot-monotonic nanoseconds, "epoch2000" nanoseconds
    since 2000-01-01 UTC (requires the hub's unix reading at boot 0).
    """

    true_offset_ns: int = 0
    drift_ppm: float = 0.0
    origin: str = "boot"
    drift_ref_hub_ns: int = 0
    hub_unix_at_boot0_ns: int | None = None

    def device_now(self, hub_boot_ns: int) -> int:
        value = hub_boot_ns - self.true_offset_ns
        if self.drift_ppm:
            value += round(self.drift_ppm * 1e-6 * (hub_boot_ns - self.drift_ref_hub_ns))
        if self.origin == "epoch2000":
            if self.hub_unix_at_boot0_ns is None:
                raise ValueError("epoch2000 origin needs the hub unix anchor")
            value += self.hub_unix_at_boot0_ns - EPOCH2000_OFFSET_NS
        elif self.origin != "boot":
            raise ValueError(f"unknown clock origin {self.origin!r}")
        return value


@dataclass
class LatencyModel:
    """One-way message delay in simulated milliseconds, Gaussian with a
    floor at zero; deterministic given the seed."""

    mean_ms: float = 5.0
    jitter_std_ms: float = 1.0
    seed: int = 0
    _rng: random.Random = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._rng = random.Random(f"latency:{self.seed}")

    def sample_ms(self) -> float:
        if self.jitter_std_ms <= 0:
            return max(0.0, self.mean_ms)
        return max(0.0, self._rng.gauss(self.mean_ms, self.jitter_std_ms))

    def sample_ns(self) -> int:
        return int(self.sample_ms() * 1e6)


def _default_dropout() -> dict[str, float]:
    return {"rest": 0.02, "walk": 0.10, "run": 0.30}


@dataclass(frozen=True)
class HrModel:
    """First-order heart-rate response toward per-phase targets.

    Targets and the time constant are simulator design values; the watch
    emits bpm 0 with the per-phase dropout probability to mimic low PPG
    signal quality under motion.
    """

    rest_bpm: float = 70.0
    walk_bpm: float = 100.0
    run_bpm: float = 150.0
    tau_s: float = 30.0
    noise_std_chest: float = 1.0
    noise_std_watch: float = 3.0
    dropout_prob: dict[str, float] = field(default_factory=_default_dropout)

    def __post_init__(self) -> None:
        if min(self.rest_bpm, self.walk_bpm, self.run_bpm) <= 0:
            raise ValueError("bpm targets must be positive")
        for label, p in self.dropout_prob.items():
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"dropout probability for {label} outside [0, 1]")

    def target(self, label: str) -> float:
        return {"rest": self.rest_bpm, "walk": self.walk_bpm, "run": self.run_bpm}[label]


def _default_cadence() -> dict[str, float]:
    return {"rest": 0.0, "walk": 1.8, "run": 2.8}


def _default_acc_amp() -> dict[str, float]:
    return {"rest": 0.0, "walk": 2.0, "run": 6.0}


def _default_gyro_amp() -> dict[str, float]:
    return {"rest": 0.0, "walk": 30.0, "run": 60.0}


@dataclass(frozen=True)
class MotionModel:
    """Sinusoids at per-phase cadence plus Gaussian noise.

    Accelerometer in m/s^2 with gravity on z, gyroscope in deg/s.  An
    optional impulse adds a single large spike to both devices' acc
    streams at the first sample at or after impulse_at_s (protocol time).
    """

    cadence_hz: dict[str, float] = field(default_factory=_default_cadence)
    acc_amp: dict[str, float] = field(default_factory=_default_acc_amp)
    gyro_amp_dps: dict[str, float] = field(default_factory=_default_gyro_amp)
    acc_noise_std: float = 0.2
    gyro_noise_std: float = 1.0
    gravity: float = 9.81
    impulse_at_s: float | None = None
    impulse_amp: float = 40.0
