"""Deterministic sample generation for the simulated devices.

Streams are generated on an ideal sampling grid anchored at capture
start, so identical configuration yields byte-identical payloads no
matter how the event loop schedules the emitting tasks.
"""

from __future__ import annotations

import math
import random

from ..protocol import HrItem, MotionItem
from ..timebase import SyncRound
from .models import ActivityProtocol, HrModel, LatencyModel, MotionModel, VirtualClock


def hr_ground_truth(protocol: ActivityProtocol, model: HrModel, t_s: float) -> float:
    """Noise-free heart rate at protocol time t_s.

    First-order lag toward the active phase's target, continuous across
    phase boundaries; the series starts at the first phase's target
    (equilibrium).
    """
    if t_s < 0 or t_s > protocol.total_s:
        raise ValueError(f"t={t_s} outside protocol of {protocol.total_s}s")
    hr = model.target(protocol.phases[0].label)
    start = 0.0
    for phase in protocol.phases:
        end = start + phase.duration_s
        target = model.target(phase.label)
        dt = min(t_s, end) - start
        hr = target + (hr - target) * math.exp(-dt / model.tau_s)
        if t_s <= end:
            break
        start = end
    return hr


class StreamCursor:
    """Sequential generator for one device stream.

    Sample k lies at protocol time k/rate_hz; its timestamp is the
    device's virtual-clock reading for the hub instant
    capture_start_hub_ns + k/rate_hz.  Items must be taken in order
    (the noise RNG is sequential).
    """

    def __init__(
        self,
        kind: str,
        stream: str,
        rate_hz: float,
        protocol: ActivityProtocol,
        hr_model: HrModel,
        motion_model: MotionModel,
        seed: int,
        clock: VirtualClock,
        capture_start_hub_ns: int,
    ):
        if rate_hz <= 0:
            raise ValueError("rate_hz must be positive")
        self.kind = kind
        self.stream = stream
        self.rate_hz = rate_hz
        self.protocol = protocol
        self.hr_model = hr_model
        self.motion_model = motion_model
        self.clock = clock
        self.capture_start_hub_ns = capture_start_hub_ns
        self._rng = random.Random(f"{seed}:{kind}:{stream}")
        self._k = 0
        self.sample_count = int(protocol.total_s * rate_hz)
        m = motion_model
        self._impulse_k: int | None = None
        if stream == "acc" and m.impulse_at_s is not None:
            self._impulse_k = math.ceil(m.impulse_at_s * rate_hz)

    def grid_t_s(self, k: int) -> float:
        return k / self.rate_hz

    def grid_hub_ns(self, k: int) -> int:
        return self.capture_start_hub_ns + round(k * 1e9 / self.rate_hz)

    @property
    def exhausted(self) -> bool:
        return self._k >= self.sample_count

    def next_due_hub_ns(self) -> int:
        return self.grid_hub_ns(self._k)

    def take(self, n: int) -> list[HrItem | MotionItem]:
        out = []
        while n > 0 and not self.exhausted:
            out.append(self._item(self._k))
            self._k += 1
            n -= 1
        return out

    def _item(self, k: int) -> HrItem | MotionItem:
        t = self.grid_t_s(k)
        ts_ns = self.clock.device_now(self.grid_hub_ns(k))
        if self.stream == "hr":
            return self._hr_item(t, ts_ns)
        return self._motion_item(k, t, ts_ns)

    def _hr_item(self, t: float, ts_ns: int) -> HrItem:
        m = self.hr_model
        label = self.protocol.label_at(t)
        if self.kind == "watch":
            # poor PPG quality reads as bpm 0, never as a link failure
            if self._rng.random() < m.dropout_prob.get(label, 0.0):
                return HrItem(ts_ns=ts_ns, bpm=0)
            noise = self._rng.gauss(0.0, m.noise_std_watch) if m.noise_std_watch > 0 else 0.0
            bpm = max(0, round(hr_ground_truth(self.protocol, m, t) + noise))
            return HrItem(ts_ns=ts_ns, bpm=bpm)
        noise = self._rng.gauss(0.0, m.noise_std_chest) if m.noise_std_chest > 0 else 0.0
        bpm = max(0, round(hr_ground_truth(self.protocol, m, t) + noise))
        return HrItem(ts_ns=None, bpm=bpm)

    def _motion_item(self, k: int, t: float, ts_ns: int) -> MotionItem:
        m = self.motion_model
        label = self.protocol.label_at(t)
        freq = m.cadence_hz[label]
        theta = 2.0 * math.pi * freq * t
        if self.stream == "acc":
            amp = m.acc_amp[label]
            x = amp * math.sin(theta)
            y = amp * math.sin(theta + 2.1)
            z = m.gravity + 0.5 * amp * math.sin(theta + 4.2)
            std = m.acc_noise_std
        else:
            amp = m.gyro_amp_dps[label]
            x = amp * math.sin(theta)
            y = amp * math.sin(theta + 2.1)
            z = amp * math.sin(theta + 4.2)
            std = m.gyro_noise_std
        if std > 0:
            x += self._rng.gauss(0.0, std)
            y += self._rng.gauss(0.0, std)
            z += self._rng.gauss(0.0, std)
        if self._impulse_k is not None and k == self._impulse_k:
            x += m.impulse_amp
            y += m.impulse_amp
            z += m.impulse_amp
        return MotionItem(ts_ns=ts_ns, x=x, y=y, z=z)


def simulate_sync_rounds(
    clock: VirtualClock,
    n_rounds: int,
    spacing_ns: int,
    to_device: LatencyModel,
    to_hub: LatencyModel,
    start_hub_ns: int = 0,
    drop_seqs: tuple[int, ...] = (),
) -> list[SyncRound]:
    """Analytic timing handshake with no sleeps: the Monte-Carlo harness.

    Pings leave the hub at start_hub_ns + seq*spacing_ns; the device reads
    t2 at the delayed arrival instant; dropped sequence numbers model lost
    pongs.
    """
    rounds = []
    for seq in range(n_rounds):
        t1 = start_hub_ns + seq * spacing_ns
        d1 = to_device.sample_ns()
        d2 = to_hub.sample_ns()
        if seq in drop_seqs:
            continue
        rounds.append(
            SyncRound(seq=seq, t1_ns=t1, t2_ns=clock.device_now(t1 + d1), t3_ns=t1 + d1 + d2)
        )
    return rounds
