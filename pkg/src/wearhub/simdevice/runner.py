"""Async device client: connects to the hub and plays one simulated device.

Each device is a self-contained task sharing nothing with the hub but the
wire protocol.  Outbound messages pass through a FIFO queue whose entries
carry a sampled departure delay, modelling a jittery ordered link; inbound
messages are handled after a sampled delay, so the handshake sees both
one-way latencies.  Configured latencies are simulated milliseconds: at
time scale s the runner sleeps d/s wall seconds, which advances the hub's
scaled clock by d.
"""

from __future__ import annotations

import asyncio
import logging
import time
from dataclasses import dataclass, field

from ..protocol import (
    DeviceDescriptor,
    ErrorMsg,
    FrameDecoder,
    Hello,
    HelloAck,
    Keepalive,
    KeepaliveAck,
    PROTOCOL_VERSION,
    Samples,
    StartCapture,
    StopCapture,
    StreamSpec,
    SyncPing,
    SyncPong,
    encode,
)
from .models import ActivityProtocol, HrModel, LatencyModel, MotionModel, VirtualClock
from .signals import StreamCursor

log = logging.getLogger(__name__)


class DeviceError(Exception):
    pass


class RegistrationError(DeviceError):
    """The hub refused the hello; retrying is pointless."""


@dataclass
class DeviceConfig:
    kind: str
    device_id: str = ""
    seed: int = 0
    true_offset_ns: int = 0
    drift_ppm: float = 0.0
    latency_to_device_mean_ms: float = 0.0
    latency_to_device_jitter_ms: float = 0.0
    latency_to_hub_mean_ms: float = 0.0
    latency_to_hub_jitter_ms: float = 0.0
    time_scale: float = 1.0
    hr_rate_hz: float = 1.0
    acc_rate_hz: float = 0.0  # 0 picks the per-kind default (watch 50, chest 200)
    gyro_rate_hz: float = 50.0
    protocol: ActivityProtocol | None = None  # None -> the reference protocol
    hr_model: HrModel = field(default_factory=HrModel)
    motion_model: MotionModel = field(default_factory=MotionModel)
    hr_batch: int = 1
    motion_batch: int = 25
    chest_acc_batch: int = 100
    connect_attempts: int = 5
    backoff_s: float = 0.5
    keepalive_period_s: float = 1.0
    keepalive_misses: int = 3
    drop_pong_seqs: tuple[int, ...] = ()  # fault injection for sync tests

    def __post_init__(self) -> None:
        if self.kind not in ("chest_strap", "watch"):
            raise ValueError(f"unknown device kind {self.kind!r}")
        if not self.device_id:
            self.device_id = f"{self.kind}-{self.seed}"
        if self.acc_rate_hz <= 0:
            self.acc_rate_hz = 200.0 if self.kind == "chest_strap" else 50.0
        if self.protocol is None:
            from ..analysis import default_protocol  # runner -> analysis only here

            self.protocol = default_protocol()

    def latency_summary(self) -> dict:
        return {
            "true_offset_ns": self.true_offset_ns,
            "drift_ppm": self.drift_ppm,
            "seed": self.seed,
            "latency_to_device_ms": [self.latency_to_device_mean_ms, self.latency_to_device_jitter_ms],
            "latency_to_hub_ms": [self.latency_to_hub_mean_ms, self.latency_to_hub_jitter_ms],
        }


def descriptor_for(cfg: DeviceConfig) -> DeviceDescriptor:
    if cfg.kind == "chest_strap":
        streams = (
            StreamSpec("hr", cfg.hr_rate_hz, "none"),
            StreamSpec("acc", cfg.acc_rate_hz, "epoch2000_nanos"),
        )
    else:
        streams = (
            StreamSpec("hr", cfg.hr_rate_hz, "boot_nanos"),
            StreamSpec("acc", cfg.acc_rate_hz, "boot_nanos"),
            StreamSpec("gyro", cfg.gyro_rate_hz, "boot_nanos"),
        )
    return DeviceDescriptor(cfg.device_id, cfg.kind, streams)


class SimDevice:
    """One simulated device; run() keeps it alive until cancelled or dead.

    With hub_clock (in-process runs) the virtual clock reads the hub's
    scaled clock directly, realizing the configured offset exactly;
    otherwise the clock anchors to the hello_ack readings through the
    shared wall clock.
    """

    def __init__(self, cfg: DeviceConfig, host: str, port: int, hub_clock=None):
        self.cfg = cfg
        self.host = host
        self.port = port
        self.hub_clock = hub_clock
        self._lat_down = LatencyModel(
            cfg.latency_to_device_mean_ms, cfg.latency_to_device_jitter_ms, seed=cfg.seed * 2 + 1
        )
        self._lat_up = LatencyModel(
            cfg.latency_to_hub_mean_ms, cfg.latency_to_hub_jitter_ms, seed=cfg.seed * 2
        )
        self._hub_now = None
        self._clock: VirtualClock | None = None
        self._outbox: asyncio.Queue = asyncio.Queue()
        self._missed_acks = 0
        self._writer: asyncio.StreamWriter | None = None
        self._capture_stop: asyncio.Event | None = None
        self._capture_tasks: list[asyncio.Task] = []
        self.hello_ack: HelloAck | None = None

    async def run(self) -> None:
        """Connect (with backoff) and serve until cancelled.

        Raises DeviceError after connect_attempts failures or on a
        registration refusal.
        """
        attempt = 0
        while True:
            try:
                await self._session()
                raise ConnectionError("hub closed the connection")
            except RegistrationError:
                raise
            except (ConnectionError, OSError, asyncio.TimeoutError) as exc:
                attempt += 1
                log.warning("%s: connection attempt %d failed: %s", self.cfg.device_id, attempt, exc)
                if attempt >= self.cfg.connect_attempts:
                    raise DeviceError(
                        f"{self.cfg.device_id}: giving up after {attempt} attempts: {exc}"
                    ) from exc
                await asyncio.sleep(self.cfg.backoff_s * attempt)

    # --- one connection -----------------------------------------------------

    async def _session(self) -> None:
        reader, writer = await asyncio.open_connection(self.host, self.port)
        self._writer = writer
        self._missed_acks = 0
        sender = asyncio.create_task(self._sender(writer))
        keepalive: asyncio.Task | None = None
        try:
            self._enqueue(Hello(PROTOCOL_VERSION, self.cfg.device_id,
                                self.cfg.kind, descriptor_for(self.cfg).streams))
            decoder = FrameDecoder()
            ack, leftovers = await asyncio.wait_for(
                self._await_ack(reader, decoder), timeout=10.0
            )
            self._setup_clocks(ack)
            keepalive = asyncio.create_task(self._keepalive())
            for msg in leftovers:  # frames that shared a segment with the ack
                await self._handle(msg)
            while True:
                data = await reader.read(65536)
                if not data:
                    raise ConnectionError("hub closed the connection")
                for msg in decoder.feed(data):
                    await self._handle(msg)
        finally:
            self._stop_capture()
            for task in (sender, keepalive, *self._capture_tasks):
                if task is not None:
                    task.cancel()
            self._capture_tasks.clear()
            writer.close()
            self._writer = None

    async def _await_ack(
        self, reader: asyncio.StreamReader, decoder: FrameDecoder
    ) -> tuple[HelloAck, list]:
        while True:
            data = await reader.read(65536)
            if not data:
                raise ConnectionError("hub closed during handshake")
            msgs = decoder.feed(data)
            if not msgs:
                continue
            first, rest = msgs[0], msgs[1:]
            if isinstance(first, HelloAck):
                self.hello_ack = first
                return first, rest
            if isinstance(first, ErrorMsg):
                raise RegistrationError(f"hub refused {first.code}: {first.detail}")
            raise DeviceError(f"expected hello_ack, got {type(first).__name__}")

    def _setup_clocks(self, ack: HelloAck) -> None:
        scale = self.cfg.time_scale
        if self.hub_clock is not None:
            self._hub_now = self.hub_clock.boot_ns
        else:
            # wall clocks are shared on one machine, so this anchor is exact
            # regardless of link latency
            def hub_now(boot0=ack.hub_boot_ns, wall0=ack.wall_ns, s=scale) -> int:
                return boot0 + int((time.time_ns() - wall0) * s)

            self._hub_now = hub_now
        self._clock = VirtualClock(
            true_offset_ns=self.cfg.true_offset_ns,
            drift_ppm=self.cfg.drift_ppm,
            origin="epoch2000" if self.cfg.kind == "chest_strap" else "boot",
            drift_ref_hub_ns=ack.hub_boot_ns,
            hub_unix_at_boot0_ns=ack.hub_unix_ns - ack.hub_boot_ns,
        )

    # --- messaging ------------------------------------------------------------

    def _enqueue(self, msg) -> None:
        delay_s = self._lat_up.sample_ms() / 1000.0 / self.cfg.time_scale
        self._outbox.put_nowait((asyncio.get_running_loop().time() + delay_s, msg))

    async def _sender(self, writer: asyncio.StreamWriter) -> None:
        loop = asyncio.get_running_loop()
        while True:
            departure, msg = await self._outbox.get()
            wait = departure - loop.time()
            if wait > 0:
                await asyncio.sleep(wait)
            writer.write(encode(msg))
            await writer.drain()

    async def _handle(self, msg) -> None:
        # inbound link delay; sleeping here keeps per-connection FIFO order
        delay_s = self._lat_down.sample_ms() / 1000.0 / self.cfg.time_scale
        if delay_s > 0:
            await asyncio.sleep(delay_s)
        if isinstance(msg, SyncPing):
            if msg.seq in self.cfg.drop_pong_seqs:
                return
            assert self._clock is not None and self._hub_now is not None
            t2 = self._clock.device_now(self._hub_now())
            self._enqueue(SyncPong(seq=msg.seq, t1_ns=msg.t1_ns, t2_ns=t2))
        elif isinstance(msg, StartCapture):
            self._start_capture(msg.session_id, msg.origin_boot_ns)
        elif isinstance(msg, StopCapture):
            self._stop_capture()
        elif isinstance(msg, KeepaliveAck):
            self._missed_acks = 0
        elif isinstance(msg, ErrorMsg):
            log.warning("%s: hub error %s: %s", self.cfg.device_id, msg.code, msg.detail)

    async def _keepalive(self) -> None:
        while True:
            await asyncio.sleep(self.cfg.keepalive_period_s)
            if self._missed_acks >= self.cfg.keepalive_misses:
                log.warning("%s: hub unresponsive, dropping link", self.cfg.device_id)
                if self._writer is not None:
                    self._writer.close()
                return
            self._missed_acks += 1
            self._enqueue(Keepalive())

    # --- capture ----------------------------------------------------------------

    def _start_capture(self, session_id: str, origin_boot_ns: int) -> None:
        if self._capture_stop is not None and not self._capture_stop.is_set():
            log.warning("%s: capture already running", self.cfg.device_id)
            return
        assert self._clock is not None and self._hub_now is not None
        self._capture_stop = asyncio.Event()
        start_hub_ns = origin_boot_ns
        # wall instant of the grid origin; delivery latency lands us past it
        wall_origin = (
            asyncio.get_running_loop().time()
            - (self._hub_now() - origin_boot_ns) / 1e9 / self.cfg.time_scale
        )
        cfg = self.cfg
        plans = [("hr", cfg.hr_rate_hz, cfg.hr_batch)]
        if cfg.kind == "watch":
            plans += [("acc", cfg.acc_rate_hz, cfg.motion_batch),
                      ("gyro", cfg.gyro_rate_hz, cfg.motion_batch)]
        else:
            plans += [("acc", cfg.acc_rate_hz, cfg.chest_acc_batch)]
        self._capture_tasks = [
            asyncio.create_task(
                self._stream_task(
                    session_id,
                    StreamCursor(
                        kind=cfg.kind,
                        stream=stream,
                        rate_hz=rate,
                        protocol=cfg.protocol,
                        hr_model=cfg.hr_model,
                        motion_model=cfg.motion_model,
                        seed=cfg.seed,
                        clock=self._clock,
                        capture_start_hub_ns=start_hub_ns,
                    ),
                    batch,
                    self._capture_stop,
                    wall_origin,
                )
            )
            for stream, rate, batch in plans
        ]
        log.info("%s: capture started for session %s", cfg.device_id, session_id)

    def _stop_capture(self) -> None:
        if self._capture_stop is not None:
            self._capture_stop.set()

    async def _stream_task(self, session_id: str, cursor: StreamCursor,
                           batch_n: int, stop: asyncio.Event, wall_origin: float) -> None:
        loop = asyncio.get_running_loop()
        start_hub_ns = cursor.capture_start_hub_ns
        while not cursor.exhausted and not stop.is_set():
            last_k = min(cursor._k + batch_n, cursor.sample_count) - 1
            due_wall = wall_origin + (
                (cursor.grid_hub_ns(last_k) - start_hub_ns) / 1e9 / self.cfg.time_scale
            )
            wait = due_wall - loop.time()
            if wait > 0:
                try:
                    await asyncio.wait_for(stop.wait(), timeout=wait)
                    return  # stopped before the batch came due; drop it
                except asyncio.TimeoutError:
                    pass
            items = cursor.take(batch_n)
            if items:
                self._enqueue(Samples(session_id=session_id, stream=cursor.stream,
                                      items=tuple(items)))


async def run_device(cfg: DeviceConfig, host: str, port: int, hub_clock=None) -> None:
    await SimDevice(cfg, host, port, hub_clock=hub_clock).run()
