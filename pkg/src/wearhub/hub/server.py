"""TCP device server: connection handling, timing handshake, liveness.

One handler task per connection; every state transition goes through the
SessionManager on the single event loop, so transitions stay serialized.
"""

from __future__ import annotations

import asyncio
import logging
import time

from ..config import HubConfig, SyncConfig
from ..protocol import (
    ErrorMsg,
    FrameDecoder,
    Hello,
    HelloAck,
    Keepalive,
    KeepaliveAck,
    ProtocolError,
    Samples,
    StartCapture,
    StopCapture,
    SyncPing,
    SyncPong,
    encode,
)
from ..timebase import Estimator, OffsetEstimate, SyncRound, aggregate_offset
from .state import RegistrationRefused, SessionManager

log = logging.getLogger(__name__)

HELLO_TIMEOUT_S = 5.0


async def run_sync(send, pongs: asyncio.Queue, clock, cfg: SyncConfig,
                   sleep=asyncio.sleep) -> OffsetEstimate | None:
    """One handshake: pings at the configured spacing, pongs collected as
    they arrive (t3 is stamped by the reader at receipt).

    Rounds with lost pongs or a mismatched seq/t1 echo are discarded;
    returns None when fewer than min_rounds survive.
    """
    pending: dict[int, int] = {}
    rounds: list[SyncRound] = []

    def match(pong: SyncPong, t3_ns: int) -> None:
        t1 = pending.pop(pong.seq, None)
        if t1 is None or t1 != pong.t1_ns:
            return
        rounds.append(SyncRound(seq=pong.seq, t1_ns=t1, t2_ns=pong.t2_ns, t3_ns=t3_ns))

    for seq in range(cfg.rounds):
        t1 = clock.boot_ns()
        pending[seq] = t1
        await send(SyncPing(seq=seq, t1_ns=t1))
        await sleep(cfg.spacing_s)
        while not pongs.empty():
            match(*pongs.get_nowait())
    deadline = time.monotonic() + cfg.tail_timeout_s
    while pending:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            break
        try:
            pong, t3 = await asyncio.wait_for(pongs.get(), remaining)
        except asyncio.TimeoutError:
            break
        match(pong, t3)
    if len(rounds) < cfg.min_rounds:
        return None
    return aggregate_offset(
        sorted(rounds, key=lambda r: r.seq),
        Estimator(cfg.estimator),
        min_rtt_filter=cfg.min_rtt_filter,
        rtt_filter_factor=cfg.rtt_filter_factor,
    )


class DeviceLink:
    def __init__(self, writer: asyncio.StreamWriter):
        self.writer = writer
        self.kind: str | None = None
        self.device_id: str | None = None
        self.pongs: asyncio.Queue = asyncio.Queue()
        self._send_lock = asyncio.Lock()

    async def send(self, msg) -> None:
        async with self._send_lock:
            self.writer.write(encode(msg))
            await self.writer.drain()

    def close(self) -> None:
        try:
            self.writer.close()
        except Exception:
            pass


class HubServer:
    """Accepts device connections and drives them against the manager."""

    def __init__(self, manager: SessionManager, clock, config: HubConfig | None = None):
        self.manager = manager
        self.clock = clock
        self.config = config or manager.config
        self.links: dict[str, DeviceLink] = {}
        self.tcp_port: int | None = None
        self._server: asyncio.AbstractServer | None = None
        self._tasks: set[asyncio.Task] = set()

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._handle, self.config.host, self.config.tcp_port
        )
        self.tcp_port = self._server.sockets[0].getsockname()[1]
        self._spawn(self._housekeeping())
        log.info("hub listening on %s:%d", self.config.host, self.tcp_port)

    async def stop(self) -> None:
        for task in list(self._tasks):
            task.cancel()
        for task in list(self._tasks):
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        for link in list(self.links.values()):
            link.close()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        self.manager.finalize_now()

    def _spawn(self, coro) -> asyncio.Task:
        task = asyncio.create_task(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)
        return task

    # --- session control (shared by the HTTP API and the demo driver) -------

    def create_session(self, title: str, description: str) -> dict:
        return self.manager.create_session(title, description)

    async def start_session(self, session_id: str) -> dict:
        meta = self.manager.start_session(session_id)
        await self._broadcast(
            StartCapture(session_id=session_id, origin_boot_ns=meta["start_boot_ns"])
        )
        return meta

    async def stop_session(self, session_id: str) -> dict:
        meta = self.manager.stop_session(session_id)
        await self._broadcast(StopCapture(session_id=session_id))
        return meta

    async def _broadcast(self, msg) -> None:
        for link in list(self.links.values()):
            try:
                await link.send(msg)
            except (ConnectionError, OSError):
                pass  # the reader side will notice and deregister

    # --- connection handling --------------------------------------------------

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        link = DeviceLink(writer)
        sync_task: asyncio.Task | None = None
        try:
            hello = await asyncio.wait_for(
                self._read_hello(reader), timeout=HELLO_TIMEOUT_S
            )
            try:
                descriptor = self.manager.register_device(hello)
            except RegistrationRefused as exc:
                log.warning("refusing %s: %s", hello.device_id, exc.detail)
                await link.send(ErrorMsg(code=exc.code, detail=exc.detail))
                return
            link.kind = descriptor.kind
            link.device_id = descriptor.device_id
            self.links[descriptor.kind] = link
            boot_ns, unix_ns = self.clock.readings()
            await link.send(
                HelloAck(
                    device_id=descriptor.device_id,
                    hub_boot_ns=boot_ns,
                    hub_unix_ns=unix_ns,
                    wall_ns=time.time_ns(),
                )
            )
            if descriptor.kind == "watch":
                sync_task = self._spawn(self._sync_loop(link))
            await self._read_loop(reader, link)
        except asyncio.TimeoutError:
            log.warning("connection dropped: no hello within %.0fs", HELLO_TIMEOUT_S)
        except ProtocolError as exc:
            log.warning("protocol error from %s: %s", link.device_id or "unknown", exc)
            try:
                await link.send(ErrorMsg(code="protocol_error", detail=str(exc)))
            except (ConnectionError, OSError):
                pass
        except (ConnectionError, OSError, asyncio.IncompleteReadError):
            pass
        finally:
            if sync_task is not None:
                sync_task.cancel()
            if link.kind is not None and self.links.get(link.kind) is link:
                del self.links[link.kind]
                self.manager.device_lost(link.kind)
            link.close()

    async def _read_hello(self, reader: asyncio.StreamReader) -> Hello:
        decoder = FrameDecoder()
        while True:
            data = await reader.read(65536)
            if not data:
                raise ConnectionError("peer closed before hello")
            msgs = decoder.feed(data)
            if msgs:
                first = msgs[0]
                if not isinstance(first, Hello) or len(msgs) > 1:
                    raise ProtocolError("expected a single hello first")
                return first

    async def _read_loop(self, reader: asyncio.StreamReader, link: DeviceLink) -> None:
        decoder = FrameDecoder()
        while True:
            data = await reader.read(65536)
            if not data:
                return
            for msg in decoder.feed(data):
                await self._dispatch(link, msg)

    async def _dispatch(self, link: DeviceLink, msg) -> None:
        kind = link.kind
        assert kind is not None
        self.manager.note_seen(kind)
        if isinstance(msg, SyncPong):
            link.pongs.put_nowait((msg, self.clock.boot_ns()))
        elif isinstance(msg, Samples):
            # stamped at decode completion, before any queueing
            self.manager.ingest(kind, msg, self.clock.boot_ns())
        elif isinstance(msg, Keepalive):
            await link.send(KeepaliveAck())
        elif isinstance(msg, ErrorMsg):
            log.warning("device %s reports error %s: %s", link.device_id, msg.code, msg.detail)
        elif isinstance(msg, Hello):
            raise ProtocolError("unexpected second hello")
        else:
            raise ProtocolError(f"device sent hub-bound-only message {type(msg).__name__}")

    async def _sync_loop(self, link: DeviceLink) -> None:
        cfg = self.config.sync
        while True:
            estimate = await run_sync(link.send, link.pongs, self.clock, cfg)
            if estimate is not None:
                self.manager.sync_succeeded("watch", estimate)
                log.info(
                    "watch synced: offset %d ns over %d rounds",
                    estimate.mean_offset_ns, len(estimate.rounds),
                )
                return
            self.manager.sync_failed(
                "watch", f"fewer than {cfg.min_rounds} rounds completed"
            )
            await asyncio.sleep(cfg.retry_delay_s)

    async def _housekeeping(self) -> None:
        period = max(0.05, self.config.keepalive_period_s / 2)
        while True:
            await asyncio.sleep(period)
            for kind in self.manager.check_liveness():
                link = self.links.get(kind)
                if link is not None:
                    link.close()
            self.manager.poll()
