"""Session lifecycle, device registry, and ingest bookkeeping.

SessionManager is the single source of truth for hub state.  All methods
are synchronous and must be called from one owner (the hub event loop),
which serializes every transition; nothing here blocks beyond store
appends.  Timing inputs are injected (clock for timestamps, wall for
liveness and the stop grace window) so the state machine is fully
model-testable.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

from ..config import UNITS, HubConfig
from ..protocol import PROTOCOL_VERSION, DeviceDescriptor, Hello, HrItem, MotionItem, Samples
from ..store import SessionClosed, Store, UnknownSession
from ..timebase import (
    OffsetEstimate,
    TimeAnchor,
    boot_to_unix_ms,
    epoch2000_to_unix_ns,
    rebase,
)

log = logging.getLogger(__name__)

# link states
DISCONNECTED = "disconnected"
CONNECTED = "connected"
SYNCED = "synced"

# hub states
IDLE = "idle"
READY = "ready"
RECORDING = "recording"

_EXPECTED_STREAMS = {
    "chest_strap": {("hr", "none"), ("acc", "epoch2000_nanos")},
    "watch": {("hr", "boot_nanos"), ("acc", "boot_nanos"), ("gyro", "boot_nanos")},
}


class HubError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


class RegistrationRefused(HubError):
    pass


class NotReady(HubError):
    pass


class BadState(HubError):
    pass


@dataclass
class LinkInfo:
    descriptor: DeviceDescriptor
    state: str = CONNECTED
    estimate: OffsetEstimate | None = None
    last_seen_wall: float = 0.0
    sync_error: str | None = None


@dataclass
class StreamCounters:
    received: int = 0
    stored: int = 0
    rejected: int = 0
    dropped: int = 0

    def as_dict(self) -> dict:
        return {
            "received": self.received,
            "stored": self.stored,
            "rejected": self.rejected,
            "dropped": self.dropped,
        }


@dataclass
class IngestOutcome:
    stream: str | None
    stored: int = 0
    rejected: int = 0
    dropped: int = 0


def storage_stream(kind: str, stream: str) -> str | None:
    """Map (device kind, wire stream) to the storage stream, if any."""
    if kind == "chest_strap" and stream in ("hr", "acc"):
        return f"chest_{stream}"
    if kind == "watch" and stream in ("hr", "acc", "gyro"):
        return f"watch_{stream}"
    return None


class SessionManager:
    def __init__(self, store: Store, clock, config: HubConfig | None = None,
                 wall=time.monotonic):
        self.store = store
        self.clock = clock
        self.config = config or HubConfig()
        self.wall = wall
        self.links: dict[str, LinkInfo] = {}
        self.link_events: list[tuple[float, str, str, str]] = []
        self.counters: dict[str, StreamCounters] = {}
        self.extra_config: dict = {}  # simulator ground truth etc., recorded per session

        self.state = IDLE
        self.current_id: str | None = None
        self._start_anchor: TimeAnchor | None = None
        self._frozen_estimate: OffsetEstimate | None = None
        self._grace: tuple[str, float] | None = None  # (session id, wall deadline)
        self.last_stopped_id: str | None = None
        self._last_duration_ms: int | None = None
        self._latest_bpm: dict[str, int | None] = {"chest_strap": None, "watch": None}

    # --- device registry ----------------------------------------------------

    def register_device(self, hello: Hello) -> DeviceDescriptor:
        if hello.protocol_version != PROTOCOL_VERSION:
            raise RegistrationRefused(
                "version_mismatch",
                f"protocol version {hello.protocol_version} unsupported, need {PROTOCOL_VERSION}",
            )
        kind = hello.kind
        existing = self.links.get(kind)
        if existing is not None and existing.state != DISCONNECTED:
            raise RegistrationRefused(
                "duplicate_kind", f"a {kind} device is already connected"
            )
        advertised = {(s.stream, s.timebase) for s in hello.streams}
        if advertised != _EXPECTED_STREAMS[kind]:
            raise RegistrationRefused(
                "bad_descriptor",
                f"{kind} must advertise exactly {sorted(_EXPECTED_STREAMS[kind])}",
            )
        descriptor = hello.descriptor()
        link = LinkInfo(descriptor=descriptor, last_seen_wall=self.wall())
        self.links[kind] = link
        self._link_event(kind, DISCONNECTED, CONNECTED)
        if kind == "chest_strap":
            # epoch-2000 stamps convert by constant; no handshake needed
            link.state = SYNCED
            self._link_event(kind, CONNECTED, SYNCED)
        return descriptor

    def device_lost(self, kind: str) -> None:
        link = self.links.get(kind)
        if link is None or link.state == DISCONNECTED:
            return
        self._link_event(kind, link.state, DISCONNECTED)
        link.state = DISCONNECTED

    def sync_succeeded(self, kind: str, estimate: OffsetEstimate) -> None:
        link = self.links.get(kind)
        if link is None or link.state == DISCONNECTED:
            return
        old = link.state
        link.estimate = estimate
        link.sync_error = None
        link.state = SYNCED
        if old != SYNCED:
            self._link_event(kind, old, SYNCED)

    def sync_failed(self, kind: str, detail: str) -> None:
        link = self.links.get(kind)
        if link is None or link.state == DISCONNECTED:
            return
        link.sync_error = detail
        log.warning("sync failed for %s: %s", kind, detail)

    def note_seen(self, kind: str) -> None:
        link = self.links.get(kind)
        if link is not None:
            link.last_seen_wall = self.wall()

    def check_liveness(self, now_wall: float | None = None) -> list[str]:
        """Mark links silent for keepalive_misses periods as disconnected."""
        now = self.wall() if now_wall is None else now_wall
        limit = self.config.keepalive_misses * self.config.keepalive_period_s
        lost = []
        for kind, link in self.links.items():
            if link.state != DISCONNECTED and now - link.last_seen_wall > limit:
                self.device_lost(kind)
                lost.append(kind)
        return lost

    def _link_event(self, kind: str, old: str, new: str) -> None:
        self.link_events.append((self.wall(), kind, old, new))
        log.info("link %s: %s -> %s", kind, old, new)

    # --- session lifecycle ----------------------------------------------------

    def create_session(self, title: str, description: str) -> dict:
        self.poll()
        if self.state == RECORDING:
            raise BadState("recording", "a session is being recorded; stop it first")
        if self.state == READY and self.current_id is not None:
            # an unstarted session holds no data; the new one supersedes it
            self.store.delete_session(self.current_id)
        sid = self.store.create_session(title, description, self.clock.unix_ms())
        self.state = READY
        self.current_id = sid
        return self.store.get_session(sid)

    def start_session(self, session_id: str) -> dict:
        self.poll()
        if self.state != READY or session_id != self.current_id:
            raise BadState(
                "not_pending",
                f"session {session_id} is not the pending session",
            )
        missing = [
            kind
            for kind in ("chest_strap", "watch")
            if self.links.get(kind) is None or self.links[kind].state != SYNCED
        ]
        if missing:
            raise NotReady(
                "devices_not_ready",
                "cannot start: " + ", ".join(f"{k} not synced" for k in missing),
            )
        estimate = self.links["watch"].estimate
        assert estimate is not None  # SYNCED watch always carries one
        anchor = self.clock.anchor()
        self.store.set_started(
            session_id,
            anchor,
            mean_offset_ns=estimate.mean_offset_ns,
            sync_rounds_used=len(estimate.rounds),
            estimator=estimate.estimator.value,
            config_text=json.dumps(self._session_config(estimate), sort_keys=True),
        )
        self.state = RECORDING
        self._start_anchor = anchor
        self._frozen_estimate = estimate
        self.counters = {}
        log.info("session %s recording (offset %d ns over %d rounds)",
                 session_id, estimate.mean_offset_ns, len(estimate.rounds))
        return self.store.get_session(session_id)

    def stop_session(self, session_id: str) -> dict:
        if self.state != RECORDING or session_id != self.current_id:
            raise BadState("not_recording", f"session {session_id} is not recording")
        end_anchor = self.clock.anchor()
        self.store.set_stopping(session_id, end_anchor)
        assert self._start_anchor is not None
        self._last_duration_ms = end_anchor.unix_ms - self._start_anchor.unix_ms
        self.state = IDLE
        self.current_id = None
        self.last_stopped_id = session_id
        self._grace = (session_id, self.wall() + self.config.grace_s)
        log.info("session %s stopping; %.1fs grace window", session_id, self.config.grace_s)
        return self.store.get_session(session_id)

    def poll(self, now_wall: float | None = None) -> None:
        """Finalize the last stopped session once its grace window passes."""
        if self._grace is None:
            return
        now = self.wall() if now_wall is None else now_wall
        sid, deadline = self._grace
        if now >= deadline:
            self.store.finalize(sid)
            self._grace = None
            log.info("session %s finalized", sid)

    def finalize_now(self) -> None:
        """Close the grace window immediately (shutdown/tests)."""
        if self._grace is not None:
            self.store.finalize(self._grace[0])
            self._grace = None

    def _session_config(self, estimate: OffsetEstimate) -> dict:
        sync_cfg = self.config.sync
        return {
            "estimator": estimate.estimator.value,
            "time_scale": getattr(self.clock, "scale", 1.0),
            "sync": {
                "rounds": sync_cfg.rounds,
                "spacing_s": sync_cfg.spacing_s,
                "min_rounds": sync_cfg.min_rounds,
                "min_rtt_filter": sync_cfg.min_rtt_filter,
                "rounds_used": len(estimate.rounds),
                "accepted_rounds": [
                    {"seq": r.seq, "t1_ns": r.t1_ns, "t2_ns": r.t2_ns, "t3_ns": r.t3_ns}
                    for r in estimate.rounds
                ],
            },
            "devices": {
                kind: {
                    "device_id": link.descriptor.device_id,
                    "streams": [
                        {"stream": s.stream, "rate_hz": s.rate_hz, "timebase": s.timebase}
                        for s in link.descriptor.streams
                    ],
                }
                for kind, link in self.links.items()
                if link.state != DISCONNECTED
            },
            "units": UNITS,
            **self.extra_config,
        }

    # --- ingest ----------------------------------------------------------------

    def ingest(self, kind: str, msg: Samples, arrival_boot_ns: int) -> IngestOutcome:
        self.poll()
        stream = storage_stream(kind, msg.stream)
        if stream is None:
            out = IngestOutcome(stream=None, dropped=len(msg.items))
            self._count(f"{kind}/{msg.stream}", received=len(msg.items), dropped=len(msg.items))
            log.warning("dropping %d items on unknown stream %s/%s", len(msg.items), kind, msg.stream)
            return out
        self._count(stream, received=len(msg.items))

        live = self.state == RECORDING and msg.session_id == self.current_id
        in_grace = (
            self._grace is not None
            and msg.session_id == self._grace[0]
            and self.wall() <= self._grace[1]
        )
        if not live and not in_grace:
            self._count(stream, dropped=len(msg.items))
            log.warning(
                "dropping %d %s items outside recording (session %r)",
                len(msg.items), stream, msg.session_id,
            )
            return IngestOutcome(stream=stream, dropped=len(msg.items))

        rows, rejected = self._build_rows(stream, msg.items, arrival_boot_ns)
        stored = 0
        if rows:
            try:
                stored, bad = self.store.append_filtering(msg.session_id, stream, rows)
                rejected += bad
            except (SessionClosed, UnknownSession):
                # grace raced the finalizer; everything counts as dropped
                self._count(stream, dropped=len(rows))
                return IngestOutcome(stream=stream, dropped=len(rows), rejected=rejected)
        self._count(stream, stored=stored, rejected=rejected)
        if stored and stream in ("chest_hr", "watch_hr"):
            last_bpm = next(
                (it.bpm for it in reversed(msg.items) if isinstance(it, HrItem)), None
            )
            if last_bpm is not None:
                self._latest_bpm[kind] = last_bpm
        return IngestOutcome(stream=stream, stored=stored, rejected=rejected)

    def _build_rows(
        self, stream: str, items: tuple, arrival_boot_ns: int
    ) -> tuple[list[tuple], int]:
        anchor = self._start_anchor
        assert anchor is not None
        estimate = self._frozen_estimate
        rows: list[tuple] = []
        rejected = 0
        for item in items:
            try:
                if stream == "chest_hr":
                    if not isinstance(item, HrItem) or item.ts_ns is not None:
                        raise ValueError("chest HR items carry no device timestamp")
                    rows.append(
                        (arrival_boot_ns, boot_to_unix_ms(arrival_boot_ns, anchor), item.bpm)
                    )
                elif stream == "watch_hr":
                    if not isinstance(item, HrItem) or item.ts_ns is None:
                        raise ValueError("watch HR items need a device timestamp")
                    assert estimate is not None
                    rows.append((item.ts_ns, rebase(item.ts_ns, estimate), item.bpm))
                elif stream == "chest_acc":
                    if not isinstance(item, MotionItem):
                        raise ValueError("acc items must be motion samples")
                    rows.append(
                        (item.ts_ns, epoch2000_to_unix_ns(item.ts_ns), item.x, item.y, item.z)
                    )
                else:  # watch_acc / watch_gyro
                    if not isinstance(item, MotionItem):
                        raise ValueError("motion items must be motion samples")
                    assert estimate is not None
                    rows.append(
                        (item.ts_ns, rebase(item.ts_ns, estimate), item.x, item.y, item.z)
                    )
            except (ValueError, OverflowError) as exc:
                rejected += 1
                log.warning("rejecting %s item: %s", stream, exc)
        return rows, rejected

    def _count(self, stream: str, received: int = 0, stored: int = 0,
               rejected: int = 0, dropped: int = 0) -> None:
        c = self.counters.setdefault(stream, StreamCounters())
        c.received += received
        c.stored += stored
        c.rejected += rejected
        c.dropped += dropped

    # --- status ----------------------------------------------------------------

    def status(self) -> dict:
        self.poll()
        elapsed_ms = 0
        if self.state == RECORDING and self._start_anchor is not None:
            elapsed_ms = (self.clock.boot_ns() - self._start_anchor.boot_ns) // 1_000_000
        elif self._last_duration_ms is not None:
            elapsed_ms = self._last_duration_ms
        links = {}
        for kind in ("chest_strap", "watch"):
            link = self.links.get(kind)
            if link is None:
                links[kind] = {"state": DISCONNECTED, "device_id": None, "sync_error": None}
            else:
                links[kind] = {
                    "state": link.state,
                    "device_id": link.descriptor.device_id,
                    "sync_error": link.sync_error,
                }
        watch_bpm = self._latest_bpm["watch"]
        return {
            "state": self.state,
            "session_id": self.current_id,
            "elapsed_ms": elapsed_ms,
            "ready_to_start": all(
                self.links.get(k) is not None and self.links[k].state == SYNCED
                for k in ("chest_strap", "watch")
            ),
            "links": links,
            "chest_bpm": self._latest_bpm["chest_strap"],
            "watch_bpm": watch_bpm,
            # zero bpm means poor signal quality, never a link failure
            "watch_bpm_quality": None if watch_bpm is None else ("low" if watch_bpm == 0 else "ok"),
            "last_stopped_session_id": self.last_stopped_id,
        }

    def counters_snapshot(self) -> dict[str, dict]:
        return {stream: c.as_dict() for stream, c in sorted(self.counters.items())}
