"""Framed message protocol spoken between the hub and devices.

Each frame is a big-endian unsigned 32-bit payload length followed by one
UTF-8 JSON object.  Field order is fixed per message type so encoding is
byte-stable for identical input.  The codec is pure and stateless; a
FrameDecoder holds only the byte buffer of one connection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

PROTOCOL_VERSION = 1
MAX_PAYLOAD_BYTES = 1_048_576
HEADER_LEN = 4
MAX_BATCH_ITEMS = 100

KINDS = frozenset({"chest_strap", "watch"})
STREAMS = frozenset({"hr", "acc", "gyro"})
TIMEBASES = frozenset({"boot_nanos", "epoch2000_nanos", "none"})


class ProtocolError(Exception):
    """Base for every codec failure; connection handlers decide the fate."""


class FrameTooLarge(ProtocolError):
    pass


class PayloadNotText(ProtocolError):
    """Payload bytes are not valid UTF-8."""


class PayloadNotObject(ProtocolError):
    """Payload text is not a JSON object."""


class UnknownMessageType(ProtocolError):
    pass


class SchemaError(ProtocolError):
    """A known message type with a missing, extra, or ill-typed field."""


class EncodeError(ProtocolError):
    pass


# --- message types ----------------------------------------------------------

@dataclass(frozen=True)
class StreamSpec:
    stream: str
    rate_hz: float
    timebase: str


@dataclass(frozen=True)
class DeviceDescriptor:
    device_id: str
    kind: str
    streams: tuple[StreamSpec, ...]

    def stream_names(self) -> set[str]:
        return {s.stream for s in self.streams}


@dataclass(frozen=True)
class Hello:
    protocol_version: int
    device_id: str
    kind: str
    streams: tuple[StreamSpec, ...]

    def descriptor(self) -> DeviceDescriptor:
        return DeviceDescriptor(self.device_id, self.kind, self.streams)


@dataclass(frozen=True)
class HelloAck:
    """Registration confirmation carrying the hub's current clock readings.

    wall_ns is the hub's raw wall clock; simulators use the triple to
    anchor their virtual clocks to the hub time base.
    """

    device_id: str
    hub_boot_ns: int
    hub_unix_ns: int
    wall_ns: int


@dataclass(frozen=True)
class SyncPing:
    seq: int
    t1_ns: int


@dataclass(frozen=True)
class SyncPong:
    seq: int
    t1_ns: int  # echo of the ping's t1
    t2_ns: int


@dataclass(frozen=True)
class StartCapture:
    """Capture command carrying the hub-time origin of the sampling grid.

    Every device anchors its sample schedule at origin_boot_ns, so streams
    share one grid regardless of per-device delivery latency and emitted
    payloads are deterministic.
    """

    session_id: str
    origin_boot_ns: int


@dataclass(frozen=True)
class StopCapture:
    session_id: str


@dataclass(frozen=True)
class HrItem:
    ts_ns: int | None  # null for chest-strap HR; the hub stamps arrival
    bpm: int


@dataclass(frozen=True)
class MotionItem:
    ts_ns: int
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Samples:
    session_id: str
    stream: str
    items: tuple[HrItem | MotionItem, ...]


@dataclass(frozen=True)
class Keepalive:
    pass


@dataclass(frozen=True)
class KeepaliveAck:
    pass


@dataclass(frozen=True)
class ErrorMsg:
    code: str
    detail: str


WireMessage = (
    Hello
    | HelloAck
    | SyncPing
    | SyncPong
    | StartCapture
    | StopCapture
    | Samples
    | Keepalive
    | KeepaliveAck
    | ErrorMsg
)

_TAGS: dict[type, str] = {
    Hello: "hello",
    HelloAck: "hello_ack",
    SyncPing: "sync_ping",
    SyncPong: "sync_pong",
    StartCapture: "start_capture",
    StopCapture: "stop_capture",
    Samples: "samples",
    Keepalive: "keepalive",
    KeepaliveAck: "keepalive_ack",
    ErrorMsg: "error",
}


# --- encoding ---------------------------------------------------------------

def _stream_spec_body(spec: StreamSpec) -> dict:
    return {"stream": spec.stream, "rate_hz": spec.rate_hz, "timebase": spec.timebase}


def _item_body(stream: str, item: HrItem | MotionItem) -> dict:
    if stream == "hr":
        if not isinstance(item, HrItem):
            raise EncodeError("hr stream carries HrItem entries only")
        return {"ts_ns": item.ts_ns, "bpm": item.bpm}
    if not isinstance(item, MotionItem):
        raise EncodeError(f"{stream} stream carries MotionItem entries only")
    return {"ts_ns": item.ts_ns, "x": item.x, "y": item.y, "z": item.z}


def message_body(msg: WireMessage) -> dict:
    """The wire object for msg, keys in canonical order."""
    tag = _TAGS.get(type(msg))
    if tag is None:
        raise EncodeError(f"not a wire message: {type(msg).__name__}")
    body: dict = {"type": tag}
    if isinstance(msg, Hello):
        body.update(
            protocol_version=msg.protocol_version,
            device_id=msg.device_id,
            kind=msg.kind,
            streams=[_stream_spec_body(s) for s in msg.streams],
        )
    elif isinstance(msg, HelloAck):
        body.update(
            device_id=msg.device_id,
            hub_boot_ns=msg.hub_boot_ns,
            hub_unix_ns=msg.hub_unix_ns,
            wall_ns=msg.wall_ns,
        )
    elif isinstance(msg, SyncPing):
        body.update(seq=msg.seq, t1_ns=msg.t1_ns)
    elif isinstance(msg, SyncPong):
        body.update(seq=msg.seq, t1_ns=msg.t1_ns, t2_ns=msg.t2_ns)
    elif isinstance(msg, StartCapture):
        body.update(session_id=msg.session_id, origin_boot_ns=msg.origin_boot_ns)
    elif isinstance(msg, StopCapture):
        body.update(session_id=msg.session_id)
    elif isinstance(msg, Samples):
        if len(msg.items) > MAX_BATCH_ITEMS:
            raise EncodeError(f"batch of {len(msg.items)} exceeds {MAX_BATCH_ITEMS} items")
        body.update(
            session_id=msg.session_id,
            stream=msg.stream,
            items=[_item_body(msg.stream, it) for it in msg.items],
        )
    elif isinstance(msg, ErrorMsg):
        body.update(code=msg.code, detail=msg.detail)
    # keepalive and keepalive_ack carry no fields
    return body


def encode(msg: WireMessage) -> bytes:
    """One frame: length prefix plus canonical JSON payload."""
    try:
        payload = json.dumps(
            message_body(msg), separators=(",", ":"), ensure_ascii=False, allow_nan=False
        ).encode("utf-8")
    except ValueError as exc:
        raise EncodeError(f"payload not JSON-serializable: {exc}") from exc
    if len(payload) > MAX_PAYLOAD_BYTES:
        raise EncodeError(f"payload of {len(payload)} bytes exceeds frame limit")
    return len(payload).to_bytes(HEADER_LEN, "big") + payload


# --- decoding ---------------------------------------------------------------

def _want(obj: dict, key: str):
    if key not in obj:
        raise SchemaError(f"missing field: {key}")
    return obj[key]


def _want_int(obj: dict, key: str) -> int:
    v = _want(obj, key)
    if not isinstance(v, int) or isinstance(v, bool):
        raise SchemaError(f"field {key} must be an integer")
    return v


def _want_str(obj: dict, key: str, allowed: frozenset | None = None) -> str:
    v = _want(obj, key)
    if not isinstance(v, str):
        raise SchemaError(f"field {key} must be a string")
    if allowed is not None and v not in allowed:
        raise SchemaError(f"field {key} has unknown value {v!r}")
    return v


def _want_float(obj: dict, key: str) -> float:
    v = _want(obj, key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"field {key} must be a number")
    return float(v)


def _check_keys(obj: dict, allowed: set[str]) -> None:
    extra = set(obj) - allowed - {"type"}
    if extra:
        raise SchemaError(f"unexpected fields: {sorted(extra)}")


def _decode_stream_spec(raw) -> StreamSpec:
    if not isinstance(raw, dict):
        raise SchemaError("stream spec must be an object")
    _check_keys(raw, {"stream", "rate_hz", "timebase"})
    return StreamSpec(
        stream=_want_str(raw, "stream", STREAMS),
        rate_hz=_want_float(raw, "rate_hz"),
        timebase=_want_str(raw, "timebase", TIMEBASES),
    )


def _decode_item(stream: str, raw) -> HrItem | MotionItem:
    if not isinstance(raw, dict):
        raise SchemaError("sample item must be an object")
    if stream == "hr":
        _check_keys(raw, {"ts_ns", "bpm"})
        ts = _want(raw, "ts_ns")
        if ts is not None and (not isinstance(ts, int) or isinstance(ts, bool)):
            raise SchemaError("field ts_ns must be an integer or null")
        bpm = _want_int(raw, "bpm")
        if bpm < 0:
            raise SchemaError("field bpm must be non-negative")
        return HrItem(ts_ns=ts, bpm=bpm)
    _check_keys(raw, {"ts_ns", "x", "y", "z"})
    return MotionItem(
        ts_ns=_want_int(raw, "ts_ns"),
        x=_want_float(raw, "x"),
        y=_want_float(raw, "y"),
        z=_want_float(raw, "z"),
    )


def decode_payload(payload: bytes) -> WireMessage:
    """One frame payload -> message; raises a ProtocolError subclass."""
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise PayloadNotText(str(exc)) from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PayloadNotObject(f"payload is not JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise PayloadNotObject("payload must be a JSON object")
    tag = _want_str(obj, "type")

    if tag == "hello":
        _check_keys(obj, {"protocol_version", "device_id", "kind", "streams"})
        raw_streams = _want(obj, "streams")
        if not isinstance(raw_streams, list):
            raise SchemaError("field streams must be an array")
        return Hello(
            protocol_version=_want_int(obj, "protocol_version"),
            device_id=_want_str(obj, "device_id"),
            kind=_want_str(obj, "kind", KINDS),
            streams=tuple(_decode_stream_spec(s) for s in raw_streams),
        )
    if tag == "hello_ack":
        _check_keys(obj, {"device_id", "hub_boot_ns", "hub_unix_ns", "wall_ns"})
        return HelloAck(
            device_id=_want_str(obj, "device_id"),
            hub_boot_ns=_want_int(obj, "hub_boot_ns"),
            hub_unix_ns=_want_int(obj, "hub_unix_ns"),
            wall_ns=_want_int(obj, "wall_ns"),
        )
    if tag == "sync_ping":
        _check_keys(obj, {"seq", "t1_ns"})
        return SyncPing(seq=_want_int(obj, "seq"), t1_ns=_want_int(obj, "t1_ns"))
    if tag == "sync_pong":
        _check_keys(obj, {"seq", "t1_ns", "t2_ns"})
        return SyncPong(
            seq=_want_int(obj, "seq"),
            t1_ns=_want_int(obj, "t1_ns"),
            t2_ns=_want_int(obj, "t2_ns"),
        )
    if tag == "start_capture":
        _check_keys(obj, {"session_id", "origin_boot_ns"})
        return StartCapture(
            session_id=_want_str(obj, "session_id"),
            origin_boot_ns=_want_int(obj, "origin_boot_ns"),
        )
    if tag == "stop_capture":
        _check_keys(obj, {"session_id"})
        return StopCapture(session_id=_want_str(obj, "session_id"))
    if tag == "samples":
        _check_keys(obj, {"session_id", "stream", "items"})
        stream = _want_str(obj, "stream", STREAMS)
        raw_items = _want(obj, "items")
        if not isinstance(raw_items, list):
            raise SchemaError("field items must be an array")
        if len(raw_items) > MAX_BATCH_ITEMS:
            raise SchemaError(f"batch of {len(raw_items)} exceeds {MAX_BATCH_ITEMS} items")
        return Samples(
            session_id=_want_str(obj, "session_id"),
            stream=stream,
            items=tuple(_decode_item(stream, it) for it in raw_items),
        )
    if tag == "keepalive":
        _check_keys(obj, set())
        return Keepalive()
    if tag == "keepalive_ack":
        _check_keys(obj, set())
        return KeepaliveAck()
    if tag == "error":
        _check_keys(obj, {"code", "detail"})
        return ErrorMsg(code=_want_str(obj, "code"), detail=_want_str(obj, "detail"))
    raise UnknownMessageType(f"unknown message type {tag!r}")


def try_decode_frame(buf) -> tuple[WireMessage, int] | None:
    """Decode one frame off the head of buf.

    Returns (message, bytes consumed), or None when more bytes are needed.
    Oversize length prefixes are rejected before the payload arrives.
    """
    if len(buf) < HEADER_LEN:
        return None
    length = int.from_bytes(buf[:HEADER_LEN], "big")
    if length > MAX_PAYLOAD_BYTES:
        raise FrameTooLarge(f"frame of {length} bytes exceeds {MAX_PAYLOAD_BYTES}")
    end = HEADER_LEN + length
    if len(buf) < end:
        return None
    return decode_payload(bytes(buf[HEADER_LEN:end])), end


class FrameDecoder:
    """Incremental per-connection decoder; buffers partial frames.

    After a ProtocolError the buffer contents are undefined; handlers are
    expected to drop the connection.
    """

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buf += data
        out: list[WireMessage] = []
        while True:
            result = try_decode_frame(self._buf)
            if result is None:
                return out
            msg, consumed = result
            del self._buf[:consumed]
            out.append(msg)

    @property
    def pending_bytes(self) -> int:
        return len(self._buf)
