"""Codec tests: round-trips, stream re-segmentation, and decoder fuzzing."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearhub import protocol as wp


# --- strategies -------------------------------------------------------------

ids = st.text(min_size=1, max_size=20)
ts = st.integers(-(2**62), 2**62)
finite_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)

stream_specs = st.builds(
    wp.StreamSpec,
    stream=st.sampled_from(sorted(wp.STREAMS)),
    rate_hz=st.floats(0.1, 1000, allow_nan=False),
    timebase=st.sampled_from(sorted(wp.TIMEBASES)),
)

hr_items = st.builds(
    wp.HrItem, ts_ns=st.one_of(st.none(), ts), bpm=st.integers(0, 250)
)
motion_items = st.builds(wp.MotionItem, ts_ns=ts, x=finite_floats, y=finite_floats, z=finite_floats)


def samples_msgs():
    hr = st.builds(
        wp.Samples,
        session_id=ids,
        stream=st.just("hr"),
        items=st.lists(hr_items, max_size=10).map(tuple),
    )
    motion = st.builds(
        wp.Samples,
        session_id=ids,
        stream=st.sampled_from(["acc", "gyro"]),
        items=st.lists(motion_items, max_size=10).map(tuple),
    )
    return st.one_of(hr, motion)


messages = st.one_of(
    st.builds(
        wp.Hello,
        protocol_version=st.integers(0, 5),
        device_id=ids,
        kind=st.sampled_from(sorted(wp.KINDS)),
        streams=st.lists(stream_specs, max_size=4).map(tuple),
    ),
    st.builds(wp.HelloAck, device_id=ids, hub_boot_ns=ts, hub_unix_ns=ts, wall_ns=ts),
    st.builds(wp.SyncPing, seq=st.integers(0, 10**6), t1_ns=ts),
    st.builds(wp.SyncPong, seq=st.integers(0, 10**6), t1_ns=ts, t2_ns=ts),
    st.builds(wp.StartCapture, session_id=ids, origin_boot_ns=ts),
    st.builds(wp.StopCapture, session_id=ids),
    samples_msgs(),
    st.just(wp.Keepalive()),
    st.just(wp.KeepaliveAck()),
    st.builds(wp.ErrorMsg, code=ids, detail=st.text(max_size=50)),
)


# --- round-trip -------------------------------------------------------------

@settings(max_examples=300)
@given(messages)
def test_roundtrip_identity(msg):
    frame = wp.encode(msg)
    decoded, consumed = wp.try_decode_frame(frame)
    assert consumed == len(frame)
    assert decoded == msg


@given(messages)
def test_encode_is_byte_stable(msg):
    assert wp.encode(msg) == wp.encode(msg)


def test_keepalive_exact_bytes():
    frame = wp.encode(wp.Keepalive())
    assert frame[4:] == b'{"type":"keepalive"}'
    assert frame[:4] == (20).to_bytes(4, "big")


def test_sync_ping_roundtrip():
    msg = wp.SyncPing(seq=0, t1_ns=100)
    assert wp.try_decode_frame(wp.encode(msg))[0] == msg


def test_empty_samples_batch_is_valid():
    msg = wp.Samples(session_id="s", stream="hr", items=())
    decoded, _ = wp.try_decode_frame(wp.encode(msg))
    assert decoded.items == ()


def test_oversize_batch_rejected_both_ways():
    items = tuple(wp.HrItem(ts_ns=None, bpm=60) for _ in range(101))
    with pytest.raises(wp.EncodeError):
        wp.encode(wp.Samples(session_id="s", stream="hr", items=items))
    payload = json.dumps(
        {
            "type": "samples",
            "session_id": "s",
            "stream": "hr",
            "items": [{"ts_ns": None, "bpm": 60}] * 101,
        }
    ).encode()
    with pytest.raises(wp.SchemaError):
        wp.decode_payload(payload)


def test_oversize_payload_rejected():
    msg = wp.ErrorMsg(code="x", detail="y" * (wp.MAX_PAYLOAD_BYTES + 10))
    with pytest.raises(wp.EncodeError):
        wp.encode(msg)


# --- error taxonomy ---------------------------------------------------------

def frame_of(payload: bytes) -> bytes:
    return len(payload).to_bytes(4, "big") + payload


def test_truncated_frame_needs_more_bytes():
    frame = wp.encode(wp.Keepalive())
    assert wp.try_decode_frame(frame[:2]) is None
    assert wp.try_decode_frame(frame[:10]) is None


def test_unknown_type_rejected():
    with pytest.raises(wp.UnknownMessageType):
        wp.decode_payload(b'{"type":"bogus"}')


def test_invalid_utf8_rejected():
    with pytest.raises(wp.PayloadNotText):
        wp.decode_payload(b'\xff\xfe{"type":"keepalive"}')


def test_non_json_rejected():
    with pytest.raises(wp.PayloadNotObject):
        wp.decode_payload(b"not json at all")
    with pytest.raises(wp.PayloadNotObject):
        wp.decode_payload(b"[1,2,3]")


def test_missing_field_rejected():
    with pytest.raises(wp.SchemaError, match="t1_ns"):
        wp.decode_payload(b'{"type":"sync_ping","seq":0}')


def test_extra_field_rejected():
    with pytest.raises(wp.SchemaError, match="unexpected"):
        wp.decode_payload(b'{"type":"keepalive","x":1}')


def test_ill_typed_field_rejected():
    with pytest.raises(wp.SchemaError):
        wp.decode_payload(b'{"type":"sync_ping","seq":"zero","t1_ns":1}')
    with pytest.raises(wp.SchemaError):
        wp.decode_payload(b'{"type":"sync_ping","seq":true,"t1_ns":1}')


def test_negative_bpm_rejected():
    payload = b'{"type":"samples","session_id":"s","stream":"hr","items":[{"ts_ns":null,"bpm":-1}]}'
    with pytest.raises(wp.SchemaError):
        wp.decode_payload(payload)


def test_oversize_length_prefix_rejected_early():
    header = (wp.MAX_PAYLOAD_BYTES + 1).to_bytes(4, "big")
    with pytest.raises(wp.FrameTooLarge):
        wp.try_decode_frame(header)  # no payload bytes needed to reject


# --- streaming decoder ------------------------------------------------------

def transcript_messages():
    specs = (
        wp.StreamSpec("hr", 1.0, "boot_nanos"),
        wp.StreamSpec("acc", 50.0, "boot_nanos"),
        wp.StreamSpec("gyro", 50.0, "boot_nanos"),
    )
    msgs = [wp.Hello(1, "watch-1", "watch", specs)]
    msgsto = [wp.HelloAck("watch-1", 10, 1_700_000_000_000_000_000, 5)]
    for seq in range(4):
        msgs.append(wp.SyncPong(seq=seq, t1_ns=seq * 100, t2_ns=seq * 100 - 42))
        msgsto.append(wp.SyncPing(seq=seq, t1_ns=seq * 100))
    msgs.append(wp.Keepalive())
    msgs.append(wp.StartCapture(session_id="sess", origin_boot_ns=12_345))
    for k in range(6):
        msgs.append(
            wp.Samples(
                session_id="sess",
                stream="acc",
                items=tuple(
                    wp.MotionItem(ts_ns=k * 100 + i, x=0.25 * i, y=-1.5, z=9.81)
                    for i in range(5)
                ),
            )
        )
        msgs.append(
            wp.Samples(session_id="sess", stream="hr", items=(wp.HrItem(k, 70 + k),))
        )
    msgs.append(wp.ErrorMsg("oops", "detail"))
    return msgs


def test_resegmentation_equivalence():
    msgs = transcript_messages()
    stream = b"".join(wp.encode(m) for m in msgs)
    rng = random.Random(7)
    for _ in range(300):
        cuts = sorted(rng.randrange(len(stream) + 1) for _ in range(rng.randrange(1, 30)))
        chunks, prev = [], 0
        for c in cuts + [len(stream)]:
            chunks.append(stream[prev:c])
            prev = c
        dec = wp.FrameDecoder()
        out = []
        for chunk in chunks:
            out.extend(dec.feed(chunk))
        assert out == msgs
        assert dec.pending_bytes == 0


def test_byte_at_a_time_feed():
    msgs = transcript_messages()
    stream = b"".join(wp.encode(m) for m in msgs)
    dec = wp.FrameDecoder()
    out = []
    for i in range(len(stream)):
        out.extend(dec.feed(stream[i : i + 1]))
    assert out == msgs


def test_trailing_bytes_belong_to_next_frame():
    a, b = wp.encode(wp.Keepalive()), wp.encode(wp.SyncPing(0, 5))
    dec = wp.FrameDecoder()
    got = dec.feed(a + b[:3])
    assert got == [wp.Keepalive()]
    assert dec.pending_bytes == 3
    assert dec.feed(b[3:]) == [wp.SyncPing(0, 5)]


# --- fuzzing ----------------------------------------------------------------

@settings(max_examples=500)
@given(st.binary(max_size=200))
def test_fuzz_random_bytes_never_crash(data):
    dec = wp.FrameDecoder()
    try:
        dec.feed(data)
    except wp.ProtocolError:
        pass


@settings(max_examples=200)
@given(messages, st.integers(0, 2**32 - 1), st.binary(min_size=1, max_size=8))
def test_fuzz_mutated_valid_frames(msg, pos, junk):
    frame = bytearray(wp.encode(msg))
    p = pos % len(frame)
    frame[p : p + len(junk)] = junk
    dec = wp.FrameDecoder()
    try:
        dec.feed(bytes(frame))
    except wp.ProtocolError:
        pass


def test_fuzz_seeded_corpus():
    rng = random.Random(1234)
    for _ in range(2000):
        data = rng.randbytes(rng.randrange(0, 120))
        dec = wp.FrameDecoder()
        try:
            dec.feed(data)
        except wp.ProtocolError:
            pass
