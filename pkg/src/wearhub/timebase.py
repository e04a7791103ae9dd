"""Clock references, offset estimation, and timestamp rebasing.

Three time bases flow through the system: boot-monotonic nanoseconds
(hub and watch), nanoseconds since 2000-01-01T00:00:00 UTC (chest-strap
accelerometer), and Unix milliseconds (hub wall clock).  All arithmetic
is integer nanoseconds; division truncates toward zero so results are
bit-exact across runs and platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

I64_MIN = -(2**63)
I64_MAX = 2**63 - 1

# 1970-01-01 -> 2000-01-01 is 10957 days (30*365 plus 7 leap days), in ns.
EPOCH2000_OFFSET_NS = 946_684_800 * 10**9


class Estimator(str, Enum):
    """Which sign the half round-trip term carries in the per-round offset.

    LEGACY subtracts the half round trip from (t1 - t2); under symmetric
    one-way delay L it is biased low by the full round trip (2L).
    CORRECTED adds the term and is unbiased under symmetric delay, so it
    is the default.  The choice is recorded in session metadata.
    """

    LEGACY = "legacy"
    CORRECTED = "corrected"


def trunc_div(a: int, b: int) -> int:
    """Integer division truncating toward zero (Python's // floors)."""
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def round_half_up_div(n: int, d: int) -> int:
    """n/d rounded to the nearest integer, halves toward +infinity. d > 0."""
    return (2 * n + d) // (2 * d)


def check_i64(value: int, what: str = "timestamp") -> int:
    """Reject values outside signed 64-bit range instead of wrapping."""
    if not I64_MIN <= value <= I64_MAX:
        raise OverflowError(f"{what} out of signed 64-bit range: {value}")
    return value


@dataclass(frozen=True)
class SyncRound:
    """One timing exchange: hub send (t1), device echo (t2), hub receipt (t3).

    t1 and t3 are hub boot-nanos, t2 is device boot-nanos.
    """

    seq: int
    t1_ns: int
    t2_ns: int
    t3_ns: int

    def __post_init__(self) -> None:
        if self.t3_ns < self.t1_ns:
            raise ValueError(
                f"round {self.seq}: t3 < t1 ({self.t3_ns} < {self.t1_ns}); "
                "hub clock must be monotonic"
            )

    @property
    def rtt_ns(self) -> int:
        return self.t3_ns - self.t1_ns


@dataclass(frozen=True)
class OffsetEstimate:
    """Aggregated clock offset (hub minus device) over accepted sync rounds."""

    mean_offset_ns: int
    rounds: tuple[SyncRound, ...]
    per_round_offsets_ns: tuple[int, ...]
    estimator: Estimator

    def __post_init__(self) -> None:
        if len(self.rounds) < 1 or len(self.rounds) != len(self.per_round_offsets_ns):
            raise ValueError("estimate requires one offset per round, at least one round")
        if self.mean_offset_ns != trunc_div(sum(self.per_round_offsets_ns), len(self.per_round_offsets_ns)):
            raise ValueError("mean_offset_ns is not the truncated mean of the per-round offsets")

    @property
    def mean_rtt_ns(self) -> int:
        return trunc_div(sum(r.rtt_ns for r in self.rounds), len(self.rounds))


@dataclass(frozen=True)
class TimeAnchor:
    """Simultaneous reading of the hub's monotonic and wall clocks."""

    boot_ns: int
    unix_ms: int


def estimate_offset_round(round_: SyncRound, estimator: Estimator) -> int:
    """Clock offset (hub minus device) in ns from a single exchange."""
    half_rtt = trunc_div(round_.t3_ns - round_.t1_ns, 2)
    base = round_.t1_ns - round_.t2_ns
    if estimator is Estimator.LEGACY:
        return base - half_rtt
    return base + half_rtt


def aggregate_offset(
    rounds: list[SyncRound] | tuple[SyncRound, ...],
    estimator: Estimator,
    *,
    min_rtt_filter: bool = False,
    rtt_filter_factor: float = 1.5,
) -> OffsetEstimate:
    """Mean offset over rounds; order preserved, mean truncated toward zero.

    With min_rtt_filter only rounds whose RTT is within rtt_filter_factor
    of the smallest observed RTT contribute (off by default; usage is
    recorded in session metadata by the caller).
    """
    if not rounds:
        raise ValueError("no sync rounds: the handshake never completed")
    accepted = list(rounds)
    if min_rtt_filter:
        best = min(r.rtt_ns for r in accepted)
        accepted = [r for r in accepted if r.rtt_ns <= best * rtt_filter_factor]
    offsets = tuple(estimate_offset_round(r, estimator) for r in accepted)
    mean = trunc_div(sum(offsets), len(offsets))
    return OffsetEstimate(
        mean_offset_ns=mean,
        rounds=tuple(accepted),
        per_round_offsets_ns=offsets,
        estimator=estimator,
    )


def rebase(ts_ns: int, estimate: OffsetEstimate) -> int:
    """Move a device boot-nanos timestamp onto the hub boot-nanos base."""
    return check_i64(ts_ns + estimate.mean_offset_ns, "rebased timestamp")


def epoch2000_to_unix_ns(ts_ns: int) -> int:
    """Nanoseconds since 2000-01-01 UTC -> nanoseconds since the Unix epoch."""
    return check_i64(ts_ns + EPOCH2000_OFFSET_NS, "unix timestamp")


def unix_to_epoch2000_ns(ts_ns: int) -> int:
    """Inverse of epoch2000_to_unix_ns."""
    return check_i64(ts_ns - EPOCH2000_OFFSET_NS, "epoch-2000 timestamp")


def boot_to_unix_ms(ts_ns: int, anchor: TimeAnchor) -> int:
    """Convert hub boot-nanos to Unix ms through a dual-clock anchor."""
    return anchor.unix_ms + round_half_up_div(ts_ns - anchor.boot_ns, 10**6)
