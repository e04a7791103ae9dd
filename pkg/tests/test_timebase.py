"""Unit and property tests for offset estimation and timestamp conversion."""

import random
from datetime import datetime, timezone
from fractions import Fraction
from math import floor

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wearhub.timebase import (
    EPOCH2000_OFFSET_NS,
    Estimator,
    OffsetEstimate,
    SyncRound,
    TimeAnchor,
    aggregate_offset,
    boot_to_unix_ms,
    check_i64,
    epoch2000_to_unix_ns,
    estimate_offset_round,
    rebase,
    round_half_up_div,
    trunc_div,
    unix_to_epoch2000_ns,
)

NS = 10**9


def make_round(seq, t1, t2, t3):
    return SyncRound(seq=seq, t1_ns=t1, t2_ns=t2, t3_ns=t3)


# --- single-round estimator -------------------------------------------------

def test_zero_delay_zero_offset():
    r = make_round(0, 100, 100, 100)
    assert estimate_offset_round(r, Estimator.LEGACY) == 0
    assert estimate_offset_round(r, Estimator.CORRECTED) == 0


def test_symmetric_delay_corrected_recovers_truth():
    # true offset 1_000_000 ns, one-way delay 500_000 ns each direction:
    # device reads hub_time - offset, so t2 = (t1 + d) - offset.
    r = make_round(0, 0, -500_000, 1_000_000)
    assert estimate_offset_round(r, Estimator.CORRECTED) == 1_000_000


def test_symmetric_delay_legacy_cancels_to_zero():
    # same scenario: legacy form yields offset - d1 - (d1+d2)/2 = 0,
    # i.e. the full round trip of bias.
    r = make_round(0, 0, -500_000, 1_000_000)
    assert estimate_offset_round(r, Estimator.LEGACY) == 0


@given(offset=st.integers(-10**15, 10**15), t1=st.integers(0, 10**15))
def test_zero_latency_both_estimators_exact(offset, t1):
    r = make_round(0, t1, t1 - offset, t1)
    assert estimate_offset_round(r, Estimator.LEGACY) == offset
    assert estimate_offset_round(r, Estimator.CORRECTED) == offset


@given(
    offset=st.integers(-10**12, 10**12),
    t1=st.integers(0, 10**15),
    delay=st.integers(0, 10**9),
)
def test_symmetric_latency_closed_form(offset, t1, delay):
    r = make_round(0, t1, t1 + delay - offset, t1 + 2 * delay)
    assert estimate_offset_round(r, Estimator.CORRECTED) == offset
    assert estimate_offset_round(r, Estimator.LEGACY) == offset - 2 * delay


@given(
    t1=st.integers(-10**15, 10**15),
    t2=st.integers(-10**15, 10**15),
    rtt=st.integers(0, 10**12),
)
def test_estimator_identity(t1, t2, rtt):
    # the two estimators differ by exactly twice the truncated half-RTT
    r = make_round(0, t1, t2, t1 + rtt)
    legacy = estimate_offset_round(r, Estimator.LEGACY)
    corrected = estimate_offset_round(r, Estimator.CORRECTED)
    assert legacy - corrected == -2 * trunc_div(rtt, 2)


# --- aggregation ------------------------------------------------------------

def test_aggregate_all_zero_rounds():
    rounds = [make_round(i, 10 * i, 10 * i, 10 * i) for i in range(5)]
    est = aggregate_offset(rounds, Estimator.CORRECTED)
    assert est.mean_offset_ns == 0
    assert est.per_round_offsets_ns == (0,) * 5


def test_aggregate_exact_mean():
    # rounds crafted so per-round offsets are 10, 20, 30 with zero RTT
    rounds = [make_round(i, 0, -o, 0) for i, o in enumerate([10, 20, 30])]
    est = aggregate_offset(rounds, Estimator.CORRECTED)
    assert est.per_round_offsets_ns == (10, 20, 30)
    assert est.mean_offset_ns == 20
    assert est.rounds == tuple(rounds)


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError, match="handshake"):
        aggregate_offset([], Estimator.CORRECTED)


def test_aggregate_truncates_toward_zero():
    rounds = [make_round(i, 0, -o, 0) for i, o in enumerate([-1, -2])]
    est = aggregate_offset(rounds, Estimator.CORRECTED)
    assert est.mean_offset_ns == -1  # -3/2 truncates to -1, not -2


def test_aggregate_min_rtt_filter():
    rounds = [
        make_round(0, 0, 0, 1000),
        make_round(1, 0, 0, 1400),
        make_round(2, 0, 0, 1600),  # beyond 1.5x the minimum, filtered out
    ]
    est = aggregate_offset(rounds, Estimator.CORRECTED, min_rtt_filter=True)
    assert [r.seq for r in est.rounds] == [0, 1]


@given(st.lists(st.integers(-10**12, 10**12), min_size=1, max_size=20), st.randoms())
def test_aggregate_mean_permutation_invariant(offsets, rnd):
    rounds = [make_round(i, 0, -o, 0) for i, o in enumerate(offsets)]
    shuffled = rounds[:]
    rnd.shuffle(shuffled)
    a = aggregate_offset(rounds, Estimator.CORRECTED).mean_offset_ns
    b = aggregate_offset(shuffled, Estimator.CORRECTED).mean_offset_ns
    assert a == b


def test_aggregate_monte_carlo_tolerance():
    # 10 rounds, true offset 123_456_789 ns, symmetric delay N(5 ms, 1 ms)
    # truncated at zero.  Per-round error is (d2-d1)/2, so the 10-round
    # mean has sigma ~0.224 ms; every seeded trial must land within 2 ms
    # (checked over 1000 trials by scripts/mc_sync_tolerance.py).
    truth = 123_456_789
    worst = 0
    for trial in range(200):
        rng = random.Random(trial)
        rounds = []
        for seq in range(10):
            t1 = seq * 100_000_000
            d1 = max(0, int(rng.gauss(5e6, 1e6)))
            d2 = max(0, int(rng.gauss(5e6, 1e6)))
            rounds.append(make_round(seq, t1, t1 + d1 - truth, t1 + d1 + d2))
        est = aggregate_offset(rounds, Estimator.CORRECTED)
        worst = max(worst, abs(est.mean_offset_ns - truth))
    assert worst <= 2_000_000


# --- rebasing ---------------------------------------------------------------

def single_round_estimate(offset_ns):
    return aggregate_offset([make_round(0, 0, -offset_ns, 0)], Estimator.CORRECTED)


def test_rebase_identity_and_shift():
    assert rebase(0, single_round_estimate(0)) == 0
    assert rebase(1000, single_round_estimate(-50)) == 950


@given(
    ts=st.lists(st.integers(-10**17, 10**17), min_size=2, max_size=50),
    offset=st.integers(-10**12, 10**12),
)
def test_rebase_preserves_order_and_spacing(ts, offset):
    est = single_round_estimate(offset)
    out = [rebase(t, est) for t in ts]
    for (a, b), (ra, rb) in zip(zip(ts, ts[1:]), zip(out, out[1:])):
        assert rb - ra == b - a


def test_rebase_overflow_rejected():
    est = single_round_estimate(10**18)
    with pytest.raises(OverflowError):
        rebase(2**63 - 1, est)


# --- epoch conversions ------------------------------------------------------

def test_epoch2000_constant_against_calendar():
    # independent oracle: civil calendar arithmetic
    delta = datetime(2000, 1, 1, tzinfo=timezone.utc) - datetime(1970, 1, 1, tzinfo=timezone.utc)
    assert delta.days == 10957
    assert EPOCH2000_OFFSET_NS == delta.days * 86400 * NS


def test_epoch2000_to_unix_examples():
    assert epoch2000_to_unix_ns(0) == 946_684_800_000_000_000
    assert epoch2000_to_unix_ns(1) == 946_684_800_000_000_001
    # pre-2000 device timestamps map to valid earlier Unix times
    assert epoch2000_to_unix_ns(-NS) == 946_684_799 * NS


@given(st.integers(-(2**62), 2**62))
def test_epoch2000_roundtrip_identity(ts):
    assert unix_to_epoch2000_ns(epoch2000_to_unix_ns(ts)) == ts


def test_epoch2000_overflow_rejected():
    with pytest.raises(OverflowError):
        epoch2000_to_unix_ns(2**63 - 1)


# --- boot -> unix ms --------------------------------------------------------

ANCHOR = TimeAnchor(boot_ns=5_000_000_000, unix_ms=1_700_000_000_000)


def test_boot_to_unix_ms_identity_at_anchor():
    assert boot_to_unix_ms(ANCHOR.boot_ns, ANCHOR) == ANCHOR.unix_ms


def test_boot_to_unix_ms_whole_millisecond():
    assert boot_to_unix_ms(ANCHOR.boot_ns + 1_000_000, ANCHOR) == ANCHOR.unix_ms + 1


def test_boot_to_unix_ms_rounds_half_up():
    assert boot_to_unix_ms(ANCHOR.boot_ns + 1_499_999, ANCHOR) == ANCHOR.unix_ms + 1
    assert boot_to_unix_ms(ANCHOR.boot_ns + 1_500_000, ANCHOR) == ANCHOR.unix_ms + 2
    assert boot_to_unix_ms(ANCHOR.boot_ns - 500_000, ANCHOR) == ANCHOR.unix_ms  # -0.5 -> 0


@settings(max_examples=300)
@given(st.integers(-5 * 10**6, 5 * 10**6))
def test_round_half_up_matches_fraction_oracle(delta):
    expected = floor(Fraction(delta, 10**6) + Fraction(1, 2))
    assert round_half_up_div(delta, 10**6) == expected


def test_round_half_up_exhaustive_one_millisecond():
    # sweep every ns offset across one millisecond around the rounding edge
    for delta in range(1_000_000, 2_000_001):
        expected = floor(Fraction(delta, 10**6) + Fraction(1, 2))
        assert round_half_up_div(delta, 10**6) == expected


# --- misc helpers -----------------------------------------------------------

@given(st.integers(-10**18, 10**18), st.integers(1, 10**9))
def test_trunc_div_matches_int_truncation(a, b):
    assert trunc_div(a, b) == int(Fraction(a, b))  # Fraction->int truncates


def test_check_i64_bounds():
    assert check_i64(2**63 - 1) == 2**63 - 1
    assert check_i64(-(2**63)) == -(2**63)
    with pytest.raises(OverflowError):
        check_i64(2**63)


def test_offset_estimate_invariant_enforced():
    r = make_round(0, 0, 0, 0)
    with pytest.raises(ValueError):
        OffsetEstimate(mean_offset_ns=5, rounds=(r,), per_round_offsets_ns=(0,), estimator=Estimator.CORRECTED)


def test_sync_round_rejects_nonmonotonic_hub_clock():
    with pytest.raises(ValueError):
        make_round(0, 100, 0, 99)
