"""Signal model tests: HR dynamics, dropouts, motion spectra, virtual clocks."""

import math

import numpy as np
import pytest

from wearhub.simdevice.models import (
    ActivityProtocol,
    HrModel,
    LatencyModel,
    MotionModel,
    Phase,
    VirtualClock,
)
from wearhub.simdevice.signals import StreamCursor, hr_ground_truth, simulate_sync_rounds
from wearhub.timebase import EPOCH2000_OFFSET_NS, Estimator, aggregate_offset

REST_RUN = ActivityProtocol((Phase("rest", 60.0), Phase("run", 600.0)))


def cursor(kind, stream, rate, *, protocol=None, hr_model=None, motion_model=None,
           seed=1, clock=None, start_ns=0):
    return StreamCursor(
        kind=kind,
        stream=stream,
        rate_hz=rate,
        protocol=protocol or REST_RUN,
        hr_model=hr_model or HrModel(),
        motion_model=motion_model or MotionModel(),
        seed=seed,
        clock=clock or VirtualClock(),
        capture_start_hub_ns=start_ns,
    )


# --- heart-rate ground truth ------------------------------------------------

def test_hr_starts_at_first_phase_target():
    assert hr_ground_truth(REST_RUN, HrModel(), 0.0) == 70.0


def test_hr_converges_to_phase_target():
    protocol = ActivityProtocol((Phase("run", 10_000.0),))
    assert hr_ground_truth(protocol, HrModel(), 10_000.0) == pytest.approx(150.0, abs=1e-6)


def test_hr_one_time_constant_after_switch():
    # closed form: one tau into run, hr = run - (run - rest)/e
    m = HrModel()
    value = hr_ground_truth(REST_RUN, m, 60.0 + m.tau_s)
    assert value == pytest.approx(150.0 - 80.0 / math.e, abs=1e-6)


def test_hr_continuous_across_boundary():
    m = HrModel()
    before = hr_ground_truth(REST_RUN, m, 60.0 - 1e-9)
    after = hr_ground_truth(REST_RUN, m, 60.0 + 1e-9)
    assert after == pytest.approx(before, abs=1e-6)


def test_hr_out_of_range_rejected():
    with pytest.raises(ValueError):
        hr_ground_truth(REST_RUN, HrModel(), -1.0)
    with pytest.raises(ValueError):
        hr_ground_truth(REST_RUN, HrModel(), 661.0)


# --- chest HR stream --------------------------------------------------------

def test_chest_hr_noiseless_rounds_truth():
    m = HrModel(rest_bpm=70.4, noise_std_chest=0.0)
    c = cursor("chest_strap", "hr", 1.0, hr_model=m)
    item = c.take(1)[0]
    assert item.ts_ns is None
    assert item.bpm == 70  # 70.4 rounds down


def test_chest_hr_deterministic_under_seed():
    a = cursor("chest_strap", "hr", 1.0, seed=7).take(100)
    b = cursor("chest_strap", "hr", 1.0, seed=7).take(100)
    assert a == b
    c = cursor("chest_strap", "hr", 1.0, seed=8).take(100)
    assert a != c


def test_chest_hr_never_negative():
    # heavy noise against a low target; bpm must floor at zero
    m = HrModel(rest_bpm=2.0, noise_std_chest=30.0)
    protocol = ActivityProtocol((Phase("rest", 20_000.0),))
    c = cursor("chest_strap", "hr", 1.0, protocol=protocol, hr_model=m)
    assert all(item.bpm >= 0 for item in c.take(20_000))


# --- watch HR stream --------------------------------------------------------

def test_watch_hr_total_dropout_in_run_phase():
    m = HrModel(dropout_prob={"rest": 0.0, "walk": 0.0, "run": 1.0})
    c = cursor("watch", "hr", 1.0, hr_model=m)
    items = c.take(c.sample_count)
    for item, k in zip(items, range(len(items))):
        assert item.ts_ns is not None
        if k >= 60:
            assert item.bpm == 0
        else:
            assert item.bpm > 0


def test_watch_hr_no_dropout_no_zeros():
    m = HrModel(dropout_prob={"rest": 0.0, "walk": 0.0, "run": 0.0})
    c = cursor("watch", "hr", 1.0, hr_model=m)
    assert all(item.bpm > 0 for item in c.take(c.sample_count))


def test_watch_hr_dropout_fraction_matches_probability():
    # binomial tolerance: 2500 run-phase samples at p=0.3 has sigma~0.009,
    # so +/-0.05 is a >5-sigma envelope
    protocol = ActivityProtocol((Phase("run", 2500.0),))
    m = HrModel(dropout_prob={"rest": 0.0, "walk": 0.0, "run": 0.3})
    c = cursor("watch", "hr", 1.0, protocol=protocol, hr_model=m, seed=3)
    items = c.take(c.sample_count)
    frac = sum(1 for i in items if i.bpm == 0) / len(items)
    assert abs(frac - 0.3) <= 0.05


def test_watch_hr_zero_rows_keep_valid_timestamps():
    m = HrModel(dropout_prob={"rest": 1.0, "walk": 1.0, "run": 1.0})
    c = cursor("watch", "hr", 1.0, hr_model=m)
    items = c.take(50)
    assert [i.ts_ns for i in items] == [c.grid_hub_ns(k) for k in range(50)]


# --- motion streams ---------------------------------------------------------

def test_acc_rest_is_gravity_only_without_noise():
    mm = MotionModel(acc_noise_std=0.0)
    c = cursor("watch", "acc", 50.0, motion_model=mm)
    for item in c.take(100):
        assert (item.x, item.y, item.z) == (0.0, 0.0, 9.81)


def test_motion_timestamps_strictly_increase():
    c = cursor("watch", "acc", 200.0, protocol=ActivityProtocol((Phase("run", 600.0),)))
    items = c.take(100_000)
    ts = [i.ts_ns for i in items]
    assert all(b > a for a, b in zip(ts, ts[1:]))


def test_walk_cadence_dominates_acc_spectrum():
    protocol = ActivityProtocol((Phase("walk", 600.0),))
    c = cursor("watch", "acc", 50.0, protocol=protocol, seed=5)
    items = c.take(512)
    mag = np.array([math.sqrt(i.x**2 + i.y**2 + i.z**2) for i in items])
    spectrum = np.abs(np.fft.rfft(mag - mag.mean()))
    freqs = np.fft.rfftfreq(512, d=1 / 50.0)
    peak = freqs[int(np.argmax(spectrum))]
    assert abs(peak - 1.8) <= 50.0 / 512  # within one bin


def test_gyro_quiet_at_rest():
    mm = MotionModel(gyro_noise_std=0.0)
    c = cursor("watch", "gyro", 50.0, motion_model=mm)
    for item in c.take(20):
        assert (item.x, item.y, item.z) == (0.0, 0.0, 0.0)


def test_impulse_injected_at_first_sample_at_or_after_mark():
    mm = MotionModel(acc_noise_std=0.0, impulse_at_s=1.03, impulse_amp=40.0)
    c = cursor("watch", "acc", 50.0, motion_model=mm)
    items = c.take(100)
    spiked = [k for k, i in enumerate(items) if abs(i.x) > 20]
    assert spiked == [math.ceil(1.03 * 50)]  # sample 52 at t=1.04s


def test_impulse_absent_from_gyro():
    mm = MotionModel(gyro_noise_std=0.0, impulse_at_s=1.0, impulse_amp=40.0)
    c = cursor("watch", "gyro", 50.0, motion_model=mm)
    assert all(abs(i.x) < 20 for i in c.take(100))


def test_distinct_seeds_distinct_streams():
    a = cursor("watch", "acc", 50.0, seed=1).take(200)
    b = cursor("watch", "acc", 50.0, seed=2).take(200)
    assert a != b


# --- virtual clock ----------------------------------------------------------

def test_virtual_clock_offset_definition():
    clock = VirtualClock(true_offset_ns=123_456_789)
    # hub_time - device_time == true offset
    assert 10**12 - clock.device_now(10**12) == 123_456_789


def test_virtual_clock_drift():
    clock = VirtualClock(true_offset_ns=0, drift_ppm=100.0)
    # 100 ppm over 1 s: device gains 100_000 ns on the hub
    assert clock.device_now(10**9) == 10**9 + 100_000


def test_virtual_clock_epoch2000_origin():
    unix0 = 1_700_000_000_000_000_000
    clock = VirtualClock(true_offset_ns=0, origin="epoch2000", hub_unix_at_boot0_ns=unix0)
    expected = unix0 + 5 - EPOCH2000_OFFSET_NS
    assert clock.device_now(5) == expected


def test_virtual_clock_epoch2000_requires_anchor():
    with pytest.raises(ValueError):
        VirtualClock(origin="epoch2000").device_now(0)


# --- latency model ----------------------------------------------------------

def test_latency_deterministic_and_nonnegative():
    a = LatencyModel(mean_ms=2.0, jitter_std_ms=5.0, seed=9)
    b = LatencyModel(mean_ms=2.0, jitter_std_ms=5.0, seed=9)
    xs = [a.sample_ms() for _ in range(1000)]
    ys = [b.sample_ms() for _ in range(1000)]
    assert xs == ys
    assert min(xs) >= 0.0
    assert min(xs) == 0.0  # heavy jitter against a small mean must clip


# --- analytic sync harness --------------------------------------------------

def test_simulated_rounds_zero_latency_exact():
    clock = VirtualClock(true_offset_ns=42)
    rounds = simulate_sync_rounds(
        clock, 10, 100_000_000, LatencyModel(0, 0, 1), LatencyModel(0, 0, 2)
    )
    est = aggregate_offset(rounds, Estimator.CORRECTED)
    assert est.mean_offset_ns == 42
    assert all(r.rtt_ns == 0 for r in rounds)


def test_simulated_rounds_drop_seqs():
    clock = VirtualClock()
    rounds = simulate_sync_rounds(
        clock, 10, 100, LatencyModel(0, 0, 1), LatencyModel(0, 0, 2), drop_seqs=(2, 7)
    )
    assert [r.seq for r in rounds] == [0, 1, 3, 4, 5, 6, 8, 9]


def test_simulated_rounds_symmetric_latency_bias_identity():
    clock = VirtualClock(true_offset_ns=5_000_000)
    fixed = LatencyModel(mean_ms=5.0, jitter_std_ms=0.0, seed=0)
    rounds = simulate_sync_rounds(clock, 10, 100_000_000, fixed, fixed)
    corrected = aggregate_offset(rounds, Estimator.CORRECTED)
    legacy = aggregate_offset(rounds, Estimator.LEGACY)
    assert corrected.mean_offset_ns == 5_000_000
    assert legacy.mean_offset_ns == 5_000_000 - 10_000_000  # minus the full RTT
