#!/usr/bin/env python3
"""Monte-Carlo study of offset-estimation error, used to fix test tolerances.

Simulates the 10-round handshake with a known true offset and symmetric
Gaussian one-way delay, then reports the error distribution of the
corrected estimator and the legacy-vs-corrected gap.  Run before touching
the sync tolerances in tests/.
"""

import argparse
import statistics

from wearhub.simdevice.models import LatencyModel, VirtualClock
from wearhub.simdevice.signals import simulate_sync_rounds
from wearhub.timebase import Estimator, aggregate_offset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--rounds", type=int, default=10)
    ap.add_argument("--true-offset-ns", type=int, default=123_456_789)
    ap.add_argument("--latency-mean-ms", type=float, default=5.0)
    ap.add_argument("--latency-jitter-ms", type=float, default=1.0)
    args = ap.parse_args()

    clock = VirtualClock(true_offset_ns=args.true_offset_ns)
    errors_ms = []
    gap_check_worst = 0.0
    for trial in range(args.trials):
        up = LatencyModel(args.latency_mean_ms, args.latency_jitter_ms, seed=2 * trial)
        down = LatencyModel(args.latency_mean_ms, args.latency_jitter_ms, seed=2 * trial + 1)
        rounds = simulate_sync_rounds(clock, args.rounds, 100_000_000, up, down)
        corrected = aggregate_offset(rounds, Estimator.CORRECTED)
        legacy = aggregate_offset(rounds, Estimator.LEGACY)
        errors_ms.append((corrected.mean_offset_ns - args.true_offset_ns) / 1e6)
        gap = (legacy.mean_offset_ns - corrected.mean_offset_ns) + corrected.mean_rtt_ns
        gap_check_worst = max(gap_check_worst, abs(gap))

    errors_abs = sorted(abs(e) for e in errors_ms)
    n = len(errors_abs)
    print(f"trials={n} rounds={args.rounds} "
          f"delay~N({args.latency_mean_ms},{args.latency_jitter_ms})ms truncated>=0")
    print(f"corrected |error| ms: mean={statistics.fmean(errors_abs):.4f} "
          f"p50={errors_abs[n // 2]:.4f} p95={errors_abs[int(0.95 * n)]:.4f} "
          f"p99={errors_abs[int(0.99 * n)]:.4f} max={errors_abs[-1]:.4f}")
    print(f"runs within 2 ms: {sum(1 for e in errors_abs if e <= 2.0)}/{n}")
    print(f"legacy-minus-corrected vs -meanRTT, worst |gap|: {gap_check_worst:.1f} ns")


if __name__ == "__main__":
    main()
