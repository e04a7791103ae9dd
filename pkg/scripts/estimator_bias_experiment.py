#!/usr/bin/env python3
"""Sweep delay asymmetry and chart both offset estimators' error.

Writes a plot-ready CSV: one row per (to_device, to_hub) mean-delay pair
with the corrected and legacy estimator errors against a known offset.
The corrected error tracks (d2-d1)/2; the legacy error adds a -RTT term.
"""

import argparse
import csv

from wearhub.simdevice.models import LatencyModel, VirtualClock
from wearhub.simdevice.signals import simulate_sync_rounds
from wearhub.timebase import Estimator, aggregate_offset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="estimator_bias.csv")
    ap.add_argument("--true-offset-ns", type=int, default=123_456_789)
    ap.add_argument("--rounds", type=int, default=10)
    ap.add_argument("--jitter-ms", type=float, default=1.0)
    ap.add_argument("--trials", type=int, default=200)
    args = ap.parse_args()

    clock = VirtualClock(true_offset_ns=args.true_offset_ns)
    pairs = [(d1, d2) for d1 in (0.0, 2.0, 5.0, 8.0) for d2 in (0.0, 2.0, 5.0, 8.0)]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["to_device_ms", "to_hub_ms", "corrected_error_ms",
                    "legacy_error_ms", "mean_rtt_ms"])
        for d1, d2 in pairs:
            corrected_sum = legacy_sum = rtt_sum = 0
            for trial in range(args.trials):
                up = LatencyModel(d1, args.jitter_ms, seed=trial * 2)
                down = LatencyModel(d2, args.jitter_ms, seed=trial * 2 + 1)
                rounds = simulate_sync_rounds(clock, args.rounds, 100_000_000, up, down)
                corrected = aggregate_offset(rounds, Estimator.CORRECTED)
                legacy = aggregate_offset(rounds, Estimator.LEGACY)
                corrected_sum += corrected.mean_offset_ns - args.true_offset_ns
                legacy_sum += legacy.mean_offset_ns - args.true_offset_ns
                rtt_sum += corrected.mean_rtt_ns
            n = args.trials
            w.writerow([d1, d2, f"{corrected_sum / n / 1e6:.4f}",
                        f"{legacy_sum / n / 1e6:.4f}", f"{rtt_sum / n / 1e6:.4f}"])
    print(f"wrote {args.out}: corrected error ~ (to_hub - to_device)/2, "
          "legacy error ~ corrected - mean RTT")


if __name__ == "__main__":
    main()
