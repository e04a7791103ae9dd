"""Agreement and sync-accuracy reports over exported session bundles.

Pure batch computation on the CSV exports plus session metadata: pairs
the two heart-rate streams on the hub time base, quantifies agreement,
and evaluates the offset estimators against simulator ground truth.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .simdevice.models import ActivityProtocol, Phase
from .timebase import (
    Estimator,
    SyncRound,
    TimeAnchor,
    aggregate_offset,
    boot_to_unix_ms,
    estimate_offset_round,
)


class NoOverlapError(Exception):
    """The two HR streams share no pairable samples."""


class MissingGroundTruth(Exception):
    """Session metadata carries no simulator true offset."""


def default_protocol() -> ActivityProtocol:
    """The reference collection protocol: a 30 s rest warm-up, then four
    alternating two-minute effort phases (run first), 510 s in total."""
    return ActivityProtocol(
        (
            Phase("rest", 30.0),
            Phase("run", 120.0),
            Phase("walk", 120.0),
            Phase("run", 120.0),
            Phase("walk", 120.0),
        )
    )


@dataclass(frozen=True)
class PhaseMean:
    index: int
    label: str
    start_s: float
    end_s: float
    chest_mean_bpm: float | None
    watch_mean_bpm: float | None  # zeros excluded
    chest_n: int
    watch_n: int


@dataclass(frozen=True)
class AgreementReport:
    mae_bpm: float | None         # zeros excluded; None without nonzero pairs
    pearson_r: float | None       # zeros excluded; 1.0 for constant series
    watch_zero_fraction: float
    pair_count: int
    chest_samples: int
    watch_samples: int
    phase_means: tuple[PhaseMean, ...]

    def to_dict(self) -> dict:
        d = {
            "mae_bpm": self.mae_bpm,
            "pearson_r": self.pearson_r,
            "watch_zero_fraction": self.watch_zero_fraction,
            "pair_count": self.pair_count,
            "chest_samples": self.chest_samples,
            "watch_samples": self.watch_samples,
        }
        for pm in self.phase_means:
            key = f"phase{pm.index}_{pm.label}"
            d[f"{key}_chest_mean_bpm"] = pm.chest_mean_bpm
            d[f"{key}_watch_mean_bpm"] = pm.watch_mean_bpm
        return d


# --- CSV loading ------------------------------------------------------------

_META_INT_FIELDS = {
    "created_unix_ms",
    "start_boot_ns",
    "start_unix_ms",
    "end_boot_ns",
    "end_unix_ms",
    "mean_offset_ns",
    "sync_rounds_used",
}


def read_meta_csv(path: str | Path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1:
        raise ValueError(f"{path}: expected exactly one metadata row")
    meta = dict(rows[0])
    for key in _META_INT_FIELDS:
        if meta.get(key) not in (None, ""):
            meta[key] = int(meta[key])
    return meta


def read_chest_hr_csv(path: str | Path) -> list[tuple[int, int]]:
    """[(arrival unix ms, bpm)] in file order."""
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["arrival_unix_ms"]), int(r["bpm"])) for r in csv.DictReader(fh)]


def read_watch_hr_csv(path: str | Path, meta: dict) -> list[tuple[int, int]]:
    """[(unix ms on the hub base, bpm)]; rebased stamps are converted
    through the session's start anchor."""
    anchor = TimeAnchor(boot_ns=meta["start_boot_ns"], unix_ms=meta["start_unix_ms"])
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            (boot_to_unix_ms(int(r["rebased_boot_ns"]), anchor), int(r["bpm"]))
            for r in csv.DictReader(fh)
        ]


def protocol_from_config(config: dict) -> ActivityProtocol | None:
    phases = config.get("sim", {}).get("protocol")
    if not phases:
        return None
    return ActivityProtocol(tuple(Phase(label, float(dur)) for label, dur in phases))


def session_config(meta: dict) -> dict:
    text = meta.get("config_text") or ""
    return json.loads(text) if text else {}


# --- pairing and agreement --------------------------------------------------

def pair_nearest(
    chest_ms: list[int], watch_ms: list[int], window_ms: int = 500
) -> list[tuple[int, int]]:
    """Greedy nearest-timestamp matching, each sample used at most once.

    Both inputs must be sorted.  At 1 Hz the window of +/-500 ms admits at
    most one candidate, so greedy matching is exact.
    """
    pairs: list[tuple[int, int]] = []
    i = 0
    for j, t in enumerate(watch_ms):
        if i >= len(chest_ms):
            break
        while i + 1 < len(chest_ms) and abs(chest_ms[i + 1] - t) <= abs(chest_ms[i] - t):
            i += 1
        if abs(chest_ms[i] - t) <= window_ms:
            pairs.append((i, j))
            i += 1
    return pairs


def _pearson(xs: np.ndarray, ys: np.ndarray) -> float:
    # constant series carry no disagreement signal: report 1.0 by convention
    if len(xs) < 2 or float(np.std(xs)) == 0.0 or float(np.std(ys)) == 0.0:
        return 1.0
    return float(np.corrcoef(xs, ys)[0, 1])


def compare_hr(
    chest_csv: str | Path,
    watch_csv: str | Path,
    meta: dict,
    protocol: ActivityProtocol | None = None,
    pair_window_ms: int = 500,
) -> AgreementReport:
    """Agreement between the two HR sources on the hub time base.

    Watch rows with bpm 0 are excluded from MAE and correlation but count
    toward the zero fraction.
    """
    chest = read_chest_hr_csv(chest_csv)
    watch = read_watch_hr_csv(watch_csv, meta)
    if protocol is None:
        protocol = protocol_from_config(session_config(meta))

    zero_fraction = (
        sum(1 for _, b in watch if b == 0) / len(watch) if watch else 0.0
    )
    pairs = pair_nearest([t for t, _ in chest], [t for t, _ in watch], pair_window_ms)
    if not pairs:
        raise NoOverlapError("no HR samples pair within the window")

    nonzero = [(chest[i][1], watch[j][1]) for i, j in pairs if watch[j][1] != 0]
    if nonzero:
        xs = np.array([c for c, _ in nonzero], dtype=float)
        ys = np.array([w for _, w in nonzero], dtype=float)
        mae = float(np.mean(np.abs(xs - ys)))
        r = _pearson(xs, ys)
    else:
        mae = None
        r = None

    phase_means: list[PhaseMean] = []
    if protocol is not None:
        start_ms = meta["start_unix_ms"]
        cursor_s = 0.0
        for idx, phase in enumerate(protocol.phases):
            lo = start_ms + int(cursor_s * 1000)
            hi = start_ms + int((cursor_s + phase.duration_s) * 1000)
            c_vals = [b for t, b in chest if lo <= t < hi]
            w_vals = [b for t, b in watch if lo <= t < hi and b != 0]
            phase_means.append(
                PhaseMean(
                    index=idx,
                    label=phase.label,
                    start_s=cursor_s,
                    end_s=cursor_s + phase.duration_s,
                    chest_mean_bpm=float(np.mean(c_vals)) if c_vals else None,
                    watch_mean_bpm=float(np.mean(w_vals)) if w_vals else None,
                    chest_n=len(c_vals),
                    watch_n=len(w_vals),
                )
            )
            cursor_s += phase.duration_s

    return AgreementReport(
        mae_bpm=mae,
        pearson_r=r,
        watch_zero_fraction=zero_fraction,
        pair_count=len(pairs),
        chest_samples=len(chest),
        watch_samples=len(watch),
        phase_means=tuple(phase_means),
    )


def write_agreement_csv(report: AgreementReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for key, value in report.to_dict().items():
            w.writerow([key, "" if value is None else value])


def write_merged_csv(
    chest_csv: str | Path,
    watch_csv: str | Path,
    meta: dict,
    path: str | Path,
    protocol: ActivityProtocol | None = None,
) -> None:
    """Plot-ready per-second series: time_s, chest_bpm, watch_bpm, phase_label.

    Each grid second takes the nearest sample within half a second; cells
    without one stay empty.
    """
    chest = read_chest_hr_csv(chest_csv)
    watch = read_watch_hr_csv(watch_csv, meta)
    if protocol is None:
        protocol = protocol_from_config(session_config(meta))
    start_ms = meta["start_unix_ms"]
    end_ms = meta["end_unix_ms"]
    seconds = max(0, (end_ms - start_ms) // 1000)

    def nearest(series: list[tuple[int, int]], t_ms: int) -> int | None:
        best = None
        for ts, bpm in series:  # series are small (1 Hz); linear scan is fine
            d = abs(ts - t_ms)
            if best is None or d < best[0]:
                best = (d, bpm)
        return best[1] if best is not None and best[0] <= 500 else None

    chest_sorted = sorted(chest)
    watch_sorted = sorted(watch)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "chest_bpm", "watch_bpm", "phase_label"])
        ci = wi = 0
        for sec in range(int(seconds) + 1):
            t_ms = start_ms + sec * 1000
            ci = _advance(chest_sorted, ci, t_ms)
            wi = _advance(watch_sorted, wi, t_ms)
            c = _at(chest_sorted, ci, t_ms)
            wv = _at(watch_sorted, wi, t_ms)
            label = ""
            if protocol is not None and sec <= protocol.total_s:
                label = protocol.label_at(float(sec))
            w.writerow([sec, "" if c is None else c, "" if wv is None else wv, label])


def _advance(series: list[tuple[int, int]], i: int, t_ms: int) -> int:
    while i + 1 < len(series) and abs(series[i + 1][0] - t_ms) <= abs(series[i][0] - t_ms):
        i += 1
    return i


def _at(series: list[tuple[int, int]], i: int, t_ms: int) -> int | None:
    if not series or abs(series[i][0] - t_ms) > 500:
        return None
    return series[i][1]


# --- sync-accuracy ground truth ---------------------------------------------

@dataclass(frozen=True)
class SyncErrorReport:
    true_offset_ns: int
    corrected_mean_ns: int
    legacy_mean_ns: int
    corrected_error_ns: int
    legacy_error_ns: int
    mean_rtt_ns: int
    rounds_used: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def accepted_rounds(meta: dict) -> list[SyncRound]:
    config = session_config(meta)
    raw = config.get("sync", {}).get("accepted_rounds", [])
    return [
        SyncRound(seq=r["seq"], t1_ns=r["t1_ns"], t2_ns=r["t2_ns"], t3_ns=r["t3_ns"])
        for r in raw
    ]


def sync_error_report(meta: dict, true_offset_ns: int | None = None) -> SyncErrorReport:
    """Estimator error against the simulator's configured offset.

    The truth comes from the explicit argument or from the session's
    recorded simulator configuration.
    """
    if true_offset_ns is None:
        sim = session_config(meta).get("sim", {})
        true_offset_ns = sim.get("watch", {}).get("true_offset_ns")
        if true_offset_ns is None:
            raise MissingGroundTruth("session records no simulated watch offset")
    rounds = accepted_rounds(meta)
    if not rounds:
        raise MissingGroundTruth("session records no accepted sync rounds")
    corrected = aggregate_offset(rounds, Estimator.CORRECTED)
    legacy = aggregate_offset(rounds, Estimator.LEGACY)
    return SyncErrorReport(
        true_offset_ns=true_offset_ns,
        corrected_mean_ns=corrected.mean_offset_ns,
        legacy_mean_ns=legacy.mean_offset_ns,
        corrected_error_ns=corrected.mean_offset_ns - true_offset_ns,
        legacy_error_ns=legacy.mean_offset_ns - true_offset_ns,
        mean_rtt_ns=corrected.mean_rtt_ns,
        rounds_used=len(rounds),
    )


def write_sync_rounds_csv(meta: dict, path: str | Path) -> None:
    """Plot-ready per-round offsets under both estimators."""
    rounds = accepted_rounds(meta)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seq", "t1_ns", "t2_ns", "t3_ns", "rtt_ns",
                    "offset_corrected_ns", "offset_legacy_ns"])
        for r in rounds:
            w.writerow([
                r.seq, r.t1_ns, r.t2_ns, r.t3_ns, r.rtt_ns,
                estimate_offset_round(r, Estimator.CORRECTED),
                estimate_offset_round(r, Estimator.LEGACY),
            ])
