"""Scripted end-to-end collection runs against an in-process hub.

Spins up the hub plus both simulated devices on one event loop, drives a
session through the full lifecycle, exports the bundle, and computes the
agreement report.  The device clocks read the hub clock directly, so the
configured watch offset is realized exactly and the run is a ground-truth
benchmark for the sync path.
"""

from __future__ import annotations

import asyncio
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import analysis
from .clocks import HubClock
from .config import HubConfig, SyncConfig
from .hub.server import HubServer
from .hub.state import SessionManager
from .simdevice.models import ActivityProtocol, HrModel, MotionModel
from .simdevice.runner import DeviceConfig, SimDevice
from .store import Store

log = logging.getLogger(__name__)


@dataclass
class DemoConfig:
    out_dir: Path
    time_scale: float = 10.0
    seed: int = 1234
    title: str = "use-case demo"
    description: str = "scripted rest/run/walk collection against simulated devices"
    protocol: ActivityProtocol | None = None  # None -> the reference protocol
    true_offset_ns: int = 123_456_789
    drift_ppm: float = 0.0
    latency_mean_ms: float = 5.0
    latency_jitter_ms: float = 1.0
    latency_to_device_mean_ms: float | None = None  # None -> latency_mean_ms
    latency_to_hub_mean_ms: float | None = None
    hr_model: HrModel = field(default_factory=HrModel)
    motion_model: MotionModel = field(default_factory=MotionModel)
    sync: SyncConfig = field(default_factory=lambda: SyncConfig(spacing_s=0.05))
    grace_s: float = 2.0
    settle_timeout_s: float = 10.0

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)
        if self.protocol is None:
            self.protocol = analysis.default_protocol()


@dataclass
class DemoResult:
    session: dict
    bundle_dir: Path
    report: analysis.AgreementReport
    report_csv: Path
    merged_csv: Path
    counters: dict
    link_events: list
    sync: dict
    store_path: Path

    def summary(self) -> dict:
        return {
            "session_id": self.session["id"],
            "duration_ms": self.session["duration_ms"],
            "bundle_dir": str(self.bundle_dir),
            "sync": self.sync,
            "agreement": self.report.to_dict(),
            "counters": self.counters,
        }


def _device_configs(cfg: DemoConfig) -> tuple[DeviceConfig, DeviceConfig]:
    to_device = cfg.latency_to_device_mean_ms
    to_hub = cfg.latency_to_hub_mean_ms
    common = dict(
        latency_to_device_mean_ms=cfg.latency_mean_ms if to_device is None else to_device,
        latency_to_device_jitter_ms=cfg.latency_jitter_ms,
        latency_to_hub_mean_ms=cfg.latency_mean_ms if to_hub is None else to_hub,
        latency_to_hub_jitter_ms=cfg.latency_jitter_ms,
        time_scale=cfg.time_scale,
        protocol=cfg.protocol,
        hr_model=cfg.hr_model,
        motion_model=cfg.motion_model,
    )
    chest = DeviceConfig(kind="chest_strap", seed=cfg.seed + 1, **common)
    watch = DeviceConfig(
        kind="watch",
        seed=cfg.seed + 2,
        true_offset_ns=cfg.true_offset_ns,
        drift_ppm=cfg.drift_ppm,
        **common,
    )
    return chest, watch


async def _wait(predicate, timeout: float, what: str) -> None:
    loop = asyncio.get_running_loop()
    deadline = loop.time() + timeout
    while not predicate():
        if loop.time() > deadline:
            raise TimeoutError(f"timed out waiting for {what}")
        await asyncio.sleep(0.02)


async def run_usecase(cfg: DemoConfig) -> DemoResult:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    store_path = cfg.out_dir / "store.sqlite"
    if store_path.exists():
        store_path.unlink()
    store = Store(store_path)
    clock = HubClock(scale=cfg.time_scale)
    hub_cfg = HubConfig(
        tcp_port=0, time_scale=cfg.time_scale, grace_s=cfg.grace_s, sync=cfg.sync
    )
    manager = SessionManager(store, clock, hub_cfg)
    chest_cfg, watch_cfg = _device_configs(cfg)
    manager.extra_config = {
        "sim": {
            "watch": watch_cfg.latency_summary(),
            "chest_strap": chest_cfg.latency_summary(),
            "protocol": [[p.label, p.duration_s] for p in cfg.protocol.phases],
            "hr_model": dataclasses.asdict(cfg.hr_model),
            "motion_model": dataclasses.asdict(cfg.motion_model),
        }
    }
    server = HubServer(manager, clock, hub_cfg)
    await server.start()
    assert server.tcp_port is not None

    device_tasks = [
        asyncio.create_task(SimDevice(dc, "127.0.0.1", server.tcp_port, hub_clock=clock).run())
        for dc in (chest_cfg, watch_cfg)
    ]

    try:
        await _wait(
            lambda: manager.status()["ready_to_start"] or any(t.done() for t in device_tasks),
            cfg.settle_timeout_s + cfg.sync.rounds * cfg.sync.spacing_s,
            "both devices synced",
        )
        for task in device_tasks:
            if task.done():
                task.result()  # surface the device failure

        meta = server.create_session(cfg.title, cfg.description)
        sid = meta["id"]
        await server.start_session(sid)

        expected_hr = int(cfg.protocol.total_s * 1.0)
        capture_wall_s = cfg.protocol.total_s / cfg.time_scale

        def capture_complete() -> bool:
            counts = store.stream_counts(sid)
            return counts["chest_hr"] >= expected_hr and counts["watch_hr"] >= expected_hr

        loop = asyncio.get_running_loop()
        deadline = loop.time() + capture_wall_s + cfg.settle_timeout_s
        while not capture_complete() and loop.time() < deadline:
            await asyncio.sleep(0.1)
        await server.stop_session(sid)
        await _wait(
            lambda: store.get_session(sid)["state"] == "stopped",
            cfg.grace_s + 5.0,
            "grace window to close",
        )
    finally:
        for task in device_tasks:
            task.cancel()
        for task in device_tasks:
            try:
                await task
            except (asyncio.CancelledError, Exception):
                pass
        await server.stop()

    bundle = store.export_csv(sid, cfg.out_dir)
    session = store.get_session(sid)
    report = analysis.compare_hr(
        bundle / "chest_hr.csv", bundle / "watch_hr.csv", session, protocol=cfg.protocol
    )
    report_csv = bundle / "agreement_report.csv"
    analysis.write_agreement_csv(report, report_csv)
    merged_csv = bundle / "merged_hr.csv"
    analysis.write_merged_csv(
        bundle / "chest_hr.csv", bundle / "watch_hr.csv", session, merged_csv, cfg.protocol
    )
    sync_report = analysis.sync_error_report(session, cfg.true_offset_ns)
    result = DemoResult(
        session=session,
        bundle_dir=bundle,
        report=report,
        report_csv=report_csv,
        merged_csv=merged_csv,
        counters=manager.counters_snapshot(),
        link_events=list(manager.link_events),
        sync=sync_report.to_dict(),
        store_path=store_path,
    )
    store.close()
    log.info("demo complete: session %s, %d aligned pairs", sid, report.pair_count)
    return result


def run_usecase_sync(cfg: DemoConfig) -> DemoResult:
    return asyncio.run(run_usecase(cfg))
