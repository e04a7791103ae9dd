"""Operator command line: hub, simulated devices, sessions, demo, analysis.

Exit codes: 0 success, 1 user/operational error, 2 internal error.
Values resolve as: explicit flag > config file (--config, key=value lines)
> built-in default; every effective value is echoed at startup.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import shutil
import sys
from pathlib import Path

import httpx

from . import analysis
from .clocks import HubClock
from .config import HubConfig, SyncConfig, parse_config_file
from .demo import DemoConfig, run_usecase_sync
from .hub.api import build_app, serve_api
from .hub.server import HubServer
from .hub.state import SessionManager
from .simdevice.models import HrModel
from .simdevice.runner import DeviceConfig, DeviceError, SimDevice
from .store import Store, StoreError

log = logging.getLogger(__name__)


class UserError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we use 1 for user errors
        raise UserError(message)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UserError(f"not a boolean: {text!r}")


class Effective:
    """Resolves flag > config file > default and records the result."""

    def __init__(self, args: argparse.Namespace):
        self.values: dict = {}
        self.file_values: dict[str, str] = {}
        config_path = getattr(args, "config", None)
        if config_path:
            try:
                self.file_values = parse_config_file(config_path)
            except (OSError, ValueError) as exc:
                raise UserError(f"cannot read config file: {exc}") from exc
        self.args = args

    def get(self, key: str, default, cast=None):
        cast = cast or (type(default) if default is not None else str)
        if cast is bool:
            cast = _parse_bool
        flag = getattr(self.args, key, None)
        if flag is not None:
            value = flag
        elif key in self.file_values:
            raw = self.file_values[key]
            try:
                value = cast(raw)
            except (TypeError, ValueError) as exc:
                raise UserError(f"config key {key}: {exc}") from exc
        else:
            value = default
        self.values[key] = value
        return value

    def check_unknown(self) -> None:
        unknown = set(self.file_values) - set(self.values)
        if unknown:
            raise UserError(f"unknown config keys: {sorted(unknown)}")

    def echo(self, what: str) -> None:
        log.info("%s config: %s", what, json.dumps(self.values, sort_keys=True))


def _emit(args: argparse.Namespace, payload: dict, text: str | None = None) -> None:
    if getattr(args, "format", "text") == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text if text is not None else json.dumps(payload, indent=2, sort_keys=True))


# --- hub ----------------------------------------------------------------------

def _hub_config(eff: Effective) -> HubConfig:
    cfg = HubConfig(
        host=eff.get("host", "127.0.0.1"),
        tcp_port=eff.get("tcp_port", 7007),
        http_port=eff.get("http_port", 7008),
        store_path=eff.get("store", "wearhub.sqlite"),
        export_dir=eff.get("export_dir", "exports"),
        time_scale=eff.get("time_scale", 1.0),
        keepalive_period_s=eff.get("keepalive_period_s", 1.0),
        grace_s=eff.get("grace_s", 2.0),
        ui_dir=eff.get("ui_dir", ""),
        sync=SyncConfig(
            rounds=eff.get("sync_rounds", 10),
            spacing_s=eff.get("sync_spacing_s", 0.1),
            estimator=eff.get("estimator", "corrected"),
            min_rounds=eff.get("sync_min_rounds", 3),
            min_rtt_filter=eff.get("sync_min_rtt_filter", False),
        ),
    )
    if cfg.sync.estimator not in ("corrected", "legacy"):
        raise UserError(f"unknown estimator {cfg.sync.estimator!r}")
    return cfg


async def _serve_hub(cfg: HubConfig) -> None:
    store = Store(cfg.store_path)
    clock = HubClock(cfg.time_scale)
    manager = SessionManager(store, clock, cfg)
    server = HubServer(manager, clock, cfg)
    await server.start()
    app = build_app(server, cfg.export_dir, cfg.ui_dir or None)
    api_task, api_server = await serve_api(app, cfg.host, cfg.http_port)
    print(
        f"hub up: devices on {cfg.host}:{server.tcp_port}, "
        f"control API on http://{cfg.host}:{cfg.http_port}",
        flush=True,
    )
    try:
        await asyncio.Event().wait()
    except asyncio.CancelledError:
        pass
    finally:
        api_server.should_exit = True
        try:
            await asyncio.wait_for(api_task, timeout=5)
        except (asyncio.TimeoutError, Exception):
            api_task.cancel()
        await server.stop()
        store.close()


def cmd_hub_serve(args: argparse.Namespace) -> int:
    eff = Effective(args)
    cfg = _hub_config(eff)
    eff.check_unknown()
    eff.echo("hub")
    try:
        asyncio.run(_serve_hub(cfg))
    except OSError as exc:
        raise UserError(f"cannot bind hub ports: {exc}") from exc
    return 0


# --- device ---------------------------------------------------------------------

def cmd_device_run(args: argparse.Namespace) -> int:
    eff = Effective(args)
    kind = eff.get("kind", None, cast=str)
    if kind not in ("chest_strap", "watch"):
        raise UserError("--kind must be chest_strap or watch")
    both_mean = eff.get("latency_mean_ms", 0.0)
    both_jitter = eff.get("latency_jitter_ms", 0.0)
    cfg = DeviceConfig(
        kind=kind,
        device_id=eff.get("device_id", ""),
        seed=eff.get("seed", 0),
        true_offset_ns=eff.get("offset_ns", 0),
        drift_ppm=eff.get("drift_ppm", 0.0),
        latency_to_device_mean_ms=eff.get("latency_to_device_mean_ms", both_mean),
        latency_to_device_jitter_ms=both_jitter,
        latency_to_hub_mean_ms=eff.get("latency_to_hub_mean_ms", both_mean),
        latency_to_hub_jitter_ms=both_jitter,
        time_scale=eff.get("time_scale", 1.0),
        hr_rate_hz=eff.get("hr_hz", 1.0),
        acc_rate_hz=eff.get("acc_hz", 0.0),
        gyro_rate_hz=eff.get("gyro_hz", 50.0),
        connect_attempts=eff.get("connect_attempts", 5),
        backoff_s=eff.get("backoff_s", 0.5),
    )
    host = eff.get("hub_host", "127.0.0.1")
    port = eff.get("hub_port", 7007)
    eff.check_unknown()
    eff.echo(f"device {cfg.device_id}")
    try:
        asyncio.run(SimDevice(cfg, host, port).run())
    except DeviceError as exc:
        raise UserError(str(exc)) from exc
    return 0


# --- session client ----------------------------------------------------------------

def _hub_client(args: argparse.Namespace) -> httpx.Client:
    base = getattr(args, "hub_url", None) or "http://127.0.0.1:7008"
    return httpx.Client(base_url=base, timeout=30.0)


def _check(response: httpx.Response) -> dict | list:
    if response.status_code >= 400:
        try:
            body = response.json()
            detail = f"{body.get('error')}: {body.get('detail')}"
        except ValueError:
            detail = response.text
        raise UserError(f"hub returned {response.status_code}: {detail}")
    return response.json()


def cmd_session(args: argparse.Namespace) -> int:
    try:
        with _hub_client(args) as client:
            return _session_action(args, client)
    except httpx.HTTPError as exc:
        raise UserError(f"cannot reach hub: {exc}") from exc


def _session_action(args: argparse.Namespace, client: httpx.Client) -> int:
    action = args.session_command
    if action == "list":
        sessions = _check(client.get("/sessions"))
        lines = [
            f"{s['id']}  {s['state']:9}  created={s['created_unix_ms']}  title={s['title']!r}"
            for s in sessions
        ]
        _emit(args, {"sessions": sessions}, "\n".join(lines) if lines else "(no sessions)")
        return 0
    if action == "show":
        meta = _check(client.get(f"/sessions/{_need_id(args)}"))
        _emit(args, meta)
        return 0
    if action == "start":
        meta = _check(
            client.post(
                "/sessions",
                json={"title": args.title or "", "description": args.description or ""},
            )
        )
        started = _check(client.post(f"/sessions/{meta['id']}/start"))
        _emit(args, started, f"recording session {started['id']}")
        return 0
    if action == "stop":
        meta = _check(client.post(f"/sessions/{_need_id(args)}/stop"))
        _emit(args, meta, f"stopped session {meta['id']} after {meta['duration_ms']} ms")
        return 0
    if action == "export":
        sid = _need_id(args)
        manifest = _check(client.get(f"/sessions/{sid}/export"))
        out_root = Path(args.out or ".")
        target = out_root / sid
        tmp = out_root / f"{sid}.tmp-download"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        for name in manifest["files"]:
            response = client.get(f"/sessions/{sid}/export/files/{name}")
            if response.status_code >= 400:
                shutil.rmtree(tmp)
                raise UserError(f"failed to fetch {name}: {response.status_code}")
            (tmp / name).write_bytes(response.content)
        if target.exists():
            shutil.rmtree(target)
        tmp.rename(target)
        _emit(
            args,
            {"session_id": sid, "dir": str(target), "files": manifest["files"]},
            f"exported {len(manifest['files'])} files to {target}",
        )
        return 0
    raise UserError(f"unknown session command {action!r}")


def _need_id(args: argparse.Namespace) -> str:
    if not getattr(args, "id", None):
        raise UserError("--id is required")
    return args.id


# --- demo -----------------------------------------------------------------------

def cmd_demo_usecase(args: argparse.Namespace) -> int:
    eff = Effective(args)
    dropout_run = eff.get("dropout_run", HrModel().dropout_prob["run"])
    hr_model = HrModel(
        dropout_prob={"rest": 0.02, "walk": 0.10, "run": dropout_run}
    )
    cfg = DemoConfig(
        out_dir=Path(eff.get("out", "demo-out")),
        time_scale=eff.get("time_scale", 10.0),
        seed=eff.get("seed", 1234),
        true_offset_ns=eff.get("offset_ns", 123_456_789),
        drift_ppm=eff.get("drift_ppm", 0.0),
        latency_mean_ms=eff.get("latency_mean_ms", 5.0),
        latency_jitter_ms=eff.get("latency_jitter_ms", 1.0),
        hr_model=hr_model,
    )
    eff.check_unknown()
    eff.echo("demo")
    result = run_usecase_sync(cfg)
    summary = result.summary()
    report = result.report
    text = "\n".join(
        [
            f"session {summary['session_id']}: {summary['duration_ms']} ms recorded",
            f"bundle: {summary['bundle_dir']}",
            f"sync: corrected error {result.sync['corrected_error_ns']} ns, "
            f"legacy error {result.sync['legacy_error_ns']} ns "
            f"over {result.sync['rounds_used']} rounds",
            f"agreement: MAE {report.mae_bpm:.2f} bpm, r {report.pearson_r:.4f}, "
            f"zero fraction {report.watch_zero_fraction:.3f}, {report.pair_count} pairs",
        ]
    )
    _emit(args, summary, text)
    return 0


# --- analysis ---------------------------------------------------------------------

def cmd_analyze_sync_error(args: argparse.Namespace) -> int:
    store = Store(args.store)
    try:
        try:
            meta = store.get_session(_need_id_value(args.session))
        except StoreError as exc:
            raise UserError(str(exc)) from exc
        try:
            report = analysis.sync_error_report(meta, args.true_offset_ns)
        except analysis.MissingGroundTruth as exc:
            raise UserError(str(exc)) from exc
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            analysis.write_sync_rounds_csv(meta, out / "sync_rounds.csv")
        payload = report.to_dict()
        _emit(
            args,
            payload,
            "\n".join(f"{k}: {v}" for k, v in payload.items()),
        )
        return 0
    finally:
        store.close()


def _need_id_value(value: str | None) -> str:
    if not value:
        raise UserError("--session is required")
    return value


def cmd_analyze_agreement(args: argparse.Namespace) -> int:
    bundle = Path(args.bundle)
    meta_path = bundle / "meta.csv"
    if not meta_path.is_file():
        raise UserError(f"no meta.csv under {bundle}")
    meta = analysis.read_meta_csv(meta_path)
    try:
        report = analysis.compare_hr(
            bundle / "chest_hr.csv", bundle / "watch_hr.csv", meta
        )
    except analysis.NoOverlapError as exc:
        raise UserError(str(exc)) from exc
    if args.out:
        analysis.write_agreement_csv(report, Path(args.out))
    payload = report.to_dict()
    _emit(args, payload, "\n".join(f"{k}: {v}" for k, v in payload.items()))
    return 0


# --- parser ---------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="wearhub", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    top = parser.add_subparsers(dest="group", required=True)

    # hub
    hub = top.add_parser("hub", help="run the collection hub")
    hub_sub = hub.add_subparsers(dest="hub_command", required=True)
    serve = hub_sub.add_parser("serve", help="start the hub TCP listener and control API")
    serve.add_argument("--host")
    serve.add_argument("--tcp-port", type=int, dest="tcp_port")
    serve.add_argument("--http-port", type=int, dest="http_port")
    serve.add_argument("--store")
    serve.add_argument("--export-dir", dest="export_dir")
    serve.add_argument("--time-scale", type=float, dest="time_scale")
    serve.add_argument("--sync-rounds", type=int, dest="sync_rounds")
    serve.add_argument("--sync-spacing-s", type=float, dest="sync_spacing_s")
    serve.add_argument("--sync-min-rounds", type=int, dest="sync_min_rounds")
    serve.add_argument("--sync-min-rtt-filter", type=_parse_bool, dest="sync_min_rtt_filter")
    serve.add_argument("--estimator", choices=["corrected", "legacy"])
    serve.add_argument("--keepalive-period-s", type=float, dest="keepalive_period_s")
    serve.add_argument("--grace-s", type=float, dest="grace_s")
    serve.add_argument("--ui-dir", dest="ui_dir")
    serve.add_argument("--config")
    serve.set_defaults(func=cmd_hub_serve)

    # device
    device = top.add_parser("device", help="run a simulated device")
    device_sub = device.add_subparsers(dest="device_command", required=True)
    run = device_sub.add_parser("run", help="connect a simulated device to the hub")
    run.add_argument("--kind", choices=["chest_strap", "watch"])
    run.add_argument("--device-id", dest="device_id")
    run.add_argument("--hub-host", dest="hub_host")
    run.add_argument("--hub-port", type=int, dest="hub_port")
    run.add_argument("--seed", type=int)
    run.add_argument("--offset-ns", type=int, dest="offset_ns")
    run.add_argument("--drift-ppm", type=float, dest="drift_ppm")
    run.add_argument("--latency-mean-ms", type=float, dest="latency_mean_ms")
    run.add_argument("--latency-jitter-ms", type=float, dest="latency_jitter_ms")
    run.add_argument("--latency-to-device-mean-ms", type=float, dest="latency_to_device_mean_ms")
    run.add_argument("--latency-to-hub-mean-ms", type=float, dest="latency_to_hub_mean_ms")
    run.add_argument("--time-scale", type=float, dest="time_scale")
    run.add_argument("--hr-hz", type=float, dest="hr_hz")
    run.add_argument("--acc-hz", type=float, dest="acc_hz")
    run.add_argument("--gyro-hz", type=float, dest="gyro_hz")
    run.add_argument("--connect-attempts", type=int, dest="connect_attempts")
    run.add_argument("--backoff-s", type=float, dest="backoff_s")
    run.add_argument("--config")
    run.set_defaults(func=cmd_device_run)

    # session
    session = top.add_parser("session", help="drive sessions on a running hub")
    session_sub = session.add_subparsers(dest="session_command", required=True)
    for name, help_text in [
        ("list", "list stored sessions"),
        ("show", "show one session"),
        ("start", "create a session and start recording"),
        ("stop", "stop the recording session"),
        ("export", "export a session's CSV bundle"),
    ]:
        sp = session_sub.add_parser(name, help=help_text)
        sp.add_argument("--hub-url", dest="hub_url")
        sp.add_argument("--format", choices=["text", "json"], default="text")
        if name in ("show", "stop", "export"):
            sp.add_argument("--id")
        if name == "start":
            sp.add_argument("--title")
            sp.add_argument("--description")
        if name == "export":
            sp.add_argument("--out")
        sp.set_defaults(func=cmd_session)

    # demo
    demo = top.add_parser("demo", help="scripted end-to-end runs")
    demo_sub = demo.add_subparsers(dest="demo_command", required=True)
    usecase = demo_sub.add_parser(
        "usecase", help="hub + both devices through the reference protocol"
    )
    usecase.add_argument("--out")
    usecase.add_argument("--time-scale", type=float, dest="time_scale")
    usecase.add_argument("--seed", type=int)
    usecase.add_argument("--offset-ns", type=int, dest="offset_ns")
    usecase.add_argument("--drift-ppm", type=float, dest="drift_ppm")
    usecase.add_argument("--latency-mean-ms", type=float, dest="latency_mean_ms")
    usecase.add_argument("--latency-jitter-ms", type=float, dest="latency_jitter_ms")
    usecase.add_argument("--dropout-run", type=float, dest="dropout_run")
    usecase.add_argument("--format", choices=["text", "json"], default="text")
    usecase.add_argument("--config")
    usecase.set_defaults(func=cmd_demo_usecase)

    # analyze
    analyze = top.add_parser("analyze", help="reports over stored sessions and bundles")
    analyze_sub = analyze.add_subparsers(dest="analyze_command", required=True)
    sync_err = analyze_sub.add_parser(
        "sync-error", help="estimator error against simulator ground truth"
    )
    sync_err.add_argument("--session", required=True)
    sync_err.add_argument("--store", default="wearhub.sqlite")
    sync_err.add_argument("--true-offset-ns", type=int, dest="true_offset_ns")
    sync_err.add_argument("--out")
    sync_err.add_argument("--format", choices=["text", "json"], default="text")
    sync_err.set_defaults(func=cmd_analyze_sync_error)
    agreement = analyze_sub.add_parser(
        "agreement", help="HR agreement report over an exported bundle"
    )
    agreement.add_argument("--bundle", required=True)
    agreement.add_argument("--out")
    agreement.add_argument("--format", choices=["text", "json"], default="text")
    agreement.set_defaults(func=cmd_analyze_agreement)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(asctime)s %(name)s %(levelname)s %(message)s",
        )
        return args.func(args) or 0
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 0
    except Exception as exc:  # internal failure
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
