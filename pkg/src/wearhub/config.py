"""Runtime configuration dataclasses and the key=value config file format.

Config files are flat ``key = value`` lines (``#`` comments allowed);
keys use the same names as the CLI flag destinations.  Flags override
file values, and every effective value is echoed at startup.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

UNITS = {"acc": "m/s^2", "gyro": "deg/s"}


@dataclass
class SyncConfig:
    rounds: int = 10
    spacing_s: float = 0.1
    estimator: str = "corrected"  # or "legacy"
    min_rounds: int = 3
    min_rtt_filter: bool = False
    rtt_filter_factor: float = 1.5
    retry_delay_s: float = 2.0
    tail_timeout_s: float = 0.5  # extra wait for straggler pongs


@dataclass
class HubConfig:
    host: str = "127.0.0.1"
    tcp_port: int = 7007
    http_port: int = 7008
    store_path: str = "wearhub.sqlite"
    export_dir: str = "exports"
    time_scale: float = 1.0
    keepalive_period_s: float = 1.0
    keepalive_misses: int = 3
    grace_s: float = 2.0
    ui_dir: str = ""
    sync: SyncConfig = field(default_factory=SyncConfig)

    def to_dict(self) -> dict:
        return asdict(self)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value pairs; later duplicates win."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values
