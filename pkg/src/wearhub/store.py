"""Durable session persistence and bit-exact CSV export.

A single-file SQLite database holds session metadata and one table per
stream.  Per-stream timestamps are strictly increasing within a session;
appends to finalized sessions are rejected.  Export is a pure function of
stored state: repeated exports are byte-identical.
"""

from __future__ import annotations

import csv
import os
import shutil
import sqlite3
import uuid
from pathlib import Path

from .timebase import TimeAnchor

STREAM_COLUMNS: dict[str, tuple[str, ...]] = {
    "chest_hr": ("arrival_boot_ns", "arrival_unix_ms", "bpm"),
    "chest_acc": ("device_epoch2000_ns", "unix_ns", "x", "y", "z"),
    "watch_hr": ("device_boot_ns", "rebased_boot_ns", "bpm"),
    "watch_acc": ("device_boot_ns", "rebased_boot_ns", "x", "y", "z"),
    "watch_gyro": ("device_boot_ns", "rebased_boot_ns", "x", "y", "z"),
}

_FLOAT_COLUMNS = frozenset({"x", "y", "z"})

META_COLUMNS = (
    "id",
    "title",
    "description",
    "created_unix_ms",
    "start_boot_ns",
    "start_unix_ms",
    "end_boot_ns",
    "end_unix_ms",
    "mean_offset_ns",
    "sync_rounds_used",
    "estimator",
    "config_text",
)

# states: ready -> recording -> stopping (grace window) -> stopped
OPEN_STATES = frozenset({"ready", "recording", "stopping"})


class StoreError(Exception):
    pass


class UnknownSession(StoreError):
    pass


class SessionClosed(StoreError):
    pass


class NonMonotonicTimestamp(StoreError):
    pass


class SessionNotFinalized(StoreError):
    """Export requested before the session reached its durable stopped state."""


def new_session_id() -> str:
    return uuid.uuid4().hex[:12]


class Store:
    """Single-writer session store; concurrent readers are fine."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path)
        self._conn.execute("PRAGMA foreign_keys = ON")
        if self.path != ":memory:":
            self._conn.execute("PRAGMA journal_mode = WAL")
        self._create_tables()
        self._last_ts: dict[tuple[str, str], int] = {}

    def close(self) -> None:
        self._conn.close()

    def _create_tables(self) -> None:
        self._conn.execute(
            """CREATE TABLE IF NOT EXISTS sessions (
                id TEXT PRIMARY KEY,
                title TEXT NOT NULL,
                description TEXT NOT NULL,
                created_unix_ms INTEGER NOT NULL,
                start_boot_ns INTEGER,
                start_unix_ms INTEGER,
                end_boot_ns INTEGER,
                end_unix_ms INTEGER,
                mean_offset_ns INTEGER,
                sync_rounds_used INTEGER,
                estimator TEXT,
                config_text TEXT NOT NULL DEFAULT '',
                state TEXT NOT NULL DEFAULT 'ready')"""
        )
        for table, cols in STREAM_COLUMNS.items():
            decls = ", ".join(
                f"{c} REAL NOT NULL" if c in _FLOAT_COLUMNS else f"{c} INTEGER NOT NULL"
                for c in cols
            )
            self._conn.execute(
                f"""CREATE TABLE IF NOT EXISTS {table} (
                    session_id TEXT NOT NULL REFERENCES sessions(id) ON DELETE CASCADE,
                    {decls})"""
            )
            self._conn.execute(
                f"CREATE INDEX IF NOT EXISTS idx_{table}_session ON {table}(session_id, {cols[0]})"
            )
        self._conn.commit()

    # --- session lifecycle ----------------------------------------------

    def create_session(self, title: str, description: str, created_unix_ms: int,
                       session_id: str | None = None) -> str:
        sid = session_id or new_session_id()
        self._conn.execute(
            "INSERT INTO sessions (id, title, description, created_unix_ms) VALUES (?,?,?,?)",
            (sid, title, description, created_unix_ms),
        )
        self._conn.commit()
        return sid

    def delete_session(self, session_id: str) -> None:
        self._require(session_id)
        self._conn.execute("DELETE FROM sessions WHERE id=?", (session_id,))
        self._conn.commit()
        self._last_ts = {k: v for k, v in self._last_ts.items() if k[0] != session_id}

    def set_started(
        self,
        session_id: str,
        anchor: TimeAnchor,
        mean_offset_ns: int,
        sync_rounds_used: int,
        estimator: str,
        config_text: str,
    ) -> None:
        row = self._require(session_id)
        if row["state"] != "ready":
            raise SessionClosed(f"session {session_id} is {row['state']}, not ready")
        self._conn.execute(
            """UPDATE sessions SET start_boot_ns=?, start_unix_ms=?, mean_offset_ns=?,
               sync_rounds_used=?, estimator=?, config_text=?, state='recording' WHERE id=?""",
            (anchor.boot_ns, anchor.unix_ms, mean_offset_ns, sync_rounds_used,
             estimator, config_text, session_id),
        )
        self._conn.commit()

    def set_stopping(self, session_id: str, end_anchor: TimeAnchor) -> None:
        """Record the end anchor; appends stay legal through the grace window."""
        row = self._require(session_id)
        if row["state"] != "recording":
            raise SessionClosed(f"session {session_id} is {row['state']}, not recording")
        self._conn.execute(
            "UPDATE sessions SET end_boot_ns=?, end_unix_ms=?, state='stopping' WHERE id=?",
            (end_anchor.boot_ns, end_anchor.unix_ms, session_id),
        )
        self._conn.commit()

    def finalize(self, session_id: str) -> None:
        row = self._require(session_id)
        if row["state"] == "stopped":
            return
        if row["state"] != "stopping":
            raise SessionClosed(f"session {session_id} is {row['state']}, not stopping")
        self._conn.execute("UPDATE sessions SET state='stopped' WHERE id=?", (session_id,))
        self._conn.commit()

    # --- appends ----------------------------------------------------------

    def append(self, session_id: str, stream: str, row: tuple) -> None:
        self.append_many(session_id, stream, [row])

    def append_many(self, session_id: str, stream: str, rows: list[tuple]) -> None:
        """Append rows (in given order) to one stream.

        Raises NonMonotonicTimestamp on the first offending row; rows
        before it are kept, rows after it are not attempted.
        """
        if stream not in STREAM_COLUMNS:
            raise StoreError(f"unknown stream {stream!r}")
        if not rows:
            return
        meta = self._require(session_id)
        if meta["state"] == "ready":
            raise SessionClosed(f"session {session_id} not started")
        if meta["state"] == "stopped":
            raise SessionClosed(f"session {session_id} already finalized")
        cols = STREAM_COLUMNS[stream]
        key = (session_id, stream)
        last = self._last_ts.get(key)
        if last is None:
            cur = self._conn.execute(
                f"SELECT MAX({cols[0]}) FROM {stream} WHERE session_id=?", (session_id,)
            )
            value = cur.fetchone()[0]
            last = value if value is not None else None
        accepted = []
        error = None
        for row in rows:
            if len(row) != len(cols):
                error = StoreError(f"{stream} rows carry {len(cols)} columns")
                break
            ts = row[0]
            if last is not None and ts <= last:
                error = NonMonotonicTimestamp(
                    f"{stream} timestamp {ts} not after {last} in session {session_id}"
                )
                break
            last = ts
            accepted.append(row)
        if accepted:
            placeholders = ",".join("?" * (1 + len(cols)))
            self._conn.executemany(
                f"INSERT INTO {stream} VALUES ({placeholders})",
                [(session_id, *row) for row in accepted],
            )
            self._conn.commit()
            self._last_ts[key] = accepted[-1][0]
        if error is not None:
            raise error

    def append_filtering(self, session_id: str, stream: str, rows: list[tuple]) -> tuple[int, int]:
        """Append rows, skipping (not aborting on) non-monotonic ones.

        Returns (stored, rejected).  The ingest path uses this so one bad
        row never blocks the rest of a batch.
        """
        if stream not in STREAM_COLUMNS:
            raise StoreError(f"unknown stream {stream!r}")
        if not rows:
            return 0, 0
        meta = self._require(session_id)
        if meta["state"] == "ready":
            raise SessionClosed(f"session {session_id} not started")
        if meta["state"] == "stopped":
            raise SessionClosed(f"session {session_id} already finalized")
        cols = STREAM_COLUMNS[stream]
        key = (session_id, stream)
        last = self._last_ts.get(key)
        if last is None:
            cur = self._conn.execute(
                f"SELECT MAX({cols[0]}) FROM {stream} WHERE session_id=?", (session_id,)
            )
            last = cur.fetchone()[0]
        accepted, rejected = [], 0
        for row in rows:
            ts = row[0]
            if len(row) != len(cols) or (last is not None and ts <= last):
                rejected += 1
                continue
            last = ts
            accepted.append(row)
        if accepted:
            placeholders = ",".join("?" * (1 + len(cols)))
            self._conn.executemany(
                f"INSERT INTO {stream} VALUES ({placeholders})",
                [(session_id, *row) for row in accepted],
            )
            self._conn.commit()
            self._last_ts[key] = accepted[-1][0]
        return len(accepted), rejected

    # --- queries ----------------------------------------------------------

    def _require(self, session_id: str) -> dict:
        cur = self._conn.execute("SELECT * FROM sessions WHERE id=?", (session_id,))
        row = cur.fetchone()
        if row is None:
            raise UnknownSession(f"unknown session {session_id!r}")
        names = [d[0] for d in cur.description]
        return dict(zip(names, row))

    def get_session(self, session_id: str) -> dict:
        meta = self._require(session_id)
        if meta["start_unix_ms"] is not None and meta["end_unix_ms"] is not None:
            meta["duration_ms"] = meta["end_unix_ms"] - meta["start_unix_ms"]
        else:
            meta["duration_ms"] = None
        return meta

    def list_sessions(self) -> list[dict]:
        cur = self._conn.execute(
            "SELECT id FROM sessions ORDER BY created_unix_ms DESC, id DESC"
        )
        return [self.get_session(r[0]) for r in cur.fetchall()]

    def stream_counts(self, session_id: str) -> dict[str, int]:
        self._require(session_id)
        return {
            stream: self._conn.execute(
                f"SELECT COUNT(*) FROM {stream} WHERE session_id=?", (session_id,)
            ).fetchone()[0]
            for stream in STREAM_COLUMNS
        }

    def stream_rows(self, session_id: str, stream: str) -> list[tuple]:
        if stream not in STREAM_COLUMNS:
            raise StoreError(f"unknown stream {stream!r}")
        self._require(session_id)
        cols = STREAM_COLUMNS[stream]
        cur = self._conn.execute(
            f"SELECT {', '.join(cols)} FROM {stream} WHERE session_id=? ORDER BY {cols[0]} ASC",
            (session_id,),
        )
        return cur.fetchall()

    # --- CSV export ---------------------------------------------------------

    def export_csv(self, session_id: str, out_dir: str | Path) -> Path:
        """Write the session bundle into out_dir/<session id>/.

        The bundle is built in a temp directory and moved into place, so a
        failed export never leaves a partial bundle.  Files for empty
        streams still carry their header row.
        """
        meta = self.get_session(session_id)
        if meta["state"] != "stopped":
            raise SessionNotFinalized(
                f"session {session_id} is {meta['state']}; export needs a finalized session"
            )
        bundle = Path(out_dir) / session_id
        tmp = bundle.with_name(f"{bundle.name}.tmp-{os.getpid()}")
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        try:
            self._write_meta_csv(meta, tmp / "meta.csv")
            for stream, cols in STREAM_COLUMNS.items():
                self._write_stream_csv(session_id, stream, cols, tmp / f"{stream}.csv")
            if bundle.exists():
                shutil.rmtree(bundle)
            os.replace(tmp, bundle)
        finally:
            if tmp.exists():
                shutil.rmtree(tmp)
        return bundle

    @staticmethod
    def _write_meta_csv(meta: dict, path: Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(META_COLUMNS)
            w.writerow(["" if meta[c] is None else meta[c] for c in META_COLUMNS])

    def _write_stream_csv(self, session_id: str, stream: str, cols: tuple, path: Path) -> None:
        float_idx = {i for i, c in enumerate(cols) if c in _FLOAT_COLUMNS}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("session_id", *cols))
            for row in self.stream_rows(session_id, stream):
                w.writerow(
                    (session_id, *(
                        f"{v:.6f}" if i in float_idx else v for i, v in enumerate(row)
                    ))
                )


EXPORT_FILES = ("meta.csv",) + tuple(f"{s}.csv" for s in STREAM_COLUMNS)
