"""SQLite persistence for bundles, transmissions, and acknowledgements.

Plain stdlib sqlite3, one short-lived connection per operation, writes
serialized behind a process-wide lock. Complex fields (hop list,
security blocks, fragment metadata) are stored as JSON text. Schema
upgrades are additive: missing columns are diffed against the declared
shape and added with ALTER TABLE. A database that fails to open is
moved aside with a timestamp suffix and recreated empty.
"""

from __future__ import annotations

import csv
import json
import sqlite3
import threading
import time
from pathlib import Path

from .bundles import DTNBundle, from_doc, iso_from_ts, to_doc

SCHEMA_VERSION = 2

# (name, declaration) pairs; order defines CREATE TABLE layout and the
# migration diff compares against the name set.
BUNDLE_COLUMNS = [
    ("bundle_id", "TEXT PRIMARY KEY"),
    ("source", "TEXT NOT NULL"),
    ("destination", "TEXT NOT NULL"),
    ("encrypted_payload", "TEXT NOT NULL"),
    ("payload_hash", "TEXT NOT NULL"),
    ("priority", "TEXT NOT NULL"),
    ("created_at", "REAL NOT NULL"),
    ("ttl_s", "REAL NOT NULL"),
    ("custody", "INTEGER NOT NULL"),
    ("status", "TEXT NOT NULL"),
    ("hop_list", "TEXT NOT NULL"),
    ("security", "TEXT NOT NULL"),
    ("fragment", "TEXT"),
    ("updated_at", "REAL"),
]

TRANSMISSION_COLUMNS = [
    ("id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
    ("bundle_id", "TEXT NOT NULL"),
    ("node_from", "TEXT NOT NULL"),
    ("node_to", "TEXT NOT NULL"),
    ("started_at", "REAL NOT NULL"),
    ("completed_at", "REAL"),
    ("success", "INTEGER"),
    ("bytes", "INTEGER"),
]

ACK_COLUMNS = [
    ("id", "INTEGER PRIMARY KEY AUTOINCREMENT"),
    ("bundle_id", "TEXT NOT NULL"),
    ("kind", "TEXT NOT NULL"),
    ("node_from", "TEXT NOT NULL"),
    ("at", "REAL NOT NULL"),
]

_TABLES = {
    "bundles": BUNDLE_COLUMNS,
    "transmissions": TRANSMISSION_COLUMNS,
    "acks": ACK_COLUMNS,
}


class StoreError(RuntimeError):
    pass


def _create_sql(table: str, columns) -> str:
    body = ", ".join(f"{name} {decl}" for name, decl in columns)
    return f"CREATE TABLE IF NOT EXISTS {table} ({body})"


class BundleStore:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.recovered_from: Path | None = None
        try:
            self._init_schema()
        except sqlite3.DatabaseError:
            self.recovered_from = self.recover_corruption()
            self._init_schema()

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.path, timeout=10.0)
        conn.row_factory = sqlite3.Row
        return conn

    def _init_schema(self):
        with self._lock, self._connect() as conn:
            conn.execute("CREATE TABLE IF NOT EXISTS schema_version"
                         " (version INTEGER NOT NULL)")
            for table, columns in _TABLES.items():
                conn.execute(_create_sql(table, columns))
                self._migrate_table(conn, table, columns)
            row = conn.execute("SELECT version FROM schema_version").fetchone()
            if row is None:
                conn.execute("INSERT INTO schema_version (version) VALUES (?)",
                             (SCHEMA_VERSION,))
            elif row["version"] != SCHEMA_VERSION:
                conn.execute("UPDATE schema_version SET version = ?",
                             (SCHEMA_VERSION,))
            # force a real read so a corrupt file fails here, not later
            conn.execute("SELECT COUNT(*) FROM bundles").fetchone()

    @staticmethod
    def _migrate_table(conn, table: str, columns):
        present = {row["name"] for row in
                   conn.execute(f"PRAGMA table_info({table})")}
        for name, decl in columns:
            if name not in present:
                # additive migration; NOT NULL needs a default on ALTER
                decl = decl.replace(" NOT NULL", " NOT NULL DEFAULT ''") \
                    if "NOT NULL" in decl and "DEFAULT" not in decl else decl
                conn.execute(f"ALTER TABLE {table} ADD COLUMN {name} {decl}")

    def recover_corruption(self) -> Path | None:
        """Move the damaged file aside and start fresh."""
        if not self.path.exists():
            return None
        aside = self.path.with_name(
            f"{self.path.name}.corrupt-{int(time.time())}")
        n = 0
        while aside.exists():
            n += 1
            aside = self.path.with_name(
                f"{self.path.name}.corrupt-{int(time.time())}-{n}")
        self.path.rename(aside)
        return aside

    # ------------------------------------------------------------------

    @staticmethod
    def _bundle_row(bundle: DTNBundle) -> tuple:
        doc = to_doc(bundle)
        return (
            bundle.bundle_id, bundle.source, bundle.destination,
            bundle.encrypted_payload, bundle.payload_hash,
            bundle.priority.name, bundle.created_at, bundle.ttl_s,
            int(bundle.custody), bundle.status.value,
            json.dumps(doc["hop_list"]), json.dumps(doc["security"]),
            json.dumps(doc["fragment"]) if doc["fragment"] else None,
            time.time(),
        )

    def save_bundle(self, bundle: DTNBundle):
        with self._lock, self._connect() as conn:
            conn.execute(
                "INSERT OR REPLACE INTO bundles VALUES"
                " (?,?,?,?,?,?,?,?,?,?,?,?,?,?)", self._bundle_row(bundle))

    def save_many(self, bundles):
        """All-or-nothing batch write."""
        with self._lock, self._connect() as conn:
            conn.executemany(
                "INSERT OR REPLACE INTO bundles VALUES"
                " (?,?,?,?,?,?,?,?,?,?,?,?,?,?)",
                [self._bundle_row(b) for b in bundles])

    @staticmethod
    def _to_bundle(row) -> DTNBundle:
        doc = {
            "bundle_id": row["bundle_id"],
            "source": row["source"],
            "destination": row["destination"],
            "encrypted_payload": row["encrypted_payload"],
            "payload_hash": row["payload_hash"],
            "priority": row["priority"],
            "created_at": iso_from_ts(row["created_at"]),
            "ttl_s": row["ttl_s"],
            "custody": bool(row["custody"]),
            "status": row["status"],
            "hop_list": json.loads(row["hop_list"]),
            "security": json.loads(row["security"]),
            "fragment": json.loads(row["fragment"]) if row["fragment"]
            else None,
        }
        return from_doc(doc)

    def load_bundle(self, bundle_id: str) -> DTNBundle | None:
        with self._connect() as conn:
            row = conn.execute("SELECT * FROM bundles WHERE bundle_id = ?",
                               (bundle_id,)).fetchone()
        return self._to_bundle(row) if row else None

    def history_query(self, status: str | None = None,
                      endpoint: str | None = None,
                      since: float | None = None,
                      until: float | None = None) -> list[DTNBundle]:
        clauses, params = [], []
        if status is not None:
            clauses.append("status = ?")
            params.append(status)
        if endpoint is not None:
            clauses.append("(source = ? OR destination = ?)")
            params.extend([endpoint, endpoint])
        if since is not None:
            clauses.append("created_at >= ?")
            params.append(since)
        if until is not None:
            clauses.append("created_at <= ?")
            params.append(until)
        sql = "SELECT * FROM bundles"
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY created_at, bundle_id"
        with self._connect() as conn:
            rows = conn.execute(sql, params).fetchall()
        return [self._to_bundle(r) for r in rows]

    def count(self, status: str | None = None) -> int:
        sql = "SELECT COUNT(*) AS n FROM bundles"
        params: tuple = ()
        if status is not None:
            sql += " WHERE status = ?"
            params = (status,)
        with self._connect() as conn:
            return conn.execute(sql, params).fetchone()["n"]

    # ------------------------------------------------------------------

    def record_transmission(self, bundle_id: str, node_from: str,
                            node_to: str, started_at: float,
                            completed_at: float | None = None,
                            success: bool | None = None,
                            nbytes: int | None = None):
        with self._lock, self._connect() as conn:
            conn.execute(
                "INSERT INTO transmissions (bundle_id, node_from, node_to,"
                " started_at, completed_at, success, bytes)"
                " VALUES (?,?,?,?,?,?,?)",
                (bundle_id, node_from, node_to, started_at, completed_at,
                 None if success is None else int(success), nbytes))

    def record_ack(self, bundle_id: str, kind: str, node_from: str,
                   at: float):
        with self._lock, self._connect() as conn:
            conn.execute(
                "INSERT INTO acks (bundle_id, kind, node_from, at)"
                " VALUES (?,?,?,?)", (bundle_id, kind, node_from, at))

    def transmissions_for(self, bundle_id: str) -> list[dict]:
        with self._connect() as conn:
            rows = conn.execute(
                "SELECT * FROM transmissions WHERE bundle_id = ?"
                " ORDER BY started_at, id", (bundle_id,)).fetchall()
        return [dict(r) for r in rows]

    def acks_for(self, bundle_id: str) -> list[dict]:
        with self._connect() as conn:
            rows = conn.execute(
                "SELECT * FROM acks WHERE bundle_id = ? ORDER BY at, id",
                (bundle_id,)).fetchall()
        return [dict(r) for r in rows]

    # ------------------------------------------------------------------

    def export_csv(self, table: str, out_path: str | Path) -> int:
        if table not in _TABLES:
            raise StoreError(f"unknown table {table!r}")
        with self._connect() as conn:
            rows = conn.execute(f"SELECT * FROM {table}").fetchall()
        names = [name for name, _ in _TABLES[table]]
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for row in rows:
                writer.writerow([row[n] for n in names])
        return len(rows)
