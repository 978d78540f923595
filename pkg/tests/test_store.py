import random
import sqlite3
import threading

import pytest

from issdtn.bundles import (BundleStatus, Priority, canonical_json,
                            create_bundle, to_doc, transition)
from issdtn.config import KeySettings
from issdtn.fragmentation import maybe_fragment
from issdtn.store import SCHEMA_VERSION, BundleStore, StoreError

KEYS = KeySettings()


def make_bundle(rng, source="toronto", destination="ISS", size=64,
                now=0.0, priority=Priority.NORMAL, custody=True):
    return create_bundle(rng.randbytes(size), source, destination,
                         priority=priority, custody=custody, keys=KEYS,
                         now=now, rng=rng)


@pytest.fixture
def store(tmp_path):
    return BundleStore(tmp_path / "dtn.db")


class TestRoundTrip:
    def test_bundle_survives_save_and_load(self, store):
        rng = random.Random(1)
        b = make_bundle(rng)
        store.save_bundle(b)
        back = store.load_bundle(b.bundle_id)
        assert canonical_json(to_doc(back)) == canonical_json(to_doc(b))

    def test_missing_bundle_is_none(self, store):
        assert store.load_bundle("nothing-0-00") is None

    def test_replace_updates_status(self, store):
        rng = random.Random(2)
        b = make_bundle(rng)
        store.save_bundle(b)
        transition(b, BundleStatus.QUEUED)
        store.save_bundle(b)
        assert store.load_bundle(b.bundle_id).status is BundleStatus.QUEUED
        assert store.count() == 1

    def test_fragment_metadata_round_trips(self, store):
        rng = random.Random(3)
        b = make_bundle(rng, size=4096)
        frags = maybe_fragment(b, 2048, rng=rng)
        assert len(frags) > 1
        store.save_many(frags)
        for f in frags:
            back = store.load_bundle(f.bundle_id)
            assert back.fragment is not None
            assert back.fragment.parent_id == b.bundle_id
            assert canonical_json(to_doc(back)) == canonical_json(to_doc(f))

    @pytest.mark.parametrize("seed", range(10))
    def test_isomorphism_over_random_bundles(self, tmp_path, seed):
        rng = random.Random(seed)
        store = BundleStore(tmp_path / f"iso-{seed}.db")
        bundles = []
        for i in range(8):
            b = make_bundle(
                rng,
                source=rng.choice(["toronto", "london", "moscow"]),
                destination=rng.choice(["ISS", "tokyo"]),
                size=rng.randint(1, 512),
                now=rng.uniform(0, 1e6),
                priority=rng.choice(list(Priority)),
                custody=rng.random() < 0.5)
            bundles.append(b)
        store.save_many(bundles)
        for b in bundles:
            back = store.load_bundle(b.bundle_id)
            assert canonical_json(to_doc(back)) == canonical_json(to_doc(b))

    def test_persists_across_reopen(self, tmp_path):
        rng = random.Random(4)
        path = tmp_path / "dtn.db"
        b = make_bundle(rng)
        BundleStore(path).save_bundle(b)
        again = BundleStore(path)
        assert again.load_bundle(b.bundle_id) is not None
        assert again.recovered_from is None


class TestHistoryQuery:
    def seed_store(self, store):
        rng = random.Random(5)
        out = []
        for i, (src, status) in enumerate([
                ("toronto", BundleStatus.CREATED),
                ("london", BundleStatus.CREATED),
                ("toronto", BundleStatus.CREATED),
                ("moscow", BundleStatus.CREATED)]):
            b = make_bundle(rng, source=src, now=float(i * 100))
            if status is not BundleStatus.CREATED:
                transition(b, status)
            out.append(b)
        transition(out[1], BundleStatus.QUEUED)
        transition(out[3], BundleStatus.QUEUED)
        store.save_many(out)
        return out

    def test_filter_by_status(self, store):
        self.seed_store(store)
        got = store.history_query(status="QUEUED")
        assert len(got) == 2
        assert all(b.status is BundleStatus.QUEUED for b in got)

    def test_filter_by_endpoint_matches_source_or_destination(self, store):
        self.seed_store(store)
        assert len(store.history_query(endpoint="toronto")) == 2
        assert len(store.history_query(endpoint="ISS")) == 4

    def test_time_range(self, store):
        self.seed_store(store)
        got = store.history_query(since=100.0, until=200.0)
        assert [b.created_at for b in got] == [100.0, 200.0]

    def test_ordered_by_created_at(self, store):
        self.seed_store(store)
        got = store.history_query()
        assert [b.created_at for b in got] == sorted(
            b.created_at for b in got)

    def test_combined_filters(self, store):
        self.seed_store(store)
        got = store.history_query(status="QUEUED", endpoint="moscow")
        assert len(got) == 1
        assert got[0].source == "moscow"


class TestSideTables:
    def test_transmissions_recorded_in_order(self, store):
        store.record_transmission("b-1-aa", "toronto", "ISS", 1.0, 2.0,
                                  True, 1163)
        store.record_transmission("b-1-aa", "toronto", "ISS", 5.0, None,
                                  False, 1163)
        rows = store.transmissions_for("b-1-aa")
        assert [r["started_at"] for r in rows] == [1.0, 5.0]
        assert rows[0]["success"] == 1 and rows[1]["success"] == 0

    def test_acks_recorded(self, store):
        store.record_ack("b-1-aa", "custody_ack", "london", 3.0)
        store.record_ack("b-1-aa", "delivery_ack", "ISS", 4.0)
        rows = store.acks_for("b-1-aa")
        assert [r["kind"] for r in rows] == ["custody_ack", "delivery_ack"]


class TestMigration:
    def test_missing_columns_are_added(self, tmp_path):
        path = tmp_path / "old.db"
        conn = sqlite3.connect(path)
        # a pre-fragment schema, two columns short
        conn.execute(
            "CREATE TABLE bundles (bundle_id TEXT PRIMARY KEY,"
            " source TEXT NOT NULL, destination TEXT NOT NULL,"
            " encrypted_payload TEXT NOT NULL, payload_hash TEXT NOT NULL,"
            " priority TEXT NOT NULL, created_at REAL NOT NULL,"
            " ttl_s REAL NOT NULL, custody INTEGER NOT NULL,"
            " status TEXT NOT NULL, hop_list TEXT NOT NULL,"
            " security TEXT NOT NULL)")
        conn.execute("CREATE TABLE schema_version (version INTEGER NOT NULL)")
        conn.execute("INSERT INTO schema_version VALUES (1)")
        conn.commit()
        conn.close()
        store = BundleStore(path)
        conn = sqlite3.connect(path)
        cols = {r[1] for r in conn.execute("PRAGMA table_info(bundles)")}
        conn.close()
        assert {"fragment", "updated_at"} <= cols
        rng = random.Random(6)
        b = make_bundle(rng)
        store.save_bundle(b)
        assert store.load_bundle(b.bundle_id) is not None

    def test_version_stamp_updated(self, tmp_path):
        path = tmp_path / "v.db"
        BundleStore(path)
        conn = sqlite3.connect(path)
        version = conn.execute("SELECT version FROM schema_version"
                               ).fetchone()[0]
        conn.close()
        assert version == SCHEMA_VERSION


class TestCorruptionRecovery:
    def test_garbage_file_moved_aside_and_recreated(self, tmp_path):
        path = tmp_path / "dtn.db"
        path.write_bytes(b"this is not a sqlite database, not even close")
        store = BundleStore(path)
        assert store.recovered_from is not None
        assert store.recovered_from.exists()
        assert "corrupt" in store.recovered_from.name
        rng = random.Random(7)
        b = make_bundle(rng)
        store.save_bundle(b)
        assert store.count() == 1

    def test_recovery_preserves_damaged_bytes(self, tmp_path):
        path = tmp_path / "dtn.db"
        garbage = b"SQLite format 3\x00 but then it all goes wrong"
        path.write_bytes(garbage)
        store = BundleStore(path)
        assert store.recovered_from.read_bytes() == garbage


class TestExport:
    def test_csv_export_counts_and_header(self, store, tmp_path):
        rng = random.Random(8)
        store.save_many([make_bundle(rng, now=float(i)) for i in range(3)])
        out = tmp_path / "bundles.csv"
        n = store.export_csv("bundles", out)
        assert n == 3
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("bundle_id,source,destination")
        assert len(lines) == 4

    def test_unknown_table_rejected(self, store, tmp_path):
        with pytest.raises(StoreError):
            store.export_csv("users", tmp_path / "x.csv")


class TestConcurrency:
    def test_parallel_writers_all_land(self, tmp_path):
        store = BundleStore(tmp_path / "par.db")

        def writer(seed):
            rng = random.Random(seed)
            for i in range(10):
                store.save_bundle(make_bundle(rng, now=float(seed * 100 + i)))

        threads = [threading.Thread(target=writer, args=(s,))
                   for s in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert store.count() == 40
