import hashlib
import random
import re

import pytest

from issdtn.bundles import (
    BundleQueue,
    BundleStatus,
    DTNBundle,
    FragmentInfo,
    LifecycleError,
    Priority,
    canonical_json,
    create_bundle,
    expire_ttl,
    from_doc,
    record_hop,
    serialized_size,
    to_doc,
    transition,
)


def make(source="toronto", dest="ISS", priority=Priority.NORMAL, now=0.0,
         custody=True, payload=b"hello", rng=None):
    return create_bundle(payload, source, dest, priority=priority,
                         custody=custody, now=now, rng=rng)


class TestCreateBundle:
    def test_ids_unique(self):
        a, b = make(), make()
        assert a.bundle_id != b.bundle_id

    def test_payload_hash_matches_sha256(self):
        b = make(payload=b"hello")
        assert b.payload_hash == hashlib.sha256(b"hello").hexdigest()

    def test_id_embeds_source_and_time(self):
        b = make(source="london", now=12.5)
        assert re.fullmatch(r"london-12500-[0-9a-f]{8}", b.bundle_id)

    def test_initial_state(self):
        b = make(source="tokyo")
        assert b.status is BundleStatus.CREATED
        assert b.hop_list == ["tokyo"]
        assert b.security.bab is None
        assert b.security.pib.signature

    def test_empty_payload_rejected(self):
        with pytest.raises(ValueError):
            make(payload=b"")

    def test_bad_ttl_rejected(self):
        with pytest.raises(ValueError):
            create_bundle(b"x", "toronto", "ISS", ttl_s=0)

    def test_broadcast_source_rejected(self):
        with pytest.raises(ValueError):
            create_bundle(b"x", "*", "ISS")

    def test_broadcast_destination_allowed(self):
        assert make(dest="*").destination == "*"

    def test_seeded_rng_reproducible_ids(self):
        a = make(rng=random.Random(5))
        b = make(rng=random.Random(5))
        assert a.bundle_id == b.bundle_id


class TestLifecycle:
    def test_happy_path(self):
        b = make()
        for s in (BundleStatus.QUEUED, BundleStatus.IN_TRANSIT,
                  BundleStatus.DELIVERED):
            transition(b, s)
        assert b.status is BundleStatus.DELIVERED

    def test_custody_requeue_edge(self):
        b = make()
        transition(b, BundleStatus.QUEUED)
        transition(b, BundleStatus.IN_TRANSIT)
        transition(b, BundleStatus.QUEUED)
        assert b.status is BundleStatus.QUEUED

    def test_terminal_states_frozen(self):
        for terminal in (BundleStatus.DELIVERED, BundleStatus.FAILED,
                         BundleStatus.EXPIRED):
            b = make()
            b.status = terminal
            for target in BundleStatus:
                with pytest.raises(LifecycleError):
                    transition(b, target)

    def test_illegal_edges_rejected(self):
        b = make()
        with pytest.raises(LifecycleError):
            transition(b, BundleStatus.IN_TRANSIT)  # must queue first
        with pytest.raises(LifecycleError):
            transition(b, BundleStatus.DELIVERED)

    def test_hop_list_rejects_repeats(self):
        b = make(source="toronto")
        record_hop(b, "london")
        with pytest.raises(LifecycleError):
            record_hop(b, "toronto")
        assert b.hop_list == ["toronto", "london"]
        assert b.hops_taken == 1


class TestQueue:
    def test_expedited_first(self):
        q = BundleQueue()
        normal = make(priority=Priority.NORMAL, now=1.0)
        expedited = make(priority=Priority.EXPEDITED, now=2.0)
        q.enqueue(normal)
        q.enqueue(expedited)
        assert q.next_for_transmission() is expedited
        assert q.next_for_transmission() is normal

    def test_fifo_within_priority(self):
        q = BundleQueue()
        first = make(now=1.0)
        second = make(now=2.0)
        q.enqueue(second)
        q.enqueue(first)
        assert q.next_for_transmission() is first

    def test_id_tiebreak_at_equal_priority_and_time(self):
        q = BundleQueue()
        a = make(now=5.0)
        b = make(now=5.0)
        lo, hi = sorted((a, b), key=lambda x: x.bundle_id)
        q.enqueue(hi)
        q.enqueue(lo)
        assert q.next_for_transmission() is lo

    def test_duplicate_rejected(self):
        q = BundleQueue()
        b = make()
        q.enqueue(b)
        with pytest.raises(ValueError):
            q.enqueue(b)

    def test_enqueue_sets_queued(self):
        q = BundleQueue()
        b = make()
        q.enqueue(b)
        assert b.status is BundleStatus.QUEUED
        assert b.bundle_id in q
        assert len(q) == 1

    def test_wrong_status_rejected(self):
        q = BundleQueue()
        b = make()
        b.status = BundleStatus.DELIVERED
        with pytest.raises(LifecycleError):
            q.enqueue(b)

    def test_remove(self):
        q = BundleQueue()
        b = make()
        q.enqueue(b)
        assert q.remove(b.bundle_id)
        assert not q.remove(b.bundle_id)
        assert len(q) == 0

    def test_drain_order_is_total(self):
        rng = random.Random(42)
        bundles = [make(priority=rng.choice(list(Priority)),
                        now=float(rng.randint(0, 5))) for _ in range(30)]
        reference = None
        for _ in range(200):
            rng.shuffle(bundles)
            q = BundleQueue()
            for b in bundles:
                b.status = BundleStatus.CREATED if reference is None \
                    else BundleStatus.QUEUED
                q.enqueue(b)
            order = [q.next_for_transmission().bundle_id for _ in range(len(bundles))]
            if reference is None:
                reference = order
            assert order == reference


class TestExpiry:
    def test_lapsed_bundle_expires_and_leaves_queue(self):
        q = BundleQueue()
        b = make(now=0.0)
        b.ttl_s = 10.0
        q.enqueue(b)
        expired = expire_ttl(10.0, [b], queues=[q])
        assert expired == [b.bundle_id]
        assert b.status is BundleStatus.EXPIRED
        assert len(q) == 0

    def test_terminal_bundles_immune(self):
        b = make(now=0.0)
        b.ttl_s = 1.0
        b.status = BundleStatus.DELIVERED
        assert expire_ttl(100.0, [b]) == []
        assert b.status is BundleStatus.DELIVERED

    def test_unexpired_untouched(self):
        b = make(now=0.0)
        assert expire_ttl(b.ttl_s - 1.0, [b]) == []
        assert b.status is BundleStatus.CREATED


class TestCanonicalDocument:
    def test_roundtrip(self):
        b = make(now=276.0)
        transition(b, BundleStatus.QUEUED)
        record_hop(b, "london")
        assert from_doc(to_doc(b)) == b

    def test_fragment_roundtrip(self):
        b = make()
        b.fragment = FragmentInfo(parent_id="p-1", fragment_number=2,
                                  total_fragments=5,
                                  parent_payload_hash="aa" * 32,
                                  parent_cipher_hash="bb" * 32)
        assert from_doc(to_doc(b)) == b

    def test_document_fields(self):
        doc = to_doc(make())
        assert set(doc) == {"bundle_id", "source", "destination",
                            "encrypted_payload", "payload_hash", "priority",
                            "created_at", "ttl_s", "custody", "hop_list",
                            "status", "security", "fragment"}
        assert doc["created_at"].startswith("1970-01-01T00:00:00")

    def test_canonical_json_stable(self):
        b = make()
        assert canonical_json(to_doc(b)) == canonical_json(to_doc(b))
        assert "\n" not in canonical_json(to_doc(b))

    def test_serialized_size_counts_bytes(self):
        b = make()
        assert serialized_size(b) == len(canonical_json(to_doc(b)))


class TestFragmentInfo:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            FragmentInfo("p", 5, 5, "a" * 64, "b" * 64)
        with pytest.raises(ValueError):
            FragmentInfo("p", 0, 0, "a" * 64, "b" * 64)
