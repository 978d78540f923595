import random

import pytest

from issdtn.bundles import Priority, create_bundle
from issdtn.config import KeySettings
from issdtn.custody import (AckKind, AckMessage, CustodyManager,
                            CustodyTransferred, MarkDelivered, MarkFailed,
                            Retransmit)

KEYS = KeySettings()


def make_bundle(custody=True, now=0.0):
    rng = random.Random(7)
    return create_bundle(b"payload", "toronto", "london", Priority.NORMAL,
                         custody=custody, keys=KEYS, now=now, rng=rng)


class TestRegister:
    def test_deadline_is_now_plus_timeout(self):
        mgr = CustodyManager(ack_timeout_s=30.0)
        b = make_bundle()
        entry = mgr.register_pending(b, "london", now=100.0)
        assert entry.deadline == 130.0
        assert entry.expected_from == "london"
        assert entry.retransmit_count == 0
        assert mgr.pending[b.bundle_id] is entry

    def test_non_custody_bundle_not_tracked(self):
        mgr = CustodyManager()
        b = make_bundle(custody=False)
        assert mgr.register_pending(b, "london", now=0.0) is None
        assert mgr.pending == {}

    def test_reregister_preserves_counter(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        mgr.pending[b.bundle_id].retransmit_count = 3
        entry = mgr.register_pending(b, "moscow", now=50.0)
        assert entry.retransmit_count == 3
        assert entry.expected_from == "moscow"
        assert entry.deadline == 80.0


class TestAcks:
    def test_custody_ack_clears_and_transfers(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        effects = mgr.on_ack(AckMessage(AckKind.CUSTODY_ACK, b.bundle_id,
                                        "london", 1.0))
        assert effects == [CustodyTransferred(b.bundle_id, "london")]
        assert b.bundle_id not in mgr.pending
        assert mgr.custody_acks == 1

    def test_unknown_ack_ignored(self):
        mgr = CustodyManager()
        effects = mgr.on_ack(AckMessage(AckKind.CUSTODY_ACK, "nope-1-aa",
                                        "london", 1.0))
        assert effects == []
        assert mgr.custody_acks == 0

    def test_duplicate_ack_ignored(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        ack = AckMessage(AckKind.CUSTODY_ACK, b.bundle_id, "london", 1.0)
        mgr.on_ack(ack)
        assert mgr.on_ack(ack) == []
        assert mgr.custody_acks == 1

    def test_delivery_ack_marks_delivered_and_clears(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        effects = mgr.on_ack(AckMessage(AckKind.DELIVERY_ACK, b.bundle_id,
                                        "london", 4.5))
        assert effects == [MarkDelivered(b.bundle_id, 4.5)]
        assert mgr.pending == {}
        assert mgr.delivery_acks == 1

    def test_delivery_ack_without_pending_still_delivers(self):
        # non-custody bundles have no pending entry but still complete
        mgr = CustodyManager()
        effects = mgr.on_ack(AckMessage(AckKind.DELIVERY_ACK, "b-1-ff",
                                        "london", 2.0))
        assert effects == [MarkDelivered("b-1-ff", 2.0)]


class TestNaks:
    def test_nak_triggers_immediate_retransmit(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        effects = mgr.on_ack(AckMessage(AckKind.CUSTODY_NAK, b.bundle_id,
                                        "london", 2.0))
        assert effects == [Retransmit(b.bundle_id, 1)]
        assert mgr.pending[b.bundle_id].retransmit_count == 1
        assert mgr.pending[b.bundle_id].deadline == 32.0
        assert mgr.naks == 1
        assert mgr.retransmissions == 1

    def test_nak_with_retries_exhausted_fails(self):
        mgr = CustodyManager(max_retries=5)
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        mgr.pending[b.bundle_id].retransmit_count = 5
        effects = mgr.on_ack(AckMessage(AckKind.CUSTODY_NAK, b.bundle_id,
                                        "london", 2.0))
        assert len(effects) == 1
        assert isinstance(effects[0], MarkFailed)
        assert b.bundle_id not in mgr.pending

    def test_nak_for_unknown_bundle_ignored(self):
        mgr = CustodyManager()
        assert mgr.on_ack(AckMessage(AckKind.CUSTODY_NAK, "ghost-1-00",
                                     "london", 2.0)) == []
        assert mgr.naks == 0


class TestTimeouts:
    def test_nothing_lapsed_no_effects(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        assert mgr.on_timeout(now=29.9) == []

    def test_lapsed_entry_retransmits_with_fresh_deadline(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        effects = mgr.on_timeout(now=30.0)
        assert effects == [Retransmit(b.bundle_id, 1)]
        assert mgr.pending[b.bundle_id].deadline == 60.0
        assert mgr.retransmissions == 1

    def test_exhausted_entry_fails(self):
        mgr = CustodyManager(max_retries=5)
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        mgr.pending[b.bundle_id].retransmit_count = 5
        effects = mgr.on_timeout(now=31.0)
        assert effects == [MarkFailed(b.bundle_id, effects[0].reason)]
        assert mgr.pending == {}

    def test_timeout_effects_sorted_by_bundle_id(self):
        mgr = CustodyManager()
        ids = []
        for i in range(5):
            b = make_bundle(now=float(i))
            mgr.register_pending(b, "london", now=0.0)
            ids.append(b.bundle_id)
        effects = mgr.on_timeout(now=100.0)
        assert [e.bundle_id for e in effects] == sorted(ids)

    def test_attempts_capped_at_initial_plus_max_retries(self):
        # drive one entry through every timeout it will ever get
        mgr = CustodyManager(ack_timeout_s=30.0, max_retries=5)
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        retransmits = 0
        failed = False
        t = 0.0
        for _ in range(20):
            t += 30.0
            for eff in mgr.on_timeout(now=t):
                if isinstance(eff, Retransmit):
                    retransmits += 1
                elif isinstance(eff, MarkFailed):
                    failed = True
        assert retransmits == 5
        assert failed
        assert mgr.pending == {}

    def test_mixed_nak_and_timeout_share_the_counter(self):
        mgr = CustodyManager(max_retries=5)
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        mgr.on_ack(AckMessage(AckKind.CUSTODY_NAK, b.bundle_id, "london", 1.0))
        mgr.on_ack(AckMessage(AckKind.CUSTODY_NAK, b.bundle_id, "london", 2.0))
        assert mgr.pending[b.bundle_id].retransmit_count == 2
        effects = mgr.on_timeout(now=1000.0)
        assert effects == [Retransmit(b.bundle_id, 3)]


class TestSuspend:
    def test_suspended_entry_never_times_out(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        mgr.suspend(b.bundle_id)
        assert mgr.on_timeout(now=1e9) == []
        assert b.bundle_id in mgr.pending

    def test_reregister_rearms_suspended_timer_keeping_count(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        mgr.pending[b.bundle_id].retransmit_count = 2
        mgr.suspend(b.bundle_id)
        entry = mgr.register_pending(b, "london", now=500.0)
        assert entry.deadline == 530.0
        assert entry.retransmit_count == 2

    def test_suspend_unknown_id_is_a_noop(self):
        mgr = CustodyManager()
        mgr.suspend("ghost-1-00")
        assert mgr.pending == {}


class TestDrop:
    def test_drop_is_idempotent(self):
        mgr = CustodyManager()
        b = make_bundle()
        mgr.register_pending(b, "london", now=0.0)
        mgr.drop(b.bundle_id)
        mgr.drop(b.bundle_id)
        assert mgr.pending == {}


@pytest.mark.parametrize("seed", range(5))
def test_random_event_interleaving_never_exceeds_cap(seed):
    rng = random.Random(seed)
    mgr = CustodyManager(ack_timeout_s=30.0, max_retries=5)
    b = make_bundle()
    mgr.register_pending(b, "london", now=0.0)
    attempts = 1
    t = 0.0
    while b.bundle_id in mgr.pending:
        t += rng.uniform(1.0, 40.0)
        if rng.random() < 0.4:
            effects = mgr.on_ack(AckMessage(AckKind.CUSTODY_NAK, b.bundle_id,
                                            "london", t))
        else:
            effects = mgr.on_timeout(now=t)
        for eff in effects:
            if isinstance(eff, Retransmit):
                attempts += 1
        if rng.random() < 0.1:
            mgr.on_ack(AckMessage(AckKind.CUSTODY_ACK, b.bundle_id,
                                  "london", t))
    assert attempts <= 6
