"""
Tests for the account state machine.
"""

import pytest

from src.zef.authority.keyfile import generate_committee
from src.zef.authority.wire import decode_frame, encode_frame
from src.zef.core.encoding import MAX_U64
from src.zef.core.keys import KeyPair
from src.zef.core.messages import (
    AccountInfoQuery,
    Certificate,
    ChangeKey,
    CloseAccount,
    OpenAccount,
    Request,
    Spend,
    Transfer,
)
from src.zef.core.uid import UID
from src.zef.engine.engine import AccountEngine
from src.zef.engine.spendable import CoinRecord, compute_spendable, total_spendable
from src.zef.engine.state import Activate, AccountState, Credit, CrossShardMessage
from src.zef.engine.store import AccountStore
from src.zef.errors import EngineError, ReasonCode
from tests.conftest import ALICE, BOB, TEST_RANGE_BITS, certify, confirm_all, key_from


def balance(engine, account_id):
    state = engine.store.get(account_id)
    return None if state is None else state.balance


class TestRequests:
    """Tests for voting on requests."""

    def test_transfer_moves_funds(self, cfg, engines, alice_key):
        """Should debit the sender and credit the recipient on every authority."""
        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 30)), alice_key)
        confirm_all(engines, cert)
        for engine in engines:
            assert balance(engine, ALICE) == 70
            assert balance(engine, BOB) == 80
            assert engine.store.get(ALICE).next_sequence == 1
            assert engine.store.get(ALICE).pending is None

    def test_revote_on_same_request(self, engines, alice_key):
        """Should vote again for the request it is locked on."""
        signed = Request(ALICE, 0, Transfer(BOB, 1)).signed_by(alice_key)
        first = engines[0].handle_request(signed)
        second = engines[0].handle_request(signed)
        assert first.value == second.value

    def test_locked_on_other_request(self, engines, alice_key):
        """Should refuse a different request at the locked sequence number."""
        engines[0].handle_request(Request(ALICE, 0, Transfer(BOB, 1)).signed_by(alice_key))
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(Request(ALICE, 0, Transfer(BOB, 2)).signed_by(alice_key))
        assert exc.value.reason == ReasonCode.ACCOUNT_LOCKED
        assert exc.value.expected_sequence == 0
        assert exc.value.authority == engines[0].name

    def test_wrong_sequence(self, engines, alice_key):
        """Should report the expected sequence number."""
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(Request(ALICE, 5, Transfer(BOB, 1)).signed_by(alice_key))
        assert exc.value.reason == ReasonCode.WRONG_SEQUENCE
        assert exc.value.expected_sequence == 0

    def test_bad_owner_signature(self, engines, bob_key):
        """Should refuse requests not signed by the owner."""
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(Request(ALICE, 0, Transfer(BOB, 1)).signed_by(bob_key))
        assert exc.value.reason == ReasonCode.BAD_OWNER_SIGNATURE

    def test_insufficient_funds(self, engines, alice_key):
        """Should refuse transfers above the balance."""
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(Request(ALICE, 0, Transfer(BOB, 101)).signed_by(alice_key))
        assert exc.value.reason == ReasonCode.INSUFFICIENT_FUNDS

    def test_zero_transfer(self, engines, alice_key):
        """Should refuse zero-amount transfers."""
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(Request(ALICE, 0, Transfer(BOB, 0)).signed_by(alice_key))
        assert exc.value.reason == ReasonCode.INVALID_OPERATION

    def test_wrong_child_id(self, engines, alice_key):
        """Should only open the child named by the current sequence number."""
        request = Request(ALICE, 0, OpenAccount(ALICE.child(3), KeyPair.generate().public))
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(request.signed_by(alice_key))
        assert exc.value.reason == ReasonCode.WRONG_CHILD_ID

    def test_unknown_account(self, engines, alice_key):
        """Should refuse requests on accounts it has never seen."""
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(Request(UID.root(42), 0, CloseAccount()).signed_by(alice_key))
        assert exc.value.reason == ReasonCode.INACTIVE_ACCOUNT

    def test_rejected_request_leaves_state(self, engines, alice_key):
        """Should not lock the account on a rejected request."""
        with pytest.raises(EngineError):
            engines[0].handle_request(Request(ALICE, 0, Transfer(BOB, 500)).signed_by(alice_key))
        assert engines[0].store.get(ALICE).pending is None

    def test_public_spend(self, cfg, engines, alice_key):
        """Should debit a coinless spend."""
        cert = certify(cfg, engines, Request(ALICE, 0, Spend(10, None, b"\x00" * 32)), alice_key)
        confirm_all(engines, cert)
        assert balance(engines[0], ALICE) == 90


class TestConfirmations:
    """Tests for executing certificates."""

    def test_missing_earlier_certificates(self, cfg, engines, alice_key):
        """Should ask for the gap when a later certificate arrives first."""
        quorum, lagging = engines[:3], engines[3]
        first = certify(cfg, quorum, Request(ALICE, 0, Transfer(BOB, 1)), alice_key)
        confirm_all(quorum, first)
        second = certify(cfg, quorum, Request(ALICE, 1, Transfer(BOB, 1)), alice_key)

        with pytest.raises(EngineError) as exc:
            lagging.handle_confirmation(second)
        assert exc.value.reason == ReasonCode.MISSING_EARLIER_CERTIFICATES
        assert exc.value.expected_sequence == 0

        lagging.handle_confirmation(first)
        lagging.handle_confirmation(second)
        assert lagging.store.get(ALICE).next_sequence == 2
        assert balance(lagging, ALICE) == 98

    def test_confirmation_is_idempotent(self, cfg, engines, alice_key):
        """Should ignore a replayed certificate."""
        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 5)), alice_key)
        confirm_all(engines, cert)
        assert engines[0].handle_confirmation(cert) == []
        assert balance(engines[0], ALICE) == 95

    def test_confirm_without_vote(self, cfg, engines, alice_key):
        """Should execute certificates it never voted for."""
        cert = certify(cfg, engines[1:], Request(ALICE, 0, Transfer(BOB, 5)), alice_key)
        engines[0].handle_confirmation(cert)
        assert balance(engines[0], ALICE) == 95

    def test_confirmation_releases_lock_on_other_value(self, cfg, engines, alice_key):
        """Should accept the certified request even when locked on another."""
        engines[0].handle_request(Request(ALICE, 0, Transfer(BOB, 1)).signed_by(alice_key))
        cert = certify(cfg, engines[1:], Request(ALICE, 0, Transfer(BOB, 2)), alice_key)
        engines[0].handle_confirmation(cert)
        state = engines[0].store.get(ALICE)
        assert state.pending is None
        assert state.balance == 98

    def test_invalid_certificate(self, cfg, engines, alice_key):
        """Should refuse certificates without a quorum."""
        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 5)), alice_key)
        short = Certificate(cert.value, cert.signatures[:2])
        with pytest.raises(EngineError) as exc:
            engines[0].handle_confirmation(short)
        assert exc.value.reason == ReasonCode.INVALID_CERTIFICATE

    def test_change_key(self, cfg, engines, alice_key):
        """Should move ownership to the new key."""
        new_key = KeyPair.generate()
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, ChangeKey(new_key.public)), alice_key))
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(Request(ALICE, 1, Transfer(BOB, 1)).signed_by(alice_key))
        assert exc.value.reason == ReasonCode.BAD_OWNER_SIGNATURE
        engines[0].handle_request(Request(ALICE, 1, Transfer(BOB, 1)).signed_by(new_key))

    def test_open_account(self, cfg, engines, alice_key):
        """Should activate the child with its new owner."""
        carol = KeyPair.generate()
        child = ALICE.child(0)
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, OpenAccount(child, carol.public)), alice_key))
        for engine in engines:
            state = engine.store.get(child)
            assert state.owner == carol.public
            assert state.balance == 0
            assert state.next_sequence == 0

    def test_close_account_retires(self, cfg, engines, alice_key):
        """Should delete a closed account and refuse further requests."""
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, CloseAccount()), alice_key))
        for engine in engines:
            assert engine.store.get(ALICE) is None
            assert engine.store.is_retired(ALICE)
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(Request(ALICE, 1, Transfer(BOB, 1)).signed_by(alice_key))
        assert exc.value.reason == ReasonCode.INACTIVE_ACCOUNT

    def test_late_close_confirmation_acknowledged(self, cfg, engines, alice_key):
        """Should acknowledge a duplicate CloseAccount confirmation after deletion."""
        cert = certify(cfg, engines, Request(ALICE, 0, CloseAccount()), alice_key)
        confirm_all(engines, cert)
        assert engines[0].handle_confirmation(cert) == []


class TestCrossShard:
    """Tests for cross-shard effects."""

    def test_credit_applied_once(self, cfg, engines, alice_key):
        """Should apply a credit once no matter how often it is delivered."""
        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 10)), alice_key)
        engine = engines[0]
        (message,) = engine.handle_confirmation(cert)
        engine.handle_cross_shard(message)
        engine.handle_cross_shard(message)
        assert balance(engine, BOB) == 60
        assert engine.get_stats()["duplicate_deliveries"] == 1

    def test_credit_creates_inactive_record(self, cfg, engines, alice_key):
        """Should hold credits for accounts that are not open yet."""
        target = UID.root(9)
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, Transfer(target, 10)), alice_key))
        state = engines[0].store.get(target)
        assert state.balance == 10
        assert not state.is_active

    def test_activation_of_closed_account_ignored(self, cfg, engines, alice_key):
        """Should never reopen a closed account."""
        carol = KeyPair.generate()
        child = ALICE.child(0)
        opening = certify(cfg, engines, Request(ALICE, 0, OpenAccount(child, carol.public)), alice_key)
        confirm_all(engines, opening)
        confirm_all(engines, certify(cfg, engines, Request(child, 0, CloseAccount()), carol))
        engine = engines[0]
        engine.handle_cross_shard(CrossShardMessage(child, Activate(carol.public), opening))
        assert engine.store.get(child) is None
        assert engine.store.is_retired(child)

    def test_cross_shard_message_bytes(self, cfg, engines, alice_key):
        """Should keep the origin digest across encoding."""
        from src.zef.core.encoding import decode_exact

        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 3)), alice_key)
        message = CrossShardMessage(BOB, Credit(3), cert)
        decoded = decode_exact(message.to_bytes(), CrossShardMessage.decode)
        assert decoded.origin_digest == message.origin_digest
        assert decoded.effect == Credit(3)


class TestBalanceLimits:
    """Tests for keeping balances inside the unsigned 64-bit range."""

    @pytest.fixture(scope="class")
    def rich_committee(self):
        return generate_committee(
            4,
            genesis=[(ALICE, key_from(1).public, 1 << 63), (BOB, key_from(2).public, 50)],
            range_bits=TEST_RANGE_BITS,
            seed=13,
        )

    @pytest.fixture
    def rich_engines(self, rich_committee, params):
        cfg, secrets = rich_committee
        return [AccountEngine(cfg, name, secrets[name].signing_key(), params=params) for name in cfg.names]

    def test_high_genesis_balance_in_account_info(self, rich_committee, rich_engines):
        """Should report and encode a balance of 2^63 and above."""
        cfg = rich_committee[0]
        cert = certify(cfg, rich_engines, Request(BOB, 0, Transfer(ALICE, 7)), key_from(2))
        confirm_all(rich_engines, cert)
        info = rich_engines[0].account_info(AccountInfoQuery(ALICE))
        assert info.balance == (1 << 63) + 7
        decoded = decode_frame(encode_frame(info))
        assert decoded.balance == (1 << 63) + 7
        assert decoded.next_sequence == info.next_sequence

    def test_high_genesis_balance_in_snapshot(self, rich_engines, tmp_path):
        """Should restore a balance of 2^63 from a snapshot."""
        store = rich_engines[0].store
        restored = AccountStore.load_snapshot(str(store.save_snapshot(str(tmp_path / "rich.snap"))))
        assert restored.get(ALICE).balance == 1 << 63
        assert restored.state_digest() == store.state_digest()

    def test_credit_past_limit_refused(self, cfg, engines, alice_key):
        """Should refuse a credit that would pass MAX_U64 and leave the record alone."""
        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 10)), alice_key)
        engine = engines[0]
        (message,) = engine.handle_confirmation(cert)
        engine.store.get(BOB).balance = MAX_U64 - 3
        with pytest.raises(EngineError) as exc:
            engine.handle_cross_shard(message)
        assert exc.value.reason == ReasonCode.BALANCE_OVERFLOW
        state = engine.store.get(BOB)
        assert state.balance == MAX_U64 - 3
        assert message.origin_digest not in state.received_keys

    def test_credit_up_to_limit_applied(self, cfg, engines, alice_key):
        """Should accept a credit landing exactly on MAX_U64."""
        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 10)), alice_key)
        engine = engines[0]
        (message,) = engine.handle_confirmation(cert)
        engine.store.get(BOB).balance = MAX_U64 - 10
        engine.handle_cross_shard(message)
        assert balance(engine, BOB) == MAX_U64

    def test_unfunded_debit_waits_for_credit(self, cfg, engines, alice_key, bob_key):
        """Should refuse a debit it cannot fund yet without touching state, then apply it once the credit lands."""
        quorum, lagging = engines[:3], engines[3]
        funding = certify(cfg, quorum, Request(ALICE, 0, Transfer(BOB, 30)), alice_key)
        confirm_all(quorum, funding)
        spend = certify(cfg, quorum, Request(BOB, 0, Transfer(ALICE, 70)), bob_key)

        with pytest.raises(EngineError) as exc:
            lagging.handle_confirmation(spend)
        assert exc.value.reason == ReasonCode.BALANCE_OVERFLOW
        state = lagging.store.get(BOB)
        assert state.balance == 50
        assert state.next_sequence == 0
        assert state.confirmed == []

        confirm_all([lagging], funding)
        confirm_all([lagging], spend)
        assert balance(lagging, BOB) == 10
        assert balance(lagging, ALICE) == 140


class TestSweep:
    """Tests for deleting records that can never become active."""

    def test_sweeps_unreachable_child(self, cfg, engines, alice_key):
        """Should delete a credited child whose opening sequence number was used by another operation."""
        child = ALICE.child(0)
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, Transfer(child, 5)), alice_key))
        engine = engines[0]
        assert not engine.can_become_active(child)
        assert engine.sweep() == [child]
        assert engine.store.get(child) is None

    def test_keeps_openable_child(self, cfg, engines, alice_key):
        """Should keep a child whose parent can still open it."""
        child = ALICE.child(3)
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, Transfer(child, 5)), alice_key))
        assert engines[0].can_become_active(child)
        assert engines[0].sweep() == []

    def test_sweeps_orphan_root(self, cfg, engines, alice_key):
        """Should delete an ownerless root that is not in genesis."""
        target = UID.root(77)
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, Transfer(target, 5)), alice_key))
        assert target in engines[0].sweep()

    def test_keeps_genesis_and_active(self, engines):
        """Should never delete genesis accounts."""
        assert engines[0].sweep() == []
        assert engines[0].store.get(ALICE) is not None

    def test_unknown_ancestor_shard_keeps_record(self, engines):
        """Should not delete when an ancestor is not visible."""

        def lookup(account_id):
            raise KeyError(account_id)

        assert engines[0].can_become_active(UID((5, 1)), lookup=lookup, retired=lambda _: False)


class TestQueriesAndStore:
    """Tests for account info and the backing store."""

    def test_account_info(self, cfg, engines, alice_key):
        """Should report the executed certificates from the requested index."""
        for n in range(3):
            confirm_all(engines, certify(cfg, engines, Request(ALICE, n, Transfer(BOB, 1)), alice_key))
        info = engines[0].account_info(AccountInfoQuery(ALICE, from_index=1))
        assert info.present
        assert info.next_sequence == 3
        assert [c.request.sequence for c in info.certificates] == [1, 2]
        assert info.owner == alice_key.public

    def test_account_info_absent(self, engines):
        """Should answer present=False for unknown ids."""
        assert not engines[0].account_info(AccountInfoQuery(UID.root(55))).present

    def test_wrong_shard(self, sharded_committee, params, alice_key):
        """Should refuse accounts owned by another shard."""
        cfg, secrets = sharded_committee
        name = cfg.names[0]
        other = 1 - cfg.shard_of(ALICE)
        engine = AccountEngine(cfg, name, secrets[name].signing_key(), shard=other, params=params)
        with pytest.raises(EngineError) as exc:
            engine.handle_request(Request(ALICE, 0, Transfer(BOB, 1)).signed_by(alice_key))
        assert exc.value.reason == ReasonCode.WRONG_SHARD

    def test_snapshot_round_trip(self, cfg, engines, alice_key, bob_key, tmp_path):
        """Should restore an identical store from a snapshot."""
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 4)), alice_key))
        confirm_all(engines, certify(cfg, engines, Request(BOB, 0, CloseAccount()), bob_key))
        store = engines[0].store
        path = store.save_snapshot(str(tmp_path / "shard.snap"))
        restored = AccountStore.load_snapshot(str(path))
        assert restored.state_digest() == store.state_digest()
        assert restored.is_retired(BOB)

    def test_clone_is_independent(self):
        """Should not share mutable state with the original."""
        store = AccountStore()
        store.put(ALICE, AccountState(balance=5))
        copy = store.clone()
        copy.get(ALICE).balance = 9
        assert store.get(ALICE).balance == 5


class TestSpendable:
    """Tests for the conservation oracle."""

    def test_spendable_tracks_transfers_and_coins(self, cfg, engines, alice_key):
        """Should count transfers once and unspent coins only."""
        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 30)), alice_key)
        coins = [CoinRecord(BOB, b"m1", 7), CoinRecord(BOB, b"m2", 3)]
        assert compute_spendable(ALICE, 100, [cert, cert], coins, set()) == 70
        assert compute_spendable(BOB, 50, [cert], coins, {b"m2"}) == 87

    def test_total_is_conserved(self, cfg, engines, alice_key, bob_key):
        """Should keep the system total equal to the genesis total."""
        certs = [certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 30)), alice_key)]
        confirm_all(engines, certs[0])
        certs.append(certify(cfg, engines, Request(BOB, 0, Transfer(ALICE, 5)), bob_key))
        total = total_spendable({ALICE: 100, BOB: 50}, certs, [], {})
        assert total == cfg.genesis_total()
