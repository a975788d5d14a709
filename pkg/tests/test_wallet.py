"""
Tests for the wallet client: account operations, broker account creation,
synchronization, coin flows and wallet files.
"""

import pytest

from src.zef.core.encoding import Writer
from src.zef.core.keys import KeyPair
from src.zef.core.messages import ChangeKey, Transfer
from src.zef.errors import ProtocolError, ReasonCode, WalletError
from src.zef.wallet.broker import open_account_via_broker, verify_opening_certificate
from src.zef.wallet.client import ZefClient
from src.zef.wallet.files import export_certificate, export_coin, load_certificate, load_coin
from src.zef.wallet.state import WalletState
from tests.conftest import ALICE, BOB


def _scalar_bytes(value: int) -> bytes:
    return Writer().scalar(value).getvalue()


class TestAccountOperations:
    """Tests for transfers, key changes and closing."""

    async def test_transfer(self, client, nodes):
        """Should certify, confirm and record a transfer."""
        cert = await client.transfer(ALICE, BOB, 10)
        assert cert.request.sequence == 0
        assert client.wallet.account(ALICE).next_sequence == 1
        assert client.wallet.account(ALICE).certificates == [cert]
        assert await client.balance(ALICE) == 90
        assert await client.balance(BOB) == 60
        assert client.last_run["workflow_status"] == "completed"

    async def test_consecutive_transfers(self, client):
        """Should use consecutive sequence numbers."""
        await client.transfer(ALICE, BOB, 1)
        cert = await client.transfer(ALICE, BOB, 2)
        assert cert.request.sequence == 1
        assert await client.balance(BOB) == 53

    async def test_overdraft_rejected(self, client):
        """Should surface the authorities' rejection reason."""
        with pytest.raises(WalletError) as exc:
            await client.transfer(ALICE, BOB, 1000)
        assert exc.value.reason == ReasonCode.INSUFFICIENT_FUNDS
        assert client.wallet.account(ALICE).pending is None

    async def test_equivocation_refused(self, client):
        """Should refuse to sign a second request for the same sequence."""
        client.wallet.sign_request(ALICE, Transfer(BOB, 1))
        with pytest.raises(WalletError) as exc:
            await client.transfer(ALICE, BOB, 2)
        assert exc.value.reason == ReasonCode.EQUIVOCATION_REFUSED

    async def test_resume_pending(self, client):
        """Should finish a request signed in an earlier run."""
        client.wallet.sign_request(ALICE, Transfer(BOB, 4))
        cert = await client.resume_pending(ALICE)
        assert cert.request.operation == Transfer(BOB, 4)
        assert await client.resume_pending(ALICE) is None

    async def test_unowned_account(self, client):
        """Should refuse operations on accounts the wallet does not hold."""
        with pytest.raises(WalletError) as exc:
            await client.transfer(ALICE.child(9), BOB, 1)
        assert exc.value.reason == ReasonCode.OWNER_KEY_MISMATCH

    async def test_change_key(self, client):
        """Should rotate to the new key and keep operating."""
        new_key = KeyPair.from_seed(b"\x07" * 32)
        _, key = await client.change_key(ALICE, new_key)
        assert key is new_key
        assert client.wallet.account(ALICE).key is new_key
        await client.transfer(ALICE, BOB, 5)
        assert await client.balance(BOB) == 55

    async def test_change_key_to_foreign_key(self, client):
        """Should drop an account handed over to a key it does not hold."""
        foreign = KeyPair.from_seed(b"\x08" * 32)
        await client.execute_account_op(ALICE, ChangeKey(foreign.public))
        assert ALICE not in client.wallet.accounts

    async def test_close_account(self, client, nodes):
        """Should retire the account everywhere that confirmed."""
        await client.close_account(BOB)
        assert BOB not in client.wallet.accounts
        assert sum(node.lookup(BOB) is None for node in nodes) >= 3
        assert await client.balance(BOB) == 0


class TestAccountCreation:
    """Tests for opening child accounts."""

    async def test_open_own_accounts(self, client):
        """Should open consecutive children owned by fresh keys."""
        opened = await client.open_own_accounts(ALICE, 2)
        assert opened == [ALICE.child(0), ALICE.child(1)]
        for account_id in opened:
            assert client.wallet.account(account_id).opening is not None
        await client.transfer(ALICE, opened[0], 7)
        await client.transfer(opened[0], BOB, 2)
        assert await client.balance(opened[0]) == 5

    async def test_broker_flow(self, cfg, client, transport, params):
        """Should let a recipient accept an account a broker opened for them."""
        recipient = ZefClient(cfg, WalletState(), transport, params=params)
        spare = recipient.wallet.new_spare_key()
        new_id, cert = await open_account_via_broker(client, ALICE, spare.public)

        assert await recipient.accept_opened_account(cert) == new_id
        assert recipient.wallet.account(new_id).key is spare
        assert recipient.wallet.spare_keys == []

        with pytest.raises(WalletError) as exc:
            await recipient.accept_opened_account(cert)
        assert exc.value.reason == ReasonCode.CERTIFICATE_MISMATCH

    async def test_broker_flow_with_rotation(self, cfg, client, transport, params):
        """Should rotate away from the key the broker saw."""
        recipient = ZefClient(cfg, WalletState(), transport, params=params)
        spare = recipient.wallet.new_spare_key()
        _, cert = await open_account_via_broker(client, ALICE, spare.public)
        new_id = await recipient.accept_opened_account(cert, rotate=True)
        assert recipient.wallet.account(new_id).key.public != spare.public

    async def test_certificate_for_someone_else(self, cfg, client, transport, params):
        """Should reject a certificate opening the account for another key."""
        recipient = ZefClient(cfg, WalletState(), transport, params=params)
        recipient.wallet.new_spare_key()
        _, cert = await open_account_via_broker(client, ALICE, KeyPair.from_seed(b"\x09" * 32).public)
        with pytest.raises(WalletError) as exc:
            await recipient.accept_opened_account(cert)
        assert exc.value.reason == ReasonCode.CERTIFICATE_MISMATCH

    async def test_verify_rejects_other_operations(self, cfg, client, alice_key):
        """Should reject a certificate that is not an OpenAccount."""
        cert = await client.transfer(ALICE, BOB, 1)
        with pytest.raises(WalletError) as exc:
            verify_opening_certificate(cfg, cert, alice_key.public)
        assert exc.value.reason == ReasonCode.CERTIFICATE_MISMATCH

    async def test_verify_rejects_replayed_key(self, cfg, client):
        """Should reject a key already used by an accepted account."""
        key = KeyPair.from_seed(b"\x0a" * 32)
        _, cert = await client.open_account(ALICE, key.public)
        assert verify_opening_certificate(cfg, cert, key.public) == ALICE.child(0)
        with pytest.raises(WalletError):
            verify_opening_certificate(cfg, cert, key.public, {key.public.data})


class TestSync:
    """Tests for bringing lagging authorities up to date."""

    async def test_crashed_authority_does_not_block(self, cfg, client, transport):
        """Should reach quorum with one authority down."""
        transport.crash(cfg.names[-1])
        await client.transfer(ALICE, BOB, 10)
        assert await client.balance(BOB) == 60

    async def test_sync_after_recovery(self, cfg, client, transport, nodes):
        """Should replay missed certificates to a recovered authority."""
        down = cfg.names[-1]
        transport.crash(down)
        await client.transfer(ALICE, BOB, 10)
        transport.recover(down)

        assert await client.sync_authority(down, ALICE) == 1
        node = next(n for n in nodes if n.name == down)
        assert node.lookup(ALICE).next_sequence == 1
        assert node.lookup(BOB).balance == 60
        assert client.wallet.cursor(down, ALICE) == 1

        assert await client.sync_authority(down, ALICE) == 0

    async def test_sync_debit_waits_for_received_credit(self, cfg, client, transport, nodes):
        """Should replay received credits first when the authority cannot fund a debit yet."""
        down = cfg.names[-1]
        transport.crash(down)
        await client.transfer(ALICE, BOB, 30)
        await client.transfer(BOB, ALICE, 70)
        transport.recover(down)

        assert await client.sync_authority(down, BOB) >= 3
        node = next(n for n in nodes if n.name == down)
        assert node.lookup(BOB).next_sequence == 1
        assert node.lookup(BOB).balance == 10
        assert node.lookup(ALICE).balance == 140

    async def test_sync_all_reports_unreachable(self, cfg, client, transport):
        """Should mark unreachable authorities with -1."""
        down = cfg.names[0]
        transport.crash(down)
        await client.transfer(ALICE, BOB, 1)
        results = await client.sync_all(ALICE)
        assert results[down] == -1
        assert all(count >= 0 for name, count in results.items() if name != down)

    async def test_lagging_authority_catches_up_during_vote(self, cfg, client, transport, nodes):
        """Should sync an authority that missed earlier certificates, then vote."""
        down = cfg.names[-1]
        transport.crash(down)
        await client.transfer(ALICE, BOB, 1)
        transport.recover(down)
        client.driver.max_retries = 0
        transport.crash(cfg.names[0])
        await client.transfer(ALICE, BOB, 1)
        node = next(n for n in nodes if n.name == down)
        assert node.lookup(ALICE).next_sequence == 2

    async def test_no_quorum(self, cfg, client, transport):
        """Should fail with NoQuorum when too many authorities are down."""
        client.driver.max_retries = 0
        for name in cfg.names[:2]:
            transport.crash(name)
        with pytest.raises(WalletError) as exc:
            await client.transfer(ALICE, BOB, 1)
        assert exc.value.reason == ReasonCode.NO_QUORUM
        assert client.wallet.account(ALICE).pending is not None


class TestTransparentCoins:
    """Tests for publicly valued coins."""

    async def test_create_and_redeem(self, client):
        """Should withdraw into coins and redeem one into another account."""
        coins = await client.create_transparent_coins([], {ALICE: 8}, [(ALICE, 6), (BOB, 2)])
        assert [c.value for c in coins] == [6, 2]
        assert len(client.wallet.transparent_coins) == 2
        assert await client.balance(ALICE) == 92

        mine = next(c for c in coins if c.account_id == ALICE)
        await client.redeem_transparent_coin(mine, BOB)
        assert await client.balance(BOB) == 56
        assert mine not in client.wallet.transparent_coins

    async def test_redeem_twice(self, client):
        """Should refuse a second redemption of the same coin."""
        coins = await client.create_transparent_coins([], {ALICE: 3}, [(ALICE, 3)])
        await client.redeem_transparent_coin(coins[0], BOB)
        with pytest.raises(WalletError) as exc:
            await client.redeem_transparent_coin(coins[0], BOB)
        assert exc.value.reason == ReasonCode.ALREADY_SPENT

    async def test_coins_from_coins(self, client):
        """Should split an existing coin into new ones."""
        (coin,) = await client.create_transparent_coins([], {ALICE: 5}, [(ALICE, 5)])
        split = await client.create_transparent_coins([coin], {}, [(ALICE, 4), (ALICE, 1)])
        assert sorted(c.value for c in split) == [1, 4]
        assert coin not in client.wallet.transparent_coins

    async def test_import_coin(self, cfg, client, transport, params, bob_key):
        """Should accept a coin minted by someone else."""
        (coin,) = await client.create_transparent_coins([], {ALICE: 2}, [(BOB, 2)])
        other = WalletState()
        other.add_account(BOB, bob_key)
        receiver = ZefClient(cfg, other, transport, params=params)
        receiver.import_transparent_coin(coin)
        assert other.transparent_coins == [coin]


@pytest.mark.slow
class TestAnonymousCoins:
    """Tests for coins with hidden values."""

    async def test_create_and_redeem(self, client, transport):
        """Should mint coins the authorities never see opened, then redeem one."""
        coins = await client.spend_and_create_coins([], {ALICE: 8}, [(ALICE, 6), (ALICE, 2)])
        assert sorted(c.value for c in coins) == [2, 6]
        assert await client.balance(ALICE) == 92

        seeds = [_scalar_bytes(c.seed) for c in coins]
        for _, _, body in transport.frames:
            assert not any(seed in body for seed in seeds)

        before = len(transport.frames)
        coin = next(c for c in coins if c.value == 6)
        await client.redeem_coin(coin, BOB)
        assert await client.balance(BOB) == 56
        assert any(seeds[coins.index(coin)] in body for _, _, body in transport.frames[before:])

    async def test_redeem_twice(self, client):
        """Should refuse to redeem a coin twice."""
        (coin,) = await client.spend_and_create_coins([], {ALICE: 3}, [(ALICE, 3)])
        await client.redeem_coin(coin, BOB)
        with pytest.raises(WalletError) as exc:
            await client.redeem_coin(coin, BOB)
        assert exc.value.reason == ReasonCode.ALREADY_SPENT


class TestWalletFiles:
    """Tests for wallet persistence and exchanged files."""

    async def test_wallet_survives_reload(self, client, tmp_path):
        """Should reload accounts, history and cursors."""
        await client.transfer(ALICE, BOB, 3)
        path = client.wallet.save(str(tmp_path / "alice.wallet"))
        loaded = WalletState.load(str(path))
        assert set(loaded.accounts) == {ALICE, BOB}
        assert loaded.account(ALICE).next_sequence == 1
        assert loaded.account(ALICE).certificates[0].digest() == client.wallet.account(ALICE).certificates[0].digest()
        assert loaded.cursors == client.wallet.cursors

    def test_load_or_create(self, tmp_path):
        """Should start empty when the file does not exist."""
        wallet = WalletState.load_or_create(str(tmp_path / "new.wallet"))
        assert wallet.accounts == {}
        assert wallet.path is not None

    def test_save_without_path(self):
        """Should refuse to save a wallet with no path."""
        with pytest.raises(ValueError):
            WalletState().save()

    async def test_certificate_file(self, client, tmp_path):
        """Should write and read back a certificate file."""
        cert = await client.transfer(ALICE, BOB, 1)
        path = export_certificate(cert, str(tmp_path / "open.cert"))
        assert load_certificate(str(path)).digest() == cert.digest()

    async def test_coin_file(self, client, tmp_path):
        """Should write and read back a transparent coin."""
        (coin,) = await client.create_transparent_coins([], {ALICE: 2}, [(BOB, 2)])
        loaded = load_coin(str(export_coin(coin, str(tmp_path / "bob.coin"))))
        assert loaded.seed == coin.seed
        assert loaded.value == 2

    def test_wrong_magic(self, tmp_path):
        """Should refuse files of another kind."""
        path = tmp_path / "junk.cert"
        path.write_bytes(b"NOTACERT")
        with pytest.raises(ProtocolError):
            load_certificate(str(path))
