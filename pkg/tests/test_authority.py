"""
Tests for wire framing, shard services, cross-shard routing and the admin API.
"""

from unittest.mock import MagicMock, patch

import pytest
from fastapi.testclient import TestClient

from src.zef.authority.api import app, attach_node
from src.zef.authority.net import send_message, start_tcp_server
from src.zef.authority.node import AuthorityNode
from src.zef.authority.shard import ShardService
from src.zef.authority.wire import (
    LENGTH_PREFIX,
    Ack,
    ErrorReply,
    decode_body,
    decode_frame,
    encode_body,
    encode_frame,
)
from src.zef.core.certificates import certificate_from_votes
from src.zef.core.messages import AccountInfoQuery, AccountInfoResponse, Request, Transfer, Vote
from src.zef.core.uid import UID
from src.zef.errors import ProtocolError, ReasonCode
from tests.conftest import ALICE, BOB


def other_shard_account(cfg, account_id):
    n = 100
    while cfg.shard_of(UID.root(n)) == cfg.shard_of(account_id):
        n += 1
    return UID.root(n)


class TestWire:
    """Tests for frame encoding."""

    def test_frame_layout(self, alice_key):
        """Should prefix tag + payload with its little-endian length."""
        frame = encode_frame(Request(ALICE, 0, Transfer(BOB, 1)).signed_by(alice_key))
        length = int.from_bytes(frame[:LENGTH_PREFIX], "little")
        assert length == len(frame) - LENGTH_PREFIX
        assert frame[LENGTH_PREFIX] == 1

    def test_error_reply_keeps_context(self):
        """Should carry the reason, expected sequence and authority."""
        reply = ErrorReply(ReasonCode.WRONG_SEQUENCE, "expected 3", 3, "authority-1")
        decoded = decode_frame(encode_frame(reply))
        assert decoded == reply
        error = decoded.to_error()
        assert error.reason == ReasonCode.WRONG_SEQUENCE
        assert error.expected_sequence == 3

    def test_unknown_tag(self):
        """Should reject unknown tags before parsing the payload."""
        with pytest.raises(ProtocolError) as exc:
            decode_body(b"\xee\x00\x00")
        assert exc.value.reason == ReasonCode.UNKNOWN_TAG

    def test_oversized_frame(self):
        """Should reject frames above the configured limit."""
        frame = (1000).to_bytes(LENGTH_PREFIX, "little") + b"\x0b" * 1000
        with pytest.raises(ProtocolError) as exc:
            decode_frame(frame, max_bytes=100)
        assert exc.value.reason == ReasonCode.FRAME_TOO_LARGE

    def test_length_mismatch(self):
        """Should reject a prefix that disagrees with the frame size."""
        frame = encode_frame(Ack(ALICE, 1, 5))
        with pytest.raises(ProtocolError) as exc:
            decode_frame(frame + b"\x00")
        assert exc.value.reason == ReasonCode.PARSE_FAILURE

    def test_high_balance_in_ack(self):
        """Should carry balances above 2^63 and refuse negative ones."""
        rich = Ack(ALICE, 2, (1 << 63) + 5)
        assert decode_frame(encode_frame(rich)) == rich
        with pytest.raises(ProtocolError) as exc:
            encode_frame(Ack(ALICE, 2, -4))
        assert exc.value.reason == ReasonCode.PARSE_FAILURE

    def test_unframeable_type(self):
        """Should refuse to frame values that are not wire messages."""
        with pytest.raises(ProtocolError) as exc:
            encode_body("not a message")
        assert exc.value.reason == ReasonCode.UNKNOWN_TAG


class TestShardService:
    """Tests for one authority shard."""

    @pytest.fixture
    def service(self, cfg, secrets, params):
        return ShardService(cfg, secrets[cfg.names[0]], 0, params=params)

    def test_vote_through_bytes(self, service, alice_key):
        """Should answer a signed request with a vote."""
        body = encode_body(Request(ALICE, 0, Transfer(BOB, 1)).signed_by(alice_key))
        reply = decode_body(service.handle_body(body))
        assert isinstance(reply, Vote)
        assert reply.authority == service.name

    def test_garbage_never_raises(self, service):
        """Should answer undecodable bytes with an error frame."""
        for junk in (b"", b"\x01", b"\x01\xff\xff\xff\xff", b"\x63abc"):
            reply = decode_body(service.handle_body(junk))
            assert isinstance(reply, ErrorReply)
        assert service.get_stats()["errors"]

    def test_rejection_is_error_reply(self, service, alice_key):
        """Should turn engine rejections into error replies."""
        reply = service.handle(Request(ALICE, 7, Transfer(BOB, 1)).signed_by(alice_key))
        assert isinstance(reply, ErrorReply)
        assert reply.reason == ReasonCode.WRONG_SEQUENCE
        assert reply.expected_sequence == 0
        assert reply.authority == service.name

    def test_confirmation_acked(self, cfg, secrets, params, alice_key):
        """Should acknowledge a confirmation with the new summary."""
        services = [ShardService(cfg, secrets[name], 0, params=params) for name in cfg.names]
        signed = Request(ALICE, 0, Transfer(BOB, 10)).signed_by(alice_key)
        cert = certificate_from_votes(cfg, [s.handle(signed) for s in services])
        ack = services[0].handle(cert)
        assert ack == Ack(ALICE, 1, 90)
        assert services[0].engine.store.get(BOB).balance == 60

    def test_query(self, service):
        """Should answer account info queries."""
        reply = service.handle(AccountInfoQuery(ALICE))
        assert isinstance(reply, AccountInfoResponse)
        assert reply.balance == 100

    def test_metrics(self, service):
        """Should count handled messages by kind."""
        service.handle(AccountInfoQuery(ALICE))
        stats = service.get_stats()
        assert stats["handled"]["account_info_query"] == 1
        assert set(stats["latency_ms"]) == {"p50", "p90", "p99"}


class TestShardedNode:
    """Tests for an authority hosting several shards."""

    @pytest.fixture
    def sharded_nodes(self, sharded_committee, params):
        cfg, secrets = sharded_committee
        return cfg, [AuthorityNode(cfg, secrets[name], params=params) for name in cfg.names]

    def test_cross_shard_credit_via_router(self, sharded_nodes, alice_key):
        """Should queue the credit and deliver it on drain."""
        cfg, nodes = sharded_nodes
        target = other_shard_account(cfg, ALICE)
        signed = Request(ALICE, 0, Transfer(target, 7)).signed_by(alice_key)
        cert = certificate_from_votes(cfg, [node.service_for(ALICE).handle(signed) for node in nodes])

        node = nodes[0]
        ack = node.service_for(ALICE).handle(cert)
        assert isinstance(ack, Ack)
        assert node.router.pending() == 1
        assert node.lookup(target) is None

        assert node.router.drain() == 1
        assert node.lookup(target).balance == 7
        assert node.router.get_stats()["delivered"] == 1

    def test_wrong_shard_rejected(self, sharded_nodes, alice_key):
        """Should reject a request sent to the wrong shard."""
        cfg, nodes = sharded_nodes
        wrong = 1 - cfg.shard_of(ALICE)
        reply = nodes[0].services[wrong].handle(Request(ALICE, 0, Transfer(BOB, 1)).signed_by(alice_key))
        assert isinstance(reply, ErrorReply)
        assert reply.reason == ReasonCode.WRONG_SHARD

    def test_sweep_and_summary(self, sharded_nodes, alice_key):
        """Should sweep across shards after delivering queued effects."""
        cfg, nodes = sharded_nodes
        child = ALICE.child(0)
        signed = Request(ALICE, 0, Transfer(child, 3)).signed_by(alice_key)
        cert = certificate_from_votes(cfg, [node.service_for(ALICE).handle(signed) for node in nodes])
        node = nodes[0]
        node.service_for(ALICE).handle(cert)
        assert node.sweep() == [child]
        summary = node.account_summary(ALICE)
        assert summary["balance"] == 97
        assert summary["next_sequence"] == 1

    def test_snapshot_restores(self, sharded_committee, params, alice_key, tmp_path):
        """Should come back with the same state from its snapshots."""
        cfg, secrets = sharded_committee
        name = cfg.names[0]
        node = AuthorityNode(cfg, secrets[name], params=params, snapshot_dir=str(tmp_path))
        node.service_for(ALICE).handle(Request(ALICE, 0, Transfer(BOB, 1)).signed_by(alice_key))
        files = node.snapshot()
        assert len(files) == cfg.num_shards
        restored = AuthorityNode(cfg, secrets[name], params=params, snapshot_dir=str(tmp_path))
        assert restored.lookup(ALICE).pending is not None

    def test_snapshot_disabled(self, nodes):
        """Should refuse to snapshot without a directory."""
        with pytest.raises(ValueError):
            nodes[0].snapshot()


class TestNetwork:
    """Tests for the TCP listener."""

    async def test_tcp_round_trip(self, cfg, secrets, params):
        """Should answer framed requests over TCP."""
        service = ShardService(cfg, secrets[cfg.names[0]], 0, params=params)
        server = await start_tcp_server(service.handle_body, "127.0.0.1", 0, "test")
        port = server.sockets[0].getsockname()[1]
        try:
            reply = await send_message("127.0.0.1", port, AccountInfoQuery(BOB), timeout=5)
            assert isinstance(reply, AccountInfoResponse)
            assert reply.balance == 50
        finally:
            server.close()
            await server.wait_closed()


@pytest.fixture
def mock_node():
    """A stand-in AuthorityNode."""
    node = MagicMock()
    node.name = "authority-0"
    node.services = {0: MagicMock(), 1: MagicMock()}
    node.get_stats.return_value = {"authority": "authority-0", "shards": {}, "router": {}}
    node.account_summary.return_value = {
        "account_id": "1",
        "owner": "ab" * 32,
        "balance": 100,
        "next_sequence": 2,
        "pending": False,
        "spent": 0,
        "received": 1,
    }
    node.sweep.return_value = [UID((1, 0))]
    node.snapshot.return_value = ["data/authority-0-shard0.snap"]
    return node


@pytest.fixture
def api_client(mock_node):
    with patch("src.zef.authority.api.get_node", return_value=mock_node):
        yield TestClient(app)


class TestAPIEndpoints:
    """Tests for the admin and metrics API."""

    def test_root_endpoint(self, api_client):
        """Should return API info."""
        response = api_client.get("/")
        assert response.status_code == 200
        assert response.json()["name"] == "Zef Authority API"

    def test_health(self, api_client):
        """Should report the authority and its shards."""
        data = api_client.get("/health").json()
        assert data["status"] == "healthy"
        assert data["authority"] == "authority-0"
        assert data["shards"] == [0, 1]
        assert "hits" in data["cache_stats"]

    def test_metrics(self, api_client):
        """Should return the node stats."""
        assert api_client.get("/metrics").json()["authority"] == "authority-0"

    def test_account(self, api_client):
        """Should return the account summary."""
        data = api_client.get("/accounts/1").json()
        assert data["balance"] == 100
        assert data["next_sequence"] == 2

    def test_account_missing(self, api_client, mock_node):
        """Should return 404 for unknown accounts."""
        mock_node.account_summary.return_value = None
        assert api_client.get("/accounts/5").status_code == 404

    def test_account_other_shard(self, api_client, mock_node):
        """Should return 404 for accounts on shards not hosted here."""
        mock_node.account_summary.side_effect = KeyError("shard 3")
        assert api_client.get("/accounts/5").status_code == 404

    def test_account_bad_id(self, api_client):
        """Should return 400 for malformed ids."""
        assert api_client.get("/accounts/1.x").status_code == 400

    def test_sweep(self, api_client):
        """Should list the removed accounts."""
        data = api_client.post("/admin/sweep").json()
        assert data == {"removed": ["1.0"], "total": 1}

    def test_snapshot_conflict(self, api_client, mock_node):
        """Should return 409 when snapshots are disabled."""
        mock_node.snapshot.side_effect = ValueError("snapshots are disabled")
        assert api_client.post("/admin/snapshot").status_code == 409

    def test_no_node_attached(self):
        """Should return 503 when no node is attached."""
        attach_node(None)
        assert TestClient(app).get("/health").status_code == 503

    def test_real_node_metrics(self, nodes):
        """Should serve live stats from an attached node."""
        attach_node(nodes[0])
        try:
            data = TestClient(app).get("/metrics").json()
            assert data["authority"] == nodes[0].name
        finally:
            attach_node(None)
