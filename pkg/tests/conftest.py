"""
Pytest configuration and fixtures for Zef tests.

Committees use 8-bit coin values so range proofs stay small; everything
else runs with production settings.
"""

from typing import Dict, List, Sequence

import pytest

from src.zef.authority.keyfile import AuthoritySecrets, generate_committee
from src.zef.authority.node import AuthorityNode
from src.zef.coins.params import PublicParams, setup
from src.zef.core.certificates import certificate_from_votes
from src.zef.core.committee import CommitteeConfig
from src.zef.core.keys import KeyPair
from src.zef.core.messages import Certificate, Request
from src.zef.core.uid import UID
from src.zef.engine.engine import AccountEngine
from src.zef.errors import ZefError
from src.zef.wallet.client import ZefClient
from src.zef.wallet.state import WalletState
from src.zef.wallet.transport import InProcessTransport

TEST_RANGE_BITS = 8

ALICE = UID.root(1)
BOB = UID.root(2)


def key_from(n: int) -> KeyPair:
    return KeyPair.from_seed(bytes([n]) * 32)


@pytest.fixture(scope="session")
def params() -> PublicParams:
    """Public coin parameters matching every test committee."""
    return setup("zef", range_bits=TEST_RANGE_BITS)


@pytest.fixture
def alice_key() -> KeyPair:
    return key_from(1)


@pytest.fixture
def bob_key() -> KeyPair:
    return key_from(2)


@pytest.fixture(scope="session")
def dealt_committee():
    """N=4, f=1, one shard, alice (1) holds 100 and bob (2) holds 50."""
    return generate_committee(
        4,
        genesis=[(ALICE, key_from(1).public, 100), (BOB, key_from(2).public, 50)],
        range_bits=TEST_RANGE_BITS,
        seed=11,
    )


@pytest.fixture(scope="session")
def sharded_committee():
    """Same accounts, two shards per authority."""
    return generate_committee(
        4,
        num_shards=2,
        genesis=[(ALICE, key_from(1).public, 100), (BOB, key_from(2).public, 50)],
        range_bits=TEST_RANGE_BITS,
        seed=12,
    )


@pytest.fixture
def cfg(dealt_committee) -> CommitteeConfig:
    return dealt_committee[0]


@pytest.fixture
def secrets(dealt_committee) -> Dict[str, AuthoritySecrets]:
    return dealt_committee[1]


@pytest.fixture
def engines(cfg, secrets, params) -> List[AccountEngine]:
    """One unsharded engine per authority, in committee name order."""
    return [
        AccountEngine(cfg, name, secrets[name].signing_key(), params=params)
        for name in cfg.names
    ]


def certify(cfg: CommitteeConfig, engines: Sequence[AccountEngine], request: Request, owner: KeyPair) -> Certificate:
    """Collect votes from every engine that accepts the request."""
    signed = request.signed_by(owner)
    votes = []
    for engine in engines:
        try:
            votes.append(engine.handle_request(signed))
        except ZefError:
            continue
    return certificate_from_votes(cfg, votes)


def confirm_all(engines: Sequence[AccountEngine], cert: Certificate) -> None:
    """Confirm on every engine and deliver the resulting credits/activations."""
    for engine in engines:
        for message in engine.handle_confirmation(cert):
            engine.handle_cross_shard(message)


@pytest.fixture
def nodes(cfg, secrets, params) -> List[AuthorityNode]:
    return [AuthorityNode(cfg, secrets[name], params=params) for name in cfg.names]


@pytest.fixture
def transport(nodes) -> InProcessTransport:
    return InProcessTransport(nodes, record=True)


@pytest.fixture
def wallet(alice_key, bob_key) -> WalletState:
    state = WalletState()
    state.add_account(ALICE, alice_key)
    state.add_account(BOB, bob_key)
    return state


@pytest.fixture
def client(cfg, wallet, transport, params) -> ZefClient:
    return ZefClient(cfg, wallet, transport, params=params)
