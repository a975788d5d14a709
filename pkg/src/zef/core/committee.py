"""
Committee configuration: authorities, voting power, shard endpoints,
credential keys and genesis accounts.

Stored as a JSON file validated by pydantic. Quorum = N - f voting power.
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

from ..coins.coconut import VerificationKey
from ..errors import ProtocolError, ReasonCode
from .encoding import MAX_U64, hash_bytes
from .keys import PublicKey
from .uid import UID

logger = logging.getLogger(__name__)


def shard_for(account_id: UID, num_shards: int) -> int:
    """hash(canonical bytes of id) mod num_shards."""
    return int.from_bytes(account_id.digest()[:8], "little") % num_shards


class ShardEndpoint(BaseModel):
    """Where one shard of an authority listens."""
    model_config = ConfigDict(frozen=True)

    host: str = "127.0.0.1"
    tcp_port: int = Field(ge=0, le=65535)
    udp_port: Optional[int] = Field(default=None, ge=0, le=65535)


class CredentialKeyModel(BaseModel):
    """Hex-encoded credential verification key (alpha, betas in G2; gammas in G1)."""
    model_config = ConfigDict(frozen=True)

    alpha: str
    betas: List[str]
    gammas: List[str]

    def to_key(self) -> VerificationKey:
        return VerificationKey.from_hex(self.alpha, self.betas, self.gammas)

    @classmethod
    def from_key(cls, key: VerificationKey) -> "CredentialKeyModel":
        alpha, betas, gammas = key.to_hex()
        return cls(alpha=alpha, betas=betas, gammas=gammas)


class AuthorityInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    public_key: str = Field(description="Ed25519 verification key, hex")
    voting_power: int = Field(default=1, ge=1)
    shards: List[ShardEndpoint] = Field(default_factory=list)
    credential_index: int = Field(default=0, ge=0, description="Evaluation point of this authority's key share")
    credential_vk: Optional[CredentialKeyModel] = None


class GenesisAccount(BaseModel):
    model_config = ConfigDict(frozen=True)

    account_id: List[int]
    owner: Optional[str] = None
    balance: int = Field(default=0, ge=0, le=MAX_U64)


class CommitteeConfig(BaseModel):
    """
    The committee everyone agrees on.

    Attributes:
        authorities: name -> key, voting power, shard endpoints
        fault_bound: f, with 3f < N
        credential_threshold: t for the threshold credential scheme
        credential_vk: aggregate credential verification key
        params_seed: seed string for the public group parameters
        range_bits: coin value range exponent (v_max = 2^range_bits - 1)
        num_shards: shards per authority
        genesis: root accounts with owners and initial balances
    """
    model_config = ConfigDict(frozen=True)

    authorities: Dict[str, AuthorityInfo]
    fault_bound: int = Field(ge=0)
    credential_threshold: int = Field(default=1, ge=1)
    credential_vk: Optional[CredentialKeyModel] = None
    params_seed: str = "zef"
    range_bits: int = Field(default=32, ge=1, le=63)
    num_shards: int = Field(default=1, ge=1)
    genesis: List[GenesisAccount] = Field(default_factory=list)

    _public_keys: Dict[str, PublicKey] = PrivateAttr(default_factory=dict)
    _credential_key: Optional[VerificationKey] = PrivateAttr(default=None)
    _authority_credential_keys: Dict[str, VerificationKey] = PrivateAttr(default_factory=dict)
    _digest: bytes = PrivateAttr(default=b"")

    @model_validator(mode="after")
    def check_bounds(self) -> "CommitteeConfig":
        if not self.authorities:
            raise ValueError("committee needs at least one authority")
        total = sum(a.voting_power for a in self.authorities.values())
        if 3 * self.fault_bound >= total:
            raise ValueError(f"fault bound f={self.fault_bound} needs 3f < N={total}")
        if self.credential_threshold > len(self.authorities):
            raise ValueError("credential threshold exceeds number of authorities")
        if sum(g.balance for g in self.genesis) > MAX_U64:
            raise ValueError("genesis balances overflow u64")
        return self

    def model_post_init(self, __context) -> None:
        for name, info in self.authorities.items():
            self._public_keys[name] = PublicKey.from_hex(info.public_key)
        members = "|".join(
            f"{name}:{info.public_key}:{info.voting_power}" for name, info in sorted(self.authorities.items())
        )
        self._digest = hash_bytes(b"zef/committee", f"{members}|f={self.fault_bound}".encode())

    def digest(self) -> bytes:
        return self._digest

    # ------------------------------------------------------------------
    # quorum arithmetic
    # ------------------------------------------------------------------

    @property
    def total_power(self) -> int:
        return sum(a.voting_power for a in self.authorities.values())

    @property
    def quorum_threshold(self) -> int:
        return self.total_power - self.fault_bound

    @property
    def names(self) -> List[str]:
        return sorted(self.authorities)

    def power_of(self, name: str) -> int:
        info = self.authorities.get(name)
        if info is None:
            raise ProtocolError(ReasonCode.UNKNOWN_AUTHORITY, f"unknown authority '{name}'", authority=name)
        return info.voting_power

    def is_quorum(self, signers: Iterable[str]) -> bool:
        return is_quorum(self, signers)

    def public_key(self, name: str) -> PublicKey:
        key = self._public_keys.get(name)
        if key is None:
            raise ProtocolError(ReasonCode.UNKNOWN_AUTHORITY, f"unknown authority '{name}'", authority=name)
        return key

    # ------------------------------------------------------------------
    # credentials
    # ------------------------------------------------------------------

    def credential_key(self) -> VerificationKey:
        if self.credential_vk is None:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "committee has no credential key")
        if self._credential_key is None:
            self._credential_key = self.credential_vk.to_key()
        return self._credential_key

    def authority_credential_key(self, name: str) -> VerificationKey:
        if name not in self._authority_credential_keys:
            info = self.authorities[name]
            if info.credential_vk is None:
                raise ProtocolError(ReasonCode.PARSE_FAILURE, f"{name} has no credential key share")
            self._authority_credential_keys[name] = info.credential_vk.to_key()
        return self._authority_credential_keys[name]

    # ------------------------------------------------------------------
    # sharding / genesis
    # ------------------------------------------------------------------

    def shard_of(self, account_id: UID) -> int:
        return shard_for(account_id, self.num_shards)

    def endpoint(self, name: str, shard: int) -> ShardEndpoint:
        info = self.authorities[name]
        if shard >= len(info.shards):
            raise ProtocolError(ReasonCode.UNKNOWN_AUTHORITY, f"{name} has no endpoint for shard {shard}")
        return info.shards[shard]

    def genesis_balance(self, account_id: UID) -> int:
        for g in self.genesis:
            if tuple(g.account_id) == account_id.path:
                return g.balance
        return 0

    def genesis_owner(self, account_id: UID) -> Optional[PublicKey]:
        for g in self.genesis:
            if tuple(g.account_id) == account_id.path and g.owner:
                return PublicKey.from_hex(g.owner)
        return None

    def genesis_total(self) -> int:
        return sum(g.balance for g in self.genesis)

    # ------------------------------------------------------------------
    # file I/O
    # ------------------------------------------------------------------

    @classmethod
    def load(cls, path: str) -> "CommitteeConfig":
        text = Path(path).read_text(encoding="utf-8")
        config = cls.model_validate_json(text)
        logger.info(f"Loaded committee from {path}: N={config.total_power}, f={config.fault_bound}, "
                    f"shards={config.num_shards}")
        return config

    def save(self, path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.model_dump(), indent=2), encoding="utf-8")


def is_quorum(cfg: CommitteeConfig, signers: Iterable[str]) -> bool:
    """True iff the distinct signers' combined power reaches N - f."""
    power = 0
    for name in set(signers):
        power += cfg.power_of(name)
    return power >= cfg.quorum_threshold
