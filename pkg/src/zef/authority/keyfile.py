"""
Authority key files and the local dealer.

The committee file is public; every authority additionally keeps its own
secrets file (Ed25519 seed + credential key share). `generate_committee`
plays trusted dealer for test and desk-scale deployments.
"""

import json
import logging
import random
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from ..coins.coconut import KeyShare, SecretKey, VerificationKey, keygen
from ..coins.params import setup
from ..core.committee import (
    AuthorityInfo,
    CommitteeConfig,
    CredentialKeyModel,
    GenesisAccount,
    ShardEndpoint,
)
from ..core.keys import KeyPair, PublicKey
from ..core.uid import UID

logger = logging.getLogger(__name__)


class AuthoritySecrets(BaseModel):
    """Everything one authority must keep private."""
    model_config = ConfigDict(frozen=True)

    name: str
    signing_seed: str = Field(description="Ed25519 seed, hex")
    credential_index: int = Field(ge=1)
    credential_x: str = Field(description="credential key share x_j, hex")
    credential_ys: List[str] = Field(description="credential key shares y_j,i, hex")

    def signing_key(self) -> KeyPair:
        return KeyPair.from_hex(self.signing_seed)

    def credential_secret(self) -> SecretKey:
        return SecretKey(int(self.credential_x, 16), tuple(int(y, 16) for y in self.credential_ys))

    @classmethod
    def from_parts(cls, name: str, key: KeyPair, share: KeyShare) -> "AuthoritySecrets":
        return cls(
            name=name,
            signing_seed=key.seed_hex(),
            credential_index=share.index,
            credential_x=format(share.secret.x, "x"),
            credential_ys=[format(y, "x") for y in share.secret.ys],
        )

    @classmethod
    def load(cls, path: str) -> "AuthoritySecrets":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.model_dump(), indent=2), encoding="utf-8")


def authority_name(i: int) -> str:
    return f"authority-{i}"


def generate_committee(
    count: int,
    fault_bound: Optional[int] = None,
    threshold: Optional[int] = None,
    num_shards: int = 1,
    genesis: Sequence[Tuple[UID, Optional[PublicKey], int]] = (),
    host: str = "127.0.0.1",
    base_port: int = 0,
    with_udp: bool = False,
    params_seed: str = "zef",
    range_bits: int = 32,
    seed: Optional[int] = None,
) -> Tuple[CommitteeConfig, Dict[str, AuthoritySecrets]]:
    """
    Deal keys for a fresh committee of `count` equal-power authorities.

    Args:
        count: number of authorities N
        fault_bound: f, defaults to the largest f with 3f < N
        threshold: credential threshold t, defaults to N - f
        num_shards: shards per authority
        genesis: (root id, owner key, balance) triples
        base_port: first TCP port; 0 leaves every port at 0 (in-process use)
        with_udp: also assign a UDP port next to every TCP port
        seed: makes the dealt keys reproducible (tests, simulator)

    Returns:
        (committee config, name -> secrets)
    """
    f = (count - 1) // 3 if fault_bound is None else fault_bound
    t = count - f if threshold is None else threshold
    rng = random.Random(seed) if seed is not None else None

    params = setup(params_seed, range_bits=range_bits)
    shares = keygen(params, t, count, rng=rng)

    authorities: Dict[str, AuthorityInfo] = {}
    secrets: Dict[str, AuthoritySecrets] = {}
    for i, share in enumerate(shares.shares):
        name = authority_name(i)
        if rng is not None:
            key = KeyPair.from_seed(bytes(rng.getrandbits(8) for _ in range(32)))
        else:
            key = KeyPair.generate()
        endpoints = []
        for shard in range(num_shards):
            if base_port:
                port = base_port + 2 * (i * num_shards + shard)
                endpoints.append(ShardEndpoint(host=host, tcp_port=port, udp_port=port + 1 if with_udp else None))
            else:
                endpoints.append(ShardEndpoint(host=host, tcp_port=0))
        authorities[name] = AuthorityInfo(
            public_key=key.public.hex(),
            voting_power=1,
            shards=endpoints,
            credential_index=share.index,
            credential_vk=CredentialKeyModel.from_key(share.verification),
        )
        secrets[name] = AuthoritySecrets.from_parts(name, key, share)

    cfg = CommitteeConfig(
        authorities=authorities,
        fault_bound=f,
        credential_threshold=t,
        credential_vk=CredentialKeyModel.from_key(shares.verification_key),
        params_seed=params_seed,
        range_bits=range_bits,
        num_shards=num_shards,
        genesis=[
            GenesisAccount(account_id=list(uid.path), owner=owner.hex() if owner else None, balance=balance)
            for uid, owner, balance in genesis
        ],
    )
    logger.info(f"Dealt committee N={count} f={f} t={t} shards={num_shards}")
    return cfg, secrets


def write_committee(
    out_dir: str,
    cfg: CommitteeConfig,
    secrets: Dict[str, AuthoritySecrets],
) -> Path:
    """committee.json plus keys/<name>.json under out_dir."""
    root = Path(out_dir)
    cfg.save(str(root / "committee.json"))
    for name, secret in secrets.items():
        secret.save(str(root / "keys" / f"{name}.json"))
    logger.info(f"Wrote committee and {len(secrets)} key files to {root}")
    return root / "committee.json"


def credential_keys_by_index(cfg: CommitteeConfig) -> Dict[int, VerificationKey]:
    """Evaluation point -> vk_j, for share verification on the wallet side."""
    return {
        info.credential_index: cfg.authority_credential_key(name)
        for name, info in cfg.authorities.items()
        if info.credential_vk is not None
    }
