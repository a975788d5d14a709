"""
Scenario files: committee shape, genesis, fault plan and client script.

Scenarios are JSON documents validated by pydantic, so a failing run can be
written out, edited by hand and replayed.
"""

import json
import logging
import random
from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

from ..authority.keyfile import authority_name
from ..core.keys import KeyPair
from ..core.uid import UID
from .network import FaultPlan

logger = logging.getLogger(__name__)

OpKind = Literal[
    "transfer",
    "open_account",
    "change_key",
    "close_account",
    "anon_coins",
    "equivocate",
]

ADVERSARIAL_KINDS = {"equivocate"}


def seed_hex(rng: random.Random) -> str:
    return bytes(rng.getrandbits(8) for _ in range(32)).hex()


def key_from_seed(text: str) -> KeyPair:
    return KeyPair.from_seed(bytes.fromhex(text))


class GenesisSpec(BaseModel):
    account: str = Field(description="root id, e.g. '3'")
    key_seed: str = Field(description="owner Ed25519 seed, 32 bytes hex")
    balance: int = Field(default=0, ge=0)

    @property
    def uid(self) -> UID:
        return UID.parse(self.account)


class ScriptOp(BaseModel):
    """
    One client action. Ops on the same account run in script order; ops on
    different accounts run concurrently, each starting no earlier than `at`.

    anon_coins withdraws `amount` into opaque coins of the given `outputs`
    values for `recipient` (the account itself by default), replays the
    coin request `replays` more times, then redeems every coin into
    `redeem_to` when set.

    equivocate signs a Transfer to `recipient` and another to
    `conflicting_recipient` at the same sequence number and tries to
    certify both.
    """

    kind: OpKind
    account: str
    at: int = Field(default=0, ge=0)
    recipient: Optional[str] = None
    conflicting_recipient: Optional[str] = None
    amount: int = Field(default=0, ge=0)
    new_id: Optional[str] = None
    key_seed: Optional[str] = None
    outputs: List[int] = Field(default_factory=list)
    replays: int = Field(default=0, ge=0)
    redeem_to: Optional[str] = None

    @model_validator(mode="after")
    def check_fields(self) -> "ScriptOp":
        if self.kind == "transfer" and self.recipient is None:
            raise ValueError("transfer needs a recipient")
        if self.kind == "open_account" and (self.new_id is None or self.key_seed is None):
            raise ValueError("open_account needs new_id and key_seed")
        if self.kind == "change_key" and self.key_seed is None:
            raise ValueError("change_key needs key_seed")
        if self.kind == "anon_coins" and sum(self.outputs) != self.amount:
            raise ValueError("anon_coins outputs must add up to amount")
        if self.kind == "equivocate" and (self.recipient is None or self.conflicting_recipient is None):
            raise ValueError("equivocate needs two recipients")
        return self

    @property
    def uid(self) -> UID:
        return UID.parse(self.account)

    @property
    def adversarial(self) -> bool:
        return self.kind in ADVERSARIAL_KINDS


class Scenario(BaseModel):
    """A complete, replayable simulator run."""

    name: str = "scenario"
    seed: int = 7
    authorities: int = Field(default=4, ge=1)
    shards: int = Field(default=1, ge=1)
    range_bits: int = Field(default=8, ge=1, le=63)
    genesis: List[GenesisSpec] = Field(default_factory=list)
    faults: FaultPlan = Field(default_factory=FaultPlan)
    script: List[ScriptOp] = Field(default_factory=list)
    retry_interval: int = Field(default=12, ge=1, description="logical ticks before a client resends")
    max_attempts: int = Field(default=60, ge=1)

    @model_validator(mode="after")
    def check_faults(self) -> "Scenario":
        f = (self.authorities - 1) // 3
        if len(self.faults.crashes) > f:
            raise ValueError(f"{len(self.faults.crashes)} crashes exceed f={f} for N={self.authorities}")
        return self

    @classmethod
    def load(cls, path: str) -> "Scenario":
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str) -> Path:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(self.model_dump(), indent=2), encoding="utf-8")
        return target

    def with_script(self, script: List[ScriptOp]) -> "Scenario":
        return self.model_copy(update={"script": script})

    def with_faults(self, faults: FaultPlan) -> "Scenario":
        return self.model_copy(update={"faults": faults})

    def genesis_keys(self) -> Dict[UID, KeyPair]:
        return {g.uid: key_from_seed(g.key_seed) for g in self.genesis}


def random_scenario(
    seed: int,
    authorities: int = 4,
    shards: int = 1,
    accounts: int = 3,
    ops: int = 8,
    crashes: int = 1,
    drop_rate: float = 0.05,
    duplicate_rate: float = 0.05,
    max_delay: int = 4,
    balance: int = 100,
    open_rate: float = 0.15,
    change_key_rate: float = 0.1,
    close_rate: float = 0.05,
) -> Scenario:
    """
    A random honest workload that is valid by construction.

    Only genesis accounts transfer, and only out of their own genesis
    balance, so no transfer depends on a credit arriving first. Children
    opened along the way rotate keys and may be closed; closed and
    never-opened ids still receive transfers.
    """
    rng = random.Random(seed)
    genesis = [GenesisSpec(account=str(i + 1), key_seed=seed_hex(rng), balance=balance) for i in range(accounts)]
    budget: Dict[str, int] = {g.account: g.balance for g in genesis}
    next_sequence: Dict[str, int] = {g.account: 0 for g in genesis}
    children: List[str] = []
    closed: List[str] = []
    ghosts = [str(100 + i) for i in range(2)]

    script: List[ScriptOp] = []
    for _ in range(ops):
        at = rng.randint(0, 20)
        roll = rng.random()
        if children and roll < close_rate:
            account = rng.choice(children)
            children.remove(account)
            closed.append(account)
            script.append(ScriptOp(kind="close_account", account=account, at=at))
            continue
        if children and roll < close_rate + change_key_rate:
            account = rng.choice(children)
            script.append(ScriptOp(kind="change_key", account=account, at=at, key_seed=seed_hex(rng)))
            next_sequence[account] += 1
            continue
        account = rng.choice(list(budget))
        if roll < close_rate + change_key_rate + open_rate:
            child = str(UID.parse(account).child(next_sequence[account]))
            script.append(ScriptOp(kind="open_account", account=account, at=at, new_id=child, key_seed=seed_hex(rng)))
            next_sequence[account] += 1
            next_sequence[child] = 0
            children.append(child)
            continue
        if budget[account] == 0:
            continue
        targets = [a for a in list(budget) + children + closed + ghosts if a != account]
        amount = rng.randint(1, min(budget[account], 10))
        budget[account] -= amount
        script.append(ScriptOp(kind="transfer", account=account, at=at, recipient=rng.choice(targets), amount=amount))
        next_sequence[account] += 1

    names = [authority_name(i) for i in range(authorities)]
    crashed = rng.sample(names, min(crashes, (authorities - 1) // 3))
    faults = FaultPlan(
        drop_rate=drop_rate,
        duplicate_rate=duplicate_rate,
        max_delay=max_delay,
        cross_shard_duplicate_rate=duplicate_rate,
        crashes={name: rng.randint(0, 30) for name in crashed},
    )
    return Scenario(
        name=f"random-{seed}",
        seed=seed,
        authorities=authorities,
        shards=shards,
        genesis=genesis,
        faults=faults,
        script=script,
    )
