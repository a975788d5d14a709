"""
Simulation runner.

Builds a committee of real ShardService instances behind a SimNetwork,
runs one scripted client against it, disseminates every certificate once
the network is quiet, asks each live authority for its view, and hands the
resulting Trace to the checkers.
"""

import logging
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Set, Tuple

from ..authority.keyfile import AuthoritySecrets, generate_committee
from ..authority.shard import ShardService
from ..authority.wire import ErrorReply, Tag, decode_body, encode_body
from ..coins.params import PublicParams, setup
from ..config import settings
from ..core.committee import CommitteeConfig, GenesisAccount
from ..core.messages import (
    AccountInfoQuery,
    AccountInfoResponse,
    Certificate,
    OpenAccount,
    Request,
    SpendAndTransfer,
    Transfer,
    Vote,
)
from ..core.uid import UID
from ..engine.spendable import CoinRecord
from ..engine.state import CrossShardMessage
from ..errors import SimulationError
from .checkers import Verdict, run_checkers
from .client import LAGGING_REASONS, CertificateLibrary, SimClient
from .network import Endpoint, Envelope, SimNetwork, client_endpoint
from .scenario import Scenario, random_scenario
from .trace import Trace, VoteRecord

logger = logging.getLogger(__name__)

DISSEMINATOR = client_endpoint("disseminator")


@lru_cache(maxsize=8)
def deal_committee(authorities: int, shards: int, range_bits: int) -> Tuple[CommitteeConfig, Dict[str, AuthoritySecrets]]:
    """Reproducible keys for a committee shape. Dealing is slow, so it is done once per shape."""
    return generate_committee(authorities, num_shards=shards, range_bits=range_bits, seed=0)


@lru_cache(maxsize=8)
def public_params(params_seed: str, range_bits: int) -> PublicParams:
    return setup(params_seed, range_bits=range_bits)


class Simulation:
    """
    One run of a scenario.

    Args:
        scenario: committee shape, genesis, faults and script
        committee: (config, secrets) to use instead of the cached dealing
    """

    def __init__(
        self,
        scenario: Scenario,
        committee: Optional[Tuple[CommitteeConfig, Dict[str, AuthoritySecrets]]] = None,
    ):
        self.scenario = scenario
        base_cfg, secrets = committee or deal_committee(scenario.authorities, scenario.shards, scenario.range_bits)
        keys = scenario.genesis_keys()
        genesis = [
            GenesisAccount(account_id=list(g.uid.path), owner=keys[g.uid].public.hex(), balance=g.balance)
            for g in scenario.genesis
        ]
        self.cfg: CommitteeConfig = base_cfg.model_copy(update={"genesis": genesis})
        self.params = public_params(self.cfg.params_seed, self.cfg.range_bits)
        self.net = SimNetwork(scenario.faults, scenario.seed)
        self.library = CertificateLibrary()
        self.certificates: Dict[bytes, Certificate] = {}
        self.coins: Dict[bytes, CoinRecord] = {}
        self.votes: List[VoteRecord] = []
        self.spendable_samples: List[int] = []
        self.replay_mismatches = 0
        self.syncs = 0
        self.initial_balances: Dict[UID, int] = {g.uid: g.balance for g in scenario.genesis}

        self.services: Dict[Endpoint, ShardService] = {}
        for name in self.cfg.names:
            for shard in range(self.cfg.num_shards):
                service = ShardService(
                    self.cfg, secrets[name], shard, params=self.params, route=self._router_for(name, shard)
                )
                endpoint = (name, shard)
                self.services[endpoint] = service
                self.net.register(endpoint, self._handler_for(service, endpoint))

        self.client = SimClient("wallet", self, keys, scenario.script)

    # ------------------------------------------------------------------
    # authority side
    # ------------------------------------------------------------------

    def _router_for(self, name: str, shard: int):
        def route(msg: CrossShardMessage) -> None:
            self.net.send((name, shard), (name, self.cfg.shard_of(msg.target)), encode_body(msg), internal=True)

        return route

    def _handler_for(self, service: ShardService, endpoint: Endpoint):
        def handle(envelope: Envelope) -> None:
            reply = service.handle_body(envelope.body)
            if reply and reply[0] == Tag.VOTE:
                vote = decode_body(reply)
                if isinstance(vote, Vote) and isinstance(vote.value, Request):
                    self.votes.append(
                        VoteRecord(service.name, vote.value.account_id, vote.value.sequence, vote.value.digest())
                    )
            if not envelope.internal:
                self.net.send(endpoint, envelope.src, reply, ref=envelope.ref)

        return handle

    # ------------------------------------------------------------------
    # what the client reports
    # ------------------------------------------------------------------

    def _sample(self) -> None:
        trace = self._trace_stub()
        self.spendable_samples.append(trace.total_spendable())

    def observe_certificate(self, cert: Certificate) -> None:
        digest = cert.value.digest()
        if digest in self.certificates:
            return
        self.certificates[digest] = cert
        self.library.add(cert)
        self._sample()

    def observe_coin(self, coin: CoinRecord) -> None:
        if coin.marker in self.coins:
            return
        self.coins[coin.marker] = coin
        self._sample()

    # ------------------------------------------------------------------
    # running
    # ------------------------------------------------------------------

    def live_authorities(self) -> List[str]:
        return [name for name in self.cfg.names if name not in self.scenario.faults.crashes]

    def _disseminate(self) -> int:
        """
        Push every certificate to every live authority over a reliable network
        until nobody reports missing history. Returns the number of passes.
        """
        self.net.reliable = True
        lagging: Set[Endpoint] = set()

        def on_reply(envelope: Envelope) -> None:
            reply = decode_body(envelope.body)
            if isinstance(reply, ErrorReply) and reply.reason in LAGGING_REASONS:
                lagging.add(envelope.src)

        self.net.register(DISSEMINATOR, on_reply)
        certs = self.library.all()
        passes = 0
        for passes in range(1, settings.max_uid_length + 3):
            lagging.clear()
            for name in self.live_authorities():
                for cert in certs:
                    shard = self.cfg.shard_of(cert.request.account_id)
                    self.net.send(DISSEMINATOR, (name, shard), encode_body(cert))
            self.net.run(self.net.steps + settings.sim_max_steps)
            if not lagging:
                break
        if lagging:
            logger.warning(f"{self.scenario.name}: {len(lagging)} shards still lagging after dissemination")
        return passes

    def _interesting_ids(self) -> Set[UID]:
        ids: Set[UID] = set(self.initial_balances)
        for cert in self.certificates.values():
            ids.add(cert.request.account_id)
            operation = cert.request.operation
            if isinstance(operation, (Transfer, SpendAndTransfer)):
                ids.add(operation.recipient)
            elif isinstance(operation, OpenAccount):
                ids.add(operation.new_id)
        for coin in self.coins.values():
            ids.add(coin.account_id)
        for op in self.scenario.script:
            ids.add(op.uid)
            for text in (op.recipient, op.conflicting_recipient, op.new_id, op.redeem_to):
                if text:
                    ids.add(UID.parse(text))
        return ids

    def _query_final(self) -> Dict[str, Dict[UID, AccountInfoResponse]]:
        final: Dict[str, Dict[UID, AccountInfoResponse]] = {}
        ids = sorted(self._interesting_ids(), key=lambda uid: (len(uid.path), uid.path))
        for name in self.live_authorities():
            answers: Dict[UID, AccountInfoResponse] = {}
            for uid in ids:
                service = self.services[(name, self.cfg.shard_of(uid))]
                answers[uid] = service.engine.account_info(AccountInfoQuery(uid))
            final[name] = answers
        return final

    def _trace_stub(self) -> Trace:
        return Trace(
            scenario=self.scenario.name,
            seed=self.scenario.seed,
            digest="",
            initial_balances=self.initial_balances,
            live_authorities=self.live_authorities(),
            certificates=list(self.certificates.values()),
            coins=list(self.coins.values()),
        )

    def run(self) -> Trace:
        logger.info(
            f"Simulating {self.scenario.name}: N={len(self.cfg.names)} shards={self.cfg.num_shards} "
            f"ops={len(self.scenario.script)} seed={self.scenario.seed}"
        )
        self.client.start()
        completed = self.net.run(settings.sim_max_steps)
        self.client.abandon()
        steps = self.net.steps
        mints = any(op.kind == "anon_coins" for op in self.scenario.script)
        digest = self.net.trace_digest(include_frames=not mints)
        passes = self._disseminate()
        logger.info(f"{self.scenario.name}: {steps} steps, {len(self.certificates)} certificates, {passes} dissemination passes")

        trace = self._trace_stub()
        trace.digest = digest
        trace.voting_power = {name: self.cfg.power_of(name) for name in self.cfg.names}
        trace.quorum_threshold = self.cfg.quorum_threshold
        trace.events = list(self.net.events)
        trace.votes = list(self.votes)
        trace.outcomes = list(self.client.outcomes)
        trace.final = self._query_final()
        trace.spendable_samples = list(self.spendable_samples)
        trace.replay_mismatches = self.replay_mismatches
        trace.completed = completed
        trace.steps = steps
        return trace


def run_scenario(scenario: Scenario) -> Tuple[Trace, Verdict]:
    trace = Simulation(scenario).run()
    return trace, run_checkers(trace)


def run_many(
    count: Optional[int] = None,
    seed: Optional[int] = None,
    **shape,
) -> List[Verdict]:
    """
    Run `count` random schedules with consecutive seeds.

    Raises:
        SimulationError: on the first schedule that violates a checker,
            carrying the minimized script
    """
    count = settings.sim_schedule_count if count is None else count
    base = settings.sim_default_seed if seed is None else seed
    verdicts: List[Verdict] = []
    for i in range(count):
        scenario = random_scenario(base + i, **shape)
        trace, verdict = run_scenario(scenario)
        if not verdict.passed:
            logger.error(f"{scenario.name} failed {verdict.failed_checkers()}, minimizing")
            minimized = minimize(scenario)
            verdict.raise_if_failed(minimized=[op.model_dump() for op in minimized.script])
        verdicts.append(verdict)
        if (i + 1) % 100 == 0:
            logger.info(f"{i + 1}/{count} schedules passed")
    return verdicts


def _still_fails(scenario: Scenario) -> bool:
    try:
        return not run_scenario(scenario)[1].passed
    except SimulationError:
        return True


def minimize(scenario: Scenario) -> Scenario:
    """
    Shrink a failing scenario: drop script ops one at a time, then crashes
    and partitions, keeping each removal that still fails.
    """
    current = scenario
    index = 0
    while index < len(current.script):
        candidate = current.with_script(current.script[:index] + current.script[index + 1:])
        if _still_fails(candidate):
            current = candidate
        else:
            index += 1

    for name in list(current.faults.crashes):
        crashes = {k: v for k, v in current.faults.crashes.items() if k != name}
        candidate = current.with_faults(current.faults.model_copy(update={"crashes": crashes}))
        if _still_fails(candidate):
            current = candidate

    for i in reversed(range(len(current.faults.partitions))):
        partitions = current.faults.partitions[:i] + current.faults.partitions[i + 1:]
        candidate = current.with_faults(current.faults.model_copy(update={"partitions": partitions}))
        if _still_fails(candidate):
            current = candidate

    for knob in ("drop_rate", "duplicate_rate", "cross_shard_duplicate_rate"):
        if getattr(current.faults, knob):
            candidate = current.with_faults(current.faults.model_copy(update={knob: 0.0}))
            if _still_fails(candidate):
                current = candidate

    logger.info(f"Minimized {scenario.name} from {len(scenario.script)} to {len(current.script)} ops")
    return current


def replay(scenarios: Iterable[Scenario]) -> List[Tuple[Trace, Verdict]]:
    return [run_scenario(s) for s in scenarios]
