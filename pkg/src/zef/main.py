#!/usr/bin/env python3
"""
Zef command line.

One entry point for the committee dealer, authority shards, the batch
wallet, the simulator and the benchmarks. Wallet commands load the wallet
file, run one flow against the committee and save the wallet again.
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import __version__
from .config import settings
from .core.committee import CommitteeConfig
from .core.keys import KeyPair, PublicKey
from .core.uid import UID
from .errors import SimulationError, ZefError
from .utils.logging import setup_logging
from .wallet.broker import open_account_via_broker
from .wallet.client import ZefClient
from .wallet.files import export_certificate, export_coin, load_certificate, load_coin
from .wallet.state import WalletState
from .wallet.transport import TcpTransport

logger = logging.getLogger(__name__)


def setup_cli() -> argparse.ArgumentParser:
    """Configure command-line argument parser."""
    parser = argparse.ArgumentParser(
        prog="zef",
        description="Consensus-free BFT payments with deletable accounts and anonymous coins",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Deal a local committee of 4 with one funded root account
  zef keygen --authorities 4 --shards 2 --base-port 9100 --genesis 1:1000 --out net --wallet alice.wallet

  # Run shard 0 of authority-0
  zef authority --config net/committee.json --authority authority-0 --shard 0 --metrics-port 8100

  # Move funds and mint anonymous coins
  zef transfer --config net/committee.json --wallet alice.wallet --from 1 --to 2 --amount 10
  zef spend-coins --config net/committee.json --wallet alice.wallet --withdraw 1:8 --output 1:6 --output 1:2

  # Simulator and benchmarks
  zef sim many --count 200
  zef bench load --workload transfer --rate 200 --duration 10 --shards 2 --out bench_results

Environment Variables:
  LOG_LEVEL            Logging level (default: INFO)
  RANGE_BITS           Coin value range in bits (default: 32)
  SNAPSHOT_ENABLED     Restore/save authority state under SNAPSHOT_DIR
  REQUEST_TIMEOUT_SECONDS  Per-authority wallet timeout (default: 5.0)
""",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose (DEBUG) logging")
    parser.add_argument("--version", action="version", version=f"zef v{__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    keygen = sub.add_parser("keygen", help="Deal committee.json plus one key file per authority")
    keygen.add_argument("--authorities", type=int, default=4)
    keygen.add_argument("--shards", type=int, default=1)
    keygen.add_argument("--host", default="127.0.0.1")
    keygen.add_argument("--base-port", type=int, default=9100)
    keygen.add_argument("--udp", action="store_true", help="Also assign UDP ports")
    keygen.add_argument("--genesis", action="append", default=[], metavar="ID:BALANCE",
                        help="Funded root account; its key goes into --wallet (repeatable)")
    keygen.add_argument("--range-bits", type=int, default=settings.range_bits)
    keygen.add_argument("--out", default="committee")
    keygen.add_argument("--wallet", help="Wallet file receiving the genesis account keys")

    authority = sub.add_parser("authority", help="Run authority shards")
    authority.add_argument("--config", required=True)
    authority.add_argument("--authority", required=True, help="Committee member name")
    authority.add_argument("--key", help="Key file (default: <config dir>/keys/<authority>.json)")
    authority.add_argument("--shard", type=int, help="Shard to host (default: all)")
    authority.add_argument("--num-shards", type=int, help="Must match the committee file when given")
    authority.add_argument("--protocol", choices=["tcp", "udp"], default="tcp")
    authority.add_argument("--metrics-port", type=int, default=settings.metrics_port or None)

    def wallet_command(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("--wallet", required=True)
        cmd.add_argument("--protocol", choices=["tcp", "udp"], default="tcp")
        return cmd

    wallet_command("new-key", "Generate a spare key to hand to a broker")

    open_account = wallet_command("open-account", "Open child accounts, for yourself or as a broker")
    open_account.add_argument("--parent", help="Parent account this wallet owns")
    open_account.add_argument("--count", type=int, default=1, help="Pre-provision this many children")
    open_account.add_argument("--for-key", help="Broker mode: open for this public key (hex)")
    open_account.add_argument("--cert-out", help="Broker mode: where to write the certificate")
    open_account.add_argument("--accept", metavar="CERT", help="Recipient mode: verify and adopt a broker certificate")
    open_account.add_argument("--rotate", action="store_true", help="With --accept: change to a fresh key at once")

    transfer = wallet_command("transfer", "Transfer(recipient, amount)")
    transfer.add_argument("--from", dest="source", required=True)
    transfer.add_argument("--to", dest="recipient", required=True)
    transfer.add_argument("--amount", type=int, required=True)

    change_key = wallet_command("change-key", "Rotate an account to a fresh key")
    change_key.add_argument("--account", required=True)

    close_account = wallet_command("close-account", "Close an account for good")
    close_account.add_argument("--account", required=True)

    spend = wallet_command("spend-coins", "Spend coins and balances into new coins")
    spend.add_argument("--input", action="append", default=[], metavar="ID:INDEX", help="Wallet coin to spend (ID:SEEDHEX with --transparent)")
    spend.add_argument("--withdraw", action="append", default=[], metavar="ID:AMOUNT", help="Public withdrawal")
    spend.add_argument("--output", action="append", default=[], metavar="ID:VALUE", required=True)
    spend.add_argument("--transparent", action="store_true", help="Mint transparent coins instead")
    spend.add_argument("--coin-dir", default="coins", help="Where coins for other wallets are written")

    redeem = wallet_command("redeem-coin", "SpendAndTransfer a coin into an account")
    redeem.add_argument("--coin", required=True, metavar="ID:INDEX", help="Wallet coin; ID:SEEDHEX for a transparent one")
    redeem.add_argument("--to", dest="target", required=True)

    import_coin = wallet_command("import-coin", "Import a coin file minted for one of your accounts")
    import_coin.add_argument("path")

    sync = wallet_command("sync", "Replay certificates to lagging authorities")
    sync.add_argument("--account", required=True)

    balance = wallet_command("balance", "Query an account from a quorum")
    balance.add_argument("--account", required=True)

    sim = sub.add_parser("sim", help="Deterministic fault-injecting simulator")
    sim_sub = sim.add_subparsers(dest="sim_command", required=True)
    sim_run = sim_sub.add_parser("run", help="Run one scenario")
    sim_run.add_argument("--scenario", help="Scenario or trace JSON (default: a random one from --seed)")
    sim_run.add_argument("--seed", type=int, default=settings.sim_default_seed)
    sim_run.add_argument("--export", action="store_true", help="Write JSON and Markdown traces")
    sim_many = sim_sub.add_parser("many", help="Run consecutive random seeds")
    sim_many.add_argument("--count", type=int, default=settings.sim_schedule_count)
    sim_many.add_argument("--seed", type=int, default=settings.sim_default_seed)
    sim_many.add_argument("--authorities", type=int, default=4)
    sim_many.add_argument("--shards", type=int, default=1)
    sim_many.add_argument("--crashes", type=int, default=1)
    sim_enum = sim_sub.add_parser("enumerate", help="Explore every delivery order of a tiny scenario")
    sim_enum.add_argument("--scenario", required=True)

    bench = sub.add_parser("bench", help="Load runs, crypto microbenchmarks and plots")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)
    load = bench_sub.add_parser("load", help="Throughput / latency under fixed offered load")
    load.add_argument("--workload", choices=["transfer", "anon-coin"], default="transfer")
    load.add_argument("--rate", type=float, default=100.0)
    load.add_argument("--duration", type=float, default=10.0)
    load.add_argument("--authorities", type=int, default=4)
    load.add_argument("--shards", type=int, nargs="+", default=[1], help="Several values run a sweep")
    load.add_argument("--faults", type=int, default=0)
    load.add_argument("--runs", type=int, default=settings.bench_runs)
    load.add_argument("--seed", type=int, default=0)
    load.add_argument("--accounts", type=int, default=50, help="Funded accounts per shard")
    load.add_argument("--mode", choices=["process", "inprocess"], default="process")
    load.add_argument("--out", default=settings.bench_out_dir)
    micro = bench_sub.add_parser("micro", help="Per-step cost of coin creation")
    micro.add_argument("--iterations", type=int, default=settings.bench_microbench_iterations)
    micro.add_argument("--range-bits", type=int, default=settings.range_bits)
    micro.add_argument("--out", default=settings.bench_out_dir)
    plot = bench_sub.add_parser("plot", help="Charts from a load CSV")
    plot.add_argument("--csv", required=True)
    plot.add_argument("--out", help="Output directory (default: next to the CSV)")

    return parser


def parse_pair(text: str) -> Tuple[UID, int]:
    """'1.2:30' -> (UID 1.2, 30)."""
    account, _, number = text.rpartition(":")
    if not account:
        raise argparse.ArgumentTypeError(f"expected ID:NUMBER, got {text!r}")
    return UID.parse(account), int(number)


# ============================================================================
# committee and authority
# ============================================================================

def run_keygen(args: argparse.Namespace) -> None:
    from .authority.keyfile import generate_committee, write_committee

    genesis: List[Tuple[UID, KeyPair, int]] = []
    for entry in args.genesis:
        uid, amount = parse_pair(entry)
        genesis.append((uid, KeyPair.generate(), amount))
    cfg, secrets = generate_committee(
        args.authorities,
        num_shards=args.shards,
        genesis=[(uid, key.public, amount) for uid, key, amount in genesis],
        host=args.host,
        base_port=args.base_port,
        with_udp=args.udp,
        range_bits=args.range_bits,
    )
    path = write_committee(args.out, cfg, secrets)
    print(f"Committee: {path} (N={len(cfg.names)}, f={cfg.fault_bound}, t={cfg.credential_threshold})")
    if genesis:
        if not args.wallet:
            print("Genesis keys are only kept with --wallet", file=sys.stderr)
            sys.exit(1)
        wallet = WalletState.load_or_create(args.wallet)
        for uid, key, amount in genesis:
            wallet.add_account(uid, key)
            print(f"  genesis {uid}: {amount}")
        print(f"Wallet: {wallet.save()}")


def run_authority(args: argparse.Namespace) -> None:
    from .authority.keyfile import AuthoritySecrets
    from .authority.node import serve_shard

    cfg = CommitteeConfig.load(args.config)
    if args.num_shards is not None and args.num_shards != cfg.num_shards:
        print(f"--num-shards {args.num_shards} does not match the committee ({cfg.num_shards})", file=sys.stderr)
        sys.exit(1)
    key_path = args.key or str(Path(args.config).parent / "keys" / f"{args.authority}.json")
    secrets = AuthoritySecrets.load(key_path)
    if secrets.name != args.authority:
        print(f"{key_path} belongs to {secrets.name}, not {args.authority}", file=sys.stderr)
        sys.exit(1)
    shard_text = "all shards" if args.shard is None else f"shard {args.shard}"
    node = args.authority if args.shard is None else f"{args.authority}/{args.shard}"
    setup_logging(logging.DEBUG if args.verbose else None, node=node)
    print(f"Serving {args.authority} {shard_text} over {args.protocol}")
    try:
        asyncio.run(serve_shard(cfg, secrets, args.shard, args.protocol, args.metrics_port))
    except KeyboardInterrupt:
        print("\nStopped.")


# ============================================================================
# wallet
# ============================================================================

async def run_wallet_command(args: argparse.Namespace) -> None:
    cfg = CommitteeConfig.load(args.config)
    wallet = WalletState.load_or_create(args.wallet)

    if args.command == "new-key":
        key = wallet.new_spare_key()
        wallet.save()
        print(key.public.hex())
        return

    client = ZefClient(cfg, wallet, TcpTransport(cfg, protocol=args.protocol))
    try:
        if args.command == "open-account":
            await _open_account(client, args)
        elif args.command == "transfer":
            cert = await client.transfer(UID.parse(args.source), UID.parse(args.recipient), args.amount)
            print(f"Transferred {args.amount} from {args.source} to {args.recipient} (sequence {cert.value.sequence})")
        elif args.command == "change-key":
            cert, _ = await client.change_key(UID.parse(args.account))
            print(f"Rotated key of {args.account} (sequence {cert.value.sequence})")
        elif args.command == "close-account":
            await client.close_account(UID.parse(args.account))
            wallet.remove_account(UID.parse(args.account))
            print(f"Closed {args.account}")
        elif args.command == "spend-coins":
            await _spend_coins(client, args)
        elif args.command == "redeem-coin":
            await _redeem_coin(client, args)
        elif args.command == "import-coin":
            coin = load_coin(args.path)
            if hasattr(coin, "certificate"):
                client.import_transparent_coin(coin)
            else:
                client.import_coin(coin)
            print(f"Imported coin for {coin.account_id} worth {coin.value}")
        elif args.command == "sync":
            uid = UID.parse(args.account)
            for name, count in (await client.sync_all(uid)).items():
                print(f"  {name}: {'unreachable' if count < 0 else f'{count} certificates replayed'}")
        elif args.command == "balance":
            uid = UID.parse(args.account)
            print(f"{uid}: {await client.balance(uid)}")
            coins = [c for c in wallet.coins if c.account_id == uid]
            for coin in coins:
                print(f"  opaque coin #{coin.index}: {coin.value}")
            for coin in (c for c in wallet.transparent_coins if c.account_id == uid):
                print(f"  transparent coin {coin.seed.hex()[:16]}: {coin.value}")
        client.persist()
    finally:
        await client.close()


async def _open_account(client: ZefClient, args: argparse.Namespace) -> None:
    if args.accept:
        new_id = await client.accept_opened_account(load_certificate(args.accept), rotate=args.rotate)
        print(f"Accepted account {new_id}{' (key rotated)' if args.rotate else ''}")
        return
    if not args.parent:
        print("--parent is required unless --accept is given", file=sys.stderr)
        sys.exit(1)
    parent = UID.parse(args.parent)
    if args.for_key:
        new_id, cert = await open_account_via_broker(client, parent, PublicKey.from_hex(args.for_key))
        target = args.cert_out or f"{new_id}.cert"
        export_certificate(cert, target)
        print(f"Opened {new_id} for {args.for_key[:16]}..., certificate in {target}")
        return
    for uid in await client.open_own_accounts(parent, args.count):
        print(f"Opened {uid}")


async def _spend_coins(client: ZefClient, args: argparse.Namespace) -> None:
    wallet = client.wallet
    withdrawals: Dict[UID, int] = {}
    for entry in args.withdraw:
        uid, amount = parse_pair(entry)
        withdrawals[uid] = withdrawals.get(uid, 0) + amount
    recipients = [parse_pair(entry) for entry in args.output]
    if args.transparent:
        inputs = [c for c in wallet.transparent_coins if any(_names_coin(entry, c) for entry in args.input)]
        if len(inputs) != len(args.input):
            print("Some --input coins are not in this wallet", file=sys.stderr)
            sys.exit(1)
        coins = await client.create_transparent_coins(inputs, withdrawals, recipients)
    else:
        wanted = {parse_pair(entry) for entry in args.input}
        inputs = [c for c in wallet.coins if (c.account_id, c.index) in wanted]
        if len(inputs) != len(wanted):
            print("Some --input coins are not in this wallet", file=sys.stderr)
            sys.exit(1)
        coins = await client.spend_and_create_coins(inputs, withdrawals, recipients)
    for coin in coins:
        if coin.account_id in wallet.accounts:
            print(f"  kept coin for {coin.account_id}: {coin.value}")
        else:
            tag = coin.seed.hex()[:16] if args.transparent else str(coin.index)
            path = export_coin(coin, str(Path(args.coin_dir) / f"{coin.account_id}_{tag}.coin"))
            print(f"  coin for {coin.account_id}: {coin.value} -> {path}")


def _names_coin(selector: str, coin) -> bool:
    """ID:INDEX picks an opaque coin, ID:SEEDHEX (any prefix) a transparent one."""
    account, _, tag = selector.rpartition(":")
    if not account or coin.account_id != UID.parse(account):
        return False
    if hasattr(coin, "certificate"):
        return coin.seed.hex().startswith(tag.lower())
    return tag.isdigit() and coin.index == int(tag)


async def _redeem_coin(client: ZefClient, args: argparse.Namespace) -> None:
    wallet = client.wallet
    target = UID.parse(args.target)
    coin = next((c for c in wallet.coins if _names_coin(args.coin, c)), None)
    if coin is not None:
        await client.redeem_coin(coin, target)
    else:
        transparent = next((c for c in wallet.transparent_coins if _names_coin(args.coin, c)), None)
        if transparent is None:
            print(f"No coin {args.coin} in this wallet", file=sys.stderr)
            sys.exit(1)
        coin = transparent
        await client.redeem_transparent_coin(transparent, target)
    print(f"Redeemed {coin.value} into {target}")


# ============================================================================
# simulator and benchmarks
# ============================================================================

def run_sim(args: argparse.Namespace) -> None:
    from .sim.enumerate import enumerate_small_schedules
    from .sim.runner import run_many, run_scenario
    from .sim.scenario import Scenario, random_scenario
    from .utils.export import TraceExporter

    if args.sim_command == "run":
        scenario = _load_scenario(args.scenario) if args.scenario else random_scenario(args.seed)
        trace, verdict = run_scenario(scenario)
        print(f"{scenario.name}: {'PASS' if verdict.passed else 'FAIL'} digest={trace.digest}")
        for name in verdict.failed_checkers():
            for violation in verdict.violations[name]:
                print(f"  {name}: {violation}")
        if args.export or not verdict.passed:
            exporter = TraceExporter()
            print(f"  JSON: {exporter.export_to_json(scenario, trace, verdict)}")
            print(f"  Markdown: {exporter.export_to_markdown(scenario, trace, verdict)}")
        if not verdict.passed:
            sys.exit(1)
    elif args.sim_command == "many":
        verdicts = run_many(args.count, args.seed, authorities=args.authorities, shards=args.shards,
                            crashes=args.crashes)
        print(f"{len(verdicts)} schedules passed every checker")
    else:
        result = enumerate_small_schedules(_load_scenario(args.scenario))
        print(f"{result.scenario}: {result.leaves} leaves, {result.states} states, {len(result.outcomes)} outcome(s)")
        for uid, view in sorted(result.final_view().items(), key=lambda item: str(item[0])):
            print(f"  {uid}: {view}")
        result.raise_if_failed()


def _load_scenario(path: str):
    """A scenario file, or a trace export (which embeds its scenario)."""
    from .sim.scenario import Scenario

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return Scenario.model_validate(data.get("scenario", data))


def run_bench(args: argparse.Namespace) -> None:
    if args.bench_command == "load":
        from .bench.load import shard_sweep
        from .bench.report import summarize, write_reports

        reports = asyncio.run(
            shard_sweep(
                args.shards,
                args.workload,
                authorities=args.authorities,
                rate=args.rate,
                duration=args.duration,
                faults=args.faults,
                runs=args.runs,
                seed=args.seed,
                mode=args.mode,
                accounts_per_shard=args.accounts,
            )
        )
        paths = write_reports(reports, args.out, stem=f"{args.workload}_f{args.faults}")
        print(summarize(reports).to_string(index=False))
        print(f"CSV: {paths[0]}")
    elif args.bench_command == "micro":
        from .bench.micro import run_microbench, write_microbench

        table = run_microbench(args.iterations, args.range_bits)
        print(table.to_string(index=False))
        print(f"CSV: {write_microbench(table, args.out)}")
    else:
        from .bench.plot import plot_latency_cdf, plot_load

        for path in plot_load(args.csv, args.out):
            print(f"Chart: {path}")
        samples = Path(args.csv).with_name(Path(args.csv).stem + "_samples.csv")
        if samples.exists():
            print(f"Chart: {plot_latency_cdf(str(samples))}")


WALLET_COMMANDS = {
    "new-key", "open-account", "transfer", "change-key", "close-account",
    "spend-coins", "redeem-coin", "import-coin", "sync", "balance",
}


def main(argv: Optional[List[str]] = None):
    """Main entry point for the zef CLI."""
    parser = setup_cli()
    args = parser.parse_args(argv)

    log_level = logging.DEBUG if args.verbose else None
    setup_logging(log_level)

    try:
        if args.command == "keygen":
            run_keygen(args)
        elif args.command == "authority":
            run_authority(args)
        elif args.command in WALLET_COMMANDS:
            asyncio.run(run_wallet_command(args))
        elif args.command == "sim":
            run_sim(args)
        elif args.command == "bench":
            run_bench(args)
    except ZefError as e:
        print(f"\n❌ {e}", file=sys.stderr)
        for key in ("expected_sequence", "authority"):
            if getattr(e, key, None) is not None:
                print(f"   {key}: {getattr(e, key)}", file=sys.stderr)
        if isinstance(e, SimulationError) and e.minimized:
            print("   minimized script:", file=sys.stderr)
            print(json.dumps(e.minimized, indent=2, default=str), file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
