"""
Tests for the zef command line.
"""

import argparse

import pytest

from src.zef.core.committee import CommitteeConfig
from src.zef.core.uid import UID
from src.zef.main import main, parse_pair, setup_cli
from src.zef.sim.scenario import GenesisSpec, Scenario, ScriptOp
from src.zef.wallet.state import WalletState


@pytest.fixture
def committee_dir(tmp_path):
    """A dealt committee with one funded account, plus its wallet."""
    out = tmp_path / "net"
    wallet = tmp_path / "alice.wallet"
    main(["keygen", "--genesis", "1:100", "--range-bits", "8", "--out", str(out), "--wallet", str(wallet)])
    return out, wallet


@pytest.fixture
def scenario_file(tmp_path):
    scenario = Scenario(
        name="cli",
        genesis=[GenesisSpec(account="1", key_seed="01" * 32, balance=10)],
        script=[ScriptOp(kind="transfer", account="1", recipient="2", amount=4)],
    )
    return scenario.save(str(tmp_path / "cli.json"))


class TestArguments:
    """Tests for argument parsing."""

    def test_parse_pair(self):
        """Should split ID:NUMBER."""
        assert parse_pair("1.2:30") == (UID.parse("1.2"), 30)

    def test_parse_pair_rejects_missing_id(self):
        """Should reject a bare number."""
        with pytest.raises(argparse.ArgumentTypeError):
            parse_pair("30")

    def test_transfer_arguments(self):
        """Should map --from/--to onto source/recipient."""
        args = setup_cli().parse_args(
            ["transfer", "--config", "c.json", "--wallet", "w", "--from", "1", "--to", "2", "--amount", "5"]
        )
        assert (args.source, args.recipient, args.amount) == ("1", "2", 5)

    def test_shard_sweep_arguments(self):
        """Should accept several shard counts for a sweep."""
        args = setup_cli().parse_args(["bench", "load", "--shards", "1", "2", "4", "--mode", "inprocess"])
        assert args.shards == [1, 2, 4]
        assert args.mode == "inprocess"


class TestKeygen:
    """Tests for dealing a committee from the command line."""

    def test_writes_committee_and_wallet(self, committee_dir):
        """Should write the committee, the key files and the genesis wallet."""
        out, wallet_path = committee_dir
        cfg = CommitteeConfig.load(str(out / "committee.json"))
        assert len(cfg.names) == 4
        assert cfg.range_bits == 8
        assert sorted(p.name for p in (out / "keys").iterdir()) == [f"{name}.json" for name in sorted(cfg.names)]
        wallet = WalletState.load(str(wallet_path))
        assert UID.root(1) in wallet.accounts

    def test_genesis_needs_wallet(self, tmp_path):
        """Should refuse to deal genesis accounts without a wallet for their keys."""
        with pytest.raises(SystemExit) as exc:
            main(["keygen", "--genesis", "1:5", "--range-bits", "8", "--out", str(tmp_path / "net")])
        assert exc.value.code == 1

    def test_new_key(self, committee_dir, capsys):
        """Should add a spare key and print it."""
        out, wallet_path = committee_dir
        main(["new-key", "--config", str(out / "committee.json"), "--wallet", str(wallet_path)])
        printed = capsys.readouterr().out.strip().splitlines()[-1]
        wallet = WalletState.load(str(wallet_path))
        assert [k.public.hex() for k in wallet.spare_keys] == [printed]

    def test_authority_shard_mismatch(self, committee_dir):
        """Should refuse a shard count that disagrees with the committee."""
        out, _ = committee_dir
        with pytest.raises(SystemExit) as exc:
            main(["authority", "--config", str(out / "committee.json"), "--authority", "authority-0", "--num-shards", "3"])
        assert exc.value.code == 1


class TestSimCommands:
    """Tests for the simulator commands."""

    def test_sim_run(self, scenario_file, capsys):
        """Should run a scenario file and report a pass."""
        main(["sim", "run", "--scenario", str(scenario_file)])
        assert "cli: PASS" in capsys.readouterr().out

    def test_sim_enumerate(self, scenario_file, capsys):
        """Should print the converged state."""
        main(["sim", "enumerate", "--scenario", str(scenario_file)])
        out = capsys.readouterr().out
        assert "1 outcome(s)" in out
        assert "  2: ('present'" in out
