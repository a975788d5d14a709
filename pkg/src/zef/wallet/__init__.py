"""Wallet client: account operations, broker account creation, coins and sync."""

from .client import ZefClient
from .files import export_certificate, export_coin, load_certificate, load_coin
from .quorum import QuorumDriver, QuorumResult, Verdict
from .state import OwnedAccount, WalletState
from .transport import InProcessTransport, TcpTransport, Transport

__all__ = [
    "InProcessTransport",
    "OwnedAccount",
    "QuorumDriver",
    "QuorumResult",
    "TcpTransport",
    "Transport",
    "Verdict",
    "WalletState",
    "ZefClient",
    "export_certificate",
    "export_coin",
    "load_certificate",
    "load_coin",
]
