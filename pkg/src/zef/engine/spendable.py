"""
Spendable value of an account, used as the conservation oracle.

    spendable(id) = initial balance + received - sent + unspent coin values

computed from certificates and coins alone, independent of any engine.
"""

from dataclasses import dataclass
from typing import Iterable, Mapping, Set

from ..core.messages import Certificate, Request, Spend, SpendAndTransfer, Transfer, TransparentCoinRef
from ..core.uid import UID


@dataclass(frozen=True)
class CoinRecord:
    """A coin owned by account_id, identified by its spent marker."""

    account_id: UID
    marker: bytes
    value: int


def _credit_to(request: Request, account_id: UID) -> int:
    operation = request.operation
    if isinstance(operation, Transfer) and operation.recipient == account_id:
        return operation.amount
    if isinstance(operation, SpendAndTransfer) and operation.recipient == account_id:
        coin = operation.coin
        return coin.body.value if isinstance(coin, TransparentCoinRef) else coin.value
    return 0


def _debit_of(request: Request) -> int:
    operation = request.operation
    if isinstance(operation, (Transfer, Spend)):
        return operation.amount
    return 0


def compute_spendable(
    account_id: UID,
    initial_balance: int,
    certificates: Iterable[Certificate],
    coins: Iterable[CoinRecord],
    spent: Set[bytes],
) -> int:
    """
    Args:
        account_id: the account to evaluate
        initial_balance: its genesis balance (usually 0)
        certificates: executed request certificates (duplicates are ignored)
        coins: coins created so far, for any account
        spent: markers consumed by account_id
    """
    total = initial_balance
    seen = set()
    for cert in certificates:
        if not isinstance(cert.value, Request):
            continue
        digest = cert.digest()
        if digest in seen:
            continue
        seen.add(digest)
        request = cert.value
        total += _credit_to(request, account_id)
        if request.account_id == account_id:
            total -= _debit_of(request)
    for coin in coins:
        if coin.account_id == account_id and coin.marker not in spent:
            total += coin.value
    return total


def total_spendable(
    initial_balances: Mapping[UID, int],
    certificates: Iterable[Certificate],
    coins: Iterable[CoinRecord],
    spent: Mapping[UID, Set[bytes]],
) -> int:
    """Sum of compute_spendable over every account mentioned anywhere."""
    certificates = list(certificates)
    coins = list(coins)
    accounts = set(initial_balances) | set(spent) | {c.account_id for c in coins}
    for cert in certificates:
        if isinstance(cert.value, Request):
            accounts.add(cert.value.account_id)
            operation = cert.value.operation
            if isinstance(operation, (Transfer, SpendAndTransfer)):
                accounts.add(operation.recipient)
    return sum(
        compute_spendable(
            account_id,
            initial_balances.get(account_id, 0),
            certificates,
            coins,
            spent.get(account_id, set()),
        )
        for account_id in accounts
    )
