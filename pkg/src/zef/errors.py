"""
Reason codes and exceptions shared by every Zef component.

Every rejection an authority, wallet or checker can produce maps to one
ReasonCode; the code travels on the wire inside Error frames so clients can
react (replay history on MissingEarlierCertificates, give up on AlreadySpent).
"""

from enum import Enum
from typing import Optional


class ReasonCode(str, Enum):
    """Machine-readable rejection reasons."""
    # protocol-core
    LENGTH_EXCEEDED = "length_exceeded"
    UNKNOWN_AUTHORITY = "unknown_authority"
    NOT_A_QUORUM = "not_a_quorum"
    INVALID_VOTE = "invalid_vote"
    DUPLICATE_SIGNER = "duplicate_signer"
    PARSE_FAILURE = "parse_failure"

    # account-engine
    INSUFFICIENT_FUNDS = "insufficient_funds"
    WRONG_CHILD_ID = "wrong_child_id"
    ALREADY_SPENT = "already_spent"
    BAD_COIN_SIGNATURE = "bad_coin_signature"
    INACTIVE_ACCOUNT = "inactive_account"
    BAD_OWNER_SIGNATURE = "bad_owner_signature"
    ACCOUNT_LOCKED = "account_locked"
    WRONG_SEQUENCE = "wrong_sequence"
    INVALID_OPERATION = "invalid_operation"
    INVALID_CERTIFICATE = "invalid_certificate"
    MISSING_EARLIER_CERTIFICATES = "missing_earlier_certificates"
    BALANCE_OVERFLOW = "balance_overflow"

    # coins
    INVALID_THRESHOLD = "invalid_threshold"
    INVALID_PROOF = "invalid_proof"
    WRONG_SHARE_COUNT = "wrong_share_count"
    DUPLICATE_POINT = "duplicate_point"
    CONSERVATION_VIOLATED = "conservation_violated"
    VALUE_OUT_OF_RANGE = "value_out_of_range"
    DUPLICATE_COIN_INDEX = "duplicate_coin_index"
    DUPLICATE_COIN = "duplicate_coin"
    INVALID_INPUT_COIN = "invalid_input_coin"
    HASH_MISMATCH = "hash_mismatch"
    DUPLICATE_SPENT_MARKER = "duplicate_spent_marker"

    # authority-node
    FRAME_TOO_LARGE = "frame_too_large"
    UNKNOWN_TAG = "unknown_tag"
    WRONG_SHARD = "wrong_shard"

    # wallet-client
    NO_QUORUM = "no_quorum"
    OWNER_KEY_MISMATCH = "owner_key_mismatch"
    CERTIFICATE_MISMATCH = "certificate_mismatch"
    SHARE_VERIFICATION_FAILED = "share_verification_failed"
    RECIPIENT_REJECTED = "recipient_rejected"
    HISTORY_UNAVAILABLE = "history_unavailable"
    EQUIVOCATION_REFUSED = "equivocation_refused"

    # tooling
    TARGET_UNREACHABLE = "target_unreachable"
    CHECKER_VIOLATION = "checker_violation"


class ZefError(Exception):
    """Base error. Carries a reason code plus optional context."""

    def __init__(
        self,
        reason: ReasonCode,
        message: str = "",
        expected_sequence: Optional[int] = None,
        authority: Optional[str] = None,
    ):
        self.reason = reason
        self.message = message or reason.value
        self.expected_sequence = expected_sequence
        self.authority = authority
        super().__init__(f"{reason.value}: {self.message}")

    def to_dict(self) -> dict:
        return {
            "reason": self.reason.value,
            "message": self.message,
            "expected_sequence": self.expected_sequence,
            "authority": self.authority,
        }


class ProtocolError(ZefError):
    """Committee, encoding and certificate failures."""


class EngineError(ZefError):
    """Account state machine rejections."""


class CryptoError(ZefError):
    """Credential, proof and coin-bundle failures."""


class WalletError(ZefError):
    """Client-side flow failures."""


class SimulationError(ZefError):
    """Checker violations raised by the simulator."""

    def __init__(self, message: str, trace_digest: Optional[str] = None, minimized=None):
        super().__init__(ReasonCode.CHECKER_VIOLATION, message)
        self.trace_digest = trace_digest
        self.minimized = minimized or []
