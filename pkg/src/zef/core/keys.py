"""Ed25519 owner and authority keys (PyNaCl)."""

from dataclasses import dataclass
from typing import Optional

from nacl.encoding import HexEncoder
from nacl.exceptions import BadSignatureError
from nacl.signing import SigningKey, VerifyKey

from ..errors import ProtocolError, ReasonCode
from .encoding import Reader, Writer

PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64


@dataclass(frozen=True)
class PublicKey:
    """Raw 32-byte Ed25519 verification key."""

    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) != PUBLIC_KEY_SIZE:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "public key must be 32 bytes")

    def verify(self, message: bytes, signature: bytes) -> bool:
        if len(signature) != SIGNATURE_SIZE:
            return False
        try:
            VerifyKey(self.data).verify(message, signature)
            return True
        except (BadSignatureError, ValueError):
            return False

    def hex(self) -> str:
        return self.data.hex()

    @classmethod
    def from_hex(cls, text: str) -> "PublicKey":
        try:
            return cls(bytes.fromhex(text.strip()))
        except ValueError:
            raise ProtocolError(ReasonCode.PARSE_FAILURE, "bad public key hex")

    def encode(self, w: Writer) -> None:
        w.raw(self.data)

    @classmethod
    def decode(cls, r: Reader) -> "PublicKey":
        return cls(r.raw(PUBLIC_KEY_SIZE))

    def __str__(self) -> str:
        return self.data.hex()[:16]


class KeyPair:
    """Signing key plus its public half."""

    def __init__(self, signing_key: Optional[SigningKey] = None):
        self._sk = signing_key or SigningKey.generate()
        self.public = PublicKey(bytes(self._sk.verify_key))

    @classmethod
    def generate(cls) -> "KeyPair":
        return cls(SigningKey.generate())

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        return cls(SigningKey(seed))

    @classmethod
    def from_hex(cls, text: str) -> "KeyPair":
        return cls(SigningKey(text.strip().encode(), encoder=HexEncoder))

    def seed_hex(self) -> str:
        return self._sk.encode(encoder=HexEncoder).decode()

    def seed(self) -> bytes:
        return bytes(self._sk)

    def sign(self, message: bytes) -> bytes:
        return self._sk.sign(message).signature
