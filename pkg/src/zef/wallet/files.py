"""
Files handed between users: coins minted for someone else, and broker
OpenAccount certificates. Each file is a short magic followed by the
canonical encoding of the object.
"""

from pathlib import Path
from typing import Callable, TypeVar, Union

from ..coins.opaque import OpaqueCoin
from ..coins.transparent import TransparentCoin
from ..core.encoding import Reader, Writer, decode_exact
from ..core.messages import Certificate
from ..errors import ProtocolError, ReasonCode

T = TypeVar("T")

OPAQUE_COIN_MAGIC = b"ZEFCOINO"
TRANSPARENT_COIN_MAGIC = b"ZEFCOINT"
CERTIFICATE_MAGIC = b"ZEFCERT1"

AnyCoin = Union[OpaqueCoin, TransparentCoin]


def _write(path: str, magic: bytes, encode: Callable[[Writer], None]) -> Path:
    w = Writer()
    encode(w)
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(magic + w.getvalue())
    return target


def _read(data: bytes, magic: bytes, read: Callable[[Reader], T], what: str) -> T:
    if not data.startswith(magic):
        raise ProtocolError(ReasonCode.PARSE_FAILURE, f"not a {what} file")
    return decode_exact(data[len(magic):], read)


def export_coin(coin: AnyCoin, path: str) -> Path:
    magic = TRANSPARENT_COIN_MAGIC if isinstance(coin, TransparentCoin) else OPAQUE_COIN_MAGIC
    return _write(path, magic, coin.encode)


def load_coin(path: str) -> AnyCoin:
    data = Path(path).read_bytes()
    if data.startswith(TRANSPARENT_COIN_MAGIC):
        return _read(data, TRANSPARENT_COIN_MAGIC, TransparentCoin.decode, "coin")
    return _read(data, OPAQUE_COIN_MAGIC, OpaqueCoin.decode, "coin")


def export_certificate(cert: Certificate, path: str) -> Path:
    return _write(path, CERTIFICATE_MAGIC, cert.encode)


def load_certificate(path: str) -> Certificate:
    return _read(Path(path).read_bytes(), CERTIFICATE_MAGIC, Certificate.decode, "certificate")
