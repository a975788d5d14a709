"""Public parameters shared by wallets and authorities."""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

from ..config import settings
from ..core.encoding import hash_bytes
from .group import BilinearGroup, Point, default_group

logger = logging.getLogger(__name__)

ATTRIBUTE_COUNT = 3  # coin attributes: key k, seed q, value v
GENERATOR_DOMAIN = b"zef/params/generator"


@dataclass(frozen=True)
class PublicParams:
    """
    Groups, generators and the coin value range.

    Attributes:
        group: pairing group (G1, G2, GT, order p, e, hash-to-G1)
        seed: label all generators are derived from
        hs: attribute generators h0..h(q-1)
        h_star: extra generator for request commitments
        range_bits: coin values live in [0, 2^range_bits - 1]
    """

    group: BilinearGroup
    seed: str
    hs: Tuple[Point, ...]
    h_star: Point
    range_bits: int
    digest: bytes = field(default=b"", compare=False)

    @property
    def g1(self) -> Point:
        return self.group.g1

    @property
    def g2(self) -> Point:
        return self.group.g2

    @property
    def order(self) -> int:
        return self.group.order

    @property
    def v_max(self) -> int:
        return (1 << self.range_bits) - 1

    @property
    def attribute_count(self) -> int:
        return len(self.hs)

    def hash_to_g1(self, domain: bytes, data: bytes) -> Point:
        return self.group.hash_to_g1(domain, data)


def _derive(group: BilinearGroup, seed: str, label: str) -> Point:
    return group.hash_to_g1(GENERATOR_DOMAIN, f"{seed}/{label}".encode())


@lru_cache(maxsize=16)
def _setup_cached(seed: str, attributes: int, range_bits: int, group: BilinearGroup) -> PublicParams:
    hs = tuple(_derive(group, seed, f"h{i}") for i in range(attributes))
    h_star = _derive(group, seed, "h*")
    encoded = b"".join(group.g1_to_bytes(h) for h in hs + (h_star,))
    digest = hash_bytes(
        b"zef/params",
        f"{group.name}|{seed}|{range_bits}|".encode() + encoded,
    )
    logger.debug(f"Derived public params seed={seed!r} q={attributes} range_bits={range_bits}")
    return PublicParams(group, seed, hs, h_star, range_bits, digest)


def setup(
    seed: str = "zef",
    attributes: int = ATTRIBUTE_COUNT,
    range_bits: Optional[int] = None,
    group: Optional[BilinearGroup] = None,
) -> PublicParams:
    """
    Deterministic parameter generation.

    Generators come from hash-to-G1 over domain-separated labels, so nobody
    knows discrete logs between them. Same seed, same params.
    """
    if attributes < 1:
        raise ValueError("need at least one attribute")
    bits = settings.range_bits if range_bits is None else range_bits
    if not 1 <= bits <= 63:
        raise ValueError(f"range_bits must be in 1..63, got {bits}")
    return _setup_cached(seed, attributes, bits, group or default_group)
