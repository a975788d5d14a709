"""
Range proofs for Pedersen-style commitments C = G^v * H^r.

Bit decomposition: the prover commits to every bit of v as C_b = G^bit * H^r_b,
picks the last r_b so that prod C_b^(2^b) = C exactly, and proves each C_b
opens to 0 or 1 with a two-branch OR proof (one simulated branch, one real).
All bits share a single Fiat-Shamir challenge c, split per bit as c0 + c1 = c.

No trusted setup. Proof size and verification time are linear in the bit count.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from ..core.encoding import Reader, Writer
from ..errors import CryptoError, ReasonCode
from .coconut import read_g1, write_g1
from .group import Point
from .params import PublicParams
from .transcript import Transcript

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BitProof:
    c0: int
    z0: int
    z1: int


@dataclass(frozen=True)
class RangeProof:
    bit_commitments: Tuple[Point, ...]
    challenge: int
    bits: Tuple[BitProof, ...]

    def encode(self, w: Writer) -> None:
        w.seq(self.bit_commitments, write_g1)
        w.scalar(self.challenge)
        w.seq(self.bits, lambda w, b: w.scalar(b.c0).scalar(b.z0).scalar(b.z1))

    @classmethod
    def decode(cls, r: Reader) -> "RangeProof":
        commitments = tuple(r.seq(read_g1))
        challenge = r.scalar()
        bits = tuple(r.seq(lambda r: BitProof(r.scalar(), r.scalar(), r.scalar())))
        return cls(commitments, challenge, bits)

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()


def _challenge(
    params: PublicParams,
    context: bytes,
    value_base: Point,
    blind_base: Point,
    commitment: Point,
    bit_commitments: Sequence[Point],
    announcements: Sequence[Point],
) -> int:
    t = Transcript(params, b"zef/range-proof")
    t.raw(b"ctx", context)
    t.g1(b"G", value_base).g1(b"H", blind_base).g1(b"C", commitment)
    t.g1_many(b"Cb", bit_commitments)
    t.g1_many(b"A", announcements)
    return t.challenge()


def range_prove(
    params: PublicParams,
    commitment: Point,
    value: int,
    randomness: int,
    value_base: Point,
    blind_base: Point,
    context: bytes = b"",
) -> RangeProof:
    """
    Prove 0 <= value < 2^range_bits for commitment = value_base^value * blind_base^randomness.

    Raises:
        CryptoError(ValueOutOfRange): value outside [0, v_max]
    """
    if not 0 <= value <= params.v_max:
        raise CryptoError(ReasonCode.VALUE_OUT_OF_RANGE, f"value {value} outside [0, {params.v_max}]")
    group = params.group
    order = params.order
    n = params.range_bits

    bits = [(value >> b) & 1 for b in range(n)]
    blinds = [group.random_scalar() for _ in range(n - 1)]
    # last blind closes the sum: sum 2^b r_b = randomness
    partial = sum(r << b for b, r in enumerate(blinds)) % order
    last = (randomness - partial) * pow(1 << (n - 1), -1, order) % order
    blinds.append(last)

    neg_g = group.g1_neg(value_base)
    bit_commitments: List[Point] = []
    announcements: List[Point] = []
    plans = []
    for bit, r in zip(bits, blinds):
        c_b = group.g1_mul(blind_base, r)
        if bit:
            c_b = group.g1_add(c_b, value_base)
        bit_commitments.append(c_b)
        # branch statements: Y0 = C_b, Y1 = C_b / G, both claimed to be H^r
        y0, y1 = c_b, group.g1_add(c_b, neg_g)
        w = group.random_scalar()
        fake_c, fake_z = group.random_scalar(), group.random_scalar()
        if bit == 0:
            a0 = group.g1_mul(blind_base, w)
            a1 = group.g1_add(group.g1_mul(blind_base, fake_z), group.g1_mul(y1, fake_c))
        else:
            a0 = group.g1_add(group.g1_mul(blind_base, fake_z), group.g1_mul(y0, fake_c))
            a1 = group.g1_mul(blind_base, w)
        announcements.extend([a0, a1])
        plans.append((bit, r, w, fake_c, fake_z))

    c = _challenge(params, context, value_base, blind_base, commitment, bit_commitments, announcements)
    proofs = []
    for bit, r, w, fake_c, fake_z in plans:
        real_c = (c - fake_c) % order
        real_z = (w - real_c * r) % order
        if bit == 0:
            proofs.append(BitProof(c0=real_c, z0=real_z, z1=fake_z))
        else:
            proofs.append(BitProof(c0=fake_c, z0=fake_z, z1=real_z))
    return RangeProof(tuple(bit_commitments), c, tuple(proofs))


def range_verify(
    params: PublicParams,
    commitment: Point,
    proof: RangeProof,
    value_base: Point,
    blind_base: Point,
    context: bytes = b"",
) -> bool:
    """Completeness/soundness check; returns False on any malformed proof."""
    group = params.group
    order = params.order
    n = params.range_bits
    if len(proof.bit_commitments) != n or len(proof.bits) != n:
        return False

    recombined = group.g1_msm(proof.bit_commitments, [1 << b for b in range(n)])
    if not group.eq(recombined, commitment):
        return False

    neg_g = group.g1_neg(value_base)
    c = proof.challenge
    announcements: List[Point] = []
    for c_b, bit in zip(proof.bit_commitments, proof.bits):
        c1 = (c - bit.c0) % order
        y1 = group.g1_add(c_b, neg_g)
        announcements.append(group.g1_add(group.g1_mul(blind_base, bit.z0), group.g1_mul(c_b, bit.c0)))
        announcements.append(group.g1_add(group.g1_mul(blind_base, bit.z1), group.g1_mul(y1, c1)))

    expected = _challenge(params, context, value_base, blind_base, commitment,
                          proof.bit_commitments, announcements)
    return expected == c
