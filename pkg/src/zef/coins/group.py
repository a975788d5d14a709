"""
Bilinear group operations for the coin cryptography.

Everything above this module talks to a `BilinearGroup` and never to the
curve library directly, so the credential scheme stays curve-generic. The
one concrete group is BLS12-381 via py_ecc's optimized (Jacobian) backend.

Points are the backend's native tuples. Scalars are plain ints and are
always reduced mod the group order before use.
"""

import hashlib
import secrets
from abc import ABC, abstractmethod
from typing import Any, Iterable, Sequence, Tuple

from py_ecc import optimized_bls12_381 as bls
from py_ecc.bls.g2_primitives import (
    G1_to_pubkey,
    G2_to_signature,
    pubkey_to_G1,
    signature_to_G2,
)

from ..errors import CryptoError, ReasonCode

Point = Any

# Effective G1 cofactor multiplier for BLS12-381 (clears E(Fq) into G1).
G1_COFACTOR_EFF = 0xD201000000010001


class BilinearGroup(ABC):
    """G1 x G2 -> GT of prime order `order`, with hash-to-G1."""

    name: str
    order: int
    g1_size: int
    g2_size: int

    @property
    @abstractmethod
    def g1(self) -> Point: ...

    @property
    @abstractmethod
    def g2(self) -> Point: ...

    # G1
    @abstractmethod
    def g1_add(self, a: Point, b: Point) -> Point: ...

    @abstractmethod
    def g1_mul(self, p: Point, k: int) -> Point: ...

    @abstractmethod
    def g1_neg(self, p: Point) -> Point: ...

    @abstractmethod
    def g1_identity(self) -> Point: ...

    @abstractmethod
    def g1_to_bytes(self, p: Point) -> bytes: ...

    @abstractmethod
    def g1_from_bytes(self, data: bytes) -> Point: ...

    # G2
    @abstractmethod
    def g2_add(self, a: Point, b: Point) -> Point: ...

    @abstractmethod
    def g2_mul(self, p: Point, k: int) -> Point: ...

    @abstractmethod
    def g2_identity(self) -> Point: ...

    @abstractmethod
    def g2_to_bytes(self, p: Point) -> bytes: ...

    @abstractmethod
    def g2_from_bytes(self, data: bytes) -> Point: ...

    # shared
    @abstractmethod
    def eq(self, a: Point, b: Point) -> bool: ...

    @abstractmethod
    def is_identity(self, p: Point) -> bool: ...

    @abstractmethod
    def hash_to_g1(self, domain: bytes, message: bytes) -> Point: ...

    @abstractmethod
    def pairing_product_is_one(self, pairs: Sequence[Tuple[Point, Point]]) -> bool:
        """True iff prod e(P_i, Q_i) == 1 for (P_i in G1, Q_i in G2)."""

    # ------------------------------------------------------------------
    # derived helpers (curve independent)
    # ------------------------------------------------------------------

    def random_scalar(self) -> int:
        return secrets.randbelow(self.order - 1) + 1

    def inverse_scalar(self, k: int) -> int:
        return pow(k % self.order, -1, self.order)

    def hash_to_scalar(self, domain: bytes, data: bytes) -> int:
        digest = hashlib.sha512(len(domain).to_bytes(2, "little") + domain + data).digest()
        return int.from_bytes(digest, "big") % self.order

    def g1_sum(self, points: Iterable[Point]) -> Point:
        total = self.g1_identity()
        for p in points:
            total = self.g1_add(total, p)
        return total

    def g2_sum(self, points: Iterable[Point]) -> Point:
        total = self.g2_identity()
        for p in points:
            total = self.g2_add(total, p)
        return total

    def g1_msm(self, points: Sequence[Point], scalars: Sequence[int]) -> Point:
        """prod points[i]^scalars[i] (written additively)."""
        if len(points) != len(scalars):
            raise ValueError("points and scalars differ in length")
        return self.g1_sum(self.g1_mul(p, k) for p, k in zip(points, scalars))

    def g2_msm(self, points: Sequence[Point], scalars: Sequence[int]) -> Point:
        if len(points) != len(scalars):
            raise ValueError("points and scalars differ in length")
        return self.g2_sum(self.g2_mul(p, k) for p, k in zip(points, scalars))

    def pairings_equal(self, left: Tuple[Point, Point], right: Tuple[Point, Point]) -> bool:
        """e(left) == e(right), as e(a, b) * e(-c, d) == 1."""
        (a, b), (c, d) = left, right
        return self.pairing_product_is_one([(a, b), (self.g1_neg(c), d)])


class BLS12381Group(BilinearGroup):
    """BLS12-381 through py_ecc.optimized_bls12_381."""

    name = "bls12-381"
    order = bls.curve_order
    g1_size = 48
    g2_size = 96

    @property
    def g1(self) -> Point:
        return bls.G1

    @property
    def g2(self) -> Point:
        return bls.G2

    def g1_add(self, a: Point, b: Point) -> Point:
        return bls.add(a, b)

    def g1_mul(self, p: Point, k: int) -> Point:
        return bls.multiply(p, k % self.order)

    def g1_neg(self, p: Point) -> Point:
        return bls.neg(p)

    def g1_identity(self) -> Point:
        return bls.Z1

    def g1_to_bytes(self, p: Point) -> bytes:
        return bytes(G1_to_pubkey(p))

    def g1_from_bytes(self, data: bytes) -> Point:
        if len(data) != self.g1_size:
            raise CryptoError(ReasonCode.PARSE_FAILURE, f"G1 element must be {self.g1_size} bytes")
        try:
            point = pubkey_to_G1(data)
        except (ValueError, AssertionError) as e:
            raise CryptoError(ReasonCode.PARSE_FAILURE, f"bad G1 element: {e}")
        if not bls.is_inf(bls.multiply(point, self.order)):
            raise CryptoError(ReasonCode.PARSE_FAILURE, "G1 element outside the prime-order subgroup")
        return point

    def g2_add(self, a: Point, b: Point) -> Point:
        return bls.add(a, b)

    def g2_mul(self, p: Point, k: int) -> Point:
        return bls.multiply(p, k % self.order)

    def g2_identity(self) -> Point:
        return bls.Z2

    def g2_to_bytes(self, p: Point) -> bytes:
        return bytes(G2_to_signature(p))

    def g2_from_bytes(self, data: bytes) -> Point:
        if len(data) != self.g2_size:
            raise CryptoError(ReasonCode.PARSE_FAILURE, f"G2 element must be {self.g2_size} bytes")
        try:
            point = signature_to_G2(data)
        except (ValueError, AssertionError) as e:
            raise CryptoError(ReasonCode.PARSE_FAILURE, f"bad G2 element: {e}")
        if not bls.is_inf(bls.multiply(point, self.order)):
            raise CryptoError(ReasonCode.PARSE_FAILURE, "G2 element outside the prime-order subgroup")
        return point

    def eq(self, a: Point, b: Point) -> bool:
        return bls.eq(a, b)

    def is_identity(self, p: Point) -> bool:
        return bls.is_inf(p)

    def hash_to_g1(self, domain: bytes, message: bytes) -> Point:
        """
        Try-and-increment onto y^2 = x^3 + 4, then clear the cofactor.

        Deterministic: the smaller of the two square roots is taken.
        """
        q = bls.field_modulus
        prefix = len(domain).to_bytes(2, "little") + domain + message
        for counter in range(256):
            digest = hashlib.sha512(prefix + counter.to_bytes(1, "little")).digest()
            x = int.from_bytes(digest, "big") % q
            rhs = (pow(x, 3, q) + 4) % q
            y = pow(rhs, (q + 1) // 4, q)
            if y * y % q != rhs:
                continue
            y = min(y, q - y)
            point = bls.multiply((bls.FQ(x), bls.FQ(y), bls.FQ.one()), G1_COFACTOR_EFF)
            if not bls.is_inf(point):
                return point
        raise CryptoError(ReasonCode.INVALID_PROOF, "hash_to_g1 found no point")

    def pairing_product_is_one(self, pairs: Sequence[Tuple[Point, Point]]) -> bool:
        acc = bls.FQ12.one()
        for p, q in pairs:
            if bls.is_inf(p) or bls.is_inf(q):
                continue
            acc = acc * bls.pairing(q, p, final_exponentiate=False)
        return bls.final_exponentiate(acc) == bls.FQ12.one()

    def gt_is_one(self, p: Point, q: Point) -> bool:
        """e(p, q) == 1 (used to sanity-check generators)."""
        return self.pairing_product_is_one([(p, q)])


default_group = BLS12381Group()
