"""
Threshold blind credentials (Coconut-style, randomizable, with a
one-term-per-attribute Waters-like signing equation).

A credential on attributes m_0..m_(q-1) is sigma = (h, s) with
s = h^(x + sum y_i m_i). Authorities hold Shamir shares of (x, y_i); any t
of them sign blinded attribute commitments, the user unblinds each share
and interpolates the shares into one credential that does not depend on
which t authorities answered.

Sigma protocols here use the response convention z = w - c * secret.
"""

import logging
import random
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..core.encoding import Reader, Writer, hash_bytes
from ..errors import CryptoError, ReasonCode
from .group import Point, default_group
from .params import PublicParams
from .transcript import Transcript

logger = logging.getLogger(__name__)

COMMITMENT_HASH_DOMAIN = b"zef/coconut/commitment-hash"


# ============================================================================
# encoding helpers
# ============================================================================

def write_g1(w: Writer, point: Point) -> None:
    w.raw(default_group.g1_to_bytes(point))


def read_g1(r: Reader) -> Point:
    return default_group.g1_from_bytes(r.raw(default_group.g1_size))


def write_g2(w: Writer, point: Point) -> None:
    w.raw(default_group.g2_to_bytes(point))


def read_g2(r: Reader) -> Point:
    return default_group.g2_from_bytes(r.raw(default_group.g2_size))


def write_scalars(w: Writer, values: Sequence[int]) -> None:
    w.seq(values, lambda w, v: w.scalar(v))


def read_scalars(r: Reader) -> Tuple[int, ...]:
    return tuple(r.seq(lambda r: r.scalar()))


# ============================================================================
# KEYS
# ============================================================================

@dataclass(frozen=True)
class SecretKey:
    x: int
    ys: Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class VerificationKey:
    """(alpha = g2^x, beta_i = g2^y_i, gamma_i = g1^y_i)."""

    alpha: Point
    betas: Tuple[Point, ...]
    gammas: Tuple[Point, ...]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, VerificationKey) and self.digest() == other.digest()

    def __hash__(self) -> int:
        return hash(self.digest())

    @classmethod
    def from_secret(cls, params: PublicParams, secret: SecretKey) -> "VerificationKey":
        group = params.group
        return cls(
            alpha=group.g2_mul(group.g2, secret.x),
            betas=tuple(group.g2_mul(group.g2, y) for y in secret.ys),
            gammas=tuple(group.g1_mul(group.g1, y) for y in secret.ys),
        )

    def encode(self, w: Writer) -> None:
        write_g2(w, self.alpha)
        w.seq(self.betas, write_g2)
        w.seq(self.gammas, write_g1)

    @classmethod
    def decode(cls, r: Reader) -> "VerificationKey":
        alpha = read_g2(r)
        betas = tuple(r.seq(read_g2))
        gammas = tuple(r.seq(read_g1))
        if len(betas) != len(gammas):
            raise CryptoError(ReasonCode.PARSE_FAILURE, "beta and gamma counts differ")
        return cls(alpha, betas, gammas)

    def to_hex(self) -> Tuple[str, List[str], List[str]]:
        g = default_group
        return (
            g.g2_to_bytes(self.alpha).hex(),
            [g.g2_to_bytes(b).hex() for b in self.betas],
            [g.g1_to_bytes(c).hex() for c in self.gammas],
        )

    @classmethod
    def from_hex(cls, alpha: str, betas: Sequence[str], gammas: Sequence[str]) -> "VerificationKey":
        g = default_group
        try:
            return cls(
                g.g2_from_bytes(bytes.fromhex(alpha)),
                tuple(g.g2_from_bytes(bytes.fromhex(b)) for b in betas),
                tuple(g.g1_from_bytes(bytes.fromhex(c)) for c in gammas),
            )
        except ValueError as e:
            raise CryptoError(ReasonCode.PARSE_FAILURE, f"bad verification key hex: {e}")

    def digest(self) -> bytes:
        w = Writer()
        self.encode(w)
        return hash_bytes(b"zef/coconut/vk", w.getvalue())


@dataclass(frozen=True)
class KeyShare:
    """One authority's share, evaluated at point `index` (1-based)."""

    index: int
    secret: SecretKey
    verification: VerificationKey


@dataclass(frozen=True)
class KeyShares:
    threshold: int
    count: int
    verification_key: VerificationKey
    shares: Tuple[KeyShare, ...]


def _poly_eval(coefficients: Sequence[int], x: int, order: int) -> int:
    result = 0
    for c in reversed(coefficients):
        result = (result * x + c) % order
    return result


def lagrange_basis(indexes: Sequence[int], order: int, x: int = 0) -> List[int]:
    """Lagrange coefficients for interpolating at `x` from points `indexes`."""
    basis = []
    for i in indexes:
        numerator, denominator = 1, 1
        for j in indexes:
            if j != i:
                numerator = numerator * (x - j) % order
                denominator = denominator * (i - j) % order
        basis.append(numerator * pow(denominator, -1, order) % order)
    return basis


def keygen(
    params: PublicParams,
    threshold: int,
    count: int,
    rng: Optional[random.Random] = None,
) -> KeyShares:
    """
    Trusted-dealer key generation.

    Picks q+1 random polynomials of degree t-1; authority j gets their
    evaluations at j, the aggregate key sits at 0.

    Raises:
        CryptoError(InvalidThreshold): unless 1 <= t <= n
    """
    if not 1 <= threshold <= count:
        raise CryptoError(ReasonCode.INVALID_THRESHOLD, f"need 1 <= t <= n, got t={threshold}, n={count}")
    order = params.order

    def draw() -> int:
        return rng.randrange(1, order) if rng is not None else params.group.random_scalar()

    v = [draw() for _ in range(threshold)]
    ws = [[draw() for _ in range(threshold)] for _ in range(params.attribute_count)]

    aggregate = SecretKey(v[0], tuple(w[0] for w in ws))
    shares = []
    for j in range(1, count + 1):
        secret = SecretKey(_poly_eval(v, j, order), tuple(_poly_eval(w, j, order) for w in ws))
        shares.append(KeyShare(j, secret, VerificationKey.from_secret(params, secret)))

    logger.info(f"Generated credential keys t={threshold} n={count} q={params.attribute_count}")
    return KeyShares(threshold, count, VerificationKey.from_secret(params, aggregate), tuple(shares))


def interpolate_secret(params: PublicParams, shares: Sequence[KeyShare]) -> SecretKey:
    """Recover the aggregate secret from t shares (dealer tooling and tests)."""
    indexes = [s.index for s in shares]
    basis = lagrange_basis(indexes, params.order)
    x = sum(l * s.secret.x for l, s in zip(basis, shares)) % params.order
    ys = tuple(
        sum(l * s.secret.ys[i] for l, s in zip(basis, shares)) % params.order
        for i in range(params.attribute_count)
    )
    return SecretKey(x, ys)


def aggregate_verification_key(
    params: PublicParams, keys: Mapping[int, VerificationKey]
) -> VerificationKey:
    """Interpolate per-authority verification keys (index -> vk_j) into vk."""
    indexes = sorted(keys)
    basis = lagrange_basis(indexes, params.order)
    group = params.group
    parts = [keys[i] for i in indexes]
    q = len(parts[0].betas)
    return VerificationKey(
        alpha=group.g2_msm([p.alpha for p in parts], basis),
        betas=tuple(group.g2_msm([p.betas[i] for p in parts], basis) for i in range(q)),
        gammas=tuple(group.g1_msm([p.gammas[i] for p in parts], basis) for i in range(q)),
    )


# ============================================================================
# CREDENTIALS
# ============================================================================

@dataclass(frozen=True, eq=False)
class Credential:
    """sigma = (h, s). Compared by canonical bytes, since points are projective."""

    h: Point
    s: Point

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Credential) and self.to_bytes() == other.to_bytes()

    def __hash__(self) -> int:
        return hash(self.to_bytes())

    def encode(self, w: Writer) -> None:
        write_g1(w, self.h)
        write_g1(w, self.s)

    @classmethod
    def decode(cls, r: Reader) -> "Credential":
        return cls(read_g1(r), read_g1(r))

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()


def commitment_hash(params: PublicParams, commitment: Point) -> Point:
    """h = H(c_m)."""
    return params.hash_to_g1(COMMITMENT_HASH_DOMAIN, params.group.g1_to_bytes(commitment))


def sign_with_secret(
    params: PublicParams, secret: SecretKey, h: Point, attributes: Sequence[int]
) -> Credential:
    """Sign in the clear: s = h^(x + sum y_i m_i)."""
    exponent = (secret.x + sum(y * m for y, m in zip(secret.ys, attributes))) % params.order
    return Credential(h, params.group.g1_mul(h, exponent))


def _kappa(params: PublicParams, vk: VerificationKey, attributes: Mapping[int, int]) -> Point:
    group = params.group
    kappa = vk.alpha
    for i, m in attributes.items():
        kappa = group.g2_add(kappa, group.g2_mul(vk.betas[i], m))
    return kappa


def plain_verify(
    params: PublicParams,
    vk: VerificationKey,
    credential: Credential,
    attributes: Sequence[int],
) -> bool:
    """True iff h != 1 and e(h, alpha * prod beta_i^m_i) = e(s, g2)."""
    group = params.group
    if len(attributes) != len(vk.betas):
        return False
    if group.is_identity(credential.h):
        return False
    kappa = _kappa(params, vk, dict(enumerate(attributes)))
    return group.pairings_equal((credential.h, kappa), (credential.s, group.g2))


# ============================================================================
# BLIND ISSUANCE
# ============================================================================

@dataclass(frozen=True)
class SignRequestProof:
    challenge: int
    z_o: int
    z_m: Tuple[int, ...]
    z_r: Tuple[int, ...]

    def encode(self, w: Writer) -> None:
        w.scalar(self.challenge).scalar(self.z_o)
        write_scalars(w, self.z_m)
        write_scalars(w, self.z_r)

    @classmethod
    def decode(cls, r: Reader) -> "SignRequestProof":
        return cls(r.scalar(), r.scalar(), read_scalars(r), read_scalars(r))


@dataclass(frozen=True)
class BlindSignRequest:
    """Lambda = (c_m, c_i, pi_s)."""

    commitment: Point
    blinded: Tuple[Point, ...]
    proof: SignRequestProof

    def encode(self, w: Writer) -> None:
        write_g1(w, self.commitment)
        w.seq(self.blinded, write_g1)
        self.proof.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "BlindSignRequest":
        return cls(read_g1(r), tuple(r.seq(read_g1)), SignRequestProof.decode(r))


@dataclass(frozen=True)
class BlindedShare:
    """sigma~_j = (h, h^x_j * prod c_i^y_j,i)."""

    h: Point
    s_tilde: Point

    def encode(self, w: Writer) -> None:
        write_g1(w, self.h)
        write_g1(w, self.s_tilde)

    @classmethod
    def decode(cls, r: Reader) -> "BlindedShare":
        return cls(read_g1(r), read_g1(r))


def _sign_request_transcript(
    params: PublicParams,
    predicate: bytes,
    commitment: Point,
    h: Point,
    blinded: Sequence[Point],
    a_w: Point,
    b_w: Sequence[Point],
) -> int:
    t = Transcript(params, b"zef/coconut/prepare-blind-sign")
    t.raw(b"phi", predicate)
    t.g1(b"cm", commitment).g1(b"h", h)
    t.g1_many(b"c", blinded)
    t.g1(b"Aw", a_w)
    t.g1_many(b"Bw", b_w)
    return t.challenge()


def prepare_blind_sign(
    params: PublicParams,
    attributes: Sequence[int],
    predicate: bytes = b"",
) -> Tuple[Tuple[int, ...], BlindSignRequest]:
    """
    Commit to the attributes and blind each one under h = H(c_m).

    Returns:
        (r_i blinding factors, Lambda)
    """
    group = params.group
    order = params.order
    if len(attributes) != params.attribute_count:
        raise CryptoError(ReasonCode.INVALID_PROOF, f"expected {params.attribute_count} attributes")
    m = [a % order for a in attributes]

    o = group.random_scalar()
    commitment = group.g1_add(group.g1_mul(params.g1, o), group.g1_msm(params.hs, m))
    h = commitment_hash(params, commitment)
    rs = tuple(group.random_scalar() for _ in m)
    blinded = tuple(group.g1_add(group.g1_mul(h, mi), group.g1_mul(params.g1, ri)) for mi, ri in zip(m, rs))

    w_o = group.random_scalar()
    w_m = [group.random_scalar() for _ in m]
    w_r = [group.random_scalar() for _ in m]
    a_w = group.g1_add(group.g1_mul(params.g1, w_o), group.g1_msm(params.hs, w_m))
    b_w = [group.g1_add(group.g1_mul(h, wm), group.g1_mul(params.g1, wr)) for wm, wr in zip(w_m, w_r)]

    c = _sign_request_transcript(params, predicate, commitment, h, blinded, a_w, b_w)
    proof = SignRequestProof(
        challenge=c,
        z_o=(w_o - c * o) % order,
        z_m=tuple((wm - c * mi) % order for wm, mi in zip(w_m, m)),
        z_r=tuple((wr - c * ri) % order for wr, ri in zip(w_r, rs)),
    )
    return rs, BlindSignRequest(commitment, blinded, proof)


def verify_sign_request(params: PublicParams, request: BlindSignRequest, predicate: bytes = b"") -> bool:
    """Check pi_s against the recomputed h = H(c_m)."""
    group = params.group
    proof = request.proof
    q = params.attribute_count
    if not (len(request.blinded) == len(proof.z_m) == len(proof.z_r) == q):
        return False
    h = commitment_hash(params, request.commitment)
    c = proof.challenge
    a_w = group.g1_sum([
        group.g1_mul(request.commitment, c),
        group.g1_mul(params.g1, proof.z_o),
        group.g1_msm(params.hs, proof.z_m),
    ])
    b_w = [
        group.g1_sum([group.g1_mul(ci, c), group.g1_mul(h, zm), group.g1_mul(params.g1, zr)])
        for ci, zm, zr in zip(request.blinded, proof.z_m, proof.z_r)
    ]
    return c == _sign_request_transcript(params, predicate, request.commitment, h, request.blinded, a_w, b_w)


def blind_sign(
    params: PublicParams,
    secret: SecretKey,
    request: BlindSignRequest,
    predicate: bytes = b"",
) -> BlindedShare:
    """
    Authority side of issuance.

    Raises:
        CryptoError(InvalidProof): pi_s does not verify
    """
    if not verify_sign_request(params, request, predicate):
        raise CryptoError(ReasonCode.INVALID_PROOF, "blind sign request proof failed")
    group = params.group
    h = commitment_hash(params, request.commitment)
    s_tilde = group.g1_add(group.g1_mul(h, secret.x), group.g1_msm(request.blinded, secret.ys))
    return BlindedShare(h, s_tilde)


def unblind(
    params: PublicParams,
    share: BlindedShare,
    blinding: Sequence[int],
    authority_key: VerificationKey,
) -> Credential:
    """s_j = s~_j * prod gamma_j,i^(-r_i), with the answering authority's gammas."""
    group = params.group
    correction = group.g1_msm(authority_key.gammas, [(-r) % params.order for r in blinding])
    return Credential(share.h, group.g1_add(share.s_tilde, correction))


def agg_cred(
    params: PublicParams,
    shares: Sequence[Tuple[int, Credential]],
    threshold: int,
) -> Credential:
    """
    Interpolate t unblinded shares (index, sigma_j) into sigma.

    Raises:
        CryptoError: WrongShareCount unless exactly t shares, DuplicatePoint,
            InvalidProof if the shares disagree on h
    """
    if len(shares) != threshold:
        raise CryptoError(ReasonCode.WRONG_SHARE_COUNT, f"need exactly {threshold} shares, got {len(shares)}")
    indexes = [i for i, _ in shares]
    if len(set(indexes)) != len(indexes):
        raise CryptoError(ReasonCode.DUPLICATE_POINT, f"duplicate evaluation points {indexes}")
    group = params.group
    h = shares[0][1].h
    if any(not group.eq(cred.h, h) for _, cred in shares):
        raise CryptoError(ReasonCode.INVALID_PROOF, "shares are on different h")
    basis = lagrange_basis(indexes, params.order)
    s = group.g1_msm([cred.s for _, cred in shares], basis)
    return Credential(h, s)


# ============================================================================
# SHOWING
# ============================================================================

@dataclass(frozen=True)
class RandomizedCredential:
    """sigma' = (h', s') with s' = s^r' * h'^r, plus the kappa blinding r."""

    credential: Credential
    r: int


def randomize(params: PublicParams, credential: Credential) -> RandomizedCredential:
    group = params.group
    r_prime = group.random_scalar()
    r = group.random_scalar()
    h_prime = group.g1_mul(credential.h, r_prime)
    s_prime = group.g1_add(group.g1_mul(credential.s, r_prime), group.g1_mul(h_prime, r))
    return RandomizedCredential(Credential(h_prime, s_prime), r)


def build_kappa(
    params: PublicParams,
    vk: VerificationKey,
    attributes: Mapping[int, int],
    r: int,
) -> Point:
    """kappa = alpha * g2^r * prod_{i in attributes} beta_i^m_i."""
    return params.group.g2_add(_kappa(params, vk, attributes), params.group.g2_mul(params.g2, r))


def show_pairing_holds(
    params: PublicParams,
    vk: VerificationKey,
    credential: Credential,
    kappa: Point,
    disclosed: Optional[Mapping[int, int]] = None,
) -> bool:
    """h' != 1 and e(h', kappa * prod_{disclosed} beta_i^m_i) = e(s', g2)."""
    group = params.group
    if group.is_identity(credential.h):
        return False
    full = kappa
    for i, m in (disclosed or {}).items():
        full = group.g2_add(full, group.g2_mul(vk.betas[i], m))
    return group.pairings_equal((credential.h, full), (credential.s, group.g2))


@dataclass(frozen=True)
class CredentialProof:
    """Theta = (kappa, sigma', pi_v). pi_v covers the hidden attributes only."""

    kappa: Point
    credential: Credential
    hidden: Tuple[int, ...]
    challenge: int
    z_m: Tuple[int, ...]
    z_r: int

    def encode(self, w: Writer) -> None:
        write_g2(w, self.kappa)
        self.credential.encode(w)
        w.seq(self.hidden, lambda w, i: w.u8(i))
        w.scalar(self.challenge)
        write_scalars(w, self.z_m)
        w.scalar(self.z_r)

    @classmethod
    def decode(cls, r: Reader) -> "CredentialProof":
        kappa = read_g2(r)
        credential = Credential.decode(r)
        hidden = tuple(r.seq(lambda r: r.u8()))
        return cls(kappa, credential, hidden, r.scalar(), read_scalars(r), r.scalar())

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()


def _show_transcript(
    params: PublicParams,
    vk: VerificationKey,
    predicate: bytes,
    kappa: Point,
    credential: Credential,
    hidden: Sequence[int],
    k_w: Point,
) -> int:
    t = Transcript(params, b"zef/coconut/prove-credential")
    t.raw(b"vk", vk.digest()).raw(b"phi", predicate)
    t.raw(b"hidden", bytes(hidden))
    t.g2(b"kappa", kappa)
    t.g1(b"h'", credential.h).g1(b"s'", credential.s)
    t.g2(b"Kw", k_w)
    return t.challenge()


def prove_cred(
    params: PublicParams,
    vk: VerificationKey,
    attributes: Sequence[int],
    credential: Credential,
    predicate: bytes = b"",
    disclosed: Sequence[int] = (),
) -> CredentialProof:
    """
    Randomize sigma and prove knowledge of the hidden attributes inside kappa.

    Attributes whose index is in `disclosed` are left out of kappa; the
    verifier must supply their values.
    """
    group = params.group
    order = params.order
    hidden = tuple(i for i in range(len(attributes)) if i not in set(disclosed))
    randomized = randomize(params, credential)
    secrets_m = {i: attributes[i] % order for i in hidden}
    kappa = build_kappa(params, vk, secrets_m, randomized.r)

    w_m = {i: group.random_scalar() for i in hidden}
    w_r = group.random_scalar()
    k_w = build_kappa(params, vk, w_m, w_r)
    c = _show_transcript(params, vk, predicate, kappa, randomized.credential, hidden, k_w)
    return CredentialProof(
        kappa=kappa,
        credential=randomized.credential,
        hidden=hidden,
        challenge=c,
        z_m=tuple((w_m[i] - c * secrets_m[i]) % order for i in hidden),
        z_r=(w_r - c * randomized.r) % order,
    )


def verify_cred(
    params: PublicParams,
    vk: VerificationKey,
    proof: CredentialProof,
    predicate: bytes = b"",
    disclosed: Optional[Dict[int, int]] = None,
) -> bool:
    """Check pi_v, h' != 1 and the pairing equation. Never raises on bad input."""
    group = params.group
    disclosed = disclosed or {}
    q = len(vk.betas)
    if len(proof.z_m) != len(proof.hidden):
        return False
    if sorted(set(proof.hidden) | set(disclosed)) != list(range(q)) or set(proof.hidden) & set(disclosed):
        return False
    if group.is_identity(proof.credential.h):
        return False

    c = proof.challenge
    # Kw = kappa^c * alpha^(1-c) * g2^z_r * prod beta_i^z_m_i
    k_w = group.g2_sum([
        group.g2_mul(proof.kappa, c),
        group.g2_mul(vk.alpha, (1 - c) % params.order),
        group.g2_mul(params.g2, proof.z_r),
        group.g2_msm([vk.betas[i] for i in proof.hidden], proof.z_m),
    ])
    if c != _show_transcript(params, vk, predicate, proof.kappa, proof.credential, proof.hidden, k_w):
        return False
    return show_pairing_holds(params, vk, proof.credential, proof.kappa, disclosed)
