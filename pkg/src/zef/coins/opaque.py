"""
Opaque (anonymous) coins.

A coin is a credential on three attributes (k, q, v): k = hash(id :: [x])
ties it to an account id and index, q is a random seed, v the value. The
sender builds a CoinRequest bundle that

  - shows each input coin under a fresh randomization with k left out of kappa
    (the authority reinserts k from the Spend certificate),
  - commits to every output and blinds each attribute under h^ = H(cm),
  - proves in one transcript that input and output values conserve
    (sum v_in + sum V_in = sum v_out) and that each v_out is in range.

Authorities check the Spend certificates, the proof and the input pairings,
and return one blinded share per output. Shares are deterministic, so
replaying the same certificates and bundle yields the same coins.
"""

import logging
import secrets
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from ..core.certificates import verify_certificate
from ..core.committee import CommitteeConfig
from ..core.encoding import HASH_SIZE, Reader, Writer, decode_exact, hash_bytes
from ..core.messages import Certificate, OpaqueCoinIndex, OpaqueCoinOpening, Spend
from ..core.uid import UID
from ..errors import CryptoError, ReasonCode
from .coconut import (
    BlindedShare,
    Credential,
    SecretKey,
    VerificationKey,
    agg_cred,
    build_kappa,
    commitment_hash,
    plain_verify,
    randomize,
    read_g1,
    read_g2,
    read_scalars,
    show_pairing_holds,
    unblind,
    write_g1,
    write_g2,
    write_scalars,
)
from .group import Point
from .params import PublicParams
from .range_proof import RangeProof, range_prove, range_verify
from .transcript import Transcript

logger = logging.getLogger(__name__)

COIN_KEY_DOMAIN = b"zef/coin-key"
BUNDLE_DOMAIN = b"zef/coin-request"
SEED_BYTES = 31

# attribute positions
KEY, SEED, VALUE = 0, 1, 2


def coin_key(params: PublicParams, account_id: UID, index: int) -> int:
    """k = hash(id :: [x]) as a scalar."""
    return params.group.hash_to_scalar(COIN_KEY_DOMAIN, account_id.to_bytes() + index.to_bytes(8, "little"))


def new_coin_seed() -> int:
    return int.from_bytes(secrets.token_bytes(SEED_BYTES), "big")


# ============================================================================
# COINS AND OUTPUT DESCRIPTIONS
# ============================================================================

@dataclass(frozen=True)
class OutputSpec:
    """What the sender wants minted: coin (account_id, index) worth value."""

    account_id: UID
    index: int
    value: int
    seed: int = field(default_factory=new_coin_seed)

    def attributes(self, params: PublicParams) -> Tuple[int, int, int]:
        return (coin_key(params, self.account_id, self.index), self.seed, self.value)


@dataclass(frozen=True)
class OpaqueCoin:
    """A coin held by a wallet: its opening plus the aggregate credential."""

    account_id: UID
    index: int
    seed: int
    value: int
    credential: Credential

    def attributes(self, params: PublicParams) -> Tuple[int, int, int]:
        return (coin_key(params, self.account_id, self.index), self.seed, self.value)

    def verify(self, params: PublicParams, vk: VerificationKey) -> bool:
        return plain_verify(params, vk, self.credential, self.attributes(params))

    def index_ref(self) -> OpaqueCoinIndex:
        return OpaqueCoinIndex(self.index)

    def opening(self) -> OpaqueCoinOpening:
        return OpaqueCoinOpening(self.index, self.seed, self.value, self.credential)

    def encode(self, w: Writer) -> None:
        self.account_id.encode(w)
        w.u64(self.index).scalar(self.seed).u64(self.value)
        self.credential.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "OpaqueCoin":
        account_id = UID.decode(r)
        index, seed, value = r.u64(), r.scalar(), r.u64()
        return cls(account_id, index, seed, value, Credential.decode(r))


# ============================================================================
# THE BUNDLE (Gamma)
# ============================================================================

@dataclass(frozen=True)
class InputShow:
    """sigma'_i and kappa_i (kappa without the beta_0^k term)."""

    credential: Credential
    kappa: Point

    def encode(self, w: Writer) -> None:
        self.credential.encode(w)
        write_g2(w, self.kappa)

    @classmethod
    def decode(cls, r: Reader) -> "InputShow":
        return cls(Credential.decode(r), read_g2(r))


@dataclass(frozen=True)
class OutputCommitment:
    """cm_j and the per-attribute blinded commitments ck, cq, cv under h^_j."""

    cm: Point
    ck: Point
    cq: Point
    cv: Point
    range_proof: RangeProof

    @property
    def blinded(self) -> Tuple[Point, Point, Point]:
        return (self.ck, self.cq, self.cv)

    def encode(self, w: Writer) -> None:
        for point in (self.cm, self.ck, self.cq, self.cv):
            write_g1(w, point)
        self.range_proof.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "OutputCommitment":
        cm, ck, cq, cv = read_g1(r), read_g1(r), read_g1(r), read_g1(r)
        return cls(cm, ck, cq, cv, RangeProof.decode(r))


@dataclass(frozen=True)
class CoinRequestProof:
    """pi_r: one challenge, (z_q, z_v, z_r) per input, (z_o, z_k, z_q, z_v, z_rk, z_rq, z_rv) per output."""

    challenge: int
    inputs: Tuple[Tuple[int, int, int], ...]
    outputs: Tuple[Tuple[int, int, int, int, int, int, int], ...]

    def encode(self, w: Writer) -> None:
        w.scalar(self.challenge)
        w.seq(self.inputs, write_scalars)
        w.seq(self.outputs, write_scalars)

    @classmethod
    def decode(cls, r: Reader) -> "CoinRequestProof":
        challenge = r.scalar()
        inputs = tuple(r.seq(read_scalars))
        outputs = tuple(r.seq(read_scalars))
        if any(len(z) != 3 for z in inputs) or any(len(z) != 7 for z in outputs):
            raise CryptoError(ReasonCode.PARSE_FAILURE, "bad coin request response arity")
        return cls(challenge, inputs, outputs)


@dataclass(frozen=True)
class CoinRequest:
    """Gamma. Its digest is the commitment hash h carried by every Spend."""

    inputs: Tuple[InputShow, ...]
    outputs: Tuple[OutputCommitment, ...]
    proof: CoinRequestProof
    predicate: bytes = b""

    def encode(self, w: Writer) -> None:
        w.seq(self.inputs, lambda w, i: i.encode(w))
        w.seq(self.outputs, lambda w, o: o.encode(w))
        self.proof.encode(w)
        w.blob(self.predicate)

    @classmethod
    def decode(cls, r: Reader) -> "CoinRequest":
        inputs = tuple(r.seq(InputShow.decode))
        outputs = tuple(r.seq(OutputCommitment.decode))
        proof = CoinRequestProof.decode(r)
        return cls(inputs, outputs, proof, r.blob())

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CoinRequest":
        return decode_exact(data, cls.decode)

    def digest(self) -> bytes:
        return hash_bytes(BUNDLE_DOMAIN, self.to_bytes())


@dataclass(frozen=True)
class OutputSecrets:
    """What the sender keeps per output to unblind shares: its OutputSpec and (rk, rq, rv)."""

    spec: OutputSpec
    blinding: Tuple[int, int, int]


def _range_context(predicate: bytes, position: int) -> bytes:
    return predicate + b"|out" + position.to_bytes(4, "little")


def _challenge(
    params: PublicParams,
    vk: VerificationKey,
    request_inputs: Sequence[InputShow],
    outputs: Sequence[OutputCommitment],
    predicate: bytes,
    input_keys: Sequence[int],
    withdrawals: Sequence[int],
    announcements_g2: Sequence[Point],
    announcements_g1: Sequence[Point],
) -> int:
    t = Transcript(params, b"zef/coin-request/proof")
    t.raw(b"vk", vk.digest()).raw(b"phi", predicate)
    t.scalar(b"V", sum(withdrawals))
    for k, show in zip(input_keys, request_inputs):
        t.scalar(b"k_in", k)
        t.g1(b"h'", show.credential.h).g1(b"s'", show.credential.s).g2(b"kappa", show.kappa)
    for out in outputs:
        t.g1(b"cm", out.cm).g1(b"ck", out.ck).g1(b"cq", out.cq).g1(b"cv", out.cv)
        t.raw(b"range", out.range_proof.to_bytes())
    for point in announcements_g2:
        t.g2(b"Kw", point)
    t.g1_many(b"Cw", announcements_g1)
    return t.challenge()


def coin_request(
    params: PublicParams,
    vk: VerificationKey,
    inputs: Sequence[OpaqueCoin],
    withdrawals: Sequence[int],
    outputs: Sequence[OutputSpec],
    predicate: bytes = b"",
) -> Tuple[Tuple[OutputSecrets, ...], CoinRequest]:
    """
    Build Gamma for consuming `inputs` plus public `withdrawals` into `outputs`.

    Raises:
        CryptoError: ConservationViolated, ValueOutOfRange, DuplicateCoinIndex
    """
    group = params.group
    order = params.order
    if not outputs:
        raise CryptoError(ReasonCode.CONSERVATION_VIOLATED, "a coin request needs at least one output")

    for value in [c.value for c in inputs] + [o.value for o in outputs]:
        if not 0 <= value <= params.v_max:
            raise CryptoError(ReasonCode.VALUE_OUT_OF_RANGE, f"coin value {value} outside [0, {params.v_max}]")
    if any(v < 0 for v in withdrawals):
        raise CryptoError(ReasonCode.VALUE_OUT_OF_RANGE, "withdrawals must be non-negative")
    in_ids = [(c.account_id, c.index) for c in inputs]
    out_ids = [(o.account_id, o.index) for o in outputs]
    if len(set(in_ids)) != len(in_ids) or len(set(out_ids)) != len(out_ids):
        raise CryptoError(ReasonCode.DUPLICATE_COIN_INDEX, "coin (id, index) pairs must be distinct")
    total_in = sum(c.value for c in inputs) + sum(withdrawals)
    total_out = sum(o.value for o in outputs)
    if total_in != total_out:
        raise CryptoError(ReasonCode.CONSERVATION_VIOLATED, f"inputs {total_in} != outputs {total_out}")

    g1 = params.g1
    h0, h1, h2 = params.hs

    # inputs: randomize and build kappa without beta_0^k
    shows: List[InputShow] = []
    in_witness = []
    for coin in inputs:
        randomized = randomize(params, coin.credential)
        kappa = build_kappa(params, vk, {SEED: coin.seed, VALUE: coin.value}, randomized.r)
        shows.append(InputShow(randomized.credential, kappa))
        in_witness.append((coin.seed, coin.value, randomized.r))

    # outputs: commitments, blinded attributes, range proofs
    commitments: List[OutputCommitment] = []
    out_witness = []
    kept: List[OutputSecrets] = []
    for position, spec in enumerate(outputs):
        k, q, v = spec.attributes(params)
        o = group.random_scalar()
        cm = group.g1_msm([g1, h0, h1, h2], [o, k, q, v])
        h_hat = commitment_hash(params, cm)
        rk, rq, rv = (group.random_scalar() for _ in range(3))
        ck = group.g1_add(group.g1_mul(h_hat, k), group.g1_mul(g1, rk))
        cq = group.g1_add(group.g1_mul(h_hat, q), group.g1_mul(g1, rq))
        cv = group.g1_add(group.g1_mul(h_hat, v), group.g1_mul(g1, rv))
        proof = range_prove(params, cv, v, rv, h_hat, g1, _range_context(predicate, position))
        commitments.append(OutputCommitment(cm, ck, cq, cv, proof))
        out_witness.append((o, k, q, v, rk, rq, rv, h_hat))
        kept.append(OutputSecrets(spec, (rk, rq, rv)))

    # nonces; value nonces cancel so that sum w_vin - sum w_vout = 0
    w_in = [[group.random_scalar() for _ in range(3)] for _ in inputs]
    w_out = [[group.random_scalar() for _ in range(7)] for _ in outputs]
    balance = (sum(w[1] for w in w_in) - sum(w[3] for w in w_out[:-1])) % order
    w_out[-1][3] = balance

    k_w = [build_kappa(params, vk, {SEED: w[0], VALUE: w[1]}, w[2]) for w in w_in]
    c_w: List[Point] = []
    for w, wit in zip(w_out, out_witness):
        h_hat = wit[7]
        c_w.append(group.g1_msm([g1, h0, h1, h2], [w[0], w[1], w[2], w[3]]))
        c_w.append(group.g1_add(group.g1_mul(h_hat, w[1]), group.g1_mul(g1, w[4])))
        c_w.append(group.g1_add(group.g1_mul(h_hat, w[2]), group.g1_mul(g1, w[5])))
        c_w.append(group.g1_add(group.g1_mul(h_hat, w[3]), group.g1_mul(g1, w[6])))

    input_keys = [coin_key(params, c.account_id, c.index) for c in inputs]
    c = _challenge(params, vk, shows, commitments, predicate, input_keys, withdrawals, k_w, c_w)

    z_in = tuple(
        tuple((w[i] - c * secret) % order for i, secret in enumerate(wit))
        for w, wit in zip(w_in, in_witness)
    )
    z_out = tuple(
        tuple((w[i] - c * secret) % order for i, secret in enumerate(wit[:7]))
        for w, wit in zip(w_out, out_witness)
    )
    request = CoinRequest(tuple(shows), tuple(commitments), CoinRequestProof(c, z_in, z_out), predicate)
    logger.debug(f"Built coin request: {len(inputs)} inputs, {len(outputs)} outputs, V={sum(withdrawals)}")
    return tuple(kept), request


def verify_coin_request(
    params: PublicParams,
    vk: VerificationKey,
    request: CoinRequest,
    input_keys: Sequence[int],
    withdrawals: Sequence[int],
) -> bool:
    """Check pi_r, the range proofs and the conservation relation (not the input pairings)."""
    group = params.group
    order = params.order
    proof = request.proof
    if len(request.inputs) != len(input_keys) or len(proof.inputs) != len(request.inputs):
        return False
    if len(proof.outputs) != len(request.outputs) or not request.outputs:
        return False
    c = proof.challenge

    # conservation: sum z_vin - sum z_vout = c * sum V
    z_vin = sum(z[1] for z in proof.inputs)
    z_vout = sum(z[3] for z in proof.outputs)
    if (z_vin - z_vout) % order != c * sum(withdrawals) % order:
        return False

    g1 = params.g1
    h0, h1, h2 = params.hs
    k_w = []
    for show, (z_q, z_v, z_r) in zip(request.inputs, proof.inputs):
        k_w.append(group.g2_sum([
            group.g2_mul(show.kappa, c),
            group.g2_mul(vk.alpha, (1 - c) % order),
            group.g2_mul(params.g2, z_r),
            group.g2_mul(vk.betas[SEED], z_q),
            group.g2_mul(vk.betas[VALUE], z_v),
        ]))

    c_w: List[Point] = []
    for position, (out, z) in enumerate(zip(request.outputs, proof.outputs)):
        z_o, z_k, z_q, z_v, z_rk, z_rq, z_rv = z
        h_hat = commitment_hash(params, out.cm)
        if not range_verify(params, out.cv, out.range_proof, h_hat, g1, _range_context(request.predicate, position)):
            return False
        c_w.append(group.g1_add(group.g1_mul(out.cm, c), group.g1_msm([g1, h0, h1, h2], [z_o, z_k, z_q, z_v])))
        c_w.append(group.g1_sum([group.g1_mul(out.ck, c), group.g1_mul(h_hat, z_k), group.g1_mul(g1, z_rk)]))
        c_w.append(group.g1_sum([group.g1_mul(out.cq, c), group.g1_mul(h_hat, z_q), group.g1_mul(g1, z_rq)]))
        c_w.append(group.g1_sum([group.g1_mul(out.cv, c), group.g1_mul(h_hat, z_v), group.g1_mul(g1, z_rv)]))

    expected = _challenge(params, vk, request.inputs, request.outputs, request.predicate,
                          input_keys, withdrawals, k_w, c_w)
    return expected == c


def issue_blind_coin(
    params: PublicParams,
    secret: SecretKey,
    vk: VerificationKey,
    request: CoinRequest,
    input_keys: Sequence[int],
    withdrawals: Sequence[int],
) -> Tuple[BlindedShare, ...]:
    """
    Authority side: verify Gamma and sign every output blindly.

    Raises:
        CryptoError: InvalidProof when pi_r fails, InvalidInputCoin when an
            input's h' is the identity or its pairing equation fails
    """
    if not verify_coin_request(params, vk, request, input_keys, withdrawals):
        raise CryptoError(ReasonCode.INVALID_PROOF, "coin request proof failed")
    for position, (show, k) in enumerate(zip(request.inputs, input_keys)):
        if not show_pairing_holds(params, vk, show.credential, show.kappa, {KEY: k}):
            raise CryptoError(ReasonCode.INVALID_INPUT_COIN, f"input coin {position} does not verify")

    return sign_outputs(params, secret, request)


def sign_outputs(params: PublicParams, secret: SecretKey, request: CoinRequest) -> Tuple[BlindedShare, ...]:
    """Blind-sign every output commitment, without checking anything."""
    group = params.group
    shares = []
    for out in request.outputs:
        h_hat = commitment_hash(params, out.cm)
        s_tilde = group.g1_add(group.g1_mul(h_hat, secret.x), group.g1_msm(out.blinded, secret.ys))
        shares.append(BlindedShare(h_hat, s_tilde))
    return tuple(shares)


def finalize_coins(
    params: PublicParams,
    vk: VerificationKey,
    authority_keys: Dict[int, VerificationKey],
    shares: Dict[int, Sequence[BlindedShare]],
    outputs: Sequence[OutputSecrets],
    threshold: int,
) -> Tuple[OpaqueCoin, ...]:
    """
    Unblind and aggregate t authorities' shares into coins.

    `shares` maps an authority's evaluation point to its d blinded shares.
    Shares that fail their per-authority check are skipped; at least t valid
    ones are needed per output.

    Raises:
        CryptoError: WrongShareCount if fewer than t valid shares remain,
            InvalidProof if the aggregate does not verify
    """
    coins = []
    for position, kept in enumerate(outputs):
        attributes = kept.spec.attributes(params)
        valid: List[Tuple[int, Credential]] = []
        for index in sorted(shares):
            blinded = shares[index]
            if position >= len(blinded):
                continue
            key = authority_keys[index]
            credential = unblind(params, blinded[position], kept.blinding, key)
            if plain_verify(params, key, credential, attributes):
                valid.append((index, credential))
            else:
                logger.warning(f"Share from authority #{index} for output {position} failed verification")
            if len(valid) == threshold:
                break
        if len(valid) < threshold:
            raise CryptoError(
                ReasonCode.WRONG_SHARE_COUNT,
                f"output {position}: {len(valid)} valid shares, need {threshold}",
            )
        credential = agg_cred(params, valid, threshold)
        if not plain_verify(params, vk, credential, attributes):
            raise CryptoError(ReasonCode.INVALID_PROOF, f"aggregate credential for output {position} invalid")
        spec = kept.spec
        coins.append(OpaqueCoin(spec.account_id, spec.index, spec.seed, spec.value, credential))
    return tuple(coins)


# ============================================================================
# FREE REQUEST + CERTIFICATE CHECKS (authority side of coin creation)
# ============================================================================

@dataclass(frozen=True)
class CreateAnonymousCoins:
    """Free request: the Spend certificates C_1..C_l plus Gamma."""

    certificates: Tuple[Certificate, ...]
    request: CoinRequest

    def encode(self, w: Writer) -> None:
        w.seq(self.certificates, lambda w, c: c.encode(w))
        self.request.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "CreateAnonymousCoins":
        certificates = tuple(r.seq(Certificate.decode))
        return cls(certificates, CoinRequest.decode(r))

    def to_bytes(self) -> bytes:
        w = Writer()
        self.encode(w)
        return w.getvalue()


def check_spend_certificates(
    cfg: CommitteeConfig,
    params: PublicParams,
    certificates: Sequence[Certificate],
    commitment_hash_value: bytes,
) -> Tuple[List[int], List[int]]:
    """
    Validate the Spend certificates behind a coin-creation request.

    Every certificate must verify, certify a Spend committing to
    `commitment_hash_value`, and no (account, spent marker) may repeat.
    Spends with an opaque coin contribute its key k_in; every Spend
    contributes its public withdrawal.

    Returns:
        (input keys, withdrawals)

    Raises:
        CryptoError: InvalidCertificate, HashMismatch, DuplicateSpentMarker
    """
    if len(commitment_hash_value) != HASH_SIZE:
        raise CryptoError(ReasonCode.HASH_MISMATCH, "bad commitment hash length")
    if not certificates:
        raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "no spend certificates")
    keys: List[int] = []
    withdrawals: List[int] = []
    markers = set()
    for cert in certificates:
        if not verify_certificate(cfg, cert):
            raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "spend certificate does not verify")
        request = cert.value
        operation = getattr(request, "operation", None)
        if not isinstance(operation, Spend):
            raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "certificate is not over a Spend")
        if operation.commitment_hash != commitment_hash_value:
            raise CryptoError(ReasonCode.HASH_MISMATCH, f"spend by {request.account_id} commits to another bundle")
        withdrawals.append(operation.amount)
        if operation.coin is None:
            marker = (request.account_id, b"withdraw", request.sequence)
        elif isinstance(operation.coin, OpaqueCoinIndex):
            marker = (request.account_id, operation.coin.marker())
            keys.append(coin_key(params, request.account_id, operation.coin.index))
        else:
            raise CryptoError(ReasonCode.INVALID_CERTIFICATE, "opaque coin creation needs opaque coin indices")
        if marker in markers:
            raise CryptoError(ReasonCode.DUPLICATE_SPENT_MARKER, f"{request.account_id} spends the same coin twice")
        markers.add(marker)
    return keys, withdrawals


def check_distinct_outputs(params: PublicParams, request: CoinRequest) -> None:
    """cm_j must be pairwise distinct."""
    seen = set()
    for out in request.outputs:
        encoded = params.group.g1_to_bytes(out.cm)
        if encoded in seen:
            raise CryptoError(ReasonCode.DUPLICATE_COIN, "two outputs share a commitment")
        seen.add(encoded)
