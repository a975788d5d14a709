"""
Tests for threshold credentials, range proofs and coin creation.

Pairing checks are slow with a pure-Python curve; tests that run many of
them are marked slow.
"""

import random
from dataclasses import replace
from itertools import combinations

import pytest
from hypothesis import given, settings as hsettings, strategies as st

from src.zef.coins.coconut import (
    VerificationKey,
    agg_cred,
    aggregate_verification_key,
    blind_sign,
    interpolate_secret,
    keygen,
    plain_verify,
    prepare_blind_sign,
    prove_cred,
    sign_with_secret,
    unblind,
    verify_cred,
    verify_sign_request,
)
from src.zef.coins.opaque import (
    KEY,
    OpaqueCoin,
    OutputSpec,
    check_distinct_outputs,
    check_spend_certificates,
    coin_key,
    coin_request,
    finalize_coins,
    issue_blind_coin,
    verify_coin_request,
)
from src.zef.coins.range_proof import range_prove, range_verify
from src.zef.coins.transparent import (
    CreateTransparentCoins,
    build_transparent_spends,
    collect_transparent_coins,
    handle_transparent_coin_creation,
    new_coin_body,
    outputs_hash,
)
from src.zef.core.encoding import MAX_U64, Writer, decode_exact
from src.zef.core.messages import OpaqueCoinIndex, Request, Spend, SpendAndTransfer, Transfer
from src.zef.engine.engine import AccountEngine
from src.zef.errors import CryptoError, EngineError, ProtocolError, ReasonCode
from tests.conftest import ALICE, BOB, certify, confirm_all, key_from


@pytest.fixture(scope="module")
def dealt(params):
    """A 2-of-3 credential committee."""
    return keygen(params, 2, 3, rng=random.Random(3))


@pytest.fixture(scope="module")
def attributes(params):
    return (coin_key(params, ALICE, 0), 1234, 5)


def issue(params, dealt, attributes, indexes=(1, 3), predicate=b""):
    rs, request = prepare_blind_sign(params, attributes, predicate)
    shares = []
    for share in dealt.shares:
        if share.index in indexes:
            blinded = blind_sign(params, share.secret, request, predicate)
            shares.append((share.index, unblind(params, blinded, rs, share.verification)))
    return agg_cred(params, shares, dealt.threshold)


def _coin_bytes(coin):
    w = Writer()
    coin.encode(w)
    return w.getvalue()


class TestKeygen:
    """Tests for dealt credential keys."""

    def test_invalid_threshold(self, params):
        """Should refuse t outside 1..n."""
        with pytest.raises(CryptoError) as exc:
            keygen(params, 4, 3)
        assert exc.value.reason == ReasonCode.INVALID_THRESHOLD

    def test_any_t_shares_interpolate_the_aggregate(self, params, dealt):
        """Should recover the aggregate key from any t shares."""
        for pair in ((0, 1), (1, 2), (0, 2)):
            secret = interpolate_secret(params, [dealt.shares[i] for i in pair])
            assert VerificationKey.from_secret(params, secret) == dealt.verification_key

    def test_verification_keys_interpolate(self, params, dealt):
        """Should rebuild vk from per-authority verification keys."""
        keys = {s.index: s.verification for s in dealt.shares[1:]}
        assert aggregate_verification_key(params, keys) == dealt.verification_key

    def test_verification_key_bytes(self, dealt):
        """Should decode an encoded key to an equal one."""
        w = Writer()
        dealt.verification_key.encode(w)
        assert decode_exact(w.getvalue(), VerificationKey.decode) == dealt.verification_key


class TestCredentials:
    """Tests for issuance and verification."""

    def test_clear_signature_verifies(self, params, dealt, attributes):
        """Should verify a credential signed with the interpolated secret."""
        secret = interpolate_secret(params, dealt.shares[:2])
        h = params.hash_to_g1(b"test", b"h")
        credential = sign_with_secret(params, secret, h, attributes)
        assert plain_verify(params, dealt.verification_key, credential, attributes)

    def test_sign_request_bound_to_predicate(self, params, attributes):
        """Should reject the request proof under another predicate."""
        _, request = prepare_blind_sign(params, attributes, b"phi")
        assert verify_sign_request(params, request, b"phi")
        assert not verify_sign_request(params, request, b"other")

    def test_blind_sign_rejects_bad_proof(self, params, dealt, attributes):
        """Should refuse to sign when the request proof fails."""
        _, request = prepare_blind_sign(params, attributes, b"phi")
        with pytest.raises(CryptoError) as exc:
            blind_sign(params, dealt.shares[0].secret, request, b"other")
        assert exc.value.reason == ReasonCode.INVALID_PROOF

    def test_agg_cred_share_count(self, params, dealt, attributes):
        """Should need exactly t shares at distinct points."""
        h = params.hash_to_g1(b"test", b"h")
        one = sign_with_secret(params, dealt.shares[0].secret, h, attributes)
        with pytest.raises(CryptoError) as exc:
            agg_cred(params, [(1, one)], 2)
        assert exc.value.reason == ReasonCode.WRONG_SHARE_COUNT
        with pytest.raises(CryptoError) as exc:
            agg_cred(params, [(1, one), (1, one)], 2)
        assert exc.value.reason == ReasonCode.DUPLICATE_POINT

    @pytest.mark.slow
    def test_blind_issuance(self, params, dealt, attributes):
        """Should aggregate unblinded shares into a valid credential."""
        credential = issue(params, dealt, attributes)
        assert plain_verify(params, dealt.verification_key, credential, attributes)
        wrong = (attributes[0], attributes[1], attributes[2] + 1)
        assert not plain_verify(params, dealt.verification_key, credential, wrong)

    @pytest.mark.slow
    def test_any_quorum_gives_same_credential(self, params, dealt, attributes):
        """Should be independent of which t authorities answered."""
        rs, request = prepare_blind_sign(params, attributes)
        unblinded = {
            s.index: unblind(params, blind_sign(params, s.secret, request), rs, s.verification)
            for s in dealt.shares
        }
        first = agg_cred(params, [(1, unblinded[1]), (2, unblinded[2])], 2)
        second = agg_cred(params, [(2, unblinded[2]), (3, unblinded[3])], 2)
        assert first == second

    @pytest.mark.slow
    def test_every_threshold_subset_agrees(self, params, attributes):
        """Should aggregate one verifying credential from every t-subset, for all t <= n <= 6."""
        for n in range(1, 7):
            for t in range(1, n + 1):
                dealt = keygen(params, t, n, rng=random.Random(100 * n + t))
                rs, request = prepare_blind_sign(params, attributes)
                shares = [
                    (s.index, unblind(params, blind_sign(params, s.secret, request), rs, s.verification))
                    for s in dealt.shares
                ]
                credentials = {agg_cred(params, list(subset), t) for subset in combinations(shares, t)}
                assert len(credentials) == 1, (n, t)
                (credential,) = credentials
                assert plain_verify(params, dealt.verification_key, credential, attributes), (n, t)

    @pytest.mark.slow
    def test_show_with_disclosed_attribute(self, params, dealt, attributes):
        """Should verify a show that discloses the key and hides the rest."""
        credential = issue(params, dealt, attributes)
        vk = dealt.verification_key
        proof = prove_cred(params, vk, attributes, credential, b"ctx", disclosed=(KEY,))
        assert verify_cred(params, vk, proof, b"ctx", {KEY: attributes[KEY]})
        assert not verify_cred(params, vk, proof, b"ctx", {KEY: attributes[KEY] + 1})
        assert not verify_cred(params, vk, proof, b"other", {KEY: attributes[KEY]})

    @pytest.mark.slow
    def test_shows_are_unlinkable(self, params, dealt, attributes):
        """Should randomize the credential on every show."""
        credential = issue(params, dealt, attributes)
        vk = dealt.verification_key
        first = prove_cred(params, vk, attributes, credential)
        second = prove_cred(params, vk, attributes, credential)
        assert first.credential != second.credential
        assert verify_cred(params, vk, first) and verify_cred(params, vk, second)


def _bump_g1(params, point):
    return params.group.g1_add(point, params.g1)


def _bump_g2(params, point):
    return params.group.g2_add(point, params.g2)


def _bump(params, scalar):
    return (scalar + 1) % params.order


def _swap(values, i, value):
    return values[:i] + (value,) + values[i + 1:]


def sign_request_variants(params, request):
    """Every public field of a blind sign request, changed one at a time."""
    proof = request.proof
    yield "cm", replace(request, commitment=_bump_g1(params, request.commitment))
    for i, point in enumerate(request.blinded):
        yield f"c{i}", replace(request, blinded=_swap(request.blinded, i, _bump_g1(params, point)))
    yield "challenge", replace(request, proof=replace(proof, challenge=_bump(params, proof.challenge)))
    yield "z_o", replace(request, proof=replace(proof, z_o=_bump(params, proof.z_o)))
    for i, z in enumerate(proof.z_m):
        yield f"z_m{i}", replace(request, proof=replace(proof, z_m=_swap(proof.z_m, i, _bump(params, z))))
    for i, z in enumerate(proof.z_r):
        yield f"z_r{i}", replace(request, proof=replace(proof, z_r=_swap(proof.z_r, i, _bump(params, z))))


def credential_proof_variants(params, proof):
    """Every public field of a credential show, changed one at a time."""
    credential = proof.credential
    yield "kappa", replace(proof, kappa=_bump_g2(params, proof.kappa))
    yield "h'", replace(proof, credential=replace(credential, h=_bump_g1(params, credential.h)))
    yield "s'", replace(proof, credential=replace(credential, s=_bump_g1(params, credential.s)))
    yield "challenge", replace(proof, challenge=_bump(params, proof.challenge))
    for i, z in enumerate(proof.z_m):
        yield f"z_m{i}", replace(proof, z_m=_swap(proof.z_m, i, _bump(params, z)))
    yield "z_r", replace(proof, z_r=_bump(params, proof.z_r))


def coin_request_variants(params, request):
    """Every public field of a coin request, changed one at a time."""
    proof = request.proof
    for n, show in enumerate(request.inputs):
        credential = show.credential
        changed = (
            ("kappa", replace(show, kappa=_bump_g2(params, show.kappa))),
            ("h'", replace(show, credential=replace(credential, h=_bump_g1(params, credential.h)))),
            ("s'", replace(show, credential=replace(credential, s=_bump_g1(params, credential.s)))),
        )
        for name, variant in changed:
            yield f"in{n}.{name}", replace(request, inputs=_swap(request.inputs, n, variant))
    for n, out in enumerate(request.outputs):
        for name in ("cm", "ck", "cq", "cv"):
            variant = replace(out, **{name: _bump_g1(params, getattr(out, name))})
            yield f"out{n}.{name}", replace(request, outputs=_swap(request.outputs, n, variant))
    yield "challenge", replace(request, proof=replace(proof, challenge=_bump(params, proof.challenge)))
    for n, zs in enumerate(proof.inputs):
        for i, z in enumerate(zs):
            inputs = _swap(proof.inputs, n, _swap(zs, i, _bump(params, z)))
            yield f"z_in{n}.{i}", replace(request, proof=replace(proof, inputs=inputs))
    for n, zs in enumerate(proof.outputs):
        for i, z in enumerate(zs):
            outputs = _swap(proof.outputs, n, _swap(zs, i, _bump(params, z)))
            yield f"z_out{n}.{i}", replace(request, proof=replace(proof, outputs=outputs))


class TestProofBinding:
    """Tests that every proof's challenge covers all of its public fields."""

    def test_sign_request_fields_bound(self, params, attributes):
        """Should reject a blind sign request with any single field changed."""
        _, request = prepare_blind_sign(params, attributes, b"phi")
        assert verify_sign_request(params, request, b"phi")
        accepted = [name for name, variant in sign_request_variants(params, request)
                    if verify_sign_request(params, variant, b"phi")]
        assert accepted == []

    @pytest.mark.slow
    def test_credential_show_fields_bound(self, params, dealt, attributes):
        """Should reject a credential show with any single field changed."""
        credential = issue(params, dealt, attributes)
        vk = dealt.verification_key
        proof = prove_cred(params, vk, attributes, credential, b"ctx")
        assert verify_cred(params, vk, proof, b"ctx")
        accepted = [name for name, variant in credential_proof_variants(params, proof)
                    if verify_cred(params, vk, variant, b"ctx")]
        assert accepted == []

    @pytest.mark.slow
    def test_withdrawal_request_fields_bound(self, params, dealt):
        """Should reject a withdrawal bundle with any single field changed."""
        vk = dealt.verification_key
        _, request = coin_request(params, vk, [], [4], [OutputSpec(BOB, 0, 4)], b"phi")
        assert verify_coin_request(params, vk, request, [], [4])
        accepted = [name for name, variant in coin_request_variants(params, request)
                    if verify_coin_request(params, vk, variant, [], [4])]
        assert accepted == []

    @pytest.mark.slow
    def test_spend_request_fields_bound(self, params, dealt):
        """Should reject a bundle spending a coin with any single field changed."""
        vk = dealt.verification_key
        keys = {s.index: s.verification for s in dealt.shares}
        kept, request = coin_request(params, vk, [], [3], [OutputSpec(ALICE, 0, 3)])
        shares = {s.index: issue_blind_coin(params, s.secret, vk, request, [], [3]) for s in dealt.shares[:2]}
        (coin,) = finalize_coins(params, vk, keys, shares, kept, dealt.threshold)

        input_keys = [coin_key(params, ALICE, 0)]
        _, spend = coin_request(params, vk, [coin], [], [OutputSpec(BOB, 0, 3)])
        assert verify_coin_request(params, vk, spend, input_keys, [])
        accepted = [name for name, variant in coin_request_variants(params, spend)
                    if verify_coin_request(params, vk, variant, input_keys, [])]
        assert accepted == []


class TestRangeProof:
    """Tests for the bit-decomposition range proof."""

    def _commit(self, params, value):
        group = params.group
        r = group.random_scalar()
        base = params.hs[0]
        return group.g1_add(group.g1_mul(base, value), group.g1_mul(params.g1, r)), r, base

    @pytest.mark.parametrize("value", [0, 1, 200, 255])
    def test_in_range(self, params, value):
        """Should accept values across [0, 2^8 - 1]."""
        commitment, r, base = self._commit(params, value)
        proof = range_prove(params, commitment, value, r, base, params.g1, b"ctx")
        assert range_verify(params, commitment, proof, base, params.g1, b"ctx")

    def test_out_of_range(self, params):
        """Should refuse to prove values above v_max."""
        commitment, r, base = self._commit(params, 256)
        with pytest.raises(CryptoError) as exc:
            range_prove(params, commitment, 256, r, base, params.g1)
        assert exc.value.reason == ReasonCode.VALUE_OUT_OF_RANGE

    def test_bound_to_commitment_and_context(self, params):
        """Should fail for another commitment or context."""
        commitment, r, base = self._commit(params, 9)
        other, _, _ = self._commit(params, 9)
        proof = range_prove(params, commitment, 9, r, base, params.g1, b"ctx")
        assert not range_verify(params, other, proof, base, params.g1, b"ctx")
        assert not range_verify(params, commitment, proof, base, params.g1, b"ctx2")


class TestCoinRequest:
    """Tests for building and checking coin-creation bundles."""

    def test_conservation_violated(self, params, dealt):
        """Should refuse outputs that do not add up to the inputs."""
        with pytest.raises(CryptoError) as exc:
            coin_request(params, dealt.verification_key, [], [5], [OutputSpec(ALICE, 0, 6)])
        assert exc.value.reason == ReasonCode.CONSERVATION_VIOLATED

    def test_value_out_of_range(self, params, dealt):
        """Should refuse output values above v_max."""
        with pytest.raises(CryptoError) as exc:
            coin_request(params, dealt.verification_key, [], [300], [OutputSpec(ALICE, 0, 300)])
        assert exc.value.reason == ReasonCode.VALUE_OUT_OF_RANGE

    def test_duplicate_output_index(self, params, dealt):
        """Should refuse two outputs naming the same coin."""
        outputs = [OutputSpec(ALICE, 0, 2), OutputSpec(ALICE, 0, 3)]
        with pytest.raises(CryptoError) as exc:
            coin_request(params, dealt.verification_key, [], [5], outputs)
        assert exc.value.reason == ReasonCode.DUPLICATE_COIN_INDEX

    def test_withdrawal_bundle_verifies(self, params, dealt):
        """Should verify against the right withdrawals only."""
        vk = dealt.verification_key
        _, request = coin_request(params, vk, [], [7], [OutputSpec(BOB, 0, 5), OutputSpec(BOB, 1, 2)])
        assert verify_coin_request(params, vk, request, [], [7])
        assert not verify_coin_request(params, vk, request, [], [8])
        check_distinct_outputs(params, request)

    def test_bundle_bytes(self, params, dealt):
        """Should keep its digest across encoding."""
        from src.zef.coins.opaque import CoinRequest

        _, request = coin_request(params, dealt.verification_key, [], [3], [OutputSpec(BOB, 0, 3)], b"phi")
        decoded = CoinRequest.from_bytes(request.to_bytes())
        assert decoded.digest() == request.digest()
        assert decoded.predicate == b"phi"

    @pytest.mark.slow
    def test_mint_then_spend(self, params, dealt):
        """Should mint coins from a withdrawal and spend them into new coins."""
        vk = dealt.verification_key
        keys = {s.index: s.verification for s in dealt.shares}
        kept, request = coin_request(params, vk, [], [7], [OutputSpec(ALICE, 0, 3), OutputSpec(ALICE, 1, 4)])
        shares = {s.index: issue_blind_coin(params, s.secret, vk, request, [], [7]) for s in dealt.shares[:2]}
        minted = finalize_coins(params, vk, keys, shares, kept, dealt.threshold)
        assert [c.value for c in minted] == [3, 4]
        assert all(c.verify(params, vk) for c in minted)

        input_keys = [coin_key(params, c.account_id, c.index) for c in minted]
        kept, request = coin_request(params, vk, minted, [], [OutputSpec(BOB, 0, 6), OutputSpec(BOB, 1, 1)])
        shares = {s.index: issue_blind_coin(params, s.secret, vk, request, input_keys, []) for s in dealt.shares[1:]}
        spent_into = finalize_coins(params, vk, keys, shares, kept, dealt.threshold)
        assert sorted(c.value for c in spent_into) == [1, 6]

        coin = spent_into[0]
        assert decode_exact(_coin_bytes(coin), OpaqueCoin.decode) == coin

    @pytest.mark.slow
    def test_input_bound_to_its_key(self, params, dealt):
        """Should reject an input shown under another coin key."""
        vk = dealt.verification_key
        keys = {s.index: s.verification for s in dealt.shares}
        kept, request = coin_request(params, vk, [], [2], [OutputSpec(ALICE, 0, 2)])
        shares = {s.index: issue_blind_coin(params, s.secret, vk, request, [], [2]) for s in dealt.shares[:2]}
        (coin,) = finalize_coins(params, vk, keys, shares, kept, dealt.threshold)
        _, spend = coin_request(params, vk, [coin], [], [OutputSpec(BOB, 0, 2)])
        with pytest.raises(CryptoError) as exc:
            issue_blind_coin(params, dealt.shares[0].secret, vk, spend, [coin_key(params, ALICE, 9)], [])
        assert exc.value.reason in (ReasonCode.INVALID_PROOF, ReasonCode.INVALID_INPUT_COIN)

    @pytest.mark.slow
    def test_finalize_needs_threshold_shares(self, params, dealt):
        """Should fail with fewer than t shares."""
        vk = dealt.verification_key
        keys = {s.index: s.verification for s in dealt.shares}
        kept, request = coin_request(params, vk, [], [1], [OutputSpec(ALICE, 0, 1)])
        one = {1: issue_blind_coin(params, dealt.shares[0].secret, vk, request, [], [1])}
        with pytest.raises(CryptoError) as exc:
            finalize_coins(params, vk, keys, one, kept, dealt.threshold)
        assert exc.value.reason == ReasonCode.WRONG_SHARE_COUNT

    @pytest.mark.slow
    def test_finalize_skips_bad_share(self, params, dealt):
        """Should drop a share that fails its authority's key and use the others."""
        vk = dealt.verification_key
        keys = {s.index: s.verification for s in dealt.shares}
        kept, request = coin_request(params, vk, [], [5], [OutputSpec(ALICE, 0, 5)])
        first, second, third = dealt.shares
        shares = {
            first.index: issue_blind_coin(params, second.secret, vk, request, [], [5]),
            second.index: issue_blind_coin(params, second.secret, vk, request, [], [5]),
            third.index: issue_blind_coin(params, third.secret, vk, request, [], [5]),
        }
        (coin,) = finalize_coins(params, vk, keys, shares, kept, dealt.threshold)
        assert coin.value == 5
        assert coin.verify(params, vk)


class TestSpendCertificates:
    """Tests for the Spend certificates behind coin creation."""

    def test_withdrawal_and_index(self, cfg, engines, params, alice_key):
        """Should return the input keys and the public withdrawals."""
        h = b"\x01" * 32
        withdraw = certify(cfg, engines, Request(ALICE, 0, Spend(3, None, h)), alice_key)
        confirm_all(engines, withdraw)
        coin = certify(cfg, engines, Request(ALICE, 1, Spend(0, OpaqueCoinIndex(4), h)), alice_key)
        keys, withdrawals = check_spend_certificates(cfg, params, [withdraw, coin], h)
        assert keys == [coin_key(params, ALICE, 4)]
        assert withdrawals == [3, 0]

    def test_hash_mismatch(self, cfg, engines, params, alice_key):
        """Should refuse spends committing to another bundle."""
        cert = certify(cfg, engines, Request(ALICE, 0, Spend(3, None, b"\x01" * 32)), alice_key)
        with pytest.raises(CryptoError) as exc:
            check_spend_certificates(cfg, params, [cert], b"\x02" * 32)
        assert exc.value.reason == ReasonCode.HASH_MISMATCH

    def test_duplicate_marker(self, cfg, engines, params, alice_key):
        """Should refuse the same spend twice."""
        h = b"\x01" * 32
        cert = certify(cfg, engines, Request(ALICE, 0, Spend(0, OpaqueCoinIndex(1), h)), alice_key)
        with pytest.raises(CryptoError) as exc:
            check_spend_certificates(cfg, params, [cert, cert], h)
        assert exc.value.reason == ReasonCode.DUPLICATE_SPENT_MARKER

    def test_not_a_spend(self, cfg, engines, params, alice_key):
        """Should refuse certificates over other operations."""
        cert = certify(cfg, engines, Request(ALICE, 0, Transfer(BOB, 1)), alice_key)
        with pytest.raises(CryptoError) as exc:
            check_spend_certificates(cfg, params, [cert], b"\x01" * 32)
        assert exc.value.reason == ReasonCode.INVALID_CERTIFICATE
        with pytest.raises(CryptoError):
            check_spend_certificates(cfg, params, [], b"\x01" * 32)

    def test_spent_index_refused(self, cfg, engines, alice_key):
        """Should refuse to spend the same opaque coin index twice."""
        h = b"\x01" * 32
        confirm_all(engines, certify(cfg, engines, Request(ALICE, 0, Spend(0, OpaqueCoinIndex(1), h)), alice_key))
        signed = Request(ALICE, 1, Spend(0, OpaqueCoinIndex(1), h)).signed_by(alice_key)
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(signed)
        assert exc.value.reason == ReasonCode.ALREADY_SPENT


def mint_transparent(cfg, secrets, engines, alice_key, values):
    """Withdraw from alice into transparent coins owned by bob."""
    outputs = [new_coin_body(BOB, v) for v in values]
    plan = build_transparent_spends([], {ALICE: sum(values)}, outputs, range_bits=cfg.range_bits)
    certs = []
    for account_id, spend in plan.spends:
        cert = certify(cfg, engines, Request(account_id, 0, spend), alice_key)
        confirm_all(engines, cert)
        certs.append(cert)
    request = CreateTransparentCoins(tuple(certs), plan.outputs)
    votes = [
        vote
        for name in cfg.names
        for vote in handle_transparent_coin_creation(cfg, request, name, secrets[name].signing_key())
    ]
    return request, collect_transparent_coins(cfg, plan.outputs, votes)


class TestTransparentCoins:
    """Tests for certificate-backed coins."""

    def test_mint_from_withdrawal(self, cfg, secrets, engines, alice_key):
        """Should certify every output and debit the withdrawing account."""
        _, coins = mint_transparent(cfg, secrets, engines, alice_key, [6, 4])
        assert [c.value for c in coins] == [6, 4]
        assert all(c.verify(cfg) and c.account_id == BOB for c in coins)
        assert engines[0].store.get(ALICE).balance == 90

    def test_redeem_once(self, cfg, secrets, engines, alice_key, bob_key):
        """Should credit the target once and refuse a second redemption."""
        _, coins = mint_transparent(cfg, secrets, engines, alice_key, [6])
        redeem = certify(cfg, engines, Request(BOB, 0, SpendAndTransfer(ALICE, coins[0].ref())), bob_key)
        confirm_all(engines, redeem)
        assert engines[0].store.get(ALICE).balance == 100
        again = Request(BOB, 1, SpendAndTransfer(ALICE, coins[0].ref())).signed_by(bob_key)
        with pytest.raises(EngineError) as exc:
            engines[0].handle_request(again)
        assert exc.value.reason == ReasonCode.ALREADY_SPENT

    def test_hash_mismatch(self, cfg, secrets, engines, alice_key):
        """Should refuse outputs the spends did not commit to."""
        request, _ = mint_transparent(cfg, secrets, engines, alice_key, [5])
        swapped = CreateTransparentCoins(request.certificates, (new_coin_body(BOB, 5),))
        name = cfg.names[0]
        with pytest.raises(CryptoError) as exc:
            handle_transparent_coin_creation(cfg, swapped, name, secrets[name].signing_key())
        assert exc.value.reason == ReasonCode.HASH_MISMATCH

    def test_plan_conservation(self):
        """Should refuse a plan whose outputs exceed its inputs."""
        with pytest.raises(CryptoError) as exc:
            build_transparent_spends([], {ALICE: 3}, [new_coin_body(BOB, 4)])
        assert exc.value.reason == ReasonCode.CONSERVATION_VIOLATED

    def test_collect_needs_quorum(self, cfg, secrets, engines, alice_key):
        """Should not build a coin from fewer than N - f votes."""
        request, _ = mint_transparent(cfg, secrets, engines, alice_key, [2])
        name = cfg.names[0]
        votes = handle_transparent_coin_creation(cfg, request, name, secrets[name].signing_key())
        with pytest.raises(ProtocolError) as exc:
            collect_transparent_coins(cfg, request.outputs, votes)
        assert exc.value.reason == ReasonCode.NOT_A_QUORUM

    def test_outputs_hash_depends_on_order(self):
        """Should commit to the outputs in order."""
        a, b = new_coin_body(BOB, 1), new_coin_body(BOB, 2)
        assert outputs_hash([a, b]) != outputs_hash([b, a])


class TestSpentMarkers:
    """Tests that both coin kinds share one spent-marker discipline."""

    @hsettings(max_examples=20, deadline=None)
    @given(
        order=st.lists(st.sampled_from(["transparent", "opaque"]), min_size=1, max_size=6),
        index=st.integers(min_value=0, max_value=MAX_U64),
        redeem=st.booleans(),
    )
    def test_double_spend_same_for_both_kinds(self, dealt_committee, params, order, index, redeem):
        """Should accept the first spend of either coin and refuse every repeat with AlreadySpent."""
        cfg, secrets = dealt_committee
        engines = [AccountEngine(cfg, name, secrets[name].signing_key(), params=params) for name in cfg.names]
        alice_key, bob_key = key_from(1), key_from(2)
        _, (coin,) = mint_transparent(cfg, secrets, engines, alice_key, [5])
        h = b"\x07" * 32
        transparent = SpendAndTransfer(ALICE, coin.ref()) if redeem else Spend(0, coin.ref(), h)
        operations = {"transparent": transparent, "opaque": Spend(0, OpaqueCoinIndex(index), h)}

        engine = engines[0]
        outcomes = {"transparent": [], "opaque": []}
        sequence = 0
        for kind in order:
            request = Request(BOB, sequence, operations[kind])
            try:
                engine.handle_request(request.signed_by(bob_key))
            except EngineError as e:
                outcomes[kind].append(e.reason)
                continue
            confirm_all(engines, certify(cfg, engines, request, bob_key))
            outcomes[kind].append(None)
            sequence += 1

        for seen in outcomes.values():
            if seen:
                assert seen == [None] + [ReasonCode.ALREADY_SPENT] * (len(seen) - 1)
        spent = engine.store.get(BOB).spent
        assert (coin.ref().marker() in spent) == ("transparent" in order)
        assert (operations["opaque"].coin.marker() in spent) == ("opaque" in order)
        assert len(spent) == len(set(order))
        assert engine.store.get(BOB).next_sequence == len(set(order))
