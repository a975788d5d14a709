"""
Single-core CPU cost of the coin-creation steps.

Rows: generate a 2-in/2-out coin request, verify it (authority side),
issue one authority's blinded shares, unblind a share, verify a share,
aggregate 3 shares.
"""

import logging
import random
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..coins.coconut import agg_cred, keygen, plain_verify, show_pairing_holds, unblind
from ..coins.opaque import (
    KEY,
    OutputSpec,
    coin_key,
    coin_request,
    finalize_coins,
    issue_blind_coin,
    sign_outputs,
    verify_coin_request,
)
from ..coins.params import setup
from ..config import settings
from ..core.uid import UID

logger = logging.getLogger(__name__)

MICROBENCH_STEPS = [
    "generate_request",
    "verify_request",
    "issue_share",
    "unblind_share",
    "verify_share",
    "aggregate_3_shares",
]


def _time(fn: Callable[[], object], iterations: int) -> List[float]:
    samples = []
    for _ in range(iterations):
        start = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - start) * 1000)
    return samples


def run_microbench(
    iterations: Optional[int] = None,
    range_bits: Optional[int] = None,
    seed: int = 0,
) -> pd.DataFrame:
    """
    Time each step `iterations` times with a 3-of-4 committee.

    Returns:
        DataFrame with columns step, mean_ms, std_ms, runs
    """
    iterations = settings.bench_microbench_iterations if iterations is None else iterations
    params = setup("zef-bench", range_bits=settings.range_bits if range_bits is None else range_bits)
    threshold = 3
    dealt = keygen(params, threshold, 4, rng=random.Random(seed))
    vk = dealt.verification_key
    keys_by_index = {share.index: share.verification for share in dealt.shares}
    owner, payee = UID.root(1), UID.root(2)

    def mint(outputs: List[OutputSpec], withdrawal: int):
        kept, request = coin_request(params, vk, [], [withdrawal], outputs)
        shares = {s.index: issue_blind_coin(params, s.secret, vk, request, [], [withdrawal]) for s in dealt.shares}
        return finalize_coins(params, vk, keys_by_index, shares, kept, threshold)

    inputs = mint([OutputSpec(owner, 0, 3), OutputSpec(owner, 1, 4)], 7)
    outputs = [OutputSpec(payee, 0, 5), OutputSpec(payee, 1, 2)]
    input_keys = [coin_key(params, c.account_id, c.index) for c in inputs]
    kept, request = coin_request(params, vk, inputs, [], outputs)

    def verify_request() -> bool:
        ok = verify_coin_request(params, vk, request, input_keys, [])
        return ok and all(
            show_pairing_holds(params, vk, show.credential, show.kappa, {KEY: k})
            for show, k in zip(request.inputs, input_keys)
        )

    share = dealt.shares[0]
    blinded = {s.index: sign_outputs(params, s.secret, request) for s in dealt.shares[:threshold]}
    attributes = kept[0].spec.attributes(params)
    unblinded: Dict[int, object] = {
        index: unblind(params, shares[0], kept[0].blinding, keys_by_index[index]) for index, shares in blinded.items()
    }
    one = unblinded[share.index]
    aggregate_input: List[Tuple[int, object]] = sorted(unblinded.items())

    steps: Dict[str, Callable[[], object]] = {
        "generate_request": lambda: coin_request(params, vk, inputs, [], outputs),
        "verify_request": verify_request,
        "issue_share": lambda: sign_outputs(params, share.secret, request),
        "unblind_share": lambda: unblind(params, blinded[share.index][0], kept[0].blinding, share.verification),
        "verify_share": lambda: plain_verify(params, share.verification, one, attributes),
        "aggregate_3_shares": lambda: agg_cred(params, aggregate_input, threshold),
    }

    rows = []
    for step in MICROBENCH_STEPS:
        samples = np.asarray(_time(steps[step], iterations))
        rows.append({"step": step, "mean_ms": float(samples.mean()), "std_ms": float(samples.std()), "runs": iterations})
        logger.info(f"{step}: {samples.mean():.2f} ms +/- {samples.std():.2f} over {iterations} runs")
    return pd.DataFrame(rows, columns=["step", "mean_ms", "std_ms", "runs"])


def write_microbench(table: pd.DataFrame, out_dir: Optional[str] = None) -> Path:
    root = Path(out_dir or settings.bench_out_dir)
    root.mkdir(parents=True, exist_ok=True)
    path = root / "microbench.csv"
    table.to_csv(path, index=False)
    logger.info(f"Wrote microbenchmark table to {path}")
    return path
