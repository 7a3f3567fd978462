"""Histogram variance of item codes per prefix level: balanced SIDs, CIDs and a plain RQ baseline.

    python demos/code_balance.py [n_items] [K]
"""

import sys

from mbgen.data import generate_synthetic, planted_spec
from mbgen.tokenizer import (
    TokenizerConfig, build_cid, code_distribution_stats, fit_rqvae_baseline, fit_sid, minimal_variance,
)


def main(n_items=1000, K=32):
    _, feats, _ = generate_synthetic(planted_spec(n_items=n_items, n_users=20, n_clusters=K, seed=0))
    cfg = TokenizerConfig(codebook_size=K, seed=0)
    rq, _ = fit_rqvae_baseline(feats, cfg)
    rows = {
        "minimal": [minimal_variance(n_items, K ** lvl) for lvl in (1, 2, 3)],
        "CID": code_distribution_stats(build_cid(n_items, K, 3, seed=0).codes, K).variances,
        "SID": code_distribution_stats(fit_sid(feats, cfg).codes, K).variances,
        "RQ": code_distribution_stats(rq.codes[:, :3], K).variances,
    }
    print(f"{n_items} items, K={K}")
    print(f"{'':8s}{'level 1':>12s}{'level 2':>12s}{'level 3':>12s}")
    for name, v in rows.items():
        print(f"{name:8s}" + "".join(f"{x:12.4f}" for x in v))
    # collisions only make sense for the first three RQ digits; its fourth digit enumerates
    print("RQ items sharing a 3-digit code:", code_distribution_stats(rq.codes[:, :3], K).collisions)


if __name__ == "__main__":
    main(*map(int, sys.argv[1:3]))
