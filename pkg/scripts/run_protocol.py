#!/usr/bin/env python3
"""Paired beta comparison over several seeds: pretrain, heads, SNR sweep.

Writes per-seed pretraining metrics, a summary CSV and an accuracy-vs-SNR plot.

    python3 scripts/run_protocol.py --seeds 5 --out runs/protocol
"""

import argparse
import logging
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from mdcoherence.plots import line_plot
from mdcoherence.protocol import ProtocolConfig, paired_difference, run_seed, summary_csv, wins


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--first-seed", type=int, default=0)
    ap.add_argument("--betas", type=float, nargs="+", default=[0.0, 4.0])
    ap.add_argument("--pretrain-epochs", type=int, default=100)
    ap.add_argument("--realizations", type=int, default=16)
    ap.add_argument("--per-band", action="store_true")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs/protocol"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = ProtocolConfig(
        betas=tuple(args.betas),
        pretrain_epochs=args.pretrain_epochs,
        noise_realizations=args.realizations,
        per_band=args.per_band,
    )
    args.out.mkdir(parents=True, exist_ok=True)
    outcomes = []
    t0 = time.perf_counter()
    with threadpool_limits(limits=1):
        for seed in range(args.first_seed, args.first_seed + args.seeds):
            o = run_seed(cfg, seed, threads=args.threads)
            outcomes.append(o)
            for beta, pre in o.pretrained.items():
                (args.out / f"pretrain_seed{seed}_beta{beta:g}.csv").write_text(pre.log.to_csv())
            accs = {cfg.label(b): round(o.acc_at(b, -5.0, cfg), 3) for b in cfg.betas}
            logging.info("seed %d  clean %s  -5 dB %s  (%.0fs)", seed, o.sweep.clean, accs, time.perf_counter() - t0)

    (args.out / "summary.csv").write_text(summary_csv(cfg, outcomes))
    grid = outcomes[0].sweep.snr_db
    series = {
        cfg.label(b): (grid, np.mean([o.sweep.mean(cfg.label(b)) for o in outcomes], axis=0)) for b in cfg.betas
    }
    (args.out / "accuracy_vs_snr.svg").write_text(
        line_plot(series, f"test accuracy, mean of {len(outcomes)} seeds", "SNR (dB)", "accuracy")
    )
    base = cfg.betas[0]
    for b in cfg.betas[1:]:
        d = paired_difference(cfg, outcomes, -5.0, base, b)
        print(f"{cfg.label(b)} vs {cfg.label(base)} at -5 dB: >= in {wins(cfg, outcomes, -5.0, base, b)}/{len(outcomes)}"
              f" seeds, mean diff {d.mean():+.4f}")


if __name__ == "__main__":
    main()
