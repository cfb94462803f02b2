#!/usr/bin/env python3
"""Pretrain with beta=0 and beta=4 from one seed and compare the loss curves.

Prints the Pearson coupling of per-update MSE and coherence-loss changes and
writes both curves as SVG.

    python3 scripts/loss_coupling.py --epochs 30 --out runs/coupling
"""

import argparse
from pathlib import Path

from threadpoolctl import threadpool_limits

from mdcoherence.plots import line_plot
from mdcoherence.protocol import ProtocolConfig, pretrain_all, synth_for_seed


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--out", type=Path, default=Path("runs/coupling"))
    args = ap.parse_args()

    cfg = ProtocolConfig(pretrain_epochs=args.epochs)
    with threadpool_limits(limits=1):
        runs = pretrain_all(cfg, synth_for_seed(cfg, args.seed), args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for term in ("mse", "mud"):
        series = {}
        for beta, r in runs.items():
            ups = r.log.updates()
            series[f"beta={beta:g}"] = ([u["step"] for u in ups], [u[term] for u in ups])
        (args.out / f"{term}.svg").write_text(line_plot(series, f"{term} per update", "update", term, logy=True))
    for beta, r in runs.items():
        (args.out / f"metrics_beta{beta:g}.csv").write_text(r.log.to_csv())
        print(f"beta={beta:g}: mse {r.first['mse']:.3e} -> {r.last['mse']:.3e}, "
              f"mud {r.first['mud']:.3e} -> {r.last['mud']:.3e}, coupling {r.coupling:.4f}")


if __name__ == "__main__":
    main()
