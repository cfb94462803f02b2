#!/usr/bin/env python3
"""Finite-difference checks of the loss gradient and the end-to-end model gradient.

    python3 scripts/gradcheck_sweep.py --seeds 50 --betas 0 4 40
"""

import argparse

import numpy as np

from mdcoherence.objective import LossConfig, gradcheck
from mdcoherence.trainer import model_gradcheck


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--betas", type=float, nargs="+", default=[0.0, 4.0])
    ap.add_argument("--rows", type=int, default=6)
    ap.add_argument("--cols", type=int, default=6)
    ap.add_argument("--h", type=float, default=1e-5)
    ap.add_argument("--model-seeds", type=int, default=10)
    args = ap.parse_args()

    print("beta,per_band,max_rel_mse,max_rel_mud,max_rel_total,max_abs_mse")
    for beta in args.betas:
        for per_band in (False, True):
            cfg = LossConfig(beta=beta, per_band=per_band)
            reps = [gradcheck((args.rows, args.cols), cfg, s, args.h) for s in range(args.seeds)]
            worst = {k: max(r.max_rel[k] for r in reps) for k in ("mse", "mud", "total")}
            print(f"{beta:g},{per_band},{worst['mse']:.3e},{worst['mud']:.3e},{worst['total']:.3e},"
                  f"{max(r.max_abs['mse'] for r in reps):.3e}")

    rels = [model_gradcheck(s)[0] for s in range(args.model_seeds)]
    rels_cls = [model_gradcheck(s, with_classifier=True)[0] for s in range(args.model_seeds)]
    print(f"model end-to-end: max rel {max(rels):.3e} (median {np.median(rels):.3e});"
          f" with classifier branch {max(rels_cls):.3e}")


if __name__ == "__main__":
    main()
