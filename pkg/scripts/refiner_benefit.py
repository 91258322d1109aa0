"""Cross-validated regression on corrupted signals, with and without G2.

Reads signals saved by ``neural_path.py --save-signals`` (or draws
scene-model signals with ``--bank``), corrupts them at relative noise
``--sigma``, and compares pooled RMSE of the two arms.
"""
import argparse
import json
import sys
import time

import numpy as np

from pulsebench import experiments, refiner


def main():
    p = argparse.ArgumentParser(description=__doc__)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--signals", help=".npz with 'values' (N, c, T) and 'hr'")
    src.add_argument("--bank", type=int, help="use this many scene-model signals instead")
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=refiner.RefinerConfig.steps)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    t0 = time.time()
    if args.signals:
        data = np.load(args.signals)
        values, hr = data["values"], data["hr"]
    else:
        values, hr = experiments.clean_signal_bank(args.bank, args.seed + 1, hr_range=(50, 110))
    config = refiner.RefinerConfig(sigma=args.sigma, steps=args.steps, seed=args.seed)
    res = experiments.refiner_benefit(list(values), hr, args.sigma, args.seed, config=config,
                                      log=lambda m: print(m, file=sys.stderr))
    print(json.dumps({"rmse_plain": res.plain.pooled.rmse_d, "rmse_refined": res.refined.pooled.rmse_d,
                      "rmse_ratio": res.rmse_ratio, "norm_ratio": res.norm_ratio,
                      "r_plain": res.plain.pooled.r, "r_refined": res.refined.pooled.r,
                      "warnings": res.pair.history.warnings, "seconds": time.time() - t0}))


if __name__ == "__main__":
    main()
