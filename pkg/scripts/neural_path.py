"""Cross-validated heart-rate estimation through the full learned path.

Trains the RoI localiser and the signal extractor, renders a clip set,
extracts strategy-A signals through R and S, and reports 3-fold CV metrics
of the regressor. ``--save-signals`` keeps the extracted signals for reuse.
"""
import argparse
import json
import sys
import time

import numpy as np

from pulsebench import experiments, roi
from pulsebench.extraction import StrategyConfig
from pulsebench.pipeline import Models, PipelineConfig


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--clips", type=int, default=90)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--roi-frames", type=int, default=3500)
    p.add_argument("--roi-model", help="reuse a saved localiser")
    p.add_argument("--save-roi", help="save the trained localiser here")
    p.add_argument("--save-signals", help="write signals and rates to this .npz")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    log = lambda m: print(m, file=sys.stderr, flush=True)

    t0 = time.time()
    if args.roi_model:
        r = roi.load_roi_model(args.roi_model)
    else:
        res = experiments.localizer_experiment(args.roi_frames, 500, args.seed)
        r = res.model
        log(f"localiser: held-out IoU {res.mean_iou:.3f} ({time.time() - t0:.0f} s)")
        if args.save_roi:
            roi.save_roi_model(r, args.save_roi)
    st = StrategyConfig("A")
    s = experiments.train_extractor(st, seed=args.seed)
    cs = experiments.clip_set(args.clips, args.seed + 1, noise_sigma=args.noise)
    cfg = PipelineConfig(strategy="A", extractor="learned", estimator="e")
    sigs = experiments.clip_signals(cs.clips, Models(roi=r, s=s), cfg, log=log)
    log(f"signals ready ({time.time() - t0:.0f} s)")
    if args.save_signals:
        np.savez(args.save_signals, values=np.stack([x.values for x in sigs]), hr=cs.hr)
    cv = experiments.neural_cv(sigs, cs.hr, seed=args.seed, log=log)
    print(json.dumps({"rmse": cv.pooled.rmse_d, "r": cv.pooled.r, "m_d": cv.pooled.m_d,
                      "seconds": time.time() - t0}))


if __name__ == "__main__":
    main()
