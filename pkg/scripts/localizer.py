"""Train the RoI localiser on synthetic frames and report held-out IoU.

Prints one JSON line with the mean IoU on the test frames, the mean IoU on
training frames and the run time. ``--save`` keeps the model.
"""
import argparse
import json
import sys
import time

from pulsebench import experiments, roi


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--train", type=int, default=3500)
    p.add_argument("--test", type=int, default=500)
    p.add_argument("--width", type=int, default=800)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--epochs", type=int, default=roi.RoiHyper.epochs)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save", help="write the trained model here")
    args = p.parse_args()

    t0 = time.time()
    hyper = roi.RoiHyper(epochs=args.epochs, seed=args.seed)
    res = experiments.localizer_experiment(args.train, args.test, args.seed, hyper, args.width,
                                           args.height, log=lambda m: print(m, file=sys.stderr))
    if args.save:
        roi.save_roi_model(res.model, args.save)
    print(json.dumps({"mean_iou": res.mean_iou, "train_iou": res.train_iou,
                      "min_iou": float(res.ious.min()), "seconds": time.time() - t0}))


if __name__ == "__main__":
    main()
