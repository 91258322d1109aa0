"""Frames per second of the inference path on one rendered clip.

Models are trained quickly from scratch unless paths are given, since only
their sizes matter for timing. The clip is written to disk first so the
benchmark includes decoding it.
"""
import argparse
import tempfile
from pathlib import Path

from pulsebench import experiments, pipeline, refiner, regressor, roi, synth


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--width", type=int, default=800)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--roi-model")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    if args.roi_model:
        r = roi.load_roi_model(args.roi_model)
    else:
        thumbs, boxes = experiments.corpus_arrays(200, args.seed, args.width, args.height)
        r = roi.train_roi(thumbs, boxes, roi.RoiHyper(epochs=2))
    s = experiments.train_extractor(n=100, seed=args.seed)
    bank, hr = experiments.clean_signal_bank(60, args.seed)
    e = regressor.train_e(bank, hr, regressor.EHyper(epochs=1, shifts=1))
    g2 = None if args.no_refine else refiner.train_gan(bank, refiner.RefinerConfig(steps=50))

    spec = synth.DatasetSpec(1, (50.0, 110.0), 30.0, 22.0, args.width, args.height, 0.01, args.seed)
    with tempfile.TemporaryDirectory() as tmp:
        row = synth.gen_dataset(spec, tmp)[0]
        clip = synth.load_clip(Path(tmp) / row["clip_path"])
        cfg = pipeline.PipelineConfig(g2=g2 is not None)
        rep = pipeline.bench(cfg, clip, args.reps, pipeline.Models(roi=r, s=s, g2=g2, e=e))
    for line in rep.lines():
        print(line)
    print(f"stage sum {rep.stage_total_ms:.3f} ms/frame vs wall {1000 / rep.fps:.3f} ms/frame")


if __name__ == "__main__":
    main()
