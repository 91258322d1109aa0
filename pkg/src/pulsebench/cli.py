"""Command-line entry point: ``pulsebench <command> [options]``."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import experiments, extraction, metrics, pipeline, refiner, regressor, roi, synth


def log(msg):
    print(msg, file=sys.stderr, flush=True)


def default_seed():
    raw = os.environ.get("PULSEBENCH_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"PULSEBENCH_SEED must be an integer, got {raw!r}")


def emit(args, payload, text_lines):
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def load_config(args) -> pipeline.PipelineConfig:
    base = {}
    if args.config:
        base = json.loads(Path(args.config).read_text())
    for key in ("strategy", "extractor", "estimator", "roi_model", "s_model", "g1_model",
                "g2_model", "e_model", "window"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    base["threads"] = args.threads
    refine_flag = getattr(args, "refine", None)
    if refine_flag is not None:
        base["g2"] = refine_flag
        if not refine_flag:
            base["g1"] = False
    return pipeline.PipelineConfig.from_dict(base)


# --------------------------------------------------------------------------
# commands

def cmd_synth(args):
    spec = synth.DatasetSpec(args.clips, (args.hr_min, args.hr_max), args.duration, args.fps,
                             args.width, args.height, args.noise, args.seed)
    rows = synth.gen_dataset(spec, args.out)
    frames = [r["n_frames"] for r in rows]
    emit(args, {"clips": len(rows), "frames_per_clip": frames, "out": str(args.out)},
         [f"wrote {len(rows)} clips x {frames[0]} frames to {args.out}"])


def cmd_train_roi(args):
    frames, boxes = [], []
    for frame, box in synth.roi_corpus(args.frames, args.seed, frame_w=args.width,
                                       frame_h=args.height):
        frames.append(roi.thumbnail(frame))
        boxes.append(box)
    hyper = roi.RoiHyper(epochs=args.epochs, seed=args.seed)
    model = roi.train_roi(np.stack(frames), np.stack(boxes), hyper, log=log)
    roi.save_roi_model(model, args.out)
    emit(args, {"out": str(args.out), "loss_curve": model.loss_curve},
         [f"saved localiser to {args.out}; final mse {model.loss_curve[-1]:.3e}"])


def _corpus_patches(n, seed, width, height):
    for frame, box in synth.roi_corpus(n, seed, frame_w=width, frame_h=height):
        yield roi.crop_resize(frame, roi.clamp_box(box))


def cmd_train_s(args):
    st = extraction.StrategyConfig.parse(args.strategy)
    patches = list(_corpus_patches(args.patches, args.seed, args.width, args.height))
    model = extraction.train_s(patches, strategy=st,
                               hyper=extraction.SHyper(epochs=args.epochs, seed=args.seed), log=log)
    extraction.save_s_model(model, args.out)
    emit(args, {"out": str(args.out), "loss_curve": model.loss_curve},
         [f"saved extractor ({st.label()}) to {args.out}"])


def manifest_signals(manifest, cfg, models=None):
    models = models or pipeline.load_models(replace(cfg, estimator="spectral", g2=False))
    rows = synth.read_manifest(manifest)
    sigs = []
    for r in rows:
        clip = synth.load_clip(r["clip_path"])
        sigs.append(pipeline.clip_signal(clip, models, replace(cfg, g2=False)))
    return rows, sigs


def cmd_train_refiner(args):
    st = extraction.StrategyConfig.parse(args.strategy)
    if args.domain == "signal":
        if args.manifest:
            cfg = load_config(args)
            _, sigs = manifest_signals(args.manifest, cfg)
            clean = np.stack([s.values[:, :cfg.window] for s in sigs])
        else:
            if st.strategy == "C":
                raise ValueError("scene-model signals cover strategies A and B; pass --manifest for C")
            clean, _ = experiments.clean_signal_bank(args.items, args.seed, st, args.window or 660)
        config = refiner.RefinerConfig(sigma=args.sigma, steps=args.steps, seed=args.seed)
    else:
        clean = np.stack([extraction.downsample_patch(p) for p in
                          _corpus_patches(args.items, args.seed, args.width, args.height)])
        config = refiner.RefinerConfig.for_patches(sigma=args.sigma, steps=args.steps,
                                                   seed=args.seed)
    pair = refiner.train_gan(clean, config, log=log)
    refiner.save_pair(pair, args.out_g, args.out_d)
    emit(args, {"out_g": str(args.out_g), "out_d": str(args.out_d),
                "warnings": pair.history.warnings, "final_l_g": pair.history.l_g[-1]},
         [f"saved {pair.generator.role}/{pair.discriminator.role} to {args.out_g}, {args.out_d}"]
         + pair.history.warnings)


def cmd_train_e(args):
    cfg = load_config(args)
    rows, sigs = manifest_signals(args.manifest, cfg)
    if cfg.g2:
        g2 = refiner.load_pair(cfg.g2_model)
        sigs = [extraction.ColorSignal(refiner.refine(g2, s.values[:, :cfg.window]), s.fps,
                                       s.strategy) for s in sigs]
    hyper = regressor.EHyper(epochs=args.epochs, shifts=args.shifts, window=cfg.window,
                             seed=args.seed)
    model = regressor.train_e(sigs, [r["truth_hr_bpm"] for r in rows], hyper, log=log)
    regressor.save_e_model(model, args.out)
    emit(args, {"out": str(args.out), "loss_curve": model.loss_curve},
         [f"saved regressor to {args.out}; final mse {model.loss_curve[-1]:.3f} bpm^2"])


def cmd_estimate(args):
    cfg = load_config(args)
    if args.write_config:
        Path(args.write_config).write_text(cfg.to_json())
    rows = pipeline.run_pipeline(args.manifest, cfg, log=log)
    if args.out:
        regressor.write_predictions(rows, args.out)
    report = metrics.error_stats([r["pred_bpm"] for r in rows], [r["truth_bpm"] for r in rows]) \
        if len(rows) >= 2 else None
    payload = {"predictions": rows, "report": asdict(report) if report else None}
    text = [f"{r['clip_id']},{r['truth_bpm']:.3f},{r['pred_bpm']:.3f}" for r in rows]
    emit(args, payload, text + (report.lines() if report else []))


def cmd_eval(args):
    rows = regressor.read_predictions(args.predictions)
    report = metrics.error_stats([r["pred_bpm"] for r in rows], [r["truth_bpm"] for r in rows])
    if args.out:
        Path(args.out).write_text(report.to_json(indent=1))
    emit(args, asdict(report), report.lines())


def cmd_bench(args):
    cfg = load_config(args)
    clip = synth.load_clip(args.clip)
    rep = pipeline.bench(cfg, clip, args.reps)
    emit(args, asdict(rep) | {"stage_total_ms": rep.stage_total_ms}, rep.lines())


# --------------------------------------------------------------------------
# parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="random seed (default: $PULSEBENCH_SEED or 0)")
    common.add_argument("--config", help="JSON file with pipeline settings")
    common.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    common.add_argument("--threads", type=int, default=1, help="worker threads (1 = serial)")

    pipe = argparse.ArgumentParser(add_help=False)
    pipe.add_argument("--strategy")
    pipe.add_argument("--extractor", choices=("oracle", "learned"))
    pipe.add_argument("--estimator", choices=("e", "spectral"))
    pipe.add_argument("--roi-model", dest="roi_model")
    pipe.add_argument("--s-model", dest="s_model")
    pipe.add_argument("--g1-model", dest="g1_model")
    pipe.add_argument("--g2-model", dest="g2_model")
    pipe.add_argument("--e-model", dest="e_model")
    pipe.add_argument("--window", type=int)

    frame = argparse.ArgumentParser(add_help=False)
    frame.add_argument("--width", type=int, default=800)
    frame.add_argument("--height", type=int, default=480)

    p = argparse.ArgumentParser(prog="pulsebench", description="Synthetic rPPG benchmark tools")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common, frame], help="render a synthetic dataset")
    s.add_argument("--clips", type=int, default=9)
    s.add_argument("--duration", type=float, default=30.0)
    s.add_argument("--fps", type=float, default=22.0)
    s.add_argument("--noise", type=float, default=0.0, help="pixel noise sd in [0, 1] units")
    s.add_argument("--hr-min", type=float, default=50.0)
    s.add_argument("--hr-max", type=float, default=110.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train one network")
    tsub = t.add_subparsers(dest="target", required=True)

    r = tsub.add_parser("roi", parents=[common, frame])
    r.add_argument("--frames", type=int, default=4000)
    r.add_argument("--epochs", type=int, default=roi.RoiHyper.epochs)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_train_roi)

    ts = tsub.add_parser("s", parents=[common, frame])
    ts.add_argument("--strategy", default="A")
    ts.add_argument("--patches", type=int, default=600)
    ts.add_argument("--epochs", type=int, default=extraction.SHyper.epochs)
    ts.add_argument("--out", required=True)
    ts.set_defaults(func=cmd_train_s)

    g = tsub.add_parser("refiner", parents=[common, pipe, frame])
    g.add_argument("--domain", choices=("signal", "patch"), default="signal")
    g.add_argument("--sigma", type=float, default=0.05)
    g.add_argument("--steps", type=int, default=3000)
    g.add_argument("--items", type=int, default=2000)
    g.add_argument("--manifest", help="take clean signals from these clips instead")
    g.add_argument("--out-g", dest="out_g", required=True)
    g.add_argument("--out-d", dest="out_d", required=True)
    g.set_defaults(func=cmd_train_refiner, strategy_default="A")

    e = tsub.add_parser("e", parents=[common, pipe])
    e.add_argument("--manifest", required=True)
    e.add_argument("--epochs", type=int, default=regressor.EHyper.epochs)
    e.add_argument("--shifts", type=int, default=regressor.EHyper.shifts)
    e.add_argument("--refine", action=argparse.BooleanOptionalAction, default=None,
                   help="train on G2-refined signals")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_train_e)

    est = sub.add_parser("estimate", parents=[common, pipe], help="run the pipeline on a manifest")
    est.add_argument("--manifest", required=True)
    est.add_argument("--refine", action=argparse.BooleanOptionalAction, default=None,
                     help="enable or disable the signal refiner")
    est.add_argument("--out", help="predictions CSV")
    est.add_argument("--write-config", dest="write_config", help="save the effective config")
    est.set_defaults(func=cmd_estimate)

    ev = sub.add_parser("eval", parents=[common], help="score a predictions CSV")
    ev.add_argument("predictions")
    ev.add_argument("--out", help="report JSON")
    ev.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", parents=[common, pipe], help="time the inference path")
    b.add_argument("--clip", required=True)
    b.add_argument("--reps", type=int, default=3)
    b.add_argument("--refine", action=argparse.BooleanOptionalAction, default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = default_seed()
    if getattr(args, "strategy_default", None) and getattr(args, "strategy", None) is None:
        args.strategy = args.strategy_default
    try:
        args.func(args)
    except (ValueError, FileNotFoundError, OSError, RuntimeError) as exc:
        log(f"pulsebench {args.command}: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
