"""End-to-end experiment drivers shared by the acceptance tests and ``scripts/``.

Each driver is deterministic given its seed and returns plain results; none
of them prints. Sizes default to the acceptance settings.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import extraction, refiner, regressor, roi, synth
from .extraction import ColorSignal, StrategyConfig
from .metrics import error_stats
from .pipeline import Models, PipelineConfig, clip_signal


# --------------------------------------------------------------------------
# localiser

@dataclass
class LocalizerResult:
    model: roi.RoiModel
    ious: np.ndarray
    train_iou: float

    @property
    def mean_iou(self):
        return float(self.ious.mean())


def corpus_arrays(n, seed, frame_w=800, frame_h=480):
    thumbs, boxes = [], []
    for frame, box in synth.roi_corpus(n, seed, frame_w=frame_w, frame_h=frame_h):
        thumbs.append(roi.thumbnail(frame))
        boxes.append(box)
    return np.stack(thumbs), np.stack(boxes)


def localizer_experiment(n_train=3500, n_test=500, seed=0, hyper=None, frame_w=800,
                         frame_h=480, log=None) -> LocalizerResult:
    """Train R on one corpus, score mean IoU on frames from disjoint scenes."""
    xtr, ytr = corpus_arrays(n_train, seed, frame_w, frame_h)
    xte, yte = corpus_arrays(n_test, seed + 10_000, frame_w, frame_h)
    model = roi.train_roi(xtr, ytr, hyper or roi.RoiHyper(seed=seed), log=log)

    def ious(x, y):
        pred = [roi.clamp_box(p) for p in model.raw_predict(x)]
        return np.array([roi.iou(p, t, frame_w, frame_h) for p, t in zip(pred, y)])

    return LocalizerResult(model, ious(xte, yte), float(ious(xtr[:500], ytr[:500]).mean()))


# --------------------------------------------------------------------------
# learned extractor

def extractor_patches(n, seed, sizes=((320, 192), (800, 480)), jitter=0.01):
    """RoI patches from corpus frames, cropped around slightly jittered true boxes."""
    rng = np.random.default_rng([seed, 3])
    out = []
    per = -(-n // len(sizes))
    for k, (w, h) in enumerate(sizes):
        for frame, box in synth.roi_corpus(per, seed + 100 * k, frame_w=w, frame_h=h):
            b = np.asarray(box) + np.r_[rng.normal(0, jitter, 2), 0, 0]
            out.append(roi.crop_resize(frame, roi.clamp_box(b)))
    return out[:n]


def train_extractor(strategy=StrategyConfig("A"), n=600, seed=0, log=None):
    return extraction.train_s(extractor_patches(n, seed), strategy=strategy,
                              hyper=extraction.SHyper(seed=seed), log=log)


# --------------------------------------------------------------------------
# clips and signals

@dataclass
class ClipSet:
    clips: list
    hr: np.ndarray
    seeds: list


def clip_set(n=90, seed=0, noise_sigma=0.01, frame_w=320, frame_h=192, hr_range=(50.0, 110.0),
             duration_s=30.0, fps=22.0) -> ClipSet:
    spec = synth.DatasetSpec(n, hr_range, duration_s, fps, frame_w, frame_h, noise_sigma, seed)
    rows = synth.dataset_rows(spec)
    clips = [synth.clip_from_row(r, spec) for r in rows]
    return ClipSet(clips, np.array([r["truth_hr_bpm"] for r in rows]), [r["seed"] for r in rows])


def clip_signals(clips, models: Models, cfg: PipelineConfig, log=None):
    out = []
    for i, clip in enumerate(clips):
        out.append(clip_signal(clip, models, cfg))
        if log and (i + 1) % 10 == 0:
            log(f"extracted {i + 1}/{len(clips)} clips")
    return out


def clean_signal_bank(n, seed, strategy=StrategyConfig("A"), window=660, fps=22.0,
                      hr_range=(40.0, 120.0)):
    """Noise-free colour signals computed from the scene model, no rendering."""
    rng = np.random.default_rng([seed, 11])
    hrs = rng.uniform(*hr_range, n)
    seeds = np.random.SeedSequence([seed, 12]).generate_state(n)
    rows = []
    for s, h in zip(seeds, hrs):
        rgb = synth.clip_signal_only(int(s), h, window / fps, fps).T
        rows.append(rgb[1:2] if strategy.strategy == "A" else rgb)
    return np.stack(rows), hrs


# --------------------------------------------------------------------------
# cross-validated regression

def neural_cv(signals, hr, k=3, seed=0, hyper=None, log=None):
    return regressor.kfold_cv(signals, hr, k, seed, hyper or regressor.EHyper(seed=seed), log=log)


@dataclass
class RefinerBenefit:
    plain: object           # CVResult on corrupted signals
    refined: object         # CVResult on G2-refined signals
    norm_ratio: float       # mean ||G2(x~) - x|| / mean ||x~ - x|| on held-out signals
    n_heldout: int
    pair: refiner.GanPair = None
    extra: dict = field(default_factory=dict)

    @property
    def rmse_ratio(self):
        return self.refined.pooled.rmse_d / self.plain.pooled.rmse_d


def refiner_benefit(signals, hr, sigma=0.05, seed=0, n_bank=2000, n_heldout=60,
                    config=None, hyper=None, log=None) -> RefinerBenefit:
    """Corrupt ``signals`` at relative noise ``sigma``; compare CV with and without G2.

    G2 is trained on a bank of clean scene-model signals disjoint from the
    evaluation clips. Each arm trains its own regressor on its own inputs.
    """
    values = np.stack([regressor.as_rows(s)[:, :660] for s in signals])
    st = signals[0].strategy if isinstance(signals[0], ColorSignal) else StrategyConfig("A")
    bank, _ = clean_signal_bank(n_bank, seed + 500, st, values.shape[-1])
    config = config or refiner.RefinerConfig(sigma=sigma, seed=seed)
    pair = refiner.train_gan(bank, config, log=log)

    noisy = refiner.add_noise(values, sigma, seed=seed + 1, relative=True)
    refined = refiner.refine(pair, noisy)

    held, _ = clean_signal_bank(n_heldout, seed + 900, st, values.shape[-1], hr_range=(50, 110))
    held_noisy = refiner.add_noise(held, sigma, seed=seed + 2, relative=True)
    held_ref = refiner.refine(pair, held_noisy)
    num = np.linalg.norm((held_ref - held).reshape(len(held), -1), axis=1).mean()
    den = np.linalg.norm((held_noisy - held).reshape(len(held), -1), axis=1).mean()

    plain_cv = neural_cv(list(noisy), hr, seed=seed, hyper=hyper, log=log)
    refined_cv = neural_cv(list(refined), hr, seed=seed, hyper=hyper, log=log)
    return RefinerBenefit(plain_cv, refined_cv, float(num / den), n_heldout, pair)


def spectral_on_clean_clips(n=20, seed=0):
    """Spectral estimates on noise-free clips, read through the true RoI."""
    from .spectral import estimate_hr_spectral

    cs = clip_set(n, seed, noise_sigma=0.0)
    est = np.array([estimate_hr_spectral(c.truth_signal[:, 1], c.fps) for c in cs.clips])
    return est, cs.hr, error_stats(est, cs.hr)
