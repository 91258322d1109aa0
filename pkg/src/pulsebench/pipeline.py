"""The estimation path, frame to heart rate, and its throughput benchmark.

Per clip: decode frames, localise the RoI, crop it to 224 x 74, optionally
refine the patch (G1), extract the colour signal (oracle or learned S),
optionally refine the signal (G2), then estimate the rate with the learned
regressor or the spectral peak. Frames are processed in chunks so memory
stays flat for long clips.
"""
from __future__ import annotations

import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import nn
from .extraction import (SMALL_H, SMALL_W, ColorSignal, SModel, StrategyConfig, downsample_patch,
                         load_s_model, oracle_features)
from .refiner import GanPair, load_pair, refine
from .regressor import EModel, estimate_hr, load_e_model
from .roi import RoiBox, RoiModel, clamp_box, crop_resize, detect_many, load_roi_model
from .spectral import estimate_hr_spectral
from .synth import Clip, load_clip, read_manifest

STAGES = ("decode", "detect", "crop", "refine_patch", "extract", "refine_signal", "estimate")


class ClipTooShort(ValueError):
    pass


@dataclass
class PipelineConfig:
    strategy: str = "A"
    extractor: str = "learned"      # "oracle" | "learned"
    estimator: str = "e"            # "e" | "spectral"
    g1: bool = False
    g2: bool = False
    roi_model: str = ""             # empty: use the clip's labelled RoI
    s_model: str = ""
    g1_model: str = ""
    g2_model: str = ""
    e_model: str = ""
    window: int = 660
    fps: float = 22.0
    chunk: int = 110
    threads: int = 1

    def __post_init__(self):
        if self.extractor not in ("oracle", "learned"):
            raise ValueError(f"extractor must be 'oracle' or 'learned', got {self.extractor!r}")
        if self.estimator not in ("e", "spectral"):
            raise ValueError(f"estimator must be 'e' or 'spectral', got {self.estimator!r}")
        if self.window < 2 or self.chunk < 1 or self.threads < 1:
            raise ValueError("window, chunk and threads must be positive")
        StrategyConfig.parse(self.strategy)

    @property
    def strategy_config(self):
        return StrategyConfig.parse(self.strategy)

    def to_json(self):
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline settings: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class Models:
    roi: RoiModel | None = None
    s: SModel | None = None
    g1: GanPair | None = None
    g2: GanPair | None = None
    e: EModel | None = None


def load_models(cfg: PipelineConfig) -> Models:
    def need(path, what):
        if not path:
            raise FileNotFoundError(f"{what} model path is not set")
        if not Path(path).is_file():
            raise FileNotFoundError(f"{what} model {path} does not exist")
        return path

    m = Models()
    if cfg.roi_model:
        m.roi = load_roi_model(need(cfg.roi_model, "RoI"))
    if cfg.extractor == "learned":
        m.s = load_s_model(need(cfg.s_model, "S"))
    if cfg.g1:
        m.g1 = load_pair(need(cfg.g1_model, "G1"))
    if cfg.g2:
        m.g2 = load_pair(need(cfg.g2_model, "G2"))
    if cfg.estimator == "e":
        m.e = load_e_model(need(cfg.e_model, "E"))
    check_models(cfg, m)
    return m


def check_models(cfg: PipelineConfig, m: Models):
    """Raise if an enabled stage is missing or its dimensions disagree with the config."""
    st = cfg.strategy_config
    c = st.n_features
    if cfg.extractor == "learned":
        if m.s is None:
            raise ValueError("learned extractor enabled but no S model given")
        if m.s.strategy != st:
            raise nn.ShapeError(f"S was trained for {m.s.strategy.label()}, config asks {st.label()}")
    if cfg.g1:
        if m.g1 is None or m.g1.config.domain != "patch":
            raise ValueError("G1 enabled but no patch refiner given")
        if tuple(m.g1.shape) != (SMALL_H * SMALL_W * 3,):
            raise nn.ShapeError(f"G1 expects items of shape {m.g1.shape}")
    if cfg.g2:
        if m.g2 is None or m.g2.config.domain != "signal":
            raise ValueError("G2 enabled but no signal refiner given")
        if tuple(m.g2.shape) != (c, cfg.window):
            raise nn.ShapeError(f"G2 expects signals of shape {m.g2.shape}, pipeline makes {(c, cfg.window)}")
    if cfg.estimator == "e":
        if m.e is None:
            raise ValueError("regressor estimator selected but no E model given")
        if (m.e.n_rows, m.e.window) != (c, cfg.window):
            raise nn.ShapeError(
                f"E expects {m.e.n_rows} x {m.e.window} signals, pipeline makes {c} x {cfg.window}")


class StageTimer:
    def __init__(self):
        self.seconds = {s: 0.0 for s in STAGES}

    @contextmanager
    def __call__(self, stage):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[stage] += time.perf_counter() - t0


@contextmanager
def _null(stage):
    yield


def _upsample_small(small):
    img = np.asarray(small).reshape(SMALL_H, SMALL_W, 3)
    return crop_resize(img, RoiBox(0.5, 0.5, 1.0, 1.0))


def clip_signal(clip: Clip, models: Models, cfg: PipelineConfig, timer=None) -> ColorSignal:
    """Colour signal of the first ``cfg.window`` frames (after G2 if enabled)."""
    timer = timer or _null
    st = cfg.strategy_config
    n = cfg.window
    if clip.n_frames < n:
        raise ClipTooShort(f"clip has {clip.n_frames} frames, pipeline needs {n}")
    values = np.empty((st.n_features, n))
    for start in range(0, n, cfg.chunk):
        idx = range(start, min(n, start + cfg.chunk))
        with timer("decode"):
            frames = [clip.frame_u8(i) for i in idx]
        with timer("detect"):
            if models.roi is not None:
                boxes = detect_many(models.roi, frames)
            else:
                boxes = [clamp_box(clip.truth_roi[i]) for i in idx]
        with timer("crop"):
            patches = [crop_resize(f, b) for f, b in zip(frames, boxes)]
        small = None
        if cfg.g1:
            with timer("refine_patch"):
                small = refine(models.g1, np.stack([downsample_patch(p) for p in patches]))
                if cfg.extractor == "oracle":
                    patches = [_upsample_small(s) for s in small]
        with timer("extract"):
            if cfg.extractor == "learned":
                if small is None:
                    small = np.stack([downsample_patch(p) for p in patches])
                feats = models.s.predict_small(small)
            else:
                feats = np.stack([oracle_features(p, st) for p in patches])
            values[:, start:start + len(idx)] = feats.T
    if cfg.g2:
        with timer("refine_signal"):
            values = refine(models.g2, values)
    return ColorSignal(values, clip.fps, st)


def estimate_signal(sig: ColorSignal, models: Models, cfg: PipelineConfig) -> float:
    if cfg.estimator == "e":
        return estimate_hr(models.e, sig).bpm
    return float(estimate_hr_spectral(sig.values, sig.fps, strict=False))


def estimate_clip(clip: Clip, models: Models, cfg: PipelineConfig, timer=None) -> float:
    sig = clip_signal(clip, models, cfg, timer)
    with (timer or _null)("estimate"):
        return estimate_signal(sig, models, cfg)


def clip_id(path):
    return Path(path).stem


def run_pipeline(manifest, cfg: PipelineConfig, models: Models | None = None, log=None):
    """One prediction row per manifest entry, in manifest order.

    ``manifest`` is a manifest path or already-read rows with absolute clip paths.
    """
    rows = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    models = models or load_models(cfg)
    check_models(cfg, models)

    def one(row):
        clip = load_clip(row["clip_path"])
        pred = estimate_clip(clip, models, cfg)
        if log:
            log(f"{clip_id(row['clip_path'])}: {pred:.2f} bpm (truth {row['truth_hr_bpm']:.2f})")
        return {"clip_id": clip_id(row["clip_path"]), "truth_bpm": float(row["truth_hr_bpm"]),
                "pred_bpm": float(pred), "fold": -1}

    if cfg.threads == 1:
        return [one(r) for r in rows]
    with ThreadPoolExecutor(cfg.threads) as pool:
        return list(pool.map(one, rows))


# --------------------------------------------------------------------------
# benchmark

@dataclass
class BenchReport:
    frames: int
    seconds: float
    fps: float
    stage_ms: dict                       # mean per-frame latency by stage
    rep_fps: list = field(default_factory=list)

    @property
    def stage_total_ms(self):
        return float(sum(self.stage_ms.values()))

    def lines(self):
        out = [f"frames {self.frames}  seconds {self.seconds:.3f}  fps {self.fps:.1f}"]
        out += [f"  {k:<14}{v:8.3f} ms/frame" for k, v in self.stage_ms.items() if v > 0]
        return out


def bench(cfg: PipelineConfig, clip: Clip, repetitions=3, models: Models | None = None) -> BenchReport:
    """Median-of-repetitions throughput of the inference path on one clip.

    One untimed warm-up pass runs first; at least three timed passes are taken. Frame decode is timed, rendering is not:
    pass a clip loaded from disk.
    """
    if repetitions < 1:
        raise ValueError("need at least one repetition")
    models = models or load_models(cfg)
    check_models(cfg, models)
    estimate_clip(clip, models, cfg)
    n = cfg.window
    walls, per_stage = [], []
    for _ in range(max(3, repetitions)):
        timer = StageTimer()
        t0 = time.perf_counter()
        estimate_clip(clip, models, cfg, timer)
        walls.append(time.perf_counter() - t0)
        per_stage.append(timer.seconds)
    wall = statistics.median(walls)
    stage_ms = {s: 1000 * statistics.median(p[s] for p in per_stage) / n for s in STAGES}
    return BenchReport(n, wall, n / wall, stage_ms, [n / w for w in walls])
