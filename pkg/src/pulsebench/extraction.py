"""Colour-signal extraction from RoI patches.

Three summaries of a 74 x 224 x 3 patch:

* ``A``: mean green,
* ``B``: mean red, green, blue,
* ``C``: per-block RGB means over an h x w grid; blocks row-major, R/G/B
  consecutive within a block.

``oracle_features`` computes them directly. :class:`SModel` learns the same
map from a 19 x 56 area-downsampled patch; since the targets are linear in
the pixels the network is a linear two-layer stack.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .roi import ROI_PATCH_H, ROI_PATCH_W, area_resize

SMALL_H, SMALL_W = 19, 56
SMALL_DIM = SMALL_H * SMALL_W * 3


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str = "A"
    blocks_h: int = 4
    blocks_w: int = 4

    def __post_init__(self):
        if self.strategy not in ("A", "B", "C"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.blocks_h < 1 or self.blocks_w < 1:
            raise ValueError("block grid must be at least 1 x 1")

    @property
    def n_features(self):
        return {"A": 1, "B": 3, "C": 3 * self.blocks_h * self.blocks_w}[self.strategy]

    def label(self):
        if self.strategy == "C":
            return f"C{self.blocks_h}x{self.blocks_w}"
        return self.strategy

    @classmethod
    def parse(cls, text):
        text = text.strip().upper()
        if text.startswith("C") and len(text) > 1:
            h, w = text[1:].split("X")
            return cls("C", int(h), int(w))
        return cls(text)


@dataclass
class ColorSignal:
    values: np.ndarray  # (c, T)
    fps: float
    strategy: StrategyConfig = field(default_factory=StrategyConfig)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[None, :]
        if v.shape[0] != self.strategy.n_features:
            raise ValueError(
                f"strategy {self.strategy.label()} has {self.strategy.n_features} rows, got {v.shape[0]}"
            )
        if v.shape[1] < 2:
            raise ValueError("a colour signal needs at least two samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("colour signal holds non-finite values")
        self.values = v

    @property
    def T(self):
        return self.values.shape[1]

    def window(self, n):
        if self.T < n:
            raise ValueError(f"signal has {self.T} samples, need {n}")
        return ColorSignal(self.values[:, :n], self.fps, self.strategy)


def _check_patch(patch):
    p = np.asarray(patch)
    if p.shape != (ROI_PATCH_H, ROI_PATCH_W, 3):
        raise ValueError(f"patch must be {ROI_PATCH_H} x {ROI_PATCH_W} x 3, got {p.shape}")
    return p


def block_edges(n, k):
    return np.array([len(a) for a in np.array_split(np.arange(n), k)]).cumsum()[:-1]


def oracle_features(patch, strategy: StrategyConfig = StrategyConfig()):
    p = np.asarray(_check_patch(patch), dtype=np.float64)
    # A and B go through the 1 x 1 block path so A == B[1] and C1x1 == B exactly
    if strategy.strategy == "A":
        return oracle_features(p, StrategyConfig("B"))[1:2]
    bh, bw = (1, 1) if strategy.strategy == "B" else (strategy.blocks_h, strategy.blocks_w)
    rows = np.r_[0, block_edges(p.shape[0], bh)]
    cols = np.r_[0, block_edges(p.shape[1], bw)]
    sums = np.add.reduceat(np.add.reduceat(p, rows, axis=0), cols, axis=1)
    rh = np.diff(np.r_[rows, p.shape[0]])
    cw = np.diff(np.r_[cols, p.shape[1]])
    means = sums / (rh[:, None, None] * cw[None, :, None])
    return means.reshape(-1)


def block_areas(strategy: StrategyConfig):
    rh = np.diff(np.r_[0, block_edges(ROI_PATCH_H, strategy.blocks_h), ROI_PATCH_H])
    cw = np.diff(np.r_[0, block_edges(ROI_PATCH_W, strategy.blocks_w), ROI_PATCH_W])
    return (rh[:, None] * cw[None, :]).reshape(-1)


def downsample_patch(patch):
    """74 x 224 x 3 -> flattened 19 x 56 x 3 area average (mean-preserving)."""
    return area_resize(np.asarray(patch, dtype=np.float64), SMALL_H, SMALL_W).reshape(-1)


# --------------------------------------------------------------------------
# learned extractor

@dataclass
class SHyper:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    epochs: int = 40
    batch_size: int = 32
    hidden: int = 32
    seed: int = 0


@dataclass
class SModel:
    net: nn.Network
    strategy: StrategyConfig
    feat_mean: np.ndarray
    feat_scale: float
    target_mean: np.ndarray
    target_scale: np.ndarray
    hyper: SHyper = field(default_factory=SHyper)
    loss_curve: list = field(default_factory=list)

    def predict_small(self, small):
        z = (np.atleast_2d(small) - self.feat_mean) / self.feat_scale
        return self.net.forward(z, "infer") * self.target_scale + self.target_mean

    def predict(self, patches):
        small = np.stack([downsample_patch(_check_patch(p)) for p in patches])
        return self.predict_small(small)

    def extra(self):
        return {"kind": "S", "strategy": asdict(self.strategy),
                "feat_mean": self.feat_mean.tolist(), "feat_scale": self.feat_scale,
                "target_mean": self.target_mean.tolist(),
                "target_scale": self.target_scale.tolist(), "hyper": asdict(self.hyper)}

    @classmethod
    def from_saved(cls, net, extra):
        return cls(net, StrategyConfig(**extra["strategy"]), np.array(extra["feat_mean"]),
                   float(extra["feat_scale"]), np.array(extra["target_mean"]),
                   np.array(extra["target_scale"]), SHyper(**extra.get("hyper", {})))


def build_s(n_out, seed=0, hidden=32):
    seeds = np.random.SeedSequence(seed).generate_state(2)
    return nn.Network([nn.LayerSpec("dense", SMALL_DIM, hidden, int(seeds[0])),
                       nn.LayerSpec("dense", hidden, n_out, int(seeds[1]))], seed=seed, role="S")


def train_s(patches, targets=None, strategy: StrategyConfig = StrategyConfig(),
            hyper: SHyper | None = None, small=False, log=None) -> SModel:
    """Fit S to oracle features. ``patches`` are full patches, or downsampled rows if ``small``."""
    hyper = hyper or SHyper()
    if small:
        x = np.asarray(patches, dtype=np.float64)
    else:
        patches = list(patches)
        x = np.stack([downsample_patch(_check_patch(p)) for p in patches])
        if targets is None:
            targets = [oracle_features(p, strategy) for p in patches]
    y = np.asarray(targets, dtype=np.float64).reshape(len(x), -1)
    if y.shape[1] != strategy.n_features:
        raise ValueError("target width does not match the strategy")
    feat_mean = x.mean(axis=0)
    spread = x.std()
    feat_scale = float(spread * np.sqrt(x.shape[1])) if spread > 0 else 1.0
    target_mean = y.mean(axis=0)
    target_scale = y.std(axis=0)
    target_scale[target_scale < 1e-9] = 1.0
    xz = (x - feat_mean) / feat_scale
    yz = (y - target_mean) / target_scale
    net = build_s(strategy.n_features, hyper.seed, hyper.hidden)
    model = SModel(net, strategy, feat_mean, feat_scale, target_mean, target_scale, hyper)
    opt = nn.SGD(hyper.learning_rate, hyper.momentum, hyper.weight_decay)
    rng = np.random.default_rng(hyper.seed)
    model.loss_curve.append(nn.mse_loss(net.forward(xz), yz)[0])
    for epoch in range(hyper.epochs):
        for idx in nn.minibatches(len(x), hyper.batch_size, rng, drop_singleton=False):
            nn.train_step(net, opt, xz[idx], yz[idx])
        model.loss_curve.append(nn.mse_loss(net.forward(xz), yz)[0])
        if log:
            log(f"S epoch {epoch + 1}/{hyper.epochs} loss {model.loss_curve[-1]:.3e}")
    return model


def extract_signal(patches, extractor="oracle", strategy: StrategyConfig = StrategyConfig(),
                   fps=22.0) -> ColorSignal:
    """Column t of the result holds the features of patch t."""
    patches = list(patches)
    if len(patches) < 2:
        raise ValueError("need at least two patches")
    shape = np.shape(patches[0])
    for p in patches:
        if np.shape(p) != shape:
            raise ValueError(f"patch shapes differ: {shape} vs {np.shape(p)}")
    if isinstance(extractor, SModel):
        if extractor.strategy != strategy:
            raise ValueError("extractor was trained for a different strategy")
        values = extractor.predict(patches).T
    elif extractor == "oracle":
        values = np.stack([oracle_features(p, strategy) for p in patches], axis=1)
    else:
        raise ValueError(f"unknown extractor {extractor!r}")
    return ColorSignal(values, fps, strategy)


def save_s_model(model: SModel, path):
    nn.save_params(model.net, path, extra=model.extra())


def load_s_model(path) -> SModel:
    net, extra = nn.load_params(path)
    if extra.get("kind") != "S":
        raise nn.CorruptWeightsError(f"{path} does not hold a signal extractor")
    return SModel.from_saved(net, extra)


# --------------------------------------------------------------------------
# signal CSV: two comment lines, a column header, one row per frame

def write_signal_csv(sig: ColorSignal, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# strategy={sig.strategy.label()}\n")
        fh.write(f"# fps={sig.fps!r}\n")
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(sig.values.shape[0])])
        for col in sig.values.T:
            w.writerow([repr(float(v)) for v in col])


def read_signal_csv(path) -> ColorSignal:
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        elif line:
            body.append(line)
    if "strategy" not in meta or "fps" not in meta:
        raise ValueError(f"{path}: missing strategy/fps header")
    rows = list(csv.reader(body))[1:]
    values = np.array([[float(v) for v in r] for r in rows]).T
    return ColorSignal(values, float(meta["fps"]), StrategyConfig.parse(meta["strategy"]))
