"""Face region-of-interest localisation and cropping.

The localiser regresses normalized box coordinates from an 80 x 48
grayscale thumbnail of the frame with a dense 3840-256-64-4 network,
trained on the squared coordinate error. Boxes are (cx, cy, w, h) in
[0, 1] frame units.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn

ROI_PATCH_W = 224
ROI_PATCH_H = 74
THUMB_W = 80
THUMB_H = 48
MIN_BOX = 1e-3
GRAY = np.array([0.299, 0.587, 0.114])


class DegenerateBoxError(ValueError):
    pass


@dataclass(frozen=True)
class RoiBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError("box width and height must be positive")
        lo = (self.cx - self.w / 2, self.cy - self.h / 2)
        hi = (self.cx + self.w / 2, self.cy + self.h / 2)
        if min(lo) < -1e-9 or max(hi) > 1 + 1e-9:
            raise ValueError(f"box {self} leaves the unit square")

    def as_array(self):
        return np.array([self.cx, self.cy, self.w, self.h])

    def corners_px(self, frame_w, frame_h):
        return ((self.cx - self.w / 2) * frame_w, (self.cy - self.h / 2) * frame_h,
                (self.cx + self.w / 2) * frame_w, (self.cy + self.h / 2) * frame_h)


def clamp_box(raw) -> RoiBox:
    """Project any 4-vector onto a valid box.

    Sizes are clipped to [MIN_BOX, 1]; the centre is then pulled inward just
    enough for the box to fit, so clamping moves boxes toward the frame centre.
    """
    cx, cy, w, h = (float(v) if np.isfinite(v) else 0.5 for v in raw)
    w = min(max(w, MIN_BOX), 1.0)
    h = min(max(h, MIN_BOX), 1.0)
    cx = min(max(cx, w / 2), 1 - w / 2)
    cy = min(max(cy, h / 2), 1 - h / 2)
    return RoiBox(cx, cy, w, h)


def iou(a, b, frame_w=800, frame_h=480):
    """Intersection over union of two boxes, measured in pixels."""
    a = a if isinstance(a, RoiBox) else RoiBox(*a)
    b = b if isinstance(b, RoiBox) else RoiBox(*b)
    ax0, ay0, ax1, ay1 = a.corners_px(frame_w, frame_h)
    bx0, by0, bx1, by1 = b.corners_px(frame_w, frame_h)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


# --------------------------------------------------------------------------
# resampling

def _area_matrix(n_in, n_out):
    """(n_out, n_in) averaging weights; each output averages its exact footprint."""
    scale = n_in / n_out
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            m[i, j] = min(hi, j + 1) - max(lo, j)
    return m / scale


_AREA_CACHE: dict = {}


def area_resize(img, out_h, out_w):
    """Area-average resample of an H x W (x C) image; preserves the global mean."""
    img = np.asarray(img)
    h, w = img.shape[:2]
    if h % out_h == 0 and w % out_w == 0:
        fh, fw = h // out_h, w // out_w
        shape = (out_h, fh, out_w, fw) + img.shape[2:]
        return img.reshape(shape).mean(axis=(1, 3))
    key = (h, w, out_h, out_w)
    if key not in _AREA_CACHE:
        _AREA_CACHE[key] = (_area_matrix(h, out_h), _area_matrix(w, out_w))
    mh, mw = _AREA_CACHE[key]
    out = np.tensordot(mh, img, axes=(1, 0))
    out = np.tensordot(mw, out, axes=(1, 1))
    return np.swapaxes(out, 0, 1)


def thumbnail(frame):
    """80 x 48 grayscale area-averaged thumbnail in [0, 1], flattened."""
    f = np.asarray(frame)
    h, w = f.shape[:2]
    if f.dtype == np.uint8 and h % THUMB_H == 0 and w % THUMB_W == 0:
        # integer block sums: rows first on contiguous memory, then columns
        fh, fw = h // THUMB_H, w // THUMB_W
        acc = np.uint16 if fh * 255 < 2 ** 16 else np.uint32
        rows = np.add.reduce(f.reshape(THUMB_H, fh, w * 3), axis=1, dtype=acc)
        sums = rows.reshape(THUMB_H, THUMB_W, fw, 3).sum(axis=2, dtype=np.uint32)
        return (sums @ GRAY).reshape(-1) / (fh * fw * 255.0)
    scale = 1.0 / 255.0 if f.dtype == np.uint8 else 1.0
    small = area_resize(f.astype(np.float64), THUMB_H, THUMB_W)
    return (small @ GRAY).reshape(-1) * scale


def crop_resize(frame, box, out_w=ROI_PATCH_W, out_h=ROI_PATCH_H):
    """Bilinear resample of ``box`` to an ``out_h x out_w x 3`` patch.

    Output pixel centres map to evenly spaced points across the box; when
    the box is pixel-aligned and exactly out_w x out_h, samples land on
    source pixel centres and the crop is exact.
    """
    box = box if isinstance(box, RoiBox) else RoiBox(*box)
    f = np.asarray(frame)
    # gather first, convert after: 8-bit frames are never scaled whole
    scale = 1.0 / 255.0 if f.dtype == np.uint8 else 1.0
    H, W = f.shape[:2]
    x0, y0, x1, y1 = box.corners_px(W, H)
    bw, bh = x1 - x0, y1 - y0
    if round(bw) < 1 or round(bh) < 1:
        raise DegenerateBoxError(f"box spans {bw:.2f} x {bh:.2f} px; nothing to crop")
    xs = _snap(x0 + (np.arange(out_w) + 0.5) * (bw / out_w) - 0.5)
    ys = _snap(y0 + (np.arange(out_h) + 0.5) * (bh / out_h) - 0.5)
    xs = np.clip(xs, 0, W - 1)
    ys = np.clip(ys, 0, H - 1)
    xi = np.minimum(np.floor(xs).astype(int), W - 2) if W > 1 else np.zeros(out_w, int)
    yi = np.minimum(np.floor(ys).astype(int), H - 2) if H > 1 else np.zeros(out_h, int)
    ax = (xs - xi)[None, :, None]
    ay = (ys - yi)[:, None, None]
    xj = np.minimum(xi + 1, W - 1)
    yj = np.minimum(yi + 1, H - 1)
    ri, rj = f[yi], f[yj]
    top = ri[:, xi] * (1 - ax) + ri[:, xj] * ax
    bot = rj[:, xi] * (1 - ax) + rj[:, xj] * ax
    out = (top * (1 - ay) + bot * ay) * scale
    return np.clip(out, 0.0, 1.0)


def _snap(v, tol=1e-9):
    r = np.round(v)
    return np.where(np.abs(v - r) < tol, r, v)


# --------------------------------------------------------------------------
# localiser

@dataclass
class RoiHyper:
    learning_rate: float = 0.004
    weight_decay: float = 0.00005
    momentum: float = 0.9
    epochs: int = 80
    batch_size: int = 32
    hidden: tuple = (256, 64)
    seed: int = 0


@dataclass
class RoiModel:
    net: nn.Network
    feat_mean: np.ndarray
    feat_scale: np.ndarray
    target_mean: np.ndarray
    target_scale: np.ndarray
    hyper: RoiHyper = field(default_factory=RoiHyper)
    loss_curve: list = field(default_factory=list)

    def raw_predict(self, thumbs):
        z = (np.atleast_2d(thumbs) - self.feat_mean) / self.feat_scale
        return self.net.forward(z, "infer") * self.target_scale + self.target_mean

    def extra(self):
        return {"kind": "roi", "feat_mean": self.feat_mean.tolist(),
                "feat_scale": self.feat_scale.tolist(),
                "target_mean": self.target_mean.tolist(),
                "target_scale": self.target_scale.tolist(), "hyper": asdict(self.hyper)}

    @classmethod
    def from_saved(cls, net, extra):
        hyper = extra.get("hyper", {})
        hyper["hidden"] = tuple(hyper.get("hidden", (256, 64)))
        return cls(net, np.array(extra["feat_mean"]), np.array(extra["feat_scale"]),
                   np.array(extra["target_mean"]), np.array(extra["target_scale"]),
                   RoiHyper(**hyper))


def build_r(seed=0, hidden=(256, 64)):
    widths = [THUMB_W * THUMB_H, *hidden, 4]
    return nn.Network.mlp(widths, seed=seed, hidden=("leaky_relu",), batchnorm=True, role="R")


def roi_loss(pred, boxes):
    """Sum over samples of the squared coordinate error."""
    d = np.asarray(pred) - np.asarray(boxes)
    return float(np.sum(d * d))


def train_roi(thumbs, boxes, hyper: RoiHyper | None = None, log=None) -> RoiModel:
    """Fit the localiser on thumbnails (N x 3840) and their boxes (N x 4).

    Inputs are standardized per pixel; targets per coordinate. The optimized
    objective is the squared error in standardized coordinates, which has
    the same zero set as the raw coordinate loss. ``loss_curve`` records the
    raw-coordinate mean squared error per epoch, starting before any update.
    """
    hyper = hyper or RoiHyper()
    x = np.asarray(thumbs, dtype=np.float64)
    y = np.asarray(boxes, dtype=np.float64)
    if len(x) < 1 or len(x) != len(y):
        raise ValueError("need at least one frame and one box per frame")
    feat_mean = x.mean(axis=0)
    # one shared scale keeps relative pixel contrast; tiny sets fall back to 1
    spread = x.std()
    feat_scale = np.full(x.shape[1], spread * np.sqrt(x.shape[1]) if spread > 0 else 1.0)
    target_mean = y.mean(axis=0)
    target_scale = y.std(axis=0)
    target_scale[target_scale < 1e-6] = 1.0
    xz = (x - feat_mean) / feat_scale
    yz = (y - target_mean) / target_scale
    net = build_r(hyper.seed, hyper.hidden)
    model = RoiModel(net, feat_mean, feat_scale, target_mean, target_scale, hyper)
    opt = nn.SGD(hyper.learning_rate, hyper.momentum, hyper.weight_decay)
    rng = np.random.default_rng(hyper.seed)
    best = net.copy()

    def raw_mse():
        return roi_loss(model.raw_predict(x), y) / len(x)

    model.loss_curve.append(raw_mse())
    for epoch in range(hyper.epochs):
        for idx in nn.minibatches(len(x), hyper.batch_size, rng):
            nn.train_step(net, opt, xz[idx], yz[idx])
        value = raw_mse()
        if not np.isfinite(value):
            model.net = best
            raise nn.TrainingDiverged(f"localiser loss became {value} in epoch {epoch}")
        best = net.copy()
        model.loss_curve.append(value)
        if log:
            log(f"roi epoch {epoch + 1}/{hyper.epochs} mse {value:.3e}")
    return model


def detect_roi(model: RoiModel, frame) -> RoiBox:
    return clamp_box(model.raw_predict(thumbnail(frame))[0])


def detect_many(model: RoiModel, frames) -> list:
    thumbs = np.stack([thumbnail(f) for f in frames])
    return [clamp_box(r) for r in model.raw_predict(thumbs)]


def save_roi_model(model: RoiModel, path):
    nn.save_params(model.net, path, extra=model.extra())


def load_roi_model(path) -> RoiModel:
    net, extra = nn.load_params(path)
    if extra.get("kind") != "roi":
        raise nn.CorruptWeightsError(f"{path} does not hold a RoI localiser")
    return RoiModel.from_saved(net, extra)


def write_labels(path, boxes):
    import json

    rows = [{"frame_index": i, "cx": float(b[0]), "cy": float(b[1]),
             "w": float(b[2]), "h": float(b[3])} for i, b in enumerate(boxes)]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1)


def read_labels(path):
    import json

    with open(path) as fh:
        rows = json.load(fh)
    rows = sorted(rows, key=lambda r: r["frame_index"])
    return np.array([[r["cx"], r["cy"], r["w"], r["h"]] for r in rows])
