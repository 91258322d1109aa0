"""Heart-rate regression from a colour-signal window, plus K-fold cross-validation.

The network is dense(512) + BN + ReLU, dense(128) + BN + ReLU, dense(1),
trained on the mean squared error against the clip's average heart rate.

Inputs are preprocessed in two steps: each row loses its temporal mean
(skin tone carries no rate information), then every feature is z-scored
with statistics of the training items. Targets are standardized too; the
statistics live in the model so predictions come back in bpm.

Training data are augmented with circular time shifts of each window. The
rate of a quasi-periodic signal does not depend on where the window starts,
and without this the network memorizes phase rather than frequency.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import nn
from .metrics import error_stats

WINDOW = 660
HR_CLAMP = (30.0, 220.0)


@dataclass
class EHyper:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.00005
    epochs: int = 30
    batch_size: int = 32
    shifts: int = 200
    window: int = WINDOW
    seed: int = 0


@dataclass
class EModel:
    net: nn.Network
    n_rows: int
    window: int
    feat_mean: np.ndarray
    feat_std: np.ndarray
    target_mean: float
    target_scale: float
    hyper: EHyper = field(default_factory=EHyper)
    loss_curve: list = field(default_factory=list)

    def normalize(self, z):
        return (z - self.feat_mean) / self.feat_std

    def predict_raw(self, signals):
        z = self.normalize(flatten_windows(signals, self.n_rows, self.window))
        return self.net.forward(z, "infer")[:, 0] * self.target_scale + self.target_mean

    def extra(self):
        return {"kind": "E", "n_rows": self.n_rows, "window": self.window,
                "feat_mean": self.feat_mean.tolist(), "feat_std": self.feat_std.tolist(),
                "target_mean": self.target_mean, "target_scale": self.target_scale,
                "hyper": asdict(self.hyper)}

    @classmethod
    def from_saved(cls, net, extra):
        return cls(net, extra["n_rows"], extra["window"], np.array(extra["feat_mean"]),
                   np.array(extra["feat_std"]), float(extra["target_mean"]),
                   float(extra["target_scale"]), EHyper(**extra.get("hyper", {})))


class HrEstimate(NamedTuple):
    bpm: float
    out_of_band: bool


def build_e(input_dim, seed=0) -> nn.Network:
    if input_dim < 1:
        raise ValueError("input_dim must be positive")
    return nn.Network.mlp([input_dim, 512, 128, 1], seed=seed, hidden=("relu",),
                          batchnorm=True, role="E")


def e_param_count(input_dim):
    """Trainable dense and batch-norm affine parameter counts of :func:`build_e`."""
    dense = (input_dim * 512 + 512) + (512 * 128 + 128) + (128 + 1)
    return dense, 2 * 512 + 2 * 128


def as_rows(sig):
    """(c, T) array from a ColorSignal, (c, T) or (T,) array."""
    values = getattr(sig, "values", sig)
    v = np.asarray(values, dtype=np.float64)
    return v[None, :] if v.ndim == 1 else v


def flatten_windows(signals, n_rows, window):
    """Stack signals into (N, n_rows * window), mean-removed per row.

    Longer signals contribute their first ``window`` samples.
    """
    out = np.empty((len(signals), n_rows * window))
    for i, s in enumerate(signals):
        v = as_rows(s)
        if v.shape[0] != n_rows:
            raise nn.ShapeError(f"signal {i} has {v.shape[0]} rows, model expects {n_rows}")
        if v.shape[1] < window:
            raise ValueError(f"signal {i} has {v.shape[1]} samples, need {window}")
        v = v[:, :window]
        out[i] = (v - v.mean(axis=1, keepdims=True)).reshape(-1)
    return out


def _shifted_copies(x, n_rows, window, shifts, rng):
    """``shifts`` circularly shifted copies of every row of x (shift shared across channels)."""
    if shifts <= 0:
        return x[:0]
    n = len(x)
    cube = x.reshape(n, n_rows, window)
    amounts = rng.integers(0, window, size=(shifts, n))
    cols = (np.arange(window)[None, None, :] - amounts[:, :, None]) % window
    out = np.take_along_axis(np.broadcast_to(cube, (shifts,) + cube.shape),
                             np.broadcast_to(cols[:, :, None, :], (shifts, n, n_rows, window)),
                             axis=3)
    return out.reshape(shifts * n, n_rows * window)


def train_e(signals, hr_bpm, hyper: EHyper | None = None, log=None) -> EModel:
    hyper = hyper or EHyper()
    y = np.asarray(hr_bpm, dtype=np.float64)
    if len(signals) != len(y) or len(y) < 1:
        raise ValueError("need one label per signal and at least one item")
    n_rows = as_rows(signals[0]).shape[0]
    x = flatten_windows(signals, n_rows, hyper.window)
    rng = np.random.default_rng(hyper.seed)
    feat_mean = x.mean(axis=0)
    feat_std = x.std(axis=0)
    feat_std[feat_std < 1e-12] = 1.0
    target_mean = float(y.mean())
    target_scale = float(y.std()) if y.std() > 1e-9 else 1.0
    net = build_e(x.shape[1], hyper.seed)
    model = EModel(net, n_rows, hyper.window, feat_mean, feat_std, target_mean, target_scale, hyper)

    xa = np.concatenate([x, _shifted_copies(x, n_rows, hyper.window, hyper.shifts, rng)])
    ya = np.tile(y, 1 + max(hyper.shifts, 0))
    xz = model.normalize(xa)
    yz = ((ya - target_mean) / target_scale)[:, None]
    opt = nn.SGD(hyper.learning_rate, hyper.momentum, hyper.weight_decay)
    single = len(xz) == 1
    for epoch in range(hyper.epochs):
        total = 0.0
        for idx in nn.minibatches(len(xz), hyper.batch_size, rng):
            if single:
                # batch statistics are undefined on one row; train on a duplicated pair
                idx = np.array([0, 0])
            total += nn.train_step(net, opt, xz[idx], yz[idx]) * len(idx)
        mse = total / max(len(xz), 2) * target_scale ** 2
        if not np.isfinite(mse):
            raise nn.TrainingDiverged(f"regressor loss became {mse} in epoch {epoch}")
        model.loss_curve.append(mse)
        if log:
            log(f"E epoch {epoch + 1}/{hyper.epochs} mse {mse:.3f} bpm^2")
    return model


def estimate_hr(model: EModel, sig) -> HrEstimate:
    value = float(model.predict_raw([sig])[0])
    lo, hi = HR_CLAMP
    if not np.isfinite(value):
        return HrEstimate(float("nan"), True)
    return HrEstimate(min(max(value, lo), hi), not lo <= value <= hi)


def estimate_many(model: EModel, signals):
    raw = model.predict_raw(signals)
    return np.clip(raw, *HR_CLAMP)


def save_e_model(model: EModel, path):
    nn.save_params(model.net, path, extra=model.extra())


def load_e_model(path) -> EModel:
    net, extra = nn.load_params(path)
    if extra.get("kind") != "E":
        raise nn.CorruptWeightsError(f"{path} does not hold a heart-rate regressor")
    return EModel.from_saved(net, extra)


# --------------------------------------------------------------------------
# cross-validation

def make_folds(n, k=3, seed=0):
    """Shuffle indices with ``seed``, then cut into k contiguous, near-equal folds."""
    if k < 2:
        raise ValueError("need at least two folds")
    if k > n:
        raise ValueError(f"cannot split {n} items into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass
class CVResult:
    rows: list            # dicts: clip_id, truth_bpm, pred_bpm, fold
    per_fold: list        # MetricsReport per fold (None if a fold is too small)
    pooled: object        # MetricsReport over all items
    models: list = field(default_factory=list)


def kfold_cv(signals, hr_bpm, k=3, seed=0, hyper: EHyper | None = None, clip_ids=None,
             folds=None, fit: Callable | None = None, predict: Callable | None = None,
             keep_models=False, log=None) -> CVResult:
    """Train on k-1 folds, predict the held-out fold, for every fold.

    ``fit(signals, labels)`` and ``predict(model, signals)`` default to the
    regressor; any other estimator can be cross-validated the same way.
    """
    y = np.asarray(hr_bpm, dtype=np.float64)
    n = len(y)
    if len(signals) != n:
        raise ValueError("need one label per signal")
    folds = make_folds(n, k, seed) if folds is None else [np.asarray(f) for f in folds]
    seen = np.concatenate(folds)
    if len(seen) != n or len(np.unique(seen)) != n:
        raise ValueError("folds must partition the items")
    fit = fit or (lambda s, t: train_e(s, t, hyper, log=log))
    predict = predict or estimate_many
    ids = list(clip_ids) if clip_ids is not None else [f"clip_{i:04d}" for i in range(n)]
    pred = np.empty(n)
    fold_of = np.empty(n, dtype=int)
    models = []
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(n), test)
        model = fit([signals[i] for i in train], y[train])
        pred[test] = predict(model, [signals[i] for i in test])
        fold_of[test] = f
        if keep_models:
            models.append(model)
        if log:
            rmse = float(np.sqrt(np.mean((pred[test] - y[test]) ** 2)))
            log(f"fold {f}: {len(train)} train / {len(test)} test, rmse {rmse:.3f} bpm")
    rows = [{"clip_id": ids[i], "truth_bpm": float(y[i]), "pred_bpm": float(pred[i]),
             "fold": int(fold_of[i])} for i in range(n)]
    per_fold = [error_stats(pred[t], y[t]) if len(t) >= 2 else None for t in folds]
    return CVResult(rows, per_fold, error_stats(pred, y), models)


PRED_FIELDS = ("clip_id", "truth_bpm", "pred_bpm", "fold")


def write_predictions(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=PRED_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({"clip_id": r["clip_id"], "truth_bpm": repr(float(r["truth_bpm"])),
                        "pred_bpm": repr(float(r["pred_bpm"])), "fold": r.get("fold", -1)})


def read_predictions(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    missing = set(PRED_FIELDS) - set(rows[0] if rows else PRED_FIELDS)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return [{"clip_id": r["clip_id"], "truth_bpm": float(r["truth_bpm"]),
             "pred_bpm": float(r["pred_bpm"]), "fold": int(r["fold"])} for r in rows]
