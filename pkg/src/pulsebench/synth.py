"""Synthetic face clips with a known blood-volume pulse.

A clip is a moving elliptical "face" on a textured background. Skin pixels
carry ``skin_base + pulse_gain * bvp(t)`` plus a static per-pixel texture;
the region of interest (RoI) is a fixed-size rectangle on the mid-face,
clear of the dark eye and mouth features. Frames are rendered lazily and
deterministically from ``(scene, frame index)`` and quantized to 8 bits so a
clip round-trips bit-exactly through its file format.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

CLIP_FORMAT = "pulsebench-clip-v1"

# face geometry in normalized frame units, relative to the RoI centre
FACE_DY = 0.03
FACE_AX = 0.21
FACE_AY = 0.36
EYE_DX, EYE_DY, EYE_RX, EYE_RY = 0.08, -0.118, 0.035, 0.018
MOUTH_DY, MOUTH_RX, MOUTH_RY = 0.16, 0.07, 0.02
FEATURE_RGB = (0.12, 0.08, 0.08)
ROI_W = 224 / 800
ROI_H = 74 / 480


@dataclass
class BvpSpec:
    hr_bpm: float
    fps: float = 22.0
    length_frames: int = 660
    harmonic_amplitudes: tuple = (1.0, 0.3, 0.1)
    phase: float = 0.0

    def __post_init__(self):
        if not 40.0 <= self.hr_bpm <= 180.0:
            raise ValueError(f"hr_bpm {self.hr_bpm} outside [40, 180]")
        if self.fps <= 0 or self.length_frames < 1:
            raise ValueError("fps and length_frames must be positive")
        if self.hr_bpm / 60.0 >= self.fps / 2.0:
            raise ValueError(
                f"heart rate {self.hr_bpm / 60.0:.3f} Hz violates Nyquist for {self.fps} fps"
            )


def gen_bvp(spec: BvpSpec) -> np.ndarray:
    """Fundamental plus harmonics, scaled by the amplitude sum so values stay in [-1, 1]."""
    t = np.arange(spec.length_frames) / spec.fps
    f = spec.hr_bpm / 60.0
    amps = [float(a) for a in spec.harmonic_amplitudes]
    out = np.zeros(spec.length_frames)
    total = sum(abs(a) for a in amps)
    if total == 0:
        return out
    for k, a in enumerate(amps, start=1):
        if a == 0 or k * f >= spec.fps / 2.0:
            continue
        out += a * np.sin(2 * np.pi * k * f * t + k * spec.phase)
    return out / total


@dataclass
class Occlusion:
    rect: tuple  # (x0, y0, x1, y1) normalized
    start: int = 0
    stop: int | None = None
    color: tuple = (0.0, 0.0, 0.0)

    def pixels(self, frame_w, frame_h):
        x0, y0, x1, y1 = self.rect
        if not (0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1):
            raise ValueError(f"occlusion rectangle {self.rect} outside the frame")
        return (int(round(x0 * frame_w)), int(round(y0 * frame_h)),
                int(round(x1 * frame_w)), int(round(y1 * frame_h)))

    def active(self, t):
        return t >= self.start and (self.stop is None or t < self.stop)


@dataclass
class SceneSpec:
    frame_w: int = 800
    frame_h: int = 480
    fps: float = 22.0
    skin_base_rgb: tuple = (0.75, 0.5, 0.4)
    pulse_gain_rgb: tuple = (0.004, 0.01, 0.006)
    background_rgb: tuple = (0.3, 0.33, 0.38)
    roi_trajectory: np.ndarray | None = None  # (T, 4) rows of (cx, cy, w, h)
    noise_sigma: float = 0.0
    texture_sd: float = 0.02
    occlusion: Occlusion | None = None
    seed: int = 0

    def validate(self, n_frames=None):
        if self.frame_w < 8 or self.frame_h < 8 or self.fps <= 0:
            raise ValueError("invalid frame geometry or fps")
        if self.noise_sigma < 0 or self.texture_sd < 0:
            raise ValueError("noise levels must be non-negative")
        if min(self.pulse_gain_rgb) < 0:
            raise ValueError("pulse gains must be non-negative")
        traj = self.trajectory(n_frames)
        lo = traj[:, :2] - traj[:, 2:] / 2
        hi = traj[:, :2] + traj[:, 2:] / 2
        if np.any(lo < -1e-12) or np.any(hi > 1 + 1e-12) or np.any(traj[:, 2:] <= 0):
            raise ValueError("RoI trajectory leaves the frame")
        if self.occlusion is not None:
            self.occlusion.pixels(self.frame_w, self.frame_h)
        return traj

    def trajectory(self, n_frames=None):
        if self.roi_trajectory is None:
            n = 1 if n_frames is None else n_frames
            return np.tile([0.5, 0.45, ROI_W, ROI_H], (n, 1))
        traj = np.asarray(self.roi_trajectory, dtype=np.float64)
        if traj.ndim != 2 or traj.shape[1] != 4:
            raise ValueError("roi_trajectory must have shape (T, 4)")
        if n_frames is not None and len(traj) != n_frames:
            raise ValueError(f"trajectory has {len(traj)} rows, clip has {n_frames} frames")
        return traj


def static_trajectory(n, cx=0.5, cy=0.45):
    return np.tile([cx, cy, ROI_W, ROI_H], (n, 1))


def random_trajectory(n, rng, fps=22.0, amplitude=0.02):
    """Slow head drift: two sinusoids below 0.3 Hz around a random anchor."""
    cx0 = rng.uniform(0.35, 0.65)
    cy0 = rng.uniform(0.4, 0.52)
    t = np.arange(n) / fps
    out = static_trajectory(n, cx0, cy0)
    for axis in (0, 1):
        for _ in range(2):
            f = rng.uniform(0.03, 0.3)
            out[:, axis] += amplitude / 2 * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return out


def random_box(rng):
    """A single RoI box anywhere the whole face still fits in frame."""
    return np.array([rng.uniform(0.26, 0.74), rng.uniform(0.36, 0.58), ROI_W, ROI_H])


def roi_pixel_window(box, frame_w, frame_h):
    cx, cy, w, h = box
    x0 = int(round((cx - w / 2) * frame_w))
    x1 = int(round((cx + w / 2) * frame_w))
    y0 = int(round((cy - h / 2) * frame_h))
    y1 = int(round((cy + h / 2) * frame_h))
    return x0, y0, x1, y1


class _SceneAssets:
    """Per-scene static images (background, face texture)."""

    def __init__(self, scene: SceneSpec):
        W, H = scene.frame_w, scene.frame_h
        rng = np.random.default_rng([scene.seed, 0])
        yy = np.linspace(-0.5, 0.5, H)[:, None, None]
        xx = np.linspace(-0.5, 0.5, W)[None, :, None]
        tilt = rng.uniform(-0.08, 0.08, size=(2, 3))
        bg = np.asarray(scene.background_rgb) + tilt[0] * yy + tilt[1] * xx
        noise = rng.standard_normal((H, W, 3), dtype=np.float32)
        # stored in 8-bit units with the rounding offset folded in
        self.background = ((bg + scene.texture_sd * noise) * 255.0 + 0.5).astype(np.float32)
        self.tex_h = 2 * int(math.ceil(FACE_AY * H)) + 12
        self.tex_w = 2 * int(math.ceil(FACE_AX * W)) + 12
        self.texture = scene.texture_sd * rng.standard_normal((self.tex_h, self.tex_w, 3))
        integ = np.zeros((self.tex_h + 1, self.tex_w + 1, 3))
        integ[1:, 1:] = self.texture.cumsum(0).cumsum(1)
        self.texture_integral = integ

    def tex_origin(self, fx, fy):
        return int(round(fy)) - self.tex_h // 2, int(round(fx)) - self.tex_w // 2


def _soft_ellipse(xs, ys, cx, cy, rx, ry):
    dx = (xs[None, :] - cx) / rx
    dy = (ys[:, None] - cy) / ry
    r = np.sqrt(dx * dx + dy * dy)
    return np.clip((1.0 - r) * min(rx, ry) + 0.5, 0.0, 1.0)


class Clip:
    """A rendered (or loaded) clip with its ground truth.

    ``frame(i)`` returns an H x W x 3 float image in [0, 1]; frames are
    produced on demand from ``frame_source(i) -> image``.
    """

    def __init__(self, n_frames, frame_w, frame_h, fps, truth_roi, truth_signal,
                 truth_hr_bpm, frame_source, seed=0, meta=None, u8_source=False):
        self.n_frames = int(n_frames)
        self.frame_w = int(frame_w)
        self.frame_h = int(frame_h)
        self.fps = float(fps)
        self.truth_roi = np.asarray(truth_roi, dtype=np.float64)
        self.truth_signal = np.asarray(truth_signal, dtype=np.float64)
        self.truth_hr_bpm = float(truth_hr_bpm)
        self.seed = seed
        self.meta = meta or {}
        self._source = frame_source
        self._u8 = u8_source
        self.clean = None
        if len(self.truth_roi) != self.n_frames or len(self.truth_signal) != self.n_frames:
            raise ValueError("truth arrays and frame count disagree")

    def __len__(self):
        return self.n_frames

    def frame(self, i):
        if not 0 <= i < self.n_frames:
            raise IndexError(i)
        img = self._source(i)
        return img / 255.0 if self._u8 else img

    def frame_u8(self, i):
        if not 0 <= i < self.n_frames:
            raise IndexError(i)
        img = self._source(i)
        return img if self._u8 else quantize(img)

    def frames(self, start=0, stop=None):
        stop = self.n_frames if stop is None else stop
        for i in range(start, stop):
            yield self.frame(i)

    def head(self, n):
        """The first ``n`` frames as a new clip sharing the same source."""
        n = min(n, self.n_frames)
        return Clip(n, self.frame_w, self.frame_h, self.fps, self.truth_roi[:n],
                    self.truth_signal[:n], self.truth_hr_bpm, self._source, self.seed, self.meta,
                    self._u8)


def quantize(img):
    return np.clip(np.asarray(img) * 255.0 + 0.5, 0, 255).astype(np.uint8)


def clean_signal(scene: SceneSpec, bvp: np.ndarray) -> np.ndarray:
    """Per-frame RGB means of the noise-free RoI, computed without rendering."""
    bvp = np.asarray(bvp, dtype=np.float64)
    traj = scene.validate(len(bvp))
    assets = _SceneAssets(scene)
    return _truth_signal(scene, assets, traj, bvp)


def _truth_signal(scene, assets, traj, bvp):
    W, H = scene.frame_w, scene.frame_h
    base = np.asarray(scene.skin_base_rgb, dtype=np.float64)
    gain = np.asarray(scene.pulse_gain_rgb, dtype=np.float64)
    integ = assets.texture_integral
    tex_mean = np.empty((len(bvp), 3))
    for t, box in enumerate(traj):
        fx, fy = box[0] * W, (box[1] + FACE_DY) * H
        oy, ox = assets.tex_origin(fx, fy)
        x0, y0, x1, y1 = roi_pixel_window(box, W, H)
        a, b, c, d = y0 - oy, y1 - oy, x0 - ox, x1 - ox
        s = integ[b, d] - integ[a, d] - integ[b, c] + integ[a, c]
        tex_mean[t] = s / ((y1 - y0) * (x1 - x0))
    return base + gain * bvp[:, None] + tex_mean


def render_clip(scene: SceneSpec, bvp, hr_bpm=None) -> Clip:
    """Bind a scene and a pulse waveform into a lazily rendered :class:`Clip`."""
    bvp = np.asarray(bvp, dtype=np.float64)
    n = len(bvp)
    traj = scene.validate(n)
    assets = _SceneAssets(scene)
    truth_signal = _truth_signal(scene, assets, traj, bvp)
    W, H = scene.frame_w, scene.frame_h
    base = np.asarray(scene.skin_base_rgb, dtype=np.float64)
    gain = np.asarray(scene.pulse_gain_rgb, dtype=np.float64)
    feature = np.asarray(FEATURE_RGB)
    occ = scene.occlusion
    occ_px = occ.pixels(W, H) if occ is not None else None

    def source(t):
        img = assets.background.copy()
        box = traj[t]
        fx, fy = box[0] * W, (box[1] + FACE_DY) * H
        ax, ay = FACE_AX * W, FACE_AY * H
        x0, x1 = max(0, int(fx - ax - 2)), min(W, int(math.ceil(fx + ax + 2)))
        y0, y1 = max(0, int(fy - ay - 2)), min(H, int(math.ceil(fy + ay + 2)))
        xs = np.arange(x0, x1) + 0.5
        ys = np.arange(y0, y1) + 0.5
        alpha = _soft_ellipse(xs, ys, fx, fy, ax, ay)
        beta = np.zeros_like(alpha)
        for ex in (-EYE_DX, EYE_DX):
            beta = np.maximum(beta, _soft_ellipse(
                xs, ys, fx + ex * W, fy + (EYE_DY - FACE_DY) * H, EYE_RX * W, EYE_RY * H))
        beta = np.maximum(beta, _soft_ellipse(
            xs, ys, fx, fy + (MOUTH_DY - FACE_DY) * H, MOUTH_RX * W, MOUTH_RY * H))
        oy, ox = assets.tex_origin(fx, fy)
        tex = assets.texture[y0 - oy:y1 - oy, x0 - ox:x1 - ox]
        skin = base + gain * bvp[t] + tex
        face = skin * (1 - beta[..., None]) + feature * beta[..., None]
        face = face * 255.0 + 0.5
        a = alpha[..., None]
        region = img[y0:y1, x0:x1]
        region += (face - region) * a
        if occ is not None and occ.active(t):
            px0, py0, px1, py1 = occ_px
            img[py0:py1, px0:px1] = np.asarray(occ.color) * 255.0 + 0.5
        if scene.noise_sigma > 0:
            rng = np.random.default_rng([scene.seed, 1, t])
            noise = rng.standard_normal(img.shape, dtype=np.float32)
            noise *= np.float32(255.0 * scene.noise_sigma)
            img += noise
        np.clip(img, 0, 255, out=img)
        return img.astype(np.uint8)

    return Clip(n, W, H, scene.fps, traj, truth_signal,
                hr_bpm if hr_bpm is not None else float("nan"), source, scene.seed,
                meta={"scene": scene_to_json(scene)}, u8_source=True)


# --------------------------------------------------------------------------
# corruption

class Corrupted(NamedTuple):
    degraded: object
    clean: object


def corrupt(target, kind, *, sigma=0.0, rect=None, k=3, seed=0, color=(0.0, 0.0, 0.0),
            relative=False):
    """Degrade a clip, a single image, or a signal array.

    ``kind`` is ``"gaussian"`` (i.i.d. N(0, sigma^2)), ``"occlusion"``
    (normalized ``rect`` filled with ``color``; images/clips only) or
    ``"blur"`` (k x k box filter; images/clips only). For signals,
    ``relative=True`` scales the noise by each row's temporal mean.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if isinstance(target, Clip):
        return Corrupted(_corrupt_clip(target, kind, sigma, rect, k, seed, color), target)
    arr = np.asarray(target, dtype=np.float64)
    if kind == "gaussian":
        if sigma == 0:
            return Corrupted(arr.copy(), target)
        rng = np.random.default_rng(seed)
        noise = sigma * rng.standard_normal(arr.shape)
        if relative:
            noise *= np.abs(arr.mean(axis=-1, keepdims=True))
        out = arr + noise
        if arr.ndim == 3:
            out = np.clip(out, 0.0, 1.0)
        return Corrupted(out, target)
    if arr.ndim != 3:
        raise ValueError(f"{kind} corruption needs an H x W x 3 image")
    if kind == "occlusion":
        occ = Occlusion(tuple(rect), color=tuple(color))
        x0, y0, x1, y1 = occ.pixels(arr.shape[1], arr.shape[0])
        out = arr.copy()
        out[y0:y1, x0:x1] = color
        return Corrupted(out, target)
    if kind == "blur":
        return Corrupted(ndimage.uniform_filter(arr, size=(k, k, 1), mode="nearest"), target)
    raise ValueError(f"unknown corruption kind {kind!r}")


def _corrupt_clip(clip, kind, sigma, rect, k, seed, color):
    if kind == "occlusion":
        Occlusion(tuple(rect)).pixels(clip.frame_w, clip.frame_h)

    def source(t):
        img = clip.frame(t)
        if kind == "gaussian":
            if sigma == 0:
                return img
            rng = np.random.default_rng([seed, 2, t])
            return np.clip(img + sigma * rng.standard_normal(img.shape), 0.0, 1.0)
        return corrupt(img, kind, rect=rect, k=k, color=color).degraded

    out = Clip(clip.n_frames, clip.frame_w, clip.frame_h, clip.fps, clip.truth_roi,
               clip.truth_signal, clip.truth_hr_bpm, source, clip.seed, dict(clip.meta))
    out.clean = clip
    return out


# --------------------------------------------------------------------------
# datasets and files

def scene_to_json(scene: SceneSpec):
    d = asdict(scene)
    d.pop("roi_trajectory")
    return d


def make_clip(seed, hr_bpm, duration_s=30.0, fps=22.0, frame_w=800, frame_h=480,
              noise_sigma=0.0, skin_jitter=0.03, motion=0.02, **scene_kw) -> Clip:
    """Deterministic clip from ``(seed, hr_bpm)``: phase, drift, skin tone and texture follow the seed."""
    n = int(round(duration_s * fps))
    rng = np.random.default_rng([seed, 7])
    phase = rng.uniform(0, 2 * np.pi)
    skin = np.asarray(scene_kw.pop("skin_base_rgb", SceneSpec.skin_base_rgb))
    skin = tuple(np.clip(skin + rng.uniform(-skin_jitter, skin_jitter, 3), 0.05, 0.95))
    traj = random_trajectory(n, rng, fps, amplitude=motion)
    scene = SceneSpec(frame_w=frame_w, frame_h=frame_h, fps=fps, skin_base_rgb=skin,
                      roi_trajectory=traj, noise_sigma=noise_sigma, seed=seed, **scene_kw)
    bvp = gen_bvp(BvpSpec(hr_bpm, fps, n, phase=phase))
    return render_clip(scene, bvp, hr_bpm)


def clip_signal_only(seed, hr_bpm, duration_s=30.0, fps=22.0, skin_jitter=0.03, motion=0.02):
    """Clean RoI signal of :func:`make_clip`'s clip without rendering any frame."""
    n = int(round(duration_s * fps))
    rng = np.random.default_rng([seed, 7])
    phase = rng.uniform(0, 2 * np.pi)
    skin = np.clip(np.asarray(SceneSpec.skin_base_rgb) + rng.uniform(-skin_jitter, skin_jitter, 3),
                   0.05, 0.95)
    traj = random_trajectory(n, rng, fps, amplitude=motion)
    # texture only enters through its RoI mean, so a small frame keeps this cheap
    scene = SceneSpec(frame_w=320, frame_h=192, fps=fps, skin_base_rgb=tuple(skin),
                      roi_trajectory=traj, seed=seed)
    return clean_signal(scene, gen_bvp(BvpSpec(hr_bpm, fps, n, phase=phase)))


def save_clip(clip: Clip, path):
    header = {
        "format": CLIP_FORMAT,
        "width": clip.frame_w,
        "height": clip.frame_h,
        "n_frames": clip.n_frames,
        "fps": clip.fps,
        "truth_hr_bpm": clip.truth_hr_bpm,
        "seed": clip.seed,
        "layout": "planar-rgb8",
        "truth_roi": clip.truth_roi.tolist(),
        "truth_signal": clip.truth_signal.tolist(),
        "meta": clip.meta,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for i in range(clip.n_frames):
            fh.write(np.ascontiguousarray(clip.frame_u8(i).transpose(2, 0, 1)).tobytes())


def load_clip(path) -> Clip:
    with open(path, "rb") as fh:
        line = fh.readline()
        offset = fh.tell()
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: unreadable clip header ({exc})") from None
    if header.get("format") != CLIP_FORMAT:
        raise ValueError(f"{path}: not a {CLIP_FORMAT} file")
    n, W, H = header["n_frames"], header["width"], header["height"]
    expected = n * 3 * W * H
    actual = Path(path).stat().st_size - offset
    if actual != expected:
        raise ValueError(f"{path}: frame data is {actual} bytes, expected {expected}")
    data = np.memmap(path, dtype=np.uint8, mode="r", offset=offset, shape=(n, 3, H, W))

    def source(t):
        return np.ascontiguousarray(data[t].transpose(1, 2, 0))

    return Clip(n, W, H, header["fps"], header["truth_roi"], header["truth_signal"],
                header["truth_hr_bpm"], source, header.get("seed", 0), header.get("meta"),
                u8_source=True)


@dataclass
class DatasetSpec:
    n_clips: int
    hr_range: tuple = (50.0, 110.0)
    duration_s: float = 30.0
    fps: float = 22.0
    frame_w: int = 800
    frame_h: int = 480
    noise_sigma: float = 0.0
    seed: int = 0
    scene_kw: dict = field(default_factory=dict)


def dataset_rows(spec: DatasetSpec):
    """Manifest rows (without paths): HRs uniform in the range, one seed per clip."""
    if spec.n_clips < 1:
        raise ValueError("n_clips must be at least 1")
    lo, hi = spec.hr_range
    rng = np.random.default_rng(spec.seed)
    hrs = rng.uniform(lo, hi, spec.n_clips)
    seeds = np.random.SeedSequence(spec.seed).generate_state(spec.n_clips)
    n_frames = int(round(spec.duration_s * spec.fps))
    return [{"fps": spec.fps, "n_frames": n_frames, "truth_hr_bpm": float(h), "seed": int(s)}
            for h, s in zip(hrs, seeds)]


def clip_from_row(row, spec: DatasetSpec) -> Clip:
    return make_clip(row["seed"], row["truth_hr_bpm"], row["n_frames"] / row["fps"], row["fps"],
                     spec.frame_w, spec.frame_h, spec.noise_sigma, **spec.scene_kw)


def gen_dataset(spec: DatasetSpec, out_dir):
    """Render every clip to ``out_dir`` and write ``manifest.json``; returns the manifest rows."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from None
    rows = dataset_rows(spec)
    for i, row in enumerate(rows):
        name = f"clip_{i:04d}.clip"
        save_clip(clip_from_row(row, spec), out / name)
        row["clip_path"] = name
    manifest = [{"clip_path": r["clip_path"], "fps": r["fps"], "n_frames": r["n_frames"],
                 "truth_hr_bpm": r["truth_hr_bpm"], "seed": r["seed"]} for r in rows]
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    (out / "dataset.json").write_text(json.dumps(asdict(spec), indent=1))
    return manifest


def read_manifest(path):
    path = Path(path)
    rows = json.loads(path.read_text())
    for r in rows:
        p = Path(r["clip_path"])
        r["clip_path"] = str(p if p.is_absolute() else path.parent / p)
    return rows


def roi_corpus(n_frames, seed=0, frames_per_scene=10, frame_w=800, frame_h=480,
               noise_sigma=0.01, skin_jitter=0.08):
    """Labelled frames at random face positions for localiser training.

    Yields ``(uint8 frame, box)``. Each scene (background, skin tone,
    texture) is shared by ``frames_per_scene`` random positions.
    """
    ss = np.random.SeedSequence(seed)
    n_scenes = -(-n_frames // frames_per_scene)
    done = 0
    for s in ss.generate_state(n_scenes):
        rng = np.random.default_rng(int(s))
        m = min(frames_per_scene, n_frames - done)
        traj = np.stack([random_box(rng) for _ in range(m)])
        skin = np.clip(np.asarray(SceneSpec.skin_base_rgb) + rng.uniform(-skin_jitter, skin_jitter, 3),
                       0.05, 0.95)
        bg = np.clip(np.asarray(SceneSpec.background_rgb) + rng.uniform(-0.15, 0.15, 3), 0.05, 0.95)
        scene = SceneSpec(frame_w=frame_w, frame_h=frame_h, skin_base_rgb=tuple(skin),
                          background_rgb=tuple(bg), roi_trajectory=traj,
                          noise_sigma=noise_sigma, seed=int(s))
        bvp = gen_bvp(BvpSpec(rng.uniform(50, 110), length_frames=m, phase=rng.uniform(0, 6.28)))
        clip = render_clip(scene, bvp)
        for i in range(m):
            yield clip.frame_u8(i), traj[i]
        done += m
