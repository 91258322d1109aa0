"""Classical pulse-rate estimation: detrend, band-pass, periodogram peak."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

MIN_SAMPLES = 128
MIN_PAD = 8192
PEAK_RATIO = 3.0


class NoDominantPeak(ValueError):
    pass


@dataclass(frozen=True)
class BandpassSpec:
    lo_hz: float = 0.7
    hi_hz: float = 4.0
    taps: int = 129

    def check(self, fps):
        if not 0 < self.lo_hz < self.hi_hz < fps / 2:
            raise ValueError(
                f"band [{self.lo_hz}, {self.hi_hz}] Hz must lie inside (0, {fps / 2}) Hz"
            )


def fir_taps(spec: BandpassSpec, fps, n_samples=None):
    taps = spec.taps
    if n_samples is not None and n_samples < 4 * taps:
        # largest odd length that still satisfies T >= 4 * taps
        taps = n_samples // 4
        taps = max(15, taps - (1 - taps % 2))
    return sps.firwin(taps, [spec.lo_hz, spec.hi_hz], pass_zero=False, fs=fps, window="hamming")


def bandpass(x, fps, spec: BandpassSpec = BandpassSpec()):
    """Zero-phase FIR band-pass of one row (or each row of a 2-D array).

    The mean is removed first, then the filter runs forward and backward;
    the result is re-centred so it is exactly zero-mean.
    """
    spec.check(fps)
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 4 * spec.taps:
        raise ValueError(f"need at least {4 * spec.taps} samples for {spec.taps} taps, got {n}")
    b = fir_taps(spec, fps)
    y = sps.filtfilt(b, [1.0], x - x.mean(axis=-1, keepdims=True), axis=-1)
    return y - y.mean(axis=-1, keepdims=True)


def pulse_row(sig):
    """The row used for rate estimation: G for RGB signals, mean of G rows for block signals."""
    z = np.asarray(sig, dtype=np.float64)
    if z.ndim == 1:
        return z
    c = z.shape[0]
    if c == 1:
        return z[0]
    if c % 3:
        raise ValueError(f"cannot pick a green row from {c} channels")
    return z[1::3].mean(axis=0)


def periodogram(x, fps, n_pad=MIN_PAD):
    n = len(x)
    nfft = max(n_pad, 1 << int(np.ceil(np.log2(n))))
    w = np.hanning(n)
    spec = np.abs(np.fft.rfft((x - x.mean()) * w, nfft)) ** 2
    freqs = np.fft.rfftfreq(nfft, 1.0 / fps)
    return freqs, spec


def estimate_hr_spectral(sig, fps, spec: BandpassSpec = BandpassSpec(), filtered=True,
                         strict=True):
    """Heart rate in bpm from the in-band periodogram maximum.

    Multi-row signals are reduced with :func:`pulse_row`. The peak bin is
    refined by a parabola through the log power of it and its neighbours.
    Raises :class:`NoDominantPeak` unless the peak exceeds 3x the in-band
    median power; with ``strict=False`` the maximum is returned regardless.
    """
    x = pulse_row(sig)
    n = len(x)
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {n}")
    spec.check(fps)
    x = x - x.mean()
    if filtered:
        b = fir_taps(spec, fps, n)
        if n > 3 * len(b):
            x = sps.filtfilt(b, [1.0], x)
    freqs, power = periodogram(x, fps)
    band = np.flatnonzero((freqs >= spec.lo_hz) & (freqs <= spec.hi_hz))
    p = power[band]
    k = int(np.argmax(p))
    med = np.median(p)
    if strict and (not p[k] > PEAK_RATIO * med or p[k] <= 1e-300):
        raise NoDominantPeak(f"no in-band peak above {PEAK_RATIO}x the median power")
    i = band[k]
    df = freqs[1] - freqs[0]
    f = freqs[i]
    if 0 < i < len(power) - 1 and power[i - 1] > 0 and power[i + 1] > 0:
        a, b_, c = np.log(power[i - 1]), np.log(power[i]), np.log(power[i + 1])
        denom = a - 2 * b_ + c
        if denom < 0:
            f += 0.5 * (a - c) / denom * df
    return 60.0 * f
