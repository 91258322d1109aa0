"""Agreement measures between estimated and reference heart rates."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import special


class UndefinedCorrelation(ValueError):
    pass


@dataclass
class MetricsReport:
    n: int
    d: list          # D_i = estimate - truth, bpm
    m_d: float       # mean error
    sd_d: float      # sample sd of errors (n - 1 divisor)
    rmse_d: float
    me_d: float      # mean of D_i / truth_i, a signed fraction
    r: float | None  # None when undefined
    p: float | None

    def to_json(self, **kw):
        return json.dumps(asdict(self), **kw)

    def lines(self):
        r = "undefined" if self.r is None else f"{self.r:.4f}"
        p = "undefined" if self.p is None else f"{self.p:.3g}"
        return [
            f"n        {self.n}",
            f"M_D      {self.m_d:.4f} bpm",
            f"SD_D     {self.sd_d:.4f} bpm",
            f"RMSE_D   {self.rmse_d:.4f} bpm",
            f"Me_D     {self.me_d:.6f} ({100 * self.me_d:.3f}%)",
            f"r        {r}",
            f"p        {p}",
        ]


def pearson(estimates, truths):
    """Sample Pearson r and its two-sided p-value (Student t, n - 2 dof)."""
    x = np.asarray(estimates, dtype=np.float64)
    y = np.asarray(truths, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("series lengths differ")
    n = len(x)
    if n < 3:
        raise ValueError("pearson needs at least 3 pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelation("correlation is undefined for a constant series")
    r = float(np.clip(np.dot(dx, dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    return r, _t_pvalue(r, n - 2)


def _t_pvalue(r, dof):
    if abs(r) >= 1.0:
        return 0.0
    t2 = r * r * dof / (1.0 - r * r)
    # two-sided tail of Student t: I_{dof/(dof+t^2)}(dof/2, 1/2)
    return float(special.betainc(dof / 2.0, 0.5, dof / (dof + t2)))


def error_stats(estimates, truths) -> MetricsReport:
    x = np.asarray(estimates, dtype=np.float64)
    y = np.asarray(truths, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"estimates {x.shape} and truths {y.shape} must be equal-length vectors")
    n = len(x)
    if n < 2:
        raise ValueError("need at least two pairs")
    if np.any(y == 0):
        raise ValueError("Me_D is undefined when a truth value is zero")
    d = x - y
    m = float(d.mean())
    sd = float(d.std(ddof=1))
    rmse = float(math.sqrt(np.mean(d * d)))
    me = float(np.mean(d / y))
    r = p = None
    if np.ptp(x) > 0 and np.ptp(y) > 0:
        if n >= 3:
            r, p = pearson(x, y)
        else:
            r = float(np.sign((x[1] - x[0]) * (y[1] - y[0])))
    return MetricsReport(n, d.tolist(), m, sd, rmse, me, r, p)


def read_report(path) -> MetricsReport:
    with open(path) as fh:
        return MetricsReport(**json.load(fh))
