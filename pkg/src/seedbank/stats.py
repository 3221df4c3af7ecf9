"""Estimators, intervals and goodness-of-fit tests used by the checks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .errors import InvalidParameterError

__all__ = [
    "SummaryEstimate",
    "summarize",
    "ks_statistic",
    "chi_square_gof",
    "wilson_interval",
    "within_stderr",
]


@dataclass(frozen=True)
class SummaryEstimate:
    """Sample mean with its standard error.

    ``censored`` counts replicates that were excluded from ``mean`` because
    they hit a simulation horizon.
    """

    mean: float
    stderr: float
    count: int
    censored: int = 0

    def __post_init__(self):
        if self.stderr < 0:
            raise InvalidParameterError("stderr must be >= 0")
        if self.count < 0:
            raise InvalidParameterError("count must be >= 0")

    def z(self, target: float) -> float:
        """Signed distance to ``target`` in standard errors."""
        diff = self.mean - target
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "count": self.count, "censored": self.censored}


def summarize(values, censored: int = 0) -> SummaryEstimate:
    """Mean and standard error of ``values``."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return SummaryEstimate(mean=math.nan, stderr=0.0, count=0, censored=censored)
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return SummaryEstimate(mean=float(x.mean()), stderr=se, count=int(x.size), censored=censored)


def within_stderr(estimate: float, stderr: float, target: float, k: float = 3.0, slack: float = 0.0) -> bool:
    """``|estimate - target| <= k * stderr + slack``."""
    return abs(estimate - target) <= k * stderr + slack


def ks_statistic(samples, cdf: Callable) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov statistic against a continuous ``cdf``.

    ``samples`` must be sorted ascending and hold at least 10 values. The
    p-value uses the asymptotic Kolmogorov law with Stephens' small-sample
    correction ``sqrt(n) + 0.12 + 0.11/sqrt(n)``; it is conservative for
    ``n >= 50`` and for discretised samples.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.size
    if n < 10:
        raise InvalidParameterError(f"need at least 10 samples, got {n}")
    if np.any(np.diff(x) < 0):
        raise InvalidParameterError("samples must be sorted ascending")
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - f)
    d_minus = np.max(f - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    sn = math.sqrt(n)
    p = float(special.kolmogorov((sn + 0.12 + 0.11 / sn) * d))
    return d, min(max(p, 0.0), 1.0)


def chi_square_gof(observed, expected_probs, min_expected: float = 5.0) -> tuple[float, int, float]:
    """Pearson goodness of fit with tail pooling.

    Cells are scanned from the end and consecutive cells are pooled until
    the pooled expected count reaches ``min_expected``; a low-count
    remainder at the head joins its neighbour. Returns ``(statistic, dof, p_value)`` with
    ``dof = cells - 1``.
    """
    obs = np.asarray(observed, dtype=np.float64)
    probs = np.asarray(expected_probs, dtype=np.float64)
    if obs.shape != probs.shape or obs.ndim != 1:
        raise InvalidParameterError("observed and expected must be 1-d of equal length")
    total = obs.sum()
    if total <= 0:
        raise InvalidParameterError("all observed counts are zero")
    if np.any(probs < 0):
        raise InvalidParameterError("expected probabilities must be >= 0")
    # unassigned probability mass joins the last cell
    probs = probs.copy()
    probs[-1] += max(0.0, 1.0 - probs.sum())
    exp = probs * total

    cells_o: list[float] = []
    cells_e: list[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(obs[::-1], exp[::-1]):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if cells_e:
            cells_o[-1] += acc_o
            cells_e[-1] += acc_e
        else:
            cells_o.append(acc_o)
            cells_e.append(acc_e)
    dof = len(cells_e) - 1
    if dof < 1:
        raise InvalidParameterError("fewer than two cells remain after pooling (dof 0)")
    o = np.asarray(cells_o)
    e = np.asarray(cells_e)
    stat = float(np.sum((o - e) ** 2 / e))
    return stat, dof, float(special.chdtrc(dof, stat))


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise InvalidParameterError("need 0 <= successes <= trials and trials >= 1")
    phat = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (phat + z2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi
