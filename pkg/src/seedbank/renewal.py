"""Renewal sequence of a single ancestral line.

``q[n]`` is the probability that a lineage has an ancestor exactly ``n``
generations back. It solves the renewal equation

    q[0] = 1,    q[n] = sum_{k=1..n} pmf(k) * q[n - k].

For long horizons the convolution is evaluated by divide and conquer with
FFT products (``O(H log^2 H)``); the split points depend only on ``H`` so
the result is bitwise reproducible.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from .distributions import AgeDistribution, sample_ages
from .errors import InvalidParameterError, ResourceError
from .stats import SummaryEstimate

__all__ = [
    "RenewalSequence",
    "SumDiagnostic",
    "compute_renewal_sequence",
    "renewal_equation_residual",
    "mc_renewal_probability",
    "mc_renewal_probabilities",
    "sum_q_squared",
    "cross_sum",
    "tauberian_partial_sum_asymptote",
    "tauberian_cross_sum_asymptote",
    "cross_sum_limit_constant",
    "gamma",
    "write_csv",
]

#: Horizon above which :func:`compute_renewal_sequence` refuses to allocate.
MAX_HORIZON = 2 * 10**8

_BASE_BLOCK = 64
_DIRECT_CONV = 512

# Relative last-decade increment below which a q-sum is reported converged.
CONVERGENCE_RTOL = 1e-2


def gamma(x: float) -> float:
    """Euler's Gamma function (thin wrapper over :func:`math.gamma`)."""
    return math.gamma(x)


@dataclass(frozen=True)
class RenewalSequence:
    """``q[0..horizon]`` for one age distribution."""

    dist: AgeDistribution
    q: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.q) - 1

    def __getitem__(self, n):
        return self.q[n]

    def __len__(self) -> int:
        return len(self.q)


@dataclass(frozen=True)
class SumDiagnostic:
    """A partial sum together with evidence about its convergence.

    ``last_decade_increment`` is the part of the sum contributed by terms
    with index in ``(H/10, H]``. A divergent series keeps a non-vanishing
    relative increment however large ``H`` is.
    """

    value: float
    last_decade_increment: float
    horizon: int
    rtol: float = CONVERGENCE_RTOL

    @property
    def relative_increment(self) -> float:
        return self.last_decade_increment / self.value if self.value else 0.0

    @property
    def converged(self) -> bool:
        return self.relative_increment < self.rtol

    def __float__(self) -> float:
        return self.value


def _tail_of_convolution(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Entries ``len(a)..len(b)-1`` of ``np.convolve(a, b)`` with ``len(b) > len(a)``.

    A circular convolution of length ``n >= len(b)`` only wraps linear
    indices ``>= n`` onto indices ``< len(a) - 1``, so the wanted entries
    are exact and the transform stays at length ``~len(b)``.
    """
    n = sp_fft.next_fast_len(len(b), real=True)
    spec = sp_fft.rfft(a, n)
    spec *= sp_fft.rfft(b, n)
    return sp_fft.irfft(spec, n)[len(a) : len(b)]


def _solve_renewal(f: np.ndarray, horizon: int) -> np.ndarray:
    q = np.zeros(horizon + 1)
    acc = np.zeros(horizon + 1)
    q[0] = 1.0

    def solve(lo: int, hi: int) -> None:
        # On entry acc[lo:hi] holds all contributions of q[:lo].
        if hi - lo <= _BASE_BLOCK:
            for n in range(max(lo, 1), hi):
                k = n - lo
                q[n] = acc[n] + (np.dot(f[k:0:-1], q[lo:n]) if k else 0.0)
            return
        mid = (lo + hi) // 2
        solve(lo, mid)
        a = q[lo:mid]
        b = f[: hi - lo]
        if len(a) <= _DIRECT_CONV:
            acc[mid:hi] += np.convolve(a, b)[mid - lo : hi - lo]
        else:
            acc[mid:hi] += _tail_of_convolution(a, b)
        solve(mid, hi)

    solve(0, horizon + 1)
    return q


def compute_renewal_sequence(dist: AgeDistribution, horizon: int) -> RenewalSequence:
    """Solve the renewal equation up to ``horizon``.

    Dirac and short explicit tables use the direct recursion; everything
    else goes through the blocked FFT solver.
    """
    if int(horizon) != horizon or horizon < 0:
        raise InvalidParameterError(f"horizon must be an integer >= 0, got {horizon}")
    horizon = int(horizon)
    if horizon > MAX_HORIZON:
        raise ResourceError(
            f"horizon {horizon} exceeds the memory budget (max {MAX_HORIZON}); "
            "use a shorter horizon and extrapolate the power-law tail"
        )
    if dist.kind == "dirac":
        q = np.zeros(horizon + 1)
        q[:: dist.m] = 1.0
        return RenewalSequence(dist, q)
    f = dist.pmf_array(horizon)
    width = dist.support_max
    if width is not None and width <= 32 and horizon <= 10**6:
        q = np.zeros(horizon + 1)
        q[0] = 1.0
        taps = f[1 : width + 1]
        for n in range(1, horizon + 1):
            k = min(n, width)
            q[n] = np.dot(taps[:k], q[n - 1 :: -1][:k])
        return RenewalSequence(dist, q)
    return RenewalSequence(dist, _solve_renewal(f, horizon))


def renewal_equation_residual(seq: RenewalSequence) -> float:
    """``max_n |q[n] - sum_k pmf(k) q[n-k]|`` over ``1 <= n <= H``."""
    h = seq.horizon
    if h == 0:
        return abs(seq.q[0] - 1.0)
    f = seq.dist.pmf_array(h)
    conv = signal.fftconvolve(seq.q, f)[: h + 1] if h > 4096 else np.convolve(seq.q, f)[: h + 1]
    return float(max(abs(seq.q[0] - 1.0), np.max(np.abs(seq.q[1:] - conv[1:]))))


def mc_renewal_probabilities(
    dist: AgeDistribution, n_max: int, reps: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimates of ``q[0..n_max]`` from ``reps`` renewal paths.

    Each path accumulates ages until it passes ``n_max``; ``q[n]`` is
    estimated by the fraction of paths with a renewal at ``n``. Returns
    ``(estimate, stderr)`` arrays.
    """
    if n_max < 0 or reps < 1:
        raise InvalidParameterError("need n_max >= 0 and reps >= 1")
    hits = np.zeros(n_max + 1, dtype=np.int64)
    hits[0] = reps
    pos = np.zeros(reps, dtype=np.int64)
    while pos.size:
        pos = pos + sample_ages(dist, rng, size=pos.size, cap=n_max + 1)
        pos = pos[pos <= n_max]
        hits += np.bincount(pos, minlength=n_max + 1)
    est = hits / reps
    stderr = np.sqrt(est * (1.0 - est) / reps)
    return est, stderr


def mc_renewal_probability(
    dist: AgeDistribution, n: int, reps: int, rng: np.random.Generator
) -> SummaryEstimate:
    """Monte Carlo estimate of ``q[n]`` with its standard error."""
    est, se = mc_renewal_probabilities(dist, n, reps, rng)
    return SummaryEstimate(mean=float(est[n]), stderr=float(se[n]), count=reps)


def _decade_sum(terms: np.ndarray, horizon: int) -> SumDiagnostic:
    value = float(np.sum(terms))
    cut = horizon // 10
    inc = float(np.sum(terms[cut + 1 :])) if horizon >= 10 else value
    return SumDiagnostic(value=value, last_decade_increment=inc, horizon=horizon)


def sum_q_squared(seq: RenewalSequence, start: int = 0) -> SumDiagnostic:
    """``sum_{n=start..H} q[n]**2`` with a last-decade convergence diagnostic."""
    q = seq.q
    terms = q * q
    if start:
        terms = terms.copy()
        terms[:start] = 0.0
    return _decade_sum(terms, seq.horizon)


def cross_sum(seq: RenewalSequence, lag: int, start: int = 0) -> SumDiagnostic:
    """``sum_{n=start..H-lag} q[n] * q[n+lag]`` with a convergence diagnostic."""
    if int(lag) != lag or lag < 0:
        raise InvalidParameterError(f"lag must be an integer >= 0, got {lag}")
    lag = int(lag)
    q = seq.q
    h = seq.horizon
    if lag > h:
        return SumDiagnostic(value=0.0, last_decade_increment=0.0, horizon=h)
    terms = q[: h + 1 - lag] * q[lag:]
    if start:
        terms = terms.copy()
        terms[:start] = 0.0
    return _decade_sum(terms, h - lag)


def _check_alpha(alpha: float, upper: float) -> None:
    if not 0 < alpha < upper:
        raise InvalidParameterError(f"alpha must lie in (0, {upper:g}), got {alpha}")


def tauberian_partial_sum_asymptote(alpha: float, i: float) -> float:
    """Large-``i`` equivalent of ``sum_{n<=i} q[n]`` for ``PowerLaw(alpha)``, ``0 < alpha < 1``.

    ``(1-alpha) / (Gamma(2-alpha) Gamma(1+alpha)) * i**alpha``.
    """
    _check_alpha(alpha, 1.0)
    if i < 1:
        raise InvalidParameterError(f"i must be >= 1, got {i}")
    return (1 - alpha) / (gamma(2 - alpha) * gamma(1 + alpha)) * i**alpha


def tauberian_cross_sum_asymptote(alpha: float, i: float) -> float:
    """Stated large-``i`` equivalent of ``sum_n q[n] q[n+i]``, ``0 < alpha < 1/2``.

    ``(1-alpha)**2 / (Gamma(2-alpha)**2 Gamma(2 alpha)) * i**(2 alpha - 1)``.
    See :func:`cross_sum_limit_constant` for the constant that the exact
    sequence actually approaches.
    """
    _check_alpha(alpha, 0.5)
    if i < 1:
        raise InvalidParameterError(f"i must be >= 1, got {i}")
    return (1 - alpha) ** 2 / (gamma(2 - alpha) ** 2 * gamma(2 * alpha)) * i ** (2 * alpha - 1)


def cross_sum_limit_constant(alpha: float) -> float:
    """``lim_i i**(1-2 alpha) sum_n q[n] q[n+i]`` for ``PowerLaw(alpha)``.

    From ``q[n] ~ n**(alpha-1) / (Gamma(alpha) Gamma(1-alpha))`` and the
    Beta integral ``int_0^inf u**(alpha-1) (1+u)**(alpha-1) du``:
    ``Gamma(1-2 alpha) / (Gamma(alpha) Gamma(1-alpha)**3)``. It equals the
    constant of :func:`tauberian_cross_sum_asymptote` divided by
    ``2 cos(pi alpha)``.
    """
    _check_alpha(alpha, 0.5)
    return gamma(1 - 2 * alpha) / (gamma(alpha) * gamma(1 - alpha) ** 3)


def write_csv(seq: RenewalSequence, path, header_lines=()) -> None:
    """Write ``n,q_n`` rows at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "q_n"])
        for n, v in enumerate(seq.q):
            w.writerow([n, format(float(v), ".17g")])
