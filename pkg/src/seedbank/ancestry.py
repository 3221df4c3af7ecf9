"""Backward-in-time coalescing renewal lineages.

Two sampled individuals of generation 0 each follow a renewal process with
interarrival law ``mu``. Whenever both have an ancestor in the same
generation (a joint renewal) the two ancestors coincide with probability
``1/N``; the first such generation is the time to the most recent common
ancestor ``tau``.

Simulations are event driven: a lineage jumps straight to its next renewal,
so heavy-tailed gaps cost one draw each.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import AgeDistribution, sample_ages
from .errors import InvalidParameterError, RegimeError
from .renewal import RenewalSequence, compute_renewal_sequence, cross_sum, sum_q_squared
from .stats import SummaryEstimate, summarize, wilson_interval
from .streams import map_chunks

__all__ = [
    "CensoredOutcome",
    "PairTmrcaSample",
    "PartitionTrajectory",
    "SurvivalPoint",
    "simulate_pair_tmrca",
    "simulate_pair_tmrca_batch",
    "run_pair_tmrca",
    "exact_meeting_probability",
    "meeting_horizon_bias",
    "simulate_ancestral_partition",
    "pairwise_no_coalescence_curve",
    "expected_kingman_tmrca",
]


@dataclass(frozen=True)
class CensoredOutcome:
    """Outcome of one pair simulation: merged at ``tau`` or censored at ``horizon``."""

    merged: bool
    tau: int | None
    horizon: int

    @property
    def tau_or_horizon(self) -> int:
        return self.tau if self.merged else self.horizon


@dataclass
class PairTmrcaSample:
    """Replicated pair simulations.

    ``tau[r]`` is the merge generation of replicate ``r`` or ``-1`` when the
    replicate was censored at ``horizon``.
    """

    N: int
    horizon: int
    tau: np.ndarray

    @property
    def merged(self) -> np.ndarray:
        return self.tau >= 0

    @property
    def reps(self) -> int:
        return int(self.tau.size)

    @property
    def censored_count(self) -> int:
        return int(np.count_nonzero(self.tau < 0))

    @property
    def merged_count(self) -> int:
        return self.reps - self.censored_count

    def met_fraction(self) -> SummaryEstimate:
        """Fraction of replicates that merged by the horizon."""
        p = self.merged_count / self.reps
        return SummaryEstimate(
            mean=p, stderr=math.sqrt(p * (1 - p) / self.reps), count=self.reps, censored=self.censored_count
        )

    def censored_fraction(self) -> SummaryEstimate:
        met = self.met_fraction()
        return SummaryEstimate(mean=1.0 - met.mean, stderr=met.stderr, count=met.count, censored=met.censored)

    def conditional_mean(self, scale: float = 1.0) -> SummaryEstimate:
        """Mean of ``tau / scale`` over merged replicates only."""
        return summarize(self.tau[self.merged] / scale, censored=self.censored_count)

    def outcomes(self):
        for t in self.tau:
            t = int(t)
            yield CensoredOutcome(merged=t >= 0, tau=t if t >= 0 else None, horizon=self.horizon)

    def summary(self, scale: float | None = None) -> dict:
        scale = float(self.N) if scale is None else scale
        return {
            "replicates": self.reps,
            "merged": self.merged_count,
            "censored": self.censored_count,
            "horizon": self.horizon,
            "met_fraction": self.met_fraction().as_dict(),
            "conditional_mean_tau": self.conditional_mean().as_dict(),
            "conditional_mean_tau_over_N": self.conditional_mean(scale).as_dict(),
        }

    @classmethod
    def concat(cls, parts: Sequence["PairTmrcaSample"]) -> "PairTmrcaSample":
        return cls(N=parts[0].N, horizon=parts[0].horizon, tau=np.concatenate([p.tau for p in parts]))


def _check_pair_args(N: int, horizon: int) -> None:
    if int(N) != N or N < 2:
        raise InvalidParameterError(f"N must be an integer >= 2, got {N}")
    if int(horizon) != horizon or horizon < 1:
        raise InvalidParameterError(f"horizon must be an integer >= 1, got {horizon}")


def simulate_pair_tmrca_batch(
    N: int, dist: AgeDistribution, horizon: int, reps: int, rng: np.random.Generator
) -> PairTmrcaSample:
    """Simulate ``reps`` independent pairs of distinct generation-0 individuals.

    Both lineages start at a renewal in generation 0, which is never a merge
    opportunity. At each later joint renewal two uniform labels on
    ``{1..N}`` are drawn and the pair merges if they agree.
    """
    _check_pair_args(N, horizon)
    cap = horizon + 1
    tau = np.full(reps, -1, dtype=np.int64)
    idx = np.arange(reps)
    a = sample_ages(dist, rng, size=reps, cap=cap)
    b = sample_ages(dist, rng, size=reps, cap=cap)
    while idx.size:
        alive = (a <= horizon) & (b <= horizon)
        if not alive.all():
            idx, a, b = idx[alive], a[alive], b[alive]
            if not idx.size:
                break
        joint = a == b
        nj = int(np.count_nonzero(joint))
        if nj:
            labels = rng.integers(N, size=(nj, 2))
            hit = np.zeros(idx.size, dtype=bool)
            hit[joint] = labels[:, 0] == labels[:, 1]
            if hit.any():
                tau[idx[hit]] = a[hit]
                keep = ~hit
                idx, a, b, joint = idx[keep], a[keep], b[keep], joint[keep]
        adv_a = joint | (a < b)
        adv_b = joint | (b < a)
        a[adv_a] += sample_ages(dist, rng, size=int(np.count_nonzero(adv_a)), cap=cap)
        b[adv_b] += sample_ages(dist, rng, size=int(np.count_nonzero(adv_b)), cap=cap)
    return PairTmrcaSample(N=int(N), horizon=int(horizon), tau=tau)


def simulate_pair_tmrca(N: int, dist: AgeDistribution, horizon: int, rng: np.random.Generator) -> CensoredOutcome:
    """One pair simulation; see :func:`simulate_pair_tmrca_batch`."""
    return next(simulate_pair_tmrca_batch(N, dist, horizon, 1, rng).outcomes())


def run_pair_tmrca(
    N: int, dist: AgeDistribution, horizon: int, reps: int, seed: int, threads: int = 1
) -> PairTmrcaSample:
    """Chunked, seed-reproducible version of :func:`simulate_pair_tmrca_batch`."""
    parts = map_chunks(
        lambda size, rng: simulate_pair_tmrca_batch(N, dist, horizon, size, rng), reps, seed, threads
    )
    return PairTmrcaSample.concat(parts)


def _known_divergent(dist: AgeDistribution) -> bool:
    # q_n -> 1/mean > 0 for finite mean; power laws diverge for alpha >= 1/2
    return dist.kind != "power_law" or dist.alpha >= 0.5


def exact_meeting_probability(
    N: int,
    dist: AgeDistribution,
    lag: int = 0,
    horizon: int = 10**6,
    *,
    seq: RenewalSequence | None = None,
    count_generation_zero: bool = False,
    check_convergence: bool = True,
) -> float:
    """Probability that the ancestral lines of two individuals ever meet.

    The individuals live ``lag`` generations apart. Sums are truncated at
    ``horizon`` (or at the horizon of ``seq`` when given)::

        sum_{n>=n0} q[n] q[n+lag] / (N + sum_{n>=1} q[n]**2)

    For ``lag > 0`` the sum starts at ``n0 = 0``. For ``lag == 0`` the two
    individuals are distinct members of one generation and cannot meet in
    generation 0, so the sum starts at ``n0 = 1``; pass
    ``count_generation_zero=True`` to include the ``n = 0`` term, which gives
    the meeting probability of an individual with a uniformly chosen member
    of its own generation (itself included).

    Raises :class:`RegimeError` when ``sum q[n]**2`` diverges, unless
    ``check_convergence`` is False, in which case the truncated value is
    returned.
    """
    if int(N) != N or N < 1:
        raise InvalidParameterError(f"N must be a positive integer, got {N}")
    if int(lag) != lag or lag < 0:
        raise InvalidParameterError(f"lag must be an integer >= 0, got {lag}")
    if seq is None:
        seq = compute_renewal_sequence(dist, horizon)
    s1 = sum_q_squared(seq, start=1)
    if check_convergence and _known_divergent(dist):
        raise RegimeError(
            "requires sum of q_n^2 convergent (alpha < 1/2); "
            f"{dist} gives a divergent sum, so two lineages meet with probability 1"
        )
    if check_convergence and not s1.converged:
        raise RegimeError(
            f"sum of q_n^2 has not converged by horizon {seq.horizon} (last decade adds "
            f"{s1.relative_increment:.3g} of the total); increase the horizon"
        )
    if lag == 0:
        num = sum_q_squared(seq, start=0 if count_generation_zero else 1).value
    else:
        num = cross_sum(seq, int(lag)).value
    return num / (N + s1.value)


def meeting_horizon_bias(seq: RenewalSequence, N: int, lag: int = 0) -> float:
    """Bound on the effect of truncating meeting-probability sums at the horizon.

    Extrapolates ``q[n] ~ q[H] (n/H)**(alpha-1)`` beyond the horizon ``H``
    of ``seq`` (power laws with ``alpha < 1/2`` only) and returns twice the
    expected number of label coincidences after ``H``; this covers both the
    meetings a horizon-``H`` simulation misses and the truncation of the
    formula.
    """
    dist = seq.dist
    if dist.kind != "power_law" or not dist.alpha < 0.5:
        raise RegimeError("horizon bias needs a power law with alpha < 1/2")
    h = seq.horizon - lag
    qh = seq.q[h]
    qhl = seq.q[h + lag]
    tail = qh * qhl * h / (1.0 - 2.0 * dist.alpha)
    return 2.0 * tail / N


@dataclass
class PartitionTrajectory:
    """Merge history of the ancestral partition of ``n0`` sampled individuals.

    Blocks are named by their smallest member label (labels are
    ``1..n0``). ``events`` holds ``(generation, merged block labels)``.
    """

    n0: int
    horizon: int
    events: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)

    def block_count(self, k: int) -> int:
        """Number of blocks after all merges in generations ``<= k``."""
        count = self.n0
        for gen, labels in self.events:
            if gen > k:
                break
            count -= len(labels) - 1
        return count

    @property
    def final_count(self) -> int:
        return self.n0 - sum(len(lab) - 1 for _, lab in self.events)

    @property
    def tmrca(self) -> int | None:
        """Generation of the last merge if the sample fully coalesced."""
        return self.events[-1][0] if self.final_count == 1 and self.events else None

    @property
    def first_merge(self) -> int | None:
        return self.events[0][0] if self.events else None

    def partition(self, k: int) -> list[frozenset[int]]:
        """Blocks of the partition after generation ``k``."""
        blocks = {i: {i} for i in range(1, self.n0 + 1)}
        for gen, labels in self.events:
            if gen > k:
                break
            keep = min(labels)
            for lab in labels:
                if lab != keep:
                    blocks[keep] |= blocks.pop(lab)
        return sorted((frozenset(b) for b in blocks.values()), key=min)


def simulate_ancestral_partition(
    N: int,
    n: int,
    dist: AgeDistribution,
    horizon: int,
    rng: np.random.Generator,
    labels: Sequence[int] | None = None,
) -> PartitionTrajectory:
    """Coalescing renewal lineages of ``n`` distinct generation-0 individuals.

    At every generation each lineage with a renewal picks a uniform label
    in ``{1..N}``; lineages that pick the same label merge, and the merged
    block continues with the renewal process of its lowest-labelled member.
    ``labels`` optionally renames the sampled individuals (a permutation of
    ``1..n``); lineage ``j`` of the draw order carries ``labels[j]``.
    """
    if int(n) != n or n < 2:
        raise InvalidParameterError(f"sample size must be >= 2, got {n}")
    if n > N:
        raise InvalidParameterError(f"sample size {n} exceeds population size {N}")
    if int(horizon) != horizon or horizon < 1:
        raise InvalidParameterError(f"horizon must be an integer >= 1, got {horizon}")
    order = list(range(1, n + 1)) if labels is None else [int(x) for x in labels]
    if sorted(order) != list(range(1, n + 1)):
        raise InvalidParameterError("labels must be a permutation of 1..n")
    cap = horizon + 1
    ages = _Buffered(lambda k: sample_ages(dist, rng, size=k, cap=cap))
    picks = _Buffered(lambda k: rng.integers(N, size=k))
    # draw order is fixed by position, names come from `order`
    nxt = {order[j]: ages.next() for j in range(n)}
    rank = {order[j]: j for j in range(n)}
    traj = PartitionTrajectory(n0=n, horizon=int(horizon))
    while len(nxt) > 1:
        g = min(nxt.values())
        if g > horizon:
            break
        renewing = sorted((b for b, t in nxt.items() if t == g), key=rank.__getitem__)
        groups: dict[int, list[int]] = {}
        for b in renewing:
            groups.setdefault(picks.next(), []).append(b)
        survivors = []
        for members in groups.values():
            keep = min(members)
            if len(members) > 1:
                traj.events.append((g, tuple(sorted(members))))
                for b in members:
                    if b != keep:
                        del nxt[b]
            survivors.append(keep)
        survivors.sort(key=rank.__getitem__)
        for b in survivors:
            nxt[b] = g + ages.next()
    traj.events.sort(key=lambda e: (e[0], e[1]))
    return traj


class _Buffered:
    """Hands out draws one at a time from blocks of ``size``."""

    def __init__(self, draw, size: int = 256):
        self._draw = draw
        self._size = size
        self._buf: list[int] = []
        self._pos = 0

    def next(self) -> int:
        if self._pos == len(self._buf):
            self._buf = self._draw(self._size).tolist()
            self._pos = 0
        self._pos += 1
        return self._buf[self._pos - 1]


@dataclass(frozen=True)
class SurvivalPoint:
    """Estimated ``P(tau > N t)`` with a Wilson interval and the Kingman value."""

    t: float
    estimate: float
    lower: float
    upper: float
    stderr: float
    count: int
    kingman: float


def pairwise_no_coalescence_curve(
    N: int,
    dist: AgeDistribution,
    times: Sequence[float],
    reps: int,
    rng: np.random.Generator,
    horizon: int | None = None,
) -> list[SurvivalPoint]:
    """Survival function of ``tau / N`` for a pair, against ``exp(-beta**2 t)``.

    ``beta = 1/E[age]``. Replicates still unmerged at the horizon count as
    surviving at every requested time not beyond it; the default horizon
    covers ``N * max(times)``.
    """
    mu = dist.mean
    if math.isinf(mu):
        raise RegimeError("the Kingman time change needs a finite mean age (alpha > 1)")
    if N < 100:
        warnings.warn(f"N = {N} is small for the large-N limit", stacklevel=2)
    times = [float(t) for t in times]
    if horizon is None:
        horizon = max(1, math.ceil(N * max(times)) + 1)
    sample = simulate_pair_tmrca_batch(N, dist, horizon, reps, rng)
    return survival_points(sample, times, beta=1.0 / mu)


def survival_points(sample: PairTmrcaSample, times: Sequence[float], beta: float) -> list[SurvivalPoint]:
    out = []
    tau = np.where(sample.tau < 0, np.iinfo(np.int64).max, sample.tau)
    for t in times:
        if sample.N * t > sample.horizon:
            raise InvalidParameterError(f"time {t} lies beyond the simulation horizon")
        k = int(np.count_nonzero(tau > sample.N * t))
        p = k / sample.reps
        lo, hi = wilson_interval(k, sample.reps)
        out.append(
            SurvivalPoint(
                t=t,
                estimate=p,
                lower=lo,
                upper=hi,
                stderr=math.sqrt(p * (1 - p) / sample.reps),
                count=sample.reps,
                kingman=math.exp(-beta * beta * t),
            )
        )
    return out


def expected_kingman_tmrca(n: int, beta: float) -> float:
    """Mean time to the MRCA of ``n`` lineages in Kingman's coalescent sped up by ``beta**2``."""
    if n < 2:
        raise InvalidParameterError(f"n must be >= 2, got {n}")
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta}")
    return 2.0 / beta**2 * (1.0 - 1.0 / n)
