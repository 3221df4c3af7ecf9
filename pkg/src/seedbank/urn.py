"""Urn chains for the renewal counts of ``n`` lineages.

Urn ``i`` holds the balls (lineages) whose next renewal is ``i`` steps
ahead. A step relocates every ball of urn 1 by a fresh age draw and shifts
all other urns down by one. In the sectioned variant every urn has ``N``
sections; balls that share a section of the same urn merge.
"""
from __future__ import annotations

import functools
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .distributions import AgeDistribution, sample_ages
from .errors import InvalidParameterError, RegimeError, ResourceError

__all__ = [
    "UrnState",
    "SectionedUrnState",
    "step_urn",
    "stationary_weights",
    "stationary_pmf",
    "sample_stationary",
    "enumerate_states",
    "verify_stationarity_exact",
    "single_merger_probability_leading",
    "exact_merger_probabilities",
    "stationary_merger_rate",
    "step_sectioned",
]

MAX_STATES = 10**6


class UrnState:
    """Ball counts per urn, stored sparsely.

    Counts are keyed by absolute position; urn ``i`` lives at
    ``origin + i``. Shifting only moves ``origin``, so balls parked at
    huge indices cost nothing until they come due.
    """

    __slots__ = ("_counts", "_origin", "total")

    def __init__(self, counts: Mapping[int, int] | None = None, *, _origin: int = 0):
        clean = {int(k): int(v) for k, v in (counts or {}).items() if v}
        if any(v < 0 for v in clean.values()):
            raise InvalidParameterError("ball counts must be >= 0")
        if any(k - _origin < 1 for k in clean):
            raise InvalidParameterError("urn indices start at 1")
        self._counts = clean
        self._origin = _origin
        self.total = sum(clean.values())

    @classmethod
    def from_counts(cls, counts: Iterable[int]) -> "UrnState":
        """``from_counts([x1, x2, ...])``."""
        return cls({i: x for i, x in enumerate(counts, start=1)})

    def __getitem__(self, urn: int) -> int:
        return self._counts.get(self._origin + urn, 0)

    def items(self):
        """``(urn, count)`` pairs in increasing urn order."""
        return sorted((k - self._origin, v) for k, v in self._counts.items())

    def as_tuple(self) -> tuple[int, ...]:
        """Dense counts ``(x1, ..., x_last)`` up to the last occupied urn."""
        pairs = self.items()
        if not pairs:
            return ()
        out = [0] * pairs[-1][0]
        for i, v in pairs:
            out[i - 1] = v
        return tuple(out)

    def __eq__(self, other) -> bool:
        return isinstance(other, UrnState) and self.as_tuple() == other.as_tuple()

    def __hash__(self) -> int:
        return hash(self.as_tuple())

    def __repr__(self) -> str:
        return f"UrnState{self.as_tuple()}"


def step_urn(state: UrnState, dist: AgeDistribution, rng: np.random.Generator) -> UrnState:
    """One transition: relocate urn 1 by independent age draws, shift the rest."""
    x1 = state[1]
    counts = dict(state._counts)
    origin = state._origin
    counts.pop(origin + 1, None)
    origin += 1
    if x1:
        for age in sample_ages(dist, rng, size=x1):
            key = origin + int(age)
            counts[key] = counts.get(key, 0) + 1
    return UrnState(counts, _origin=origin)


def stationary_weights(dist: AgeDistribution, upto: int) -> np.ndarray:
    """``beta_i = tail(i) / mean`` for ``i = 1..upto`` (index 0 unused)."""
    mu = dist.mean
    if math.isinf(mu):
        raise RegimeError("the stationary law needs a finite mean age (alpha > 1)")
    w = np.zeros(upto + 1)
    w[1:] = np.asarray(dist.tail(np.arange(1, upto + 1)), dtype=np.float64) / mu
    return w


def stationary_pmf(n: int, dist: AgeDistribution, state: UrnState) -> float:
    """Multinomial stationary probability ``n!/prod(x_i!) prod(beta_i**x_i)``."""
    if state.total != n:
        return 0.0
    pairs = state.items()
    last = pairs[-1][0] if pairs else 0
    beta = stationary_weights(dist, max(last, 1))
    logp = math.lgamma(n + 1)
    for i, x in pairs:
        if beta[i] == 0:
            return 0.0
        logp += x * math.log(beta[i]) - math.lgamma(x + 1)
    return math.exp(logp)


def sample_stationary(n: int, dist: AgeDistribution, rng: np.random.Generator, size: int) -> list[UrnState]:
    """Draw ``size`` states from the stationary multinomial law.

    Each ball independently lands in urn ``i`` with probability ``beta_i``.
    For power laws ``beta_i`` is proportional to ``i**-alpha`` (a Zipf law);
    otherwise the support is finite.
    """
    if dist.kind == "power_law":
        if not dist.alpha > 1:
            raise RegimeError("the stationary law needs a finite mean age (alpha > 1)")
        urns = rng.zipf(dist.alpha, size=(size, n))
    else:
        top = dist.support_max
        beta = stationary_weights(dist, top)[1:]
        cdf = np.cumsum(beta)
        cdf[-1] = 1.0
        urns = np.searchsorted(cdf, rng.random((size, n)), side="right") + 1
    return [UrnState(Counter(int(u) for u in row)) for row in urns]


def _compositions(total: int, parts: int):
    """All tuples of ``parts`` non-negative ints summing to ``total``."""
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield tuple(out)


def enumerate_states(n: int, width: int) -> list[tuple[int, ...]]:
    """States with ``n`` balls in urns ``1..width`` (dense tuples of length ``width``)."""
    count = math.comb(n + width - 1, width - 1)
    if count > MAX_STATES:
        raise ResourceError(f"{count} states exceed the enumeration budget of {MAX_STATES}")
    return list(_compositions(n, width))


def _multinomial_pmf(k: int, outcome: tuple[int, ...], probs: np.ndarray) -> float:
    logp = math.lgamma(k + 1)
    for r, p in zip(outcome, probs):
        if r:
            if p == 0:
                return 0.0
            logp += r * math.log(p) - math.lgamma(r + 1)
    return math.exp(logp)


def verify_stationarity_exact(n: int, dist: AgeDistribution) -> float:
    """Largest ``|sum_x nu(x) P(x, y) - nu(y)|`` over the finite state space.

    ``dist`` must have finite support ``{1..j}``; the chain then lives on
    states with all balls in urns ``1..j``.
    """
    width = dist.support_max
    if width is None:
        raise InvalidParameterError("exact stationarity check needs a finitely supported distribution")
    states = enumerate_states(n, width)
    index = {s: i for i, s in enumerate(states)}
    beta = stationary_weights(dist, width)[1:]
    nu = np.array([_multinomial_pmf(n, s, beta) for s in states])
    mu = np.asarray(dist.pmf(np.arange(1, width + 1)), dtype=np.float64)
    pushed = np.zeros(len(states))
    relocations = {k: list(_compositions(k, width)) for k in range(n + 1)}
    for s, p in zip(states, nu):
        if p == 0:
            continue
        shifted = s[1:] + (0,)
        for r in relocations[s[0]]:
            w = _multinomial_pmf(s[0], r, mu)
            if w:
                y = tuple(a + b for a, b in zip(shifted, r))
                pushed[index[y]] += p * w
    return float(np.max(np.abs(pushed - nu)))


@functools.lru_cache(maxsize=32)
def _sum_pmf_squared(dist: AgeDistribution) -> float:
    if dist.kind == "power_law":
        m = np.arange(1, 10**6 + 1, dtype=np.float64)
        return float(np.sum(dist.pmf(m) ** 2))
    top = dist.support_max
    return float(np.sum(np.asarray(dist.pmf(np.arange(1, top + 1))) ** 2))


def single_merger_probability_leading(state: UrnState, dist: AgeDistribution, N: int) -> float:
    """Order-``1/N`` term of the probability of exactly one merger in the next step.

    ``(1/N) sum_i (x1 x_{i+1} mu(i) + C(x1, 2) mu(i)**2)``.
    """
    x1 = state[1]
    if x1 == 0:
        return 0.0
    pairs = [(i, x) for i, x in state.items() if i >= 2]
    resident = sum(x * float(dist.pmf(i - 1)) for i, x in pairs)
    sq = _sum_pmf_squared(dist)
    return (x1 * resident + math.comb(x1, 2) * sq) / N


def exact_merger_probabilities(state: UrnState, dist: AgeDistribution, N: int) -> dict[int, float]:
    """Exact law of the number of mergers in the next step, by enumeration.

    Sums over every relocation of the urn-1 balls (finite support only) and
    every assignment of sections to the relocated balls. Resident balls
    occupy distinct sections; by symmetry they sit in sections ``0..x-1``.
    Cost grows like ``width**x1 * N**x1``.
    """
    width = dist.support_max
    if width is None:
        raise InvalidParameterError("enumeration needs a finitely supported distribution")
    x1 = state[1]
    shifted = {i - 1: x for i, x in state.items() if i >= 2}
    out: dict[int, float] = {}
    if x1 == 0:
        return {0: 1.0}
    if N**x1 > 10**7:
        raise ResourceError("section enumeration too large")
    ages = np.arange(1, width + 1)
    mu = np.asarray(dist.pmf(ages), dtype=np.float64)
    grids = np.indices((N,) * x1).reshape(x1, -1).T  # every section assignment
    for dest in itertools.product(range(1, width + 1), repeat=x1):
        w = float(np.prod(mu[np.asarray(dest) - 1]))
        if w == 0:
            continue
        mergers = np.zeros(len(grids), dtype=np.int64)
        for urn in set(dest):
            cols = [b for b, d in enumerate(dest) if d == urn]
            resident = shifted.get(urn, 0)
            sec = grids[:, cols]
            # a relocated ball opens a section unless a resident or an
            # earlier relocated ball already holds it
            opened = np.zeros(len(grids), dtype=np.int64)
            for c in range(len(cols)):
                new = sec[:, c] >= resident
                for d in range(c):
                    new &= sec[:, c] != sec[:, d]
                opened += new
            mergers += len(cols) - opened
        counts = np.bincount(mergers)
        for m, c in enumerate(counts):
            if c:
                out[m] = out.get(m, 0.0) + w * c / len(grids)
    return out


def stationary_merger_rate(n: int, dist: AgeDistribution, N: int) -> float:
    """Stationary single-merger rate to order ``1/N``: ``beta_1**2 C(n, 2) / N``."""
    mu = dist.mean
    if math.isinf(mu):
        raise RegimeError("the stationary merger rate needs a finite mean age (alpha > 1)")
    return (1.0 / mu) ** 2 * math.comb(n, 2) / N


@dataclass(frozen=True)
class SectionedUrnState:
    """Balls as ``(urn, section)`` pairs with ``N`` sections per urn.

    No two balls share a pair; constructing a state merges duplicates.
    """

    balls: tuple[tuple[int, int], ...]
    N: int

    @classmethod
    def create(cls, balls: Iterable[tuple[int, int]], N: int) -> "SectionedUrnState":
        uniq = sorted(set((int(u), int(s)) for u, s in balls))
        if any(u < 1 or not 1 <= s <= N for u, s in uniq):
            raise InvalidParameterError("urns start at 1 and sections lie in 1..N")
        return cls(tuple(uniq), int(N))

    @property
    def count(self) -> int:
        return len(self.balls)

    def urn_counts(self) -> UrnState:
        return UrnState(Counter(u for u, _ in self.balls))


def step_sectioned(
    state: SectionedUrnState, dist: AgeDistribution, rng: np.random.Generator
) -> tuple[SectionedUrnState, int]:
    """One step of the sectioned chain; returns the new state and the merger count."""
    moving = [b for b in state.balls if b[0] == 1]
    staying = [(u - 1, s) for u, s in state.balls if u != 1]
    if moving:
        ages = sample_ages(dist, rng, size=len(moving))
        secs = rng.integers(1, state.N + 1, size=len(moving))
        staying.extend((int(a), int(s)) for a, s in zip(ages, secs))
    new = SectionedUrnState.create(staying, state.N)
    return new, state.count - new.count
