"""Forward-in-time genealogy on a finite window and two-type frequencies.

Every individual ``(g, k)`` of generations ``-(T+B)..0`` picks a parent
``(g - eta, U)`` with ``eta ~ mu`` and ``U`` uniform on ``{1..N}``. The
resulting forest is the restriction of the bi-infinite genealogy to the
window; parents that fall below the window are kept as *external roots*
keyed by their coordinate, so two individuals that pick the same
out-of-window parent stay connected.

Each component then receives type ``a`` with probability ``p``, and
``Y(g)`` is the type-``a`` fraction of generation ``g``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .ancestry import exact_meeting_probability
from .distributions import AgeDistribution, sample_ages
from .errors import IncompleteBoundaryError, InvalidParameterError, RegimeError, ResourceError
from .renewal import (
    RenewalSequence,
    compute_renewal_sequence,
    cross_sum,
    sum_q_squared,
    tauberian_cross_sum_asymptote,
)
from .streams import map_chunks

__all__ = [
    "GenealogyWindow",
    "ComponentLabeling",
    "TypeField",
    "FrequencySeries",
    "CorrelationReport",
    "build_genealogy",
    "label_components",
    "assign_types",
    "type_violations",
    "compute_frequency_series",
    "exact_covariance",
    "exact_variance",
    "limiting_correlation",
    "asymptotic_correlation",
    "estimate_correlation_mc",
    "run_correlation_mc",
    "boundary_types_from_components",
    "propagate_types_conditional",
    "write_window_csv",
    "write_frequency_csv",
]

#: Largest number of vertices a window may hold.
MAX_VERTICES = 5 * 10**7


@dataclass
class GenealogyWindow:
    """Parent choices for generations ``-(T+B)..0``.

    Row ``r`` of ``eta`` and ``parent_label`` is generation ``r - (T+B)``;
    labels are 0-based.
    """

    N: int
    T: int
    burn_in: int
    eta: np.ndarray
    parent_label: np.ndarray

    @property
    def rows(self) -> int:
        return self.eta.shape[0]

    @property
    def depth(self) -> int:
        """``T + B``: the oldest materialised generation is ``-depth``."""
        return self.T + self.burn_in

    def row(self, generation: int) -> int:
        r = generation + self.depth
        if not 0 <= r < self.rows:
            raise InvalidParameterError(f"generation {generation} is outside the window")
        return r

    def generation(self, row: int) -> int:
        return row - self.depth

    def parent_rows(self) -> np.ndarray:
        """Row of each vertex's parent; negative rows lie below the window."""
        return np.arange(self.rows)[:, None] - self.eta


def build_genealogy(N: int, T: int, burn_in: int, dist: AgeDistribution, rng: np.random.Generator) -> GenealogyWindow:
    """Sample parent offsets and labels for every vertex of the window."""
    if N < 1 or T < 1 or burn_in < 0:
        raise InvalidParameterError("need N >= 1, T >= 1 and burn_in >= 0")
    rows = T + burn_in + 1
    if rows * N > MAX_VERTICES:
        raise ResourceError(f"window of {rows * N} vertices exceeds the budget of {MAX_VERTICES}")
    # offsets beyond the window bottom only matter through their coordinate
    eta = sample_ages(dist, rng, size=(rows, N), cap=2**40)
    label = rng.integers(N, size=(rows, N), dtype=np.int32 if N < 2**31 else np.int64)
    return GenealogyWindow(N=int(N), T=int(T), burn_in=int(burn_in), eta=eta, parent_label=label)


@dataclass
class ComponentLabeling:
    """Connected components of a window.

    Every component owns exactly one external root. ``component[r, k]`` is
    the index of that root in ``external`` (rows of ``(generation, label)``).
    """

    component: np.ndarray
    external: np.ndarray

    @property
    def count(self) -> int:
        return int(self.external.shape[0])


def label_components(window: GenealogyWindow) -> ComponentLabeling:
    """Union of every vertex with its parent, out-of-window coordinates included.

    Parents are always older than children, so following parent pointers
    ends at an external root. Roots are found by pointer doubling.
    """
    N = window.N
    n_vertices = window.rows * N
    prow = window.parent_rows().ravel()
    plab = window.parent_label.ravel().astype(np.int64)
    inside = prow >= 0
    # external coordinate (generation, label) as one sortable key
    ext_gen = prow[~inside] - window.depth
    ext_key = ext_gen * N + plab[~inside]
    keys, ext_index = np.unique(ext_key, return_inverse=True)
    ptr = np.empty(n_vertices + keys.size, dtype=np.int64)
    ptr[:n_vertices][inside] = prow[inside] * N + plab[inside]
    ptr[:n_vertices][~inside] = n_vertices + ext_index.ravel()
    ptr[n_vertices:] = np.arange(n_vertices, n_vertices + keys.size)
    while True:
        nxt = ptr[ptr]
        if np.array_equal(nxt, ptr):
            break
        ptr = nxt
    component = (ptr[:n_vertices] - n_vertices).reshape(window.rows, N)
    gen = np.floor_divide(keys, N)
    external = np.stack([gen, keys - gen * N], axis=1)
    return ComponentLabeling(component=component, external=external)


@dataclass
class TypeField:
    """Types of all window vertices (``True`` = type ``a``) and of external roots."""

    types: np.ndarray
    external_types: np.ndarray
    p: float | None = None


def assign_types(labeling: ComponentLabeling, p: float, rng: np.random.Generator) -> TypeField:
    """Independent type per component: ``a`` with probability ``p``."""
    if not 0 <= p <= 1:
        raise InvalidParameterError(f"p must lie in [0, 1], got {p}")
    comp_types = rng.random(labeling.count) < p
    return TypeField(types=comp_types[labeling.component], external_types=comp_types, p=float(p))


def type_violations(window: GenealogyWindow, labeling: ComponentLabeling, field_: TypeField) -> int:
    """Number of vertices whose type differs from their parent's."""
    prow = window.parent_rows()
    inside = prow >= 0
    parent_type = np.empty_like(field_.types)
    parent_type[inside] = field_.types[prow[inside], window.parent_label[inside]]
    parent_type[~inside] = field_.external_types[labeling.component[~inside]]
    return int(np.count_nonzero(parent_type != field_.types))


@dataclass
class FrequencySeries:
    """``Y(g)`` for generations ``-T..0``."""

    generations: np.ndarray
    Y: np.ndarray

    def at(self, generation: int) -> float:
        return float(self.Y[generation - self.generations[0]])


def compute_frequency_series(window: GenealogyWindow, field_: TypeField) -> FrequencySeries:
    """Type-``a`` fraction per generation, burn-in rows excluded."""
    b = window.burn_in
    y = field_.types[b:].mean(axis=1)
    gens = np.arange(-window.T, 1)
    return FrequencySeries(generations=gens, Y=y)


def _regime(dist: AgeDistribution) -> str:
    if dist.kind == "power_law":
        if dist.alpha < 0.5:
            return "transient"
        if dist.alpha == 0.5:
            return "boundary"
    return "recurrent"


def _check_p(p: float) -> None:
    if not 0 <= p <= 1:
        raise InvalidParameterError(f"p must lie in [0, 1], got {p}")


def exact_covariance(
    N: int,
    dist: AgeDistribution,
    lag: int,
    p: float,
    horizon: int = 10**6,
    *,
    seq: RenewalSequence | None = None,
    count_generation_zero: bool = False,
) -> float:
    """Covariance of the type indicators of two distinct individuals ``lag`` generations apart.

    ``p (1-p) P(lines meet)``: equal to ``p (1-p)`` when lines meet almost
    surely (alpha > 1/2 or finite mean) and given by the truncated renewal
    sums of :func:`~seedbank.ancestry.exact_meeting_probability` when
    ``alpha < 1/2``. For ``lag != 0`` this is also ``cov(Y(0), Y(lag))``.
    """
    _check_p(p)
    regime = _regime(dist)
    if regime == "boundary":
        raise RegimeError("alpha = 1/2 is a boundary case; the covariance depends on the slowly varying factor")
    if regime == "recurrent":
        return p * (1 - p)
    prob = exact_meeting_probability(
        N, dist, lag, horizon, seq=seq, count_generation_zero=count_generation_zero
    )
    return p * (1 - p) * prob


def exact_variance(
    N: int,
    dist: AgeDistribution,
    p: float,
    horizon: int = 10**6,
    *,
    seq: RenewalSequence | None = None,
    count_generation_zero: bool = False,
) -> float:
    """Variance of ``Y(g)`` for ``alpha < 1/2``.

    ``var Y = p(1-p) [1/N + (1 - 1/N) P(two distinct lines meet)]``, which
    simplifies to ``p (1-p) S0 / (N + S1)`` with ``S0 = sum_{n>=0} q[n]**2``
    and ``S1 = S0 - 1``. ``count_generation_zero=True`` uses the meeting
    probability that includes the generation-0 term, giving
    ``p (1-p) (S0 + 1 - 1/N) / (N + S1)``.
    """
    _check_p(p)
    if _regime(dist) != "transient":
        raise RegimeError("exact_variance requires sum of q_n^2 convergent: alpha < 1/2")
    prob = exact_meeting_probability(
        N, dist, 0, horizon, seq=seq, count_generation_zero=count_generation_zero
    )
    return p * (1 - p) * (1.0 / N + (1.0 - 1.0 / N) * prob)


def _sequence_for(dist: AgeDistribution, horizon: int, seq: RenewalSequence | None) -> RenewalSequence:
    if _regime(dist) != "transient":
        raise RegimeError("correlation limits require sum of q_n^2 convergent: alpha < 1/2")
    return compute_renewal_sequence(dist, horizon) if seq is None else seq


def _correlation_denominator(seq: RenewalSequence, count_generation_zero: bool) -> float:
    s0 = sum_q_squared(seq).value
    return s0 + 1.0 if count_generation_zero else s0


def limiting_correlation(
    dist: AgeDistribution,
    lag: int,
    horizon: int = 10**6,
    *,
    seq: RenewalSequence | None = None,
    count_generation_zero: bool = False,
) -> float:
    """``lim_N corr(Y(0), Y(lag))`` for ``alpha < 1/2``.

    Equals ``sum_n q[n] q[n+lag] / sum_n q[n]**2`` (in fact for every
    ``N``), which is 1 at ``lag = 0``. With ``count_generation_zero=True``
    the denominator becomes ``sum_n q[n]**2 + 1``.
    """
    seq = _sequence_for(dist, horizon, seq)
    return cross_sum(seq, lag).value / _correlation_denominator(seq, count_generation_zero)


def asymptotic_correlation(
    alpha: float,
    lag: int,
    horizon: int = 10**6,
    *,
    seq: RenewalSequence | None = None,
    include_paper_factor: bool = False,
    p: float | None = None,
    count_generation_zero: bool = False,
) -> float:
    """Large-lag form of :func:`limiting_correlation` for ``PowerLaw(alpha)``.

    Uses the cross-sum equivalent of
    :func:`~seedbank.renewal.tauberian_cross_sum_asymptote` over the same
    denominator as :func:`limiting_correlation`. ``include_paper_factor``
    multiplies by ``p (1-p)``.
    """
    from .distributions import make_power_law

    if not 0 < alpha < 0.5:
        raise RegimeError("asymptotic correlation requires 0 < alpha < 1/2")
    if seq is None:
        seq = compute_renewal_sequence(make_power_law(alpha), horizon)
    value = tauberian_cross_sum_asymptote(alpha, lag) / _correlation_denominator(seq, count_generation_zero)
    if include_paper_factor:
        if p is None:
            raise InvalidParameterError("include_paper_factor needs p")
        _check_p(p)
        value *= p * (1 - p)
    return value


def _measure_rows(window: GenealogyWindow, lags: Sequence[int]) -> list[int]:
    g0 = -(window.T // 2)
    return [window.row(g0)] + [window.row(g0 + i) for i in lags]


def _validate_lags(T: int, lags: Sequence[int]) -> list[int]:
    lags = [int(i) for i in lags]
    if any(i < 1 for i in lags):
        raise InvalidParameterError("lags must be >= 1")
    if any(i >= T for i in lags):
        raise InvalidParameterError(f"lags must be smaller than the window depth T = {T}")
    if any(i > T // 2 for i in lags):
        raise InvalidParameterError(f"lags must not exceed T/2 = {T // 2} (measurement starts at -T/2)")
    return lags


def _window_samples(N, T, B, dist, p, lags, reps, rng) -> np.ndarray:
    out = np.empty((reps, 1 + len(lags)))
    for r in range(reps):
        window = build_genealogy(N, T, B, dist, rng)
        labeling = label_components(window)
        field_ = assign_types(labeling, p, rng)
        rows = _measure_rows(window, lags)
        out[r] = field_.types[rows].mean(axis=1)
    return out


@dataclass
class LagEstimate:
    lag: int
    covariance: float
    covariance_stderr: float
    correlation: float
    correlation_stderr: float
    exact_covariance: float | None
    limiting_correlation: float | None
    asymptotic_correlation: float | None
    bias_bound: float | None


@dataclass
class CorrelationReport:
    """Monte Carlo covariances of ``Y(-T/2)`` and ``Y(-T/2 + lag)``."""

    N: int
    T: int
    burn_in: int
    p: float
    reps: int
    mean_Y: float
    mean_Y_stderr: float
    variance: float
    variance_stderr: float
    exact_variance: float | None
    lags: list[LagEstimate] = field(default_factory=list)
    bias_note: str = ""

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "lags"}
        d["lags"] = [dict(e.__dict__) for e in self.lags]
        return d


def _tail_cross_sum(seq: RenewalSequence, start: int, lag: int) -> float:
    """``sum_{n > start} q[n] q[n+lag]`` with a power-law tail beyond the horizon."""
    h = seq.horizon - lag
    q = seq.q
    inside = float(np.dot(q[start + 1 : h + 1], q[start + 1 + lag : h + 1 + lag])) if start < h else 0.0
    alpha = seq.dist.alpha
    base = max(h, start)
    qa = q[min(base, seq.horizon)]
    qb = q[min(base + lag, seq.horizon)]
    return inside + qa * qb * base / (1.0 - 2.0 * alpha)


def correlation_report(
    samples: np.ndarray,
    N: int,
    T: int,
    B: int,
    dist: AgeDistribution,
    p: float,
    lags: Sequence[int],
    horizon: int = 10**6,
) -> CorrelationReport:
    """Turn per-replicate ``(Y(g0), Y(g0+lag)...)`` rows into estimates."""
    reps = samples.shape[0]
    y0 = samples[:, 0]
    c0 = y0 - y0.mean()
    var = float(np.mean(c0 * c0))
    var_se = float(np.std(c0 * c0, ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
    regime = _regime(dist)
    seq = compute_renewal_sequence(dist, horizon) if regime == "transient" else None
    exact_var = exact_variance(N, dist, p, seq=seq) if regime == "transient" else (
        p * (1 - p) if regime == "recurrent" else None
    )
    depth = T // 2 + B
    report = CorrelationReport(
        N=N,
        T=T,
        burn_in=B,
        p=p,
        reps=reps,
        mean_Y=float(y0.mean()),
        mean_Y_stderr=float(y0.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
        variance=var,
        variance_stderr=var_se,
        exact_variance=exact_var,
        bias_note=(
            f"ancestral lines are followed {depth} generations below the measurement generation; "
            "bias_bound is p(1-p)/N times the expected label coincidences beyond that depth"
            if regime == "transient"
            else "lines meet almost surely; the finite burn-in can only lower the covariance"
        ),
    )
    for j, lag in enumerate(lags, start=1):
        yl = samples[:, j]
        cl = yl - yl.mean()
        prod = c0 * cl
        cov = float(prod.mean())
        cov_se = float(prod.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        denom = math.sqrt(float(np.mean(c0 * c0)) * float(np.mean(cl * cl)))
        corr = cov / denom if denom > 0 else math.nan
        corr_se = (1 - corr * corr) / math.sqrt(reps - 3) if reps > 3 and denom > 0 else math.nan
        if regime == "transient":
            exact = exact_covariance(N, dist, lag, p, seq=seq)
            lim = limiting_correlation(dist, lag, seq=seq)
            asym = asymptotic_correlation(dist.alpha, lag, seq=seq)
            bias = p * (1 - p) * _tail_cross_sum(seq, depth, lag) / N
        else:
            exact = p * (1 - p) if regime == "recurrent" else None
            lim = asym = bias = None
        report.lags.append(
            LagEstimate(
                lag=int(lag),
                covariance=cov,
                covariance_stderr=cov_se,
                correlation=corr,
                correlation_stderr=corr_se,
                exact_covariance=exact,
                limiting_correlation=lim,
                asymptotic_correlation=asym,
                bias_bound=bias,
            )
        )
    return report


def estimate_correlation_mc(
    N: int,
    T: int,
    B: int,
    dist: AgeDistribution,
    p: float,
    lags: Sequence[int],
    reps: int,
    rng: np.random.Generator,
    horizon: int = 10**6,
) -> CorrelationReport:
    """Monte Carlo covariance and correlation of the frequency process.

    Each replicate builds a fresh window, types it, and records
    ``Y(-T/2)`` together with ``Y(-T/2 + lag)`` for every lag.
    """
    _check_p(p)
    lags = _validate_lags(T, lags)
    samples = _window_samples(N, T, B, dist, p, lags, reps, rng)
    return correlation_report(samples, N, T, B, dist, p, lags, horizon)


def run_correlation_mc(
    N: int,
    T: int,
    B: int,
    dist: AgeDistribution,
    p: float,
    lags: Sequence[int],
    reps: int,
    seed: int,
    threads: int = 1,
    horizon: int = 10**6,
    chunk: int = 50,
) -> CorrelationReport:
    """Seed-reproducible, chunked version of :func:`estimate_correlation_mc`."""
    _check_p(p)
    lags = _validate_lags(T, lags)
    parts = map_chunks(
        lambda size, rng: _window_samples(N, T, B, dist, p, lags, size, rng), reps, seed, threads, chunk=chunk
    )
    return correlation_report(np.concatenate(parts), N, T, B, dist, p, lags, horizon)


@dataclass
class BoundaryTypes:
    """Types on and below a boundary generation.

    ``below[r, k]`` covers rows ``0..boundary_row``; ``external`` maps
    out-of-window ``(generation, label)`` coordinates to types.
    """

    boundary_generation: int
    below: np.ndarray
    external: Mapping[tuple[int, int], bool]


def boundary_types_from_components(
    window: GenealogyWindow, boundary_generation: int, p: float, rng: np.random.Generator
) -> BoundaryTypes:
    """Type each component of the forest below the boundary independently.

    Out-of-window coordinates all lie below the boundary, and ancestral
    lines of boundary vertices stay below it, so these components are
    exactly the window components (each owns one external root).
    """
    _check_p(p)
    b = window.row(boundary_generation)
    labeling = label_components(window)
    comp_type = rng.random(labeling.count) < p
    external = {(int(g), int(k)): bool(t) for (g, k), t in zip(labeling.external, comp_type)}
    return BoundaryTypes(
        boundary_generation=int(boundary_generation), below=comp_type[labeling.component[: b + 1]], external=external
    )


def propagate_types_conditional(window: GenealogyWindow, boundary: BoundaryTypes) -> TypeField:
    """Type every vertex above the boundary by its first ancestor at or below it.

    No new randomness is used. Raises :class:`IncompleteBoundaryError` if a
    needed out-of-window coordinate has no type.
    """
    b = window.row(boundary.boundary_generation)
    if boundary.below.shape != (b + 1, window.N):
        raise IncompleteBoundaryError(
            [f"rows 0..{b} x {window.N} labels expected, got shape {boundary.below.shape}"]
        )
    types = np.zeros((window.rows, window.N), dtype=bool)
    types[: b + 1] = boundary.below
    prow = window.parent_rows()
    lab = window.parent_label
    # out-of-window parents of vertices above the boundary must be typed
    need = prow[b + 1 :] < 0
    missing = []
    ext_types = {}
    if need.any():
        gens = prow[b + 1 :][need] - window.depth
        labs = lab[b + 1 :][need]
        for g, k in set(zip(gens.tolist(), labs.tolist())):
            if (g, k) in boundary.external:
                ext_types[(g, k)] = boundary.external[(g, k)]
            else:
                missing.append((g, k))
    if missing:
        raise IncompleteBoundaryError(sorted(missing))
    for r in range(b + 1, window.rows):
        pr = prow[r]
        inside = pr >= 0
        row = np.empty(window.N, dtype=bool)
        row[inside] = types[pr[inside], lab[r][inside]]
        for k in np.flatnonzero(~inside):
            row[k] = ext_types[(int(pr[k]) - window.depth, int(lab[r][k]))]
        types[r] = row
    ext_arr = np.array(list(boundary.external.values()), dtype=bool)
    return TypeField(types=types, external_types=ext_arr)


def write_window_csv(path, window: GenealogyWindow, labeling: ComponentLabeling, field_: TypeField) -> None:
    """Debug export: one row per vertex."""
    prow = window.parent_rows()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "label", "parent_generation", "parent_label", "component", "type"])
        for r in range(window.rows):
            g = window.generation(r)
            for k in range(window.N):
                w.writerow([
                    g,
                    k + 1,
                    int(prow[r, k]) - window.depth,
                    int(window.parent_label[r, k]) + 1,
                    int(labeling.component[r, k]),
                    "a" if field_.types[r, k] else "A",
                ])


def write_frequency_csv(path, series: FrequencySeries, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "Y"])
        for g, y in zip(series.generations, series.Y):
            w.writerow([int(g), format(float(y), ".17g")])
