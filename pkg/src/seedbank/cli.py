"""Command-line front end: JSON-configured, seeded batch experiments.

Every subcommand reads ``--config <json>``, writes CSV/JSON artifacts into
``--out <dir>`` and echoes the resolved configuration into each artifact.
Exit codes: 0 success, 2 configuration error, 3 regime error (a formula
requested outside its validity regime), 4 resource error.

Output schemas
--------------
renewal-seq       q.csv            n,q_n
                  summary.json     residual, sum of q_n^2 with its decade diagnostic
tmrca             tmrca.csv        replicate,tau,merged        (n = 2; tau = -1 if censored)
                                   replicate,tmrca,blocks_left (n > 2)
                  summary.json     met/censored fractions, conditional means, targets
kingman-survival  survival.csv     t,estimate,lower,upper,stderr,kingman
                  summary.json     KS test of tau/N against Exp(beta^2), censoring
urn-stationarity  stationarity.csv state,nu                    (finite support)
                  summary.json     exact residual; Monte Carlo chi-square if replicates given
merger-rate       merger_rate.csv  statistic,value
                  summary.json     mean leading single-merger term vs beta_1^2 C(n,2)/N
forward-corr      correlation.csv  lag,covariance,covariance_stderr,exact_covariance,bias_bound,
                                   correlation,correlation_stderr,limiting_correlation,asymptotic_correlation
                  summary.json     full report, E[Y] and variance
tauberian         tauberian.csv    i,partial_sum,partial_asymptote,partial_ratio,cross_sum,
                                   cross_asymptote,cross_ratio,cross_ratio_limit_constant
                  summary.json     ratios and the decade diagnostic of sum q_n^2
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import ancestry, forward, renewal, urn
from .distributions import AgeDistribution, from_dict, to_dict
from .errors import InvalidParameterError, RegimeError, ResourceError
from .stats import chi_square_gof, ks_statistic, summarize
from .streams import map_chunks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_REGIME = 3
EXIT_RESOURCE = 4

_COUNT_FIELDS = ("N", "n", "horizon", "T", "replicates")
KNOWN_FIELDS = frozenset(
    ("distribution", "burn_in", "p", "lags", "seed", "output", "times", "indices") + _COUNT_FIELDS
)

REQUIRED = {
    "renewal-seq": ("distribution", "horizon"),
    "tmrca": ("distribution", "N", "horizon", "replicates", "seed"),
    "kingman-survival": ("distribution", "N", "replicates", "seed"),
    "urn-stationarity": ("distribution", "n"),
    "merger-rate": ("distribution", "n", "N", "replicates", "seed"),
    "forward-corr": ("distribution", "N", "T", "burn_in", "p", "lags", "replicates", "seed"),
    "tauberian": ("distribution", "horizon"),
}


class ConfigError(Exception):
    pass


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def load_config(path) -> dict:
    """Parse a JSON object; parse errors name the line and column."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return raw


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def validate(raw: dict, command: str | None = None) -> ValidationReport:
    """Violations and regime warnings for a raw config.

    Without ``command`` only ``distribution`` is required.
    """
    rep = ValidationReport()
    for key in sorted(set(raw) - KNOWN_FIELDS):
        rep.errors.append(f"unknown field '{key}'")
    required = REQUIRED[command] if command else ("distribution",)
    for key in required:
        if key not in raw:
            rep.errors.append(f"missing field '{key}'")
    for key in _COUNT_FIELDS:
        if key in raw and not (_is_int(raw[key]) and raw[key] > 0):
            rep.errors.append(f"field '{key}' must be a positive integer, got {raw[key]!r}")
    if "burn_in" in raw and not (_is_int(raw["burn_in"]) and raw["burn_in"] >= 0):
        rep.errors.append(f"field 'burn_in' must be a non-negative integer, got {raw['burn_in']!r}")
    if "p" in raw and not (_is_num(raw["p"]) and 0 <= raw["p"] <= 1):
        rep.errors.append(f"field 'p' must lie in [0, 1], got {raw['p']!r}")
    if "seed" in raw and not (_is_int(raw["seed"]) and 0 <= raw["seed"] < 2**64):
        rep.errors.append(f"field 'seed' must be an integer in [0, 2^64), got {raw['seed']!r}")
    if "output" in raw and not isinstance(raw["output"], str):
        rep.errors.append("field 'output' must be a string path")
    for key in ("lags", "indices"):
        if key in raw:
            v = raw[key]
            if not (isinstance(v, list) and v and all(_is_int(x) and x > 0 for x in v)):
                rep.errors.append(f"field '{key}' must be a non-empty list of positive integers")
    if "times" in raw:
        v = raw["times"]
        if not (isinstance(v, list) and v and all(_is_num(x) and x > 0 for x in v)):
            rep.errors.append("field 'times' must be a non-empty list of positive numbers")
    if "distribution" in raw:
        try:
            dist = from_dict(raw["distribution"])
        except (InvalidParameterError, TypeError) as exc:
            rep.errors.append(f"field 'distribution': {exc}")
        else:
            rep.warnings.extend(regime_warnings(dist))
    return rep


def regime_warnings(dist: AgeDistribution) -> list[str]:
    out = []
    if not dist.satisfies_assumption:
        out.append("age distribution puts no mass on 1; the model assumes mu(1) > 0")
    if dist.kind == "power_law":
        a = dist.alpha
        if a == 0.5:
            out.append(
                "alpha = 1/2 is a boundary case: whether two lines meet depends on the slowly "
                "varying factor L and is not covered by the limit theorems"
            )
        elif a == 1.0:
            out.append(
                "alpha = 1 is a boundary case: finiteness of the mean depends on the slowly "
                "varying factor L and is not covered by the limit theorems"
            )
        elif abs(a - 0.5) < 0.05:
            out.append(f"alpha = {a} is close to 1/2: sums of q_n^2 converge very slowly")
        elif abs(a - 1.0) < 0.05:
            out.append(f"alpha = {a} is close to 1: the mean age is huge or infinite")
    return out


# ---------------------------------------------------------------- output


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _json_value(v, indent: int) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g") if math.isfinite(v) else "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        if not v:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_value(x, indent + 1)}" for k, x in v.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        if len(v) == 0:
            return "[]"
        return "[" + ", ".join(_json_value(x, indent + 1) for x in v) + "]"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dump_json(obj) -> str:
    """JSON with every float at 17 significant digits (non-finite as null)."""
    return _json_value(obj, 0) + "\n"


@dataclass
class Run:
    command: str
    config: dict
    out: Path
    threads: int
    dist: AgeDistribution
    files: list[str] = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.config["seed"]

    def header(self) -> list[str]:
        return [f"command: {self.command}", "config: " + json.dumps(self.config, sort_keys=True)]

    def write_csv(self, name: str, columns, rows) -> None:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            for line in self.header():
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([fmt(x) for x in row])
        self.files.append(str(path))

    def write_json(self, name: str, payload: dict) -> None:
        path = self.out / name
        body = {"command": self.command, "config": self.config}
        body.update(payload)
        path.write_text(dump_json(body))
        self.files.append(str(path))


# ---------------------------------------------------------------- commands


def cmd_renewal_seq(run: Run) -> None:
    seq = renewal.compute_renewal_sequence(run.dist, run.config["horizon"])
    renewal.write_csv(seq, run.out / "q.csv", header_lines=run.header())
    run.files.append(str(run.out / "q.csv"))
    diag = renewal.sum_q_squared(seq)
    run.write_json(
        "summary.json",
        {
            "residual": renewal.renewal_equation_residual(seq),
            "sum_q_squared": diag.value,
            "last_decade_increment": diag.last_decade_increment,
            "relative_increment": diag.relative_increment,
            "converged": diag.converged,
        },
    )


def _pair_targets(dist: AgeDistribution, N: int, horizon: int) -> dict:
    out: dict[str, Any] = {}
    mu = dist.mean
    if math.isfinite(mu):
        out["limit_mean_tau_over_N"] = mu * mu
    if dist.kind == "power_law" and dist.alpha < 0.5:
        seq = renewal.compute_renewal_sequence(dist, horizon)
        diag = renewal.sum_q_squared(seq, start=1)
        out["exact_meeting_probability"] = ancestry.exact_meeting_probability(
            N, dist, 0, horizon, seq=seq, check_convergence=False
        )
        out["meeting_horizon_bias"] = ancestry.meeting_horizon_bias(seq, N, 0)
        out["meeting_sum_relative_increment"] = diag.relative_increment
        out["meeting_sum_converged"] = diag.converged
    return out


def cmd_tmrca(run: Run) -> None:
    c = run.config
    N, H, reps, n = c["N"], c["horizon"], c["replicates"], c.get("n", 2)
    if n == 2:
        sample = ancestry.run_pair_tmrca(N, run.dist, H, reps, run.seed, run.threads)
        run.write_csv(
            "tmrca.csv",
            ["replicate", "tau", "merged"],
            ((i, t, t >= 0) for i, t in enumerate(sample.tau)),
        )
        payload = sample.summary(scale=N)
        payload.update(_pair_targets(run.dist, N, H))
        run.write_json("summary.json", payload)
        return

    def batch(size, rng):
        rows = []
        for _ in range(size):
            traj = ancestry.simulate_ancestral_partition(N, n, run.dist, H, rng)
            rows.append((-1 if traj.tmrca is None else traj.tmrca, traj.final_count))
        return rows

    rows = [r for part in map_chunks(batch, reps, run.seed, run.threads, chunk=100) for r in part]
    run.write_csv("tmrca.csv", ["replicate", "tmrca", "blocks_left"], ((i, t, b) for i, (t, b) in enumerate(rows)))
    done = np.array([t for t, _ in rows if t >= 0], dtype=np.float64)
    payload = {
        "replicates": reps,
        "censored": reps - done.size,
        "mean_tmrca": summarize(done).as_dict(),
        "mean_tmrca_over_N": summarize(done / N).as_dict(),
    }
    if math.isfinite(run.dist.mean):
        payload["kingman_mean_tmrca_over_N"] = ancestry.expected_kingman_tmrca(n, run.dist.beta)
    run.write_json("summary.json", payload)


def cmd_kingman_survival(run: Run) -> None:
    c = run.config
    N, reps = c["N"], c["replicates"]
    dist = run.dist
    if math.isinf(dist.mean):
        raise RegimeError("the Kingman time change requires a finite mean age: alpha > 1")
    beta = dist.beta
    rate = beta * beta
    times = c.get("times") or [0.5, 1.0, 2.0, 4.0]
    H = c.get("horizon") or int(math.ceil(N * max(max(times), 40.0 / rate)))
    if N < 100:
        warnings.warn(f"N = {N} is small for the large-N limit", stacklevel=1)
    sample = ancestry.run_pair_tmrca(N, dist, H, reps, run.seed, run.threads)
    points = ancestry.survival_points(sample, times, beta)
    run.write_csv(
        "survival.csv",
        ["t", "estimate", "lower", "upper", "stderr", "kingman"],
        ((p.t, p.estimate, p.lower, p.upper, p.stderr, p.kingman) for p in points),
    )
    scaled = np.sort(np.where(sample.tau < 0, H, sample.tau) / N)
    d, pval = ks_statistic(scaled, lambda x: 1.0 - np.exp(-rate * x))
    run.write_json(
        "summary.json",
        {
            "beta": beta,
            "exponential_rate": rate,
            "horizon": H,
            "censored": sample.censored_count,
            "ks_statistic": d,
            "ks_p_value": pval,
            "mean_tau_over_N": summarize(scaled).as_dict(),
            "kingman_mean_tau_over_N": 1.0 / rate,
        },
    )


def cmd_urn_stationarity(run: Run) -> None:
    c = run.config
    n, dist = c["n"], run.dist
    payload: dict[str, Any] = {}
    width = dist.support_max
    if width is not None:
        states = urn.enumerate_states(n, width)
        beta = urn.stationary_weights(dist, width)[1:]
        run.write_csv(
            "stationarity.csv",
            ["state", "nu"],
            (("|".join(map(str, s)), urn._multinomial_pmf(n, s, beta)) for s in states),
        )
        payload["exact_max_residual"] = urn.verify_stationarity_exact(n, dist)
    if "replicates" in c:
        if "seed" not in c:
            raise ConfigError("missing field 'seed' (required with 'replicates')")
        reps = c["replicates"]

        def batch(size, rng):
            starts = urn.sample_stationary(n, dist, rng, size)
            return [urn.step_urn(s, dist, rng) for s in starts]

        stepped = [s for part in map_chunks(batch, reps, c["seed"], run.threads) for s in part]
        if width is not None:
            index = {s: i for i, s in enumerate(states)}
            obs = np.zeros(len(states))
            for s in stepped:
                obs[index[s.as_tuple() + (0,) * (width - len(s.as_tuple()))]] += 1
            probs = np.array([urn._multinomial_pmf(n, s, beta) for s in states])
            what = "state"
        else:
            # urn-1 occupancy is Binomial(n, beta_1) under the stationary law
            from scipy import stats as sps

            obs = np.bincount([s[1] for s in stepped], minlength=n + 1).astype(np.float64)
            probs = sps.binom.pmf(np.arange(n + 1), n, dist.beta)
            what = "urn-1 occupancy"
        stat, dof, pval = chi_square_gof(obs, probs)
        payload["monte_carlo"] = {"compared": what, "chi_square": stat, "dof": dof, "p_value": pval, "replicates": reps}
    if not payload:
        raise ConfigError("infinite support: give 'replicates' and 'seed' for the Monte Carlo check")
    run.write_json("summary.json", payload)


def cmd_merger_rate(run: Run) -> None:
    c = run.config
    n, N, reps, dist = c["n"], c["N"], c["replicates"], run.dist

    def batch(size, rng):
        states = urn.sample_stationary(n, dist, rng, size)
        return np.array([urn.single_merger_probability_leading(s, dist, N) for s in states])

    values = np.concatenate(map_chunks(batch, reps, run.seed, run.threads))
    est = summarize(values)
    target = urn.stationary_merger_rate(n, dist, N)
    rows = [("mean_leading_term", est.mean), ("stderr", est.stderr), ("target", target), ("z", est.z(target))]
    run.write_csv("merger_rate.csv", ["statistic", "value"], rows)
    run.write_json("summary.json", {"estimate": est.as_dict(), "target": target, "z": est.z(target)})


def cmd_forward_corr(run: Run) -> None:
    c = run.config
    report = forward.run_correlation_mc(
        c["N"], c["T"], c["burn_in"], run.dist, c["p"], c["lags"], c["replicates"], run.seed,
        run.threads, horizon=c.get("horizon", 10**6),
    )
    run.write_csv(
        "correlation.csv",
        ["lag", "covariance", "covariance_stderr", "exact_covariance", "bias_bound", "correlation",
         "correlation_stderr", "limiting_correlation", "asymptotic_correlation"],
        (
            (e.lag, e.covariance, e.covariance_stderr, e.exact_covariance, e.bias_bound, e.correlation,
             e.correlation_stderr, e.limiting_correlation, e.asymptotic_correlation)
            for e in report.lags
        ),
    )
    run.write_json("summary.json", report.as_dict())


def cmd_tauberian(run: Run) -> None:
    c = run.config
    dist = run.dist
    if dist.kind != "power_law" or not 0 < dist.alpha < 1:
        raise RegimeError("Tauberian asymptotes require PowerLaw(alpha) with 0 < alpha < 1")
    H = c["horizon"]
    alpha = dist.alpha
    seq = renewal.compute_renewal_sequence(dist, H)
    indices = c.get("indices") or [10**k for k in range(1, int(math.log10(H))) if 10**k <= H // 10]
    partial = np.cumsum(seq.q)
    with_cross = alpha < 0.5
    rows = []
    for i in indices:
        if i > H:
            raise InvalidParameterError(f"index {i} exceeds horizon {H}")
        ps = partial[i]
        pa = renewal.tauberian_partial_sum_asymptote(alpha, i)
        row = [i, ps, pa, ps / pa]
        if with_cross:
            cs = renewal.cross_sum(seq, i).value
            ca = renewal.tauberian_cross_sum_asymptote(alpha, i)
            cl = renewal.cross_sum_limit_constant(alpha) * i ** (2 * alpha - 1)
            row += [cs, ca, cs / ca, cs / cl]
        else:
            row += [None] * 4
        rows.append(row)
    run.write_csv(
        "tauberian.csv",
        ["i", "partial_sum", "partial_asymptote", "partial_ratio", "cross_sum", "cross_asymptote",
         "cross_ratio", "cross_ratio_limit_constant"],
        rows,
    )
    diag = renewal.sum_q_squared(seq)
    run.write_json(
        "summary.json",
        {
            "rows": [dict(zip(["i", "partial_ratio", "cross_ratio", "cross_ratio_limit_constant"],
                              [r[0], r[3], r[6], r[7]])) for r in rows],
            "sum_q_squared": diag.value,
            "last_decade_increment": diag.last_decade_increment,
            "relative_increment": diag.relative_increment,
        },
    )


COMMANDS: dict[str, Callable[[Run], None]] = {
    "renewal-seq": cmd_renewal_seq,
    "tmrca": cmd_tmrca,
    "kingman-survival": cmd_kingman_survival,
    "urn-stationarity": cmd_urn_stationarity,
    "merger-rate": cmd_merger_rate,
    "forward-corr": cmd_forward_corr,
    "tauberian": cmd_tauberian,
}

HELP = {
    "renewal-seq": "renewal probabilities q_0..q_H (q.csv: n,q_n)",
    "tmrca": "pair (or n-sample) time to the most recent common ancestor (tmrca.csv)",
    "kingman-survival": "P(tau > tN) against exp(-beta^2 t) and a KS test (survival.csv)",
    "urn-stationarity": "exact and Monte Carlo stationarity of the multinomial urn law (stationarity.csv)",
    "merger-rate": "stationary average of the single-merger probability (merger_rate.csv)",
    "forward-corr": "covariances and correlations of type frequencies (correlation.csv)",
    "tauberian": "partial-sum and cross-sum ratios against their power-law asymptotes (tauberian.csv)",
}


def run(command: str, raw: dict, out: str | None = None, seed: int | None = None, threads: int = 1) -> Run:
    """Validate ``raw``, apply overrides and execute ``command``."""
    config = dict(raw)
    if seed is not None:
        config["seed"] = seed
    if out is not None:
        config["output"] = out
    rep = validate(config, command)
    if not rep.ok:
        raise ConfigError("; ".join(rep.errors))
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if "output" not in config:
        raise ConfigError("missing output directory: pass --out or set 'output'")
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    dist = from_dict(config["distribution"])
    config["distribution"] = to_dict(dist)
    outdir = Path(config.pop("output"))
    outdir.mkdir(parents=True, exist_ok=True)
    r = Run(command=command, config=config, out=outdir, threads=threads, dist=dist)
    COMMANDS[command](r)
    return r


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="seedbank",
        description="Seeded experiments for coalescence with long-range parent ages.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="exit codes: 0 ok, 2 config error, 3 regime error, 4 resource error\n\n" + __doc__.split("Output schemas\n--------------\n")[1],
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        s = sub.add_parser(name, help=text, description=text)
        s.add_argument("--config", required=True, help="JSON config file")
        s.add_argument("--out", help="output directory (overrides 'output')")
        s.add_argument("--seed", type=int, help="master seed, unsigned 64-bit (overrides 'seed')")
        s.add_argument("--threads", type=int, default=1, help="worker threads; affects speed only")
    v = sub.add_parser("validate", help="check a config and report violations and regime warnings")
    v.add_argument("--config", required=True)
    v.add_argument("--for", dest="target", choices=sorted(COMMANDS), help="check the fields this subcommand needs")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        if args.command == "validate":
            rep = validate(raw, args.target)
            for e in rep.errors:
                print(f"error: {e}")
            for w in rep.warnings:
                print(f"warning: {w}")
            if rep.ok and not rep.warnings:
                print("ok")
            return EXIT_OK if rep.ok else EXIT_CONFIG
        r = run(args.command, raw, out=args.out, seed=args.seed, threads=args.threads)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RegimeError as exc:
        print(f"regime error: {exc}", file=sys.stderr)
        return EXIT_REGIME
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    for f in r.files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
