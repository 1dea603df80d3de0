"""Command-line frontend: data ingestion, configuration, and CSV emission.

Loss data lives in two CSV files per cell: a counts file (``year,count``)
listing every observation year including zero-count ones, and an events
file (``year,amount``) whose per-year rows must tally to the counts file.
All emitted CSVs are re-parseable by this module's own readers and are
byte-stable under a fixed seed.

Exit codes: 0 success, 2 validation failure, 3 computation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

from . import bayes
from . import capital as capital_mod
from . import experiments as exp_mod
from .bayes import InsufficientDataError, NIXParams
from .capital import CellModel, LossData
from .distributions import GammaParams, LognormalParams, ParetoParams, RngStream

__all__ = ["main"]

EXIT_VALIDATION = 2
EXIT_COMPUTATION = 3

SEED_ENV_VAR = "RISKCAP_SEED"

DEFAULT_Q = 0.999
DEFAULT_K = 10**6
DEFAULT_GAMMA = 0.95
DEFAULT_M_GRID = (5, 10, 15, 20, 40, 60, 80, 100, 200, 400)

CAPITAL_COLUMNS = ["cell_id", "mode", "q", "K", "value", "ci_lower", "ci_upper", "warnings"]


class ValidationError(Exception):
    """Bad configuration or malformed input data."""


# ---------------------------------------------------------------------------
# Loss file I/O


def read_counts_file(path) -> dict:
    """Parse a counts CSV into {year: count}, with row-numbered diagnostics."""
    counts = {}
    with open(path, newline="") as fh:
        reader = csv.reader(_strip_comments(fh))
        header = next(reader, None)
        if header != ["year", "count"]:
            raise ValidationError(f"{path}: expected header 'year,count', got {header}")
        for i, row in enumerate(reader, start=2):
            try:
                year, count = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise ValidationError(f"{path}:{i}: malformed row {row!r}")
            if count < 0:
                raise ValidationError(f"{path}:{i}: negative count {count}")
            if year in counts:
                raise ValidationError(f"{path}:{i}: duplicate year {year}")
            counts[year] = count
    if not counts:
        raise ValidationError(f"{path}: no observation years")
    return counts


def read_events_file(path) -> list:
    """Parse an events CSV into [(year, amount)], with row-numbered diagnostics."""
    events = []
    with open(path, newline="") as fh:
        reader = csv.reader(_strip_comments(fh))
        header = next(reader, None)
        if header != ["year", "amount"]:
            raise ValidationError(f"{path}: expected header 'year,amount', got {header}")
        for i, row in enumerate(reader, start=2):
            try:
                year, amount = int(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise ValidationError(f"{path}:{i}: malformed row {row!r}")
            if not amount > 0:
                raise ValidationError(f"{path}:{i}: non-positive amount {amount}")
            events.append((year, amount))
    return events


def load_loss_data(counts_path, events_path) -> LossData:
    """Read and cross-validate the two-file loss format."""
    counts = read_counts_file(counts_path)
    events = read_events_file(events_path)
    tallies = {}
    for year, _ in events:
        if year not in counts:
            raise ValidationError(
                f"{events_path}: event year {year} missing from counts file "
                "(zero-count years must still appear in counts)"
            )
        tallies[year] = tallies.get(year, 0) + 1
    for year, n in counts.items():
        if tallies.get(year, 0) != n:
            raise ValidationError(
                f"tally mismatch for year {year}: counts file says {n}, "
                f"events file has {tallies.get(year, 0)}"
            )
    years = sorted(counts)
    annual = [counts[y] for y in years]
    by_year = {y: [] for y in years}
    for year, amount in events:
        by_year[year].append(amount)
    severities = [a for y in years for a in by_year[y]]
    return LossData(annual_counts=np.array(annual), severities=np.array(severities))


def write_loss_files(data: LossData, counts_path, events_path, start_year: int = 1):
    with open(counts_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "count"])
        for i, c in enumerate(data.annual_counts):
            w.writerow([start_year + i, int(c)])
    with open(events_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "amount"])
        k = 0
        for i, c in enumerate(data.annual_counts):
            for _ in range(int(c)):
                w.writerow([start_year + i, repr(float(data.severities[k]))])
                k += 1


def _strip_comments(fh):
    for line in fh:
        if not line.startswith("#"):
            yield line


# ---------------------------------------------------------------------------
# Config


def _parse_bound(v):
    return float("-inf") if v is None else float(v)


def _cell_from_config(c: dict) -> CellModel:
    if "severity_family" not in c:
        raise ValidationError("each cell must declare a severity_family")
    freq_prior = None
    if c.get("freq_prior"):
        freq_prior = GammaParams(**c["freq_prior"])
    sev_prior = None
    if c.get("sev_prior"):
        p = c["sev_prior"]
        sev_prior = NIXParams(**p) if c["severity_family"] == "lognormal" else GammaParams(**p)
    truncation = None
    if c.get("truncation"):
        truncation = {}
        for name, (lo, hi) in c["truncation"].items():
            truncation[name] = (
                float("-inf") if lo is None else float(lo),
                float("inf") if hi is None else float(hi),
            )
    try:
        return CellModel(
            cell_id=c.get("id", "cell"),
            severity_family=c["severity_family"],
            threshold_L=c.get("threshold_L"),
            freq_prior=freq_prior,
            sev_prior=sev_prior,
            truncation=truncation,
            enforce_finite_mean=bool(c.get("enforce_finite_mean", False)),
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"invalid cell config: {e}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"cannot read config {path}: {e}")
    if "cells" not in cfg or not cfg["cells"]:
        raise ValidationError("config must define at least one cell")
    return cfg


def resolve_seed(flag_seed, config_seed=None):
    """Seed precedence: flag, then RISKCAP_SEED env var, then config, then clock."""
    if flag_seed is not None:
        return int(flag_seed)
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"{SEED_ENV_VAR} must be an unsigned decimal, got {env!r}")
    if config_seed is not None:
        return int(config_seed)
    return time.time_ns() % 2**63


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(args):
    seed = resolve_seed(args.seed)
    if args.family == "lognormal":
        sev = LognormalParams(mu=args.mu0, sigma_sq=args.sigma0**2)
    else:
        sev = ParetoParams(xi=args.xi0, threshold_L=args.threshold_L)
    model = exp_mod.TrueModel(lambda0=args.lambda0, severity=sev)
    data = exp_mod.generate_synthetic(model, args.years, RngStream(seed).substream("simulate"))
    write_loss_files(data, args.counts_out, args.events_out)
    print(f"# seed={seed}")
    print(
        f"wrote {data.years} years ({int(data.severities.size)} events) "
        f"to {args.counts_out} and {args.events_out}"
    )
    return 0


def _fmt(x, digits=4):
    return f"{x:.{digits}g}"


def cmd_fit(args):
    cfg = load_config(args.config)
    seed = resolve_seed(args.seed, cfg.get("seed"))
    rows = []
    print(f"# seed={seed}")
    for c in cfg["cells"]:
        model = _cell_from_config(c)
        data = load_loss_data(c["counts_file"], c["events_file"])
        mle = capital_mod.fit_mle(model, data)
        post_freq, post_sev = capital_mod.fit_posteriors(model, data)

        print(f"cell {model.cell_id} ({model.severity_family} severity, "
              f"{data.years} years, {data.severities.size} events)")
        lam_iv = bayes.credible_interval(post_freq, 0.95)["lambda"]
        print(f"  lambda: {_fmt(mle.lambda_hat)} ({_fmt(lam_iv[0])}, {_fmt(lam_iv[1])})")
        rows.append([model.cell_id, "lambda", mle.lambda_hat, lam_iv[0], lam_iv[1]])
        sev_iv = bayes.credible_interval(post_sev, 0.95)
        if model.severity_family == "lognormal":
            mu_iv = sev_iv["mu"]
            sig_iv = tuple(np.sqrt(sev_iv["sigma_sq"]))
            sigma_hat = float(np.sqrt(mle.sigma_sq_hat))
            print(f"  mu:     {_fmt(mle.mu_hat)} ({_fmt(mu_iv[0])}, {_fmt(mu_iv[1])})")
            print(f"  sigma:  {_fmt(sigma_hat)} ({_fmt(sig_iv[0])}, {_fmt(sig_iv[1])})")
            rows.append([model.cell_id, "mu", mle.mu_hat, mu_iv[0], mu_iv[1]])
            rows.append([model.cell_id, "sigma", sigma_hat, sig_iv[0], sig_iv[1]])
        else:
            xi_iv = sev_iv["xi"]
            print(f"  xi:     {_fmt(mle.xi_hat)} ({_fmt(xi_iv[0])}, {_fmt(xi_iv[1])})")
            rows.append([model.cell_id, "xi", mle.xi_hat, xi_iv[0], xi_iv[1]])
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(f"# seed={seed}\n")
            w = csv.writer(fh)
            w.writerow(["cell_id", "parameter", "estimate", "ci_lower", "ci_upper"])
            for row in rows:
                w.writerow([row[0], row[1]] + [repr(float(v)) for v in row[2:]])
    return 0


def cmd_capital(args):
    cfg = load_config(args.config)
    q = args.q if args.q is not None else cfg.get("q", DEFAULT_Q)
    K = args.K if args.K is not None else cfg.get("K", DEFAULT_K)
    gamma = args.gamma if args.gamma is not None else cfg.get("gamma", DEFAULT_GAMMA)
    mode = args.mode if args.mode is not None else cfg.get("mode", "both")
    seed = resolve_seed(args.seed, cfg.get("seed"))
    if mode not in ("conditional", "predictive", "both"):
        raise ValidationError(f"mode must be conditional, predictive, or both, got {mode!r}")

    reports = []
    for c in cfg["cells"]:
        model = _cell_from_config(c)
        data = load_loss_data(c["counts_file"], c["events_file"])
        if mode in ("conditional", "both"):
            reports.append(
                capital_mod.conditional_capital(model, data, q, K, gamma, seed, workers=args.workers)
            )
        if mode in ("predictive", "both"):
            reports.append(
                capital_mod.predictive_capital(model, data, q, K, gamma, seed, workers=args.workers)
            )

    out = io.StringIO()
    out.write(f"# seed={seed}\n")
    w = csv.writer(out)
    w.writerow(CAPITAL_COLUMNS)
    for r in reports:
        e = r.estimate
        w.writerow(
            [
                r.cell_id,
                r.mode,
                repr(float(e.q)),
                e.K,
                repr(float(e.value)),
                repr(float(e.ci_lower)),
                repr(float(e.ci_upper)),
                "; ".join(r.warnings),
            ]
        )
    text = out.getvalue()
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            fh.write(text)
    print(f"# seed={seed}")
    for r in reports:
        e = r.estimate
        line = (
            f"{r.cell_id} [{r.mode}] Q_{e.q:g} = {_fmt(e.value)} "
            f"(CI {_fmt(e.ci_lower)}, {_fmt(e.ci_upper)} at {e.ci_level:g}, K={e.K})"
        )
        print(line)
        for msg in r.warnings:
            print(f"  warning: {msg}")
    return 0


def read_capital_csv(path):
    """Re-parse a capital CSV emitted by cmd_capital (round-trip contract)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(_strip_comments(fh))
        header = next(reader, None)
        if header != CAPITAL_COLUMNS:
            raise ValidationError(f"{path}: unexpected capital CSV header {header}")
        for row in reader:
            rows.append(
                {
                    "cell_id": row[0],
                    "mode": row[1],
                    "q": float(row[2]),
                    "K": int(row[3]),
                    "value": float(row[4]),
                    "ci_lower": float(row[5]),
                    "ci_upper": float(row[6]),
                    "warnings": row[7],
                }
            )
    if not rows:
        raise ValidationError(f"{path}: no capital rows")
    return rows


def cmd_aggregate(args):
    rows = []
    for path in args.inputs:
        rows.extend(read_capital_csv(path))
    modes = {r["mode"] for r in rows}
    qs = {r["q"] for r in rows}
    if len(modes) > 1 or len(qs) > 1:
        raise ValidationError(
            f"cannot aggregate mixed inputs: modes={sorted(modes)}, q={sorted(qs)}"
        )
    total = sum(r["value"] for r in rows)
    out = io.StringIO()
    w = csv.writer(out)
    w.writerow(CAPITAL_COLUMNS)
    for r in rows:
        w.writerow(
            [r["cell_id"], r["mode"], repr(r["q"]), r["K"], repr(r["value"]),
             repr(r["ci_lower"]), repr(r["ci_upper"]), r["warnings"]]
        )
    w.writerow(["TOTAL", rows[0]["mode"], repr(rows[0]["q"]), "", repr(total), "", "",
                capital_mod.AGGREGATION_NOTE])
    text = out.getvalue()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    print(f"bank total [{rows[0]['mode']}] Q_{rows[0]['q']:g} = {_fmt(total)}")
    print(f"note: {capital_mod.AGGREGATION_NOTE}")
    return 0


def _true_model_from_args(args) -> exp_mod.TrueModel:
    if args.severity == "lognormal":
        sev = LognormalParams(mu=args.mu0, sigma_sq=args.sigma0**2)
    else:
        sev = ParetoParams(xi=args.xi0, threshold_L=args.threshold_L)
    return exp_mod.TrueModel(lambda0=args.lambda0, severity=sev)


def cmd_experiment(args):
    seed = resolve_seed(args.seed)
    model = _true_model_from_args(args)
    m_grid = [int(m) for m in args.m_grid.split(",")] if args.m_grid else list(DEFAULT_M_GRID)
    K = args.K if args.K is not None else (10**6 if args.full_scale else 10**5)

    if args.which == "track":
        records = exp_mod.single_realization_track(model, m_grid, args.q, K, seed)
        with open(args.out, "w", newline="") as fh:
            fh.write(f"# seed={seed}\n")
            w = csv.writer(fh)
            if args.severity == "lognormal":
                w.writerow(
                    ["M", "K", "mu_hat", "mu_lo", "mu_hi", "sigma_hat", "sigma_lo",
                     "sigma_hi", "lambda_hat", "lambda_lo", "lambda_hi",
                     "q_conditional", "q_predictive"]
                )
                for r in records:
                    w.writerow(
                        [r.M, r.K_data]
                        + [repr(float(v)) for v in r.mu_est + r.sigma_est + r.lambda_est]
                        + [repr(float(r.q_conditional)), repr(float(r.q_predictive))]
                    )
            else:
                w.writerow(
                    ["M", "K", "xi_hat", "xi_lo", "xi_hi", "lambda_hat", "lambda_lo",
                     "lambda_hi", "q_conditional", "q_predictive"]
                )
                for r in records:
                    w.writerow(
                        [r.M, r.K_data]
                        + [repr(float(v)) for v in r.xi_est + r.lambda_est]
                        + [repr(float(r.q_conditional)), repr(float(r.q_predictive))]
                    )
        print(f"# seed={seed}")
        print(f"wrote {len(records)} rows to {args.out} (quantiles in thousands)")
    else:
        R = args.R if args.R is not None else (100 if args.full_scale else 20)
        curve = exp_mod.bias_study(model, m_grid, R, args.q, K, seed)
        with open(args.out, "w", newline="") as fh:
            fh.write(f"# seed={seed}\n")
            fh.write(f"# realizations={curve.realizations}\n")
            fh.write(f"# reference_quantile={curve.reference_quantile!r}\n")
            w = csv.writer(fh)
            w.writerow(["M", "relative_bias"])
            for M, b in curve.points:
                w.writerow([M, repr(float(b))])
        print(f"# seed={seed}")
        print(f"wrote {len(curve.points)} rows to {args.out} (R={R}, K={K})")
    return 0


# ---------------------------------------------------------------------------
# Parser / entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskcap", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="write synthetic loss files")
    sim.add_argument("--family", choices=["lognormal", "pareto"], required=True)
    sim.add_argument("--lambda0", type=float, required=True)
    sim.add_argument("--mu0", type=float, default=1.0)
    sim.add_argument("--sigma0", type=float, default=2.0)
    sim.add_argument("--xi0", type=float, default=2.0)
    sim.add_argument("--threshold-L", type=float, default=1.0)
    sim.add_argument("--years", type=int, required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--counts-out", required=True)
    sim.add_argument("--events-out", required=True)
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="MLEs and posterior summaries")
    fit.add_argument("--config", required=True)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--csv")
    fit.set_defaults(func=cmd_fit)

    cap = sub.add_parser("capital", help="conditional and/or predictive capital")
    cap.add_argument("--config", required=True)
    cap.add_argument("--q", type=float)
    cap.add_argument("--K", type=int)
    cap.add_argument("--gamma", type=float)
    cap.add_argument("--mode", choices=["conditional", "predictive", "both"])
    cap.add_argument("--seed", type=int)
    cap.add_argument("--workers", type=int, default=1)
    cap.add_argument("--csv")
    cap.set_defaults(func=cmd_capital)

    exp = sub.add_parser("experiment", help="synthetic bias studies")
    exp.add_argument("which", choices=["track", "bias"])
    exp.add_argument("--severity", choices=["lognormal", "pareto"], default="lognormal")
    exp.add_argument("--lambda0", type=float, default=10.0)
    exp.add_argument("--mu0", type=float, default=1.0)
    exp.add_argument("--sigma0", type=float, default=2.0)
    exp.add_argument("--xi0", type=float, default=2.0)
    exp.add_argument("--threshold-L", type=float, default=1.0)
    exp.add_argument("--m-grid", help="comma-separated year counts")
    exp.add_argument("--q", type=float, default=DEFAULT_Q)
    exp.add_argument("--K", type=int)
    exp.add_argument("--R", type=int)
    exp.add_argument("--full-scale", action="store_true",
                     help="R=100, K=1e6 (slow); default desk scale is R=20, K=1e5")
    exp.add_argument("--seed", type=int)
    exp.add_argument("--out", required=True)
    exp.set_defaults(func=cmd_experiment)

    agg = sub.add_parser("aggregate", help="sum per-cell capital CSVs")
    agg.add_argument("inputs", nargs="+")
    agg.add_argument("--out")
    agg.set_defaults(func=cmd_aggregate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, InsufficientDataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_COMPUTATION


if __name__ == "__main__":
    sys.exit(main())
