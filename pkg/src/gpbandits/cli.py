"""Command-line entry point: run experiments, verify claims, export results.

Four subcommands:

* ``run``     -- execute one experiment and write ``trace.csv`` (long format,
  one row per seed/agent/step), ``summary.json`` and ``config.echo.json``;
* ``verify``  -- run one of the numerical verification suites and write a
  machine-readable pass/fail report;
* ``mig``     -- greedy information-gain table per prior for a setup;
* ``report``  -- pool several run directories into one merged summary.

Configuration comes from an optional flat ``key = value`` file plus
command-line overrides; the fully resolved configuration is echoed next to
the outputs for provenance.  Identical configurations produce byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import checks
from .environment import (
    DEFAULT_ROSTER,
    SETUP_NAMES,
    ExperimentPlan,
    build_experiment,
    materialize_plan,
    run_experiment,
)
from .metrics import build_bound_report, mig_table, summarize

TRACE_SCHEMA_VERSION = 1
SUMMARY_SCHEMA_VERSION = 1
TRACE_COLUMNS = (
    "seed",
    "agent",
    "t",
    "arm",
    "prior",
    "reward",
    "instant_regret",
    "cum_regret",
    "active_priors",
    "entropy",
)


class ConfigError(ValueError):
    """Invalid run configuration (unknown key, bad value, missing input)."""


# -- configuration ------------------------------------------------------------

_CONFIG_KEYS = {
    "setup": str,
    "T": int,
    "n": int,
    "P": int,
    "delta": float,
    "noise_var": float,
    "seeds": int,
    "seed_base": int,
    "workers": int,
    "agents": str,
    "out": str,
    "skip_bound_report": bool,
    "data.prior_csv": str,
    "data.test_csv": str,
    "data.log_transform": bool,
    "data.ridge": float,
}


def _coerce(key: str, raw: str):
    kind = _CONFIG_KEYS[key]
    if kind is bool:
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"config key {key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"config key {key}: {exc}") from exc


def load_config_file(path) -> dict:
    """Parse a flat ``key = value`` file; unknown keys are rejected."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate config key {key!r}")
            values[key] = _coerce(key, raw)
    return values


def resolve_run_config(args) -> dict:
    """Merge config file and command-line overrides (flags win)."""
    config = load_config_file(args.config) if args.config else {}
    overrides = {
        "setup": args.setup,
        "T": args.T,
        "n": args.n,
        "P": args.P,
        "delta": args.delta,
        "noise_var": args.noise_var,
        "seeds": args.seeds,
        "seed_base": args.seed_base,
        "workers": args.workers,
        "agents": args.agents,
        "out": args.out,
        "skip_bound_report": args.skip_bound_report or None,
        "data.prior_csv": args.prior_csv,
        "data.test_csv": args.test_csv,
        "data.log_transform": args.log_transform or None,
        "data.ridge": args.ridge,
    }
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    if "setup" not in config:
        raise ConfigError("no setup given (flag --setup or config key 'setup')")
    if "out" not in config:
        raise ConfigError("no output directory given (flag --out or key 'out')")
    return config


def plan_from_config(config: dict) -> ExperimentPlan:
    agents = None
    if "agents" in config:
        agents = tuple(a.strip() for a in config["agents"].split(",") if a.strip())
    try:
        return build_experiment(
            config["setup"],
            horizon=config.get("T"),
            num_arms=config.get("n"),
            num_priors=config.get("P"),
            delta=config.get("delta"),
            noise_var=config.get("noise_var"),
            num_seeds=config.get("seeds"),
            seed_base=config.get("seed_base"),
            agents=agents,
            prior_csv=config.get("data.prior_csv"),
            test_csv=config.get("data.test_csv"),
            log_transform=config.get("data.log_transform", False),
            ridge=config.get("data.ridge"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# -- serialization ------------------------------------------------------------


def _fmt(value: float) -> str:
    """Shortest round-trip decimal form, stable across runs."""
    return repr(float(value))


def write_trace(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in records:
            cum = rec.cum_regret
            for i in range(rec.steps):
                prior = rec.prior[i]
                active = rec.active_priors[i]
                entropy = rec.entropy[i]
                writer.writerow(
                    (
                        rec.seed,
                        rec.agent,
                        i + 1,
                        int(rec.arm[i]),
                        int(prior) if prior >= 0 else "",
                        _fmt(rec.reward[i]),
                        _fmt(rec.instant_regret[i]),
                        _fmt(cum[i]),
                        int(active) if active >= 0 else "",
                        _fmt(entropy) if np.isfinite(entropy) else "",
                    )
                )


def _to_jsonable(value):
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {k: _to_jsonable(v) for k, v in dataclasses.asdict(value).items()}
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    return value


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_to_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def summary_payload(summary) -> dict:
    payload = _to_jsonable(summary)
    payload["schema_version"] = SUMMARY_SCHEMA_VERSION
    return payload


# -- subcommands ---------------------------------------------------------------


def cmd_run(args) -> int:
    config = resolve_run_config(args)
    plan = plan_from_config(config)
    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = config.get("workers", os.cpu_count() or 1)

    records = run_experiment(plan, workers=workers)
    hyperprior, _, _ = materialize_plan(plan)

    bound_report = None
    if not config.get("skip_bound_report", False):
        var_sums = [
            r.sum_var_pstar_xstar
            for r in records
            if r.agent == "pe-gp-ts" and np.isfinite(r.sum_var_pstar_xstar)
        ]
        mean_sum_var = float(np.mean(var_sums)) if var_sums else None
        bound_report = build_bound_report(
            hyperprior,
            plan.noise_var,
            plan.delta,
            plan.horizon,
            summarize(records, len(hyperprior), plan.horizon).regret,
            mean_sum_var_pstar=mean_sum_var,
        )

    summary = summarize(
        records,
        len(hyperprior),
        plan.horizon,
        setup=plan.setup,
        num_arms=plan.num_arms,
        noise_var=plan.noise_var,
        delta=plan.delta,
        prior_ids=hyperprior.ids,
        bound_report=bound_report,
    )

    write_trace(out_dir / "trace.csv", records)
    write_json(out_dir / "summary.json", summary_payload(summary))
    echo = dict(sorted(config.items()))
    echo["resolved_plan"] = dataclasses.asdict(plan)
    echo["trace_schema_version"] = TRACE_SCHEMA_VERSION
    write_json(out_dir / "config.echo.json", echo)

    aborted = sum(1 for r in records if r.aborted)
    print(f"wrote {out_dir}/trace.csv ({sum(r.steps for r in records)} rows), "
          f"summary.json, config.echo.json; aborted episodes: {aborted}")
    return 1 if aborted else 0


def cmd_verify(args) -> int:
    suite = args.suite
    workers = args.workers
    if suite == "gp-oracle":
        report = checks.check_gp_oracle()
    elif suite == "lemma1":
        report = checks.check_lemma1_coverage(num_seeds=args.seeds or 500)
    elif suite == "lemma3":
        report = checks.check_lemma3_bound()
    elif suite == "theorem4":
        report = checks.run_theorem4_suite(
            num_seeds=args.seeds or 100, workers=workers
        )
    elif suite == "elimination-safety":
        report = checks.check_elimination_safety(
            num_seeds=args.seeds or 500, workers=workers
        )
    else:
        print(f"unknown verify suite {suite!r}; expected one of "
              f"{checks.VERIFY_SUITES}", file=sys.stderr)
        return 2
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_json(out, report)
    status = "PASS" if report["passed"] else "FAIL"
    print(f"verify {suite}: {status}")
    for key, value in report.items():
        if key in ("suite", "passed", "configs"):
            continue
        print(f"  {key} = {value}")
    if suite == "lemma3":
        for cfg in report["configs"]:
            print(
                f"  p0={cfg['p0']:<5} sep={cfg['separation']:<8.4f} "
                f"estimate={cfg['estimate']:.4f} rhs={cfg['rhs']:.4f} "
                f"margin={cfg['margin']:+.4f} ok={cfg['ok']}"
            )
    return 0 if report["passed"] else 1


def cmd_mig(args) -> int:
    try:
        plan = build_experiment(
            args.setup,
            horizon=args.T,
            num_arms=args.n,
            num_priors=args.P,
            noise_var=args.noise_var,
            prior_csv=args.prior_csv,
            test_csv=args.test_csv,
            log_transform=args.log_transform,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    hyperprior, _, _ = materialize_plan(plan)
    per_prior, mig_max, mig_avg = mig_table(
        hyperprior, plan.noise_var, plan.horizon
    )
    print(f"greedy information gain, setup={plan.setup}, T={plan.horizon}")
    for name, value in per_prior.items():
        print(f"  {name:<16} {value:.4f}")
    print(f"  {'max':<16} {mig_max:.4f}")
    print(f"  {'weighted-avg':<16} {mig_avg:.4f}")
    if args.out:
        write_json(
            Path(args.out),
            {"per_prior": per_prior, "max": mig_max, "avg": mig_avg,
             "setup": plan.setup, "T": plan.horizon},
        )
    return 0


def cmd_report(args) -> int:
    """Pool several run directories into one merged summary."""
    summaries = []
    for run_dir in args.runs:
        path = Path(run_dir) / "summary.json"
        if not path.exists():
            print(f"missing {path}", file=sys.stderr)
            return 2
        with open(path, encoding="utf-8") as fh:
            summaries.append(json.load(fh))
    versions = {s.get("schema_version") for s in summaries}
    if versions != {SUMMARY_SCHEMA_VERSION}:
        print(f"schema version mismatch: {sorted(versions)}", file=sys.stderr)
        return 2
    setups = {s["setup"] for s in summaries}
    horizons = {s["horizon"] for s in summaries}
    if len(setups) != 1 or len(horizons) != 1:
        print("runs differ in setup or horizon; refusing to pool", file=sys.stderr)
        return 2

    merged: dict = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "setup": setups.pop(),
        "horizon": horizons.pop(),
        "num_runs": len(summaries),
        "num_seeds": sum(s["num_seeds"] for s in summaries),
        "agents": {},
    }
    agent_names = sorted({a for s in summaries for a in s["regret"]})
    for agent in agent_names:
        regs = [s["regret"][agent] for s in summaries if agent in s["regret"]]
        finals = [v for r in regs for v in r["per_seed_final"]]
        weights = np.array([r["num_seeds"] for r in regs], dtype=float)
        curves = np.array([r["mean_curve"] for r in regs])
        mean_curve = (weights[:, None] * curves).sum(axis=0) / weights.sum()
        finals_arr = np.array(finals)
        entry = {
            "num_seeds": int(weights.sum()),
            "mean_curve": mean_curve,
            "final_mean": float(finals_arr.mean()),
            "final_se": float(finals_arr.std(ddof=1) / np.sqrt(len(finals)))
            if len(finals) > 1
            else 0.0,
            "final_quantiles": {
                str(q): float(np.percentile(finals_arr, q)) for q in (5, 25, 50, 75, 90, 95)
            },
            "per_seed_final": finals,
        }
        sels = [
            s["selection"][agent]
            for s in summaries
            if agent in s.get("selection", {})
        ]
        if sels:
            counts = np.array([sel["confusion_counts"] for sel in sels]).sum(axis=0)
            row_sums = counts.sum(axis=1)
            pct = np.zeros_like(counts, dtype=float)
            nz = row_sums > 0
            pct[nz] = 100.0 * counts[nz] / row_sums[nz, None]
            acc = [sel["accuracy"] for sel in sels]
            sel_seeds = np.array([r["num_seeds"] for r in regs], dtype=float)
            entry["accuracy"] = float(np.average(acc, weights=sel_seeds))
            entry["confusion_counts"] = counts
            entry["confusion_row_pct"] = pct
        merged["agents"][agent] = entry
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, merged)
    print(f"pooled {len(summaries)} runs into {out}")
    return 0


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpbandits",
        description="GP bandits with joint prior selection: experiments, "
        "verification suites and information-gain tables.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write outputs")
    run.add_argument("--config", help="flat key = value configuration file")
    run.add_argument("--setup", choices=SETUP_NAMES)
    run.add_argument("--T", type=int, help="horizon (default 500)")
    run.add_argument("--n", type=int, help="number of arms (default 500)")
    run.add_argument("--P", type=int, help="number of priors (scaling setups)")
    run.add_argument("--delta", type=float)
    run.add_argument("--noise-var", dest="noise_var", type=float)
    run.add_argument("--seeds", type=int, help="number of seeds (default 100)")
    run.add_argument("--seed-base", dest="seed_base", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--agents", help=f"comma list, default {','.join(DEFAULT_ROSTER)}")
    run.add_argument("--out", help="output directory")
    run.add_argument("--skip-bound-report", action="store_true", default=False)
    run.add_argument("--prior-csv", dest="prior_csv")
    run.add_argument("--test-csv", dest="test_csv")
    run.add_argument("--log-transform", dest="log_transform", action="store_true",
                     default=False)
    run.add_argument("--ridge", type=float)
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="run a numerical verification suite")
    verify.add_argument("suite")
    verify.add_argument("--seeds", type=int)
    verify.add_argument("--workers", type=int)
    verify.add_argument("--out", help="write the JSON report here")
    verify.set_defaults(func=cmd_verify)

    mig = sub.add_parser("mig", help="greedy information-gain table per prior")
    mig.add_argument("--setup", required=True, choices=SETUP_NAMES)
    mig.add_argument("--T", type=int)
    mig.add_argument("--n", type=int)
    mig.add_argument("--P", type=int)
    mig.add_argument("--noise-var", dest="noise_var", type=float)
    mig.add_argument("--prior-csv", dest="prior_csv")
    mig.add_argument("--test-csv", dest="test_csv")
    mig.add_argument("--log-transform", dest="log_transform", action="store_true",
                     default=False)
    mig.add_argument("--out")
    mig.set_defaults(func=cmd_mig)

    report = sub.add_parser("report", help="pool run directories into one summary")
    report.add_argument("runs", nargs="+", help="run directories with summary.json")
    report.add_argument("--out", required=True)
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
