"""Readers for gpbandits run outputs (summary.json / trace.csv).

Figures are rendered strictly from the files a run emitted; nothing is
recomputed from raw episodes beyond per-seed grouping of trace rows.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

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


class SchemaError(ValueError):
    """Input file does not match the expected run-output schema."""


def resolve_input(path) -> Path:
    """Accept a run directory (containing summary.json) or an explicit file."""
    p = Path(path)
    if p.is_dir():
        candidate = p / "summary.json"
        if not candidate.exists():
            raise SchemaError(f"{p}: run directory has no summary.json")
        return candidate
    if not p.exists():
        raise SchemaError(f"{p}: no such input")
    return p


def load_summary(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    version = data.get("schema_version")
    if version != SUMMARY_SCHEMA_VERSION:
        raise SchemaError(
            f"{path}: summary schema {version!r}, expected {SUMMARY_SCHEMA_VERSION}"
        )
    if "regret" not in data or "horizon" not in data:
        raise SchemaError(f"{path}: summary missing regret/horizon sections")
    return data


def load_trace(path) -> dict:
    """Group a trace into per-agent arrays keyed by (seed) rows.

    Returns ``{agent: {"seeds": [...], "cum": (S, T), "entropy": (S, T) | None,
    "active": (S, T) | None}}``; ragged (aborted) episodes are dropped.
    """
    rows_by_agent: dict[str, dict[int, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != TRACE_COLUMNS:
            raise SchemaError(
                f"{path}: trace columns {reader.fieldnames}, expected {TRACE_COLUMNS}"
            )
        for row in reader:
            agent = row["agent"]
            seed = int(row["seed"])
            rows_by_agent.setdefault(agent, {}).setdefault(seed, []).append(row)
    if not rows_by_agent:
        raise SchemaError(f"{path}: empty trace")
    out = {}
    for agent, by_seed in rows_by_agent.items():
        horizon = max(len(rows) for rows in by_seed.values())
        cum, entropy, active, seeds = [], [], [], []
        for seed in sorted(by_seed):
            rows = by_seed[seed]
            if len(rows) != horizon:
                continue  # aborted episode
            rows.sort(key=lambda r: int(r["t"]))
            seeds.append(seed)
            cum.append([float(r["cum_regret"]) for r in rows])
            entropy.append(
                [float(r["entropy"]) if r["entropy"] else np.nan for r in rows]
            )
            active.append(
                [int(r["active_priors"]) if r["active_priors"] else -1 for r in rows]
            )
        cum_arr = np.array(cum)
        ent_arr = np.array(entropy)
        act_arr = np.array(active, dtype=float)
        out[agent] = {
            "seeds": seeds,
            "cum": cum_arr,
            "entropy": None if np.isnan(ent_arr).all() else ent_arr,
            "active": None if (act_arr < 0).all() else act_arr,
        }
    return out


def is_trace(path: Path) -> bool:
    return path.suffix.lower() == ".csv"
