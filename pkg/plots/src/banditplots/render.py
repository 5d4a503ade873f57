"""The six figure kinds, rendered deterministically from emitted run files.

Every job writes two artifacts: the image at the requested path and a
``<out>.series.json`` sidecar holding exactly the numbers that were drawn.
The sidecar is byte-stable across reruns (sorted keys, round-trip floats);
image bytes may vary across matplotlib backends and are not a contract.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .io import SchemaError, is_trace, load_summary, load_trace, resolve_input

FIGURE_KINDS = ("regret", "confusion", "entropy", "elimination", "scaling", "boxplot")

# percentiles drawn by the boxplot kind: whisker-low, box, median, box, whisker-high
BOX_PERCENTILES = (5, 25, 50, 75, 95)

_RC = {
    "figure.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
}


def _mean_se_from_inputs(paths):
    """Per-agent mean cumulative-regret curve and its standard error."""
    path = paths[0]
    if is_trace(path):
        groups = load_trace(path)
        series = {}
        for agent in sorted(groups):
            cum = groups[agent]["cum"]
            k = cum.shape[0]
            se = cum.std(axis=0, ddof=1) / np.sqrt(k) if k > 1 else np.zeros(cum.shape[1])
            series[agent] = (cum.mean(axis=0), se)
        return series
    summary = load_summary(path)
    return {
        agent: (np.array(reg["mean_curve"]), np.array(reg["se_curve"]))
        for agent, reg in sorted(summary["regret"].items())
    }


def _series_regret(paths):
    curves = _mean_se_from_inputs(paths)
    return {
        agent: {"mean": mean.tolist(), "se": se.tolist()}
        for agent, (mean, se) in curves.items()
    }


def _draw_regret(series, ax):
    for agent, data in series.items():
        mean = np.asarray(data["mean"])
        se = np.asarray(data["se"])
        ts = np.arange(1, mean.size + 1)
        step = max(1, mean.size // 20)
        ax.errorbar(
            ts, mean, yerr=se, errorevery=step, capsize=2, label=agent, linewidth=1.2
        )
    ax.set_xlabel("step")
    ax.set_ylabel("mean cumulative regret")
    ax.legend()


def _series_confusion(paths):
    if is_trace(paths[0]):
        raise SchemaError(
            "confusion figures need summary.json input; the trace carries "
            "no true-prior column"
        )
    summary = load_summary(paths[0])
    selection = summary.get("selection") or {}
    if not selection:
        raise SchemaError("confusion figures need selection stats in summary.json")
    labels = list(summary.get("prior_ids") or [])
    series = {"labels": labels, "agents": {}}
    for agent in sorted(selection):
        pct = selection[agent]["confusion_row_pct"]
        series["agents"][agent] = pct
    return series


def _draw_confusion(series, fig):
    agents = list(series["agents"])
    labels = series["labels"]
    axes = fig.subplots(1, len(agents), squeeze=False)[0]
    for ax, agent in zip(axes, agents):
        pct = np.asarray(series["agents"][agent])
        im = ax.imshow(pct, vmin=0, vmax=100, cmap="viridis")
        ax.set_title(agent)
        ax.set_xlabel("selected prior")
        if labels:
            ax.set_xticks(range(len(labels)))
            ax.set_xticklabels(labels, rotation=90)
            ax.set_yticks(range(len(labels)))
            ax.set_yticklabels(labels if ax is axes[0] else [])
        for i in range(pct.shape[0]):
            for j in range(pct.shape[1]):
                if pct[i, j] >= 1:
                    ax.annotate(
                        f"{pct[i, j]:.0f}", (j, i), ha="center", va="center",
                        fontsize=6, color="white",
                    )
        ax.grid(False)
    axes[0].set_ylabel("true prior")
    fig.colorbar(im, ax=list(axes), shrink=0.8, label="% of rounds")


def _series_entropy(paths):
    path = paths[0]
    if is_trace(path):
        groups = load_trace(path)
        curves = {
            agent: g["entropy"].mean(axis=0).tolist()
            for agent, g in sorted(groups.items())
            if g["entropy"] is not None
        }
        refs = {}
    else:
        summary = load_summary(path)
        curves = {
            agent: sel["mean_entropy_curve"]
            for agent, sel in sorted((summary.get("selection") or {}).items())
            if sel.get("mean_entropy_curve")
        }
        refs = summary.get("entropy_reference") or {}
    if not curves:
        raise SchemaError("no hyperposterior-entropy series in the input")
    return {"curves": curves, "references": refs}


def _draw_entropy(series, ax):
    for agent, curve in series["curves"].items():
        ax.plot(np.arange(1, len(curve) + 1), curve, label=agent, linewidth=1.2)
    styles = {"uniform": ":", "q80": "--", "q90": "-."}
    names = {"uniform": "uniform", "q80": "q=0.8", "q90": "q=0.9"}
    for key, style in styles.items():
        if key in series["references"]:
            ax.axhline(
                series["references"][key], linestyle=style, color="gray",
                linewidth=1, label=names[key],
            )
    ax.set_xlabel("step")
    ax.set_ylabel("mean hyperposterior entropy (nats)")
    ax.legend()


def _series_elimination(paths):
    path = paths[0]
    if is_trace(path):
        groups = load_trace(path)
        curves = {
            agent: g["active"].mean(axis=0).tolist()
            for agent, g in sorted(groups.items())
            if g["active"] is not None
        }
    else:
        summary = load_summary(path)
        curves = {
            agent: sel["mean_active_curve"]
            for agent, sel in sorted((summary.get("selection") or {}).items())
            if sel.get("mean_active_curve")
        }
    if not curves:
        raise SchemaError("no active-prior-count series in the input")
    return {"curves": curves}


def _draw_elimination(series, ax):
    for agent, curve in series["curves"].items():
        ax.plot(np.arange(1, len(curve) + 1), curve, label=agent, linewidth=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("mean active priors")
    ax.legend()


def _series_scaling(paths):
    if any(is_trace(p) for p in paths):
        raise SchemaError("scaling figures pool summary.json inputs, not traces")
    summaries = [load_summary(p) for p in paths]
    if len(summaries) < 2:
        raise SchemaError("scaling figures need two or more summary inputs")
    points = []
    for summary in summaries:
        points.append(
            {
                "num_priors": summary["num_priors"],
                "finals": {
                    agent: {
                        "mean": reg["final_mean"],
                        "se": reg["final_se"],
                    }
                    for agent, reg in sorted(summary["regret"].items())
                },
            }
        )
    points.sort(key=lambda p: p["num_priors"])
    return {"points": points}


def _draw_scaling(series, ax):
    points = series["points"]
    agents = sorted({a for p in points for a in p["finals"]})
    x = np.arange(len(points))
    width = 0.8 / len(agents)
    for i, agent in enumerate(agents):
        means = [p["finals"].get(agent, {}).get("mean", np.nan) for p in points]
        ses = [p["finals"].get(agent, {}).get("se", 0.0) for p in points]
        ax.bar(
            x + (i - (len(agents) - 1) / 2) * width, means, width,
            yerr=ses, capsize=2, label=agent,
        )
    ax.set_xticks(x)
    ax.set_xticklabels([str(p["num_priors"]) for p in points])
    ax.set_xlabel("number of priors")
    ax.set_ylabel("mean final regret")
    ax.legend()


def _series_boxplot(paths):
    path = paths[0]
    if is_trace(path):
        groups = load_trace(path)
        finals = {a: g["cum"][:, -1].tolist() for a, g in sorted(groups.items())}
    else:
        summary = load_summary(path)
        finals = {
            agent: reg["per_seed_final"]
            for agent, reg in sorted(summary["regret"].items())
        }
    stats = {}
    for agent, values in finals.items():
        arr = np.asarray(values, dtype=float)
        stats[agent] = {
            str(q): float(np.percentile(arr, q)) for q in BOX_PERCENTILES
        }
    return {"percentiles": stats}


def _draw_boxplot(series, ax):
    agents = list(series["percentiles"])
    boxes = []
    for agent in agents:
        p = series["percentiles"][agent]
        boxes.append(
            {
                "label": agent,
                "whislo": p["5"],
                "q1": p["25"],
                "med": p["50"],
                "q3": p["75"],
                "whishi": p["95"],
                "fliers": [],
            }
        )
    ax.bxp(boxes, showfliers=False)
    ax.set_ylabel("final cumulative regret")
    ax.tick_params(axis="x", rotation=30)


_BUILDERS = {
    "regret": _series_regret,
    "confusion": _series_confusion,
    "entropy": _series_entropy,
    "elimination": _series_elimination,
    "scaling": _series_scaling,
    "boxplot": _series_boxplot,
}

_FIGSIZE = {
    "regret": (6.5, 4.0),
    "confusion": (11.0, 3.2),
    "entropy": (6.5, 4.0),
    "elimination": (6.5, 4.0),
    "scaling": (6.5, 4.0),
    "boxplot": (6.5, 4.0),
}


def build_series(kind: str, inputs) -> dict:
    """Extract the exact data a figure of this kind will draw."""
    if kind not in FIGURE_KINDS:
        raise SchemaError(f"unknown figure kind {kind!r}; expected {FIGURE_KINDS}")
    paths = [resolve_input(p) for p in inputs]
    if not paths:
        raise SchemaError("no inputs given")
    return _BUILDERS[kind](paths)


def render(kind: str, inputs, out_path) -> Path:
    """Render one figure and its series sidecar; returns the image path."""
    series = build_series(kind, inputs)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)

    with plt.rc_context(_RC):
        fig = plt.figure(figsize=_FIGSIZE[kind])
        if kind == "confusion":
            _draw_confusion(series, fig)
        else:
            ax = fig.add_subplot(111)
            {
                "regret": _draw_regret,
                "entropy": _draw_entropy,
                "elimination": _draw_elimination,
                "scaling": _draw_scaling,
                "boxplot": _draw_boxplot,
            }[kind](series, ax)
            fig.tight_layout()
        fig.savefig(out)
        plt.close(fig)

    sidecar = out.with_name(out.name + ".series.json")
    tmp = sidecar.with_suffix(".tmp")
    payload = {"kind": kind, "schema_version": 1, "series": series}
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tmp.replace(sidecar)
    return out
