"""Figure rendering for saved result sets.

The report path reads a results directory produced by ``compare-models``
or ``simulate`` and renders matplotlib figures next to the delimited
tables: expectation-decay curves with bootstrap bands, outcome-correlation
heatmaps and slices, nonzero-outcome distributions, post-selected final
expectations, logical error rates, and a sampled error-sector history.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

BACKEND_STYLE = {
    "trajectory": {"color": "#444444", "marker": "o"},
    "ptm_plus": {"color": "#1f77b4", "marker": "s"},
    "bp_plus": {"color": "#d62728", "marker": "^"},
}


def _style(backend: str) -> dict:
    return BACKEND_STYLE.get(backend, {"color": "default", "marker": "."})


def render_comparison_report(results_dir, out_dir=None, curve_labels=("XX", "ZZ", "X")) -> list[Path]:
    """Render comparison figures; returns the written file paths."""
    from .experiments import load_comparison

    results_dir = Path(results_dir)
    out_dir = Path(out_dir or results_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results, summary = load_comparison(results_dir)
    written: list[Path] = []

    labels = next(iter(summary.values()))["labels"]
    present = [lab for lab in curve_labels if lab in labels]
    # expectation decay curves
    fig, axes = plt.subplots(1, max(len(present), 1), figsize=(5.2 * max(len(present), 1), 3.6))
    axes = np.atleast_1d(axes)
    for ax, lab in zip(axes, present):
        j = labels.index(lab)
        for backend, s in summary.items():
            mean = np.asarray(s["mean_expectations"])[:, j]
            ci = np.asarray(s["ci_expectations"])[:, :, j]
            x = np.arange(mean.shape[0])
            st = _style(backend)
            ax.plot(x, mean, label=backend, lw=1.0, ms=2.5, **st)
            ax.fill_between(x, ci[0], ci[1], alpha=0.25, color=st["color"], lw=0)
        ax.set_xlabel("measurement index")
        ax.set_ylabel(f"<{lab}>")
        ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "expectations.png"
    fig.savefig(path, dpi=160)
    plt.close(fig)
    written.append(path)

    # correlation heatmap (first backend with data) and a central slice
    for backend, s in summary.items():
        corr = np.asarray(s["correlations"], dtype=float)
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 3.8))
        im = ax1.imshow(np.nan_to_num(corr), vmin=-0.2, vmax=0.2, cmap="RdBu_r")
        ax1.set_title(f"outcome correlations ({backend})")
        fig.colorbar(im, ax=ax1, shrink=0.85)
        mid = corr.shape[0] // 2
        for other, s2 in summary.items():
            c2 = np.asarray(s2["correlations"], dtype=float)
            st = _style(other)
            ax2.plot(np.arange(c2.shape[0]), c2[mid], label=other, lw=1.0, **st)
        ax2.set_title(f"slice at i={mid}")
        ax2.set_xlabel("measurement index j")
        ax2.set_ylabel("r_ij")
        ax2.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / "correlations.png"
        fig.savefig(path, dpi=160)
        plt.close(fig)
        written.append(path)
        break

    # nonzero-outcome count distribution and post-selected final expectation
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.2, 3.6))
    for backend, s in summary.items():
        st = _style(backend)
        kd = {int(k): v for k, v in s["k_distribution"].items()}
        ks = sorted(kd)
        ax1.semilogy(ks, [kd[k] for k in ks], label=backend, lw=1.0, **st)
        ps = {int(k): v for k, v in s["postselected_final"].items()}
        ks = sorted(ps)
        means = [ps[k]["mean"] for k in ks]
        los = [ps[k]["ci"][0] for k in ks]
        his = [ps[k]["ci"][1] for k in ks]
        ax2.errorbar(
            ks,
            means,
            yerr=[np.subtract(means, los), np.subtract(his, means)],
            label=backend,
            lw=1.0,
            capsize=2,
            **st,
        )
    ax1.set_xlabel("nonzero inner outcomes k")
    ax1.set_ylabel("fraction of shots")
    ax1.legend(fontsize=8)
    ax2.set_xlabel("nonzero inner outcomes k")
    ax2.set_ylabel("post-selected final expectation")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "outcome_statistics.png"
    fig.savefig(path, dpi=160)
    plt.close(fig)
    written.append(path)
    return written


def render_surface_report(results_dir, out_dir=None, history_mode: int = 0, history_shot: int = 0) -> list[Path]:
    """Render memory-experiment figures: logical error rates per decoder
    and one sampled error-sector history."""
    results_dir = Path(results_dir)
    out_dir = Path(out_dir or results_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = json.loads((results_dir / "summary.json").read_text())
    written: list[Path] = []

    decoders = summary["decoders"]
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    names = list(decoders)
    rates = [decoders[n]["error_rate"] for n in names]
    los = [decoders[n]["wilson_95"][0] for n in names]
    his = [decoders[n]["wilson_95"][1] for n in names]
    ax.bar(names, rates, color=["#888888", "#1f77b4", "#d62728"][: len(names)])
    ax.errorbar(
        names,
        rates,
        yerr=[np.subtract(rates, los), np.subtract(his, rates)],
        fmt="none",
        ecolor="black",
        capsize=4,
    )
    ax.set_ylabel("logical error rate")
    dmeta = summary.get("meta", {})
    ax.set_title(f"d={dmeta.get('distance')} rounds={dmeta.get('rounds')}")
    fig.tight_layout()
    path = out_dir / "logical_error_rates.png"
    fig.savefig(path, dpi=160)
    plt.close(fig)
    written.append(path)

    paths_file = results_dir / "error_paths.npz"
    if paths_file.exists():
        data = np.load(paths_file)
        sector_path = data["e_out"][history_shot]
        outcomes = data["site_outcome"][history_shot]
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7.5, 4.2), sharex=True)
        ax1.step(np.arange(sector_path.size), sector_path, where="mid", lw=0.9)
        ax1.set_ylabel("sector index")
        ax2.step(np.arange(outcomes.size), outcomes, where="mid", lw=0.9, color="#d62728")
        ax2.set_ylabel("outcome")
        ax2.set_xlabel("channel site")
        fig.suptitle(f"sampled error history, shot {history_shot}")
        fig.tight_layout()
        path = out_dir / "error_history.png"
        fig.savefig(path, dpi=160)
        plt.close(fig)
        written.append(path)
    return written


def render_report(results_dir, out_dir=None) -> list[Path]:
    """Dispatch on the result kind found in ``results_dir``."""
    results_dir = Path(results_dir)
    if (results_dir / "logical_error_rates.csv").exists():
        return render_surface_report(results_dir, out_dir)
    return render_comparison_report(results_dir, out_dir)
