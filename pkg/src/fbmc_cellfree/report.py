"""Figure rendering for experiment reports.

Each experiment's tabular output gets a companion PNG written next to the
CSV.  Rendering is headless (Agg) and purely a view of the report rows.
"""
from __future__ import annotations

import os
from typing import Dict, List

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .harness import RateReport


def _agg_rows(report: RateReport, xcol: str) -> Dict[str, List[tuple]]:
    """Aggregate (user == -1) rows per scheme as (x, mc, theory) triples."""
    ci = {c: i for i, c in enumerate(report.columns)}
    out: Dict[str, List[tuple]] = {}
    for row in report.rows:
        if row[ci["user"]] != -1:
            continue
        th = row[ci["theory_rate"]]
        out.setdefault(row[ci["scheme"]], []).append(
            (row[ci[xcol]], row[ci["mc_rate"]],
             th if th != "" else None))
    return out


def plot_rate_sweep(report: RateReport, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 5))
    for scheme, pts in sorted(_agg_rows(report, "snr_db").items()):
        pts.sort()
        x = [p[0] for p in pts]
        ax.plot(x, [p[1] for p in pts], "o-", label=f"{scheme} (sim)")
        if all(p[2] is not None for p in pts):
            ax.plot(x, [p[2] for p in pts], "k--", alpha=0.6,
                    label=f"{scheme} (theory)")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("rate [bit/s/Hz]")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_spacing_sweep(report: RateReport, path: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 5))
    for scheme, pts in sorted(_agg_rows(report, "spacing_khz").items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=scheme)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("subcarrier spacing [kHz]")
    ax.set_ylabel("rate [bit/s/Hz]")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ber(report: RateReport, path: str) -> None:
    ci = {c: i for i, c in enumerate(report.columns)}
    series: Dict[str, List[tuple]] = {}
    for row in report.rows:
        series.setdefault(row[ci["scheme"]], []).append(
            (row[ci["ebn0_db"]], row[ci["ber"]]))
    fig, ax = plt.subplots(figsize=(7, 5))
    for scheme, pts in sorted(series.items()):
        pts.sort()
        ax.semilogy([p[0] for p in pts],
                    [max(p[1], 1e-12) for p in pts], "o-", label=scheme)
    ax.set_xlabel("Eb/N0 [dB]")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_cp_enum(report: RateReport, path: str) -> None:
    ci = {c: i for i, c in enumerate(report.columns)}
    rows = sorted(report.rows)
    fig, ax = plt.subplots(figsize=(7, 5))
    cps = [r[ci["n_cp"]] for r in rows]
    rates = [r[ci["rate"]] for r in rows]
    ax.plot(cps, rates, "o-")
    for r in rows:
        if r[ci["is_best"]]:
            ax.plot(r[ci["n_cp"]], r[ci["rate"]], "r*", markersize=14)
    ax.set_xlabel("CP length [samples]")
    ax.set_ylabel("rate [bit/s/Hz]")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


PLOTTERS = {
    "rate-vs-snr": plot_rate_sweep,
    "rate-vs-spacing": plot_spacing_sweep,
    "ber": plot_ber,
    "cp-enum": plot_cp_enum,
}


def render(report: RateReport, out_dir: str, stem: str) -> str:
    """Write the PNG companion figure; returns its path."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, stem + ".png")
    PLOTTERS[report.kind](report, path)
    return path
