"""Render summaries and figures from exported trace CSVs.

Given any set of trace files, produces a comparison table (printed and
written as summary.csv), a per-trace diagnostic figure, and a combined
position overlay. If one of the traces is named like an ideal reference
(``*ideal*``), cumulative error relative to it is reported for every trace
of matching length.
"""

from __future__ import annotations

import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .sim import TenantTrace, clre, read_trace

SUMMARY_COLUMNS = ("trace", "duration", "tracking_error", "clre",
                   "miss_ratio", "mean_frequency", "median_frequency",
                   "recovery_fraction", "median_rtt", "solve_time", "failed")


def _name(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def tracking_error(tr: TenantTrace) -> float:
    """Integrated squared setpoint deviation (reference-free fallback)."""
    d = tr.position - tr.setpoint
    return float(np.sum(d * d) * tr.h_q)


def summarize_trace(name: str, tr: TenantTrace,
                    reference: TenantTrace | None = None) -> dict:
    freqs = 1.0 / tr.h_d
    src = np.array(tr.source)
    active = src != "idle"
    rtts = tr.rtt[np.isfinite(tr.rtt)]
    c = float("nan")
    if reference is not None and len(reference) == len(tr):
        c = float(clre(tr, reference)[-1])
    return {
        "trace": name,
        "duration": float(tr.t[-1] + tr.h_q) if len(tr) else 0.0,
        "tracking_error": tracking_error(tr),
        "clre": c,
        "miss_ratio": float(tr.miss[active].mean()) if active.any() else 0.0,
        "mean_frequency": float(freqs[active].mean()) if active.any() else 0.0,
        "median_frequency": float(np.median(freqs[active])) if active.any() else 0.0,
        "recovery_fraction": float((src == "recovery").mean()),
        "median_rtt": float(np.median(rtts)) if rtts.size else float("nan"),
        "solve_time": float(np.sum(tr.tau_c[np.isfinite(tr.tau_c)] *
                                   (tr.h_q / tr.h_d))),
        "failed": tr.failed_at is not None or bool(_fell(tr)),
    }


def _fell(tr: TenantTrace) -> bool:
    # exported traces do not carry the failure flag; a latched position at a
    # constant extreme value for the whole tail is the signature of a fall
    if len(tr) < 10:
        return False
    tail = tr.position[-10:]
    return bool(np.all(tail == tail[0]) and abs(tail[0]) > 0.55)


def trace_figure(name: str, tr: TenantTrace, path: str):
    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(9, 7))
    axes[0].plot(tr.t, tr.position, lw=0.8, label="position")
    axes[0].plot(tr.t, tr.setpoint, lw=0.8, ls="--", label="setpoint")
    axes[0].set_ylabel("position (m)")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[0].set_title(name)

    axes[1].plot(tr.t, 1.0 / tr.h_d, lw=0.8, label="$f_c$ (Hz)")
    ax_rho = axes[1].twinx()
    ax_rho.plot(tr.t, tr.rho, lw=0.8, color="tab:red", label=r"$\rho$")
    ax_rho.set_ylabel(r"smoothed loss $\rho$", color="tab:red")
    axes[1].set_ylabel("control frequency (Hz)")

    axes[2].plot(tr.t, tr.rtt, lw=0.5, label="RTT")
    axes[2].plot(tr.t, tr.tau_c, lw=0.5, label=r"$\tau_c$")
    axes[2].set_ylabel("delay (s)")
    axes[2].set_xlabel("t (s)")
    axes[2].legend(loc="upper right", fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def overlay_figure(traces: dict, path: str):
    fig, ax = plt.subplots(figsize=(9, 4))
    first = next(iter(traces.values()))
    ax.plot(first.t, first.setpoint, lw=0.8, ls="--", color="k",
            label="setpoint")
    for name, tr in traces.items():
        ax.plot(tr.t, tr.position, lw=0.7, label=name)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("position (m)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_summary(rows, path: str):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def format_table(rows) -> str:
    cols = SUMMARY_COLUMNS
    cells = [[r["trace"]] + [
        f"{r[c]:.4g}" if isinstance(r[c], float) else str(r[c])
        for c in cols[1:]] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells))
              for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def run_report(trace_paths, out_dir: str) -> list:
    """Read traces, write summary.csv and figures into out_dir; returns the
    summary rows."""
    if not trace_paths:
        raise ValueError("no trace files given")
    os.makedirs(out_dir, exist_ok=True)
    traces = {_name(p): read_trace(p) for p in trace_paths}
    reference = next((tr for name, tr in traces.items() if "ideal" in name),
                     None)
    rows = [summarize_trace(name, tr, reference)
            for name, tr in traces.items()]
    write_summary(rows, os.path.join(out_dir, "summary.csv"))
    for name, tr in traces.items():
        trace_figure(name, tr, os.path.join(out_dir, f"{name}.png"))
    if len(traces) > 1:
        overlay_figure(traces, os.path.join(out_dir, "positions.png"))
    return rows
