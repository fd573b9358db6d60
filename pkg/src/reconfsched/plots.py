"""Figure rendering for trace and sweep reports.

Renders the delimited report data to PNG files. Output bytes are kept
deterministic (fixed backend, stripped version stamp) so reruns of the
same experiment produce identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["save_timeline_figure", "save_sweep_figure"]

_DPI = 120


def _png_metadata(note: str) -> dict:
    # drop the library version stamp; reruns must match byte for byte
    meta = {"Software": None}
    if note:
        meta["Description"] = note
    return meta


def _by_series(rows: Sequence[dict]) -> dict[str, list[dict]]:
    out: dict[str, list[dict]] = {}
    for r in rows:
        key = str(r["manager"])
        if r.get("cap", "") != "":
            key = f"{r['manager']} @cap {r['cap']}"
        out.setdefault(key, []).append(r)
    return out


def save_timeline_figure(rows: Sequence[dict], path: str | Path, *,
                         n_cores: int | None = None,
                         qos_ms: float | None = None,
                         note: str = "") -> Path:
    """Per-quantum throughput, power, and tail latency, one line per series."""
    path = Path(path)
    series = _by_series(rows)
    has_tail = any(r["tail_ms"] != "" for r in rows)
    n_axes = 3 if has_tail else 2
    fig, axes = plt.subplots(n_axes, 1, sharex=True,
                             figsize=(8.0, 2.4 * n_axes), squeeze=False)
    ax_g, ax_p = axes[0][0], axes[1][0]
    for name, rs in series.items():
        t = [r["t_ms"] for r in rs]
        ax_g.plot(t, [r["geomean_bips"] for r in rs], label=name)
        ax_p.plot(t, [r["mean_power"] for r in rs], label=name)
    if n_cores is not None:
        caps = [(r["t_ms"], r["cap"] * n_cores) for r in rows if r["cap"] != ""]
        if caps:
            ts, ws = zip(*sorted(set(caps)))
            ax_p.step(ts, ws, where="post", linestyle="--", color="black",
                      linewidth=1.0, label="budget")
    ax_g.set_ylabel("geomean BIPS")
    ax_p.set_ylabel("power (norm. W)")
    ax_g.legend(loc="best", fontsize=8)
    if has_tail:
        ax_t = axes[2][0]
        for name, rs in series.items():
            pts = [(r["t_ms"], r["tail_ms"]) for r in rs if r["tail_ms"] != ""]
            if pts:
                ax_t.plot([p[0] for p in pts], [p[1] for p in pts], label=name)
        if qos_ms:
            ax_t.axhline(qos_ms, linestyle="--", color="black", linewidth=1.0)
        ax_t.set_ylabel("tail latency (ms)")
        ax_t.set_yscale("log")
    axes[-1][0].set_xlabel("time (ms)")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_png_metadata(note))
    plt.close(fig)
    return path


def save_sweep_figure(rows: Sequence[dict], path: str | Path, *,
                      note: str = "") -> Path:
    """Normalized instructions against the power cap, one line per manager."""
    path = Path(path)
    by_mgr: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        by_mgr.setdefault(str(r["manager"]), []).append(
            (float(r["cap"]), float(r["normalized_instructions"])))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for mgr, pts in by_mgr.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=mgr)
    ax.set_xlabel("power cap (fraction of peak)")
    ax.set_ylabel("instructions vs no gating")
    ax.invert_xaxis()
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_png_metadata(note))
    plt.close(fig)
    return path
