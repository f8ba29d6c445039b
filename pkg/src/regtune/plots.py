# Figure rendering for the report path: reads the tidy quantile table emitted
# by the harness and writes per-metric loss and tuning-choice figures.

from __future__ import annotations

import csv
from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render_report"]


def _read_plotdata(path: Path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def render_report(outdir) -> List[Path]:
    """Render one figure per metric from plotdata.csv in outdir; returns paths."""
    outdir = Path(outdir)
    rows = _read_plotdata(outdir / "plotdata.csv")
    written = []
    metrics = sorted({r["metric"] for r in rows})
    for metric in metrics:
        sub = sorted((r for r in rows if r["metric"] == metric),
                     key=lambda r: float(r["n"]))
        ns = [float(r["n"]) for r in sub]
        q10 = [float(r["q10"]) for r in sub]
        q50 = [float(r["q50"]) for r in sub]
        q90 = [float(r["q90"]) for r in sub]
        design = sub[0]["design"] if sub else ""
        fig, ax = plt.subplots(figsize=(5.0, 3.5))
        ax.plot(ns, q50, "o-", color="tab:blue", label="median")
        ax.fill_between(ns, q10, q90, color="tab:blue", alpha=0.2,
                        label="10-90% band")
        ax.set_xscale("log")
        if all(v > 0 for v in q10):
            ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel(metric)
        ax.set_title(f"{design}: {metric} vs n")
        ax.legend(frameon=False, fontsize=8)
        fig.tight_layout()
        path = outdir / f"report_{metric}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
