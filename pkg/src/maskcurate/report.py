"""CSV summaries and static SVG histograms for a curation run."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from maskcurate.assemble import rank_counts
from maskcurate.core_io import PathLike
from maskcurate.filtering import FilterReport
from maskcurate.hardness import RankedMasks, dumps_csv
from maskcurate.stats import ClassStatsTable

DEFAULT_BINS = 10

_SVG_W, _SVG_H, _PAD = 480, 240, 32


def histogram_counts(values: Sequence[float], bins: int = DEFAULT_BINS) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        return np.zeros(bins, dtype=np.int64), np.linspace(0.0, 1.0, bins + 1)
    counts, edges = np.histogram(values, bins=bins)
    return counts.astype(np.int64), edges


def histogram_svg(values: Sequence[float], title: str, bins: int = DEFAULT_BINS) -> str:
    counts, edges = histogram_counts(values, bins)
    top = max(int(counts.max()), 1)
    plot_w, plot_h = _SVG_W - 2 * _PAD, _SVG_H - 2 * _PAD
    bar_w = plot_w / bins
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<title>{title}</title>',
        f'<text x="{_PAD}" y="{_PAD - 12}" font-family="sans-serif" font-size="12">{title}</text>',
        f'<line x1="{_PAD}" y1="{_SVG_H - _PAD}" x2="{_SVG_W - _PAD}" y2="{_SVG_H - _PAD}" stroke="black"/>',
    ]
    for i, c in enumerate(counts):
        h = plot_h * int(c) / top
        x = _PAD + i * bar_w
        y = _SVG_H - _PAD - h
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w - 1:.2f}" height="{h:.2f}" fill="steelblue">'
            f'<title>[{edges[i]:.6g}, {edges[i + 1]:.6g}): {int(c)}</title></rect>'
        )
    parts.append(f'<text x="{_PAD}" y="{_SVG_H - _PAD + 14}" font-family="sans-serif" '
                 f'font-size="10">{edges[0]:.6g}</text>')
    parts.append(f'<text x="{_SVG_W - _PAD}" y="{_SVG_H - _PAD + 14}" font-family="sans-serif" '
                 f'font-size="10" text-anchor="end">{edges[-1]:.6g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def class_stats_csv(stats: ClassStatsTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "count", "loss_sum", "mean"])
    for j in range(stats.num_classes):
        m = stats.means[j]
        w.writerow([j, stats.counts[j], repr(stats.loss_sums[j]), "" if m is None else repr(m)])
    return buf.getvalue()


def filter_csv(report: FilterReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "total", "filtered", "fraction"])
    for j, (t, f) in enumerate(zip(report.totals, report.filtered)):
        w.writerow([j, t, f, repr(f / t) if t else ""])
    return buf.getvalue()


def report(stats: Optional[ClassStatsTable], hardness_table: Optional[RankedMasks],
           filter_report: Optional[FilterReport], out_dir: PathLike, n_max: int = 20) -> list[Path]:
    """Write whichever summaries the given inputs support; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if stats is not None:
        written.append(out / "class_stats.csv")
        _write(written[-1], class_stats_csv(stats))
        means = [m for m in stats.means if m is not None]
        written.append(out / "class_mean_hist.svg")
        _write(written[-1], histogram_svg(means, "class mean loss (nats)"))
    if hardness_table is not None:
        counts = rank_counts(len(hardness_table), n_max) if len(hardness_table) else []
        written.append(out / "hardness.csv")
        _write(written[-1], dumps_csv(hardness_table, counts))
        written.append(out / "hardness_hist.svg")
        _write(written[-1], histogram_svg([r.hardness for r in hardness_table.records], "mask hardness"))
    if filter_report is not None:
        written.append(out / "filter.csv")
        _write(written[-1], filter_csv(filter_report))
    return written
