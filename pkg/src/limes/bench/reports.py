"""Report emission: CSV sample/ECDF/summary files plus SVG plots.

All CSV numbers use 3 decimal places with ``.`` as the decimal
separator and LF line endings.  SVGs are generated directly (no
plotting dependency): one ECDF overlay per workload and, when both
cold-start and execution data exist, one stacked-bar chart of mean
cold start + execution per workload.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

from .harness import MODES, BenchmarkResult
from .stats import EcdfTable, compute_ecdf, summarize

__all__ = ["emit_reports", "read_samples_csv"]

_MODE_COLORS = {
    "cold-jit": "#d62728",
    "cold-cached": "#1f77b4",
    "execution": "#2ca02c",
}

_PLOT_W, _PLOT_H = 640, 400
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 40, 50

SUMMARY_HEADER = [
    "workload",
    "mode",
    "iterations",
    "warmup_iterations",
    "aborted",
    "n",
    "mean_ms",
    "p50_ms",
    "p90_ms",
    "p99_ms",
    "min_ms",
    "max_ms",
    "stddev_ms",
]


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def _open_csv(path: Path):
    fh = open(path, "w", encoding="utf-8", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def emit_reports(results: Sequence[BenchmarkResult], output_dir: str | Path) -> list[Path]:
    """Write the full report set for ``results`` into ``output_dir``;
    returns every path written.

    Per plan: ``samples_<workload>_<mode>.csv`` (partial samples are
    still written for aborted runs) and ``ecdf_<workload>_<mode>.csv``.
    Across plans: ``summary.csv``, one ECDF overlay SVG per workload,
    and the stacked cold+execution SVG when both kinds of data exist.
    """
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for result in results:
        path = out / f"samples_{result.plan.slug}.csv"
        fh, writer = _open_csv(path)
        with fh:
            writer.writerow(["iteration", "latency_ms"])
            for i, value in enumerate(result.values_ms):
                writer.writerow([i, _fmt(value)])
        written.append(path)

        if result.values_ms:
            table = compute_ecdf(result.values_ms)
            path = out / f"ecdf_{result.plan.slug}.csv"
            fh, writer = _open_csv(path)
            with fh:
                writer.writerow(["latency_ms", "cum_prob"])
                for x, p in table.points:
                    writer.writerow([_fmt(x), _fmt(p)])
            written.append(path)

    summary_path = out / "summary.csv"
    fh, writer = _open_csv(summary_path)
    with fh:
        writer.writerow(SUMMARY_HEADER)
        for result in results:
            plan = result.plan
            row = [plan.workload, plan.mode, plan.iterations, plan.warmup_iterations,
                   str(result.aborted).lower()]
            if result.values_ms:
                stats = summarize(result.values_ms)
                row += [stats.n, _fmt(stats.mean_ms), _fmt(stats.p50_ms),
                        _fmt(stats.p90_ms), _fmt(stats.p99_ms), _fmt(stats.min_ms),
                        _fmt(stats.max_ms), _fmt(stats.stddev_ms)]
            else:
                row += [0] + [""] * 7
            writer.writerow(row)
    written.append(summary_path)

    complete = [r for r in results if not r.aborted and r.values_ms]
    by_workload: dict[str, list[BenchmarkResult]] = {}
    for result in complete:
        by_workload.setdefault(result.plan.workload, []).append(result)

    for workload, group in by_workload.items():
        path = out / f"ecdf_{workload}.svg"
        path.write_text(_ecdf_svg(workload, group), encoding="utf-8")
        written.append(path)

    stacked = _stacked_svg(complete)
    if stacked is not None:
        path = out / "stacked_cold_execution.svg"
        path.write_text(stacked, encoding="utf-8")
        written.append(path)

    return written


def read_samples_csv(path: str | Path) -> list[float]:
    """Parse a ``samples_*.csv`` back into latency values."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["iteration", "latency_ms"]:
        raise ValueError(f"{path} is not a samples CSV")
    return [float(row[1]) for row in rows[1:]]


# -- SVG helpers -------------------------------------------------------


def _svg_head(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_PLOT_W}" '
        f'height="{_PLOT_H}" viewBox="0 0 {_PLOT_W} {_PLOT_H}" '
        'font-family="sans-serif" font-size="12">',
        f'<rect width="{_PLOT_W}" height="{_PLOT_H}" fill="white"/>',
        f'<text x="{_PLOT_W / 2:.1f}" y="22" text-anchor="middle" '
        f'font-size="15">{title}</text>',
    ]


def _ecdf_svg(workload: str, group: Sequence[BenchmarkResult]) -> str:
    """ECDF overlay: one step polyline per mode, x = latency (ms),
    y = cumulative probability."""
    tables: list[tuple[str, EcdfTable]] = [
        (r.plan.mode, compute_ecdf(r.values_ms))
        for r in sorted(group, key=lambda r: MODES.index(r.plan.mode))
    ]
    x_min = min(t.points[0][0] for _, t in tables)
    x_max = max(t.points[-1][0] for _, t in tables)
    if x_max <= x_min:
        x_max = x_min + 1.0
    span = x_max - x_min

    plot_w = _PLOT_W - _MARGIN_L - _MARGIN_R
    plot_h = _PLOT_H - _MARGIN_T - _MARGIN_B

    def sx(x: float) -> float:
        return _MARGIN_L + (x - x_min) / span * plot_w

    def sy(p: float) -> float:
        return _MARGIN_T + (1.0 - p) * plot_h

    parts = _svg_head(f"ECDF of latency — {workload}")
    # axes
    parts.append(
        f'<line x1="{_MARGIN_L}" y1="{sy(0):.1f}" x2="{_PLOT_W - _MARGIN_R}" '
        f'y2="{sy(0):.1f}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_MARGIN_L}" y1="{sy(0):.1f}" x2="{_MARGIN_L}" '
        f'y2="{sy(1):.1f}" stroke="black"/>'
    )
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(
            f'<text x="{_MARGIN_L - 8}" y="{sy(p) + 4:.1f}" '
            f'text-anchor="end">{p:.2f}</text>'
        )
    for frac in (0.0, 0.5, 1.0):
        x = x_min + frac * span
        parts.append(
            f'<text x="{sx(x):.1f}" y="{sy(0) + 18:.1f}" '
            f'text-anchor="middle">{x:.2f}</text>'
        )
    parts.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.1f}" y="{_PLOT_H - 8}" '
        'text-anchor="middle">latency (ms)</text>'
    )

    legend_y = _MARGIN_T + 8
    for mode, table in tables:
        color = _MODE_COLORS[mode]
        points: list[str] = []
        prev_p = 0.0
        for x, p in table.points:
            points.append(f"{sx(x):.2f},{sy(prev_p):.2f}")
            points.append(f"{sx(x):.2f},{sy(p):.2f}")
            prev_p = p
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{" ".join(points)}"/>'
        )
        parts.append(
            f'<rect x="{_PLOT_W - 150}" y="{legend_y - 9}" width="12" '
            f'height="12" fill="{color}"/>'
        )
        parts.append(f'<text x="{_PLOT_W - 132}" y="{legend_y + 2}">{mode}</text>')
        legend_y += 18

    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _stacked_svg(complete: Sequence[BenchmarkResult]) -> str | None:
    """Stacked bars of mean cold start + mean execution per workload;
    one bar per (workload, cold mode) that has matching execution data."""
    exec_means: dict[str, float] = {}
    cold_means: dict[tuple[str, str], float] = {}
    for r in complete:
        mean = summarize(r.values_ms).mean_ms
        if r.plan.mode == "execution":
            exec_means[r.plan.workload] = mean
        else:
            cold_means[(r.plan.workload, r.plan.mode)] = mean

    bars = [
        (workload, mode, cold_means[(workload, mode)], exec_means[workload])
        for (workload, mode) in sorted(cold_means)
        if workload in exec_means
    ]
    if not bars:
        return None

    top = max(cold + ex for _, _, cold, ex in bars)
    if top <= 0:
        top = 1.0
    plot_w = _PLOT_W - _MARGIN_L - _MARGIN_R
    plot_h = _PLOT_H - _MARGIN_T - _MARGIN_B
    slot = plot_w / len(bars)
    bar_w = min(60.0, slot * 0.6)
    base_y = _MARGIN_T + plot_h

    parts = _svg_head("Mean cold start + execution per workload")
    parts.append(
        f'<line x1="{_MARGIN_L}" y1="{base_y:.1f}" x2="{_PLOT_W - _MARGIN_R}" '
        f'y2="{base_y:.1f}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{_MARGIN_L}" y1="{base_y:.1f}" x2="{_MARGIN_L}" '
        f'y2="{_MARGIN_T}" stroke="black"/>'
    )
    for frac in (0.5, 1.0):
        y = base_y - frac * plot_h
        parts.append(
            f'<text x="{_MARGIN_L - 8}" y="{y + 4:.1f}" '
            f'text-anchor="end">{top * frac:.1f}</text>'
        )
    parts.append(
        f'<text x="18" y="{_MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {_MARGIN_T + plot_h / 2:.1f})">mean latency (ms)</text>'
    )

    for i, (workload, mode, cold, ex) in enumerate(bars):
        cx = _MARGIN_L + slot * (i + 0.5)
        x0 = cx - bar_w / 2
        cold_h = cold / top * plot_h
        exec_h = ex / top * plot_h
        parts.append(
            f'<rect x="{x0:.1f}" y="{base_y - cold_h:.1f}" width="{bar_w:.1f}" '
            f'height="{cold_h:.1f}" fill="{_MODE_COLORS[mode]}">'
            f"<title>{workload} {mode} cold {cold:.3f} ms</title></rect>"
        )
        parts.append(
            f'<rect x="{x0:.1f}" y="{base_y - cold_h - exec_h:.1f}" '
            f'width="{bar_w:.1f}" height="{exec_h:.1f}" '
            f'fill="{_MODE_COLORS["execution"]}">'
            f"<title>{workload} execution {ex:.3f} ms</title></rect>"
        )
        parts.append(
            f'<text x="{cx:.1f}" y="{base_y + 16:.1f}" '
            f'text-anchor="middle" font-size="10">{workload}</text>'
        )
        parts.append(
            f'<text x="{cx:.1f}" y="{base_y + 28:.1f}" '
            f'text-anchor="middle" font-size="10">{mode}</text>'
        )

    legend_y = _MARGIN_T + 8
    for label, color in (
        ("cold-jit", _MODE_COLORS["cold-jit"]),
        ("cold-cached", _MODE_COLORS["cold-cached"]),
        ("execution", _MODE_COLORS["execution"]),
    ):
        parts.append(
            f'<rect x="{_PLOT_W - 150}" y="{legend_y - 9}" width="12" height="12" '
            f'fill="{color}"/>'
        )
        parts.append(f'<text x="{_PLOT_W - 132}" y="{legend_y + 2}">{label}</text>')
        legend_y += 18

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
