"""Aggregated result tables and SVG line charts.

Three report kinds:

``ratio_curve``
    final test accuracy against target sparsity, one line per (criterion, regime).
``budget_curve``
    final test accuracy against retraining budget, one line per (regime, target).
``criteria_best``
    best regime per (criterion, sparsity); one dashed line per criterion.
"""

import csv
import math
from collections import defaultdict
from html import escape
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import InputError
from .experiment import ExperimentRecord

REPORT_KINDS = ("ratio_curve", "budget_curve", "criteria_best")
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def _stats(values: Sequence[float]) -> Tuple[float, float, int]:
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std()), int(a.size)


def _usable(records: Sequence[ExperimentRecord]) -> List[ExperimentRecord]:
    if not records:
        raise InputError("report needs at least one record")
    ok = [r for r in records if r.status == "ok"]
    if not ok:
        raise InputError("no successful records to report")
    pairs = {(r.config["model"], r.config["dataset"]) for r in ok}
    if len(pairs) > 1:
        raise InputError(f"records mix model/dataset pairs: {sorted(pairs)}")
    return ok


def aggregate(records: Sequence[ExperimentRecord], kind: str) -> List[dict]:
    """Mean and population std over seeds for each point of the chosen figure."""
    if kind not in REPORT_KINDS:
        raise InputError(f"unknown report kind {kind!r}; expected one of {REPORT_KINDS}")
    ok = _usable(records)
    groups: Dict[tuple, List[float]] = defaultdict(list)
    epochs: Dict[tuple, List[float]] = defaultdict(list)
    for r in ok:
        c = r.config
        target = c["regime"]["target"]
        if kind == "budget_curve":
            if c.get("budget") is None:
                continue
            key = (c["regime"]["kind"], target, c["criterion"], c["budget"])
        else:
            key = (c["criterion"], c["regime"]["kind"], target)
        groups[key].append(r.final_test_metric)
        epochs[key].append(r.total_budget)
    if not groups:
        raise InputError(f"no records carry the fields needed for {kind}")
    rows = []
    for key in sorted(groups):
        mean, std, n = _stats(groups[key])
        ep = float(np.mean(epochs[key]))
        if kind == "budget_curve":
            regime, target, criterion, budget = key
            rows.append({"regime": regime, "target_sparsity": target, "criterion": criterion, "budget": budget,
                         "mean_test_metric": mean, "std_test_metric": std, "mean_epochs": ep, "n": n})
        else:
            criterion, regime, target = key
            rows.append({"criterion": criterion, "regime": regime, "target_sparsity": target,
                         "mean_test_metric": mean, "std_test_metric": std, "mean_epochs": ep, "n": n})
    if kind == "criteria_best":
        best: Dict[tuple, dict] = {}
        for row in rows:
            k = (row["criterion"], row["target_sparsity"])
            # Ties keep the first regime in name order.
            if k not in best or row["mean_test_metric"] > best[k]["mean_test_metric"]:
                best[k] = row
        for row in rows:
            row["best"] = best[(row["criterion"], row["target_sparsity"])] is row
    return rows


def write_csv(rows: List[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return path


def _nice_ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(1, n - 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks, t = [], start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def svg_line_chart(series: Dict[str, List[Tuple[float, float, float]]], title: str, xlabel: str, ylabel: str,
                   dashed: bool = False, labels: Dict[str, List[str]] = None, width: int = 640,
                   height: int = 420) -> str:
    """Render ``{name: [(x, mean, std), ...]}`` as a standalone SVG document.

    Error bars show one std. ``labels`` optionally annotates each point.
    """
    pts = [p for s in series.values() for p in s]
    if not pts:
        raise InputError("chart needs at least one point")
    xs = [p[0] for p in pts]
    ys = [v for p in pts for v in (p[1] - p[2], p[1] + p[2])]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    # Pad degenerate ranges so a single point still sits inside the plot.
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 0.5 * (abs(x0) or 1), x1 + 0.5 * (abs(x1) or 1)
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.01, y1 + 0.01
    ypad = 0.05 * (y1 - y0)
    y0, y1 = y0 - ypad, y1 + ypad
    left, right, top, bottom = 70, 170, 40, 55
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{left + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>']
    for t in _nice_ticks(x0, x1):
        if x0 <= t <= x1:
            out.append(f'<line x1="{sx(t):.1f}" y1="{top + ph}" x2="{sx(t):.1f}" y2="{top + ph + 5}" stroke="#333"/>')
            out.append(f'<text x="{sx(t):.1f}" y="{top + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _nice_ticks(y0, y1):
        if y0 <= t <= y1:
            out.append(f'<line x1="{left}" y1="{sy(t):.1f}" x2="{left + pw}" y2="{sy(t):.1f}" stroke="#ddd"/>')
            out.append(f'<text x="{left - 6}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text transform="translate(16 {top + ph / 2:.1f}) rotate(-90)" text-anchor="middle">'
               f'{escape(ylabel)}</text>')
    dash = ' stroke-dasharray="6 4"' if dashed else ""
    for i, (name, points) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        points = sorted(points)
        path = " ".join(f"{sx(x):.1f},{sy(m):.1f}" for x, m, _ in points)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"{dash}/>')
        for j, (x, m, s) in enumerate(points):
            if s > 0:
                out.append(f'<line x1="{sx(x):.1f}" y1="{sy(m - s):.1f}" x2="{sx(x):.1f}" y2="{sy(m + s):.1f}" '
                           f'stroke="{color}"/>')
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(m):.1f}" r="3" fill="{color}"/>')
            if labels and name in labels:
                out.append(f'<text x="{sx(x) + 4:.1f}" y="{sy(m) - 6:.1f}" fill="{color}" font-size="9">'
                           f'{escape(labels[name][j])}</text>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"{dash}/>')
        out.append(f'<text x="{left + pw + 36}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report(records: Sequence[ExperimentRecord], kind: str, out_dir) -> List[Path]:
    """Write ``<kind>.csv`` and ``<kind>.svg`` into ``out_dir``."""
    rows = aggregate(records, kind)
    out_dir = Path(out_dir)
    csv_path = write_csv(rows, out_dir / f"{kind}.csv")
    series: Dict[str, List[Tuple[float, float, float]]] = defaultdict(list)
    labels: Dict[str, List[str]] = defaultdict(list)
    if kind == "ratio_curve":
        for r in rows:
            series[f"{r['criterion']}/{r['regime']}"].append((r["target_sparsity"], r["mean_test_metric"],
                                                              r["std_test_metric"]))
        svg = svg_line_chart(series, "Accuracy vs pruning ratio", "target sparsity", "test accuracy")
    elif kind == "budget_curve":
        for r in rows:
            series[f"{r['regime']} p={r['target_sparsity']:g}"].append((r["budget"], r["mean_test_metric"],
                                                                       r["std_test_metric"]))
        svg = svg_line_chart(series, "Accuracy vs retraining budget", "budget (epochs)", "test accuracy")
    else:
        for r in sorted(rows, key=lambda r: r["target_sparsity"]):
            if r["best"]:
                series[r["criterion"]].append((r["target_sparsity"], r["mean_test_metric"], r["std_test_metric"]))
                labels[r["criterion"]].append(r["regime"])
        svg = svg_line_chart(series, "Best regime per criterion", "target sparsity", "test accuracy",
                             dashed=True, labels=labels)
    svg_path = out_dir / f"{kind}.svg"
    svg_path.write_text(svg)
    return [csv_path, svg_path]
