"""Self-contained SVG convergence plots from a trajectories CSV.

The SVG is assembled from fixed-precision strings, so identical input
always produces identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, List

from .harness import CSV_HEADER

AGGREGATES = ("median", "best")

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
_WIDTH, _HEIGHT = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 62, 18, 18, 48


class PlotDataError(ValueError):
    pass


def _median(values: List[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return 0.5 * (ordered[mid - 1] + ordered[mid])


def _read_series(csv_path) -> Dict[str, Dict[int, List[float]]]:
    """method -> iteration -> normalized values across seeds."""
    series: Dict[str, Dict[int, List[float]]] = {}
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotDataError(f"{csv_path}: empty file") from None
        if header != CSV_HEADER:
            raise PlotDataError(f"{csv_path}: unexpected header {header!r}")
        for index, row in enumerate(reader, start=2):
            try:
                method = row[0]
                iteration = int(row[2])
                normalized = float(row[4])
            except (IndexError, ValueError) as exc:
                raise PlotDataError(f"{csv_path}: malformed row {index}: {row!r}") from exc
            series.setdefault(method, {}).setdefault(iteration, []).append(normalized)
    if not series:
        raise PlotDataError(f"{csv_path}: no data rows")
    return series


def _ticks(upper: float, count: int = 5) -> List[float]:
    return [upper * i / (count - 1) for i in range(count)]


def emit_svg_plot(csv_path, out_path, aggregate: str = "median") -> Path:
    """Render one polyline per method, aggregated across seeds.

    ``aggregate`` is ``median`` or ``best`` (per-iteration max over seeds).
    Nothing is written if the CSV is empty or malformed.
    """
    if aggregate not in AGGREGATES:
        raise ValueError(f"aggregate must be one of {AGGREGATES}, got {aggregate!r}")
    series = _read_series(csv_path)

    methods = sorted(series)
    curves: Dict[str, List[tuple]] = {}
    x_max = 1.0
    y_max = 1.0
    for method in methods:
        points = []
        for iteration in sorted(series[method]):
            values = series[method][iteration]
            value = max(values) if aggregate == "best" else _median(values)
            points.append((iteration, value))
            y_max = max(y_max, value)
            x_max = max(x_max, iteration)
        curves[method] = points

    plot_w = _WIDTH - _LEFT - _RIGHT
    plot_h = _HEIGHT - _TOP - _BOTTOM
    y_max *= 1.05

    def sx(x: float) -> float:
        return _LEFT + plot_w * (x / x_max)

    def sy(y: float) -> float:
        return _TOP + plot_h * (1.0 - y / y_max)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<rect x="{_LEFT}" y="{_TOP}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333333" stroke-width="1"/>',
    ]
    for tick in _ticks(x_max):
        x = sx(tick)
        parts.append(
            f'<line x1="{x:.2f}" y1="{_TOP + plot_h}" x2="{x:.2f}" '
            f'y2="{_TOP + plot_h + 5}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{_TOP + plot_h + 18}" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{tick:g}</text>'
        )
    for tick in _ticks(y_max):
        y = sy(tick)
        parts.append(
            f'<line x1="{_LEFT - 5}" y1="{y:.2f}" x2="{_LEFT}" y2="{y:.2f}" stroke="#333333"/>'
        )
        parts.append(
            f'<text x="{_LEFT - 8}" y="{y + 4:.2f}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{tick:.2f}</text>'
        )
    parts.append(
        f'<text x="{_LEFT + plot_w / 2:.2f}" y="{_HEIGHT - 10}" font-size="13" '
        'text-anchor="middle" font-family="sans-serif">iteration</text>'
    )
    parts.append(
        f'<text x="16" y="{_TOP + plot_h / 2:.2f}" font-size="13" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 16 {_TOP + plot_h / 2:.2f})">'
        "normalized reward</text>"
    )

    for k, method in enumerate(methods):
        color = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in curves[method])
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _TOP + 16 + 16 * k
        parts.append(
            f'<line x1="{_LEFT + 10}" y1="{ly}" x2="{_LEFT + 34}" y2="{ly}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{_LEFT + 40}" y="{ly + 4}" font-size="12" '
            f'font-family="sans-serif">{method}</text>'
        )
    parts.append("</svg>")

    out_path = Path(out_path)
    out_path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out_path
