"""Tiny deterministic SVG line charts for experiment summaries.

Hand-rolled instead of a plotting library so that rerunning an experiment
produces byte-identical artifacts (no embedded timestamps or random ids).
"""

from __future__ import annotations

import math

_COLORS = ("#2060c0", "#c03020", "#208040", "#806020")
_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 30, 45


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s for s in (mag, 2 * mag, 2.5 * mag, 5 * mag, 10 * mag) if s >= raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12:
        out.append(round(v, 12))
        v += step
    return out


def line_chart(series: dict[str, tuple[list[float], list[float]]], title: str,
               x_label: str, y_label: str, path) -> None:
    """Write an SVG with one polyline per named series; NaN points are gaps."""
    xs_all, ys_all = [], []
    for xs, ys in series.values():
        for x, y in zip(xs, ys):
            if not (math.isnan(x) or math.isnan(y)):
                xs_all.append(x)
                ys_all.append(y)
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y_lo, y_hi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    y_lo = min(y_lo, 0.0)

    def sx(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def sy(y: float) -> float:
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for tx in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{sx(tx):.2f}" y1="{_H - _MB}" x2="{sx(tx):.2f}" '
                     f'y2="{_H - _MB + 4}" stroke="black"/>')
        parts.append(f'<text x="{sx(tx):.2f}" y="{_H - _MB + 16}" text-anchor="middle" '
                     f'font-size="10">{tx:g}</text>')
    for ty in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{_ML - 4}" y1="{sy(ty):.2f}" x2="{_ML}" '
                     f'y2="{sy(ty):.2f}" stroke="black"/>')
        parts.append(f'<text x="{_ML - 6}" y="{sy(ty) + 3:.2f}" text-anchor="end" '
                     f'font-size="10">{ty:g}</text>')
    parts.append(f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
                 f'height="{_H - _MT - _MB}" fill="none" stroke="black"/>')
    parts.append(f'<text x="{_W / 2:.1f}" y="{_H - 8}" text-anchor="middle" '
                 f'font-size="12">{x_label}</text>')
    parts.append(f'<text x="14" y="{_H / 2:.1f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 14 {_H / 2:.1f})">{y_label}</text>')

    for i, (name, (xs, ys)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        points = " ".join(
            f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys)
            if not (math.isnan(x) or math.isnan(y))
        )
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                     f'points="{points}"/>')
        ly = _MT + 14 + 14 * i
        parts.append(f'<line x1="{_W - _MR - 110}" y1="{ly}" x2="{_W - _MR - 90}" '
                     f'y2="{ly}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{_W - _MR - 85}" y="{ly + 4}" font-size="11">{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
