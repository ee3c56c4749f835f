"""Minimal self-contained SVG line plots (no plotting dependency)."""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(round(v, 12))
        v += step
    return out


def line_plot(series, path: str | Path, title: str = "", xlabel: str = "", ylabel: str = "",
              ylim: tuple | None = None, logy: bool = False, width: int = 640, height: int = 420) -> None:
    """Write ``series`` = [(label, xs, ys), ...] as an SVG polyline chart.

    With ``logy`` nonpositive values are dropped from the path.
    """
    ml, mr, mt, mb = 64, 150, 36, 48
    pw, ph = width - ml - mr, height - mt - mb
    fy = (lambda v: math.log10(v)) if logy else (lambda v: v)  # noqa: E731
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [fy(y) for _, _, ys in series for y in ys if not logy or y > 0]
    if not xs_all or not ys_all:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = (min(ys_all), max(ys_all)) if ylim is None else (fy(ylim[0]), fy(ylim[1]))
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    sx = lambda x: ml + (x - x0) / (x1 - x0) * pw  # noqa: E731
    sy = lambda y: mt + ph - (y - y0) / (y1 - y0) * ph  # noqa: E731

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        X = sx(t)
        parts.append(f'<line x1="{X:.2f}" y1="{mt}" x2="{X:.2f}" y2="{mt + ph}" stroke="#ddd"/>')
        parts.append(f'<text x="{X:.2f}" y="{mt + ph + 14}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        Y = sy(t)
        lab = f"1e{t:g}" if logy else f"{t:g}"
        parts.append(f'<line x1="{ml}" y1="{Y:.2f}" x2="{ml + pw}" y2="{Y:.2f}" stroke="#ddd"/>')
        parts.append(f'<text x="{ml - 6}" y="{Y + 4:.2f}" text-anchor="end">{lab}</text>')
    for k, (label, xs, ys) in enumerate(series):
        colour = PALETTE[k % len(PALETTE)]
        pts = [(sx(x), sy(fy(y))) for x, y in zip(xs, ys) if not logy or y > 0]
        pts = [(X, min(max(Y, mt), mt + ph)) for X, Y in pts]
        if pts:
            coords = " ".join(f"{X:.2f},{Y:.2f}" for X, Y in pts)
            parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        ly = mt + 14 * (k + 1)
        parts.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 30}" y2="{ly - 4}" '
                     f'stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 34}" y="{ly}">{escape(str(label))}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {mt + ph / 2})">{escape(ylabel)}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
