"""Deterministic log-log SVG plots of optimal-sparsity contours."""

from __future__ import annotations

import math
from html import escape
from typing import Optional, Sequence

from .errors import EmptyInputError

WIDTH, HEIGHT = 720, 480
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 170, 30, 60
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def _bounds(values: Sequence[float]) -> tuple[float, float]:
    lo, hi = math.floor(min(values)), math.ceil(max(values))
    if lo == hi:
        hi = lo + 1
    return lo, hi


def emit_contour_plot(contours: Sequence[Sequence], frontier: Optional[Sequence] = None,
                      path: Optional[str] = None, title: str = "Optimal sparsity contours") -> str:
    """Render contours (lists of points with ``sparsity``, ``N``, ``C``) and the dense frontier.

    x is log10 of non-zero parameters, y is log10 of training FLOPs. The same
    inputs always produce the same bytes.
    """
    contours = [list(c) for c in contours if len(c)]
    if not contours:
        raise EmptyInputError("no contour points to plot")
    series = [(f"S = {c[0].sparsity:g}", PALETTE[i % len(PALETTE)], "", c)
              for i, c in enumerate(contours)]
    if frontier:
        series.append(("Chinchilla (dense)", "#000000", ' stroke-dasharray="6 4"', list(frontier)))

    xs = [math.log10(p.N) for _, _, _, pts in series for p in pts]
    ys = [math.log10(p.C) for _, _, _, pts in series for p in pts]
    x0, x1 = _bounds(xs)
    y0, y1 = _bounds(ys)
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(lx):
        return MARGIN_LEFT + (lx - x0) / (x1 - x0) * plot_w

    def py(ly):
        return MARGIN_TOP + (y1 - ly) / (y1 - y0) * plot_h

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<title>{escape(title)}</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        '<g id="axes" stroke="#444444" fill="none">',
        f'<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}"/>',
    ]
    step_x = max(1, (x1 - x0) // 8)
    for d in range(x0, x1 + 1, step_x):
        x = _fmt(px(d))
        out.append(f'<line x1="{x}" y1="{MARGIN_TOP + plot_h}" x2="{x}" y2="{MARGIN_TOP + plot_h + 5}"/>')
    step_y = max(1, (y1 - y0) // 8)
    for d in range(y0, y1 + 1, step_y):
        y = _fmt(py(d))
        out.append(f'<line x1="{MARGIN_LEFT - 5}" y1="{y}" x2="{MARGIN_LEFT}" y2="{y}"/>')
    out.append("</g>")
    out.append('<g id="tick-labels" fill="#222222">')
    for d in range(x0, x1 + 1, step_x):
        out.append(f'<text x="{_fmt(px(d))}" y="{MARGIN_TOP + plot_h + 20}" '
                   f'text-anchor="middle">1e{d}</text>')
    for d in range(y0, y1 + 1, step_y):
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{_fmt(py(d) + 4)}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{_fmt(MARGIN_LEFT + plot_w / 2)}" y="{HEIGHT - 15}" '
               f'text-anchor="middle">non-zero parameters N</text>')
    out.append(f'<text transform="translate(20 {_fmt(MARGIN_TOP + plot_h / 2)}) rotate(-90)" '
               f'text-anchor="middle">training FLOPs C</text>')
    out.append("</g>")

    out.append('<g id="series" fill="none" stroke-width="2">')
    for label, color, extra, pts in series:
        coords = " ".join(f"{_fmt(px(math.log10(p.N)))},{_fmt(py(math.log10(p.C)))}" for p in pts)
        out.append(f'<polyline data-label="{escape(label)}" stroke="{color}"{extra} points="{coords}"/>')
    out.append("</g>")

    out.append('<g id="legend">')
    lx = WIDTH - MARGIN_RIGHT + 15
    for i, (label, color, extra, _) in enumerate(series):
        y = MARGIN_TOP + 15 + 20 * i
        out.append(f'<line x1="{lx}" y1="{y}" x2="{lx + 25}" y2="{y}" stroke="{color}" '
                   f'stroke-width="2"{extra}/>')
        out.append(f'<text x="{lx + 32}" y="{y + 4}" fill="#222222">{escape(label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    svg = "\n".join(out) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    return svg
