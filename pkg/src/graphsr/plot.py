"""Minimal deterministic SVG line and scatter plots."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")
WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=60, right=150, top=30, bottom=50)


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]
    kind: str = "line"          # "line" or "scatter"
    color: str | None = None
    radius: float = 3.0

    def __post_init__(self):
        if self.kind not in ("line", "scatter"):
            raise ValueError("kind must be 'line' or 'scatter'")
        if len(self.x) != len(self.y):
            raise ValueError(f"series {self.label!r}: x and y lengths differ")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError(f"series {self.label!r} contains non-finite values")


@dataclass
class Figure:
    series: list[Series] = field(default_factory=list)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlim: tuple[float, float] | None = None
    ylim: tuple[float, float] | None = None


def _n(v: float) -> str:
    return f"{v:.2f}"


def _limits(values: list[float], forced) -> tuple[float, float]:
    if forced is not None:
        return float(forced[0]), float(forced[1])
    if not values:
        return 0.0, 1.0
    lo, hi = float(min(values)), float(max(values))
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_svg(fig: Figure) -> str:
    xs = [v for s in fig.series for v in s.x]
    ys = [v for s in fig.series for v in s.y]
    x0, x1 = _limits(xs, fig.xlim)
    y0, y1 = _limits(ys, fig.ylim)
    left, top = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if fig.title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="18" text-anchor="middle" font-size="13">{escape(fig.title)}</text>')
    out.append(f'<g class="axes" stroke="black" stroke-width="1">'
               f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>'
               f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/></g>')
    for t in np.linspace(x0, x1, 5):
        out.append(f'<text x="{_n(px(t))}" y="{top + ph + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in np.linspace(y0, y1, 5):
        out.append(f'<text x="{left - 6}" y="{_n(py(t) + 4)}" text-anchor="end">{t:.3g}</text>')
    if fig.xlabel:
        out.append(f'<text x="{left + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(fig.xlabel)}</text>')
    if fig.ylabel:
        out.append(f'<text x="14" y="{top + ph / 2:.2f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2:.2f})">{escape(fig.ylabel)}</text>')
    for i, s in enumerate(fig.series):
        color = s.color or PALETTE[i % len(PALETTE)]
        if s.kind == "line" and len(s.x):
            pts = " ".join(f"{_n(px(a))},{_n(py(b))}" for a, b in zip(s.x, s.y))
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        elif s.kind == "scatter":
            out.append(f'<g fill="{color}">')
            out += [f'<circle cx="{_n(px(a))}" cy="{_n(py(b))}" r="{s.radius:g}"/>' for a, b in zip(s.x, s.y)]
            out.append("</g>")
        ly = top + 14 * i + 8
        lx = left + pw + 12
        out.append(f'<rect x="{lx}" y="{ly - 8}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{lx + 14}" y="{ly + 1}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series, path, **figure_kwargs) -> str:
    """Render ``series`` (a list of :class:`Series`) to an SVG file; returns the SVG text."""
    svg = render_svg(Figure(list(series), **figure_kwargs))
    Path(path).write_text(svg, encoding="utf-8")
    return svg
