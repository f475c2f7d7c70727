"""Minimal self-contained SVG line charts (no plotting dependency)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    label: str


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def panel(series: Sequence[Series], x0: float, y0: float, w: float, h: float, title: str,
          xlabel: str, ylabel: str) -> list[str]:
    xs = np.concatenate([s.x for s in series])
    ys = np.concatenate([s.y for s in series])
    xlo, xhi = float(xs.min()), float(xs.max())
    ylo, yhi = float(ys.min()), float(ys.max())
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 1, yhi + 1
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    if xhi <= xlo:
        xhi = xlo + 1
    sx = lambda v: x0 + (v - xlo) / (xhi - xlo) * w
    sy = lambda v: y0 + h - (v - ylo) / (yhi - ylo) * h
    out = [f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#333"/>',
           f'<text x="{x0 + w / 2}" y="{y0 - 8}" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<text x="{x0 + w / 2}" y="{y0 + h + 34}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
           f'<text x="{x0 - 48}" y="{y0 + h / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 {x0 - 48} {y0 + h / 2})">{escape(ylabel)}</text>']
    for t in _ticks(xlo, xhi):
        out.append(f'<line x1="{sx(t):.2f}" y1="{y0 + h}" x2="{sx(t):.2f}" y2="{y0 + h + 4}" stroke="#333"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{y0 + h + 16}" text-anchor="middle" font-size="10">{_fmt(t)}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<line x1="{x0 - 4}" y1="{sy(t):.2f}" x2="{x0}" y2="{sy(t):.2f}" stroke="#333"/>')
        out.append(f'<text x="{x0 - 6}" y="{sy(t) + 3:.2f}" text-anchor="end" font-size="10">{_fmt(t)}</text>')
    for i, s in enumerate(series):
        # thin long series so files stay small
        stride = max(1, len(s.x) // 2000)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(s.x[::stride], s.y[::stride]))
        color = COLORS[i % len(COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{x0 + w - 8}" y="{y0 + 16 + 14 * i}" text-anchor="end" font-size="11" '
                   f'fill="{color}">{escape(s.label)}</text>')
    return out


def figure(panels: list[list[str]], width: int, height: int) -> str:
    body = "\n".join(line for p in panels for line in p)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')
