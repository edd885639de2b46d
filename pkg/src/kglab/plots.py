"""Self-contained SVG line plots with byte-stable output."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b")
WIDTH, HEIGHT = 640, 400
MARGIN = (70, 20, 40, 50)  # left, right, top, bottom


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:.3g}"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def render_svg(series: Mapping[str, tuple[Sequence[float], Sequence[float]]],
               title: str = "", xlabel: str = "", ylabel: str = "", logy: bool = False) -> str:
    """SVG text for ``{label: (x, y)}``; non-finite points (and non-positive ones on a log axis) are dropped."""
    if not series:
        raise ValueError("nothing to plot: no series given")
    cleaned = {}
    for label, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape:
            raise ValueError(f"series {label!r}: x and y differ in shape")
        ok = np.isfinite(x) & np.isfinite(y)
        if logy:
            ok &= y > 0
        if np.any(ok):
            cleaned[label] = (x[ok], np.log10(y[ok]) if logy else y[ok])
    if not cleaned:
        raise ValueError("nothing to plot: all series are empty")
    xs = np.concatenate([v[0] for v in cleaned.values()])
    ys = np.concatenate([v[1] for v in cleaned.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for k in range(5):
        tx = x0 + k * (x1 - x0) / 4
        ty = y0 + k * (y1 - y0) / 4
        out.append(f'<text x="{_fmt(px(tx))}" y="{top + ph + 15}" text-anchor="middle">'
                   f'{_tick_label(tx)}</text>')
        lab = f"1e{ty:.1f}" if logy else _tick_label(ty)
        out.append(f'<text x="{left - 5}" y="{_fmt(py(ty) + 4)}" text-anchor="end">{lab}</text>')
        out.append(f'<line x1="{left}" y1="{_fmt(py(ty))}" x2="{left + pw}" y2="{_fmt(py(ty))}" '
                   'stroke="#dddddd"/>')
    for i, (label, (x, y)) in enumerate(cleaned.items()):
        colour = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{pts}"/>')
        out.append(f'<text x="{left + pw - 5}" y="{top + 14 + 14 * i}" text-anchor="end" '
                   f'fill="{colour}">{_escape(label)}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="13">'
                   f'{_escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle">'
                   f'{_escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2:.1f})">{_escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], path: Path,
              title: str = "", xlabel: str = "", ylabel: str = "", logy: bool = False) -> Path:
    """Write :func:`render_svg` output to ``path``."""
    text = render_svg(series, title, xlabel, ylabel, logy)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
