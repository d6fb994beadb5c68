"""Minimal dependency-free SVG charts for the CLI reports."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2")
WIDTH, HEIGHT, PAD = 640, 360, 50


def _svg(body: list[str], width: int = WIDTH, height: int = HEIGHT) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _text(x: float, y: float, s: str, anchor: str = "middle", extra: str = "") -> str:
    return f'<text x="{x:.2f}" y="{y:.2f}" text-anchor="{anchor}"{extra}>{escape(s)}</text>'


def _legend(names: Sequence[str], x0: float) -> list[str]:
    out = []
    for n, name in enumerate(names):
        y = PAD + 14 * n
        out.append(f'<rect x="{x0:.2f}" y="{y - 9:.2f}" width="10" height="10" fill="{PALETTE[n % len(PALETTE)]}"/>')
        out.append(_text(x0 + 14, y, name, "start"))
    return out


def bar_chart(groups: Sequence[str], series: dict[str, Sequence[float]], title: str, ylabel: str) -> str:
    """Grouped bars: one group per entry of ``groups``, one bar per series."""
    names = list(series)
    top = max((v for vals in series.values() for v in vals), default=1.0) or 1.0
    plot_w, plot_h = WIDTH - 2 * PAD - 110, HEIGHT - 2 * PAD
    slot = plot_w / max(len(groups), 1)
    bar = slot * 0.8 / max(len(names), 1)
    body = [_text(WIDTH / 2, 20, title, extra=' font-size="14"')]
    body.append(f'<line x1="{PAD}" y1="{PAD + plot_h}" x2="{PAD + plot_w}" y2="{PAD + plot_h}" stroke="black"/>')
    body.append(f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{PAD + plot_h}" stroke="black"/>')
    body.append(_text(14, PAD + plot_h / 2, ylabel, extra=f' transform="rotate(-90 14 {PAD + plot_h / 2:.2f})"'))
    for tick in range(5):
        val = top * tick / 4
        y = PAD + plot_h * (1 - tick / 4)
        body.append(_text(PAD - 4, y + 4, f"{val:.3g}", "end"))
    for g, group in enumerate(groups):
        x0 = PAD + g * slot + slot * 0.1
        for n, name in enumerate(names):
            h = plot_h * series[name][g] / top
            body.append(
                f'<rect x="{x0 + n * bar:.2f}" y="{PAD + plot_h - h:.2f}" width="{bar:.2f}" '
                f'height="{h:.2f}" fill="{PALETTE[n % len(PALETTE)]}"/>'
            )
        body.append(_text(PAD + (g + 0.5) * slot, PAD + plot_h + 16, group))
    body.extend(_legend(names, WIDTH - PAD - 100))
    return _svg(body)


def line_plot(series: dict[str, Sequence[float]], title: str, xlabel: str, ylabel: str) -> str:
    names = list(series)
    n_pts = max(len(v) for v in series.values())
    lo = min(min(v) for v in series.values())
    hi = max(max(v) for v in series.values())
    span = (hi - lo) or 1.0
    plot_w, plot_h = WIDTH - 2 * PAD - 110, HEIGHT - 2 * PAD
    body = [_text(WIDTH / 2, 20, title, extra=' font-size="14"')]
    body.append(f'<rect x="{PAD}" y="{PAD}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>')
    body.append(_text(PAD + plot_w / 2, HEIGHT - 12, xlabel))
    body.append(_text(14, PAD + plot_h / 2, ylabel, extra=f' transform="rotate(-90 14 {PAD + plot_h / 2:.2f})"'))
    body.append(_text(PAD - 4, PAD + 4, f"{hi:.3g}", "end"))
    body.append(_text(PAD - 4, PAD + plot_h + 4, f"{lo:.3g}", "end"))
    for n, name in enumerate(names):
        vals = series[name]
        pts = " ".join(
            f"{PAD + plot_w * i / max(n_pts - 1, 1):.2f},{PAD + plot_h * (1 - (v - lo) / span):.2f}"
            for i, v in enumerate(vals)
        )
        body.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[n % len(PALETTE)]}" stroke-width="1.5"/>')
    body.extend(_legend(names, WIDTH - PAD - 100))
    return _svg(body)


def circular_plot(n_nodes: int, edges: Sequence[tuple[int, int]], weights: Sequence[float], title: str, labels=None) -> str:
    """Nodes on a circle, selected edges drawn as chords with width by weight."""
    size = 480
    cx = cy = size / 2
    radius = size / 2 - 50
    pos = [
        (cx + radius * math.cos(2 * math.pi * i / n_nodes - math.pi / 2), cy + radius * math.sin(2 * math.pi * i / n_nodes - math.pi / 2))
        for i in range(n_nodes)
    ]
    top = max(weights, default=1.0) or 1.0
    body = [_text(cx, 20, title, extra=' font-size="14"')]
    for (i, j), w in zip(edges, weights):
        (x1, y1), (x2, y2) = pos[i], pos[j]
        body.append(
            f'<path d="M {x1:.2f} {y1:.2f} Q {cx:.2f} {cy:.2f} {x2:.2f} {y2:.2f}" fill="none" '
            f'stroke="{PALETTE[3]}" stroke-width="{1 + 4 * w / top:.2f}" stroke-opacity="0.8"/>'
        )
    for i, (x, y) in enumerate(pos):
        body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="4" fill="{PALETTE[0]}"/>')
        lx = cx + (radius + 16) * math.cos(2 * math.pi * i / n_nodes - math.pi / 2)
        ly = cy + (radius + 16) * math.sin(2 * math.pi * i / n_nodes - math.pi / 2)
        body.append(_text(lx, ly + 4, labels[i] if labels else str(i)))
    return _svg(body, size, size)


def write(path, svg: str) -> None:
    Path(path).write_text(svg)
