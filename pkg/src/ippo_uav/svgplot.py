"""Plain-text SVG rendering of flown trajectories over a scenario."""

from __future__ import annotations

from xml.sax.saxutils import quoteattr

import numpy as np

from .world import ScenarioSpec

_COLORS = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf")


class _Viewport:
    """Linear world-to-pixel map that keeps the aspect ratio and flips y."""

    def __init__(self, bounds, width: int, margin: int):
        xmin, ymin, xmax, ymax = bounds
        self.xmin, self.ymax = xmin, ymax
        self.scale = (width - 2 * margin) / (xmax - xmin)
        self.margin = margin
        self.width = width
        self.height = int(round((ymax - ymin) * self.scale)) + 2 * margin

    def x(self, wx: float) -> float:
        return self.margin + (wx - self.xmin) * self.scale

    def y(self, wy: float) -> float:
        return self.margin + (self.ymax - wy) * self.scale

    def length(self, d: float) -> float:
        return d * self.scale


def _f(v: float) -> str:
    return f"{v:.2f}"


def trajectory_svg(scenario: ScenarioSpec, paths, width: int = 800, margin: int = 20) -> str:
    """SVG document with obstacles, the dashed start-target line and one
    solid polyline per entry of ``paths`` (each an ``(n, 2)`` array of x, y)."""
    vp = _Viewport(scenario.field.bounds, width, margin)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{vp.width}" height="{vp.height}" '
        f'viewBox="0 0 {vp.width} {vp.height}">',
        f"<title>{scenario.name or 'scenario'}</title>",
        f'<rect x="0" y="0" width="{vp.width}" height="{vp.height}" fill="white" stroke="black"/>',
        '<g class="obstacles" fill="#888888" stroke="black">',
    ]
    for cx, cy, r in scenario.field.circles:
        out.append(f'<circle cx="{_f(vp.x(cx))}" cy="{_f(vp.y(cy))}" r="{_f(vp.length(r))}"/>')
    for x0, y0, x1, y1 in scenario.field.boxes:
        out.append(f'<rect x="{_f(vp.x(x0))}" y="{_f(vp.y(y1))}" width="{_f(vp.length(x1 - x0))}" '
                   f'height="{_f(vp.length(y1 - y0))}"/>')
    out.append("</g>")
    s, (tx, ty) = scenario.start, scenario.target
    out.append(f'<line class="expected" x1="{_f(vp.x(s.x))}" y1="{_f(vp.y(s.y))}" x2="{_f(vp.x(tx))}" '
               f'y2="{_f(vp.y(ty))}" stroke="black" stroke-dasharray="6,4" fill="none"/>')
    out.append('<g class="paths" fill="none" stroke-width="1.5">')
    for i, path in enumerate(paths):
        pts = np.asarray(path, dtype=np.float64).reshape(-1, 2)
        coords = " ".join(f"{_f(vp.x(x))},{_f(vp.y(y))}" for x, y in pts)
        out.append(f'<polyline points={quoteattr(coords)} stroke="{_COLORS[i % len(_COLORS)]}"/>')
    out.append("</g>")
    out.append(f'<circle class="target" cx="{_f(vp.x(tx))}" cy="{_f(vp.y(ty))}" '
               f'r="{_f(vp.length(scenario.capture_radius))}" fill="none" stroke="green" stroke-width="2"/>')
    out.append(f'<circle class="start" cx="{_f(vp.x(s.x))}" cy="{_f(vp.y(s.y))}" r="4" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
