"""Deterministic SVG output: temperature maps and small-multiple line plots.

Nothing time- or host-dependent is written, so identical inputs give identical
bytes. Numbers are printed with fixed precision.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

# Fixed five-stop colour ramp from the legend minimum (blue) to maximum (red).
COLOR_STOPS = ((0.0, (49, 54, 149)), (0.25, (69, 117, 180)), (0.5, (255, 255, 191)),
               (0.75, (244, 109, 67)), (1.0, (165, 0, 38)))


def color(value: float, vmin: float, vmax: float) -> str:
    s = 0.5 if vmax <= vmin else float(np.clip((value - vmin) / (vmax - vmin), 0.0, 1.0))
    for (s0, c0), (s1, c1) in zip(COLOR_STOPS[:-1], COLOR_STOPS[1:]):
        if s <= s1:
            w = 0.0 if s1 == s0 else (s - s0) / (s1 - s0)
            rgb = [round(a + (b - a) * w) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*COLOR_STOPS[-1][1])


def _f(v: float) -> str:
    return f"{v:.2f}"


def heatmap_svg(values: np.ndarray, extent: tuple[float, float], vmin: float, vmax: float,
                title: str, cell_px: float = 8.0) -> str:
    """``values`` has shape (nx, ny) sampled at cell centres of a part ``extent`` = (Lx, Ly) in m.

    x runs left to right and y bottom to top. The legend states vmin and vmax.
    """
    values = np.atleast_2d(values)
    nx, ny = values.shape
    w, h = nx * cell_px, ny * cell_px
    margin, legend_h = 40.0, 50.0
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(w + 2 * margin)}" height="{_f(h + 2 * margin + legend_h)}">',
        f'<text x="{_f(margin)}" y="{_f(margin * 0.6)}" font-family="sans-serif" font-size="14">{escape(title)}</text>',
    ]
    for i in range(nx):
        for j in range(ny):
            x = margin + i * cell_px
            y = margin + (ny - 1 - j) * cell_px
            out.append(f'<rect x="{_f(x)}" y="{_f(y)}" width="{_f(cell_px)}" height="{_f(cell_px)}" '
                       f'class="cell" fill="{color(values[i, j], vmin, vmax)}"/>')
    out.append(f'<rect x="{_f(margin)}" y="{_f(margin)}" width="{_f(w)}" height="{_f(h)}" fill="none" stroke="black"/>')
    out.append(f'<text x="{_f(margin)}" y="{_f(margin + h + 16)}" font-family="sans-serif" font-size="11">'
               f'x: 0 to {extent[0] * 1000:.1f} mm; y: 0 to {extent[1] * 1000:.1f} mm</text>')
    # legend bar
    ly = margin + h + 26
    steps = 50
    bar_w = min(w, 300.0)
    for k in range(steps):
        v = vmin + (vmax - vmin) * (k + 0.5) / steps
        out.append(f'<rect x="{_f(margin + k * bar_w / steps)}" y="{_f(ly)}" width="{_f(bar_w / steps)}" '
                   f'height="10" fill="{color(v, vmin, vmax)}"/>')
    out.append(f'<text x="{_f(margin)}" y="{_f(ly + 24)}" font-family="sans-serif" font-size="11">{vmin:.1f} degC</text>')
    out.append(f'<text x="{_f(margin + bar_w)}" y="{_f(ly + 24)}" font-family="sans-serif" font-size="11" '
               f'text-anchor="end">{vmax:.1f} degC</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_grid_svg(panels: list[dict], columns: int, y_range: tuple[float, float], x_label: str,
                  y_label: str, panel_px: tuple[float, float] = (220.0, 160.0)) -> str:
    """Small multiples; each panel is {"title", "series": [{"x", "y", "color", "dash"}]}."""
    pw, ph = panel_px
    pad = 36.0
    rows = -(-len(panels) // columns)
    W, H = columns * (pw + pad) + pad, rows * (ph + pad) + pad + 20
    ymin, ymax = y_range
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(W)}" height="{_f(H)}">']
    for k, panel in enumerate(panels):
        ox = pad + (k % columns) * (pw + pad)
        oy = pad + (k // columns) * (ph + pad)
        out.append(f'<rect x="{_f(ox)}" y="{_f(oy)}" width="{_f(pw)}" height="{_f(ph)}" fill="none" stroke="black"/>')
        out.append(f'<text x="{_f(ox)}" y="{_f(oy - 6)}" font-family="sans-serif" font-size="11">'
                   f'{escape(panel["title"])}</text>')
        for s in panel["series"]:
            xs, ys = np.asarray(s["x"], dtype=float), np.asarray(s["y"], dtype=float)
            span = xs.max() - xs.min() or 1.0
            px = ox + (xs - xs.min()) / span * pw
            py = oy + ph - (ys - ymin) / ((ymax - ymin) or 1.0) * ph
            pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(px, py))
            dash = ' stroke-dasharray="4,3"' if s.get("dash") else ""
            out.append(f'<polyline points="{pts}" fill="none" stroke="{s["color"]}" stroke-width="1.5"{dash}/>')
    out.append(f'<text x="{_f(pad)}" y="{_f(H - 8)}" font-family="sans-serif" font-size="11">'
               f'{escape(x_label)}; {escape(y_label)} from {ymin:.1f} to {ymax:.1f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, text: str) -> None:
    Path(path).write_text(text)
