"""Minimal SVG output: stacked line panels and force-direction plots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass
class Panel:
    title: str
    series: list = field(default_factory=list)  # (x, y, label, dashed)
    vlines: list = field(default_factory=list)  # (x, label)

    def add(self, x, y, label="", dashed=False):
        self.series.append((np.asarray(x, float), np.asarray(y, float), label, dashed))
        return self


def _range(values):
    v = np.concatenate([np.asarray(a, float).ravel() for a in values]) if values else np.zeros(1)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _polyline(xs, ys, sx, sy, color, dashed):
    pts = []
    parts = []
    for x, y in zip(xs, ys):
        if math.isfinite(x) and math.isfinite(y):
            pts.append(f"{sx(x):.2f},{sy(y):.2f}")
        elif pts:
            parts.append(pts)
            pts = []
    if pts:
        parts.append(pts)
    dash = ' stroke-dasharray="6,4"' if dashed else ""
    return "".join(
        f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{" ".join(p)}"/>\n' for p in parts
    )


def panels_svg(panels: list[Panel], path, xlabel: str = "t [s]", width: int = 800, panel_height: int = 180) -> Path:
    margin_l, margin_r, margin_t, gap = 70, 20, 30, 40
    height = margin_t + len(panels) * (panel_height + gap)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">\n',
        f'<rect width="{width}" height="{height}" fill="white"/>\n',
    ]
    all_x = [s[0] for p in panels for s in p.series]
    x0, x1 = _range(all_x)
    for k, panel in enumerate(panels):
        top = margin_t + k * (panel_height + gap)
        y0, y1 = _range([s[1] for s in panel.series])
        w = width - margin_l - margin_r

        def sx(x):
            return margin_l + (x - x0) / (x1 - x0) * w

        def sy(y, top=top, y0=y0, y1=y1):
            return top + panel_height - (y - y0) / (y1 - y0) * panel_height

        out.append(f'<rect x="{margin_l}" y="{top}" width="{w}" height="{panel_height}" fill="none" stroke="#888"/>\n')
        out.append(f'<text x="{margin_l}" y="{top - 6}">{escape(panel.title)}</text>\n')
        out.append(f'<text x="4" y="{top + 10}">{y1:.3g}</text><text x="4" y="{top + panel_height}">{y0:.3g}</text>\n')
        for x, label in panel.vlines:
            if x0 <= x <= x1:
                out.append(
                    f'<line x1="{sx(x):.2f}" x2="{sx(x):.2f}" y1="{top}" y2="{top + panel_height}" '
                    f'stroke="#aaa" stroke-dasharray="3,3"/>\n'
                    f'<text x="{sx(x) + 2:.2f}" y="{top + 12}" fill="#666">{escape(label)}</text>\n'
                )
        for i, (xs, ys, label, dashed) in enumerate(panel.series):
            color = COLORS[i % len(COLORS)]
            out.append(_polyline(xs, ys, sx, sy, color, dashed))
            if label:
                out.append(f'<text x="{width - margin_r - 120}" y="{top + 14 + 12 * i}" fill="{color}">{escape(label)}</text>\n')
    bottom = margin_t + len(panels) * (panel_height + gap) - gap + 16
    out.append(f'<text x="{margin_l}" y="{bottom}">{x0:.3g}</text>')
    out.append(f'<text x="{width - margin_r - 40}" y="{bottom}">{x1:.3g}</text>')
    out.append(f'<text x="{width / 2:.0f}" y="{bottom}">{escape(xlabel)}</text>\n</svg>\n')
    path = Path(path)
    path.write_text("".join(out))
    return path


def force_lines_svg(
    body_y,
    body_z,
    foot_y,
    path,
    toe_y: float = 0.0,
    every: int = 5,
    title: str = "",
    width: int = 700,
    height: int = 400,
) -> Path:
    """Body path in the sagittal plane with segments from each sample's
    force-line ground intercept (``foot_y``) to the body."""
    by, bz, fy = (np.asarray(a, float) for a in (body_y, body_z, foot_y))
    ys = np.concatenate([by, fy[np.isfinite(fy)], [toe_y]])
    ylo, yhi = _range([ys])
    zhi = float(np.nanmax(bz)) * 1.1
    scale = min((width - 40) / (yhi - ylo), (height - 60) / zhi)

    def sx(y):
        return 20 + (y - ylo) * scale

    def sz(z):
        return height - 30 - z * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">\n',
        f'<rect width="{width}" height="{height}" fill="white"/>\n',
        f'<text x="20" y="16">{escape(title)}</text>\n',
        f'<line x1="0" x2="{width}" y1="{sz(0):.2f}" y2="{sz(0):.2f}" stroke="black"/>\n',
    ]
    for i in range(0, len(by), max(1, every)):
        if math.isfinite(fy[i]):
            out.append(
                f'<line x1="{sx(fy[i]):.2f}" y1="{sz(0):.2f}" x2="{sx(by[i]):.2f}" y2="{sz(bz[i]):.2f}" '
                f'stroke="#d62728" stroke-width="0.8" opacity="0.7"/>\n'
            )
    out.append(_polyline(by, bz, sx, sz, "#1f77b4", False))
    out.append(f'<circle cx="{sx(toe_y):.2f}" cy="{sz(0):.2f}" r="3" fill="black"/>\n</svg>\n')
    path = Path(path)
    path.write_text("".join(out))
    return path
