"""Minimal hand-written SVG line plots (no plotting dependency, diffable output)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

COLORS = ("#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")
W, H = 640, 400
ML, MR, MT, MB = 70, 20, 40, 50


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-2:
        return f"{v:.2e}"
    return f"{v:.3g}"


def line_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "", logy: bool = False) -> str:
    """``series`` maps a legend label to ``(xs, ys)``. Returns SVG text."""
    pts = {}
    for name, (xs, ys) in series.items():
        pairs = [(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(float(y))]
        if logy:
            pairs = [(x, math.log10(y)) for x, y in pairs if y > 0]
        pts[name] = pairs
    allp = [p for v in pts.values() for p in v] or [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in allp), max(p[0] for p in allp)
    y0, y1 = min(p[1] for p in allp), max(p[1] for p in allp)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(x):
        return ML + (x - x0) / (x1 - x0) * (W - ML - MR)

    def sy(y):
        return H - MB - (y - y0) / (y1 - y0) * (H - MT - MB)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
        f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + i * (x1 - x0) / 4
        yv = y0 + i * (y1 - y0) / 4
        ylab = _fmt(10**yv) if logy else _fmt(yv)
        out.append(f'<text x="{sx(xv):.1f}" y="{H - MB + 16}" text-anchor="middle" font-size="11">{_fmt(xv)}</text>')
        out.append(f'<text x="{ML - 6}" y="{sy(yv) + 4:.1f}" text-anchor="end" font-size="11">{ylab}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {H / 2})">{escape(ylabel)}</text>'
    )
    for k, (name, pairs) in enumerate(pts.items()):
        color = COLORS[k % len(COLORS)]
        if pairs:
            poly = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pairs)
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{poly}"/>')
        ly = MT + 14 * k
        out.append(f'<line x1="{W - MR - 120}" y1="{ly}" x2="{W - MR - 100}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{W - MR - 95}" y="{ly + 4}" font-size="11">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
