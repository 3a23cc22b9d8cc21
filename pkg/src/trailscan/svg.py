"""Minimal SVG line chart of power against mean shift."""
from __future__ import annotations

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=60, right=20, top=30, bottom=50)
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def power_svg(series, title: str = "", reference: float = 0.95, xlabel: str = "mu") -> str:
    """``series`` is a list of ``(label, [(x, power), ...])``; y runs over [0, 1]."""
    xs = [x for _, pts in series for x, _ in pts]
    if not xs:
        raise ValueError("nothing to plot")
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MARGIN["top"] + (1.0 - y) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle">{escape(title)}</text>')
    # axes
    out.append(f'<line class="axis" x1="{sx(x0):.1f}" y1="{sy(0):.1f}" x2="{sx(x1):.1f}" y2="{sy(0):.1f}" stroke="black"/>')
    out.append(f'<line class="axis" x1="{sx(x0):.1f}" y1="{sy(0):.1f}" x2="{sx(x0):.1f}" y2="{sy(1):.1f}" stroke="black"/>')
    for k in range(6):
        y = k / 5
        out.append(f'<text x="{sx(x0) - 6:.1f}" y="{sy(y) + 4:.1f}" text-anchor="end">{_fmt(y)}</text>')
        x = x0 + (x1 - x0) * k / 5
        out.append(f'<text x="{sx(x):.1f}" y="{sy(0) + 18:.1f}" text-anchor="middle">{_fmt(x)}</text>')
    out.append(f'<text x="{sx((x0 + x1) / 2):.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{sy(0.5):.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {sy(0.5):.1f})">power</text>')
    out.append(f'<line class="reference" x1="{sx(x0):.1f}" y1="{sy(reference):.1f}" x2="{sx(x1):.1f}" '
               f'y2="{sy(reference):.1f}" stroke="gray" stroke-dasharray="4 3"/>')
    out.append(f'<text x="{sx(x0) + 4:.1f}" y="{sy(reference) - 4:.1f}" fill="gray">{reference:g}</text>')
    for n, (label, pts) in enumerate(series):
        color = COLORS[n % len(COLORS)]
        coords = " ".join(f"{sx(x):.1f},{sy(min(max(p, 0.0), 1.0)):.1f}" for x, p in sorted(pts))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
        out.append(f'<text x="{WIDTH - MARGIN["right"] - 4}" y="{MARGIN["top"] + 14 * (n + 1) + 4}" '
                   f'text-anchor="end" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
