"""Static SVG plots with no rendering dependency."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=78, right=20, top=36, bottom=56)
COLORS = ("#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d68910")


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    kind: str = "points"  # or "line"
    label: str = ""
    color: str | None = None


def nice_ticks(lo: float, hi: float, n: int = 6) -> np.ndarray:
    """Round-numbered ticks covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return np.array([0.0])
    if hi == lo:
        return np.array([lo])
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    return np.arange(start, hi + 1e-9 * step, step)


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    return f"{v:.4g}"


def _range(arrs) -> tuple[float, float]:
    vals = np.concatenate([np.asarray(a, dtype=float)[np.isfinite(a)] for a in arrs] or [np.zeros(1)])
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    pad = 0.04 * (hi - lo)
    return lo - pad, hi + pad


def line_plot(series: list[Series], xlabel: str = "", ylabel: str = "", title: str = "",
              xscale: float = 1.0, yscale: float = 1.0) -> str:
    """SVG with one axis frame; data are divided by ``xscale``/``yscale`` for display."""
    xs = [np.asarray(s.x, dtype=float) / xscale for s in series]
    ys = [np.asarray(s.y, dtype=float) / yscale for s in series]
    x0, x1 = _range(xs)
    y0, y1 = _range(ys)
    L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def px(x):
        return L + (x - x0) / (x1 - x0) * (R - L)

    def py(y):
        return B - (y - y0) / (y1 - y0) * (B - T)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>']
    for t in nice_ticks(x0, x1):
        if x0 <= t <= x1:
            X = px(t)
            out.append(f'<line x1="{X:.2f}" y1="{B}" x2="{X:.2f}" y2="{B + 5}" stroke="black"/>')
            out.append(f'<text x="{X:.2f}" y="{B + 18}" text-anchor="middle">{escape(_fmt_tick(t))}</text>')
    for t in nice_ticks(y0, y1):
        if y0 <= t <= y1:
            Y = py(t)
            out.append(f'<line x1="{L - 5}" y1="{Y:.2f}" x2="{L}" y2="{Y:.2f}" stroke="black"/>')
            out.append(f'<text x="{L - 8}" y="{Y + 4:.2f}" text-anchor="end">{escape(_fmt_tick(t))}</text>')
    out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 14}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{(T + B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(T + B) / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{(L + R) / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for i, (s, x, y) in enumerate(zip(series, xs, ys)):
        color = s.color or COLORS[i % len(COLORS)]
        ok = np.isfinite(x) & np.isfinite(y)
        if s.kind == "line":
            pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[ok], y[ok]))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        else:
            for a, b in zip(x[ok], y[ok]):
                out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.2" fill="{color}"/>')
        if s.label:
            ly = T + 16 + 16 * i
            out.append(f'<rect x="{R - 150}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
            out.append(f'<text x="{R - 134}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap(x, y, z, xlabel="x (nm)", ylabel="y (nm)", title="", zlabel="") -> str:
    """Cells colored by ``z`` on the (x, y) scatter; NaN cells are grey."""
    x, y, z = (np.asarray(a, dtype=float) for a in (x, y, z))
    ux, uy = np.unique(x), np.unique(y)
    dx = float(np.min(np.diff(ux))) if len(ux) > 1 else 1.0
    dy = float(np.min(np.diff(uy))) if len(uy) > 1 else 1.0
    x0, x1 = ux[0] - dx / 2, ux[-1] + dx / 2
    y0, y1 = uy[0] - dy / 2, uy[-1] + dy / 2
    L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"] - 60, MARGIN["top"], HEIGHT - MARGIN["bottom"]
    zf = z[np.isfinite(z)]
    zmin, zmax = (float(zf.min()), float(zf.max())) if zf.size else (0.0, 1.0)
    span = zmax - zmin or 1.0

    def color(v):
        if not math.isfinite(v):
            return "#bbbbbb"
        t = (v - zmin) / span
        r, g, b = int(255 * t), int(80 + 120 * t * (1 - t)), int(255 * (1 - t))
        return f"#{r:02x}{g:02x}{b:02x}"

    def px(v):
        return L + (v - x0) / (x1 - x0) * (R - L)

    def py(v):
        return B - (v - y0) / (y1 - y0) * (B - T)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']
    w = (R - L) * dx / (x1 - x0)
    h = (B - T) * dy / (y1 - y0)
    for a, b, v in zip(x, y, z):
        out.append(f'<rect x="{px(a) - w / 2:.2f}" y="{py(b) - h / 2:.2f}" width="{w:.2f}" height="{h:.2f}" '
                   f'fill="{color(v)}"/>')
    out.append(f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>')
    for t in nice_ticks(x0, x1, 5):
        if x0 <= t <= x1:
            out.append(f'<text x="{px(t):.2f}" y="{B + 18}" text-anchor="middle">{escape(_fmt_tick(t))}</text>')
    for t in nice_ticks(y0, y1, 5):
        if y0 <= t <= y1:
            out.append(f'<text x="{L - 8}" y="{py(t) + 4:.2f}" text-anchor="end">{escape(_fmt_tick(t))}</text>')
    out.append(f'<text x="{(L + R) / 2}" y="{HEIGHT - 14}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{(T + B) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(T + B) / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{(L + R) / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{R + 12}" y="{T + 10}">{escape(zlabel)}</text>')
    out.append(f'<text x="{R + 12}" y="{T + 28}">max {escape(_fmt_tick(zmax))}</text>')
    out.append(f'<text x="{R + 12}" y="{T + 44}">min {escape(_fmt_tick(zmin))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
