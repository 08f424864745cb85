"""Minimal SVG writers (line plots and mask overlays) with no plotting dependency."""

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _num(v):
    return f"{v:.2f}"


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot(series, title="", xlabel="", ylabel="", log_y=False, width=480, height=320):
    """SVG text for ``series = [(label, xs, ys), ...]``.

    Non-finite points (and non-positive ones when ``log_y``) are dropped.
    """
    ml, mr, mt, mb = 60, 110, 30, 45
    pts = []
    for label, xs, ys in series:
        keep = []
        for x, y in zip(xs, ys):
            if y is None or x is None:
                continue
            x, y = float(x), float(y)
            if not (math.isfinite(x) and math.isfinite(y)) or (log_y and y <= 0):
                continue
            keep.append((x, math.log10(y) if log_y else y))
        pts.append((label, keep))
    allx = [p[0] for _, k in pts for p in k] or [0.0, 1.0]
    ally = [p[1] for _, k in pts for p in k] or [0.0, 1.0]
    x0, x1 = min(allx), max(allx)
    y0, y1 = min(ally), max(ally)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">'
           f'{escape(title)}</text>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_num(sx(t))}" y1="{mt + ph}" x2="{_num(sx(t))}" '
                   f'y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{_num(sx(t))}" y="{mt + ph + 16}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        lab = f"1e{t:.2g}" if log_y else f"{t:.3g}"
        out.append(f'<line x1="{ml - 4}" y1="{_num(sy(t))}" x2="{ml}" y2="{_num(sy(t))}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{_num(sy(t) + 4)}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, keep) in enumerate(pts):
        col = PALETTE[i % len(PALETTE)]
        if keep:
            path = " ".join(f"{_num(sx(x))},{_num(sy(y))}" for x, y in keep)
            out.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="1.5"/>')
            for x, y in keep:
                out.append(f'<circle cx="{_num(sx(x))}" cy="{_num(sy(y))}" r="2.5" fill="{col}"/>')
        ly = mt + 12 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 28}" y2="{ly - 4}" '
                   f'stroke="{col}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 32}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def mask_overlay(domain, mask, title="", cell_px=None, max_px=512):
    """2-d boolean masks drawn as row runs: domain in grey, ``mask`` in red.

    The first array axis is horizontal, the second vertical (upwards).
    """
    domain = np.asarray(domain, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if domain.ndim != 2:
        raise ValueError("mask overlays are two-dimensional")
    nx, ny = domain.shape
    cp = cell_px or max(1.0, max_px / max(nx, ny))
    w, h = nx * cp, ny * cp
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h + 24:.0f}" '
           f'font-family="sans-serif" font-size="12">',
           f'<rect width="{w:.0f}" height="{h + 24:.0f}" fill="white"/>',
           f'<text x="{w / 2:.1f}" y="16" text-anchor="middle">{escape(title)}</text>']
    for arr, col in ((domain, "#cccccc"), (mask, "#d62728")):
        for j in range(ny):
            col_j = arr[:, j]
            i = 0
            while i < nx:
                if not col_j[i]:
                    i += 1
                    continue
                k = i
                while k < nx and col_j[k]:
                    k += 1
                y = 24 + (ny - 1 - j) * cp
                out.append(f'<rect x="{i * cp:.2f}" y="{y:.2f}" width="{(k - i) * cp:.2f}" '
                           f'height="{cp:.2f}" fill="{col}"/>')
                i = k
    out.append("</svg>")
    return "\n".join(out) + "\n"
