"""Minimal deterministic SVG scatter plot of target versus rendered samples."""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT, PAD = 480, 480, 48
COLOURS = {"target": "#1f77b4", "rendered": "#ff7f0e"}


def _fmt(v):
    return f"{v:.2f}"


def _xy(samples):
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.shape[1] == 1:
        pts = np.column_stack([pts[:, 0], np.zeros(len(pts))])
    return pts[:, :2]


def scatter_svg(target_samples, rendered_samples, title=""):
    """Overlay two point clouds (first two coordinates) with axes and a legend."""
    tgt, ren = _xy(target_samples), _xy(rendered_samples)
    both = np.vstack([tgt, ren])
    lo, hi = both.min(axis=0), both.max(axis=0)
    span = np.where(hi - lo > 1e-12, hi - lo, 1.0)
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    span = hi - lo

    def px(p):
        return (PAD + (p[:, 0] - lo[0]) / span[0] * (WIDTH - 2 * PAD),
                HEIGHT - PAD - (p[:, 1] - lo[1]) / span[1] * (HEIGHT - 2 * PAD))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
           f'<text x="{PAD}" y="{HEIGHT - PAD + 16}" font-size="11">{_fmt(lo[0])}</text>',
           f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 16}" font-size="11" text-anchor="end">{_fmt(hi[0])}</text>',
           f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" font-size="11" text-anchor="end">{_fmt(lo[1])}</text>',
           f'<text x="{PAD - 4}" y="{PAD + 10}" font-size="11" text-anchor="end">{_fmt(hi[1])}</text>']
    if title:
        out.append(f'<text x="{WIDTH / 2:.0f}" y="{PAD / 2:.0f}" font-size="14" text-anchor="middle">{title}</text>')
    for name, pts in (("target", tgt), ("rendered", ren)):
        xs, ys = px(pts)
        out.append(f'<g fill="{COLOURS[name]}" fill-opacity="0.6">')
        out.extend(f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="2"/>' for x, y in zip(xs, ys))
        out.append("</g>")
    for i, name in enumerate(("target", "rendered")):
        y = PAD + 8 + 16 * i
        out.append(f'<circle cx="{WIDTH - PAD - 80}" cy="{y}" r="4" fill="{COLOURS[name]}"/>')
        out.append(f'<text x="{WIDTH - PAD - 70}" y="{y + 4}" font-size="12">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
