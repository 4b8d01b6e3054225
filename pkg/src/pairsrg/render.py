"""Deterministic SVG rendering of SRG clouds with optional region overlays."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

VIEW = 3.5
SIZE = 480
MARGIN = 40
BOUNDARY_POINTS = 721


def _px(x, y):
    s = SIZE / (2 * VIEW)
    return MARGIN + (x + VIEW) * s, MARGIN + (VIEW - y) * s


def _fmt(v):
    return f"{v:.3f}"


def _boundary_paths(region):
    """Polylines approximating the boundary of ``region`` inside the viewport."""
    from . import regions as R

    if isinstance(region, (R.RegionUnion, R.RegionIntersection)):
        return [p for part in region.parts for p in _boundary_paths(part)]
    try:
        reg = R._basic(region)
    except R.UnsupportedTransformError:
        return []
    if isinstance(reg, R.HalfPlane):
        if abs(reg.alpha) > VIEW:
            return []
        return [[(reg.alpha, -VIEW), (reg.alpha, VIEW)]]
    if isinstance(reg, (R.Disk, R.DiskComplement)):
        t = np.linspace(0.0, 2 * math.pi, BOUNDARY_POINTS)
        xs = reg.center.real + reg.radius * np.cos(t)
        ys = reg.center.imag + reg.radius * np.sin(t)
        path, paths = [], []
        for x, y in zip(xs, ys):
            if abs(x) <= VIEW and abs(y) <= VIEW:
                path.append((x, y))
            elif path:
                paths.append(path)
                path = []
        if path:
            paths.append(path)
        return paths
    return []


def render_svg(cloud, region=None, title=None) -> bytes:
    """Render a cloud on the fixed viewport ``[-3.5, 3.5]^2``.

    Points outside the viewport are clipped. The point at infinity is drawn
    as an ``∞`` glyph in the right margin when present.
    """
    w = SIZE + 2 * MARGIN
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}">',
        f'<rect x="0" y="0" width="{w}" height="{w}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="#999"/>',
    ]
    x0, y0 = _px(-VIEW, 0)
    x1, _ = _px(VIEW, 0)
    out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y0)}" stroke="#ccc"/>')
    xa, ya = _px(0, VIEW)
    _, yb = _px(0, -VIEW)
    out.append(f'<line x1="{_fmt(xa)}" y1="{_fmt(ya)}" x2="{_fmt(xa)}" y2="{_fmt(yb)}" stroke="#ccc"/>')
    if region is not None:
        for path in _boundary_paths(region):
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in (_px(x, y) for x, y in path))
            out.append(f'<polyline points="{pts}" fill="none" stroke="#c33" stroke-width="1.5"/>')
    pts = cloud.points
    vis = (np.abs(pts.real) <= VIEW) & (np.abs(pts.imag) <= VIEW)
    # identical pixels are drawn once, which keeps large clouds small
    seen = set()
    for z in pts[vis]:
        a, b = _px(z.real, z.imag)
        key = (_fmt(a), _fmt(b))
        if key in seen:
            continue
        seen.add(key)
        out.append(f'<circle cx="{key[0]}" cy="{key[1]}" r="1.2" fill="#236"/>')
    if cloud.has_infinity:
        out.append(
            f'<text x="{w - MARGIN + 6}" y="{MARGIN + 16}" font-size="18" fill="#236">&#8734;</text>'
        )
    if title:
        out.append(f'<text x="{MARGIN}" y="{MARGIN - 12}" font-size="14">{escape(title)}</text>')
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode()
