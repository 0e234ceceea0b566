"""Minimal static scatter plot writer."""

from __future__ import annotations

import numpy as np

_W, _H, _M = 800, 600, 60


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def scatter_svg(x, y, xlabel: str, ylabel: str, yrange=None, xrange=None, radius: float = 0.6) -> str:
    """Render points as an axis-labelled SVG document; points outside the ranges are dropped."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    if yrange is not None:
        ok &= (y >= yrange[0]) & (y <= yrange[1])
    if xrange is not None:
        ok &= (x >= xrange[0]) & (x <= xrange[1])
    x, y = x[ok], y[ok]
    x0, x1 = xrange if xrange is not None else ((x.min(), x.max()) if x.size else (0.0, 1.0))
    y0, y1 = yrange if yrange is not None else ((y.min(), y.max()) if y.size else (0.0, 1.0))
    if x1 <= x0:
        x0, x1 = x0 - 0.5, x0 + 0.5
    if y1 <= y0:
        y0, y1 = y0 - 0.5, y0 + 0.5

    def px(v):
        return _M + (v - x0) / (x1 - x0) * (_W - 2 * _M)

    def py(v):
        return _H - _M - (v - y0) / (y1 - y0) * (_H - 2 * _M)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{_M}" y="{_M}" width="{_W - 2 * _M}" height="{_H - 2 * _M}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{_H - _M + 18}" font-size="12" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{_M - 6}" y="{py(t) + 4:.1f}" font-size="12" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 15}" font-size="14" text-anchor="middle">{xlabel}</text>')
    out.append(
        f'<text x="18" y="{_H / 2}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 18 {_H / 2})">{ylabel}</text>'
    )
    out.append('<g fill="black">')
    out.extend(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="{radius}"/>' for a, b in zip(x, y))
    out.append("</g></svg>")
    return "\n".join(out) + "\n"
