"""Deterministic SVG plots built from polyline and text primitives.

Every document has a fixed ``0 0 800 600`` viewBox and carries a
``<metadata>`` JSON block with its ``format_version``.  Coordinates are
printed with two decimals so identical inputs give identical bytes.
"""
from __future__ import annotations

import json
import math
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["SVG_FORMAT_VERSION", "residual_index_svg", "worm_svg", "nice_ticks"]

SVG_FORMAT_VERSION = 1
WIDTH, HEIGHT = 800, 600
MAX_POINTS = 2000


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick_label(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s in ("-0", "0") else s


def nice_ticks(lo: float, hi: float, count: int = 5):
    """Round tick positions covering ``[lo, hi]``."""
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / max(count, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9)
    ticks = []
    k = start
    while k * step <= hi + 1e-9 * step:
        ticks.append(round(k * step, 12))
        k += 1
    return ticks


def _range(values, pad=0.05):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return -1.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    span = hi - lo
    return lo - pad * span, hi + pad * span


class _Panel:
    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def px(self, x):
        a, b = self.xlim
        return self.x0 + (np.asarray(x, dtype=float) - a) / (b - a) * self.w

    def py(self, y):
        a, b = self.ylim
        return self.y0 + self.h - (np.asarray(y, dtype=float) - a) / (b - a) * self.h

    def polyline(self, x, y, stroke, width=1.0, dash=None):
        xs, ys = self.px(x), self.py(y)
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return (f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
                f'stroke-width="{width:g}"{extra}/>')

    def markers(self, x, y, stroke):
        """One short horizontal stroke per point."""
        xs, ys = self.px(x), self.py(y)
        return "\n".join(
            f'<polyline points="{_f(a - 1.5)},{_f(b)} {_f(a + 1.5)},{_f(b)}" stroke="{stroke}" stroke-width="1.5"/>'
            for a, b in zip(xs, ys)
        )

    def frame(self, title, xlabel, ylabel):
        out = [
            f'<polyline points="{_f(self.x0)},{_f(self.y0)} {_f(self.x0)},{_f(self.y0 + self.h)} '
            f'{_f(self.x0 + self.w)},{_f(self.y0 + self.h)} {_f(self.x0 + self.w)},{_f(self.y0)} '
            f'{_f(self.x0)},{_f(self.y0)}" fill="none" stroke="#000" stroke-width="1"/>',
            _text(self.x0 + self.w / 2, self.y0 - 8, title, anchor="middle", size=13),
            _text(self.x0 + self.w / 2, self.y0 + self.h + 32, xlabel, anchor="middle"),
            _text(self.x0 - 38, self.y0 + self.h / 2, ylabel, anchor="middle",
                  rotate=(self.x0 - 38, self.y0 + self.h / 2)),
        ]
        for t in nice_ticks(*self.xlim):
            x = float(self.px(t))
            yb = self.y0 + self.h
            out.append(f'<polyline points="{_f(x)},{_f(yb)} {_f(x)},{_f(yb + 4)}" stroke="#000"/>')
            out.append(_text(x, yb + 16, _tick_label(t), anchor="middle", size=10))
        for t in nice_ticks(*self.ylim):
            y = float(self.py(t))
            out.append(f'<polyline points="{_f(self.x0 - 4)},{_f(y)} {_f(self.x0)},{_f(y)}" stroke="#000"/>')
            out.append(_text(self.x0 - 6, y + 3, _tick_label(t), anchor="end", size=10))
        return out


def _text(x, y, s, anchor="start", size=11, rotate=None):
    rot = f' transform="rotate(-90 {_f(rotate[0])} {_f(rotate[1])})"' if rotate else ""
    return (f'<text x="{_f(x)}" y="{_f(y)}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}"{rot}>{escape(str(s))}</text>')


def _document(kind, body, meta=None):
    info = {"format_version": SVG_FORMAT_VERSION, "kind": kind, **(meta or {})}
    head = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}">',
        f"<metadata>{escape(json.dumps(info, sort_keys=True))}</metadata>",
        f'<polyline points="0,0 {WIDTH},0 {WIDTH},{HEIGHT} 0,{HEIGHT} 0,0" fill="#fff" stroke="none"/>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def _thin(n):
    """Indices of at most ``MAX_POINTS`` evenly spaced points."""
    if n <= MAX_POINTS:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, MAX_POINTS).round().astype(int))


def residual_index_svg(residuals, title="Quantile residuals against index") -> str:
    """Residuals in observation order with reference lines at 0 and +-2."""
    r = np.asarray(residuals, dtype=float)
    n = r.size
    idx = np.arange(1, n + 1, dtype=float)
    ylo, yhi = _range(np.concatenate([r, [-2.5, 2.5]]))
    panel = _Panel(80, 50, 680, 470, (0.0, float(max(n, 1)) + 1.0), (ylo, yhi))
    keep = _thin(n)
    body = panel.frame(title, "index", "quantile residual")
    body.append(panel.polyline([0, n + 1], [0, 0], "#555"))
    for level in (-2.0, 2.0):
        body.append(panel.polyline([0, n + 1], [level, level], "#999", dash="4 3"))
    body.append(panel.markers(idx[keep], r[keep], "#1f4e9a"))
    return _document("residual_index", body, {"n": n})


def _grid(k):
    cols = 1 if k == 1 else 2
    rows = int(math.ceil(k / cols))
    return rows, cols


def worm_svg(panels, title="Worm plot") -> str:
    """Worm plots: deviation against normal quantile with 95% bands.

    Parameters
    ----------
    panels : sequence of ``(label, WormPlot)``
    """
    panels = list(panels)
    if not panels:
        raise ValueError("no worm panels")
    rows, cols = _grid(len(panels))
    top = 40
    cell_w = (WIDTH - 20) / cols
    cell_h = (HEIGHT - top - 10) / rows
    zs = np.concatenate([p.z for _, p in panels])
    zlim = _range(zs, pad=0.02)
    # bands widen without bound in the tails, so the scale follows the data
    dev = np.concatenate([p.deviation for _, p in panels])
    half = max(1.0, 1.1 * float(np.max(np.abs(dev[np.isfinite(dev)]), initial=0.0)))
    ylim = (-half, half)
    body = [_text(WIDTH / 2, 22, title, anchor="middle", size=15)]
    for k, (label, wp) in enumerate(panels):
        r, c = divmod(k, cols)
        panel = _Panel(20 + c * cell_w + 60, top + r * cell_h + 24, cell_w - 80, cell_h - 70, zlim, ylim)
        body += panel.frame(f"{label} (n={wp.n})", "unit normal quantile", "deviation")
        body.append(panel.polyline(zlim, [0, 0], "#555"))
        body.append(panel.polyline(wp.z, np.clip(wp.lower, -half, half), "#b03a2e", dash="4 3"))
        body.append(panel.polyline(wp.z, np.clip(wp.upper, -half, half), "#b03a2e", dash="4 3"))
        keep = _thin(wp.z.size)
        body.append(panel.markers(wp.z[keep], wp.deviation[keep], "#1f4e9a"))
    return _document("worm", body, {"panels": [str(lbl) for lbl, _ in panels]})
