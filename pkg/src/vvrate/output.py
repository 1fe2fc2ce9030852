"""Deterministic CSV emission and a minimal static SVG line plotter."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape


def fmt(v) -> str:
    """17 significant digits for reals, plain text otherwise."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float) or hasattr(v, "dtype"):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path):
    """Header and rows of strings."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]


_W, _H, _PAD = 640, 420, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_plot_svg(path, series, title="", xlabel="", ylabel="", logx=False) -> None:
    """Write an SVG with one polyline (or marker set) per series.

    ``series`` is a list of ``(label, xs, ys, style)`` with style ``"line"`` or
    ``"points"``. With ``logx`` the x axis shows ``log2`` of the values.
    """
    def tx(x):
        return math.log2(x) if logx else x

    pts = [(tx(x), y) for _, xs, ys, _ in series for x, y in zip(xs, ys)
           if math.isfinite(y) and (not logx or x > 0)]
    xs_all = [p[0] for p in pts] or [0.0, 1.0]
    ys_all = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def px(x):
        return _PAD + (x - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def py(y):
        return _H - _PAD - (y - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
           f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>']
    for v in _ticks(x0, x1):
        label = f"2^{v:.3g}" if logx else f"{v:.3g}"
        out.append(f'<text x="{px(v):.2f}" y="{_H - _PAD + 16}" text-anchor="middle">'
                   f'{escape(label)}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<text x="{_PAD - 6}" y="{py(v) + 4:.2f}" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{_H / 2}" text-anchor="middle" '
               f'transform="rotate(-90 15 {_H / 2})">{escape(ylabel)}</text>')
    for i, (label, xs, ys, style) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        coords = [(px(tx(x)), py(y)) for x, y in zip(xs, ys)
                  if math.isfinite(y) and (not logx or x > 0)]
        if style == "points":
            out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>'
                       for a, b in coords)
        elif coords:
            path_pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in coords)
            out.append(f'<polyline points="{path_pts}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5"/>')
        out.append(f'<text x="{_W - _PAD - 150}" y="{_PAD + 14 * i}" fill="{color}">'
                   f'{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
