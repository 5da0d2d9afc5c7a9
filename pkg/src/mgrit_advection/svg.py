"""Small deterministic SVG plots.

Only three plot kinds are needed: convergence histories and error curves on
a logarithmic vertical axis, eigenvalues in the complex plane, and stem
plots of matrix diagonals.  All coordinates are written with a fixed number
of decimals, so identical input always gives identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "emit_svg", "KINDS"]

KINDS = ("semilogy", "eigenscatter", "stemplot")

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_MARGIN = (64, 20, 36, 48)  # left, right, top, bottom


@dataclass
class Series:
    """One data set.  For ``eigenscatter`` ``x`` and ``y`` are the real and
    imaginary parts."""

    label: str
    x: np.ndarray
    y: np.ndarray
    style: str = "line"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.x.shape != self.y.shape:
            raise ValueError("x and y must have the same length")
        if self.style not in ("line", "marker", "dashed"):
            raise ValueError(f"unknown style {self.style!r}")


def _f(v):
    return f"{v:.2f}"


def _nice_ticks(lo, hi, count=5):
    if not hi > lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return ticks


def _fmt_tick(v):
    if v == 0:
        return "0"
    if abs(v) >= 1e4 or abs(v) < 1e-3:
        return f"{v:.0e}"
    return f"{v:g}"


@dataclass
class _Frame:
    xlim: tuple
    ylim: tuple
    width: int
    height: int
    logy: bool = False
    parts: list = field(default_factory=list)

    def px(self, x):
        l, r = _MARGIN[0], self.width - _MARGIN[1]
        return l + (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * (r - l)

    def py(self, y):
        t, b = _MARGIN[2], self.height - _MARGIN[3]
        if self.logy:
            y = np.log10(y)
        return b - (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * (b - t)


def _limits(values, pad=0.05, default=(0.0, 1.0)):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return default
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


def _axes(fr: _Frame, title, xlabel, ylabel):
    l, r = _MARGIN[0], fr.width - _MARGIN[1]
    t, b = _MARGIN[2], fr.height - _MARGIN[3]
    p = fr.parts
    p.append(f'<rect x="{l}" y="{t}" width="{r - l}" height="{b - t}" fill="none" stroke="#000"/>')
    for v in _nice_ticks(*fr.xlim):
        if fr.xlim[0] <= v <= fr.xlim[1]:
            x = _f(fr.px(v))
            p.append(f'<line x1="{x}" y1="{b}" x2="{x}" y2="{b + 4}" stroke="#000"/>')
            p.append(f'<text x="{x}" y="{b + 16}" font-size="10" text-anchor="middle">'
                     f'{_fmt_tick(v)}</text>')
    if fr.logy:
        yt = [10.0 ** k for k in range(math.ceil(fr.ylim[0] - 1e-9), math.floor(fr.ylim[1] + 1e-9) + 1)]
        labels = [f"1e{int(round(math.log10(v)))}" for v in yt]
    else:
        yt = [v for v in _nice_ticks(*fr.ylim) if fr.ylim[0] <= v <= fr.ylim[1]]
        labels = [_fmt_tick(v) for v in yt]
    for v, lab in zip(yt, labels):
        y = _f(fr.py(v))
        p.append(f'<line x1="{l - 4}" y1="{y}" x2="{l}" y2="{y}" stroke="#000"/>')
        p.append(f'<text x="{l - 6}" y="{y}" font-size="10" text-anchor="end" '
                 f'dominant-baseline="middle">{lab}</text>')
    if title:
        p.append(f'<text x="{_f((l + r) / 2)}" y="{t - 12}" font-size="12" '
                 f'text-anchor="middle">{escape(title)}</text>')
    if xlabel:
        p.append(f'<text x="{_f((l + r) / 2)}" y="{fr.height - 8}" font-size="11" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        cy = _f((t + b) / 2)
        p.append(f'<text x="14" y="{cy}" font-size="11" text-anchor="middle" '
                 f'transform="rotate(-90 14 {cy})">{escape(ylabel)}</text>')


def _legend(fr: _Frame, series):
    x0 = fr.width - _MARGIN[1] - 8
    for i, s in enumerate(series):
        if not s.label:
            continue
        y = _MARGIN[2] + 14 + 14 * i
        color = _COLORS[i % len(_COLORS)]
        fr.parts.append(f'<text x="{x0}" y="{y}" font-size="10" text-anchor="end" '
                        f'fill="{color}">{escape(s.label)}</text>')


def _draw_series(fr: _Frame, i, s: Series, mask):
    color = _COLORS[i % len(_COLORS)]
    xs, ys = s.x[mask], s.y[mask]
    pts = [(_f(fr.px(a)), _f(fr.py(b))) for a, b in zip(xs, ys)]
    if s.style in ("line", "dashed") and len(pts) > 1:
        dash = ' stroke-dasharray="5,3"' if s.style == "dashed" else ""
        coords = " ".join(f"{a},{b}" for a, b in pts)
        fr.parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}"{dash}/>')
    if s.style in ("line", "marker"):
        for a, b in pts:
            fr.parts.append(f'<circle cx="{a}" cy="{b}" r="2.5" fill="{color}"/>')


def emit_svg(series, kind: str, path=None, title: str = "", xlabel: str = "", ylabel: str = "",
             vlines=(), width: int = 480, height: int = 360) -> str:
    """Render ``series`` as an SVG document.

    Parameters
    ----------
    series : sequence of Series
        May be empty, which gives an axes-only plot.
    kind : {"semilogy", "eigenscatter", "stemplot"}
    path : path-like, optional
        Written when given.
    vlines : sequence of float
        Dashed vertical reference lines (stem plots mark offsets this way).

    Returns
    -------
    str
        The SVG text.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    series = list(series)
    all_x = np.concatenate([s.x for s in series]) if series else np.zeros(0)
    all_y = np.concatenate([s.y for s in series]) if series else np.zeros(0)

    if kind == "semilogy":
        pos = all_y[all_y > 0]
        if pos.size:
            ylim = (math.floor(np.log10(pos.min())), math.ceil(np.log10(pos.max())))
            if ylim[0] == ylim[1]:
                ylim = (ylim[0] - 1, ylim[1])
        else:
            ylim = (-1.0, 0.0)
        fr = _Frame(_limits(all_x), ylim, width, height, logy=True)
    elif kind == "eigenscatter":
        radius = max(1.0, float(np.max(np.hypot(all_x, all_y)))) if all_x.size else 1.0
        lim = (-1.1 * radius, 1.1 * radius)
        side = min(width - _MARGIN[0] - _MARGIN[1], height - _MARGIN[2] - _MARGIN[3])
        fr = _Frame(lim, lim, _MARGIN[0] + _MARGIN[1] + side, _MARGIN[2] + _MARGIN[3] + side)
    else:
        xl = _limits(np.concatenate([all_x, np.asarray(vlines, dtype=float)]))
        fr = _Frame(xl, _limits(np.concatenate([all_y, [0.0]])), width, height)

    _axes(fr, title, xlabel, ylabel)
    if kind == "eigenscatter":
        cx, cy = _f(fr.px(0.0)), _f(fr.py(0.0))
        rad = _f(fr.px(1.0) - fr.px(0.0))
        fr.parts.append(f'<circle cx="{cx}" cy="{cy}" r="{rad}" fill="none" stroke="#888" '
                        f'stroke-dasharray="4,3"/>')
    if kind == "stemplot":
        y0 = _f(fr.py(0.0))
        fr.parts.append(f'<line x1="{_f(fr.px(fr.xlim[0]))}" y1="{y0}" '
                        f'x2="{_f(fr.px(fr.xlim[1]))}" y2="{y0}" stroke="#000"/>')
    for v in vlines:
        x = _f(fr.px(float(v)))
        fr.parts.append(f'<line x1="{x}" y1="{_MARGIN[2]}" x2="{x}" '
                        f'y2="{fr.height - _MARGIN[3]}" stroke="#444" stroke-dasharray="6,4"/>')

    for i, s in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        finite = np.isfinite(s.x) & np.isfinite(s.y)
        if kind == "semilogy":
            _draw_series(fr, i, s, finite & (s.y > 0))
        elif kind == "eigenscatter":
            for a, b in zip(s.x[finite], s.y[finite]):
                fr.parts.append(f'<circle cx="{_f(fr.px(a))}" cy="{_f(fr.py(b))}" r="2" '
                                f'fill="none" stroke="{color}"/>')
        else:
            y0 = _f(fr.py(0.0))
            for a, b in zip(s.x[finite], s.y[finite]):
                x, y = _f(fr.px(a)), _f(fr.py(b))
                fr.parts.append(f'<line x1="{x}" y1="{y0}" x2="{x}" y2="{y}" stroke="{color}"/>')
                fr.parts.append(f'<circle cx="{x}" cy="{y}" r="2.5" fill="{color}"/>')
    _legend(fr, series)

    body = "\n".join(fr.parts)
    text = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{fr.width}" height="{fr.height}" '
            f'viewBox="0 0 {fr.width} {fr.height}">\n'
            f'<rect width="100%" height="100%" fill="#fff"/>\n{body}\n</svg>\n')
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
