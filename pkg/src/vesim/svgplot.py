"""Standalone SVG line plots, written as plain text.

No plotting stack: the output is a deterministic function of the input
series, so identical data produces byte-identical files (testable by string
comparison). Log axes drop non-positive points.
"""

from __future__ import annotations

import math

from .errors import ContractError

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 720, 480
_ML, _MR, _MT, _MB = 70, 20, 40, 50  # margins


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-12 * span:
        out.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return out


def line_plot_svg(
    series,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = False,
    logy: bool = False,
) -> str:
    """Render [(label, xs, ys), ...] as an SVG document string."""
    pts = []
    for label, xs, ys in series:
        keep = [
            (x, y)
            for x, y in zip(xs, ys)
            if (not logx or x > 0) and (not logy or y > 0)
        ]
        pts.append((label, keep))
    allx = [x for _, kp in pts for x, _ in kp]
    ally = [y for _, kp in pts for _, y in kp]
    if not allx:
        raise ContractError("nothing to plot (all points filtered)")

    def tx(v):
        return math.log10(v) if logx else v

    def ty(v):
        return math.log10(v) if logy else v

    x0, x1 = min(map(tx, allx)), max(map(tx, allx))
    y0, y1 = min(map(ty, ally)), max(map(ty, ally))
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw, ph = _W - _ML - _MR, _H - _MT - _MB

    def px(v):
        return _ML + pw * (tx(v) - x0) / (x1 - x0)

    def py(v):
        return _MT + ph * (1.0 - (ty(v) - y0) / (y1 - y0))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<rect x="{_ML}" y="{_MT}" width="{pw}" height="{ph}" fill="none" '
        f'stroke="black" stroke-width="1"/>',
    ]
    if title:
        out.append(
            f'<text x="{_W / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="monospace" font-size="15">{title}</text>'
        )

    for t in _ticks(x0, x1):
        label = f"1e{t:.0f}" if logx else _fmt(t)
        xp = _ML + pw * (t - x0) / (x1 - x0)
        out.append(
            f'<line x1="{xp:.2f}" y1="{_MT + ph}" x2="{xp:.2f}" '
            f'y2="{_MT + ph + 5}" stroke="black"/>'
        )
        out.append(
            f'<text x="{xp:.2f}" y="{_MT + ph + 20}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{label}</text>'
        )
    for t in _ticks(y0, y1):
        label = f"1e{t:.0f}" if logy else _fmt(t)
        yp = _MT + ph * (1.0 - (t - y0) / (y1 - y0))
        out.append(
            f'<line x1="{_ML - 5}" y1="{yp:.2f}" x2="{_ML}" y2="{yp:.2f}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_ML - 8}" y="{yp + 4:.2f}" text-anchor="end" '
            f'font-family="monospace" font-size="11">{label}</text>'
        )
    if xlabel:
        out.append(
            f'<text x="{_ML + pw / 2:.1f}" y="{_H - 12}" text-anchor="middle" '
            f'font-family="monospace" font-size="12">{xlabel}</text>'
        )
    if ylabel:
        out.append(
            f'<text x="16" y="{_MT + ph / 2:.1f}" text-anchor="middle" '
            f'font-family="monospace" font-size="12" '
            f'transform="rotate(-90 16 {_MT + ph / 2:.1f})">{ylabel}</text>'
        )

    for idx, (label, kp) in enumerate(pts):
        if not kp:
            continue
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in kp)
        out.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _MT + 14 + 14 * idx
        out.append(
            f'<line x1="{_ML + pw - 110}" y1="{ly - 4}" x2="{_ML + pw - 90}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>'
        )
        out.append(
            f'<text x="{_ML + pw - 84}" y="{ly}" font-family="monospace" '
            f'font-size="11">{label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
