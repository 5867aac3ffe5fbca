"""Static SVG rendering of a trace file.

Upper panel: vo and iL against time, each scaled to its own range. Lower
panel: the gate signal as a step trace. Long traces are thinned by striding
so the file stays small; the last sample is always kept.
"""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .trace import TraceFormatError, read_csv

__all__ = ["plot_trace"]

WIDTH, HEIGHT = 900, 520
LEFT, RIGHT = 70, 20
TOP_Y, TOP_H = 30, 300
BOT_Y, BOT_H = 380, 100
MAX_POINTS = 4000

COLORS = {"vo": "#1f77b4", "iL": "#d62728", "u": "#2ca02c"}


def _thin(n: int) -> list[int]:
    if n <= MAX_POINTS:
        return list(range(n))
    step = -(-n // MAX_POINTS)
    idx = list(range(0, n, step))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return idx


def _span(vals):
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    return lo, hi


def plot_trace(path, out) -> Path:
    trace = read_csv(path)
    rows = trace.records
    if not rows:
        raise TraceFormatError(path, None, "no data rows")
    idx = _thin(len(rows))
    ts = [rows[i].t for i in idx]
    t0, t1 = ts[0], ts[-1]
    if t1 == t0:
        t1 = t0 + 1.0
    plot_w = WIDTH - LEFT - RIGHT

    def x(t):
        return LEFT + (t - t0) / (t1 - t0) * plot_w

    def fmt(v):
        return format(v, ".4f")

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<title>{escape(trace.name)}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    for y, h in ((TOP_Y, TOP_H), (BOT_Y, BOT_H)):
        parts.append(f'<rect x="{LEFT}" y="{y}" width="{plot_w}" height="{h}" fill="none" stroke="#888"/>')

    parts.append('<g id="analog" fill="none" stroke-width="1">')
    legend_y = TOP_Y - 10
    for n, col in enumerate(("vo", "iL")):
        vals = [getattr(rows[i], col) for i in idx]
        if any(v is None for v in vals):
            continue
        lo, hi = _span(vals)
        pts = " ".join(f"{fmt(x(t))},{fmt(TOP_Y + TOP_H - (v - lo) / (hi - lo) * TOP_H)}" for t, v in zip(ts, vals))
        unit = "V" if col == "vo" else "A"
        parts.append(f'<polyline class="{col}" stroke="{COLORS[col]}" points="{pts}"/>')
        parts.append(
            f'<text x="{LEFT + 10 + 260 * n}" y="{legend_y}" font-size="12" fill="{COLORS[col]}" stroke="none">'
            f"{col} [{lo:.4g}, {hi:.4g}] {unit}</text>"
        )
    parts.append("</g>")

    parts.append('<g id="gate" fill="none" stroke-width="1">')
    us = [rows[i].u for i in idx]
    if all(u is not None for u in us):
        def y(u):
            return BOT_Y + BOT_H - 10 - u * (BOT_H - 20)

        pts = [f"{fmt(x(ts[0]))},{fmt(y(us[0]))}"]
        for j in range(1, len(ts)):
            if us[j] != us[j - 1]:
                pts.append(f"{fmt(x(ts[j]))},{fmt(y(us[j - 1]))}")
            pts.append(f"{fmt(x(ts[j]))},{fmt(y(us[j]))}")
        parts.append(f'<polyline class="u" stroke="{COLORS["u"]}" points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{LEFT + 10}" y="{BOT_Y - 8}" font-size="12" fill="{COLORS["u"]}">gate u</text>')
    parts.append("</g>")

    parts.append(f'<text x="{LEFT}" y="{HEIGHT - 12}" font-size="12">t = {t0:.6g} s</text>')
    parts.append(f'<text x="{WIDTH - RIGHT}" y="{HEIGHT - 12}" font-size="12" text-anchor="end">t = {ts[-1]:.6g} s</text>')
    parts.append("</svg>")
    out = Path(out)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out
