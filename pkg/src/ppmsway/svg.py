"""Minimal SVG plotting: panels with axes, polylines, histograms and bar charts.

Output is plain text with fixed float formatting, so identical data gives
identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd")


def _f(x: float) -> str:
    return f"{x:.2f}"


def nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo] if math.isfinite(lo) else []
    raw = (hi - lo) / max(count, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    return [round(first + i * step, 10) for i in range(int((hi - first) / step + 1e-9) + 1)]


def _range(values, pad: float = 0.05) -> tuple[float, float]:
    v = np.asarray([x for x in np.ravel(values) if math.isfinite(x)], dtype=np.float64)
    if len(v) == 0:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return lo - 0.5, hi + 0.5
    span = hi - lo
    return lo - pad * span, hi + pad * span


@dataclass
class Panel:
    x: float
    y: float
    width: float
    height: float
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlim: tuple[float, float] = (0.0, 1.0)
    ylim: tuple[float, float] = (0.0, 1.0)
    items: list[str] = field(default_factory=list)

    def sx(self, v: float) -> float:
        lo, hi = self.xlim
        return self.x + (v - lo) / (hi - lo) * self.width

    def sy(self, v: float) -> float:
        lo, hi = self.ylim
        return self.y + self.height - (v - lo) / (hi - lo) * self.height

    def line(self, xs, ys, color: str = PALETTE[0], width: float = 1.0) -> None:
        pts = " ".join(f"{_f(self.sx(a))},{_f(self.sy(b))}" for a, b in zip(xs, ys)
                       if math.isfinite(a) and math.isfinite(b))
        if pts:
            self.items.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>')

    def bar(self, x0: float, x1: float, top: float, color: str, base: float = 0.0) -> None:
        y0, y1 = sorted((self.sy(base), self.sy(top)))
        self.items.append(f'<rect x="{_f(self.sx(x0))}" y="{_f(y0)}" width="{_f(self.sx(x1) - self.sx(x0))}" '
                          f'height="{_f(y1 - y0)}" fill="{color}"/>')

    def error_bar(self, x: float, lo: float, hi: float, cap: float = 3.0) -> None:
        px, a, b = self.sx(x), self.sy(lo), self.sy(hi)
        self.items.append(f'<path d="M{_f(px)},{_f(a)}V{_f(b)}M{_f(px - cap)},{_f(a)}H{_f(px + cap)}'
                          f'M{_f(px - cap)},{_f(b)}H{_f(px + cap)}" stroke="#000" fill="none"/>')

    def text(self, x: float, y: float, s: str, anchor: str = "middle", size: int = 10) -> None:
        self.items.append(f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}">{escape(s)}</text>')

    def render(self, xticks=None, xticklabels=None) -> str:
        out = [f'<rect x="{_f(self.x)}" y="{_f(self.y)}" width="{_f(self.width)}" height="{_f(self.height)}" '
               f'fill="none" stroke="#000"/>']
        ticks = nice_ticks(*self.xlim) if xticks is None else xticks
        labels = [f"{t:g}" for t in ticks] if xticklabels is None else xticklabels
        base = self.y + self.height
        for t, lab in zip(ticks, labels):
            px = self.sx(t)
            out.append(f'<path d="M{_f(px)},{_f(base)}v4" stroke="#000"/>')
            out.append(f'<text x="{_f(px)}" y="{_f(base + 14)}" font-size="9" text-anchor="middle">{escape(lab)}</text>')
        for t in nice_ticks(*self.ylim):
            py = self.sy(t)
            out.append(f'<path d="M{_f(self.x)},{_f(py)}h-4" stroke="#000"/>')
            out.append(f'<text x="{_f(self.x - 6)}" y="{_f(py + 3)}" font-size="9" text-anchor="end">{t:g}</text>')
        cx = self.x + self.width / 2
        if self.title:
            out.append(f'<text x="{_f(cx)}" y="{_f(self.y - 6)}" font-size="11" text-anchor="middle">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{_f(cx)}" y="{_f(base + 28)}" font-size="10" text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cy = self.y + self.height / 2
            out.append(f'<text x="{_f(self.x - 38)}" y="{_f(cy)}" font-size="10" text-anchor="middle" '
                       f'transform="rotate(-90 {_f(self.x - 38)} {_f(cy)})">{escape(self.ylabel)}</text>')
        return "\n".join(out + self.items)


@dataclass
class Figure:
    width: float
    height: float
    panels: list[Panel] = field(default_factory=list)
    extras: list[str] = field(default_factory=list)
    _ticks: dict = field(default_factory=dict)

    def panel(self, x, y, w, h, **kw) -> Panel:
        p = Panel(x, y, w, h, **kw)
        self.panels.append(p)
        return p

    def set_xticks(self, panel: Panel, ticks, labels) -> None:
        self._ticks[id(panel)] = (ticks, labels)

    def legend(self, x: float, y: float, entries) -> None:
        for i, (label, color) in enumerate(entries):
            yy = y + 14 * i
            self.extras.append(f'<rect x="{_f(x)}" y="{_f(yy - 8)}" width="10" height="10" fill="{color}"/>')
            self.extras.append(f'<text x="{_f(x + 14)}" y="{_f(yy + 1)}" font-size="10">{escape(label)}</text>')

    def to_svg(self) -> str:
        body = []
        for p in self.panels:
            ticks, labels = self._ticks.get(id(p), (None, None))
            body.append(f'<g class="panel">\n{p.render(ticks, labels)}\n</g>')
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(self.width)}" height="{_f(self.height)}" '
                f'viewBox="0 0 {_f(self.width)} {_f(self.height)}" font-family="sans-serif">\n'
                f'<rect width="100%" height="100%" fill="#fff"/>\n'
                + "\n".join(body + self.extras) + "\n</svg>\n")


def histogram(panel: Panel, values, bins: int = 30, color: str = PALETTE[0]) -> None:
    counts, edges = np.histogram(values, bins=bins, range=panel.xlim)
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        if c:
            panel.bar(float(a), float(b), float(c), color)


def trial_figure(series, title: str = "") -> str:
    """Six-panel COP view of one trial.

    Per-foot COP positions, the 2D total-COP trace, ML and AP against time
    and the ML and AP displacement histograms.
    """
    t = np.asarray(series.t_s)
    left, right, total = (np.asarray(a) for a in (series.cop_left, series.cop_right, series.cop_total))
    fig = Figure(900, 620)
    if title:
        fig.extras.append(f'<text x="450" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>')
    feet = np.concatenate([left, right, total])
    p = fig.panel(60, 50, 240, 220, title="Per-foot and total COP", xlabel="ML (mm)", ylabel="AP (mm)",
                  xlim=_range(feet[:, 1]), ylim=_range(feet[:, 0]))
    for arr, color in ((left, PALETTE[0]), (right, PALETTE[1]), (total, PALETTE[2])):
        p.line(arr[:, 1], arr[:, 0], color, 0.8)
    fig.legend(70, 290, [("left", PALETTE[0]), ("right", PALETTE[1]), ("total", PALETTE[2])])
    p = fig.panel(360, 50, 220, 220, title="Total COP trace", xlabel="ML (mm)", ylabel="AP (mm)",
                  xlim=_range(total[:, 1]), ylim=_range(total[:, 0]))
    p.line(total[:, 1], total[:, 0], PALETTE[2], 0.8)
    p = fig.panel(640, 50, 230, 100, title="ML vs time", xlabel="", ylabel="ML (mm)",
                  xlim=_range(t, 0), ylim=_range(total[:, 1]))
    p.line(t, total[:, 1], PALETTE[0], 0.8)
    p = fig.panel(640, 190, 230, 100, title="AP vs time", xlabel="time (s)", ylabel="AP (mm)",
                  xlim=_range(t, 0), ylim=_range(total[:, 0]))
    p.line(t, total[:, 0], PALETTE[1], 0.8)
    for i, (axis, col) in enumerate((("ML", 1), ("AP", 0))):
        d = total[:, col] - total[:, col].mean() if len(total) else total[:, col]
        counts = np.histogram(d, bins=30, range=_range(d, 0))[0] if len(d) else np.zeros(1)
        p = fig.panel(60 + 440 * i, 380, 360, 180, title=f"{axis} displacement histogram",
                      xlabel=f"{axis} displacement (mm)", ylabel="frames",
                      xlim=_range(d, 0), ylim=(0.0, float(max(counts.max(), 1)) * 1.05))
        histogram(p, d, 30, PALETTE[i])
    return fig.to_svg()


def pose_bar_figure(summary_ap: dict, summary_ml: dict, poses, title: str = "") -> str:
    """Grouped bars of per-pose mean SE with between-subject error bars."""
    fig = Figure(620, 340)
    if title:
        fig.extras.append(f'<text x="310" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>')
    tops = [m + e for s in (summary_ap, summary_ml) for m, e in s.values()]
    p = fig.panel(70, 40, 500, 240, title="", xlabel="pose", ylabel="mean SE of total COP (mm)",
                  xlim=(0.0, float(len(poses))), ylim=(0.0, (max(tops) if tops else 1.0) * 1.1))
    for i, pose in enumerate(poses):
        for j, (summary, color) in enumerate(((summary_ap, PALETTE[0]), (summary_ml, PALETTE[1]))):
            if pose not in summary:
                continue
            m, e = summary[pose]
            x0 = i + 0.1 + 0.4 * j
            p.bar(x0, x0 + 0.4, m, color)
            p.error_bar(x0 + 0.2, m - e, m + e)
    fig.set_xticks(p, [i + 0.5 for i in range(len(poses))], [f"T{int(q)}" for q in poses])
    fig.legend(480, 60, [("AP", PALETTE[0]), ("ML", PALETTE[1])])
    return fig.to_svg()
