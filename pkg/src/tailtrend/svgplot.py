"""Self-contained SVG quick-look plots for experiment reports."""

from __future__ import annotations

import math
from fractions import Fraction
from html import escape
from typing import Sequence

import numpy as np

WIDTH, HEIGHT = 420, 300
MARGIN = 48
DASHES = ("", "6,4", "2,3", "8,3,2,3")
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class _Panel:
    def __init__(self, x0, y0, xlim, ylim, title=""):
        self.x0, self.y0 = x0, y0
        self.xlim, self.ylim = xlim, ylim
        self.parts = [f'<g transform="translate({x0},{y0})">',
                      f'<rect x="{MARGIN}" y="{MARGIN / 2}" width="{WIDTH - 1.5 * MARGIN}" '
                      f'height="{HEIGHT - 1.5 * MARGIN}" fill="none" stroke="#444"/>']
        if title:
            self.parts.append(f'<text x="{WIDTH / 2}" y="{MARGIN / 2 - 6}" font-size="11" '
                              f'text-anchor="middle">{escape(title)}</text>')
        self._ticks()

    def px(self, x):
        lo, hi = self.xlim
        return MARGIN + (x - lo) / (hi - lo or 1) * (WIDTH - 1.5 * MARGIN)

    def py(self, y):
        lo, hi = self.ylim
        return HEIGHT - MARGIN + (lo - y) / (hi - lo or 1) * (HEIGHT - 1.5 * MARGIN)

    def _ticks(self):
        for i in range(5):
            x = self.xlim[0] + i * (self.xlim[1] - self.xlim[0]) / 4
            y = self.ylim[0] + i * (self.ylim[1] - self.ylim[0]) / 4
            self.parts.append(f'<text x="{self.px(x):.1f}" y="{HEIGHT - MARGIN + 14}" font-size="9" '
                              f'text-anchor="middle">{x:.3g}</text>')
            self.parts.append(f'<text x="{MARGIN - 4}" y="{self.py(y) + 3:.1f}" font-size="9" '
                              f'text-anchor="end">{y:.3g}</text>')

    def line(self, xs, ys, color="#000", dash="", width=1.5):
        pts = " ".join(f"{self.px(x):.1f},{self.py(y):.1f}" for x, y in zip(xs, ys) if np.isfinite(y))
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"'
                          + (f' stroke-dasharray="{dash}"' if dash else "") + "/>")

    def band(self, xs, lo, hi, color="#1f77b4"):
        pts = [f"{self.px(x):.1f},{self.py(y):.1f}" for x, y in zip(xs, lo)]
        pts += [f"{self.px(x):.1f},{self.py(y):.1f}" for x, y in zip(xs[::-1], hi[::-1])]
        self.parts.append(f'<polygon points="{" ".join(pts)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')

    def bars(self, edges, heights, color="#999"):
        for a, b, hgt in zip(edges[:-1], edges[1:], heights):
            y = self.py(hgt)
            self.parts.append(f'<rect x="{self.px(a):.1f}" y="{y:.1f}" width="{self.px(b) - self.px(a):.1f}" '
                              f'height="{self.py(0) - y:.1f}" fill="{color}" stroke="#fff" stroke-width="0.5"/>')

    def legend(self, labels, dashes, colors):
        for i, (lab, dash, col) in enumerate(zip(labels, dashes, colors)):
            y = MARGIN / 2 + 12 + 12 * i
            x = WIDTH - 1.5 * MARGIN - 30
            self.parts.append(f'<line x1="{x}" y1="{y}" x2="{x + 18}" y2="{y}" stroke="{col}"'
                              + (f' stroke-dasharray="{dash}"' if dash else "") + "/>")
            self.parts.append(f'<text x="{x + 22}" y="{y + 3}" font-size="9">{escape(lab)}</text>')

    def svg(self):
        return "\n".join(self.parts + ["</g>"])


def _document(panels: Sequence[_Panel], cols: int) -> str:
    rows = math.ceil(len(panels) / cols)
    body = "\n".join(p.svg() for p in panels)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{cols * WIDTH}" height="{rows * HEIGHT}" '
            f'font-family="sans-serif">\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')


def _grid_origin(i, cols):
    return (i % cols) * WIDTH, (i // cols) * HEIGHT


def histogram_panels(records) -> str:
    panels = []
    xs = np.linspace(-4, 4, 161)
    dens = np.exp(-xs**2 / 2) / math.sqrt(2 * math.pi)
    for i, rec in enumerate(records):
        z = np.asarray(rec["normalized"])
        edges = np.linspace(-4, 4, 25)
        counts, _ = np.histogram(np.clip(z, -4, 4), bins=edges, density=True)
        p = _Panel(*_grid_origin(i, 2), (-4, 4), (0, max(0.5, counts.max(initial=0) * 1.1)),
                   f"lambda = {rec['lambda']:.3g}")
        p.bars(edges, counts)
        p.line(xs, dens)
        panels.append(p)
    return _document(panels, 2)


def band_panels(records) -> str:
    panels = []
    top = max(max(r["upper"]) for r in records) * 1.05
    for i, rec in enumerate(records):
        s = np.asarray(rec["s"])
        p = _Panel(*_grid_origin(i, 3), (0, 1), (0, top), rec["scedasis"])
        p.band(s, np.asarray(rec["lower"]), np.asarray(rec["upper"]))
        p.line(s, rec["mean"], COLORS[0])
        p.line(s, rec["truth"], "#000", DASHES[1])
        panels.append(p)
    return _document(panels, 3)


def _group_order(group_key):
    # bandwidths descend (1/10 solid, 1/15 dashed, 1/20 dotted); other groups sort as text
    if group_key == "h":
        return lambda kv: -float(Fraction(kv[0]))
    return lambda kv: str(kv[0])


def rate_panels(records, x_key: str, group_key: str, panel_keys: Sequence[str], stats: Sequence[str], alpha: float) -> str:
    """One panel per (panel_keys, stat); one line per ``group_key`` value."""
    panels = []
    keyed: dict = {}
    for rec in records:
        for stat in stats:
            key = tuple(rec[k] for k in panel_keys) + (stat,)
            keyed.setdefault(key, {}).setdefault(rec[group_key], []).append((rec[x_key], rec[stat]["rate"]))
    for i, (key, groups) in enumerate(sorted(keyed.items(), key=lambda kv: str(kv[0]))):
        xs_all = [x for g in groups.values() for x, _ in g]
        p = _Panel(*_grid_origin(i, 2), (min(xs_all), max(xs_all) if max(xs_all) > min(xs_all) else min(xs_all) + 1),
                   (0, 1), ", ".join(f"{k}={v}" for k, v in zip(panel_keys + ("test",), key)))
        p.line([min(xs_all), max(xs_all)], [alpha, alpha], "#888", DASHES[2], 1)
        labels = []
        for j, (g, pts) in enumerate(sorted(groups.items(), key=_group_order(group_key))):
            pts.sort()
            p.line([x for x, _ in pts], [y for _, y in pts], COLORS[0], DASHES[j % len(DASHES)])
            labels.append(f"{group_key}={g}")
        p.legend(labels, [DASHES[j % len(DASHES)] for j in range(len(labels))], [COLORS[0]] * len(labels))
        panels.append(p)
    return _document(panels, 2)


def report_svg(report) -> str:
    if report.kind == "endpoint-normality":
        return histogram_panels(report.records)
    if report.kind == "curve-band":
        return band_panels(report.records)
    alpha = report.config.get("alpha", 0.05)
    if report.kind == "size":
        return rate_panels(report.records, "k", "h", ("theta", "scedasis"), ("cvm", "sup"), alpha)
    return rate_panels(report.records, "lambda", "scedasis", ("k", "h"), ("sup", "cvm"), alpha)

