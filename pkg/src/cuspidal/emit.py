"""Plain-text emitters: handwritten SVG plots, CSV tables and OBJ meshes.

Number formatting is fixed so repeated runs produce identical bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def fmt(v: float) -> str:
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


@dataclass
class Plot:
    """A 2D plot with a data-to-pixel transform and an append-only body."""
    xlim: tuple[float, float]
    ylim: tuple[float, float]
    width: int = 640
    height: int = 480
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    margin: int = 50
    body: list[str] = field(default_factory=list)

    def px(self, x, y):
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        w = self.width - 2 * self.margin
        h = self.height - 2 * self.margin
        X = self.margin + (np.asarray(x, float) - x0) / (x1 - x0) * w
        Y = self.height - self.margin - (np.asarray(y, float) - y0) / (y1 - y0) * h
        return X, Y

    def polyline(self, x, y, color="#000", width=1.0, closed=False, dash: str = ""):
        X, Y = self.px(x, y)
        if len(X) == 0:
            return
        pts = " ".join(f"{fmt(a)},{fmt(b)}" for a, b in zip(X, Y))
        tag = "polygon" if closed else "polyline"
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.body.append(f'<{tag} points="{pts}" fill="none" stroke="{color}" '
                         f'stroke-width="{width}"{extra}/>')

    def polyline_torus(self, x, y, color="#000", width=1.0, closed=True):
        """Polyline on a periodic square; breaks where the curve wraps."""
        x = (np.asarray(x, float) + math.pi) % (2 * math.pi) - math.pi
        y = (np.asarray(y, float) + math.pi) % (2 * math.pi) - math.pi
        if closed:
            x = np.append(x, x[:1])
            y = np.append(y, y[:1])
        jump = (np.abs(np.diff(x)) > math.pi) | (np.abs(np.diff(y)) > math.pi)
        start = 0
        for k in np.flatnonzero(jump).tolist() + [len(x) - 1]:
            if k + 1 - start >= 2:
                self.polyline(x[start:k + 1], y[start:k + 1], color, width)
            start = k + 1

    def circle(self, x, y, r=4.0, color="#d62728", fill="none"):
        X, Y = self.px(x, y)
        self.body.append(f'<circle cx="{fmt(float(X))}" cy="{fmt(float(Y))}" r="{r}" '
                         f'fill="{fill}" stroke="{color}" stroke-width="1.5"/>')

    def cross(self, x, y, r=4.0, color="#000"):
        X, Y = self.px(x, y)
        X, Y = float(X), float(Y)
        self.body.append(f'<path d="M{fmt(X - r)},{fmt(Y - r)}L{fmt(X + r)},{fmt(Y + r)}'
                         f'M{fmt(X - r)},{fmt(Y + r)}L{fmt(X + r)},{fmt(Y - r)}" '
                         f'stroke="{color}" stroke-width="1.5"/>')

    def text(self, x, y, s, size=12, color="#000"):
        X, Y = self.px(x, y)
        self.body.append(f'<text x="{fmt(float(X))}" y="{fmt(float(Y))}" font-size="{size}" '
                         f'fill="{color}">{_esc(s)}</text>')

    def raster(self, labels: np.ndarray, colors: dict[int, str], extent, max_cells: int = 160):
        """Label image as run-length rectangles; rows are y, columns are x."""
        ny, nx = labels.shape
        sy = max(1, ny // max_cells)
        sx = max(1, nx // max_cells)
        lab = labels[::sy, ::sx]
        (x0, x1), (y0, y1) = extent
        dx = (x1 - x0) / lab.shape[1]
        dy = (y1 - y0) / lab.shape[0]
        for i in range(lab.shape[0]):
            row = lab[i]
            j = 0
            while j < len(row):
                k = j
                while k + 1 < len(row) and row[k + 1] == row[j]:
                    k += 1
                c = colors.get(int(row[j]))
                if c:
                    X0, Y0 = self.px(x0 + j * dx, y0 + (i + 1) * dy)
                    X1, Y1 = self.px(x0 + (k + 1) * dx, y0 + i * dy)
                    self.body.append(
                        f'<rect x="{fmt(float(X0))}" y="{fmt(float(Y0))}" '
                        f'width="{fmt(float(X1 - X0))}" height="{fmt(float(Y1 - Y0))}" '
                        f'fill="{c}" stroke="none"/>')
                j = k + 1

    def render(self) -> str:
        x0, x1 = self.xlim
        y0, y1 = self.ylim
        X0, Y0 = self.px(x0, y0)
        X1, Y1 = self.px(x1, y1)
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
               f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
               '<rect width="100%" height="100%" fill="#fff"/>']
        out += self.body
        out.append(f'<rect x="{fmt(float(X0))}" y="{fmt(float(Y1))}" '
                   f'width="{fmt(float(X1 - X0))}" height="{fmt(float(Y0 - Y1))}" '
                   f'fill="none" stroke="#000"/>')
        for v in np.linspace(x0, x1, 5):
            X, _ = self.px(v, y0)
            out.append(f'<text x="{fmt(float(X))}" y="{fmt(float(Y0) + 16)}" font-size="11" '
                       f'text-anchor="middle">{fmt(v)}</text>')
        for v in np.linspace(y0, y1, 5):
            _, Y = self.px(x0, v)
            out.append(f'<text x="{fmt(float(X0) - 4)}" y="{fmt(float(Y) + 4)}" font-size="11" '
                       f'text-anchor="end">{fmt(v)}</text>')
        if self.title:
            out.append(f'<text x="{self.width / 2}" y="20" font-size="14" '
                       f'text-anchor="middle">{_esc(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{self.width / 2}" y="{self.height - 8}" font-size="12" '
                       f'text-anchor="middle">{_esc(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{self.height / 2}" font-size="12" '
                       f'transform="rotate(-90 14 {self.height / 2})" '
                       f'text-anchor="middle">{_esc(self.ylabel)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def to_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return round(v, 12)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def to_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.10g}" if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()
