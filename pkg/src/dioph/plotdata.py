"""Two-column plot data with an optional standalone SVG line plot."""

from __future__ import annotations

import math
import os
import tempfile
from pathlib import Path

_W, _H, _PAD = 480, 320, 48


def atomic_write(path, data: bytes) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _num(v: float) -> str:
    return repr(float(v))


def plot_text(series, x_label: str = "x", y_label: str = "y") -> bytes:
    lines = [f"# {x_label} {y_label}"]
    lines += [f"{_num(x)} {_num(y)}" for x, y in series]
    return ("\n".join(lines) + "\n").encode()


def plot_svg(series, log2_y: bool = False, title: str = "") -> bytes:
    pts = [(float(x), float(y)) for x, y in series]
    if log2_y:
        pts = [(x, math.log2(y)) for x, y in pts if y > 0]
    if not pts:
        raise ValueError("nothing to plot")
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def sx(x):
        return _PAD + (x - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def sy(y):
        return _H - _PAD - (y - y0) / (y1 - y0) * (_H - 2 * _PAD)

    poly = " ".join(f"{sx(x):.3f},{sy(y):.3f}" for x, y in pts)
    y_name = "log2 y" if log2_y else "y"
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<polyline points="{poly}" fill="none" stroke="steelblue" stroke-width="2"/>',
        f'<text x="{_PAD}" y="{_H - 12}" font-size="11">x: {x0:.6g} .. {x1:.6g}</text>',
        f'<text x="{_PAD}" y="{_PAD - 10}" font-size="11">{y_name}: {y0:.6g} .. {y1:.6g}</text>',
    ]
    if title:
        parts.append(f'<text x="{_W // 2}" y="20" font-size="13" text-anchor="middle">{title}</text>')
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode()


def emit_plotdata(series, path, *, svg: bool = True, log2_y: bool = False, x_label="x", y_label="y",
                  title: str = "") -> list[Path]:
    """Write ``path`` (text columns) and, for a nonempty series, ``path`` with suffix ``.svg``.

    Returns the written paths. Output is a pure function of the input.
    """
    series = [(float(x), float(y)) for x, y in series]
    for x, y in series:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("plot series must be finite")
    path = Path(path)
    written = [atomic_write(path, plot_text(series, x_label, y_label))]
    plottable = [p for p in series if p[1] > 0] if log2_y else series
    if svg and plottable:
        written.append(atomic_write(path.with_suffix(".svg"), plot_svg(series, log2_y, title)))
    return written
