"""Deterministic CSV, JSON and SVG emission."""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence

import numpy as np

__all__ = ["fmt", "csv_text", "json_text", "svg_heatmap", "svg_polyline", "to_jsonable"]


def fmt(x) -> str:
    """Numbers with 17 significant digits; other values as text."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(c) for c in row))
    return "\n".join(lines) + "\n"


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def json_text(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _color(t: float) -> str:
    t = min(1.0, max(0.0, t))
    r = int(round(255 * t))
    b = int(round(255 * (1 - t)))
    return f"#{r:02x}40{b:02x}"


def svg_heatmap(values: np.ndarray, title: str = "", cell: int = 8, log: bool = True) -> str:
    """2-D array as a grid of colored rectangles (log scale by default)."""
    vals = np.asarray(values, dtype=float)
    if log:
        vals = np.log10(np.maximum(vals, 1e-300))
    finite = vals[np.isfinite(vals)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    ni, nj = vals.shape
    width, height = nj * cell, ni * cell + 20
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="2" y="14" font-size="12">{title}</text>',
    ]
    for i in range(ni):
        for j in range(nj):
            t = (vals[i, j] - lo) / span if np.isfinite(vals[i, j]) else 0.0
            y = 20 + (ni - 1 - i) * cell
            out.append(f'<rect x="{j * cell}" y="{y}" width="{cell}" height="{cell}" fill="{_color(t)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def svg_polyline(xs: Sequence[float], ys: Sequence[float], title: str = "", width: int = 480, height: int = 240) -> str:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    sx = (width - 20) / (x1 - x0 if x1 > x0 else 1.0)
    sy = (height - 40) / (y1 - y0 if y1 > y0 else 1.0)
    pts = " ".join(
        f"{10 + (x - x0) * sx:.3f},{height - 10 - (y - y0) * sy:.3f}" for x, y in zip(xs, ys)
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<text x="2" y="14" font-size="12">{title}</text>\n'
        f'<polyline fill="none" stroke="#204080" stroke-width="1" points="{pts}"/>\n'
        "</svg>\n"
    )
