"""Accuracy metrics and filter bank plots."""

from __future__ import annotations

import enum
import math
from xml.sax.saxutils import escape

import numpy as np

from .errors import InvalidArgument
from .melbank import FilterBank, filterbank_to_csv

__all__ = [
    "accuracy",
    "format_percent",
    "confusion_matrix",
    "ExportFormat",
    "export_filters",
    "filters_svg",
    "grid_for",
]


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape or p.ndim != 1:
        raise InvalidArgument(f"predictions {p.shape} and labels {y.shape} must be equal-length vectors")
    if p.size == 0:
        raise InvalidArgument("cannot score an empty prediction list")
    return float(np.mean(p == y))


def format_percent(acc: float) -> str:
    """Accuracy as a two-decimal percentage, ``0.7163 -> '71.63'``."""
    return f"{100.0 * acc:.2f}"


def confusion_matrix(predictions, labels, n_classes: int) -> np.ndarray:
    """Counts with true class on rows and predicted class on columns."""
    p = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape != y.shape:
        raise InvalidArgument("predictions and labels differ in length")
    for name, arr in (("prediction", p), ("label", y)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise InvalidArgument(f"{name} outside 0..{n_classes - 1}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y, p), 1)
    return cm


class ExportFormat(str, enum.Enum):
    CSV = "csv"
    SVG = "svg"


def grid_for(n: int) -> tuple[int, int]:
    """A near-square ``(rows, cols)`` grid holding ``n`` panels."""
    cols = max(1, math.ceil(math.sqrt(n)))
    return math.ceil(n / cols), cols


_PANEL_W, _PANEL_H = 160, 100
_PAD_L, _PAD_R, _PAD_T, _PAD_B = 8, 8, 16, 22
_COLORS = ("#1f77b4", "#d62728")


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def filters_svg(fb: FilterBank, layout=None, overlay: FilterBank | None = None,
                title: str | None = None) -> str:
    """Small-multiples SVG, one line plot per filter.

    Panels run left to right, top to bottom in order of increasing peak
    frequency.  With ``overlay`` each panel also draws the matching row of a
    second bank (e.g. raw vs. smoothed).  Output depends only on the inputs.
    """
    rows, cols = layout or grid_for(fb.n_filt)
    if rows * cols < fb.n_filt:
        raise InvalidArgument(f"layout {rows}x{cols} holds {rows * cols} panels, need {fb.n_filt}")
    if overlay is not None and overlay.weights.shape != fb.weights.shape:
        raise InvalidArgument("overlay bank must have the same shape")

    banks = [fb.weights] + ([overlay.weights] if overlay is not None else [])
    order = np.argsort(fb.peak_bins(), kind="stable")
    khz = fb.bin_frequencies() / 1000.0
    x_max = khz[-1] if khz[-1] > 0 else 1.0
    plot_w = _PANEL_W - _PAD_L - _PAD_R
    plot_h = _PANEL_H - _PAD_T - _PAD_B
    top = 24 if title else 0
    width, height = cols * _PANEL_W, rows * _PANEL_H + top

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="9">',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="12">{escape(title)}</text>')
    for slot, i in enumerate(order):
        r, c = divmod(slot, cols)
        x0 = c * _PANEL_W + _PAD_L
        y0 = top + r * _PANEL_H + _PAD_T
        rows_here = [b[i] for b in banks]
        lo = min(0.0, min(float(v.min()) for v in rows_here))
        hi = max(float(v.max()) for v in rows_here)
        span = hi - lo if hi > lo else 1.0
        peak_khz = khz[int(np.argmax(fb.weights[i]))]
        out.append(f'<g class="panel" id="filter-{int(i)}">')
        out.append(
            f'<rect x="{x0}" y="{y0}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#999"/>'
        )
        out.append(f'<text x="{x0}" y="{y0 - 4}">filter {int(i)} (peak {peak_khz:.2f} kHz)</text>')
        out.append(f'<text x="{x0}" y="{y0 + plot_h + 10}">0</text>')
        out.append(
            f'<text x="{x0 + plot_w}" y="{y0 + plot_h + 10}" text-anchor="end">{x_max:.2f}</text>'
        )
        out.append(
            f'<text x="{x0 + plot_w / 2:.1f}" y="{y0 + plot_h + 19}" text-anchor="middle">kHz</text>'
        )
        for k, w in enumerate(rows_here):
            xs = x0 + khz / x_max * plot_w
            ys = y0 + plot_h - (w - lo) / span * plot_h
            pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(xs, ys))
            out.append(
                f'<polyline fill="none" stroke="{_COLORS[k]}" stroke-width="1" points="{pts}"/>'
            )
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def export_filters(fb: FilterBank, fmt=ExportFormat.SVG, layout=None,
                   overlay: FilterBank | None = None) -> bytes:
    fmt = ExportFormat(fmt)
    if fmt is ExportFormat.CSV:
        return filterbank_to_csv(fb).encode("utf-8")
    return filters_svg(fb, layout=layout, overlay=overlay).encode("utf-8")
