"""Tabular output with a provenance footer, and a small deterministic SVG
line-plot writer."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

__all__ = ["OutputTable", "config_hash", "emit_svg", "format_value", "rows_to_series"]

VERSION = "0.1.0"


def config_hash(config: dict) -> str:
    """Short stable hash of a JSON-serializable configuration."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.6e}" if v != 0 and (abs(v) < 1e-3 or abs(v) >= 1e4) else f"{v:.6g}"
    return str(v)


@dataclass
class OutputTable:
    name: str
    headers: list[str]
    rows: list[list] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int = 0

    def add(self, *values) -> None:
        if len(values) != len(self.headers):
            raise ValueError(f"row has {len(values)} values, table has {len(self.headers)} columns")
        self.rows.append(list(values))

    def column(self, name: str) -> list:
        i = self.headers.index(name)
        return [r[i] for r in self.rows]

    def footer(self) -> list[str]:
        return [
            f"# table: {self.name}",
            f"# config-hash: {config_hash(self.config)}",
            f"# seed: {self.seed}",
            f"# version: fsbp {VERSION}",
        ]

    def to_text(self, fmt: str = "csv") -> str:
        if fmt not in ("csv", "tsv"):
            raise ValueError(f"unknown format {fmt!r}")
        buf = io.StringIO()
        writer = csv.writer(buf, delimiter="," if fmt == "csv" else "\t", lineterminator="\n")
        writer.writerow(self.headers)
        for row in self.rows:
            writer.writerow([format_value(v) for v in row])
        return buf.getvalue() + "\n".join(self.footer()) + "\n"

    def pretty(self) -> str:
        cells = [self.headers] + [[format_value(v) for v in r] for r in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.headers))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


# {{{ svg

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")
_DASHES = ("", "6,3", "2,2", "8,3,2,3")


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        step = max(1, (b - a) // 8 + 1)
        return [10.0**e for e in range(a, b + 1, step)]
    if hi == lo:
        return [lo]
    raw = (hi - lo) / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    out = []
    v = start
    while v <= hi + 1e-9 * step:
        out.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return out


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(math.log10(v)))}"
    return f"{v:g}"


def emit_svg(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
    xlog: bool = False,
    ylog: bool = False,
    width: int = 640,
    height: int = 420,
) -> str:
    """Standalone SVG line plot of named ``(label, xs, ys)`` series.

    Output depends only on the input, byte for byte. Raises
    :class:`ValueError` for empty input or non-positive values on a
    logarithmic axis; non-finite points are skipped.
    """
    series = [(str(name), list(map(float, xs)), list(map(float, ys))) for name, xs, ys in series]
    if not series or all(len(xs) == 0 for _, xs, _ in series):
        raise ValueError("nothing to plot: no series or all series empty")
    for name, xs, ys in series:
        if len(xs) != len(ys):
            raise ValueError(f"series {name!r}: {len(xs)} x values but {len(ys)} y values")
        for axis, vals, log in (("x", xs, xlog), ("y", ys, ylog)):
            if log and any(v <= 0 for v in vals if math.isfinite(v)):
                raise ValueError(f"series {name!r} has non-positive {axis} values on a log axis")

    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    if not pts:
        raise ValueError("nothing to plot: no finite points")
    xmin, xmax = min(p[0] for p in pts), max(p[0] for p in pts)
    ymin, ymax = min(p[1] for p in pts), max(p[1] for p in pts)

    def span(lo, hi, log):
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        return lo, hi

    fx = (lambda v: math.log10(v)) if xlog else (lambda v: v)
    fy = (lambda v: math.log10(v)) if ylog else (lambda v: v)
    x0, x1 = span(xmin, xmax, xlog)
    y0, y1 = span(ymin, ymax, ylog)

    left, right, top, bottom = 70, 170, 30 if title else 15, 50
    pw, ph = width - left - right, height - top - bottom

    def px(v):
        return left + (fx(v) - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (fy(v) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{left + pw / 2:.2f}" y="18" text-anchor="middle">{_esc(title)}</text>')
    out.append(
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>'
    )

    def in_range(v, lo, hi, f):
        return lo - 1e-9 <= f(v) <= hi + 1e-9

    for v in _ticks(*(10**x0, 10**x1) if xlog else (x0, x1), xlog):
        if not in_range(v, x0, x1, fx):
            continue
        X = px(v)
        out.append(f'<line x1="{X:.2f}" y1="{top + ph}" x2="{X:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 18}" text-anchor="middle">{_tick_label(v, xlog)}</text>')
    for v in _ticks(*(10**y0, 10**y1) if ylog else (y0, y1), ylog):
        if not in_range(v, y0, y1, fy):
            continue
        Y = py(v)
        out.append(f'<line x1="{left - 5}" y1="{Y:.2f}" x2="{left}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{Y + 4:.2f}" text-anchor="end">{_tick_label(v, ylog)}</text>')

    if xlabel:
        out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="15" y="{top + ph / 2:.2f}" text-anchor="middle" '
            f'transform="rotate(-90 15 {top + ph / 2:.2f})">{_esc(ylabel)}</text>'
        )

    for k, (name, xs, ys) in enumerate(series):
        color = _PALETTE[k % len(_PALETTE)]
        dash = _DASHES[(k // len(_PALETTE)) % len(_DASHES)]
        coords = " ".join(
            f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)
        )
        style = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{style} points="{coords}"/>')
        ly = top + 15 + 18 * k
        lx = left + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{color}" stroke-width="1.5"{style}/>')
        out.append(f'<text class="legend" x="{lx + 30}" y="{ly + 4}">{_esc(name)}</text>')

    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def rows_to_series(times: Iterable[float], columns: dict[str, Sequence[float]]):
    times = list(times)
    return [(name, times[: len(v)], list(v)) for name, v in columns.items()]
