"""Run-directory reports: accuracy-vs-pruned-FLOPs curves, energy
histograms, and static SVG plots.

All outputs are deterministic: fixed float formatting, no timestamps.
"""

from __future__ import annotations

import os

from .errors import ConfigError

HISTOGRAM_BINS = 20


def read_csv(path):
    with open(path) as f:
        lines = [l.rstrip("\n") for l in f if l.strip() and not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def curve_points(run_dir):
    """(ratio, acc_after_surgery, acc_after_fine_tune) rows, origin included."""
    path = os.path.join(run_dir, "iterations.csv")
    if not os.path.exists(path):
        raise ConfigError(f"missing input: {path}")
    rows = read_csv(path)
    return [
        (
            float(r["achieved_ratio"]),
            float(r["acc_after_surgery"]),
            float(r["acc_after_fine_tune"]),
        )
        for r in rows
    ]


def energy_values(run_dir):
    path = os.path.join(run_dir, "energy.csv")
    if not os.path.exists(path):
        raise ConfigError(f"missing input: {path}")
    return [float(r["energy"]) for r in read_csv(path)]


def histogram(values, bins, lo, hi):
    counts = [0] * bins
    width = (hi - lo) / bins if hi > lo else 1.0
    for v in values:
        idx = min(int((v - lo) / width), bins - 1)
        counts[idx] += 1
    edges = [lo + i * width for i in range(bins + 1)]
    return edges, counts


def write_accuracy_curve_csv(series, path):
    """series: list of (name, [(ratio, acc_surgery, acc_ft), ...])."""
    lines = ["series,pruned_flops_ratio,accuracy_after_surgery,accuracy_after_fine_tune"]
    for name, points in series:
        for ratio, a_s, a_ft in points:
            lines.append(f"{name},{ratio!r},{a_s!r},{a_ft!r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def write_energy_hist_csv(series, path, bins=HISTOGRAM_BINS):
    """series: list of (name, [energy, ...]); shared bin edges across series."""
    hi = max((max(vals) for _, vals in series if vals), default=1.0)
    lines = ["series,bin_lo,bin_hi,count"]
    for name, vals in series:
        edges, counts = histogram(vals, bins, 0.0, hi)
        for i, c in enumerate(counts):
            lines.append(f"{name},{edges[i]!r},{edges[i + 1]!r},{c}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


# ---- static SVG ----------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_W, _H = 640, 420
_ML, _MR, _MT, _MB = 70, 20, 40, 50


def _fmt(v):
    return format(float(v), ".6g")


def _scale(v, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (v - lo) / span * (out_hi - out_lo)


def svg_line_chart(series, title, xlabel, ylabel):
    """series: list of (name, xs, ys). Returns SVG markup as a string."""
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    xlo, xhi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    ylo, yhi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if xlo == xhi:
        xlo, xhi = xlo - 0.5, xhi + 0.5
    if ylo == yhi:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    px = lambda x: _scale(x, xlo, xhi, _ML, _W - _MR)
    py = lambda y: _scale(y, ylo, yhi, _H - _MB, _MT)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{_W // 2}" y="{_H - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="16" y="{_H // 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {_H // 2})">{ylabel}</text>',
    ]
    for i in range(5):
        xv = xlo + (xhi - xlo) * i / 4
        yv = ylo + (yhi - ylo) * i / 4
        parts.append(
            f'<text x="{_fmt(px(xv))}" y="{_H - _MB + 18}" text-anchor="middle" '
            f'font-size="10">{_fmt(xv)}</text>'
        )
        parts.append(
            f'<text x="{_ML - 6}" y="{_fmt(py(yv) + 3)}" text-anchor="end" '
            f'font-size="10">{_fmt(yv)}</text>'
        )
    for k, (name, xs, ys) in enumerate(series):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in zip(xs, ys):
            parts.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" fill="{color}"/>')
        parts.append(
            f'<text x="{_W - _MR - 6}" y="{_MT + 14 + 14 * k}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def svg_histogram(series, title, xlabel, bins=HISTOGRAM_BINS):
    """series: list of (name, values); grouped bars per bin."""
    hi = max((max(vals) for _, vals in series if vals), default=1.0)
    all_counts = []
    for name, vals in series:
        edges, counts = histogram(vals, bins, 0.0, hi)
        all_counts.append((name, edges, counts))
    cmax = max((max(c) for _, _, c in all_counts), default=1) or 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" stroke="black"/>',
        f'<text x="{_W // 2}" y="{_H - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
    ]
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    nser = len(all_counts)
    bin_w = plot_w / bins
    bar_w = bin_w / max(nser, 1)
    for k, (name, edges, counts) in enumerate(all_counts):
        color = _COLORS[k % len(_COLORS)]
        for i, c in enumerate(counts):
            h = plot_h * c / cmax
            x = _ML + i * bin_w + k * bar_w
            y = _H - _MB - h
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w)}" '
                f'height="{_fmt(h)}" fill="{color}" fill-opacity="0.7"/>'
            )
        parts.append(
            f'<text x="{_W - _MR - 6}" y="{_MT + 14 + 14 * k}" text-anchor="end" '
            f'font-size="11" fill="{color}">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
