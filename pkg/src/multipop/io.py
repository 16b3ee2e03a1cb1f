"""Report files: CSV tables, static SVG line plots and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import math
import platform
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = ["fmt", "sha256_file", "write_manifest", "write_svg_plot", "write_table"]


def fmt(v) -> str:
    """Numbers with 17 significant digits, everything else via ``str``."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_table(path, columns: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(
    path,
    config_text: str,
    config_hash: str,
    constants: Mapping | None,
    summary: Mapping,
    files: Sequence[Path],
) -> Path:
    path = Path(path)
    lines = ["[run]", f"config_sha256 = {config_hash}", f"python = {platform.python_version()}",
             f"numpy = {np.__version__}", "", "[config]"]
    lines += config_text.rstrip("\n").splitlines()
    lines += ["", "[constants]"]
    for k, v in (constants or {}).items():
        lines.append(f"{k} = {fmt(v)}")
    lines += ["", "[summary]"]
    for k, v in summary.items():
        lines.append(f"{k} = {fmt(v)}")
    lines += ["", "[files]"]
    for f in files:
        lines.append(f"{Path(f).name} = sha256:{sha256_file(f)}")
    path.write_text("\n".join(lines) + "\n")
    return path


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def write_svg_plot(
    path,
    series: Mapping[str, tuple],
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
    logx: bool = False,
    logy: bool = False,
    width: int = 640,
    height: int = 420,
) -> Path:
    """Polyline plot of ``{name: (xs, ys)}``; non-finite and (on log axes) non-positive points are dropped."""
    path = Path(path)
    tx = (lambda v: np.log10(v)) if logx else (lambda v: v)
    ty = (lambda v: np.log10(v)) if logy else (lambda v: v)
    clean = {}
    for name, (xs, ys) in series.items():
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            keep &= xs > 0
        if logy:
            keep &= ys > 0
        if keep.any():
            clean[name] = (tx(xs[keep]), ty(ys[keep]))
    ml, mr, mt, mb = 70, 150, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    if clean:
        allx = np.concatenate([c[0] for c in clean.values()])
        ally = np.concatenate([c[1] for c in clean.values()])
        x0, x1, y0, y1 = allx.min(), allx.max(), ally.min(), ally.max()
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    sx = lambda v: ml + (v - x0) / (x1 - x0) * pw  # noqa: E731
    sy = lambda v: mt + ph - (v - y0) / (y1 - y0) * ph  # noqa: E731
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2:.1f}" y="20" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        X = sx(v)
        lab = f"{10 ** v:.3g}" if logx else f"{v:.3g}"
        out.append(f'<line x1="{X:.1f}" y1="{mt + ph}" x2="{X:.1f}" y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{X:.1f}" y="{mt + ph + 16}" text-anchor="middle">{lab}</text>')
    for v in _ticks(y0, y1):
        Y = sy(v)
        lab = f"{10 ** v:.3g}" if logy else f"{v:.3g}"
        out.append(f'<line x1="{ml - 4}" y1="{Y:.1f}" x2="{ml}" y2="{Y:.1f}" stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{Y + 4:.1f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>'
    )
    for i, (name, (xs, ys)) in enumerate(clean.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in zip(xs, ys):
            out.append(f'<circle cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="2" fill="{color}"/>')
        ly = mt + 14 * i + 8
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 34}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
