"""Minimal static SVG heatmaps for sweep output. The CSV stays the source of truth."""

from __future__ import annotations

from pathlib import Path

import numpy as np

# viridis anchors
_ANCHORS = np.array([
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
], dtype=float)


def _color(x: float) -> str:
    x = min(max(x, 0.0), 1.0) * (len(_ANCHORS) - 1)
    i = min(int(x), len(_ANCHORS) - 2)
    c = _ANCHORS[i] + (x - i) * (_ANCHORS[i + 1] - _ANCHORS[i])
    return "#%02x%02x%02x" % tuple(int(round(v)) for v in c)


def heatmap_svg(theta_i_deg: np.ndarray, theta_s_deg: np.ndarray, values: np.ndarray, title: str,
                cell: int = 8) -> str:
    """Rows follow theta_i (bottom to top), columns theta_s (left to right)."""
    n_i, n_s = values.shape
    lo, hi = float(np.nanmin(values)), float(np.nanmax(values))
    span = hi - lo if hi > lo else 1.0
    left, top = 60, 30
    w, h = left + n_s * cell + 90, top + n_i * cell + 50
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="18">{title}</text>',
    ]
    for a in range(n_i):
        y = top + (n_i - 1 - a) * cell
        for b in range(n_s):
            x = left + b * cell
            out.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{_color((values[a, b] - lo) / span)}"/>'
            )
    yb = top + n_i * cell
    out.append(f'<text x="{left}" y="{yb + 15}">{theta_s_deg[0]:.0f}</text>')
    out.append(f'<text x="{left + n_s * cell - 15}" y="{yb + 15}">{theta_s_deg[-1]:.0f}</text>')
    out.append(f'<text x="{left + n_s * cell / 2 - 20}" y="{yb + 32}">theta_s (deg)</text>')
    out.append(f'<text x="{left - 25}" y="{yb}">{theta_i_deg[0]:.0f}</text>')
    out.append(f'<text x="{left - 25}" y="{top + 10}">{theta_i_deg[-1]:.0f}</text>')
    out.append(f'<text x="5" y="{top + n_i * cell / 2}">theta_i</text>')
    bar_x = left + n_s * cell + 15
    for s in range(20):
        y = top + (19 - s) * n_i * cell / 20
        out.append(
            f'<rect x="{bar_x}" y="{y:.2f}" width="12" height="{n_i * cell / 20 + 0.5:.2f}" fill="{_color(s / 19)}"/>'
        )
    out.append(f'<text x="{bar_x + 16}" y="{top + 10}">{hi:.4g}</text>')
    out.append(f'<text x="{bar_x + 16}" y="{yb}">{lo:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_heatmap(path, theta_i_deg, theta_s_deg, values, title: str) -> None:
    Path(path).write_text(heatmap_svg(np.asarray(theta_i_deg), np.asarray(theta_s_deg), np.asarray(values), title))
