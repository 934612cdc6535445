"""Schedule files and water-level diagrams."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .model import EpochGrid, Policy

SCHEDULE_COLUMNS = ("epoch", "t_start", "t_end", "length", "p_sc", "p_b", "delta", "water_level")


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def write_schedule(path: str | Path, policy: Policy, grid: EpochGrid) -> None:
    """One row per epoch, 12 significant digits."""
    bounds = grid.boundaries
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCHEDULE_COLUMNS)
        for i in range(policy.n):
            writer.writerow(
                [
                    i + 1,
                    _fmt(bounds[i]),
                    _fmt(bounds[i + 1]),
                    _fmt(grid.lengths[i]),
                    _fmt(policy.p_sc[i]),
                    _fmt(policy.p_b[i]),
                    _fmt(policy.delta[i]),
                    _fmt(policy.water_levels[i]),
                ]
            )


def read_schedule(path: str | Path) -> tuple[Policy, np.ndarray]:
    """Policy and epoch lengths back from a schedule CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SCHEDULE_COLUMNS:
            raise ValueError(f"unexpected schedule columns {reader.fieldnames}")
        rows = list(reader)
    col = lambda name: np.array([float(r[name]) for r in rows])  # noqa: E731
    return Policy(col("p_sc"), col("p_b"), col("delta")), col("length")


def render_svg(policy: Policy, grid: EpochGrid, eta: float, width: int = 640, height: int = 360) -> str:
    """Static water-level diagram.

    Grey blocks are the SC water (bottom 1 up to ``1 + p_sc``), blue blocks the
    battery water on top of it.  The dashed outline shows bottom and water
    level divided by ``eta`` in epochs that draw from the battery, the view in
    which transfer decisions compare levels directly.
    """
    pad = 40
    bounds = np.asarray(grid.boundaries, dtype=float)
    horizon = bounds[-1]
    bottom = 1.0 + policy.p_sc
    level = policy.water_levels
    scaled = (policy.p_b > 0) & (eta > 0)
    t_bottom = np.where(scaled, bottom / eta if eta > 0 else bottom, bottom)
    t_level = np.where(scaled, level / eta if eta > 0 else level, level)
    top = max(float(level.max(initial=1.0)), float(t_level.max(initial=1.0))) * 1.05
    sx = lambda t: pad + (width - 2 * pad) * t / horizon  # noqa: E731
    sy = lambda y: height - pad - (height - 2 * pad) * y / top  # noqa: E731

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for i in range(policy.n):
        x0, x1 = sx(bounds[i]), sx(bounds[i + 1])
        w = x1 - x0
        parts.append(
            f'<rect class="bottom" x="{x0:.2f}" y="{sy(1.0):.2f}" width="{w:.2f}" '
            f'height="{sy(0.0) - sy(1.0):.2f}" fill="#8c6d46"/>'
        )
        parts.append(
            f'<rect class="sc" x="{x0:.2f}" y="{sy(bottom[i]):.2f}" width="{w:.2f}" '
            f'height="{sy(1.0) - sy(bottom[i]):.2f}" fill="#b0b0b0"/>'
        )
        parts.append(
            f'<rect class="battery" x="{x0:.2f}" y="{sy(level[i]):.2f}" width="{w:.2f}" '
            f'height="{sy(bottom[i]) - sy(level[i]):.2f}" fill="#4a90d9"/>'
        )
        parts.append(
            f'<rect class="transformed" x="{x0:.2f}" y="{sy(t_level[i]):.2f}" width="{w:.2f}" '
            f'height="{sy(t_bottom[i]) - sy(t_level[i]):.2f}" fill="none" stroke="black" '
            f'stroke-dasharray="4 3"/>'
        )
        parts.append(
            f'<text x="{(x0 + x1) / 2:.2f}" y="{height - pad / 2:.2f}" font-size="10" '
            f'text-anchor="middle">{i + 1}</text>'
        )
    parts.append(
        f'<line x1="{pad}" y1="{sy(0):.2f}" x2="{width - pad}" y2="{sy(0):.2f}" stroke="black"/>'
    )
    parts.append(
        f'<text x="{pad}" y="{pad / 2:.2f}" font-size="11">water level 1 + p (dashed: divided by eta '
        f"where the battery is drained)</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
