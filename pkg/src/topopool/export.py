"""Text exports: Graphviz DOT for coarsened graphs and an SVG scatter of persistence diagrams."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ParameterError
from .graph import Graph
from .persistence import PersistenceDiagram

__all__ = ["to_dot", "write_dot", "diagram_svg", "write_svg"]

DEFAULT_CUT = 0.05


def to_dot(g: Graph, cut: float = DEFAULT_CUT, name: str = "G") -> str:
    """Undirected DOT text; edges with weight below ``cut`` and self-loops are dropped,
    nodes left without any edge are omitted."""
    if cut < 0:
        raise ParameterError("cut must be non-negative")
    keep = (~g.loop_mask) & (g.weight >= cut)
    src, dst, w = g.src[keep], g.dst[keep], g.weight[keep]
    nodes = np.unique(np.concatenate([src, dst]))
    lines = [f"graph {name} {{", "  node [shape=circle];"]
    lines += [f"  {int(i)};" for i in nodes]
    lines += [f'  {int(a)} -- {int(b)} [weight={x:.6g}, penwidth={0.5 + 2.5 * min(x, 1.0):.3f}];'
              for a, b, x in zip(src, dst, w)]
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_dot(path, g: Graph, cut: float = DEFAULT_CUT) -> None:
    Path(path).write_text(to_dot(g, cut))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def diagram_svg(diagrams: list[PersistenceDiagram], size: int = 320, margin: int = 30) -> str:
    """Birth/death scatter with the diagonal drawn; one colour per homology dimension."""
    pts = [d.points for d in diagrams if len(d)]
    allp = np.concatenate(pts) if pts else np.zeros((0, 2))
    lo = float(allp.min()) if len(allp) else 0.0
    hi = float(allp.max()) if len(allp) else 1.0
    if hi <= lo:
        hi = lo + 1.0
    span = size - 2 * margin

    def sx(v):
        return margin + (v - lo) / (hi - lo) * span

    def sy(v):
        return size - margin - (v - lo) / (hi - lo) * span

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
        f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" stroke="#888" stroke-dasharray="4 3"/>',
        f'<text x="{size / 2:.0f}" y="{size - 6}" font-size="11" text-anchor="middle">birth</text>',
        f'<text x="10" y="{size / 2:.0f}" font-size="11" transform="rotate(-90 10 {size / 2:.0f})" text-anchor="middle">death</text>',
    ]
    for d in diagrams:
        color = _COLORS[d.dim % len(_COLORS)]
        for b, dt in d.points:
            out.append(f'<circle cx="{sx(b):.2f}" cy="{sy(dt):.2f}" r="3" fill="{color}" fill-opacity="0.7"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, diagrams: list[PersistenceDiagram]) -> None:
    Path(path).write_text(diagram_svg(diagrams))
