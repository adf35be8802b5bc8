"""Filtration constructors: learnable MLP vertex filtration and Forman curvature on edges."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Var, as_var
from .errors import ParameterError
from .graph import Graph
from .wl import wl_theorem_filtration

__all__ = [
    "MlpFiltration",
    "init_mlp_filtration",
    "mlp_filtration",
    "forman_curvature",
    "wl_theorem_filtration",
    "write_vertex_values_csv",
    "write_edge_values_csv",
]


@dataclass
class MlpFiltration:
    """Layers ``[(W, b), ...]`` of a scalar-output MLP; softplus between layers, sigmoid at the end.

    Weights may be plain arrays or tape variables.
    """

    layers: list

    @property
    def in_features(self) -> int:
        return int(np.shape(_val(self.layers[0][0]))[0])

    @classmethod
    def from_params(cls, params: dict, prefix: str = "phi"):
        layers, i = [], 0
        while f"{prefix}.{i}.W" in params:
            layers.append((params[f"{prefix}.{i}.W"], params[f"{prefix}.{i}.b"]))
            i += 1
        if not layers:
            raise ParameterError(f"no '{prefix}.*' parameters")
        return cls(layers)

    def to_params(self, prefix: str = "phi") -> dict:
        out = {}
        for i, (W, b) in enumerate(self.layers):
            out[f"{prefix}.{i}.W"] = W
            out[f"{prefix}.{i}.b"] = b
        return out


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def init_mlp_filtration(d: int, rng, hidden: int = 16) -> MlpFiltration:
    lim1 = np.sqrt(6.0 / (d + hidden))
    lim2 = np.sqrt(6.0 / (hidden + 1))
    return MlpFiltration([
        (rng.uniform(-lim1, lim1, (d, hidden)), np.zeros(hidden)),
        (rng.uniform(-lim2, lim2, (hidden, 1)), np.zeros(1)),
    ])


def mlp_filtration(X, phi: MlpFiltration) -> Var:
    """``sigmoid(phi(X))``: one value in (0, 1) per row of ``X``."""
    h = as_var(X)
    if h.ndim != 2 or h.shape[1] != phi.in_features:
        raise ParameterError(f"features of shape {h.shape} do not fit filtration input width {phi.in_features}")
    last = len(phi.layers) - 1
    for i, (W, b) in enumerate(phi.layers):
        h = h @ as_var(W) + as_var(b)
        if i < last:
            h = h.softplus()
    return h.reshape(-1).sigmoid()


def forman_curvature(g: Graph) -> np.ndarray:
    """Forman curvature per edge with unit node weights.

    ``F(e) = w_e * (2 / w_e - sum_{e' ~ u} 1/sqrt(w_e w_e') - sum_{e' ~ v} 1/sqrt(w_e w_e'))``
    where the sums run over the other edges at each endpoint; on unit weights this
    is ``4 - deg(u) - deg(v)``. Self-loops are ignored and get curvature 0.
    """
    loops = g.loop_mask
    w = g.weight
    if np.any(w[~loops] <= 0):
        raise ParameterError("Forman curvature needs positive edge weights")
    inv = np.zeros(g.m)
    inv[~loops] = 1.0 / np.sqrt(w[~loops])
    s = np.zeros(g.n)
    np.add.at(s, g.src[~loops], inv[~loops])
    np.add.at(s, g.dst[~loops], inv[~loops])
    out = np.zeros(g.m)
    keep = ~loops
    we = w[keep]
    su = s[g.src[keep]] - inv[keep]
    sv = s[g.dst[keep]] - inv[keep]
    out[keep] = we * (2.0 / we - (su + sv) / np.sqrt(we))
    return out


def write_vertex_values_csv(path, values) -> None:
    lines = ["node,value"] + [f"{i},{float(v)!r}" for i, v in enumerate(np.asarray(values))]
    Path(path).write_text("\n".join(lines) + "\n")


def write_edge_values_csv(path, g: Graph, values) -> None:
    lines = ["u,v,value"] + [f"{u},{v},{float(x)!r}" for u, v, x in zip(g.src, g.dst, np.asarray(values))]
    Path(path).write_text("\n".join(lines) + "\n")
