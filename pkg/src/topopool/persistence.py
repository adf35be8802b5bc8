"""Persistent homology of graph filtrations in dimensions 0 and 1.

Edges are processed in ascending filtration value (ties: canonical edge order)
through a union-find forest. Every edge yields exactly one tuple of the
augmented 1-dimensional diagram:

* edge closing a cycle  -> ``(f(e), essential_death)``
* edge merging two components -> ``(f(e), f(e))``
* self-loop -> ``(f(e), f(e))``

The 0-dimensional diagram follows the elder rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import ParameterError
from .graph import Graph, components

__all__ = [
    "FiltrationValues",
    "PersistenceDiagram",
    "MERGE",
    "CYCLE",
    "LOOP",
    "edge_filtration",
    "edge_induced_filtration",
    "constant_filtration",
    "pair_edges",
    "compute_persistence",
    "betti",
    "persistence_ratio",
    "same_multiset",
    "diagram_rows",
    "write_diagram_csv",
    "read_diagram_csv",
]

MERGE, CYCLE, LOOP = 0, 1, 2


@dataclass(frozen=True)
class FiltrationValues:
    vertex_values: np.ndarray
    edge_values: np.ndarray

    def __post_init__(self):
        if not (np.all(np.isfinite(self.vertex_values)) and np.all(np.isfinite(self.edge_values))):
            raise ParameterError("filtration values must be finite")

    @property
    def f_max(self) -> float:
        vals = np.concatenate([self.vertex_values, self.edge_values])
        return float(vals.max()) if len(vals) else 0.0


@dataclass(frozen=True)
class PersistenceDiagram:
    """Multiset of ``(birth, death)`` tuples.

    ``edge_u``/``edge_v`` name the edge owning each tuple (dimension 1) or the
    edge that killed the component (dimension 0; ``-1`` when it never dies).
    ``vertex`` is the creating vertex in dimension 0 and ``-1`` in dimension 1.
    """

    dim: int
    births: np.ndarray
    deaths: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    vertex: np.ndarray
    essential: np.ndarray
    f_max: float
    essential_death: float

    def __len__(self):
        return len(self.births)

    @property
    def points(self) -> np.ndarray:
        return np.column_stack([self.births, self.deaths]) if len(self) else np.zeros((0, 2))

    @property
    def persistence(self) -> np.ndarray:
        return self.deaths - self.births

    def off_diagonal(self, tol=1e-12) -> np.ndarray:
        return self.points[self.persistence > tol]

    def sorted_points(self) -> np.ndarray:
        p = self.points
        return p[np.lexsort((p[:, 1], p[:, 0]))] if len(p) else p


def edge_filtration(g: Graph, vertex_values) -> FiltrationValues:
    """Extend vertex values to edges with the max rule; self-loops keep their vertex value."""
    fv = np.asarray(vertex_values, dtype=float)
    if fv.shape != (g.n,):
        raise ParameterError(f"expected {g.n} vertex values, got shape {fv.shape}")
    return FiltrationValues(fv, np.maximum(fv[g.src], fv[g.dst]))


def edge_induced_filtration(g: Graph, edge_values) -> FiltrationValues:
    """Filtration given on edges; each vertex enters at its smallest incident edge value.

    Isolated vertices take the smallest edge value in the graph (0 if edgeless).
    """
    fe = np.asarray(edge_values, dtype=float)
    if fe.shape != (g.m,):
        raise ParameterError(f"expected {g.m} edge values, got shape {fe.shape}")
    base = float(fe.min()) if len(fe) else 0.0
    fv = np.full(g.n, np.inf)
    np.minimum.at(fv, g.src, fe)
    np.minimum.at(fv, g.dst, fe)
    fv[np.isinf(fv)] = base
    return FiltrationValues(fv, fe)


def constant_filtration(g: Graph, value: float = 0.0) -> FiltrationValues:
    return FiltrationValues(np.full(g.n, float(value)), np.full(g.m, float(value)))


@numba.njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@numba.njit(cache=True)
def _pair_kernel(n, src, dst, order, vrank):
    m = len(order)
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    elder = np.arange(n)
    kind = np.empty(m, dtype=np.int8)
    dying = np.full(m, -1, dtype=np.int64)
    for t in range(m):
        k = order[t]
        u = src[k]
        v = dst[k]
        if u == v:
            kind[k] = 2
            continue
        ru = _find(parent, u)
        rv = _find(parent, v)
        if ru == rv:
            kind[k] = 1
            continue
        kind[k] = 0
        eu = elder[ru]
        ev = elder[rv]
        if vrank[eu] < vrank[ev]:
            old = eu
            dying[k] = ev
        else:
            old = ev
            dying[k] = eu
        if size[ru] < size[rv]:
            ru, rv = rv, ru
        parent[rv] = ru
        size[ru] += size[rv]
        elder[ru] = old
    return kind, dying


def pair_edges(n, src, dst, edge_values, vertex_values):
    """Union-find pass over the edges.

    Returns ``(order, kind, dying)``: processing order, per-edge kind
    (``MERGE``/``CYCLE``/``LOOP``) and, for merging edges, the vertex whose
    component dies (the younger one; equal births keep the smaller vertex index).
    """
    src = np.ascontiguousarray(src, dtype=np.int64)
    dst = np.ascontiguousarray(dst, dtype=np.int64)
    ev = np.asarray(edge_values, dtype=float)
    fv = np.asarray(vertex_values, dtype=float)
    order = np.argsort(ev, kind="stable")
    vorder = np.lexsort((np.arange(n), fv))
    vrank = np.empty(n, dtype=np.int64)
    vrank[vorder] = np.arange(n)
    kind, dying = _pair_kernel(int(n), src, dst, order.astype(np.int64), vrank)
    return order, kind, dying


def compute_persistence(g: Graph, filt: FiltrationValues, essential_death: float | None = None,
                        essential_offset: float = 1.0):
    """Return ``(D0, D1)``; ``D1`` is the augmented diagram with one tuple per edge.

    Features that never die get ``essential_death``, by default ``f_max + essential_offset``.
    """
    fv, fe = filt.vertex_values, filt.edge_values
    if fv.shape != (g.n,) or fe.shape != (g.m,):
        raise ParameterError("filtration does not match graph")
    f_max = filt.f_max
    ess = f_max + essential_offset if essential_death is None else float(essential_death)
    _, kind, dying = pair_edges(g.n, g.src, g.dst, fe, fv)

    cycle = kind == CYCLE
    d1 = PersistenceDiagram(
        dim=1,
        births=fe.copy(),
        deaths=np.where(cycle, ess, fe),
        edge_u=g.src.copy(),
        edge_v=g.dst.copy(),
        vertex=np.full(g.m, -1, dtype=np.int64),
        essential=cycle,
        f_max=f_max,
        essential_death=ess,
    )

    death0 = np.full(g.n, ess)
    killer = np.full(g.n, -1, dtype=np.int64)
    merges = np.flatnonzero(kind == MERGE)
    death0[dying[merges]] = fe[merges]
    killer[dying[merges]] = merges
    alive = killer < 0
    eu = np.full(g.n, -1, dtype=np.int64)
    ev_ = np.full(g.n, -1, dtype=np.int64)
    eu[~alive] = g.src[killer[~alive]]
    ev_[~alive] = g.dst[killer[~alive]]
    d0 = PersistenceDiagram(
        dim=0,
        births=fv.copy(),
        deaths=death0,
        edge_u=eu,
        edge_v=ev_,
        vertex=np.arange(g.n),
        essential=alive,
        f_max=f_max,
        essential_death=ess,
    )
    return d0, d1


def betti(g: Graph) -> tuple[int, int]:
    """``(beta0, beta1)`` from a traversal, independent of the union-find engine."""
    b0 = int(len(np.unique(components(g)))) if g.n else 0
    return b0, g.m_noloops - g.n + b0


def persistence_ratio(d: PersistenceDiagram, tol: float = 1e-12) -> float:
    if len(d) == 0:
        return 0.0
    return float(np.mean(d.persistence > tol))


def same_multiset(d1: PersistenceDiagram, d2: PersistenceDiagram, tol: float = 1e-12) -> bool:
    a, b = d1.sorted_points(), d2.sorted_points()
    return a.shape == b.shape and bool(np.all(np.abs(a - b) <= tol))


def diagram_rows(*diagrams: PersistenceDiagram) -> list[tuple]:
    rows = []
    for d in diagrams:
        for i in range(len(d)):
            rows.append((d.dim, float(d.births[i]), float(d.deaths[i]), int(d.edge_u[i]), int(d.edge_v[i])))
    return rows


def write_diagram_csv(path, *diagrams: PersistenceDiagram) -> None:
    lines = ["dim,birth,death,edge_u,edge_v"]
    for dim, b, dth, u, v in diagram_rows(*diagrams):
        lines.append(f"{dim},{b!r},{dth!r},{'' if u < 0 else u},{'' if v < 0 else v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_diagram_csv(path) -> list[tuple]:
    rows = []
    for line in Path(path).read_text().splitlines()[1:]:
        dim, b, dth, u, v = line.split(",")
        rows.append((int(dim), float(b), float(dth), int(u) if u else -1, int(v) if v else -1))
    return rows
