"""Undirected weighted graphs, synthetic generators, spectral features and JSON I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ParseError

__all__ = [
    "Graph",
    "LabeledGraphSet",
    "generate",
    "ring",
    "path",
    "grid2d",
    "torus",
    "complete",
    "random_graph",
    "cycles_dataset",
    "two_cycles_dataset",
    "laplacian",
    "laplacian_eigh",
    "laplacian_features",
    "permute",
    "components",
    "to_json",
    "from_json",
    "save_graphs",
    "load_graphs",
    "io_roundtrip",
]


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph with one scalar weight per edge and a node feature matrix.

    Edges are stored once per unordered pair as parallel arrays ``src``, ``dst``,
    ``weight`` with ``src <= dst`` and sorted lexicographically by ``(src, dst)``.
    Self-loops are allowed (``src == dst``).
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    x: np.ndarray
    label: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_edges(cls, n, edges, x=None, label=None, weights=None):
        """Build a graph from ``(u, v)`` or ``(u, v, w)`` tuples in any order."""
        n = int(n)
        if n < 0:
            raise ParameterError("node count must be non-negative")
        edges = list(edges)
        if edges:
            arr = np.asarray(edges, dtype=float)
            if arr.ndim != 2 or arr.shape[1] not in (2, 3):
                raise ParameterError("edges must be (u, v) or (u, v, w) tuples")
            u = arr[:, 0].astype(np.int64)
            v = arr[:, 1].astype(np.int64)
            if weights is not None:
                w = np.asarray(weights, dtype=float)
            elif arr.shape[1] == 3:
                w = arr[:, 2]
            else:
                w = np.ones(len(arr))
        else:
            u = v = np.zeros(0, dtype=np.int64)
            w = np.zeros(0)
        return cls.from_arrays(n, u, v, w, x=x, label=label)

    @classmethod
    def from_arrays(cls, n, u, v, w=None, x=None, label=None):
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.ones(len(u)) if w is None else np.asarray(w, dtype=float)
        if not (len(u) == len(v) == len(w)):
            raise ParameterError("edge arrays differ in length")
        if len(u) and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise ParameterError("edge endpoint out of range")
        if not np.all(np.isfinite(w)):
            raise ParameterError("edge weights must be finite")
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        order = np.lexsort((hi, lo))
        lo, hi, w = lo[order], hi[order], w[order]
        if len(lo) > 1:
            dup = (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])
            if dup.any():
                k = int(np.flatnonzero(dup)[0])
                raise ParameterError(f"duplicate edge ({lo[k]}, {hi[k]})")
        if x is None:
            x = np.zeros((n, 0))
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(n, -1) if n else x.reshape(0, 0)
        if x.shape[0] != n:
            raise ParameterError(f"feature matrix has {x.shape[0]} rows for {n} nodes")
        for arr in (lo, hi, w, x):
            arr.setflags(write=False)
        return cls(n, lo, hi, w, x, None if label is None else int(label))

    @classmethod
    def from_dense(cls, A, x=None, include_diagonal=False, threshold=0.0, label=None):
        """Graph whose edges are the entries of ``A`` (upper triangle) with ``|a| > threshold``."""
        A = np.asarray(A, dtype=float)
        n = A.shape[0]
        iu, ju = np.triu_indices(n, 0 if include_diagonal else 1)
        w = A[iu, ju]
        keep = np.abs(w) > threshold
        return cls.from_arrays(n, iu[keep], ju[keep], w[keep], x=x, label=label)

    @property
    def m(self) -> int:
        return len(self.src)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(a), int(b), float(c)) for a, b, c in zip(self.src, self.dst, self.weight)]

    @property
    def loop_mask(self) -> np.ndarray:
        return self.src == self.dst

    @property
    def has_self_loops(self) -> bool:
        return bool(self.loop_mask.any())

    @property
    def m_noloops(self) -> int:
        return int((~self.loop_mask).sum())

    def degrees(self) -> np.ndarray:
        """Number of non-loop incident edges per node."""
        keep = ~self.loop_mask
        deg = np.bincount(self.src[keep], minlength=self.n)
        deg += np.bincount(self.dst[keep], minlength=self.n)
        return deg

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        A[self.src, self.dst] = self.weight
        A[self.dst, self.src] = self.weight
        return A

    def neighbors(self) -> list[list[int]]:
        if "nbrs" not in self._cache:
            nbrs = [[] for _ in range(self.n)]
            for a, b in zip(self.src.tolist(), self.dst.tolist()):
                if a != b:
                    nbrs[a].append(b)
                    nbrs[b].append(a)
            self._cache["nbrs"] = nbrs
        return self._cache["nbrs"]

    def with_features(self, x) -> "Graph":
        return Graph.from_arrays(self.n, self.src, self.dst, self.weight, x=x, label=self.label)

    def with_label(self, label) -> "Graph":
        return Graph.from_arrays(self.n, self.src, self.dst, self.weight, x=self.x, label=label)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return (
            self.n == other.n
            and self.label == other.label
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.weight, other.weight)
            and self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
        )

    def __hash__(self):
        return id(self)


@dataclass
class LabeledGraphSet:
    graphs: list[Graph]

    @property
    def labels(self) -> list[int]:
        return [g.label for g in self.graphs]

    def __len__(self):
        return len(self.graphs)

    def __iter__(self):
        return iter(self.graphs)


def _check_size(name, value, minimum=3):
    if int(value) != value or value < minimum:
        raise ParameterError(f"{name} must be an integer >= {minimum}, got {value!r}")


def _cycle_edges(nodes: Sequence[int]) -> list[tuple[int, int]]:
    return [(nodes[i], nodes[(i + 1) % len(nodes)]) for i in range(len(nodes))]


def ring(n: int, x=None) -> Graph:
    _check_size("n", n)
    return Graph.from_edges(n, _cycle_edges(range(n)), x=x)


def path(n: int, x=None) -> Graph:
    _check_size("n", n, minimum=1)
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)], x=x)


def complete(n: int, x=None) -> Graph:
    _check_size("n", n, minimum=1)
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)], x=x)


def grid2d(rows: int, cols: int, x=None) -> Graph:
    _check_size("rows", rows, 1)
    _check_size("cols", cols, 1)
    if rows * cols < 3:
        raise ParameterError("grid needs at least 3 nodes")
    idx = lambda r, c: r * cols + c  # noqa: E731
    edges = [(idx(r, c), idx(r, c + 1)) for r in range(rows) for c in range(cols - 1)]
    edges += [(idx(r, c), idx(r + 1, c)) for r in range(rows - 1) for c in range(cols)]
    return Graph.from_edges(rows * cols, edges, x=x)


def torus(rows: int, cols: int, x=None) -> Graph:
    _check_size("rows", rows)
    _check_size("cols", cols)
    idx = lambda r, c: (r % rows) * cols + (c % cols)  # noqa: E731
    edges = [(idx(r, c), idx(r, c + 1)) for r in range(rows) for c in range(cols)]
    edges += [(idx(r, c), idx(r + 1, c)) for r in range(rows) for c in range(cols)]
    return Graph.from_edges(rows * cols, edges, x=x)


def random_graph(n: int, p: float, seed: int = 0, x=None) -> Graph:
    """Erdos-Renyi G(n, p)."""
    _check_size("n", n, minimum=1)
    if not 0.0 <= p <= 1.0:
        raise ParameterError("edge probability must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    return Graph.from_arrays(n, iu[keep], ju[keep], x=x)


def _random_features(rng, n, dim=3):
    return rng.standard_normal((n, dim))


def cycles_dataset(count: int = 1000, seed: int = 0, min_nodes=10, max_nodes=20, feature_dim=3):
    """Class 0: one cycle; class 1: two cycles sharing exactly one vertex ("8" shape)."""
    if count < 2 or min_nodes < 5 or max_nodes < min_nodes:
        raise ParameterError("invalid cycles dataset parameters")
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(count):
        label = i % 2
        n = int(rng.integers(min_nodes, max_nodes + 1))
        if label == 0:
            edges = _cycle_edges(list(range(n)))
        else:
            # a + b - 1 = n, both cycles of length >= 3
            a = int(rng.integers(3, n - 1))
            b = n + 1 - a
            first = list(range(a))
            second = [0] + list(range(a, a + b - 1))
            edges = _cycle_edges(first) + _cycle_edges(second)
        graphs.append(Graph.from_edges(n, edges, x=_random_features(rng, n, feature_dim), label=label))
    return LabeledGraphSet(graphs)


def two_cycles_dataset(count: int = 1000, seed: int = 0, min_nodes=10, max_nodes=20, feature_dim=3):
    """Class 0: two disjoint cycles; class 1: the same two cycles joined by one bridge edge."""
    if count < 2 or min_nodes < 6 or max_nodes < min_nodes:
        raise ParameterError("invalid 2-cycles dataset parameters")
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(count):
        label = i % 2
        n = int(rng.integers(min_nodes, max_nodes + 1))
        a = int(rng.integers(3, n - 2))
        first = list(range(a))
        second = list(range(a, n))
        edges = _cycle_edges(first) + _cycle_edges(second)
        if label == 1:
            edges.append((0, a))
        graphs.append(Graph.from_edges(n, edges, x=_random_features(rng, n, feature_dim), label=label))
    return LabeledGraphSet(graphs)


def generate(kind: str, **params):
    """Dispatch to a generator by name.

    ``ring``/``random`` take ``n``; ``grid2d``/``torus`` take ``rows``, ``cols``
    (or ``n`` for a square lattice); ``cycles``/``two_cycles`` take ``count``.
    Every generator accepts ``seed``; synthetic classification sets carry
    3-dim standard-normal features, the structured graphs carry none unless
    ``features`` (Laplacian eigenvector count) is given.
    """
    seed = int(params.get("seed", 0))
    features = params.get("features")
    if kind in ("grid2d", "torus"):
        rows, cols = params.get("rows"), params.get("cols")
        if rows is None or cols is None:
            n = params.get("n")
            if n is None:
                raise ParameterError(f"{kind} needs rows/cols or n")
            side = int(round(np.sqrt(n)))
            if side * side != n:
                raise ParameterError(f"{kind}: n={n} is not a square; pass rows and cols")
            rows = cols = side
        if "n" in params and params["n"] is not None and rows * cols != params["n"]:
            raise ParameterError("rows * cols must equal n")
        g = grid2d(rows, cols) if kind == "grid2d" else torus(rows, cols)
    elif kind == "ring":
        g = ring(params.get("n", 64))
    elif kind == "path":
        g = path(params.get("n", 3))
    elif kind == "complete":
        g = complete(params.get("n", 4))
    elif kind == "random":
        g = random_graph(params.get("n", 12), params.get("p", 0.3), seed=seed)
    elif kind == "cycles":
        return cycles_dataset(params.get("count", 1000), seed=seed)
    elif kind == "two_cycles":
        return two_cycles_dataset(params.get("count", 1000), seed=seed)
    else:
        raise ParameterError(f"unknown graph kind {kind!r}")
    if features:
        g = g.with_features(laplacian_features(g, int(features)))
    return g


def laplacian(g: Graph) -> np.ndarray:
    A = g.adjacency()
    np.fill_diagonal(A, 0.0)
    return np.diag(A.sum(axis=1)) - A


def _fix_signs(vecs: np.ndarray, tol=1e-10) -> np.ndarray:
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, j]) > tol)
        if len(nz) and vecs[nz[0], j] < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def laplacian_eigh(g: Graph):
    """Eigenvalues (ascending) and sign-normalised eigenvectors of ``L = D - A``."""
    vals, vecs = np.linalg.eigh(laplacian(g))
    return vals, _fix_signs(vecs)


def laplacian_features(g: Graph, k: int) -> np.ndarray:
    """First ``k`` Laplacian eigenvectors as an ``n x k`` feature matrix.

    The first nonzero entry of every column is made positive.
    """
    if k > g.n or k < 0:
        raise ParameterError(f"cannot take {k} eigenvectors of a {g.n}-node graph")
    return laplacian_eigh(g)[1][:, :k]


def permute(g: Graph, perm) -> Graph:
    """Relabel node ``i`` as ``perm[i]``; feature rows follow their nodes."""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (g.n,) or not np.array_equal(np.sort(perm), np.arange(g.n)):
        raise ParameterError("perm must be a permutation of 0..n-1")
    x = np.empty_like(g.x)
    x[perm] = g.x
    return Graph.from_arrays(g.n, perm[g.src], perm[g.dst], g.weight, x=x, label=g.label)


def components(g: Graph) -> np.ndarray:
    """Component id per node via breadth-first traversal."""
    comp = np.full(g.n, -1, dtype=np.int64)
    nbrs = g.neighbors()
    c = 0
    for s in range(g.n):
        if comp[s] >= 0:
            continue
        comp[s] = c
        stack = [s]
        while stack:
            a = stack.pop()
            for b in nbrs[a]:
                if comp[b] < 0:
                    comp[b] = c
                    stack.append(b)
        c += 1
    return comp


# --- JSON -----------------------------------------------------------------


def to_json(g: Graph) -> dict:
    obj = {
        "n": g.n,
        "edges": [[int(a), int(b), float(w)] for a, b, w in zip(g.src, g.dst, g.weight)],
        "x": g.x.tolist(),
    }
    if g.label is not None:
        obj["label"] = g.label
    return obj


def from_json(obj, where="<graph>") -> Graph:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object")
    try:
        n = obj["n"]
        edges = obj.get("edges", [])
        x = obj.get("x")
    except KeyError as exc:
        raise ParseError(f"{where}: missing key {exc}") from None
    if not isinstance(n, int) or n < 0:
        raise ParseError(f"{where}: 'n' must be a non-negative integer")
    for i, e in enumerate(edges):
        if not isinstance(e, list) or len(e) not in (2, 3):
            raise ParseError(f"{where}: edge {i} must be [u, v] or [u, v, w]")
    if x is not None and len(x) == 0:
        x = np.zeros((n, 0))
    try:
        return Graph.from_edges(n, [tuple(e) for e in edges], x=x, label=obj.get("label"))
    except (ParameterError, ValueError, TypeError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def save_graphs(path, graphs: Graph | Iterable[Graph]) -> None:
    """Write one graph object, or ``{"graphs": [...]}`` for a collection."""
    if isinstance(graphs, Graph):
        obj = to_json(graphs)
    else:
        obj = {"graphs": [to_json(g) for g in graphs]}
    Path(path).write_text(json.dumps(obj, indent=None, separators=(",", ":")) + "\n")


def loads_graphs(text: str, where="<string>") -> list[Graph]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if text.splitlines() else ""
        raise ParseError(
            f"{where}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line[max(0, exc.colno - 40):exc.colno + 40]}"
        ) from None
    if isinstance(obj, dict) and "graphs" in obj:
        return [from_json(o, f"{where}: graphs[{i}]") for i, o in enumerate(obj["graphs"])]
    return [from_json(obj, where)]


def load_graphs(path) -> list[Graph]:
    path = Path(path)
    return loads_graphs(path.read_text(), str(path))


def io_roundtrip(g: Graph) -> Graph:
    text = json.dumps(to_json(g))
    return loads_graphs(text)[0]
