"""1-WL colour refinement and persistence-based separation checks."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ProtocolError
from .graph import Graph
from .persistence import compute_persistence, constant_filtration, edge_filtration, same_multiset

__all__ = [
    "LabelTable",
    "WlTrace",
    "wl_refine",
    "wl_compare",
    "wl_theorem_filtration",
    "Verdict",
    "ph_distinguish",
    "PairCase",
    "pair_suite",
    "write_verdicts_csv",
]


class LabelTable:
    """Injective map from refinement signatures to small integers, in first-seen order.

    Share one table between graphs so their labels are comparable.
    """

    def __init__(self):
        self._table: dict[tuple, int] = {}

    def __call__(self, iteration: int, signature) -> int:
        key = (iteration, signature)
        if key not in self._table:
            self._table[key] = len(self._table)
        return self._table[key]

    def __len__(self):
        return len(self._table)


@dataclass
class WlTrace:
    labels: list[list[int]]
    histograms: list[Counter]
    stable_at: int | None = None
    table: LabelTable = field(default=None, repr=False)


def wl_refine(g: Graph, max_iter: int, table: LabelTable | None = None, run_all: bool = False) -> WlTrace:
    """Degree-initialised 1-WL refinement.

    Iteration 0 holds the degree colouring. Refinement stops once the number
    of colour classes stops growing (``stable_at``), unless ``run_all``.
    """
    if max_iter < 1:
        raise ParameterError("max_iter must be >= 1")
    table = table if table is not None else LabelTable()
    nbrs = g.neighbors()
    cur = [table(0, int(d)) for d in g.degrees()]
    labels, hists = [cur], [Counter(cur)]
    stable = None
    for it in range(1, max_iter + 1):
        nxt = [table(it, (cur[v], tuple(sorted(cur[w] for w in nbrs[v])))) for v in range(g.n)]
        labels.append(nxt)
        hists.append(Counter(nxt))
        if stable is None and len(set(nxt)) == len(set(cur)):
            stable = it - 1
            if not run_all:
                break
        cur = nxt
    return WlTrace(labels, hists, stable, table)


def wl_compare(g1: Graph, g2: Graph, max_iter: int | None = None):
    """Run refinement on both graphs with a shared table.

    Returns ``(trace1, trace2, divergence_iteration or None)``.
    """
    max_iter = max_iter or max(g1.n, g2.n, 1)
    table = LabelTable()
    t1 = wl_refine(g1, max_iter, table, run_all=True)
    t2 = wl_refine(g2, max_iter, table, run_all=True)
    for it, (h1, h2) in enumerate(zip(t1.histograms, t2.histograms)):
        if h1 != h2:
            return t1, t2, it
    return t1, t2, None


def _witness(hist_self: Counter, hist_other: Counter, labels: list[int]) -> int:
    for v, lab in enumerate(labels):
        if hist_self[lab] != hist_other.get(lab, 0):
            return v
    return 0


def wl_theorem_filtration(g: Graph, g2: Graph, divergence_iter: int | None = None):
    """Vertex filtrations separating a WL-divergent pair.

    Labels at the divergence iteration are enumerated jointly (1-based, in
    first-seen order over ``g`` then ``g2``) and each vertex gets its label's
    index, except one witness per graph whose label count differs between the
    graphs: it gets ``n + n' + 1`` in ``g`` and ``n + n' + 2`` in ``g2``.
    """
    t1, t2, div = wl_compare(g, g2)
    if div is None:
        raise ProtocolError("graphs are not distinguished by 1-WL")
    h = div if divergence_iter is None else int(divergence_iter)
    if h >= len(t1.histograms) or t1.histograms[h] == t2.histograms[h]:
        raise ProtocolError(f"label histograms do not differ at iteration {h}")
    lab1, lab2 = t1.labels[h], t2.labels[h]
    index: dict[int, int] = {}
    for lab in lab1 + lab2:
        index.setdefault(lab, len(index) + 1)
    f1 = np.array([index[lab] for lab in lab1], dtype=float)
    f2 = np.array([index[lab] for lab in lab2], dtype=float)
    total = g.n + g2.n
    if g.n:
        f1[_witness(t1.histograms[h], t2.histograms[h], lab1)] = total + 1
    if g2.n:
        f2[_witness(t2.histograms[h], t1.histograms[h], lab2)] = total + 2
    return f1, f2


def _with_isolated_loops(g: Graph) -> Graph:
    isolated = np.flatnonzero(g.degrees() == 0)
    have_loop = set(g.src[g.loop_mask].tolist())
    add = [v for v in isolated.tolist() if v not in have_loop]
    if not add:
        return g
    edges = g.edges + [(v, v, 1.0) for v in add]
    return Graph.from_edges(g.n, edges, x=g.x, label=g.label)


@dataclass(frozen=True)
class Verdict:
    wl_distinguishes: bool
    ph_distinguishes: bool
    divergence_iter: int | None


def ph_distinguish(g1: Graph, g2: Graph, mode: str = "constant_filtration", tol: float = 1e-12) -> Verdict:
    """Compare augmented 1-dim diagrams of two graphs under a chosen filtration."""
    _, _, div = wl_compare(g1, g2)
    if mode == "wl_filtration":
        if div is None:
            raise ProtocolError("wl_filtration mode needs a WL-divergent pair")
        f1, f2 = wl_theorem_filtration(g1, g2, div)
        a, b = _with_isolated_loops(g1), _with_isolated_loops(g2)
        d1 = compute_persistence(a, edge_filtration(a, f1))[1]
        d2 = compute_persistence(b, edge_filtration(b, f2))[1]
    elif mode == "constant_filtration":
        d1 = compute_persistence(g1, constant_filtration(g1))[1]
        d2 = compute_persistence(g2, constant_filtration(g2))[1]
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    return Verdict(div is not None, not same_multiset(d1, d2, tol), div)


@dataclass(frozen=True)
class PairCase:
    g1: Graph
    g2: Graph
    kind: str
    expect_wl: bool


def _rewire(g: Graph, rng) -> Graph | None:
    """Move one endpoint of an edge so that the degree multiset changes."""
    deg = g.degrees()
    nbrs = [set(a) for a in g.neighbors()]
    edges = [(int(a), int(b)) for a, b in zip(g.src, g.dst) if a != b]
    for k in rng.permutation(len(edges)):
        u, v = edges[k]
        if rng.random() < 0.5:
            u, v = v, u
        cands = [w for w in range(g.n) if w != u and w not in nbrs[u] and deg[w] != deg[v] - 1]
        if cands:
            w = int(rng.choice(cands))
            new = [e for i, e in enumerate(edges) if i != k] + [(u, w)]
            return Graph.from_edges(g.n, new)
    return None


def _cycle_union(lengths, offset=0) -> list[tuple[int, int]]:
    edges, start = [], offset
    for length in lengths:
        nodes = list(range(start, start + length))
        edges += [(nodes[i], nodes[(i + 1) % length]) for i in range(length)]
        start += length
    return edges


def pair_suite(count: int, seed: int = 0, divergent_fraction: float = 0.5) -> list[PairCase]:
    """Graph pairs with known 1-WL verdicts.

    ``divergent``: a random graph and a copy with one degree-changing rewire.
    ``regular``: a single ``n``-cycle against a disjoint union of cycles with the same ``n``.
    """
    if count < 1:
        raise ParameterError("count must be >= 1")
    rng = np.random.default_rng(seed)
    n_div = int(round(count * divergent_fraction))
    cases: list[PairCase] = []
    while len(cases) < n_div:
        n = int(rng.integers(5, 13))
        p = float(rng.uniform(0.2, 0.6))
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(len(iu)) < p
        if keep.sum() < 2:
            continue
        g = Graph.from_arrays(n, iu[keep], ju[keep])
        h = _rewire(g, rng)
        if h is None:
            continue
        cases.append(PairCase(g, h, "divergent", True))
    while len(cases) < count:
        parts = int(rng.integers(2, 4))
        lengths = [int(rng.integers(3, 8)) for _ in range(parts)]
        n = sum(lengths)
        g1 = Graph.from_edges(n, _cycle_union([n]))
        g2 = Graph.from_edges(n, _cycle_union(lengths))
        cases.append(PairCase(g1, g2, "regular", False))
    return cases


def write_verdicts_csv(path, verdicts: list[Verdict]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_id", "wl", "ph", "divergence_iter"])
        for i, v in enumerate(verdicts):
            w.writerow([i, int(v.wl_distinguishes), int(v.ph_distinguishes),
                        "" if v.divergence_iter is None else v.divergence_iter])
