"""Diagram vectorisation, first/second-order statistics, topological loss and 1-Wasserstein distance."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .autodiff import Var, as_var, concat, maximum, minimum
from .errors import ParameterError
from .persistence import PersistenceDiagram

__all__ = [
    "TransformConfig",
    "DiagramStats",
    "vectorize",
    "vectorize_points",
    "diagram_stats",
    "stats_vector",
    "topo_loss",
    "topo_loss_var",
    "wasserstein1",
    "wasserstein_matching",
    "wasserstein1_var",
    "write_stats_csv",
]


@dataclass(frozen=True)
class TransformConfig:
    """Sample grids of the triangle, Gaussian and line point transforms."""

    triangle_samples: tuple[float, ...]
    gaussian_points: tuple[tuple[float, float], ...]
    gaussian_sigma: float
    line_directions: tuple[tuple[float, float], ...]
    line_biases: tuple[float, ...]

    @classmethod
    def default(cls, essential_death: float = 1.0, n_triangle: int = 8, grid: int = 3):
        t = tuple(np.linspace(0.0, essential_death, n_triangle).tolist())
        axis = np.linspace(0.0, essential_death, grid)
        pts = tuple((float(a), float(b)) for a in axis for b in axis)
        return cls(t, pts, essential_death / 4.0, ((1.0, 0.0), (0.0, 1.0)), (0.0, 0.0))

    @property
    def dim(self) -> int:
        return len(self.triangle_samples) + len(self.gaussian_points) + len(self.line_directions)

    def validate(self):
        if not (self.triangle_samples or self.gaussian_points or self.line_directions):
            raise ParameterError("transform config has no samples")
        if self.gaussian_points and self.gaussian_sigma <= 0:
            raise ParameterError("gaussian_sigma must be positive")
        if len(self.line_biases) != len(self.line_directions):
            raise ParameterError("one bias per line direction is required")


@dataclass(frozen=True)
class DiagramStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.mean, self.std])


def vectorize_points(births, deaths, cfg: TransformConfig) -> Var:
    """Per-tuple feature rows ``[triangle | gaussian | line]`` of shape ``(m, cfg.dim)``."""
    cfg.validate()
    b = as_var(births).reshape(-1, 1)
    d = as_var(deaths).reshape(-1, 1)
    parts = []
    if cfg.triangle_samples:
        t = np.asarray(cfg.triangle_samples)[None, :]
        parts.append(minimum(t - b, d - t).relu())
    if cfg.gaussian_points:
        q = np.asarray(cfg.gaussian_points)
        sq = (b - q[None, :, 0]) ** 2 + (d - q[None, :, 1]) ** 2
        parts.append((sq * (-0.5 / cfg.gaussian_sigma**2)).exp())
    if cfg.line_directions:
        r = np.asarray(cfg.line_directions)
        c = np.asarray(cfg.line_biases)[None, :]
        parts.append(b * r[None, :, 0] + d * r[None, :, 1] + c)
    return concat(parts, axis=1)


def vectorize(d: PersistenceDiagram, cfg: TransformConfig | None = None) -> np.ndarray:
    cfg = cfg or TransformConfig.default(d.essential_death)
    return vectorize_points(d.births, d.deaths, cfg).value


def stats_vector(h, weights=None) -> Var:
    """Concatenated population mean and standard deviation of the rows of ``h``.

    The variance is taken as the mean squared deviation; columns whose entries are
    all identical get a deviation of exactly zero. Optional nonnegative ``weights``
    give each row a multiplicity; unit weights reproduce the unweighted statistics.
    """
    h = as_var(h)
    if h.ndim != 2 or h.shape[0] == 0:
        raise ParameterError("need at least one vector")
    varying = (h.value.max(axis=0) > h.value.min(axis=0)).astype(float)[None, :]
    if weights is None:
        mu = h.mean(axis=0, keepdims=True)
        dev = (h - mu) * varying
        sigma = (dev * dev).mean(axis=0).sqrt()
    else:
        w = as_var(weights).reshape(-1, 1)
        if w.shape[0] != h.shape[0]:
            raise ParameterError("one weight per row is required")
        total = w.sum()
        if not total.value > 0:
            raise ParameterError("weights must have a positive sum")
        mu = (h * w).sum(axis=0, keepdims=True) / total
        dev = (h - mu) * varying
        sigma = ((dev * dev * w).sum(axis=0) / total).sqrt()
    return concat([mu.reshape(-1), sigma], axis=0)


def diagram_stats(v) -> DiagramStats:
    vec = stats_vector(v).value
    k = len(vec) // 2
    return DiagramStats(vec[:k], vec[k:])


def topo_loss_var(per_layer, original) -> Var:
    """Mean over layers and coordinates of the squared gap to the original statistics."""
    if not per_layer:
        raise ParameterError("need at least one layer")
    original = as_var(original)
    total = None
    for s in per_layer:
        s = as_var(s)
        if s.shape != original.shape:
            raise ParameterError(f"stat dimension mismatch {s.shape} vs {original.shape}")
        diff = s - original
        term = (diff * diff).sum()
        total = term if total is None else total + term
    return total * (1.0 / (len(per_layer) * original.shape[0]))


def topo_loss(per_layer: list[DiagramStats], original: DiagramStats) -> float:
    return float(topo_loss_var([s.vector for s in per_layer], original.vector).value)


# --- Wasserstein ----------------------------------------------------------------


def _points(d) -> np.ndarray:
    if isinstance(d, PersistenceDiagram):
        return d.points
    p = np.asarray(d, dtype=float)
    return p.reshape(-1, 2)


def _ground(p, q, ground):
    diff = np.abs(p[:, None, :] - q[None, :, :])
    if ground == "linf":
        return diff.max(axis=2)
    if ground == "l2":
        return np.sqrt((diff**2).sum(axis=2))
    raise ParameterError(f"unknown ground metric {ground!r}")


def _diag_cost(p, ground):
    pers = p[:, 1] - p[:, 0]
    return pers / 2.0 if ground == "linf" else pers / np.sqrt(2.0)


def wasserstein_matching(d1, d2, ground: str = "linf"):
    """Optimal partial matching with diagonal projections (Hungarian algorithm).

    Zero-persistence points are dropped. Returns ``(cost, pairs, unmatched1, unmatched2)``
    with indices into the rows of the input diagrams.
    """
    P, Q = _points(d1), _points(d2)
    i1 = np.flatnonzero(P[:, 1] - P[:, 0] > 0)
    i2 = np.flatnonzero(Q[:, 1] - Q[:, 0] > 0)
    a, b = len(i1), len(i2)
    if a == 0 and b == 0:
        return 0.0, [], [], []
    p, q = P[i1], Q[i2]
    big = 1e300
    C = np.zeros((a + b, b + a))
    C[:a, :b] = _ground(p, q, ground)
    C[:a, b:] = big
    C[a:, :b] = big
    C[np.arange(a), b + np.arange(a)] = _diag_cost(p, ground)
    C[a + np.arange(b), np.arange(b)] = _diag_cost(q, ground)
    rows, cols = linear_sum_assignment(C)
    pairs, un1, un2 = [], [], []
    for r, c in zip(rows, cols):
        if r < a and c < b:
            pairs.append((int(i1[r]), int(i2[c])))
        elif r < a:
            un1.append(int(i1[r]))
        elif c < b:
            un2.append(int(i2[c]))
    return float(C[rows, cols].sum()), pairs, un1, un2


def wasserstein1(d1, d2, ground: str = "linf") -> float:
    """1-Wasserstein distance between two diagrams (finite deaths required)."""
    return wasserstein_matching(d1, d2, ground)[0]


def wasserstein1_var(b1, d1, b2, d2, ground: str = "linf") -> Var:
    """Wasserstein cost as a tape expression; the matching is held fixed at its optimum."""
    b1, d1, b2, d2 = (as_var(x) for x in (b1, d1, b2, d2))
    P = np.column_stack([b1.value, d1.value])
    Q = np.column_stack([b2.value, d2.value])
    _, pairs, un1, un2 = wasserstein_matching(P, Q, ground)
    if b1.tape is not None:
        b1.tape.note_choice(np.asarray(pairs, dtype=np.int64), np.asarray(un1), np.asarray(un2))
    terms = []
    scale = 0.5 if ground == "linf" else 1.0 / np.sqrt(2.0)
    if pairs:
        i = np.array([p[0] for p in pairs])
        j = np.array([p[1] for p in pairs])
        db = b1[i] - b2[j]
        dd = d1[i] - d2[j]
        if ground == "linf":
            terms.append(maximum(db.abs(), dd.abs()).sum())
        else:
            terms.append((db * db + dd * dd).sqrt().sum())
    for b, d, idx in ((b1, d1, un1), (b2, d2, un2)):
        if idx:
            idx = np.asarray(idx)
            terms.append((d[idx] - b[idx]).sum() * scale)
    total = as_var(0.0)
    for t in terms:
        total = total + t
    return total


def write_stats_csv(path, stats: list[DiagramStats]) -> None:
    lines = ["layer,kind,index,value"]
    for l, s in enumerate(stats):
        for kind, arr in (("mean", s.mean), ("std", s.std)):
            lines += [f"{l},{kind},{i},{float(v)!r}" for i, v in enumerate(arr)]
    Path(path).write_text("\n".join(lines) + "\n")
