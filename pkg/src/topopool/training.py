"""Topology-preservation training loop and its fixed-filtration evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autodiff import Tape, Var, as_var
from .errors import ParameterError, TrainingError
from .filtration import forman_curvature
from .graph import Graph, laplacian_features
from .metrics import TransformConfig, topo_loss_var, wasserstein1, wasserstein1_var
from .persistence import compute_persistence, edge_induced_filtration
from .pooling import ForwardResult, PoolingConfig, init_params, tip_forward

__all__ = [
    "TrainHistory",
    "coarse_graph",
    "forman_diagram",
    "evaluate_topology_preservation",
    "objective",
    "train_topo_similarity",
    "prepare_features",
    "topo_loss_at",
    "write_history_csv",
    "write_config",
    "read_config",
]


def forman_diagram(g: Graph):
    """Augmented 1-dim diagram of ``g`` under its Forman curvature edge filtration."""
    filt = edge_induced_filtration(g, forman_curvature(g))
    return compute_persistence(g, filt)[1]


def coarse_graph(A, threshold: float = 0.0) -> Graph:
    """Weighted graph of the off-diagonal entries of a pooled adjacency above ``threshold``."""
    A = np.asarray(A.value if isinstance(A, Var) else A, dtype=float)
    A = 0.5 * (A + A.T)
    return Graph.from_dense(A, include_diagonal=False, threshold=threshold)


def evaluate_topology_preservation(g_original: Graph, g_coarse: Graph) -> float:
    """1-Wasserstein distance between the Forman-curvature diagrams of two graphs."""
    if g_original.n == 0 or g_coarse.n == 0:
        raise ParameterError("graphs must be nonempty")
    return wasserstein1(forman_diagram(g_original), forman_diagram(g_coarse))


@dataclass
class TrainHistory:
    seed: int
    loss: list[float] = field(default_factory=list)
    epochs: list[int] = field(default_factory=list)
    wasserstein: list[float] = field(default_factory=list)


def prepare_features(g: Graph, k: int = 10) -> Graph:
    """Attach Laplacian eigenvector features if the graph has none."""
    if g.x.shape[1]:
        return g
    return g.with_features(laplacian_features(g, min(k, g.n)))


def objective(result: ForwardResult, cfg: PoolingConfig) -> Var:
    """Training objective: topological term (or ``L_r`` when ablated) plus weighted ``L_c``."""
    layers = result.layers
    L_c = layers[0].L_c
    for l in layers[1:]:
        L_c = L_c + l.L_c
    if cfg.wasserstein_loss:
        d0 = result.diagram0
        main = as_var(0.0)
        for l in layers:
            d = l.diagram
            main = main + wasserstein1_var(d.births, d.deaths, d0.births, d0.deaths)
        main = main * (1.0 / len(layers))
    elif cfg.no_topo_loss:
        main = layers[0].L_r
        for l in layers[1:]:
            main = main + l.L_r
    else:
        main = topo_loss_var(result.stats, result.stats0)
    return main + L_c * cfg.cluster_weight


def _topo_value(result: ForwardResult) -> float:
    return float(topo_loss_var(result.stats, result.stats0).value)


def _evaluate(g, params, cfg, tcfg, eval_seed, cut):
    rng = np.random.default_rng(eval_seed)
    res = tip_forward(g, params, cfg, rng, tcfg)
    dist = evaluate_topology_preservation(g, coarse_graph(res.output.A_out.value, cut))
    return res, dist


def train_topo_similarity(
    g: Graph,
    cfg: PoolingConfig,
    steps: int = 300,
    lr: float = 0.5,
    seed: int = 0,
    eval_every: int = 10,
    optimizer: str = "sgd",
    tcfg: TransformConfig | None = None,
    params: dict | None = None,
    cut: float = 0.0,
):
    """Minimise the topological objective by gradient descent on all pooling and filtration weights.

    One Gumbel sample is drawn per step from a generator seeded by ``seed``. Every
    ``eval_every`` steps (and at step 0) the current model is evaluated with a fixed
    evaluation sample: the Forman-curvature Wasserstein distance between ``g`` and the
    final coarsened graph is appended to the history.
    """
    if steps < 0 or lr <= 0 or eval_every < 1:
        raise ParameterError("steps >= 0, lr > 0 and eval_every >= 1 are required")
    if optimizer not in ("sgd", "adam"):
        raise ParameterError(f"unknown optimizer {optimizer!r}")
    g = prepare_features(g)
    tcfg = tcfg or TransformConfig.default(1.0)
    init_rng, sample_rng, eval_ss = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    ]
    eval_seed = int(eval_ss.integers(2**31))
    if params is None:
        params = init_params(g.x.shape[1], g.n, cfg, init_rng)
    params = {k: np.array(v, dtype=float) for k, v in params.items()}
    frozen = {k for k in params if cfg.fixed_filtration and k.startswith("phi.")}
    hist = TrainHistory(seed)
    m1 = {k: np.zeros_like(v) for k, v in params.items()}
    m2 = {k: np.zeros_like(v) for k, v in params.items()}

    def record_eval(step):
        _, dist = _evaluate(g, params, cfg, tcfg, eval_seed, cut)
        hist.epochs.append(step)
        hist.wasserstein.append(dist)

    record_eval(0)
    for step in range(1, steps + 1):
        tape = Tape()
        pv = {k: tape.param(v, k) for k, v in params.items()}
        res = tip_forward(g, pv, cfg, sample_rng, tcfg)
        loss = objective(res, cfg)
        value = float(loss.value)
        if not np.isfinite(value):
            raise TrainingError(step)
        grads = tape.backward(loss)
        hist.loss.append(value)
        for k, grad in grads.items():
            if k in frozen:
                continue
            if not np.all(np.isfinite(grad)):
                raise TrainingError(step, f"non-finite gradient for {k} at step {step}")
            if optimizer == "sgd":
                params[k] -= lr * grad
            else:
                m1[k] = 0.9 * m1[k] + 0.1 * grad
                m2[k] = 0.999 * m2[k] + 0.001 * grad * grad
                mhat = m1[k] / (1 - 0.9**step)
                vhat = m2[k] / (1 - 0.999**step)
                params[k] -= lr * mhat / (np.sqrt(vhat) + 1e-8)
        if step % eval_every == 0 or step == steps:
            record_eval(step)
    return params, hist


def topo_loss_at(g: Graph, params: dict, cfg: PoolingConfig, seed: int, tcfg: TransformConfig | None = None) -> float:
    """Topological loss of ``params`` on ``g`` with a Gumbel sample drawn from ``seed``."""
    g = prepare_features(g)
    cfg = replace(cfg, no_topo_loss=False)
    res = tip_forward(g, params, cfg, np.random.default_rng(seed), tcfg or TransformConfig.default(1.0))
    return _topo_value(res)


def write_history_csv(path, hist: TrainHistory) -> None:
    """Rows ``step,loss,wasserstein``; a field is blank when not recorded at that step."""
    dist = dict(zip(hist.epochs, hist.wasserstein))
    steps = sorted(set(range(1, len(hist.loss) + 1)) | set(hist.epochs))
    lines = ["step,loss,wasserstein"]
    for s in steps:
        loss = repr(hist.loss[s - 1]) if 1 <= s <= len(hist.loss) else ""
        w = repr(dist[s]) if s in dist else ""
        lines.append(f"{s},{loss},{w}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_config(path, values: dict) -> None:
    Path(path).write_text("".join(f"{k}={values[k]}\n" for k in sorted(values)))


def read_config(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k.strip()] = v.strip()
    return out
