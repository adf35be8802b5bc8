"""Dense graph pooling (DiffPool, MinCutPool, DMoN) with resampling and persistence injection.

Every operator here works on :class:`~topopool.autodiff.Var` values so that the
same code serves plain evaluation and gradient computation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .autodiff import (
    Var,
    as_var,
    concat,
    frobenius,
    maximum,
    scatter_symmetric,
    softmax,
    straight_through,
    trace,
)
from .errors import ParameterError
from .filtration import MlpFiltration, init_mlp_filtration, mlp_filtration
from .graph import Graph
from .metrics import TransformConfig, stats_vector, vectorize_points
from .persistence import CYCLE, MERGE, pair_edges

__all__ = [
    "METHODS",
    "ABLATIONS",
    "PoolingConfig",
    "PoolingLayerOutput",
    "ForwardResult",
    "LayerDiagram",
    "cluster_counts",
    "init_params",
    "message_pass",
    "assignment_logits",
    "assignment",
    "coarsen",
    "aux_losses",
    "degree_normalize",
    "minmax_normalize",
    "sample_binary_concrete",
    "resample",
    "layer_diagram",
    "persistence_injection",
    "tip_forward",
    "base_pool_forward",
]

METHODS = ("diffpool", "mincut", "dmon")

# short ablation names -> config fields
ABLATIONS = {
    "NR": "no_resample",
    "NP": "no_injection",
    "NL": "no_topo_loss",
    "0": "use_dim0",
    "F": "fixed_filtration",
    "W": "wasserstein_loss",
}

_EPS = 1e-15


@dataclass(frozen=True)
class PoolingConfig:
    method: str = "diffpool"
    pool_ratio: float = 0.25
    num_layers: int = 1
    tau: float = 1.0
    hard: bool = True
    straight_through: bool = True
    no_resample: bool = False
    no_injection: bool = False
    no_topo_loss: bool = False
    use_dim0: bool = False
    fixed_filtration: bool = False
    wasserstein_loss: bool = False
    retain_self_loops: bool = False
    gnn_depth: int = 1
    phi_hidden: int = 16
    cluster_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown pooling method {self.method!r}")
        if not 0.0 < self.pool_ratio <= 1.0:
            raise ParameterError("pool_ratio must lie in (0, 1]")
        if self.tau <= 0:
            raise ParameterError("tau must be positive")
        if self.num_layers < 1 or self.gnn_depth < 1:
            raise ParameterError("num_layers and gnn_depth must be >= 1")

    def with_ablations(self, names) -> "PoolingConfig":
        """Switch on ablation toggles given by short name (``NR``) or field name."""
        changes = {}
        for name in names:
            key = ABLATIONS.get(name, name)
            if key not in ABLATIONS.values():
                raise ParameterError(f"unknown ablation {name!r}")
            changes[key] = True
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def cluster_counts(n: int, cfg: PoolingConfig) -> list[int]:
    counts, cur = [], n
    for _ in range(cfg.num_layers):
        cur = max(1, _round_half_up(cfg.pool_ratio * cur))
        if cur < 1:
            raise ParameterError("cluster count reached 0")
        counts.append(cur)
    return counts


def _glorot(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, (fan_in, fan_out))


def init_params(d: int, n: int, cfg: PoolingConfig, rng) -> dict[str, np.ndarray]:
    """Parameters for ``cfg.num_layers`` pooling layers plus the filtration MLP.

    Keys: ``l{i}.embed.{k}.W/b`` (node embedding stack, width ``d``),
    ``l{i}.assign.{k}.W/b`` (DiffPool's separate assignment stack) or
    ``l{i}.head.W/b`` (MinCut/DMoN head on the shared embedding), and ``phi.*``.
    """
    if n < 1:
        raise ParameterError("empty graph")
    params: dict[str, np.ndarray] = {}
    for i, c in enumerate(cluster_counts(n, cfg)):
        for k in range(cfg.gnn_depth):
            params[f"l{i}.embed.{k}.W"] = _glorot(rng, d, d)
            params[f"l{i}.embed.{k}.b"] = np.zeros(d)
        if cfg.method == "diffpool":
            for k in range(cfg.gnn_depth):
                out = c if k == cfg.gnn_depth - 1 else d
                params[f"l{i}.assign.{k}.W"] = _glorot(rng, d, out)
                params[f"l{i}.assign.{k}.b"] = np.zeros(out)
        else:
            params[f"l{i}.head.W"] = _glorot(rng, d, c)
            params[f"l{i}.head.b"] = np.zeros(c)
    params.update(init_mlp_filtration(d, rng, cfg.phi_hidden).to_params("phi"))
    return params


def _stack(params, prefix):
    layers, k = [], 0
    while f"{prefix}.{k}.W" in params:
        layers.append((params[f"{prefix}.{k}.W"], params[f"{prefix}.{k}.b"]))
        k += 1
    return layers


def _activate(h: Var, activation: str) -> Var:
    if activation == "tanh":
        return h.tanh()
    if activation == "relu":
        return h.relu()
    if activation == "linear":
        return h
    raise ParameterError(f"unknown activation {activation!r}")


def message_pass(A, X, layers, activation: str = "tanh", final_activation: bool = True) -> Var:
    """Stacked ``act(A_hat X W + b)`` with ``A_hat = D^-1 (A + I)`` (row-mean aggregation)."""
    A, h = as_var(A), as_var(X)
    n = A.shape[0]
    if A.shape != (n, n) or h.shape[0] != n:
        raise ParameterError(f"adjacency {A.shape} and features {h.shape} do not match")
    A_loop = A + np.eye(n)
    A_hat = A_loop / A_loop.sum(axis=1, keepdims=True)
    for k, (W, b) in enumerate(layers):
        W = as_var(W)
        if W.shape[0] != h.shape[1]:
            raise ParameterError(f"layer {k}: weight {W.shape} does not fit input width {h.shape[1]}")
        h = A_hat @ h @ W + as_var(b)
        if k < len(layers) - 1 or final_activation:
            h = _activate(h, activation)
    return h


def assignment_logits(A, X, params, layer: int, method: str, embedding: Var | None = None) -> Var:
    if method == "diffpool":
        return message_pass(A, X, _stack(params, f"l{layer}.assign"), final_activation=False)
    if embedding is None:
        embedding = message_pass(A, X, _stack(params, f"l{layer}.embed"))
    return embedding @ as_var(params[f"l{layer}.head.W"]) + as_var(params[f"l{layer}.head.b"])


def assignment(logits) -> Var:
    """Row-wise softmax of cluster logits."""
    return softmax(as_var(logits), axis=1)


def coarsen(A, X_embed, S):
    """``(S^T A S, S^T X_embed)``."""
    A, X_embed, S = as_var(A), as_var(X_embed), as_var(S)
    St = S.T
    return St @ A @ S, St @ X_embed


def aux_losses(method: str, A, S):
    """Unsupervised ``(L_r, L_c)`` of the base pooling method."""
    A, S = as_var(A), as_var(S)
    n, C = S.shape
    if method == "diffpool":
        L_r = frobenius(A - S @ S.T)
        logS = (S + _EPS).log()
        L_c = -(S * logS).sum() * (1.0 / n)
        return L_r, L_c
    if method not in ("mincut", "dmon"):
        raise ParameterError(f"unknown pooling method {method!r}")
    StS = S.T @ S
    ortho = frobenius(StS / (frobenius(StS) + _EPS) - np.eye(C) / np.sqrt(C))
    deg = A.sum(axis=1)
    if method == "mincut":
        num = trace(S.T @ A @ S)
        den = trace(S.T @ (S * deg.reshape(-1, 1)))
        return -(num / (den + _EPS)), ortho
    two_m = deg.sum() + _EPS
    d_col = deg.reshape(-1, 1)
    B = A - (d_col @ d_col.T) / two_m
    L_r = -(trace(S.T @ B @ S) / two_m)
    collapse = frobenius(S.sum(axis=0)) * (np.sqrt(C) / n) - 1.0
    return L_r, ortho + collapse


def degree_normalize(A) -> Var:
    """Zero the diagonal, then ``D^-1/2 A D^-1/2`` (MinCut/DMoN output normalisation)."""
    A = as_var(A)
    n = A.shape[0]
    A = A * (1.0 - np.eye(n))
    d = (A.sum(axis=1) + _EPS).sqrt().reshape(-1, 1)
    return A / d / d.T


def minmax_normalize(values) -> Var:
    """``(a - min) / (max - min)``; a constant input maps to all zeros."""
    values = as_var(values)
    if values.value.size == 0:
        return values
    lo, hi = values.amin(), values.amax()
    if float(hi.value) == float(lo.value):
        return Var(np.zeros_like(values.value))
    return (values - lo) / (hi - lo)


def sample_binary_concrete(p, tau: float, gumbel):
    """Relaxed Bernoulli draws.

    ``gumbel`` has shape ``(2, *p.shape)``; returns ``(soft, hard)`` where
    ``soft = sigmoid((log p - log(1-p) + g0 - g1) / tau)`` and ``hard = soft >= 0.5``.
    Entries with ``p`` exactly 0 or 1 are deterministic.
    """
    p = as_var(p)
    pv = p.value
    interior = (pv > 0.0) & (pv < 1.0)
    p_safe = p * interior + 0.5 * (~interior)
    logit = p_safe.log() - (1.0 - p_safe).log()
    soft = ((logit + (gumbel[0] - gumbel[1])) * (1.0 / tau)).sigmoid()
    hard = np.where(interior, soft.value >= 0.5, pv >= 1.0).astype(float)
    return soft, hard, interior


def resample(A_pool, tau: float, rng, hard: bool = True, straight: bool = True) -> Var:
    """Binary symmetric adjacency with unit diagonal sampled from min-max-normalised ``A_pool``.

    Only strict upper-triangle entries are normalised and sampled. With ``hard``,
    the forward value is the 0/1 sample; ``straight`` passes gradients through it
    as if it were the relaxed sample, otherwise it is treated as a constant.
    """
    A_pool = as_var(A_pool)
    n = A_pool.shape[0]
    iu, ju = np.triu_indices(n, 1)
    gumbel = rng.gumbel(size=(2, len(iu)))
    if len(iu) == 0:
        return Var(np.eye(n))
    p = minmax_normalize(A_pool[iu, ju])
    soft, bits, interior = sample_binary_concrete(p, tau, gumbel)
    if A_pool.tape is not None:
        A_pool.tape.note_choice(bits)
    if hard:
        fixed = Var(bits * ~interior)
        if straight:
            sampled = straight_through(bits, soft) * interior + fixed
        else:
            sampled = Var(bits)
    else:
        sampled = soft * interior + Var(bits * ~interior)
    return scatter_symmetric(sampled, iu, ju, n) + np.eye(n)


@dataclass
class LayerDiagram:
    """Augmented 1-dim diagram of one graph under ``sigmoid(phi(X))`` as tape expressions."""

    src: np.ndarray
    dst: np.ndarray
    vertex_values: Var
    births: Var
    deaths: Var
    cycle: np.ndarray
    d0_births: Var | None = None
    d0_deaths: Var | None = None


def _support(A: np.ndarray, include_diagonal=True):
    n = A.shape[0]
    iu, ju = np.triu_indices(n, 0 if include_diagonal else 1)
    keep = A[iu, ju] != 0
    return iu[keep], ju[keep]


def layer_diagram(src, dst, vertex_values, essential_death: float = 1.0, with_dim0: bool = False) -> LayerDiagram:
    fv = as_var(vertex_values)
    n = fv.shape[0]
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if len(src):
        fe = maximum(fv[src], fv[dst])
    else:
        fe = Var(np.zeros(0))
    order, kind, dying = pair_edges(n, src, dst, fe.value, fv.value)
    if fv.tape is not None:
        fv.tape.note_choice(order, kind, dying)
    cycle = kind == CYCLE
    deaths = fe * (~cycle) + essential_death * cycle
    out = LayerDiagram(src, dst, fv, fe, deaths, cycle)
    if with_dim0:
        merges = np.flatnonzero(kind == MERGE)
        killer = np.full(n, -1, dtype=np.int64)
        killer[dying[merges]] = merges
        alive = killer < 0
        if len(merges):
            gathered = fe[np.maximum(killer, 0)]
            out.d0_deaths = gathered * (~alive) + essential_death * alive
        else:
            out.d0_deaths = Var(np.full(n, essential_death))
        out.d0_births = fv
    return out


def persistence_injection(A_resampled, X, phi: MlpFiltration, retain_self_loops: bool = False,
                          diagram: LayerDiagram | None = None) -> Var:
    """Reweight every edge by the persistence of its tuple in the augmented 1-dim diagram.

    Persistence is computed with never-dying cycles capped at death 1, so weights stay in
    ``[0, 1]``; merging edges and self-loops get weight 0.
    """
    A = as_var(A_resampled)
    n = A.shape[0]
    if diagram is None:
        src, dst = _support(A.value)
        diagram = layer_diagram(src, dst, mlp_filtration(X, phi), 1.0)
    pers = (diagram.deaths - diagram.births) * diagram.cycle
    weights = scatter_symmetric(pers, diagram.src, diagram.dst, n)
    out = A * weights
    if retain_self_loops:
        out = out * (1.0 - np.eye(n)) + np.eye(n)
    return out


@dataclass
class PoolingLayerOutput:
    S: Var
    A_pool: Var
    X_pool: Var
    A_resampled: Var | None
    A_injected: Var | None
    A_out: Var
    L_r: Var
    L_c: Var
    diagram: LayerDiagram | None
    stats: Var | None


@dataclass
class ForwardResult:
    layers: list[PoolingLayerOutput]
    diagram0: LayerDiagram | None
    stats0: Var | None
    stats: list[Var] = field(default_factory=list)

    @property
    def output(self) -> PoolingLayerOutput:
        return self.layers[-1]


def _diagram_stats(diagram: LayerDiagram, tcfg: TransformConfig, use_dim0: bool, weights=None) -> Var:
    vec = stats_vector(vectorize_points(diagram.births, diagram.deaths, tcfg), weights)
    if use_dim0:
        vec0 = stats_vector(vectorize_points(diagram.d0_births, diagram.d0_deaths, tcfg))
        vec = concat([vec, vec0])
    return vec


def _embed_and_assign(A, X, params, layer, method):
    H = message_pass(A, X, _stack(params, f"l{layer}.embed"))
    logits = assignment_logits(A, X, params, layer, method, embedding=H)
    return H, assignment(logits)


def tip_forward(g: Graph, params: dict, cfg: PoolingConfig, rng, tcfg: TransformConfig | None = None,
                X=None) -> ForwardResult:
    """Stack of pooling layers with resampling, persistence injection and diagram statistics.

    ``params`` values may be arrays or tape variables. ``X`` overrides ``g.x``.
    Ablation toggles in ``cfg`` skip the corresponding step.
    """
    tcfg = tcfg or TransformConfig.default(1.0)
    phi = MlpFiltration.from_params(params)
    X0 = as_var(g.x if X is None else X)
    A = as_var(g.adjacency())
    need_stats = not cfg.no_topo_loss or cfg.wasserstein_loss

    diagram0 = stats0 = None
    if need_stats:
        diagram0 = layer_diagram(g.src, g.dst, mlp_filtration(X0, phi), 1.0, cfg.use_dim0)
        stats0 = _diagram_stats(diagram0, tcfg, cfg.use_dim0)

    layers = []
    A_prev, X_prev = A, X0
    for layer in range(cfg.num_layers):
        H, S = _embed_and_assign(A_prev, X_prev, params, layer, cfg.method)
        if S.shape[1] < 1:
            raise ParameterError("cluster count reached 0")
        A_pool, X_pool = coarsen(A_prev, H, S)
        L_r, L_c = aux_losses(cfg.method, A_prev, S)
        A_norm = A_pool if cfg.method == "diffpool" else degree_normalize(A_pool)

        A_res = A_norm if cfg.no_resample else resample(A_norm, cfg.tau, rng, cfg.hard, cfg.straight_through)

        diagram = stats = A_inj = None
        if need_stats or not cfg.no_injection:
            src, dst = _support(A_res.value)
            diagram = layer_diagram(src, dst, mlp_filtration(X_pool, phi), 1.0, cfg.use_dim0)
            if need_stats:
                # tuples carry their edge's sampled value as multiplicity: exactly 1 in the
                # forward pass of hard sampling, and the route for straight-through gradients
                mult = None if cfg.no_resample or not len(src) else A_res[src, dst]
                stats = _diagram_stats(diagram, tcfg, cfg.use_dim0, mult)
        if cfg.no_injection:
            A_out = A_res
        else:
            A_inj = persistence_injection(A_res, X_pool, phi, cfg.retain_self_loops, diagram)
            A_out = A_inj
        layers.append(PoolingLayerOutput(
            S, A_pool, X_pool, None if cfg.no_resample else A_res, A_inj, A_out, L_r, L_c, diagram, stats
        ))
        A_prev, X_prev = A_out, X_pool
    return ForwardResult(layers, diagram0, stats0, [l.stats for l in layers if l.stats is not None])


def base_pool_forward(g: Graph, params: dict, cfg: PoolingConfig, X=None) -> list[PoolingLayerOutput]:
    """The unmodified dense pooling method: no resampling, no injection, no diagrams."""
    A = as_var(g.adjacency())
    Xc = as_var(g.x if X is None else X)
    out = []
    for layer in range(cfg.num_layers):
        H = message_pass(A, Xc, _stack(params, f"l{layer}.embed"))
        S = assignment(assignment_logits(A, Xc, params, layer, cfg.method, embedding=H))
        A_pool, X_pool = coarsen(A, H, S)
        L_r, L_c = aux_losses(cfg.method, A, S)
        A_next = A_pool if cfg.method == "diffpool" else degree_normalize(A_pool)
        out.append(PoolingLayerOutput(S, A_pool, X_pool, None, None, A_next, L_r, L_c, None, None))
        A, Xc = A_next, X_pool
    return out
