"""Command-line entry point: ``topopool <subcommand> [flags]``.

Exit codes: 0 on success, 2 on configuration errors (bad flags, unreadable or
malformed input, invalid parameters), 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import export
from .errors import ParameterError, ParseError
from .filtration import forman_curvature
from .graph import Graph, generate, load_graphs, save_graphs
from .persistence import (
    compute_persistence,
    constant_filtration,
    edge_filtration,
    edge_induced_filtration,
    write_diagram_csv,
)
from .pooling import ABLATIONS, PoolingConfig, init_params, tip_forward
from .training import (
    coarse_graph,
    prepare_features,
    train_topo_similarity,
    write_config,
    write_history_csv,
)
from .wl import pair_suite, ph_distinguish

GRAPH_KINDS = ("ring", "path", "complete", "grid2d", "torus", "random", "cycles", "two_cycles")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _common(p, out_required=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=out_required)


def _graph_source(p):
    p.add_argument("--in", dest="inp", type=Path, help="graph JSON file")
    p.add_argument("--kind", choices=GRAPH_KINDS, help="generate the input instead of reading it")
    p.add_argument("--n", type=int, default=64)


def _pool_flags(p):
    p.add_argument("--method", choices=("diffpool", "mincut", "dmon"), default="diffpool")
    p.add_argument("--ratio", type=float, default=0.25)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--ablate", default="", help="comma list of toggles: " + ",".join(ABLATIONS))
    p.add_argument("--features", type=int, default=10, help="Laplacian eigenvector features when the input has none")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="topopool", description="Topology-preserving graph pooling toolkit.", allow_abbrev=False)
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a generated graph or dataset as JSON")
    _common(p)
    p.add_argument("--kind", choices=GRAPH_KINDS, required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--p", type=float, default=0.3, help="edge probability for --kind random")
    p.add_argument("--count", type=int, default=1000, help="dataset size for cycles/two_cycles")
    p.add_argument("--features", type=int, help="attach this many Laplacian eigenvectors")

    p = sub.add_parser("ph", help="persistence diagram CSV of each input graph")
    _common(p)
    _graph_source(p)
    p.add_argument("--filtration", choices=("constant", "degree", "forman"), default="constant")
    p.add_argument("--dims", default="1", help="comma list of dimensions to write (0, 1)")
    p.add_argument("--svg", type=Path, help="also write a diagram scatter")

    p = sub.add_parser("pool", help="one TIP forward pass; writes coarsened graph JSON and DOT")
    _common(p)
    _graph_source(p)
    _pool_flags(p)
    p.add_argument("--cut", type=float, default=export.DEFAULT_CUT)
    p.add_argument("--dot", type=Path, help="DOT path (default: --out with .dot suffix)")

    for name, help_ in (("train-topo", "train pooling to preserve topology; writes history CSV"),
                        ("eval-topo", "untrained base pooling vs trained TIP, Wasserstein report"),
                        ("ablate", "train every ablation variant; writes a comparison CSV")):
        p = sub.add_parser(name, help=help_)
        _common(p)
        _graph_source(p)
        _pool_flags(p)
        p.add_argument("--steps", type=int, default=300)
        p.add_argument("--lr", type=float, default=0.5)
        p.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
        p.add_argument("--eval-every", type=int, default=10)
        p.add_argument("--workers", type=int, default=1)
        if name == "train-topo":
            p.add_argument("--config-out", type=Path, help="flat key=value record of the run")
        else:
            p.add_argument("--seeds", type=int, default=5, help="seeds per graph (seed, seed+1, ...)")
        if name == "ablate":
            p.add_argument("--variants", default="TIP,NR,NP,NL,0,F,W",
                           help="comma list; each item is TIP or a '+'-joined toggle set")

    p = sub.add_parser("expressivity", help="WL vs persistence separation report over a pair suite")
    _common(p)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--divergent-fraction", type=float, default=0.5)
    return parser


# --- helpers ---------------------------------------------------------------------


def _input_graphs(args) -> list[Graph]:
    if args.inp is not None and args.kind is not None:
        raise ParameterError("give either --in or --kind, not both")
    if args.inp is not None:
        try:
            return load_graphs(args.inp)
        except OSError as exc:
            raise ParameterError(f"cannot read {args.inp}: {exc.strerror}") from None
    if args.kind is None:
        raise ParameterError("an input is required: --in FILE or --kind KIND")
    return _as_list(generate(args.kind, n=args.n, seed=args.seed))


def _as_list(obj) -> list[Graph]:
    if isinstance(obj, Graph):
        return [obj]
    return list(getattr(obj, "graphs", obj))


def _config(args) -> PoolingConfig:
    toggles = [t for t in args.ablate.split(",") if t.strip()]
    cfg = PoolingConfig(method=args.method, pool_ratio=args.ratio, num_layers=args.layers,
                        tau=args.tau, seed=args.seed)
    return cfg.with_ablations([t.strip() for t in toggles])


def _base_config(cfg: PoolingConfig) -> PoolingConfig:
    return replace(cfg, no_resample=True, no_injection=True, no_topo_loss=True,
                   wasserstein_loss=False, use_dim0=False)


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _fmt(x: float) -> str:
    return repr(float(x))


def _map(fn, items, workers: int):
    if workers < 1:
        raise ParameterError("--workers must be >= 1")
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- subcommands -----------------------------------------------------------------


def cmd_gen(args) -> None:
    params = {"seed": args.seed, "p": args.p}
    for key in ("n", "rows", "cols", "features"):
        if getattr(args, key) is not None:
            params[key] = getattr(args, key)
    if args.kind in ("cycles", "two_cycles"):
        params["count"] = args.count
    graphs = generate(args.kind, **params)
    out = graphs if isinstance(graphs, Graph) else _as_list(graphs)
    save_graphs(args.out, out)


def _filtration(g: Graph, kind: str):
    if kind == "constant":
        return constant_filtration(g)
    if kind == "degree":
        return edge_filtration(g, g.degrees().astype(float))
    return edge_induced_filtration(g, forman_curvature(g))


def cmd_ph(args) -> None:
    dims = sorted({int(d) for d in args.dims.split(",") if d.strip()})
    if not dims or any(d not in (0, 1) for d in dims):
        raise ParameterError("--dims must list 0 and/or 1")
    graphs = _input_graphs(args)
    diagrams = []
    for g in graphs:
        d0, d1 = compute_persistence(g, _filtration(g, args.filtration))
        diagrams += [d for d in (d0, d1) if d.dim in dims]
    write_diagram_csv(args.out, *diagrams)
    if args.svg is not None:
        export.write_svg(args.svg, diagrams)


def cmd_pool(args) -> None:
    cfg = _config(args)
    g = prepare_features(_input_graphs(args)[0], args.features)
    rng_init, rng_sample = (np.random.default_rng(s) for s in np.random.SeedSequence(args.seed).spawn(2))
    params = init_params(g.x.shape[1], g.n, cfg, rng_init)
    res = tip_forward(g, params, cfg, rng_sample)
    out = res.output
    coarse = coarse_graph(out.A_out.value).with_features(out.X_pool.value)
    save_graphs(args.out, coarse)
    dot = args.dot if args.dot is not None else Path(args.out).with_suffix(".dot")
    export.write_dot(dot, coarse, args.cut)


def cmd_train(args) -> None:
    cfg = _config(args)
    g = prepare_features(_input_graphs(args)[0], args.features)
    _, hist = train_topo_similarity(g, cfg, steps=args.steps, lr=args.lr, seed=args.seed,
                                    eval_every=args.eval_every, optimizer=args.optimizer)
    write_history_csv(args.out, hist)
    if args.config_out is not None:
        record = {"subcommand": "train-topo", "steps": args.steps, "lr": args.lr,
                  "optimizer": args.optimizer, "eval_every": args.eval_every,
                  "input": args.inp if args.inp is not None else f"{args.kind}:{args.n}"}
        record.update(cfg.as_dict())
        write_config(args.config_out, record)


def _final_distance(g, cfg, args, seed, steps):
    _, hist = train_topo_similarity(g, cfg, steps=steps, lr=args.lr, seed=seed,
                                    eval_every=max(steps, 1), optimizer=args.optimizer)
    return hist.wasserstein[-1]


def cmd_eval(args) -> None:
    cfg = _config(args)
    graphs = [prepare_features(g, args.features) for g in _input_graphs(args)]
    jobs = [(i, s) for i in range(len(graphs)) for s in range(args.seed, args.seed + args.seeds)]

    def run(job):
        i, s = job
        base = _final_distance(graphs[i], _base_config(cfg), args, s, 0)
        tip = _final_distance(graphs[i], cfg, args, s, args.steps)
        return i, s, base, tip

    rows = [(i, s, graphs[i].n, graphs[i].m, _fmt(b), _fmt(t)) for i, s, b, t in _map(run, jobs, args.workers)]
    _write_csv(args.out, ["graph", "seed", "n", "m", "base_wasserstein", "tip_wasserstein"], rows)


def _variant(cfg: PoolingConfig, spec: str) -> PoolingConfig:
    if spec == "TIP":
        return cfg
    return cfg.with_ablations([t for t in spec.split("+") if t])


def cmd_ablate(args) -> None:
    cfg = _config(args)
    names = [v.strip() for v in args.variants.split(",") if v.strip()]
    variants = [(v, _variant(cfg, v)) for v in names]
    graphs = [prepare_features(g, args.features) for g in _input_graphs(args)]
    jobs = [(v, c, i, s) for v, c in variants for i in range(len(graphs))
            for s in range(args.seed, args.seed + args.seeds)]

    def run(job):
        v, c, i, s = job
        _, hist = train_topo_similarity(graphs[i], c, steps=args.steps, lr=args.lr, seed=s,
                                        eval_every=max(args.steps, 1), optimizer=args.optimizer)
        loss = hist.loss[-1] if hist.loss else float("nan")
        return v, i, s, loss, hist.wasserstein[-1]

    rows = [(v, i, s, _fmt(l), _fmt(w)) for v, i, s, l, w in _map(run, jobs, args.workers)]
    _write_csv(args.out, ["variant", "graph", "seed", "final_loss", "wasserstein"], rows)


def cmd_expressivity(args) -> None:
    if not 0.0 <= args.divergent_fraction <= 1.0:
        raise ParameterError("--divergent-fraction must lie in [0, 1]")
    rows = []
    for i, case in enumerate(pair_suite(args.count, args.seed, args.divergent_fraction)):
        const = ph_distinguish(case.g1, case.g2, "constant_filtration")
        wl_f = ph_distinguish(case.g1, case.g2, "wl_filtration").ph_distinguishes if const.wl_distinguishes else ""
        rows.append((i, case.kind, case.g1.n, int(const.wl_distinguishes),
                     "" if const.divergence_iter is None else const.divergence_iter,
                     "" if wl_f == "" else int(wl_f), int(const.ph_distinguishes)))
    _write_csv(args.out, ["pair", "kind", "n", "wl_distinguishes", "divergence_iter",
                          "ph_wl_filtration", "ph_constant_filtration"], rows)


COMMANDS = {
    "gen": cmd_gen,
    "ph": cmd_ph,
    "pool": cmd_pool,
    "train-topo": cmd_train,
    "eval-topo": cmd_eval,
    "ablate": cmd_ablate,
    "expressivity": cmd_expressivity,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        COMMANDS[args.cmd](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (ParameterError, ParseError) as exc:
        print(f"topopool: configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure of a well-formed request
        print(f"topopool: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
