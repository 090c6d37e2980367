"""``qtopo`` command-line entry point.

Every command writes into an output directory (``--out``, else
``$QTOPO_OUT/<command>``, else ``./qtopo_out/<command>``) together with
``run_config.json``: the resolved options plus a hash of the package source.
Nothing written there contains a timestamp except ``timing.csv``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import Protocol, bench_circuit, load_suite, measure, BenchReport
from .circuit import Circuit, QasmError, generate_random_circuit, load_qasm, logical_depth
from .env import EnvConfig, TopologyEnv, write_trace_jsonl
from .layout import best_layout, count_crossings, circular_placement, sparse_params, write_coords_csv, write_svg
from .metrics import distribution_fidelity, idle_ratio, read_distribution
from .ppo import TrainConfig, TrainingError, save_checkpoint, train, write_metrics_csv
from .router import RouterOptions, RoutingError
from .topology import load_edge_list, parse_topology_spec, save_edge_list

EXIT_OK, EXIT_PARSE, EXIT_ROUTE, EXIT_TRAIN, EXIT_IO = 0, 2, 3, 4, 5
OUT_ENV = "QTOPO_OUT"


class ConfigError(ValueError):
    pass


# -- helpers ---------------------------------------------------------------

def source_hash() -> str:
    h = hashlib.sha256()
    for f in sorted(Path(__file__).parent.glob("*.py")):
        h.update(f.name.encode())
        h.update(f.read_bytes())
    return h.hexdigest()[:16]


def read_config_file(path: str | Path) -> dict[str, str]:
    """Plain ``key = value`` lines; ``#`` starts a comment. Keys may use dashes."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


def _int_tuple(s) -> tuple[int, ...]:
    if isinstance(s, tuple):
        return s
    return tuple(int(x) for x in str(s).replace(",", " ").split())


def _grid(s) -> tuple[int, int]:
    try:
        r, c = (int(x) for x in str(s).lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected RxC, got {s!r}") from None
    return r, c


def load_circuit(source: str) -> Circuit:
    """A QASM path or ``random:QUBITS:FACTOR:SEED``."""
    if source.startswith("random:"):
        try:
            _, q, f, s = source.split(":")
            return generate_random_circuit(int(q), float(f), int(s))
        except ValueError as exc:
            raise ConfigError(f"bad circuit spec {source!r}: {exc}") from None
    return load_qasm(source)


def output_dir(args) -> Path:
    if args.out:
        d = Path(args.out)
    else:
        d = Path(os.environ.get(OUT_ENV, "qtopo_out")) / args.command
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def snapshot(args, out: Path) -> None:
    cfg = {k: (list(v) if isinstance(v, tuple) else v)
           for k, v in sorted(vars(args).items()) if k not in ("func", "out", "config")}
    write_json(out / "run_config.json", {"options": cfg, "source_hash": source_hash()})


def protocol_from(args) -> Protocol:
    return Protocol(
        seeds=tuple(range(args.seed, args.seed + args.seeds)),
        router=RouterOptions(swap_as_one=args.swap_as_one),
        objective=getattr(args, "objective", "depth"),
    )


def train_config_from(args) -> TrainConfig:
    base = TrainConfig.full_scale() if args.full_scale else TrainConfig()
    over = {k: getattr(args, k) for k in (
        "iterations", "batch_size", "minibatch_size", "epochs", "lr", "hidden",
        "replay_threshold",
    ) if getattr(args, k) is not None}
    over["seed"] = args.seed
    return TrainConfig(**{**base.__dict__, **over})


# -- commands --------------------------------------------------------------

def cmd_route(args) -> int:
    c = load_circuit(args.circuit)
    g = parse_topology_spec(args.topology)
    if g.n < c.num_qubits:
        raise ConfigError(f"topology has {g.n} qubits, circuit needs {c.num_qubits}")
    m = measure(c, g, protocol_from(args))
    report = {
        "circuit": c.name, "qubits": c.num_qubits, "gates_in": c.num_counted,
        "logical_depth": logical_depth(c), "topology": args.topology,
        "topology_hash": g.topology_hash(), "seeds": list(protocol_from(args).seeds),
        "depth": m.depth, "total_gates": m.total_gates,
        "active_qubits": m.active_qubits, "idle": m.idle,
    }
    out = output_dir(args)
    snapshot(args, out)
    write_json(out / "route.json", report)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    c = load_circuit(args.circuit)
    if c.num_qubits > args.max_qubits:
        raise ConfigError(f"circuit has {c.num_qubits} qubits; limit is {args.max_qubits}")
    proto = protocol_from(args)
    env_cfg = EnvConfig(
        c, max_degree=args.max_degree, horizon=args.horizon, eval_seeds=proto.seeds,
        objective=args.objective, reward_sign=args.reward_sign, router=proto.router,
        memoize=args.memoize,
    )
    cfg = train_config_from(args)
    out = output_dir(args)
    snapshot(args, out)

    def progress(row):
        if not args.quiet:
            print(f"iter {row['iteration']:4d}  reward {row['mean_reward']:+.4f}  "
                  f"best {row['best_objective']:.2f}  evals {row['router_evals']}", file=sys.stderr)

    try:
        res = train(lambda: TopologyEnv(env_cfg), cfg, on_iteration=progress)
    except TrainingError as exc:
        if exc.minibatch is not None:
            np.savez(out / "failed_minibatch.npz", **exc.minibatch)
        raise
    env = res.env
    save_edge_list(res.best_graph, out / "best_topology.edges")
    write_metrics_csv(res.metrics, out / "metrics.csv", include_timing=False)
    with open(out / "timing.csv", "w") as fh:
        fh.write("iteration,sample_time,wall_time\n")
        for r in res.metrics:
            fh.write(f"{r['iteration']},{r['sample_time']!r},{r['wall_time']!r}\n")
    write_trace_jsonl(res.best_trace, out / "best_trace.jsonl")
    save_checkpoint(out / "checkpoint.npz", res)
    summary = {
        "circuit": c.name, "qubits": c.num_qubits, "objective": args.objective,
        "initial_objective": env.d0, "best_objective": res.best_objective,
        "best_depth": res.best_depth, "best_edges": [f"{i}-{j}" for i, j in res.best_graph.edges()],
        "router_evals": res.total_router_evals, "env_steps": sum(r["env_steps"] for r in res.metrics),
        "replay": res.memory.stats.as_dict() if res.memory is not None else None,
        "config_hash": cfg.config_hash(),
    }
    write_json(out / "summary.json", summary)
    print(json.dumps({k: summary[k] for k in ("initial_objective", "best_objective", "router_evals")}))
    return EXIT_OK


def cmd_layout(args) -> int:
    g = load_edge_list(args.topology)
    params = sparse_params(args.sparse)
    seeds = list(range(args.seed, args.seed + args.restarts))
    lay = best_layout(g, seeds, params)
    initial = [count_crossings(circular_placement(g, s, params), g) for s in seeds]
    out = output_dir(args)
    snapshot(args, out)
    write_svg(lay, out / "layout.svg")
    write_coords_csv(lay, out / "layout.csv")
    report = {
        "qubits": g.n, "edges": g.num_edges, "crossings": lay.crossing_count,
        "chosen_seed": lay.seed, "initial_crossings": initial,
        "mean_nn_distance": lay.mean_nearest_neighbor_distance(),
    }
    write_json(out / "layout.json", report)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    circuits = load_suite(args.source)
    proto = protocol_from(args)
    cfg = train_config_from(args)
    out = output_dir(args)
    snapshot(args, out)
    rows = []
    for c in circuits:
        row = bench_circuit(c, proto, cfg, args.grid)
        rows.append(row)
        if not args.quiet:
            status = row.error or f"{row.baseline_depth:.2f} -> {row.tailored_depth:.2f} ({row.reduction_pct:+.2f}%)"
            print(f"{row.circuit}: {status}", file=sys.stderr)
    report = BenchReport(rows)
    report.write_csv(out / "bench.csv")
    report.write_json(out / "bench.json")
    print(json.dumps(report.summary(), sort_keys=True))
    return EXIT_OK


def cmd_metrics(args) -> int:
    if args.kind == "idle":
        if None in (args.gates, args.qubits, args.depth):
            raise ConfigError("idle needs --gates, --qubits and --depth")
        value = idle_ratio(args.gates, args.qubits, args.depth)
    elif args.kind == "fidelity":
        if len(args.inputs) != 2:
            raise ConfigError("fidelity needs two distribution files")
        value = distribution_fidelity(read_distribution(args.inputs[0]), read_distribution(args.inputs[1]))
    else:
        if len(args.inputs) != 1:
            raise ConfigError("depth needs one circuit")
        value = logical_depth(load_circuit(args.inputs[0]))
    result = {"metric": args.kind, "value": value}
    out = output_dir(args)
    snapshot(args, out)
    write_json(out / "metrics.json", result)
    print(json.dumps(result))
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; explicit flags override it")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<command>)")
    p.add_argument("--seed", type=int, default=0, help="global seed")
    p.add_argument("--quiet", type=_bool, nargs="?", const=True, default=False)


def _add_routing(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seeds", type=int, default=3, help="number of routing seeds to average")
    p.add_argument("--swap-as-one", type=_bool, nargs="?", const=True, default=False,
                   help="count an inserted SWAP as one gate instead of three CX")


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iterations", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--minibatch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=_int_tuple)
    p.add_argument("--replay-threshold", type=int, help="uses per cached reward; 0 disables replay")
    p.add_argument("--full-scale", type=_bool, nargs="?", const=True, default=False,
                   help="start from the large-network, large-batch configuration")
    p.add_argument("--objective", choices=("depth", "gates"), default="depth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qtopo", description="Tailored qubit topology tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("route", help="route a circuit on a topology")
    p.add_argument("circuit", help="QASM file or random:QUBITS:FACTOR:SEED")
    p.add_argument("--topology", default="grid:10x10", help="grid:RxC, line:N or file:PATH")
    _add_common(p)
    _add_routing(p)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("train", help="learn a topology for one circuit")
    p.add_argument("circuit", help="QASM file or random:QUBITS:FACTOR:SEED")
    _add_common(p)
    _add_routing(p)
    _add_training(p)
    p.add_argument("--max-degree", type=int, default=4)
    p.add_argument("--max-qubits", type=int, default=20)
    p.add_argument("--horizon", type=int, help="steps per episode (default 2 x qubits)")
    p.add_argument("--reward-sign", choices=("negated", "verbatim"), default="negated")
    p.add_argument("--memoize", type=_bool, nargs="?", const=True, default=True,
                   help="cache routed results per edge set (saves time only)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("layout", help="place a topology on a grid")
    p.add_argument("topology", help="edge-list file")
    _add_common(p)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--sparse", type=float, default=1.0, help="repulsion multiplier")
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("bench", help="grid baseline vs trained topology over a suite")
    p.add_argument("source", help="directory of .qasm files, one file, or gen:QMIN-QMAX:FACTOR:COUNT[:SEED]")
    _add_common(p)
    _add_routing(p)
    _add_training(p)
    p.add_argument("--grid", type=_grid, help="fixed baseline grid RxC (default: smallest square)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", help="idle ratio, distribution fidelity or logical depth")
    p.add_argument("kind", choices=("idle", "fidelity", "depth"))
    _add_common(p)
    p.add_argument("inputs", nargs="*", help="distribution files (fidelity) or a circuit (depth)")
    p.add_argument("--gates", type=int)
    p.add_argument("--qubits", type=int)
    p.add_argument("--depth", type=int)
    p.set_defaults(func=cmd_metrics)
    parser.commands = dict(sub.choices)
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        file_cfg = read_config_file(args.config)
        sub = parser.commands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(file_cfg) - known)
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {unknown}")
        # Config values become defaults, so flags given on the command line still win.
        sub.set_defaults(**file_cfg)
        args = parser.parse_args(argv)
    return args


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except (QasmError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except RoutingError as exc:
        print(f"routing error: {exc}", file=sys.stderr)
        return EXIT_ROUTE
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
