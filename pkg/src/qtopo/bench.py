"""Benchmark harness: square-grid baseline against a trained tailored topology.

Both sides of a row are measured through :func:`measure`, which takes a single
:class:`Protocol`; the baseline and the tailored graph therefore cannot be
routed with different options or seed sets.
"""

from __future__ import annotations

import csv
import json
import math
import re
import statistics
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .circuit import Circuit, generate_random_circuit, load_qasm, logical_depth
from .env import EnvConfig, TopologyEnv
from .metrics import idle_ratio
from .ppo import TrainConfig, train
from .router import RouterOptions, evaluate_topology
from .topology import TopologyGraph, make_grid, square_grid_for


@dataclass(frozen=True)
class Protocol:
    """Router options and seeds shared by every measurement in a bench run."""

    seeds: tuple[int, ...] = (0, 1, 2)
    router: RouterOptions = field(default_factory=RouterOptions)
    objective: str = "depth"


@dataclass
class Measurement:
    depth: float
    total_gates: float
    active_qubits: float
    idle: float


def measure(c: Circuit, g: TopologyGraph, protocol: Protocol) -> Measurement:
    ev = evaluate_topology(c, g, protocol.seeds, protocol.router)
    idle = idle_ratio(ev.total_gates, ev.active_qubits, ev.depth)
    return Measurement(ev.depth, ev.total_gates, ev.active_qubits, idle)


def reduction_pct(baseline: float, tailored: float) -> float:
    if baseline <= 0:
        raise ValueError("baseline depth must be positive")
    return (baseline - tailored) / baseline * 100.0


@dataclass
class BenchRow:
    circuit: str
    qubits: int
    gates_in: int
    logical_depth: int
    baseline_topology: str = ""
    baseline_depth: float = math.nan
    baseline_total_gates: float = math.nan
    baseline_active_qubits: float = math.nan
    baseline_idle: float = math.nan
    tailored_topology: str = ""
    tailored_depth: float = math.nan
    tailored_total_gates: float = math.nan
    tailored_active_qubits: float = math.nan
    tailored_idle: float = math.nan
    reduction_pct: float = math.nan
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def check(self, tol: float = 1e-9) -> None:
        """Recompute the derived columns from the same row and assert they agree."""
        if not self.ok:
            return
        red = reduction_pct(self.baseline_depth, self.tailored_depth)
        assert abs(red - self.reduction_pct) <= tol, (red, self.reduction_pct)
        for side in ("baseline", "tailored"):
            idle = idle_ratio(
                getattr(self, f"{side}_total_gates"),
                getattr(self, f"{side}_active_qubits"),
                getattr(self, f"{side}_depth"),
            )
            assert abs(idle - getattr(self, f"{side}_idle")) <= tol, (side, idle)


ROW_FIELDS = [f.name for f in fields(BenchRow)]


@dataclass
class BenchReport:
    rows: list[BenchRow]

    def ok_rows(self) -> list[BenchRow]:
        return [r for r in self.rows if r.ok]

    def summary(self) -> dict:
        ok = self.ok_rows()
        reds = [r.reduction_pct for r in ok]
        wins = sum(r.tailored_depth <= r.baseline_depth for r in ok)
        return {
            "rows": len(self.rows),
            "failed": len(self.rows) - len(ok),
            "tailored_le_baseline": wins,
            "win_fraction": wins / len(ok) if ok else math.nan,
            "median_reduction_pct": statistics.median(reds) if reds else math.nan,
            "mean_reduction_pct": statistics.fmean(reds) if reds else math.nan,
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=ROW_FIELDS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(v) for k, v in asdict(r).items()})

    def to_json(self) -> str:
        payload = {"rows": [asdict(r) for r in self.rows], "summary": self.summary()}
        return json.dumps(payload, indent=2, sort_keys=True, default=_json_default)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _json_default(v):
    raise TypeError(f"not serializable: {type(v)}")


# -- circuit sources -------------------------------------------------------

_GEN_RE = re.compile(r"gen:(\d+)-(\d+):([0-9.]+):(\d+)(?::(\d+))?$")


def generated_suite(spec: str) -> list[Circuit]:
    """Parse ``gen:QMIN-QMAX:FACTOR:COUNT[:SEED]``.

    Circuit ``k`` has ``QMIN + k mod (QMAX-QMIN+1)`` qubits and seed ``SEED + k``.
    """
    m = _GEN_RE.match(spec)
    if not m:
        raise ValueError(f"bad generator spec {spec!r}; expected gen:QMIN-QMAX:FACTOR:COUNT[:SEED]")
    qmin, qmax, count = int(m[1]), int(m[2]), int(m[4])
    factor = float(m[3])
    base = int(m[5]) if m[5] is not None else 0
    if not 1 <= qmin <= qmax:
        raise ValueError(f"bad qubit range {qmin}-{qmax}")
    span = qmax - qmin + 1
    return [generate_random_circuit(qmin + k % span, factor, base + k) for k in range(count)]


def load_suite(source: str) -> list[Circuit]:
    if source.startswith("gen:"):
        return generated_suite(source)
    p = Path(source)
    if p.is_dir():
        return [load_qasm(f) for f in sorted(p.glob("*.qasm"))]
    return [load_qasm(p)]


# -- running ---------------------------------------------------------------

def baseline_graph(c: Circuit, grid: tuple[int, int] | None = None) -> TopologyGraph:
    rows, cols = grid if grid is not None else square_grid_for(c.num_qubits)
    if rows * cols < c.num_qubits:
        raise ValueError(f"grid {rows}x{cols} too small for {c.num_qubits} qubits")
    return make_grid(rows, cols)


def train_topology(c: Circuit, protocol: Protocol, cfg: TrainConfig, max_degree: int = 4):
    env_cfg = EnvConfig(
        c, max_degree=max_degree, eval_seeds=protocol.seeds, objective=protocol.objective,
        router=protocol.router, memoize=True,
    )
    return train(lambda: TopologyEnv(env_cfg), cfg)


def bench_circuit(
    c: Circuit, protocol: Protocol, cfg: TrainConfig, grid: tuple[int, int] | None = None,
    tailored: TopologyGraph | None = None,
) -> BenchRow:
    row = BenchRow(c.name, c.num_qubits, c.num_counted, logical_depth(c))
    try:
        base_g = baseline_graph(c, grid)
        rows, cols = grid if grid is not None else square_grid_for(c.num_qubits)
        row.baseline_topology = f"grid:{rows}x{cols}"
        b = measure(c, base_g, protocol)
        if tailored is None:
            tailored = train_topology(c, protocol, cfg).best_graph
        t = measure(c, tailored, protocol)
        row.tailored_topology = ";".join(f"{i}-{j}" for i, j in tailored.edges())
        row.baseline_depth, row.baseline_total_gates = b.depth, b.total_gates
        row.baseline_active_qubits, row.baseline_idle = b.active_qubits, b.idle
        row.tailored_depth, row.tailored_total_gates = t.depth, t.total_gates
        row.tailored_active_qubits, row.tailored_idle = t.active_qubits, t.idle
        row.reduction_pct = reduction_pct(b.depth, t.depth)
        row.check()
    except Exception as exc:  # one bad circuit must not sink the run
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def run_bench(
    circuits: list[Circuit], protocol: Protocol, cfg: TrainConfig,
    grid: tuple[int, int] | None = None, on_row=None,
) -> BenchReport:
    rows = []
    for c in circuits:
        row = bench_circuit(c, protocol, cfg, grid)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return BenchReport(rows)
