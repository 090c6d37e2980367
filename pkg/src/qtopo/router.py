"""SWAP-insertion router used as the depth oracle.

A forward-only Sabre-style pass: logical qubit ``k`` starts on physical qubit
``k``, gates are executed as soon as their operands are adjacent, and when the
whole front layer is blocked the SWAP minimising a lookahead distance cost is
inserted. Ties are broken by a seeded PRNG, so depth depends on the seed.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import Circuit, GateKind, GateOp
from .topology import TopologyGraph, distance_matrix


class RoutingError(RuntimeError):
    pass


class UnroutableError(RoutingError):
    """A required interaction spans two disconnected components of the topology."""


@dataclass
class RouterOptions:
    extended_size: int = 20
    extended_weight: float = 0.5
    decay_delta: float = 0.001
    decay_reset: int = 5
    swap_as_one: bool = False

    @property
    def swap_weight(self) -> int:
        return 1 if self.swap_as_one else 3


class QubitMap:
    """Bijection from logical qubits onto a subset of physical qubits."""

    __slots__ = ("l2p", "p2l")

    def __init__(self, l2p: Sequence[int], num_physical: int):
        self.l2p = list(l2p)
        self.p2l = [-1] * num_physical
        for lq, pq in enumerate(self.l2p):
            if not 0 <= pq < num_physical or self.p2l[pq] != -1:
                raise ValueError(f"not a bijection: logical {lq} -> physical {pq}")
            self.p2l[pq] = lq

    @classmethod
    def sequential(cls, num_logical: int, num_physical: int) -> "QubitMap":
        if num_physical < num_logical:
            raise ValueError(
                f"topology has {num_physical} qubits but the circuit needs {num_logical}"
            )
        return cls(range(num_logical), num_physical)

    @property
    def num_physical(self) -> int:
        return len(self.p2l)

    def physical(self, logical: int) -> int:
        return self.l2p[logical]

    def logical(self, physical: int) -> int | None:
        lq = self.p2l[physical]
        return None if lq < 0 else lq

    def swap_physical(self, a: int, b: int) -> None:
        la, lb = self.p2l[a], self.p2l[b]
        self.p2l[a], self.p2l[b] = lb, la
        if la >= 0:
            self.l2p[la] = b
        if lb >= 0:
            self.l2p[lb] = a

    def copy(self) -> "QubitMap":
        return QubitMap(self.l2p, len(self.p2l))

    def as_dict(self) -> dict[int, int]:
        return dict(enumerate(self.l2p))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QubitMap):
            return NotImplemented
        return self.l2p == other.l2p and self.p2l == other.p2l

    def __repr__(self) -> str:
        return f"QubitMap({self.as_dict()})"


def initial_layout(c: Circuit, g: TopologyGraph) -> QubitMap:
    """Sequential placement: logical qubit ``k`` on physical qubit ``k``."""
    return QubitMap.sequential(c.num_qubits, g.n)


@dataclass
class RoutedCircuit:
    gates: list[GateOp]
    inserted: list[bool]
    depth: int
    total_gates: int
    swap_count: int
    initial_map: QubitMap
    final_map: QubitMap
    graph: TopologyGraph
    seed: int = 0
    options: RouterOptions = field(default_factory=RouterOptions)

    @property
    def active_qubits(self) -> int:
        """Physical qubits touched by at least one counted gate."""
        return len({q for g in self.gates if g.kind.counted for q in g.qubits})

    def report(self) -> dict:
        return {
            "depth": self.depth,
            "total_gates": self.total_gates,
            "swap_count": self.swap_count,
            "seed": self.seed,
            "topology_hash": self.graph.topology_hash(),
        }

    def report_json(self) -> str:
        return json.dumps(self.report(), sort_keys=True)

    def to_circuit(self, decompose_swaps: bool = False) -> Circuit:
        """Physical circuit; inserted SWAPs optionally expanded to three CX."""
        out: list[GateOp] = []
        for g, ins in zip(self.gates, self.inserted):
            if ins and decompose_swaps:
                a, b = g.qubits
                out += [GateOp(GateKind.CX, (a, b)), GateOp(GateKind.CX, (b, a)),
                        GateOp(GateKind.CX, (a, b))]
            else:
                out.append(g)
        return Circuit(self.graph.n, out, name="routed")


def physical_depth_and_gates(
    gates: Sequence[GateOp], inserted: Sequence[bool], num_physical: int, swap_weight: int = 3
) -> tuple[int, int]:
    """ASAP depth and gate total, with each inserted SWAP costing ``swap_weight`` CX."""
    front = [0] * num_physical
    total = 0
    for g, ins in zip(gates, inserted):
        if not g.kind.counted:
            continue
        w = swap_weight if ins else 1
        total += w
        if len(g.qubits) == 1:
            front[g.qubits[0]] += 1
        else:
            a, b = g.qubits
            t = max(front[a], front[b]) + w
            front[a] = front[b] = t
    return max(front, default=0), total


def heuristic_cost(
    front: Sequence[tuple[int, int]],
    extended: Sequence[tuple[int, int]],
    l2p,
    dist,
    weight: float = 0.5,
    decay: Sequence[float] | None = None,
    swap: tuple[int, int] | None = None,
) -> float:
    """Lookahead distance cost of the mapping ``l2p`` after applying ``swap``.

    ``front`` and ``extended`` hold logical qubit pairs. The result is
    ``sum_front D + weight * mean_extended D``, multiplied by the larger decay
    of the two swapped physical qubits.
    """
    if isinstance(l2p, QubitMap):
        l2p = l2p.l2p
    p0, p1 = swap if swap is not None else (-1, -1)
    f = 0.0
    for a, b in front:
        pa, pb = l2p[a], l2p[b]
        pa = p1 if pa == p0 else p0 if pa == p1 else pa
        pb = p1 if pb == p0 else p0 if pb == p1 else pb
        f += dist[pa][pb]
    e = 0.0
    if extended:
        for a, b in extended:
            pa, pb = l2p[a], l2p[b]
            pa = p1 if pa == p0 else p0 if pa == p1 else pa
            pb = p1 if pb == p0 else p0 if pb == p1 else pb
            e += dist[pa][pb]
        f += weight * e / len(extended)
    if swap is not None and decay is not None:
        f *= max(decay[p0], decay[p1])
    return f


def _shortest_path(g: TopologyGraph, src: int, dst: int) -> list[int]:
    parent = {src: src}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in sorted(g.neighbors(u)):
            if v not in parent:
                parent[v] = u
                queue.append(v)
    path = [dst]
    while path[-1] != src:
        path.append(parent[path[-1]])
    return path[::-1]


def route(
    c: Circuit,
    g: TopologyGraph,
    opts: RouterOptions | None = None,
    seed: int = 0,
    dist: np.ndarray | None = None,
) -> RoutedCircuit:
    """Route ``c`` onto ``g``; raises :class:`UnroutableError` for impossible inputs.

    ``dist`` may carry a precomputed distance matrix of ``g`` to share it
    between calls with different seeds.
    """
    opts = opts or RouterOptions()
    qmap = initial_layout(c, g)
    start_map = qmap.copy()
    n_phys = g.n
    D = (distance_matrix(g) if dist is None else dist).tolist()
    nbrs = [sorted(g.neighbors(p)) for p in range(n_phys)]
    rng = random.Random(seed)
    l2p = qmap.l2p

    gates = c.gates
    ng = len(gates)
    succ: list[list[int]] = [[] for _ in range(ng)]
    npred = [0] * ng
    last: dict[int, int] = {}
    for i, op in enumerate(gates):
        preds = {last[q] for q in op.qubits if q in last}
        npred[i] = len(preds)
        for p in preds:
            succ[p].append(i)
        for q in op.qubits:
            last[q] = i

    out: list[GateOp] = []
    inserted: list[bool] = []
    decay = [1.0] * n_phys
    rounds = 0
    swaps = 0
    stalled = 0
    stall_limit = 10 * n_phys + 10
    front: list[int] = []
    extended: list[tuple[int, int]] = []
    front_dirty = True
    ready = deque(i for i in range(ng) if npred[i] == 0)

    def emit_swap(a: int, b: int) -> None:
        nonlocal swaps
        out.append(GateOp(GateKind.SWAP, (a, b) if a < b else (b, a)))
        inserted.append(True)
        qmap.swap_physical(a, b)
        swaps += 1

    while True:
        while ready:
            i = ready.popleft()
            op = gates[i]
            if len(op.qubits) == 2:
                pa, pb = l2p[op.qubits[0]], l2p[op.qubits[1]]
                if D[pa][pb] != 1.0:
                    if D[pa][pb] == np.inf:
                        raise UnroutableError(
                            f"gate {i} ({op.kind.value} {op.qubits}) needs physical qubits "
                            f"{pa} and {pb}, which are disconnected"
                        )
                    front.append(i)
                    front_dirty = True
                    continue
                out.append(GateOp(op.kind, (pa, pb), op.params))
            else:
                out.append(GateOp(op.kind, (l2p[op.qubits[0]],), op.params, op.clbit))
            inserted.append(False)
            for s in succ[i]:
                npred[s] -= 1
                if npred[s] == 0:
                    ready.append(s)
        if not front:
            break

        if front_dirty:
            front.sort()
            front_pairs = [gates[i].qubits for i in front]
            extended = []
            seen = set(front)
            queue = deque(front)
            while queue and len(extended) < opts.extended_size:
                for s in succ[queue.popleft()]:
                    if s in seen:
                        continue
                    seen.add(s)
                    queue.append(s)
                    if len(gates[s].qubits) == 2:
                        extended.append(gates[s].qubits)
                        if len(extended) >= opts.extended_size:
                            break
            front_dirty = False

        if stalled >= stall_limit:
            # Release valve against heuristic livelock: walk the closest pair together.
            i = min(front, key=lambda k: (D[l2p[gates[k].qubits[0]]][l2p[gates[k].qubits[1]]], k))
            a, b = gates[i].qubits
            path = _shortest_path(g, l2p[a], l2p[b])
            for u, v in zip(path[:-2], path[1:-1]):
                emit_swap(u, v)
            decay = [1.0] * n_phys
            rounds = stalled = 0
        else:
            candidates = set()
            for a, b in front_pairs:
                for lq in (a, b):
                    p = l2p[lq]
                    for nb in nbrs[p]:
                        candidates.add((p, nb) if p < nb else (nb, p))
            best: list[tuple[int, int]] = []
            best_cost = np.inf
            for sw in sorted(candidates):
                cost = heuristic_cost(front_pairs, extended, l2p, D,
                                      opts.extended_weight, decay, sw)
                if cost < best_cost - 1e-12:
                    best_cost, best = cost, [sw]
                elif cost <= best_cost + 1e-12:
                    best.append(sw)
            p0, p1 = best[0] if len(best) == 1 else best[rng.randrange(len(best))]
            emit_swap(p0, p1)
            decay[p0] += opts.decay_delta
            decay[p1] += opts.decay_delta
            rounds += 1
            stalled += 1
            if rounds >= opts.decay_reset:
                decay = [1.0] * n_phys
                rounds = 0

        still_blocked = []
        for i in front:
            a, b = gates[i].qubits
            if D[l2p[a]][l2p[b]] == 1.0:
                ready.append(i)
            else:
                still_blocked.append(i)
        if len(still_blocked) != len(front):
            front = still_blocked
            front_dirty = True
            stalled = 0

    depth, total = physical_depth_and_gates(out, inserted, n_phys, opts.swap_weight)
    return RoutedCircuit(
        gates=out,
        inserted=inserted,
        depth=depth,
        total_gates=total,
        swap_count=swaps,
        initial_map=start_map,
        final_map=qmap,
        graph=g,
        seed=seed,
        options=opts,
    )


def verify_routing(c: Circuit, rc: RoutedCircuit) -> bool:
    """Check that ``rc`` is a legal, semantics-preserving routing of ``c``.

    Replays the inserted SWAPs from the initial map, translates every other
    physical gate back to logical qubits and requires the per-qubit gate
    sequences to equal those of ``c``. Every two-qubit gate must sit on an edge.
    """
    if len(rc.gates) != len(rc.inserted):
        return False
    g = rc.graph
    qmap = rc.initial_map.copy()
    expected: list[list[tuple]] = [[] for _ in range(c.num_qubits)]
    for op in c.gates:
        sig = (op.kind, op.qubits, op.params, op.clbit)
        for q in op.qubits:
            expected[q].append(sig)
    got: list[list[tuple]] = [[] for _ in range(c.num_qubits)]
    for op, ins in zip(rc.gates, rc.inserted):
        if any(not 0 <= p < g.n for p in op.qubits):
            return False
        if len(op.qubits) == 2 and not g.has_edge(*op.qubits):
            return False
        if ins:
            if op.kind is not GateKind.SWAP:
                return False
            qmap.swap_physical(*op.qubits)
            continue
        logical = tuple(qmap.logical(p) for p in op.qubits)
        if any(lq is None for lq in logical):
            return False
        sig = (op.kind, logical, op.params, op.clbit)
        for q in logical:
            got[q].append(sig)
    return got == expected and qmap == rc.final_map


@dataclass
class Evaluation:
    """Routing results of one circuit on one topology, averaged over seeds."""

    depth: float
    total_gates: float
    swap_count: float
    active_qubits: float
    runs: list[RoutedCircuit]

    def objective(self, kind: str) -> float:
        if kind == "depth":
            return self.depth
        if kind == "gates":
            return self.total_gates
        raise ValueError(f"unknown objective {kind!r}")


def evaluate_topology(
    c: Circuit, g: TopologyGraph, seeds: Sequence[int], opts: RouterOptions | None = None
) -> Evaluation:
    if not seeds:
        raise ValueError("at least one seed is required")
    dist = distance_matrix(g)
    runs = [route(c, g, opts, s, dist) for s in seeds]
    k = len(runs)
    return Evaluation(
        depth=sum(r.depth for r in runs) / k,
        total_gates=sum(r.total_gates for r in runs) / k,
        swap_count=sum(r.swap_count for r in runs) / k,
        active_qubits=sum(r.active_qubits for r in runs) / k,
        runs=runs,
    )


__all__ = [
    "Evaluation", "QubitMap", "RoutedCircuit", "RouterOptions", "RoutingError",
    "UnroutableError", "evaluate_topology", "heuristic_cost", "initial_layout",
    "physical_depth_and_gates", "route", "verify_routing",
]
