"""Degree-bounded undirected coupling graphs and their all-pairs hop distances.

Edges are identified by a lexicographic index over pairs ``i < j``; the bit
vector of all indices is the observation the RL agent sees.
"""

from __future__ import annotations

import hashlib
from collections import deque
from enum import Enum
from functools import lru_cache
from pathlib import Path

import numpy as np

DEFAULT_MAX_DEGREE = 4


def num_pairs(n: int) -> int:
    return n * (n - 1) // 2


def edge_index(i: int, j: int, n: int) -> int:
    """Lexicographic index of the pair ``(i, j)``, ``0 <= i < j < n``."""
    if not 0 <= i < j < n:
        raise ValueError(f"edge_index needs 0 <= i < j < n, got i={i}, j={j}, n={n}")
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


@lru_cache(maxsize=64)
def edge_pairs(n: int) -> tuple[tuple[int, int], ...]:
    """All pairs in index order, so ``edge_pairs(n)[edge_index(i, j, n)] == (i, j)``."""
    return tuple((i, j) for i in range(n) for j in range(i + 1, n))


def decode_edge_index(k: int, n: int) -> tuple[int, int]:
    if not 0 <= k < num_pairs(n):
        raise ValueError(f"edge index {k} out of range for n={n}")
    return edge_pairs(n)[k]


class EdgeResult(Enum):
    ADDED = "added"
    DUPLICATE = "duplicate"
    DEGREE_LIMIT = "degree_limit"


class TopologyError(ValueError):
    pass


class TopologyGraph:
    """Undirected simple graph on ``n`` vertices with a degree cap.

    The canonical storage is the bit vector over ``i < j`` pairs; neighbour
    sets are kept alongside for fast queries.
    """

    __slots__ = ("n", "max_degree", "_bits", "_nbrs")

    def __init__(self, n: int, max_degree: int = DEFAULT_MAX_DEGREE):
        if n < 1:
            raise ValueError("a topology needs at least one vertex")
        self.n = n
        self.max_degree = max_degree
        self._bits = np.zeros(num_pairs(n), dtype=np.int8)
        self._nbrs: list[set[int]] = [set() for _ in range(n)]

    @classmethod
    def from_edges(cls, n: int, edges, max_degree: int = DEFAULT_MAX_DEGREE) -> "TopologyGraph":
        g = cls(n, max_degree)
        for i, j in edges:
            res = g.add_edge(int(i), int(j))
            if res is EdgeResult.DEGREE_LIMIT:
                raise TopologyError(f"edge ({i},{j}) exceeds max degree {max_degree}")
        return g

    def copy(self) -> "TopologyGraph":
        g = TopologyGraph.__new__(TopologyGraph)
        g.n = self.n
        g.max_degree = self.max_degree
        g._bits = self._bits.copy()
        g._nbrs = [set(s) for s in self._nbrs]
        return g

    def has_edge(self, i: int, j: int) -> bool:
        return j in self._nbrs[i]

    def degree(self, v: int) -> int:
        return len(self._nbrs[v])

    @property
    def degrees(self) -> list[int]:
        return [len(s) for s in self._nbrs]

    def neighbors(self, v: int) -> set[int]:
        return self._nbrs[v]

    @property
    def num_edges(self) -> int:
        return int(self._bits.sum())

    def edges(self) -> list[tuple[int, int]]:
        pairs = edge_pairs(self.n)
        return [pairs[k] for k in np.flatnonzero(self._bits)]

    def can_add(self, i: int, j: int) -> bool:
        return (
            i != j
            and j not in self._nbrs[i]
            and len(self._nbrs[i]) < self.max_degree
            and len(self._nbrs[j]) < self.max_degree
        )

    def add_edge(self, i: int, j: int) -> EdgeResult:
        """Add ``{i, j}`` in place. Degree violations are reported, never applied."""
        if i == j:
            raise ValueError(f"self-loop on vertex {i}")
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise ValueError(f"vertex out of range: ({i}, {j}) for n={self.n}")
        if j in self._nbrs[i]:
            return EdgeResult.DUPLICATE
        if len(self._nbrs[i]) >= self.max_degree or len(self._nbrs[j]) >= self.max_degree:
            return EdgeResult.DEGREE_LIMIT
        a, b = (i, j) if i < j else (j, i)
        self._bits[edge_index(a, b, self.n)] = 1
        self._nbrs[i].add(j)
        self._nbrs[j].add(i)
        return EdgeResult.ADDED

    def flatten_state(self) -> np.ndarray:
        """Bit vector of length ``n(n-1)/2``; bit ``k`` is edge ``edge_pairs(n)[k]``."""
        return self._bits.copy()

    def legal_mask(self) -> np.ndarray:
        """Pairs that are absent and whose endpoints both have spare degree."""
        free = np.array([len(s) < self.max_degree for s in self._nbrs])
        pairs = np.array(edge_pairs(self.n), dtype=np.intp).reshape(-1, 2)
        return (self._bits == 0) & free[pairs[:, 0]] & free[pairs[:, 1]]

    def is_connected(self) -> bool:
        return bool(np.all(np.isfinite(bfs_distance_matrix(self)[0])))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TopologyGraph):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((self.n, self._bits.tobytes()))

    def __repr__(self) -> str:
        return f"TopologyGraph(n={self.n}, edges={self.num_edges}, max_degree={self.max_degree})"

    def topology_hash(self) -> str:
        return hashlib.sha256(to_edge_list(self).encode()).hexdigest()[:16]


def distance_matrix(g: TopologyGraph) -> np.ndarray:
    """All-pairs hop counts by Floyd-Warshall; ``inf`` marks disconnected pairs."""
    n = g.n
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for i, j in g.edges():
        d[i, j] = d[j, i] = 1.0
    for k in range(n):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def bfs_distance_matrix(g: TopologyGraph) -> np.ndarray:
    """All-pairs hop counts by one BFS per source."""
    n = g.n
    d = np.full((n, n), np.inf)
    for s in range(n):
        d[s, s] = 0.0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in g.neighbors(u):
                if d[s, v] == np.inf:
                    d[s, v] = d[s, u] + 1
                    queue.append(v)
    return d


def make_grid(rows: int, cols: int, max_degree: int = DEFAULT_MAX_DEGREE) -> TopologyGraph:
    """4-neighbour lattice; vertex ``r*cols + c`` sits at row ``r``, column ``c``."""
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return TopologyGraph.from_edges(rows * cols, edges, max_degree)


def make_line(n: int, max_degree: int = DEFAULT_MAX_DEGREE) -> TopologyGraph:
    if n < 1:
        raise ValueError("line needs at least one vertex")
    return TopologyGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)], max_degree)


def make_complete(n: int) -> TopologyGraph:
    return TopologyGraph.from_edges(n, edge_pairs(n), max_degree=max(n - 1, 1))


def square_grid_for(n_qubits: int) -> tuple[int, int]:
    side = 1
    while side * side < n_qubits:
        side += 1
    return side, side


def parse_topology_spec(spec: str, max_degree: int = DEFAULT_MAX_DEGREE) -> TopologyGraph:
    """``grid:RxC``, ``line:N`` or ``file:path``."""
    kind, _, arg = spec.partition(":")
    if kind == "grid":
        r, _, c = arg.lower().partition("x")
        return make_grid(int(r), int(c), max_degree)
    if kind == "line":
        return make_line(int(arg), max_degree)
    if kind == "file":
        return load_edge_list(arg, max_degree)
    raise ValueError(f"unknown topology spec {spec!r}; expected grid:RxC, line:N or file:path")


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def to_edge_list(g: TopologyGraph) -> str:
    return f"{g.n}\n" + "".join(f"{i} {j}\n" for i, j in g.edges())


def from_edge_list(text: str, max_degree: int = DEFAULT_MAX_DEGREE) -> TopologyGraph:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or len(rows[0]) != 1:
        raise TopologyError("edge list must start with the vertex count on its own line")
    n = int(rows[0][0])
    edges = []
    for r in rows[1:]:
        if len(r) != 2:
            raise TopologyError(f"malformed edge line {' '.join(r)!r}")
        i, j = int(r[0]), int(r[1])
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise TopologyError(f"invalid edge ({i},{j}) for n={n}")
        edges.append((i, j))
    return TopologyGraph.from_edges(n, edges, max_degree)


def save_edge_list(g: TopologyGraph, path: str | Path) -> None:
    Path(path).write_text(to_edge_list(g))


def load_edge_list(path: str | Path, max_degree: int = DEFAULT_MAX_DEGREE) -> TopologyGraph:
    return from_edge_list(Path(path).read_text(), max_degree)


def to_bits_csv(g: TopologyGraph) -> str:
    return ",".join(str(int(b)) for b in g.flatten_state()) + "\n"


def from_bits(bits, max_degree: int = DEFAULT_MAX_DEGREE) -> TopologyGraph:
    bits = np.asarray(bits, dtype=np.int8).ravel()
    n = int(round((1 + np.sqrt(1 + 8 * bits.size)) / 2))
    if num_pairs(n) != bits.size:
        raise TopologyError(f"{bits.size} bits is not n(n-1)/2 for any n")
    pairs = edge_pairs(n)
    return TopologyGraph.from_edges(n, [pairs[k] for k in np.flatnonzero(bits)], max_degree)


def from_bits_csv(text: str, max_degree: int = DEFAULT_MAX_DEGREE) -> TopologyGraph:
    return from_bits([int(s) for s in text.replace("\n", ",").split(",") if s.strip()], max_degree)
