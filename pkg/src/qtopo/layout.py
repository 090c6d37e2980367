"""Force-directed placement snapped onto a square grid.

Phase 1 relaxes a spring-electrical system (inverse-square repulsion between
all vertices, linear springs along edges) from a seeded circular start. Phase 2
adds a pull towards the nearest unclaimed grid point; a vertex that comes
within the claim radius takes the point and is pinned there, and the others
re-target. Whatever is still loose when the iteration budget runs out is
snapped greedily.

The grid pitch is expressed in units of the natural length of a single edge
(where spring and repulsion balance for the base ``k1``), so raising ``sparse``
spreads qubits over more grid points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .topology import TopologyGraph

EPS = 1e-6


@dataclass
class LayoutParams:
    k1: float = 1.0
    k2: float = 0.05
    rest_length: float = 1.0
    step_size: float = 0.05
    damping: float = 0.9
    grid_pitch: float = 1.0
    max_iters: int = 500
    grid_iters: int = 500
    tol: float = 1e-4
    claim_radius: float = 0.25
    sparse: float = 1.0
    grid_ramp: float = 20.0
    jitter: float = 1e-3

    @property
    def k1_eff(self) -> float:
        return self.k1 * self.sparse


@dataclass
class GridLayout:
    coords: dict[int, tuple[int, int]]
    crossing_count: int
    iterations_used: int
    seed: int = 0
    edges: list[tuple[int, int]] = field(default_factory=list)

    def positions(self) -> np.ndarray:
        """``(n, 2)`` array of ``(x, y) = (col, row)``."""
        n = len(self.coords)
        return np.array([[self.coords[v][1], self.coords[v][0]] for v in range(n)], dtype=float)

    def mean_nearest_neighbor_distance(self) -> float:
        pos = self.positions()
        if len(pos) < 2:
            return 0.0
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        np.fill_diagonal(d, np.inf)
        return float(d.min(axis=1).mean())


def natural_edge_length(k1: float, k2: float, rest_length: float) -> float:
    """Length ``r > rest_length`` where ``k1 / r**2 == k2 * (r - rest_length)``."""
    lo, hi = max(rest_length, EPS), max(rest_length, 1.0) + (k1 / k2) ** (1 / 3) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if k1 / mid**2 > k2 * (mid - rest_length):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _edge_array(g: TopologyGraph) -> np.ndarray:
    return np.array(g.edges(), dtype=np.intp).reshape(-1, 2)


def forces(pos: np.ndarray, edges: np.ndarray, k1: float, k2: float, rest_length: float) -> np.ndarray:
    """Net force on every vertex: ``k1/r**2`` repulsion from all others plus edge springs."""
    diff = pos[:, None, :] - pos[None, :, :]
    r = np.maximum(np.linalg.norm(diff, axis=-1), EPS)
    np.fill_diagonal(r, np.inf)
    f = ((k1 / r**3)[:, :, None] * diff).sum(axis=1)
    if len(edges):
        a, b = edges[:, 0], edges[:, 1]
        vec = pos[b] - pos[a]
        length = np.maximum(np.linalg.norm(vec, axis=1), EPS)
        pull = (k2 * (length - rest_length) / length)[:, None] * vec
        np.add.at(f, a, pull)
        np.add.at(f, b, -pull)
    return f


def force_step(pos: np.ndarray, g: TopologyGraph, params: LayoutParams | None = None) -> np.ndarray:
    """One relaxation step: every vertex moves by ``damping * step_size * force``."""
    p = params or LayoutParams()
    f = forces(pos, _edge_array(g), p.k1_eff, p.k2, p.rest_length)
    return pos + p.damping * p.step_size * f


def circular_placement(g: TopologyGraph, seed: int, params: LayoutParams | None = None) -> np.ndarray:
    """Vertices on a circle in seeded depth-first order, about one edge length apart.

    DFS order keeps trees and cycles uncrossed on the circle; the root and the
    neighbour order are drawn from the seed so restarts differ.
    """
    p = params or LayoutParams()
    rng = np.random.default_rng(seed)
    r0 = natural_edge_length(p.k1_eff, p.k2, p.rest_length)
    n = g.n
    radius = max(r0, n * r0 / (2 * math.pi))
    order = _dfs_order(g, rng)
    theta = 2 * math.pi * np.arange(n) / max(n, 1)
    pos = np.empty((n, 2))
    pos[order, 0] = radius * np.cos(theta)
    pos[order, 1] = radius * np.sin(theta)
    return pos + rng.normal(scale=p.jitter, size=pos.shape)


def _dfs_order(g: TopologyGraph, rng: np.random.Generator) -> np.ndarray:
    seen = np.zeros(g.n, dtype=bool)
    order: list[int] = []
    for root in rng.permutation(g.n):
        if seen[root]:
            continue
        stack = [int(root)]
        while stack:
            v = stack.pop()
            if seen[v]:
                continue
            seen[v] = True
            order.append(v)
            nbrs = [u for u in sorted(g.neighbors(v)) if not seen[u]]
            stack.extend(nbrs[k] for k in rng.permutation(len(nbrs)))
    return np.array(order, dtype=np.intp)


def align_to_grid(pos: np.ndarray, edges: np.ndarray, pitch: float) -> np.ndarray:
    """Rotate so edge directions sit near multiples of 90 degrees, then shift onto the lattice.

    The rotation is the circular mean of ``4 * angle`` over the edges; the shift
    is the circular mean of each coordinate modulo the pitch.
    """
    pos = pos - pos.mean(axis=0)
    if len(edges):
        vec = pos[edges[:, 1]] - pos[edges[:, 0]]
        z = np.exp(4j * np.arctan2(vec[:, 1], vec[:, 0])).sum()
        if abs(z) > 1e-9:
            theta = -np.angle(z) / 4
            c, s = math.cos(theta), math.sin(theta)
            pos = pos @ np.array([[c, s], [-s, c]])
    for axis in range(2):
        z = np.exp(2j * math.pi * pos[:, axis] / pitch).sum()
        if abs(z) > 1e-9:
            pos[:, axis] -= pitch * np.angle(z) / (2 * math.pi)
    return pos


def _nearest_free(x: float, y: float, taken: set[tuple[int, int]]) -> tuple[int, int]:
    """Nearest grid point (in pitch units) to ``(x, y)`` that is not in ``taken``."""
    cx, cy = round(x), round(y)
    best, best_d = None, math.inf
    k = 0
    while True:
        for i in range(cx - k, cx + k + 1):
            for j in range(cy - k, cy + k + 1):
                if max(abs(i - cx), abs(j - cy)) != k or (i, j) in taken:
                    continue
                d = (i - x) ** 2 + (j - y) ** 2
                if d < best_d:
                    best, best_d = (i, j), d
        if best is not None and (k - 0.5) ** 2 >= best_d:
            return best
        k += 1


def layout(g: TopologyGraph, seed: int = 0, params: LayoutParams | None = None) -> GridLayout:
    p = params or LayoutParams()
    edges = _edge_array(g)
    n = g.n
    pos = circular_placement(g, seed, p)
    k1 = p.k1_eff
    pitch = p.grid_pitch * natural_edge_length(p.k1, p.k2, p.rest_length)
    gain = p.damping * p.step_size

    iters = 0
    for _ in range(p.max_iters):
        iters += 1
        move = gain * forces(pos, edges, k1, p.k2, p.rest_length)
        pos += move
        if np.abs(move).max() < p.tol:
            break

    pos = align_to_grid(pos, edges, pitch)
    claimed: dict[tuple[int, int], int] = {}
    pinned = np.zeros(n, dtype=bool)
    radius2 = (p.claim_radius) ** 2
    for t in range(p.grid_iters):
        if pinned.all():
            break
        iters += 1
        grid = pos / pitch
        taken = set(claimed)
        free = [v for v in range(n) if not pinned[v]]
        targets = {v: _nearest_free(grid[v, 0], grid[v, 1], taken) for v in free}
        # Closest vertices claim first; later ones re-target next iteration.
        for v in sorted(free, key=lambda v: ((grid[v, 0] - targets[v][0]) ** 2
                                             + (grid[v, 1] - targets[v][1]) ** 2, v)):
            tx, ty = targets[v]
            if (tx, ty) in claimed:
                continue
            if (grid[v, 0] - tx) ** 2 + (grid[v, 1] - ty) ** 2 <= radius2:
                claimed[(tx, ty)] = v
                pinned[v] = True
                pos[v] = (tx * pitch, ty * pitch)
        if pinned.all():
            break
        k_grid = p.k2 * (1.0 + (p.grid_ramp - 1.0) * t / max(p.grid_iters - 1, 1))
        f = forces(pos, edges, k1, p.k2, p.rest_length)
        for v in free:
            if not pinned[v]:
                tx, ty = targets[v]
                f[v] += k_grid * (np.array([tx * pitch, ty * pitch]) - pos[v])
        f[pinned] = 0.0
        pos += gain * f

    while not pinned.all():
        grid = pos / pitch
        taken = set(claimed)
        options = []
        for v in np.flatnonzero(~pinned):
            tx, ty = _nearest_free(grid[v, 0], grid[v, 1], taken)
            options.append(((grid[v, 0] - tx) ** 2 + (grid[v, 1] - ty) ** 2, int(v), (tx, ty)))
        _, v, pt = min(options)
        claimed[pt] = v
        pinned[v] = True

    xs = [pt[0] for pt in claimed]
    ys = [pt[1] for pt in claimed]
    x0, y0 = min(xs), min(ys)
    coords = {v: (pt[1] - y0, pt[0] - x0) for pt, v in claimed.items()}
    coords = dict(sorted(coords.items()))
    edge_list = [tuple(map(int, e)) for e in edges]
    out = GridLayout(coords, 0, iters, seed, edge_list)
    out.crossing_count = count_crossings(out, g)
    return out


def best_layout(g: TopologyGraph, seeds, params: LayoutParams | None = None) -> GridLayout:
    """Lowest crossing count over independent runs; ties keep the earlier seed."""
    best = None
    for s in seeds:
        lay = layout(g, s, params)
        if best is None or lay.crossing_count < best.crossing_count:
            best = lay
    if best is None:
        raise ValueError("no seeds given")
    return best


# --------------------------------------------------------------------------
# Crossings
# --------------------------------------------------------------------------


def _orient(a, b, c) -> int:
    v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    return int(v > 0) - int(v < 0)


def segments_cross(p1, p2, p3, p4) -> bool:
    """Whether the open segments ``p1p2`` and ``p3p4`` share a point."""
    o1, o2 = _orient(p1, p2, p3), _orient(p1, p2, p4)
    o3, o4 = _orient(p3, p4, p1), _orient(p3, p4, p2)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    if o1 == o2 == o3 == o4 == 0:
        axis = 0 if abs(p2[0] - p1[0]) + abs(p4[0] - p3[0]) > 0 else 1
        lo = max(min(p1[axis], p2[axis]), min(p3[axis], p4[axis]))
        hi = min(max(p1[axis], p2[axis]), max(p3[axis], p4[axis]))
        return hi > lo
    return False


def count_crossings(layout_or_pos, g: TopologyGraph) -> int:
    """Edge pairs without a shared endpoint whose open segments intersect."""
    if isinstance(layout_or_pos, GridLayout):
        pos = {v: (c, r) for v, (r, c) in layout_or_pos.coords.items()}
    else:
        arr = np.asarray(layout_or_pos)
        pos = {v: tuple(arr[v]) for v in range(len(arr))}
    edges = g.edges()
    count = 0
    for k, (a, b) in enumerate(edges):
        pa, pb = pos[a], pos[b]
        for c, d in edges[k + 1 :]:
            if c in (a, b) or d in (a, b):
                continue
            if segments_cross(pa, pb, pos[c], pos[d]):
                count += 1
    return count


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def write_coords_csv(lay: GridLayout, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["qubit", "row", "col"])
        for v, (r, c) in lay.coords.items():
            w.writerow([v, r, c])


def to_svg(lay: GridLayout, cell: int = 48, radius: int = 14) -> str:
    rows = max(r for r, _ in lay.coords.values()) + 1
    cols = max(c for _, c in lay.coords.values()) + 1
    width, height = cols * cell + cell, rows * cell + cell

    def xy(v):
        r, c = lay.coords[v]
        return cell * (c + 1), cell * (r + 1)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<!-- crossings: {lay.crossing_count} -->",
        '<g stroke="#444" stroke-width="2">',
    ]
    for a, b in lay.edges:
        (x1, y1), (x2, y2) = xy(a), xy(b)
        parts.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}"/>')
    parts.append("</g>")
    parts.append('<g font-family="monospace" font-size="12" text-anchor="middle">')
    for v in lay.coords:
        x, y = xy(v)
        parts.append(f'<circle cx="{x}" cy="{y}" r="{radius}" fill="#fff" stroke="#246" '
                     f'stroke-width="2"/><text x="{x}" y="{y + 4}">{v}</text>')
    parts.append("</g></svg>")
    return "\n".join(parts) + "\n"


def write_svg(lay: GridLayout, path: str | Path) -> None:
    Path(path).write_text(to_svg(lay))


def sparse_params(factor: float, base: LayoutParams | None = None) -> LayoutParams:
    return replace(base or LayoutParams(), sparse=factor)
