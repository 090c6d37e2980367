from __future__ import annotations

import statistics

import numpy as np
import pytest

from qtopo.layout import (
    LayoutParams, best_layout, circular_placement, count_crossings, force_step, forces,
    layout, sparse_params, to_svg,
)
from qtopo.topology import TopologyGraph, make_grid, make_line

from oracles import cycle, oracle_crossings, random_degree4_graph


def test_crossing_examples():
    x = TopologyGraph.from_edges(4, [(0, 1), (2, 3)])
    assert count_crossings(np.array([[0, 0], [1, 1], [0, 1], [1, 0]]), x) == 1
    square = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert count_crossings(square, cycle(4)) == 0


def test_crossings_match_oracle_on_random_layouts():
    rng = np.random.default_rng(0)
    for trial in range(500):
        g = random_degree4_graph(8, trial)
        pos = rng.random((8, 2))
        assert count_crossings(pos, g) == oracle_crossings(pos, g), trial


def test_crossings_match_oracle_on_grid_layouts():
    # integer points make collinear and touching cases common
    rng = np.random.default_rng(1)
    for trial in range(500):
        g = random_degree4_graph(8, 1000 + trial)
        pos = rng.permutation(16)[:8]
        pos = np.stack([pos % 4, pos // 4], axis=1).astype(float)
        assert count_crossings(pos, g) == oracle_crossings(pos, g), trial


def test_isolated_vertices_repel():
    g = TopologyGraph(2)
    pos = np.array([[0.0, 0.0], [1.0, 0.0]])
    new = force_step(pos, g)
    assert new[0, 0] < 0 < 1 < new[1, 0]


def test_symmetric_edge_has_no_tangential_force():
    g = TopologyGraph.from_edges(2, [(0, 1)])
    pos = np.array([[-0.5, 0.0], [0.5, 0.0]])
    f = forces(pos, np.array(g.edges()), 1.0, 0.05, 1.0)
    assert np.allclose(f[0], -f[1]) and f[0, 1] == 0.0 and f[1, 1] == 0.0


def test_total_momentum_zero():
    g = make_line(3)
    pos = np.random.default_rng(3).random((3, 2)) * 4
    for _ in range(50):
        new = force_step(pos, g)
        assert np.abs((new - pos).sum(axis=0)).max() <= 1e-9
        pos = new


def test_single_vertex():
    lay = layout(TopologyGraph(1))
    assert lay.coords == {0: (0, 0)} and lay.crossing_count == 0


@pytest.mark.parametrize("seed", range(10))
def test_four_cycle_is_a_unit_square(seed):
    lay = layout(cycle(4), seed)
    assert lay.crossing_count == 0
    assert sorted(lay.coords.values()) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_occupancy_on_forty_vertices():
    g = random_degree4_graph(40, 7)
    p = LayoutParams()
    for seed in range(20):
        lay = layout(g, seed)
        points = list(lay.coords.values())
        assert len(points) == 40 == len(set(points))
        assert sorted(lay.coords) == list(range(40))
        assert lay.iterations_used <= p.max_iters + p.grid_iters


def test_layout_deterministic():
    g = random_degree4_graph(12, 2)
    assert layout(g, 5) == layout(g, 5)


BENCH_GRAPHS = {
    "cycle4": cycle(4),
    "path10": make_line(10),
    "grid4x4": make_grid(4, 4),
    "random20": random_degree4_graph(20, 11),
}


@pytest.mark.parametrize("name", sorted(BENCH_GRAPHS))
def test_improves_on_initial_placement(name):
    g = BENCH_GRAPHS[name]
    final = [layout(g, s).crossing_count for s in range(20)]
    initial = [count_crossings(circular_placement(g, s), g) for s in range(20)]
    assert statistics.median(final) <= statistics.median(initial)


def test_best_of_k_is_minimum():
    g = make_grid(4, 4)
    seeds = range(6)
    runs = [layout(g, s).crossing_count for s in seeds]
    assert best_layout(g, seeds).crossing_count == min(runs)


def test_sparse_spreads_vertices():
    g = random_degree4_graph(16, 4)
    dense = np.mean([layout(g, s).mean_nearest_neighbor_distance() for s in range(10)])
    sparse = np.mean([layout(g, s, sparse_params(3.0)).mean_nearest_neighbor_distance()
                      for s in range(10)])
    assert sparse > dense


def test_svg_has_every_vertex_and_edge():
    lay = layout(cycle(4))
    svg = to_svg(lay)
    assert svg.count("<circle") == 4 and svg.count("<line") == 4
