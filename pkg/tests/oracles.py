"""Independent reference implementations shared by unit and acceptance tests."""

from __future__ import annotations

import itertools
from collections import deque

import numpy as np
from shapely.geometry import LineString

from qtopo.circuit import Circuit, GateKind, GateOp
from qtopo.ppo import MLP, masked_log_softmax, sample_action
from qtopo.topology import TopologyGraph, make_line


def cx(a: int, b: int) -> GateOp:
    return GateOp(GateKind.CX, (a, b))


def min_swaps(c: Circuit, g: TopologyGraph) -> int:
    """Fewest SWAPs to run the two-qubit gates of ``c`` from the sequential map.

    0-1 BFS over (placement, executed set); gates run as soon as they are
    ready and adjacent, which is never worse than delaying them.
    """
    two_q = [op.qubits for op in c.gates if op.is_two_qubit]
    preds = [{i for i in range(j) if set(two_q[i]) & set(two_q[j])} for j in range(len(two_q))]
    edges = g.edges()

    def closure(l2p, done):
        done = set(done)
        progress = True
        while progress:
            progress = False
            for j, (a, b) in enumerate(two_q):
                if j not in done and preds[j] <= done and g.has_edge(l2p[a], l2p[b]):
                    done.add(j)
                    progress = True
        return frozenset(done)

    # one slot per physical qubit so swaps may move through spare vertices
    start_map = tuple(range(g.n))
    start = (start_map, closure(start_map, ()))
    seen = {start: 0}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        l2p, done = state
        if len(done) == len(two_q):
            return seen[state]
        for p, q in edges:
            new = list(l2p)
            ip, iq = new.index(p), new.index(q)
            new[ip], new[iq] = q, p
            new = tuple(new)
            nxt = (new, closure(new, done))
            if nxt not in seen:
                seen[nxt] = seen[state] + 1
                queue.append(nxt)
    raise AssertionError("unroutable")


def random_connected(n: int, rng: np.random.Generator) -> TopologyGraph:
    order = rng.permutation(n)
    g = TopologyGraph(n)
    for k in range(1, n):
        for _ in range(20):
            if g.add_edge(int(order[k]), int(order[rng.integers(k)])).value == "added":
                break
    for _ in range(int(rng.integers(0, n))):
        i, j = rng.choice(n, 2, replace=False)
        g.add_edge(int(i), int(j))
    return g


def small_graphs():
    yield make_line(4)
    yield TopologyGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    yield make_line(5)
    yield TopologyGraph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)])
    yield TopologyGraph.from_edges(5, [(0, 2), (1, 2), (2, 3), (3, 4)])
    yield TopologyGraph.from_edges(5, [(0, 4), (1, 3), (2, 4), (3, 4)])


def exhaustive_routing_cases():
    """All CX sequences of length 1-3 on fixed small graphs, plus random 4-6 gate cases."""
    for g in small_graphs():
        pairs = list(itertools.combinations(range(g.n), 2))
        for length in (1, 2, 3):
            for seq in itertools.product(pairs, repeat=length):
                yield Circuit(g.n, [cx(*p) for p in seq]), g
    rng = np.random.default_rng(5)
    for _ in range(400):
        g = random_connected(5, rng)
        seq = [tuple(rng.choice(5, 2, replace=False)) for _ in range(int(rng.integers(4, 7)))]
        yield Circuit(5, [cx(int(a), int(b)) for a, b in seq]), g


def random_degree4_graph(n: int, seed: int) -> TopologyGraph:
    rng = np.random.default_rng(seed)
    g = TopologyGraph(n)
    for _ in range(3 * n):
        i, j = rng.choice(n, 2, replace=False)
        g.add_edge(int(i), int(j))
    return g


def cycle(n: int) -> TopologyGraph:
    return TopologyGraph.from_edges(n, [(k, (k + 1) % n) for k in range(n)])


def oracle_crossings(pos, g: TopologyGraph) -> int:
    """Edge pairs without a shared endpoint whose interiors meet (shapely predicates)."""
    segs = {e: LineString([tuple(pos[e[0]]), tuple(pos[e[1]])]) for e in g.edges()}
    edges = g.edges()
    total = 0
    for k, e in enumerate(edges):
        for f in edges[k + 1:]:
            if set(e) & set(f):
                continue
            a, b = segs[e], segs[f]
            if a.crosses(b) or a.overlaps(b) or a.contains(b) or b.contains(a):
                total += 1
    return total


def make_ppo_batch(rng, policy: MLP, obs_dim: int, n_actions: int, B: int = 12, drift: float = 0.3):
    """Batch whose behaviour policy is a perturbed copy of ``policy``."""
    obs = rng.standard_normal((B, obs_dim))
    masks = rng.random((B, n_actions)) < 0.7
    masks[np.arange(B), rng.integers(n_actions, size=B)] = True
    old = policy.copy()
    old.set_flat(old.get_flat() + drift * rng.standard_normal(old.num_params))
    old_all = masked_log_softmax(old(obs), masks)
    act = np.array([sample_action(np.exp(row), rng) for row in old_all])
    return {
        "obs": obs, "actions": act, "masks": masks,
        "old_logp": old_all[np.arange(B), act], "old_logp_all": old_all,
        "adv": rng.standard_normal(B), "returns": rng.standard_normal(B),
    }


def rel_err(a, b) -> float:
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def finite_difference(net: MLP, loss_of, h: float = 1e-5) -> list[np.ndarray]:
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up = loss_of()
            p[idx] = orig - h
            down = loss_of()
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def gae_oracle(r, v, gamma: float, lam: float):
    """Advantages and rewards-to-go from their suffix-sum definitions (single episode)."""
    T = len(r)
    delta = [r[t] + gamma * (v[t + 1] if t + 1 < T else 0.0) - v[t] for t in range(T)]
    adv = [sum((gamma * lam) ** k * delta[t + k] for k in range(T - t)) for t in range(T)]
    rtg = [sum(gamma ** k * r[t + k] for k in range(T - t)) for t in range(T)]
    return np.array(adv), np.array(rtg)
