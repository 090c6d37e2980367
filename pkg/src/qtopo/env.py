"""Topology-construction environment.

Each action names a qubit pair; a legal action adds that edge to the coupling
graph, the circuit is re-routed on the new graph, and the reward compares the
routed depth (or gate count) with the start-of-episode and previous values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import Circuit
from .replay import ReplayMemory
from .router import RouterOptions, UnroutableError, evaluate_topology
from .topology import TopologyGraph, edge_pairs, make_line, num_pairs

OBJECTIVES = ("depth", "gates")
REWARD_SIGNS = ("verbatim", "negated")


def reward_fn(d0: float, d_prev: float, d_t: float, sign: str = "negated") -> float:
    """Reward from the relative change against the initial and previous value.

    ``verbatim`` evaluates the piecewise formula exactly as published, which is
    negative when ``d_t < d0``; ``negated`` flips it so improvements pay off.
    """
    if d0 <= 0 or d_prev <= 0:
        raise ValueError(f"baselines must be positive, got d0={d0}, d_prev={d_prev}")
    if sign not in REWARD_SIGNS:
        raise ValueError(f"unknown reward sign {sign!r}")
    to_start = (d_t - d0) / d0
    to_prev = (d_t - d_prev) / d_prev
    if to_start < 0:
        r = ((1 + to_start) ** 2 - 1) * abs(1 + to_prev)
    else:
        r = -((1 - to_start) ** 2 - 1) * abs(1 - to_prev)
    return -r if sign == "negated" else r


@dataclass
class EnvConfig:
    circuit: Circuit
    max_degree: int = 4
    horizon: int | None = None
    eval_seeds: tuple[int, ...] = (0, 1, 2)
    objective: str = "depth"
    reward_sign: str = "negated"
    illegal_penalty: float = -1.0
    router: RouterOptions = field(default_factory=RouterOptions)
    # Cache objective values per edge set. Routing is deterministic, so this
    # only saves time; it does change how many router calls are made.
    memoize: bool = False

    def __post_init__(self) -> None:
        if self.horizon is None:
            self.horizon = 2 * self.circuit.num_qubits
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.eval_seeds:
            raise ValueError("eval_seeds must be non-empty")
        self.eval_seeds = tuple(self.eval_seeds)
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.reward_sign not in REWARD_SIGNS:
            raise ValueError(f"reward_sign must be one of {REWARD_SIGNS}")


@dataclass
class EnvState:
    graph: TopologyGraph
    step_index: int
    d0: float
    d_prev: float

    @property
    def observation(self) -> np.ndarray:
        return self.graph.flatten_state()


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


class TopologyEnv:
    """Single-threaded environment instance; run one per rollout worker."""

    def __init__(self, cfg: EnvConfig, memory: ReplayMemory | None = None):
        self.cfg = cfg
        self.memory = memory
        self.n = cfg.circuit.num_qubits
        self.n_actions = num_pairs(self.n)
        self.obs_dim = self.n_actions
        self._pairs = edge_pairs(self.n)
        self._d0: float | None = None
        self._cache: dict[bytes, dict] = {}
        self.router_evals = 0
        self.router_calls = 0
        self.state: EnvState | None = None
        self.trace: list[dict] = []
        self.best_objective = math.inf
        self.best_depth = math.inf
        self.best_graph: TopologyGraph | None = None
        self.best_trace: list[dict] = []

    # -- objective --------------------------------------------------------

    def _measure(self, g: TopologyGraph) -> dict:
        key = g.flatten_state().tobytes()
        if self.cfg.memoize and key in self._cache:
            return self._cache[key]
        ev = evaluate_topology(self.cfg.circuit, g, self.cfg.eval_seeds, self.cfg.router)
        self.router_calls += len(self.cfg.eval_seeds)
        res = {"objective": ev.objective(self.cfg.objective), "depth": ev.depth,
               "total_gates": ev.total_gates}
        if self.cfg.memoize:
            self._cache[key] = res
        return res

    def initial_graph(self) -> TopologyGraph:
        """Path over the circuit qubits: always routable, so the baseline exists."""
        return make_line(self.n, self.cfg.max_degree)

    # -- episode ----------------------------------------------------------

    def reset(self) -> np.ndarray:
        g = self.initial_graph()
        if self._d0 is None:
            res = self._measure(g)
            self._d0 = res["objective"]
            if self._d0 <= 0:
                raise ValueError("initial objective must be positive; is the circuit empty?")
            self._consider_best(g, res)
        self.state = EnvState(graph=g, step_index=0, d0=self._d0, d_prev=self._d0)
        self.trace = []
        return g.flatten_state()

    @property
    def d0(self) -> float:
        if self._d0 is None:
            raise RuntimeError("call reset() first")
        return self._d0

    def legal_actions(self) -> np.ndarray:
        return self.state.graph.legal_mask()

    def _consider_best(self, g: TopologyGraph, res: dict) -> None:
        if res["objective"] < self.best_objective:
            self.best_objective = res["objective"]
            self.best_depth = res["depth"]
            self.best_graph = g.copy()
            self.best_trace = self.trace

    def step(self, action: int) -> StepOutcome:
        s = self.state
        if s is None:
            raise RuntimeError("call reset() before step()")
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} out of range [0, {self.n_actions})")
        s.step_index += 1
        i, j = self._pairs[action]
        info = {"action_legal": False, "evaluated": False, "replayed": False,
                "depth": None, "objective": None}
        if not s.graph.can_add(i, j):
            reward = self.cfg.illegal_penalty
        else:
            s.graph.add_edge(i, j)
            info["action_legal"] = True
            cached = self.memory.lookup(action) if self.memory is not None else None
            if cached is not None:
                reward = cached
                info["replayed"] = True
            else:
                self.router_evals += 1
                try:
                    res = self._measure(s.graph)
                except UnroutableError:
                    reward = self.cfg.illegal_penalty
                    info["unroutable"] = True
                else:
                    reward = reward_fn(s.d0, s.d_prev, res["objective"], self.cfg.reward_sign)
                    s.d_prev = res["objective"]
                    info.update(evaluated=True, depth=res["depth"], objective=res["objective"],
                                total_gates=res["total_gates"])
                    self._consider_best(s.graph, res)
                if self.memory is not None:
                    self.memory.insert(action, reward)
        done = s.step_index >= self.cfg.horizon or not s.graph.legal_mask().any()
        self.trace.append({
            "step": s.step_index, "action": int(action), "pair": [i, j],
            "legal": info["action_legal"], "depth": info["depth"],
            "objective": info["objective"], "reward": reward, "replayed": info["replayed"],
        })
        return StepOutcome(s.graph.flatten_state(), float(reward), done, info)


def write_trace_jsonl(trace: list[dict], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
