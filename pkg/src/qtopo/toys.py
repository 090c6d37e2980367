"""Tiny environments with known optima, used to sanity-check the trainer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class _Outcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


class BanditEnv:
    """One-step episodes; pulling arm ``k`` pays ``payouts[k]`` deterministically."""

    def __init__(self, payouts=(0.1, 0.3, 0.5, 0.7, 0.9)):
        self.payouts = np.asarray(payouts, dtype=float)
        self.n_actions = len(self.payouts)
        self.obs_dim = 1
        self.memory = None

    @property
    def optimum(self) -> float:
        return float(self.payouts.max())

    def reset(self) -> np.ndarray:
        return np.ones(1)

    def legal_actions(self) -> np.ndarray:
        return np.ones(self.n_actions, dtype=bool)

    def step(self, action: int) -> _Outcome:
        return _Outcome(np.ones(1), float(self.payouts[action]), True, {})
