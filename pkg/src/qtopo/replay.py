"""Action-keyed reward cache with a bounded number of reuses per entry."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class ReplayStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0

    @property
    def lookups(self) -> int:
        return self.hits + self.misses

    @property
    def evaluations_saved(self) -> int:
        return self.hits

    def as_dict(self) -> dict[str, int]:
        return {
            "hits": self.hits,
            "misses": self.misses,
            "evictions": self.evictions,
            "evaluations_saved": self.evaluations_saved,
        }


class ReplayMemory:
    """Maps an action to ``[reward, remaining_uses]``.

    The key deliberately ignores the state: a cached reward is reused for the
    same action from any graph until its use budget runs out, after which the
    next request is a miss and triggers a fresh evaluation.
    """

    def __init__(self, threshold: int = 2):
        if threshold < 1:
            raise ValueError(f"replay threshold must be >= 1, got {threshold}")
        self.threshold = threshold
        self.entries: dict[int, list] = {}
        self.stats = ReplayStats()

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, action: int) -> bool:
        return action in self.entries

    def lookup(self, action: int) -> float | None:
        """Return the cached reward (spending one use) or ``None`` on a miss."""
        entry = self.entries.get(action)
        if entry is None:
            self.stats.misses += 1
            return None
        self.stats.hits += 1
        entry[1] -= 1
        if entry[1] <= 0:
            del self.entries[action]
            self.stats.evictions += 1
        return entry[0]

    def insert(self, action: int, reward: float, threshold: int | None = None) -> None:
        threshold = self.threshold if threshold is None else threshold
        if threshold < 1:
            raise ValueError(f"replay threshold must be >= 1, got {threshold}")
        self.entries[action] = [float(reward), int(threshold)]

    def clear(self) -> None:
        self.entries.clear()

    def merge(self, other: "ReplayMemory") -> None:
        """Union with ``other``; on conflicts the entry with more remaining uses wins."""
        for action, (reward, remaining) in other.entries.items():
            mine = self.entries.get(action)
            if mine is None or remaining > mine[1]:
                self.entries[action] = [reward, remaining]
        self.stats.hits += other.stats.hits
        self.stats.misses += other.stats.misses
        self.stats.evictions += other.stats.evictions
