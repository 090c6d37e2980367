"""Scalar circuit metrics: idle ratio and classical distribution fidelity."""

from __future__ import annotations

from pathlib import Path

import numpy as np

PROB_TOL = 1e-9


def idle_ratio(gates: int, qubits: int, depth: int) -> float:
    """Fraction of qubit time slots not occupied by a gate: ``1 - gates/(qubits*depth)``."""
    if qubits < 1 or depth < 1:
        raise ValueError(f"idle ratio undefined for qubits={qubits}, depth={depth}")
    if not 1 <= gates <= qubits * depth:
        raise ValueError(f"gates={gates} outside [1, qubits*depth={qubits * depth}]")
    return 1.0 - gates / (qubits * depth)


def _check_distribution(p: np.ndarray, label: str) -> None:
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{label} must be a non-empty vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"{label} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"{label} sums to {p.sum():.12g}, not 1")


def distribution_fidelity(p, q) -> float:
    """Squared Bhattacharyya coefficient ``(sum_i sqrt(p_i q_i))**2``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    _check_distribution(p, "P")
    _check_distribution(q, "Q")
    return float(min(1.0, np.sqrt(p * q).sum() ** 2))


def read_distribution(path: str | Path) -> np.ndarray:
    """Read a probability vector stored one value per line."""
    values = [float(s) for s in Path(path).read_text().split() if s.strip()]
    return np.asarray(values, dtype=float)
