"""Circuit IR: a restricted OpenQASM 2.0 reader/writer, dependency DAG and depth.

Only a small gate alphabet is modelled. Routing only cares about which qubits
interact, so controlled two-qubit gates outside the alphabet (``cz``, ``cp``,
``crz`` ...) are read as ``cx`` on the same pair.
"""

from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class GateKind(str, Enum):
    H = "h"
    X = "x"
    S = "s"
    T = "t"
    RZ = "rz"
    CX = "cx"
    SWAP = "swap"
    MEASURE = "measure"
    BARRIER = "barrier"

    @property
    def arity(self) -> int:
        return 2 if self in (GateKind.CX, GateKind.SWAP) else 1

    @property
    def counted(self) -> bool:
        """Whether the gate occupies a layer when computing depth."""
        return self not in (GateKind.MEASURE, GateKind.BARRIER)


@dataclass(frozen=True)
class GateOp:
    kind: GateKind
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    clbit: int | None = None

    def __post_init__(self) -> None:
        if len(self.qubits) != self.kind.arity:
            raise ValueError(
                f"{self.kind.value} takes {self.kind.arity} qubit(s), got {len(self.qubits)}"
            )
        if self.kind.arity == 2 and self.qubits[0] == self.qubits[1]:
            raise ValueError(f"two-qubit gate {self.kind.value} on identical qubits {self.qubits}")
        if self.kind is GateKind.RZ and len(self.params) != 1:
            raise ValueError("rz takes exactly one angle")

    @property
    def is_two_qubit(self) -> bool:
        return len(self.qubits) == 2


@dataclass
class Circuit:
    num_qubits: int
    gates: list[GateOp] = field(default_factory=list)
    name: str = "circuit"
    num_clbits: int = 0

    def __post_init__(self) -> None:
        if self.num_qubits < 1:
            raise ValueError("a circuit needs at least one qubit")
        for g in self.gates:
            for q in g.qubits:
                if not 0 <= q < self.num_qubits:
                    raise ValueError(f"qubit {q} out of range for {self.num_qubits} qubits")

    def __len__(self) -> int:
        return len(self.gates)

    @property
    def num_counted(self) -> int:
        return sum(1 for g in self.gates if g.kind.counted)

    @property
    def num_two_qubit(self) -> int:
        return sum(1 for g in self.gates if g.is_two_qubit)

    def gate_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for g in self.gates:
            counts[g.kind.value] = counts.get(g.kind.value, 0) + 1
        return counts

    def interaction_pairs(self) -> set[tuple[int, int]]:
        return {tuple(sorted(g.qubits)) for g in self.gates if g.is_two_qubit}


# --------------------------------------------------------------------------
# QASM reading
# --------------------------------------------------------------------------


class QasmError(ValueError):
    """Raised for malformed or unsupported QASM input; carries a source position."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)


_ONE_QUBIT = {"h": GateKind.H, "x": GateKind.X, "s": GateKind.S, "t": GateKind.T, "rz": GateKind.RZ}
_TWO_QUBIT = {"cx": GateKind.CX, "CX": GateKind.CX, "swap": GateKind.SWAP}
# Read as cx: only the interacting pair matters for routing.
_NORMALIZED_TWO_QUBIT = {
    "cz", "cy", "ch", "cp", "cu1", "cu3", "cu", "crx", "cry", "crz", "csx", "rzz", "rxx", "ryy",
}

_STMT_RE = re.compile(
    r"^(?P<name>[A-Za-z_][A-Za-z0-9_]*)\s*(?:\((?P<params>[^)]*)\))?\s*(?P<args>.*)$", re.S
)
_ARG_RE = re.compile(r"^(?P<reg>[A-Za-z_][A-Za-z0-9_]*)\s*(?:\[\s*(?P<idx>\d+)\s*\])?$")
_REG_DECL_RE = re.compile(r"^(qreg|creg)\s+([A-Za-z_][A-Za-z0-9_]*)\s*\[\s*(\d+)\s*\]$")

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval_angle(expr: str) -> float:
    """Evaluate a literal angle expression such as ``-pi/4`` or ``0.5*pi``."""

    def ev(node: ast.AST) -> float:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        raise ValueError(f"unsupported angle expression {expr!r}")

    return ev(ast.parse(expr.strip(), mode="eval").body)


def _statements(text: str):
    """Yield (statement, line, column) with comments stripped; positions are 1-based."""
    clean = re.sub(r"//[^\n]*", lambda m: " " * len(m.group(0)), text)
    start = 0
    for m in re.finditer(r"[;{}]", clean):
        if m.group(0) != ";":
            line = clean.count("\n", 0, m.start()) + 1
            col = m.start() - clean.rfind("\n", 0, m.start())
            raise QasmError("gate definitions and blocks are not supported", line, col)
        chunk = clean[start : m.start()]
        stripped = chunk.lstrip()
        if stripped:
            pos = start + (len(chunk) - len(stripped))
            line = clean.count("\n", 0, pos) + 1
            col = pos - clean.rfind("\n", 0, pos)
            yield stripped.rstrip(), line, col
        start = m.end()
    tail = clean[start:].strip()
    if tail:
        pos = clean.index(tail, start)
        line = clean.count("\n", 0, pos) + 1
        col = pos - clean.rfind("\n", 0, pos)
        raise QasmError("missing ';' at end of statement", line, col)


def parse_qasm(text: str, name: str = "circuit") -> Circuit:
    """Parse restricted OpenQASM 2.0 text into a :class:`Circuit`."""
    qreg: tuple[str, int] | None = None
    cregs: dict[str, tuple[int, int]] = {}
    nclbits = 0
    gates: list[GateOp] = []

    def qubit_args(arg_text: str, line: int, col: int) -> list[list[int]]:
        if qreg is None:
            raise QasmError("gate used before qreg declaration", line, col)
        out = []
        for raw in arg_text.split(","):
            m = _ARG_RE.match(raw.strip())
            if not m:
                raise QasmError(f"malformed qubit argument {raw.strip()!r}", line, col)
            if m.group("reg") != qreg[0]:
                raise QasmError(f"unknown quantum register {m.group('reg')!r}", line, col)
            if m.group("idx") is None:
                out.append(list(range(qreg[1])))
                continue
            idx = int(m.group("idx"))
            if idx >= qreg[1]:
                raise QasmError(f"qubit index {idx} out of range for {qreg[0]}[{qreg[1]}]", line, col)
            out.append([idx])
        return out

    def clbit_arg(arg: str, line: int, col: int) -> list[int]:
        m = _ARG_RE.match(arg.strip())
        if not m or m.group("reg") not in cregs:
            raise QasmError(f"unknown classical register in {arg.strip()!r}", line, col)
        off, size = cregs[m.group("reg")]
        if m.group("idx") is None:
            return [off + i for i in range(size)]
        idx = int(m.group("idx"))
        if idx >= size:
            raise QasmError(f"classical bit index {idx} out of range", line, col)
        return [off + idx]

    for stmt, line, col in _statements(text):
        if stmt.startswith("OPENQASM"):
            if not re.fullmatch(r"OPENQASM\s+2(\.0)?", stmt):
                raise QasmError(f"unsupported version header {stmt!r}", line, col)
            continue
        if stmt.startswith("include"):
            continue
        decl = _REG_DECL_RE.match(stmt)
        if decl:
            kind, reg, size = decl.group(1), decl.group(2), int(decl.group(3))
            if kind == "qreg":
                if qreg is not None:
                    raise QasmError("multiple qreg declarations are not supported", line, col)
                if size < 1:
                    raise QasmError("qreg must have at least one qubit", line, col)
                qreg = (reg, size)
            else:
                cregs[reg] = (nclbits, size)
                nclbits += size
            continue
        if stmt.startswith("measure"):
            m = re.fullmatch(r"measure\s+(.+?)\s*->\s*(.+)", stmt, re.S)
            if not m:
                raise QasmError("malformed measure statement", line, col)
            (qs,) = qubit_args(m.group(1), line, col)
            cs = clbit_arg(m.group(2), line, col)
            if len(qs) != len(cs):
                raise QasmError("measure register sizes differ", line, col)
            gates.extend(GateOp(GateKind.MEASURE, (q,), clbit=c) for q, c in zip(qs, cs))
            continue

        m = _STMT_RE.match(stmt)
        if not m or not m.group("args").strip():
            raise QasmError(f"cannot parse statement {stmt!r}", line, col)
        gname, args = m.group("name"), m.group("args")
        if gname == "barrier":
            seen: list[int] = []
            for qs in qubit_args(args, line, col):
                seen.extend(q for q in qs if q not in seen)
            gates.extend(GateOp(GateKind.BARRIER, (q,)) for q in seen)
            continue
        if gname in _ONE_QUBIT:
            kind = _ONE_QUBIT[gname]
            params: tuple[float, ...] = ()
            if kind is GateKind.RZ:
                if m.group("params") is None:
                    raise QasmError("rz requires an angle", line, col)
                try:
                    params = (_eval_angle(m.group("params")),)
                except (ValueError, SyntaxError, ZeroDivisionError) as exc:
                    raise QasmError(str(exc), line, col) from None
            elif m.group("params") is not None:
                raise QasmError(f"{gname} takes no parameters", line, col)
            targets = qubit_args(args, line, col)
            if len(targets) != 1:
                raise QasmError(f"{gname} takes one qubit argument", line, col)
            gates.extend(GateOp(kind, (q,), params) for q in targets[0])
            continue
        if gname in _TWO_QUBIT or gname in _NORMALIZED_TWO_QUBIT:
            kind = _TWO_QUBIT.get(gname, GateKind.CX)
            targets = qubit_args(args, line, col)
            if len(targets) != 2 or len(targets[0]) != 1 or len(targets[1]) != 1:
                raise QasmError(f"{gname} takes two single-qubit arguments", line, col)
            a, b = targets[0][0], targets[1][0]
            if a == b:
                raise QasmError(f"two-qubit gate {gname} on identical qubits", line, col)
            gates.append(GateOp(kind, (a, b)))
            continue
        raise QasmError(f"unsupported gate {gname!r}", line, col)

    if qreg is None:
        raise QasmError("no qreg declared")
    return Circuit(qreg[1], gates, name=name, num_clbits=nclbits)


def load_qasm(path) -> Circuit:
    from pathlib import Path

    p = Path(path)
    return parse_qasm(p.read_text(encoding="utf-8"), name=p.stem)


def emit_qasm(c: Circuit) -> str:
    """Canonical OpenQASM 2.0 text; ``parse_qasm(emit_qasm(c))`` reproduces ``c``."""
    lines = ["OPENQASM 2.0;", 'include "qelib1.inc";', f"qreg q[{c.num_qubits}];"]
    nclbits = max([c.num_clbits] + [g.clbit + 1 for g in c.gates if g.clbit is not None])
    if nclbits:
        lines.append(f"creg c[{nclbits}];")
    for g in c.gates:
        args = ",".join(f"q[{q}]" for q in g.qubits)
        if g.kind is GateKind.MEASURE:
            lines.append(f"measure {args} -> c[{g.clbit}];")
        elif g.params:
            lines.append(f"{g.kind.value}({','.join(repr(p) for p in g.params)}) {args};")
        else:
            lines.append(f"{g.kind.value} {args};")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Dependency DAG and depth
# --------------------------------------------------------------------------


@dataclass
class CircuitDag:
    """Dependency DAG over the counted gates (measure and barrier are left out).

    ``nodes[k]`` is the index into ``circuit.gates``; edges link each gate to the
    previous counted gate on each of its qubits.
    """

    nodes: list[int]
    edges: list[tuple[int, int]]
    layers: list[int]

    @classmethod
    def from_circuit(cls, c: Circuit) -> "CircuitDag":
        nodes: list[int] = []
        edges: list[tuple[int, int]] = []
        layers: list[int] = []
        last: dict[int, int] = {}
        for gi, g in enumerate(c.gates):
            if not g.kind.counted:
                continue
            k = len(nodes)
            nodes.append(gi)
            preds = {last[q] for q in g.qubits if q in last}
            edges.extend((p, k) for p in sorted(preds))
            layers.append(1 + max((layers[p] for p in preds), default=-1))
            for q in g.qubits:
                last[q] = k
        return cls(nodes, edges, layers)

    @property
    def depth(self) -> int:
        return max(self.layers) + 1 if self.layers else 0

    def predecessors(self) -> list[list[int]]:
        preds: list[list[int]] = [[] for _ in self.nodes]
        for u, v in self.edges:
            preds[v].append(u)
        return preds


def logical_depth(c: Circuit) -> int:
    """Number of ASAP layers; measure and barrier do not occupy a layer."""
    front = [0] * c.num_qubits
    for g in c.gates:
        if not g.kind.counted:
            continue
        t = max(front[q] for q in g.qubits) + 1
        for q in g.qubits:
            front[q] = t
    return max(front, default=0)


def generate_random_circuit(num_qubits: int, gate_factor: float, seed: int = 0) -> Circuit:
    """Random circuit with ``round(num_qubits * gate_factor)`` gates.

    Half of the gates (in expectation) are CX on a uniform distinct pair, the
    rest are H/X/T on a uniform qubit.
    """
    if num_qubits < 2:
        raise ValueError("num_qubits must be >= 2")
    if gate_factor <= 0:
        raise ValueError("gate_factor must be positive")
    count = int(math.floor(num_qubits * gate_factor + 0.5))
    rng = np.random.default_rng(seed)
    one_q = (GateKind.H, GateKind.X, GateKind.T)
    gates = []
    for _ in range(count):
        if rng.random() < 0.5:
            a, b = rng.choice(num_qubits, size=2, replace=False)
            gates.append(GateOp(GateKind.CX, (int(a), int(b))))
        else:
            kind = one_q[int(rng.integers(3))]
            gates.append(GateOp(kind, (int(rng.integers(num_qubits)),)))
    return Circuit(num_qubits, gates, name=f"random_{num_qubits}q_x{gate_factor:g}_s{seed}")
