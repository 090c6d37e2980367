from __future__ import annotations

import json

import pytest

from qtopo.cli import EXIT_IO, EXIT_OK, EXIT_PARSE, main
from qtopo.circuit import load_qasm
from qtopo.router import evaluate_topology
from qtopo.topology import load_edge_list, make_grid

GHZ = """OPENQASM 2.0;
include "qelib1.inc";
qreg q[5];
creg c[5];
h q[0];
cx q[0],q[1];
cx q[0],q[2];
cx q[0],q[3];
cx q[0],q[4];
measure q -> c;
"""


@pytest.fixture
def ghz(tmp_path):
    p = tmp_path / "ghz.qasm"
    p.write_text(GHZ)
    return p


def run(argv, capsys):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timing.csv"}


def test_route_reports_mean_over_seeds(ghz, tmp_path, capsys):
    code, out = run(["route", ghz, "--topology", "grid:10x10", "--seeds", 3, "--out", tmp_path / "r"], capsys)
    assert code == EXIT_OK
    report = json.loads(out.out)
    ev = evaluate_topology(load_qasm(ghz), make_grid(10, 10), (0, 1, 2))
    assert report["depth"] == ev.depth
    assert report["depth"] == sum(r.depth for r in ev.runs) / 3


def test_line_is_not_better_than_grid(tmp_path, capsys):
    depths = {}
    for topo in ("line:9", "grid:3x3"):
        code, out = run(["route", "random:9:6:2", "--topology", topo, "--out", tmp_path / topo[:4]], capsys)
        assert code == EXIT_OK
        depths[topo] = json.loads(out.out)["depth"]
    assert depths["line:9"] >= depths["grid:3x3"]


def test_degree_five_topology_rejected(ghz, tmp_path, capsys):
    star = tmp_path / "star.edges"
    star.write_text("6\n" + "".join(f"0 {j}\n" for j in range(1, 6)))
    code, out = run(["route", ghz, "--topology", f"file:{star}", "--out", tmp_path / "o"], capsys)
    assert code == EXIT_PARSE and "degree" in out.err


def test_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.qasm"
    bad.write_text("OPENQASM 2.0;\nqreg q[2];\nfoo q[0];\n")
    code, out = run(["route", bad, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_PARSE and "line 3" in out.err
    code, _ = run(["route", tmp_path / "missing.qasm", "--out", tmp_path / "o"], capsys)
    assert code == EXIT_IO


def test_train_outputs_and_best_not_above_start(tmp_path, capsys):
    out_dir = tmp_path / "t"
    code, out = run(["train", "random:6:10:0", "--iterations", 50, "--quiet", "--out", out_dir], capsys)
    assert code == EXIT_OK
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["best_depth"] <= summary["initial_objective"]
    assert load_edge_list(out_dir / "best_topology.edges").n == 6
    for name in ("metrics.csv", "best_trace.jsonl", "checkpoint.npz", "run_config.json", "timing.csv"):
        assert (out_dir / name).exists()
    rows = (out_dir / "metrics.csv").read_text().splitlines()
    assert len(rows) == 51
    best = [float(r.split(",")[3]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(best, best[1:]))


def test_replay_threshold_zero_evaluates_every_step(tmp_path, capsys):
    out_dir = tmp_path / "t0"
    code, _ = run(["train", "random:5:4:1", "--iterations", 3, "--batch-size", 64,
                   "--replay-threshold", 0, "--quiet", "--out", out_dir], capsys)
    assert code == EXIT_OK
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["router_evals"] == summary["env_steps"]
    assert summary["replay"] is None


def test_gates_objective(tmp_path, capsys):
    out_dir = tmp_path / "tg"
    code, _ = run(["train", "random:5:4:1", "--iterations", 2, "--batch-size", 64,
                   "--objective", "gates", "--quiet", "--out", out_dir], capsys)
    assert code == EXIT_OK
    summary = json.loads((out_dir / "summary.json").read_text())
    assert summary["objective"] == "gates"
    assert summary["best_objective"] != summary["best_depth"]


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("# desk run\niterations = 2\nbatch-size = 32\nreplay_threshold = 0\n")
    out_dir = tmp_path / "c"
    code, _ = run(["train", "random:5:2:0", "--config", cfg, "--iterations", 1, "--quiet",
                   "--out", out_dir], capsys)
    assert code == EXIT_OK
    opts = json.loads((out_dir / "run_config.json").read_text())["options"]
    assert opts["iterations"] == 1 and opts["batch_size"] == 32 and opts["replay_threshold"] == 0
    cfg.write_text("bogus = 1\n")
    code, out = run(["train", "random:5:2:0", "--config", cfg, "--out", out_dir], capsys)
    assert code == EXIT_PARSE and "bogus" in out.err


def test_output_root_env_var(ghz, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("QTOPO_OUT", str(tmp_path / "root"))
    code, _ = run(["route", ghz, "--topology", "line:5"], capsys)
    assert code == EXIT_OK
    assert (tmp_path / "root" / "route" / "route.json").exists()


def test_layout_command(tmp_path, capsys):
    topo = tmp_path / "c4.edges"
    topo.write_text("4\n0 1\n1 2\n2 3\n0 3\n")
    code, out = run(["layout", topo, "--restarts", 10, "--out", tmp_path / "l"], capsys)
    assert code == EXIT_OK
    report = json.loads(out.out)
    assert report["crossings"] == 0
    assert "<svg" in (tmp_path / "l" / "layout.svg").read_text()
    assert (tmp_path / "l" / "layout.csv").read_text().splitlines()[0] == "qubit,row,col"


def test_metrics_command(tmp_path, capsys):
    code, out = run(["metrics", "idle", "--gates", 108, "--qubits", 5, "--depth", 92], capsys)
    assert code == EXIT_OK and json.loads(out.out)["value"] == pytest.approx(0.765217, abs=1e-6)
    p, q = tmp_path / "p.txt", tmp_path / "q.txt"
    p.write_text("0.5\n0.5\n")
    q.write_text("0.25\n0.75\n")
    code, out = run(["metrics", "fidelity", p, q], capsys)
    assert json.loads(out.out)["value"] == pytest.approx(0.933013, abs=1e-6)
    code, out = run(["metrics", "depth", "random:6:2:0"], capsys)
    assert code == EXIT_OK


@pytest.mark.parametrize("argv", [
    ["route", "random:7:5:3", "--topology", "grid:3x3"],
    ["train", "random:5:3:2", "--iterations", 3, "--batch-size", 64, "--quiet"],
    ["layout", "{topo}", "--restarts", 3, "--sparse", 2.0],
    ["bench", "gen:5-6:3:2:0", "--iterations", 2, "--batch-size", 32, "--quiet"],
])
def test_commands_are_reproducible(argv, tmp_path, capsys):
    topo = tmp_path / "g.edges"
    topo.write_text("6\n0 1\n1 2\n2 3\n3 4\n4 5\n0 5\n1 4\n")
    argv = [str(a).format(topo=topo) for a in argv]
    outputs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        code, out = run(argv + ["--out", d], capsys)
        assert code == EXIT_OK
        outputs.append((files(d), out.out))
    assert outputs[0] == outputs[1]
