import io
import json

import pytest

from app.api import commands
from app.main import main
from app.models.schemas import AuditFinding, FindingKind
from app.services.workload import gen_random, gen_vertex_mix, stream_codec


@pytest.fixture
def random_stream(tmp_path):
    path = tmp_path / "random.txt"
    stream_codec.write(path, 16, gen_random(16, 120, seed=5))
    return path


@pytest.fixture
def vertex_stream(tmp_path):
    path = tmp_path / "vertex.txt"
    stream_codec.write(path, 12, gen_vertex_mix(12, 80, vertex_rate=0.2, seed=2))
    return path


def _write(tmp_path, text):
    path = tmp_path / "stream.txt"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "simulate" in capsys.readouterr().out


def test_usage_errors_exit_one(capsys):
    assert main([]) == 1
    assert main(["run", "--algo", "bogus", "--stream", "x"]) == 1
    assert main(["gen", "random"]) == 1
    assert main(["gen", "adversary", "--n", "12"]) == 1


def test_gen_writes_stream_to_stdout(capsys):
    assert main(["gen", "random", "--n", "10", "--steps", "25", "--seed", "3"]) == 0
    n, events = stream_codec.loads(capsys.readouterr().out)
    assert n == 10
    assert events == gen_random(10, 25, seed=3)


def test_gen_writes_file(tmp_path):
    out = tmp_path / "adv.txt"
    assert main(["gen", "adversary", "--n", "16", "--out", str(out)]) == 0
    n, events = stream_codec.read(out)
    assert n == 16
    assert len(events) == 2 * 16 + 2 * 4 * 3 + 1


@pytest.mark.parametrize("algo", ["sublinear", "auto", "delta"])
def test_run_verify_reports(random_stream, capsys, algo):
    assert main(["run", "--algo", algo, "--stream", str(random_stream), "--verify"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["algo"] == algo
    assert report["n"] == 16
    assert report["updates"] == 120
    assert report["epochs"]
    assert report["rounds"] is None


def test_run_per_update_lines(random_stream, capsys):
    assert main(["run", "--stream", str(random_stream), "--per-update"]) == 0
    out = capsys.readouterr().out
    summary, _, tail = out.partition("\n}\n")
    assert json.loads(summary + "\n}")["updates"] == 120
    lines = [json.loads(line) for line in tail.splitlines()]
    assert [line["index"] for line in lines] == list(range(120))


def test_run_reads_stdin(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("N 3\n+ 0 1\n+ 1 2\n"))
    assert main(["run", "--stream", "-"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["final_m"] == 2
    assert report["final_mis_size"] == 2


@pytest.mark.parametrize(
    "text",
    [
        "N 3\n+ 0 1\n+ 1 0\n",     # duplicate insert
        "N 3\n- 0 1\n",            # missing edge
        "N 3\n+ 1 1\n",            # self-loop
        "N 3\n+ 0 7\n",            # out of range
        "N 3\n+ 0 1 2\n",          # malformed
        "N 3\n+V 0\n",             # vertex ops need the simulator
    ],
)
def test_run_bad_input_exits_two(tmp_path, text):
    assert main(["run", "--stream", _write(tmp_path, text)]) == 2


def test_run_missing_file_exits_two(tmp_path):
    assert main(["run", "--stream", str(tmp_path / "absent.txt")]) == 2


def test_delta_bound_violation_exits_two(tmp_path):
    stream = _write(tmp_path, "N 4\n+ 0 1\n+ 0 2\n")
    assert main(["run", "--algo", "delta", "--delta-bound", "1", "--stream", stream]) == 2


def test_audit_failure_exits_three(random_stream, monkeypatch, capsys):
    def broken_audit(engine):
        return [AuditFinding(kind=FindingKind.INV1_MISMATCH, vertex=0, expected=1, stored=0)]

    monkeypatch.setattr(commands, "audit_invariants", broken_audit)
    assert main(["run", "--stream", str(random_stream), "--verify"]) == 3
    witness = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert witness["findings"][0]["kind"] == "Inv1Mismatch"


def test_simulate_vertex_stream(vertex_stream, capsys):
    assert main(["simulate", "--stream", str(vertex_stream), "--verify"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["algo"] == "simulate"
    assert report["updates"] == 80
    assert report["rounds"] > 0
    assert report["violations"]["round"] == 0


def test_simulate_bad_input_exits_two(tmp_path):
    assert main(["simulate", "--stream", _write(tmp_path, "N 3\n-V 0\n-V 0\n")]) == 2


def test_report_file_matches_stdout(random_stream, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    assert main(["run", "--stream", str(random_stream), "--report", str(report_path)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert json.loads(report_path.read_text(encoding="utf-8")) == printed


def test_reports_are_deterministic(random_stream, capsys):
    """Two runs over the same stream differ only in wall time."""
    outputs = []
    for _ in range(2):
        assert main(["run", "--algo", "auto", "--stream", str(random_stream), "--per-update"]) == 0
        summary, _, tail = capsys.readouterr().out.partition("\n}\n")
        report = json.loads(summary + "\n}")
        report.pop("wall_time_s")
        outputs.append((report, tail))
    assert outputs[0] == outputs[1]


def test_simulate_adversary_shows_one_large_update(tmp_path, capsys):
    stream = tmp_path / "adv.txt"
    assert main(["gen", "adversary", "--n", "64", "--out", str(stream)]) == 0
    assert main(["simulate", "--stream", str(stream)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["max_update_adjustments"] >= 16


def test_simulate_empty_stream(tmp_path, capsys):
    assert main(["simulate", "--stream", _write(tmp_path, "N 5\n")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert (report["updates"], report["rounds"], report["messages"], report["total_adjustments"]) == (0, 0, 0, 0)
