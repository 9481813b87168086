from __future__ import annotations

import csv
import io
import json

import pytest

from mcheck.asm import parse_file
from mcheck.bench import CSV_COLUMNS, render_csv, render_json, run_row, run_suite
from mcheck.cli import main
from mcheck.explorer import SearchConfig, explore
from mcheck.plot import plot_ratios, plot_states
from mcheck.report import render_report

from oracles import CORPUS


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_trivial_program(tmp_path, capsys):
    f = tmp_path / "t.asm"
    f.write_text("fn main:\n  halt\n")
    code, out, _ = run(capsys, "run", str(f), "--output", "json")
    assert code == 0 and json.loads(out)["states"] >= 1


@pytest.mark.parametrize("mode", ["abstracted", "reference"])
def test_deadlock_exit(capsys, mode):
    code, out, _ = run(capsys, "run", str(CORPUS / "deadlock_two_locks.asm"), f"--mode={mode}", "--output=json")
    assert code == 1 and json.loads(out)["violation"]["kind"] == "deadlock"


def test_unknown_method(capsys):
    code, out, _ = run(capsys, "run", str(CORPUS / "unknown_method.asm"))
    assert code == 1 and "unsupported-native-method" in out


@pytest.mark.parametrize("argv", [
    ["run", "/nonexistent/file.asm"],
    ["run", str(CORPUS / "lock_counter.asm"), "--mode", "fast"],
    ["run", str(CORPUS / "lock_counter.asm"), "--define", "N"],
    ["run", str(CORPUS / "lock_counter.asm"), "--define", "NOPE=1"],
    ["run", str(CORPUS / "lock_counter.asm"), "--max-depth", "0"],
    ["run", str(CORPUS / "lock_counter.asm"), "--trace-filter", "maybe"],
    ["bench", "--benchmarks", "queue"],
    ["bench", "--threads", "1"],
    [],
])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_parse_error(tmp_path, capsys):
    f = tmp_path / "bad.asm"
    f.write_text("fn main:\n  jmp nowhere\n")
    code, _, err = run(capsys, "run", str(f))
    assert code == 2 and "nowhere" in err


def test_define_overrides(capsys):
    path = str(CORPUS / "lock_assert.asm")
    _, base, _ = run(capsys, "run", path, "--output", "json")
    _, more, _ = run(capsys, "run", path, "--define", "N=3", "--output", "json")
    assert json.loads(more)["states"] > json.loads(base)["states"]


def test_text_output_and_filter_flag(capsys):
    path = str(CORPUS / "lock_assert.asm")
    _, on, _ = run(capsys, "run", path, "--mode", "reference")
    _, off, _ = run(capsys, "run", path, "--mode", "reference", "--trace-filter", "off")
    assert "violation: assertion" in on and "[lib]" not in on
    assert "[lib]" in off


def test_peer_gc_flag(capsys):
    path = str(CORPUS / "lock_abandon.asm")
    _, a, _ = run(capsys, "run", path, "--peer-gc", "on", "--output", "json")
    _, b, _ = run(capsys, "run", path, "--peer-gc", "off", "--output", "json")
    a, b = json.loads(a), json.loads(b)
    a.pop("time_ms"), b.pop("time_ms")
    assert a == b


def test_render_report():
    ok = explore(parse_file(CORPUS / "lock_counter.asm"))
    d = json.loads(render_report(ok, "json"))
    assert d["violation"] is None
    assert list(d) == ["states", "transitions", "max_depth", "time_ms", "peak_state_bytes",
                       "interned_versions", "violation"]
    bad = explore(parse_file(CORPUS / "deadlock_two_locks.asm"))
    assert json.loads(render_report(bad, "json"))["violation"]["kind"] == "deadlock"
    assert render_report(bad) == render_report(bad)
    with pytest.raises(ValueError):
        render_report(bad, "xml")


def test_bench_command_writes_outputs(tmp_path, capsys):
    out_dir = tmp_path / "out"
    code, out, err = run(capsys, "bench", "--benchmarks", "lock,atomicint", "--threads", "2",
                         "--repeat", "2", "--out-dir", str(out_dir))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 4
    assert float(rows[0]["state_ratio"]) > 1
    for name in ("bench.csv", "bench.json", "summary.txt", "ratios.png", "states.png"):
        assert (out_dir / name).stat().st_size > 0
    assert (out_dir / "ratios.png").read_bytes()[:4] == b"\x89PNG"
    assert "speedup_everywhere: yes" in err


def test_bench_json(capsys):
    code, out, _ = run(capsys, "bench", "--benchmarks", "atomicint", "--threads", "2",
                       "--repeat", "1", "--output", "json")
    doc = json.loads(out)
    assert code == 0 and doc["repeat"] == 1 and len(doc["rows"]) == 2
    assert doc["summary"]["complete"]


def test_timeout_marks_row_incomplete():
    row = run_row("lock", 3, "reference", repeat=1, time_limit=0.01)
    assert not row.completed and row.state_ratio is None


def test_ratios_and_ordering_small():
    result = run_suite(threads=(2, 3), repeat=1)
    for n in (2, 3):
        ratios = {b: result.ratios(b)[n] for b in ("lock", "map", "atomicint")}
        assert min(ratios, key=ratios.get) == "atomicint"
        assert all(r >= 1 for r in ratios.values())
    lock = result.ratios("lock")
    assert lock[3] >= lock[2] > 1
    text = render_csv(result)
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS)
    assert json.loads(render_json(result))["summary"]["lock_state_ratio_nondecreasing"]


def test_plots(tmp_path):
    result = run_suite(["atomicint"], (2, 3), repeat=1)
    for fn, name in ((plot_ratios, "r.png"), (plot_states, "s.png")):
        path = fn(result, tmp_path / name)
        assert path.read_bytes()[:4] == b"\x89PNG"


def test_benchmarks_pass_in_both_modes():
    from mcheck.bench import load_benchmark

    for name in ("lock", "map", "atomicint"):
        for mode in ("abstracted", "reference"):
            r = explore(load_benchmark(name, 2), SearchConfig(mode=mode))
            assert r.violation is None and r.completed
