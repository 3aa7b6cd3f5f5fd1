import json
from pathlib import Path

import pytest

from rmacep import rma
from rmacep.cli import (
    EXIT_ANALYSIS,
    EXIT_IO,
    EXIT_MISMATCH,
    EXIT_OK,
    EXIT_ORACLE_CAP,
    EXIT_RESOURCE,
    main,
)
from rmacep.events import load_stream

DATA = Path(__file__).parent / "data"
SAMPLE = str(DATA / "sample.csv")
SAMPLE_4 = str(DATA / "sample_4.csv")
SAME_ID = "(T AS x) ; (H AS y) FILTER x.id = y.id"
UNBOUNDED = "(T AS x FILTER x.id = y.id)+ ; (H AS y)"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(out):
    return [json.loads(line) for line in out.splitlines()]


def test_compile_writes_json(capsys):
    code, out, err = run(capsys, "compile", "-e", SAME_ID)
    assert code == EXIT_OK
    a = rma.from_json(out)
    assert a.has_epsilon
    assert err.strip()


def test_compile_eliminate_and_dot(capsys, tmp_path):
    dot, dump = tmp_path / "a.dot", tmp_path / "a.json"
    code, out, _ = run(capsys, "compile", "-e", SAME_ID, "--eliminate-epsilon", "--dot", str(dot), "--out", str(dump))
    assert code == EXIT_OK and out == ""
    a = rma.from_json(dump.read_text())
    assert (len(a.states), len(a.registers), len(a.transitions)) == (3, 1, 4)
    assert dot.read_text().startswith("digraph")


def test_compile_output_is_deterministic(capsys):
    first = run(capsys, "compile", "-e", SAME_ID)[1]
    assert run(capsys, "compile", "-e", SAME_ID)[1] == first


def test_compile_notes_ignored_window(capsys):
    code, _, err = run(capsys, "compile", "-e", SAME_ID + " WINDOW 3")
    assert code == EXIT_OK and "window is ignored" in err


def test_expr_file(capsys, tmp_path):
    path = tmp_path / "e.txt"
    path.write_text(SAME_ID + "\n")
    assert run(capsys, "compile", "--expr-file", str(path))[0] == EXIT_OK


def test_unroll(capsys):
    code, out, _ = run(capsys, "unroll", "-e", SAME_ID, "--window", "3")
    assert code == EXIT_OK
    a = rma.from_json(out)
    assert (len(a.states), len(a.registers), len(a.transitions)) == (8, 2, 8)


def test_unroll_needs_window(capsys):
    assert run(capsys, "unroll", "-e", SAME_ID)[0] == EXIT_ANALYSIS


def test_unroll_without_accepting_walk(capsys):
    assert run(capsys, "unroll", "-e", SAME_ID, "--window", "1")[0] == EXIT_ANALYSIS


def test_determinize_round_trip(capsys, tmp_path):
    dump = tmp_path / "a.json"
    run(capsys, "compile", "-e", SAME_ID, "--eliminate-epsilon", "--out", str(dump))
    code, out, _ = run(capsys, "determinize", "--automaton", str(dump))
    assert code == EXIT_OK
    d = rma.from_json(out)
    s = load_stream(Path(SAMPLE_4).read_text())
    assert rma.run_stream(d, s).union == {frozenset({0, 3}), frozenset({1, 3})}


def test_determinize_agnostic_needs_window(capsys):
    assert run(capsys, "determinize", "-e", SAME_ID, "--output-agnostic")[0] == EXIT_ANALYSIS


def test_run_sample(capsys):
    code, out, _ = run(capsys, "run", "-e", SAME_ID, "--stream", SAMPLE)
    assert code == EXIT_OK
    lines = report(out)
    assert lines[0] == {"n": 4, "matches": [[0, 3], [1, 3]]}
    assert lines[1] == {"n": 5, "matches": [[0, 4], [1, 4]]}


@pytest.mark.parametrize("flags", [[], ["--determinize"], ["--window", "3"], ["--window", "3", "--determinize"]])
def test_run_variants_agree_with_oracle(capsys, flags):
    code, out, _ = run(capsys, "run", "-e", SAME_ID, "--stream", SAMPLE, *flags)
    assert code == EXIT_OK
    window = [f for f in flags if f != "--determinize"]
    code, want, _ = run(capsys, "oracle", "-e", SAME_ID, "--stream", SAMPLE, *window)
    assert code == EXIT_OK
    assert report(out) == report(want)


def test_run_start_index(capsys):
    code, out, _ = run(capsys, "run", "-e", SAME_ID, "--stream", SAMPLE, "--start-index", "1")
    assert code == EXIT_OK
    assert {tuple(m) for line in report(out) for m in line["matches"]} == {(1, 3), (1, 4)}


def test_run_output_agnostic(capsys):
    code, out, _ = run(capsys, "run", "-e", SAME_ID, "--stream", SAMPLE, "--window", "3", "--output-agnostic")
    assert code == EXIT_OK
    assert report(out)[0] == {"n": 4, "matches": [[0, 1, 2, 3]]}


def test_run_resource_limit(capsys):
    code, _, err = run(capsys, "run", "-e", SAME_ID, "--stream", SAMPLE, "--max-configs", "2")
    assert code == EXIT_RESOURCE and "live:" in err


def test_missing_source(capsys):
    assert run(capsys, "run", "--stream", SAMPLE)[0] == EXIT_ANALYSIS


def test_unbounded_expression(capsys):
    code, _, err = run(capsys, "run", "-e", UNBOUNDED, "--stream", SAMPLE)
    assert code == EXIT_ANALYSIS
    assert "y ∉ bound(T AS x)" in err


def test_parse_error(capsys):
    assert run(capsys, "compile", "-e", "T AS")[0] == EXIT_ANALYSIS


def test_bad_window(capsys):
    assert run(capsys, "run", "-e", SAME_ID, "--stream", SAMPLE, "--window", "0")[0] == EXIT_ANALYSIS


def test_missing_stream_file(capsys, tmp_path):
    assert run(capsys, "run", "-e", SAME_ID, "--stream", str(tmp_path / "none.csv"))[0] == EXIT_IO


def test_malformed_stream(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("type:symbol,id:integer\nT,notanumber\n")
    assert run(capsys, "run", "-e", SAME_ID, "--stream", str(bad))[0] == EXIT_IO


def test_malformed_automaton(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert run(capsys, "run", "--automaton", str(bad), "--stream", SAMPLE)[0] == EXIT_IO


def test_oracle_cap(capsys):
    code = run(capsys, "oracle", "-e", SAME_ID, "--stream", SAMPLE, "--oracle-cap", "3")[0]
    assert code == EXIT_ORACLE_CAP


def test_diff_equal(capsys):
    code, out, _ = run(capsys, "diff", "-e", SAME_ID, "--stream", SAMPLE)
    assert code == EXIT_OK and out == "equal: 4 matches\n"


def test_diff_mismatch(capsys, tmp_path):
    dump = tmp_path / "other.json"
    run(capsys, "compile", "-e", "(T AS x) ; (H AS y)", "--out", str(dump))
    code, out, _ = run(capsys, "diff", "-e", SAME_ID, "--automaton", str(dump), "--stream", SAMPLE)
    assert code == EXIT_MISMATCH
    assert "engine only at 4: [2, 3]" in out


def test_check_defaults(capsys):
    code, out, _ = run(capsys, "check", "-e", SAME_ID)
    assert code == EXIT_OK
    assert out.splitlines()[:3] == ["bounded: pass", "coverage: pass", "per-output: pass"]
    assert "output-agnostic: fail (not requested)" in out


def test_check_output_agnostic_requested(capsys):
    code = run(capsys, "check", "-e", SAME_ID, "--checks", "output-agnostic")[0]
    assert code == EXIT_ANALYSIS
    code, out, _ = run(
        capsys, "check", "-e", SAME_ID, "--window", "3", "--output-agnostic", "--checks", "coverage,output-agnostic"
    )
    assert code == EXIT_OK and "output-agnostic: pass" in out


def test_check_unbounded(capsys):
    code, out, _ = run(capsys, "check", "-e", UNBOUNDED)
    assert code == EXIT_ANALYSIS and out.startswith("bounded: fail")


def test_check_with_stream_probes(capsys):
    code, out, _ = run(capsys, "check", "-e", SAME_ID, "--stream", SAMPLE, "--probes", "50")
    assert code == EXIT_OK and "per-output: pass" in out


def test_argparse_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["compile"])
    assert info.value.code == 2
