import json

from xhealsim import cli


def run_cli(args):
    return cli.main(args)


def test_gen_line_count_and_determinism(tmp_path):
    out1 = tmp_path / "a.jsonl"
    out2 = tmp_path / "b.jsonl"
    argv = ["gen", "--strategy", "uniform", "--n0", "50", "--steps", "300",
            "--seed", "7"]
    assert run_cli(argv + ["-o", str(out1)]) == 0
    assert run_cli(argv + ["-o", str(out2)]) == 0
    text = out1.read_text()
    assert len(text.splitlines()) == 302
    assert text == out2.read_text()


def test_gen_unknown_strategy_exits_2(capsys):
    code = run_cli(["gen", "--strategy", "chaos", "--n0", "5", "--steps", "1",
                    "-o", "-"])
    assert code == 2
    assert "chaos" in capsys.readouterr().err


def test_run_delete_only_trace_to_empty(tmp_path):
    trace = tmp_path / "t.jsonl"
    report = tmp_path / "r.csv"
    assert run_cli(["gen", "--strategy", "delete-only", "--n0", "12",
                    "--steps", "12", "--seed", "3", "-o", str(trace)]) == 0
    assert run_cli(["run", "--trace", str(trace), "--seed", "3",
                    "-o", str(report)]) == 0
    rows = report.read_text().splitlines()
    header = rows[0].split(",")
    final = rows[-1].split(",")
    assert final[header.index("n_alive")] == "0"
    assert final[header.index("t")] == "12"


def test_run_reports_are_byte_identical_for_same_seed(tmp_path):
    trace = tmp_path / "t.jsonl"
    run_cli(["gen", "--strategy", "uniform", "--n0", "25", "--steps", "60",
             "--seed", "11", "-o", str(trace)])
    r1, r2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    assert run_cli(["run", "--trace", str(trace), "--seed", "11", "-o", str(r1)]) == 0
    assert run_cli(["run", "--trace", str(trace), "--seed", "11", "-o", str(r2)]) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_run_fault_detected(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    run_cli(["gen", "--strategy", "uniform", "--n0", "30", "--steps", "50",
             "--insert-fraction", "0.3", "--seed", "2", "-o", str(trace)])
    clean = run_cli(["run", "--trace", str(trace), "--seed", "2", "-o",
                     str(tmp_path / "clean.csv")])
    assert clean == 0
    for fault in ("skip-heal", "drop-black-edge"):
        code = run_cli(["run", "--trace", str(trace), "--seed", "2",
                        "--fault", fault, "-o", str(tmp_path / f"{fault}.csv")])
        err = capsys.readouterr().err
        assert code == 1, fault
        assert "VIOLATION" in err


def test_run_requires_trace_or_strategy(tmp_path, capsys):
    assert run_cli(["run", "-o", "-"]) == 2


def test_run_missing_trace_file_exits_2(tmp_path):
    assert run_cli(["run", "--trace", str(tmp_path / "nope.jsonl"), "-o", "-"]) == 2


def test_run_adaptive_records_replayable_trace(tmp_path):
    rec = tmp_path / "rec.jsonl"
    rep1 = tmp_path / "r1.csv"
    rep2 = tmp_path / "r2.csv"
    assert run_cli(["run", "--strategy", "target-bridge", "--n0", "20",
                    "--steps", "40", "--insert-fraction", "0.5", "--seed", "4",
                    "--record", str(rec), "-o", str(rep1)]) == 0
    assert run_cli(["run", "--trace", str(rec), "--seed", "4",
                    "-o", str(rep2)]) == 0
    assert rep1.read_bytes() == rep2.read_bytes()


def test_verify_snapshot_roundtrip(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    snap = tmp_path / "s.json"
    run_cli(["gen", "--strategy", "uniform", "--n0", "20", "--steps", "30",
             "--seed", "5", "-o", str(trace)])
    assert run_cli(["run", "--trace", str(trace), "--seed", "5",
                    "--snapshot", str(snap), "-o", str(tmp_path / "r.csv")]) == 0
    assert run_cli(["verify", "--snapshot", str(snap)]) == 0
    out = capsys.readouterr().out
    assert "coherent" in out
    assert run_cli(["verify", "--snapshot", str(snap),
                    "--trace", str(trace)]) == 0


def test_verify_detects_corrupted_color(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    snap = tmp_path / "s.json"
    run_cli(["gen", "--strategy", "uniform", "--n0", "20", "--steps", "30",
             "--seed", "5", "-o", str(trace)])
    run_cli(["run", "--trace", str(trace), "--seed", "5",
             "--snapshot", str(snap), "-o", str(tmp_path / "r.csv")])
    data = json.loads(snap.read_text())
    victim = data["edges"][0]
    victim["colors"] = victim["colors"] + [424242]
    victim["kinds"] = dict(victim["kinds"], **{"424242": "primary"})
    snap.write_text(json.dumps(data))
    code = run_cli(["verify", "--snapshot", str(snap)])
    assert code == 1
    assert "VIOLATION" in capsys.readouterr().err


def test_verify_missing_or_malformed_snapshot(tmp_path, capsys):
    assert run_cli(["verify", "--snapshot", str(tmp_path / "none.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli(["verify", "--snapshot", str(bad)]) == 2
    wrong_version = tmp_path / "v9.json"
    wrong_version.write_text('{"v": 9}')
    assert run_cli(["verify", "--snapshot", str(wrong_version)]) == 2


def test_report_summary_and_ordering(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    run_cli(["gen", "--strategy", "uniform", "--n0", "20", "--steps", "40",
             "--seed", "6", "-o", str(trace)])
    r1, r2 = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli(["run", "--trace", str(trace), "--seed", "6", "-o", str(r1)])
    run_cli(["run", "--trace", str(trace), "--seed", "7", "-o", str(r2)])
    assert run_cli(["report", str(r2), str(r1)]) == 0
    out = capsys.readouterr().out
    assert out.index(str(r1)) < out.index(str(r2))  # sorted by filename
    assert "min degree slack" in out and "max stretch" in out


def test_report_empty_file_exits_2(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run_cli(["report", str(empty)]) == 2


def test_run_multi_seed_needs_placeholder(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    run_cli(["gen", "--strategy", "uniform", "--n0", "10", "--steps", "5",
             "--seed", "1", "-o", str(trace)])
    code = run_cli(["run", "--trace", str(trace), "--seeds", "1,2",
                    "-o", str(tmp_path / "r.csv")])
    assert code == 2
    assert run_cli(["run", "--trace", str(trace), "--seeds", "1,2",
                    "-o", str(tmp_path / "r{seed}.csv")]) == 0
    assert (tmp_path / "r1.csv").exists() and (tmp_path / "r2.csv").exists()


def test_run_parallel_jobs_match_sequential(tmp_path):
    trace = tmp_path / "t.jsonl"
    run_cli(["gen", "--strategy", "uniform", "--n0", "15", "--steps", "20",
             "--seed", "1", "-o", str(trace)])
    assert run_cli(["run", "--trace", str(trace), "--seeds", "3,4", "--jobs", "2",
                    "-o", str(tmp_path / "par{seed}.csv")]) == 0
    assert run_cli(["run", "--trace", str(trace), "--seeds", "3,4",
                    "-o", str(tmp_path / "seq{seed}.csv")]) == 0
    for seed in (3, 4):
        assert ((tmp_path / f"par{seed}.csv").read_bytes()
                == (tmp_path / f"seq{seed}.csv").read_bytes())
