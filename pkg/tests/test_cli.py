import csv
import io
import json

import numpy as np
import pytest

from seqr import cli
from seqr.container import load_library


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def built(tmp_path, capsys):
    lib, qs = tmp_path / "lib.sqrl", tmp_path / "q.bin"
    code, _, _ = run(["gen", "--seed", 4, "--library", lib, "--queries", qs, "--n-adapters", 6, "--m", 24,
                      "--n", 24, "--rank", 6, "--adversarial-pairs", 1, "--per-task", 8], capsys)
    assert code == 0
    assert run(["preprocess", "--library", lib], capsys)[0] == 0
    return lib, qs


def test_gen_preprocess_calibrate_route(built, tmp_path, capsys):
    lib, qs = built
    loaded, forms, stats = load_library(lib)
    assert forms.kinds() == ("arrow", "spectr", "seqr") and stats is None
    assert run(["calibrate", "--library", lib], capsys)[0] == 0
    assert load_library(lib)[2].method == "seqr"
    dec, summ = tmp_path / "d.jsonl", tmp_path / "s.csv"
    code, out, _ = run(["route", "--library", lib, "--queries", qs, "--method", "seqr", "--calibrated", "on",
                        "--out", dec, "--summary", summ], capsys)
    assert code == 0 and out == ""
    recs = [json.loads(line) for line in dec.read_text().splitlines()]
    assert len(recs) == 4 * 8 + 1 and recs[0]["method"] == "seqr" and recs[0]["calibrated"]
    rows = list(csv.DictReader(io.StringIO(summ.read_text())))
    assert rows[0]["method"] == "seqr" and rows[0]["calibrated"] == "on"


def test_route_k_sweep_to_stdout(built, capsys):
    lib, qs = built
    code, out, _ = run(["route", "--library", lib, "--queries", qs, "--method", "lag", "--k-sweep", "1..N",
                        "--out", "/dev/null"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["k"]) for r in rows] == list(range(1, 7))
    acc = [float(r["norm_accuracy"]) for r in rows]
    assert acc == sorted(acc) and acc[-1] == 1.0


def test_raw_seqr_routes_to_norm_winner(built, capsys):
    lib, qs = built
    code, out, _ = run(["route", "--library", lib, "--queries", qs, "--method", "seqr", "--out", "/dev/null"], capsys)
    assert code == 0
    assert float(list(csv.DictReader(io.StringIO(out)))[0]["norm_accuracy"]) == 1.0


def test_discard_b_preprocess(built, tmp_path, capsys):
    lib, _ = built
    slim = tmp_path / "slim.sqrl"
    assert run(["preprocess", "--library", lib, "--forms", "seqr", "--discard-b", "on", "--out", slim], capsys)[0] == 0
    assert slim.stat().st_size < lib.stat().st_size
    full, slimmed = load_library(lib)[0], load_library(slim)[0]
    np.testing.assert_allclose(full.b_stack, slimmed.b_stack, atol=1e-12)


def test_usage_errors_exit_1(tmp_path, capsys):
    assert run(["route", "--method", "bogus"], capsys)[0] == 1
    assert run(["gen", "--library", tmp_path / "x"], capsys)[0] == 1
    assert run(["gen", "--library", tmp_path / "x", "--queries", tmp_path / "y", "--rank", 100], capsys)[0] == 1
    assert run(["frobnicate"], capsys)[0] == 1
    code, _, err = run(["bench", "--lag-k", 5, "--n-adapters", 2], capsys)
    assert code == 1 and "lag-k" in err


def test_lag_without_k_is_usage_error(built, capsys):
    lib, qs = built
    assert run(["route", "--library", lib, "--queries", qs, "--method", "lag"], capsys)[0] == 1


def test_calibrated_without_stats(built, capsys):
    lib, qs = built
    assert run(["route", "--library", lib, "--queries", qs, "--calibrated", "on"], capsys)[0] == 1


def test_io_errors_exit_2(tmp_path, capsys):
    assert run(["route", "--library", tmp_path / "none", "--queries", tmp_path / "q"], capsys)[0] == 2
    bad = tmp_path / "bad.sqrl"
    bad.write_bytes(b"NOPE" + b"\x00" * 40)
    code, _, err = run(["route", "--library", bad, "--queries", tmp_path / "q"], capsys)
    assert code == 2 and "magic" in err


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# cost run\nn_adapters = 50\nrank = 4\nmeasure = off\naxis = rank\ngrid = 2,4\n")
    code, out, _ = run(["bench", "--config", cfg, "--grid", "8"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert {r["axis_value"] for r in rows} == {"8"}
    arrow = next(r for r in rows if r["method"] == "arrow")
    assert int(arrow["model_flops"]) == 50 * 4096
    cfg.write_text("colour = red\n")
    assert run(["bench", "--config", cfg], capsys)[0] == 1


def test_bench_preset_prints_table(capsys):
    code, out, _ = run(["bench", "--preset", "table1", "--measure", "off"], capsys)
    assert code == 0
    table = {r["method"]: r["compact"] for r in csv.DictReader(io.StringIO(out))}
    assert table == {"naive": "66M", "spectr": "33M", "lag": "5M", "arrow": "4M", "seqr": "64K"}


def test_verify_counterexample(capsys):
    code, out, _ = run(["verify", "--counterexample"], capsys)
    assert code == 0
    assert "arrow winner 0" in out and "naive winner 1" in out


def test_verify_failure_exit_3(monkeypatch, capsys):
    from seqr.verify import CheckResult
    monkeypatch.setattr(cli, "run_all", lambda trials, seed: [CheckResult("x", False, "forced")])
    assert run(["verify", "--trials", 2], capsys)[0] == 3


def test_route_is_deterministic(tmp_path, capsys):
    logs = []
    for rep in range(2):
        d = tmp_path / str(rep)
        d.mkdir()
        run(["gen", "--seed", 11, "--library", d / "l", "--queries", d / "q", "--n-adapters", 4, "--m", 16,
             "--n", 16, "--rank", 4, "--per-task", 5], capsys)
        run(["preprocess", "--library", d / "l"], capsys)
        run(["route", "--library", d / "l", "--queries", d / "q", "--method", "spectr", "--out", d / "o"], capsys)
        logs.append((d / "o").read_bytes())
    assert logs[0] == logs[1] and logs[0]


def test_seqr_with_k_sweep_adds_lag_rows(built, capsys):
    lib, qs = built
    code, out, _ = run(["route", "--library", lib, "--queries", qs, "--method", "seqr", "--k-sweep", "1..N",
                        "--out", "/dev/null"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["method"] == "seqr" and float(rows[0]["norm_accuracy"]) == 1.0
    lag = [float(r["norm_accuracy"]) for r in rows[1:]]
    assert len(lag) == 6 and lag == sorted(lag)


def test_fig3_preset_generates(tmp_path, capsys):
    code, out, _ = run(["gen", "--preset", "fig3", "--library", tmp_path / "l", "--queries", tmp_path / "q"], capsys)
    assert code == 0 and "10 adapters" in out
