"""Benchmark CLI: CSV schemas, determinism, experiment behavior on small
instances, and the describe round trip."""

import csv

import numpy as np
import pytest

from qsprox import cli, problems, qscalc


def read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_mem_path_forms():
    assert cli._mem_path("out.csv", 3) == "out_mem3.csv"
    assert cli._mem_path("plain", 0) == "plain_mem0"


def test_validate_csv_rejects_wrong_header(tmp_path):
    f = tmp_path / "x.csv"
    f.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="expected header"):
        cli.validate_csv(str(f), cli.SOLVER_HEADER)


def test_prox_timing_row_count(tmp_path):
    out = tmp_path / "timing.csv"
    rc = cli.main(["prox-timing", "--sizes", "64,128", "--ranks", "1,2",
                   "--reps", "2", "--out", str(out)])
    assert rc == 0
    cli.validate_csv(str(out), cli.PROX_HEADER)
    header, rows = read_rows(out)
    assert header == cli.PROX_HEADER
    assert len(rows) == 2 * 2 * 2
    combos = {(r[0], r[1], r[2]) for r in rows}
    assert len(combos) == 8


def test_lsq_l1_writes_per_memory_files(tmp_path):
    out = tmp_path / "lsq.csv"
    rc = cli.main(["lsq-l1", "--n", "40", "--p", "20", "--mem", "0,3",
                   "--out", str(out)])
    assert rc == 0
    for m in (0, 3):
        path = tmp_path / f"lsq_mem{m}.csv"
        assert path.exists()
        cli.validate_csv(str(path), cli.SOLVER_HEADER)
        header, rows = read_rows(path)
        iters = [int(r[0]) for r in rows]
        assert iters == list(range(len(rows)))
        errs = [float(r[3]) for r in rows]
        assert errs[-1] <= 1e-5 and errs[-1] < errs[0]


def test_lsq_l1_deterministic_up_to_seconds(tmp_path):
    args = ["lsq-l1", "--n", "30", "--p", "10", "--mem", "4", "--seed", "7"]
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert cli.main(args + ["--out", str(out1)]) == 0
    assert cli.main(args + ["--out", str(out2)]) == 0
    _, rows1 = read_rows(tmp_path / "a_mem4.csv")
    _, rows2 = read_rows(tmp_path / "b_mem4.csv")
    assert len(rows1) == len(rows2)
    sec = cli.SOLVER_HEADER.index("seconds")
    for r1, r2 in zip(rows1, rows2):
        for j, (a, b) in enumerate(zip(r1, r2)):
            if j != sec:
                assert a == b, (j, a, b)


def test_conditioning_identity_ratio_converges_immediately(tmp_path):
    out = tmp_path / "cond.csv"
    rc = cli.main(["conditioning", "--n", "40", "--ratios", "0",
                   "--mem", "0,2,10", "--out", str(out)])
    assert rc == 0
    oc_path = tmp_path / "cond.oc.csv"
    cli.validate_csv(str(oc_path), cli.OC_HEADER)
    header, rows = read_rows(oc_path)
    assert len(rows) == 3
    for r in rows:
        assert int(r[3]) <= 3
        assert float(r[4]) <= 1e-8
    for m, ratio in [(0, 0), (2, 0), (10, 0)]:
        per_run = tmp_path / f"cond_mem{m}_r{ratio:g}.csv"
        assert per_run.exists()
        cli.validate_csv(str(per_run), cli.SOLVER_HEADER)


def test_logreg_dominating_penalty_stops_at_zero(tmp_path):
    N, n, seed = 50, 20, 0
    Z = problems.logistic_synthetic(N, n, seed)
    lam = float(np.max(np.abs(Z.mean(axis=0) / 2.0))) + 0.01
    out = tmp_path / "lg.csv"
    rc = cli.main(["logreg", "--N", str(N), "--n", str(n), "--seed",
                   str(seed), "--lam", repr(lam), "--mem", "5",
                   "--out", str(out)])
    assert rc == 0
    header, rows = read_rows(tmp_path / "lg_mem5.csv")
    assert len(rows) == 1
    assert float(rows[0][3]) <= 1e-6


def test_logreg_reads_data_file(tmp_path):
    Z = problems.logistic_synthetic(20, 6, seed=1)
    data = tmp_path / "z.txt"
    np.savetxt(data, Z)
    out = tmp_path / "lg.csv"
    rc = cli.main(["logreg", "--data", str(data), "--lam", "0.5",
                   "--mem", "3", "--max-iter", "50", "--out", str(out)])
    assert rc == 0
    header, rows = read_rows(tmp_path / "lg_mem3.csv")
    assert header == cli.SOLVER_HEADER
    assert rows


def test_describe_round_trip(capsys):
    text = '{"kind": "sum_of_norms", "sizes": [2, 3]}'
    expected = qscalc.format_qs_spec(qscalc.parse_qs_spec(text))
    rc = cli.main(["describe", "--spec", text])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == expected
    assert qscalc.format_qs_spec(qscalc.parse_qs_spec(lines[0])) == expected
    assert any("n=5" in ln for ln in lines)


def test_describe_evaluates_at_point(capsys):
    rc = cli.main(["describe", "--spec", '{"kind": "l1", "n": 3}',
                   "--at", "1,-2,0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "value: 3.0" in out


def test_describe_spec_file(tmp_path, capsys):
    f = tmp_path / "spec.json"
    f.write_text('{"kind": "l2", "n": 4}')
    rc = cli.main(["describe", "--spec-file", str(f)])
    assert rc == 0
    assert "n=4" in capsys.readouterr().out


def test_describe_without_spec_returns_2(capsys):
    assert cli.main(["describe"]) == 2


def test_describe_wrong_point_size_returns_2(capsys):
    rc = cli.main(["describe", "--spec", '{"kind": "l1", "n": 3}',
                   "--at", "1,2"])
    assert rc == 2
