import csv
import hashlib
import io
import math

import pytest

from corrmac import cli
from corrmac.errors import ConfigError, SchemaError
from corrmac.sweep import (SweepConfig, columns_for, consistency_report, db_gap, format_csv, grid_points,
                           parse_config, run_sweep)

FIG = """# figure-style sweep
M = 2, 4
M = 8          # repeated keys append
B = 7
rho = 0.999
ed1_db = 0:29:1
"""


def test_parse_lists_ranges_and_repeats():
    cfg = parse_config(FIG)
    assert cfg.M == (2, 4, 8)
    assert cfg.ed1_db[0] == 0.0 and cfg.ed1_db[-1] == 29.0 and len(cfg.ed1_db) == 30
    cfg = parse_config("ed1_db = 0:1:0.1\nlambda = 0.1, 0.2\nmode = analysis\n")
    assert len(cfg.ed1_db) == 11 and cfg.ed1_db[3] == 0.3
    assert cfg.lam == (0.1, 0.2) and cfg.mode == "analysis"


@pytest.mark.parametrize("text,line", [
    ("ed1_db = 0:10:1\nM = 2\nbogus = 3\n", 3),
    ("ed1_db = 0:10:1\n\nM = two\n", 3),
    ("M = 2\nB = 1\ned1_db = 1\n", 2),
    ("rho = 1.5\ned1_db = 1\n", 1),
    ("ed1_db = 5:0:1\n", 1),
    ("ed1_db = 1\nM 2\n", 2),
    ("ed1_db = 1\nseed = 1\nseed = 2\n", 3),
    ("ed1_db = 1, , 2\n", 1),
    ("ed1_db = inf\n", 1),
])
def test_config_errors_are_line_precise(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, source="x.cfg")
    assert exc.value.line == line
    assert str(exc.value).startswith(f"x.cfg:{line}: ")


def test_empty_axes_rejected():
    with pytest.raises(ConfigError):
        parse_config("M = 2\n")
    with pytest.raises(ConfigError):
        SweepConfig(ed1_db=(1.0,), M=())
    with pytest.raises(ConfigError):
        parse_config("ed1_db = 1\nwindow_rule = spiral\n")


def test_grid_order_and_l_filter():
    cfg = parse_config("M = 1, 2\nL = 1, 2\ned1_db = 0, 5\n")
    pts = grid_points(cfg)
    assert [(p.M, p.L, p.ed1_db) for p in pts] == [
        (1, 1, 0.0), (1, 1, 5.0), (2, 1, 0.0), (2, 1, 5.0), (2, 2, 0.0), (2, 2, 5.0)]
    assert [p.index for p in pts] == list(range(6))


def test_bounds_mode_row_count_and_schema():
    res = run_sweep(parse_config(FIG))
    assert len(res.rows) == 90
    text = format_csv(res)
    header = text.splitlines()[0].split(",")
    assert header == columns_for("bounds")
    assert "empirical_mse" not in header and "avg_energy_exact" not in header
    assert all(r["status"] == "ok" for r in res.rows)


def test_mode_schemas_nested():
    b, a, s = (columns_for(m) for m in ("bounds", "analysis", "simulate"))
    assert b[:-1] == a[:len(b) - 1] and a[:-1] == s[:len(a) - 1]
    assert s[-6:] == ["empirical_mse", "mse_ci_low", "mse_ci_high", "empirical_energy", "round2_rate", "status"]
    with pytest.raises(Exception):
        columns_for("plot")


def test_simulate_rows_and_determinism():
    cfg = parse_config("M = 2\nB = 3\nrho = 0.9\ned1_db = 0, 10\nmode = simulate\ntrials = 500\nseed = 4\n")
    a, b = format_csv(run_sweep(cfg)), format_csv(run_sweep(cfg))
    assert a == b
    c = format_csv(run_sweep(cfg, workers=2))
    assert a == c
    rows = list(csv.DictReader(io.StringIO(a)))
    assert all(r["empirical_mse"] != "" for r in rows)
    assert format_csv(run_sweep(cfg, seed=5)) != a


def test_infeasible_and_undefined_rows(monkeypatch):
    monkeypatch.setenv("CORRMAC_COMPUTE_CAP", "10")
    cfg = parse_config("M = 2\nB = 3\nrho = 0, 0.9\ned1_db = 5\nmode = simulate\ntrials = 10\n")
    rows = run_sweep(cfg).rows
    assert rows[0]["status"] == "undefined" and rows[0]["upper_bound_total"] is None
    assert rows[0]["lower_bound_u"] is not None
    assert rows[1]["status"] == "infeasible" and rows[1]["empirical_mse"] is None
    assert rows[1]["upper_bound_total"] is not None


def _toy(rows, cols=None):
    cols = cols or ["M", "B", "rho", "lam", "mu", "L", "ed1_db", "lower_bound_u", "upper_bound_total",
                    "one_shot_bound", "d_q", "status", "mse_ci_low", "mse_ci_high"]
    out = []
    for r in rows:
        base = dict(M="2", B="7", rho="0.9", lam="0.25", mu="1.0", L="1", status="ok", d_q="1e-6",
                    lower_bound_u="1e-9", mse_ci_low="", mse_ci_high="")
        base.update({k: str(v) for k, v in r.items()})
        out.append({c: base.get(c, "") for c in cols})
    return cols, out


def test_violating_row_flagged():
    cols, rows = _toy([
        dict(ed1_db=0, upper_bound_total=0.5, one_shot_bound=0.9, mse_ci_low=0.1, mse_ci_high=0.2),
        dict(ed1_db=5, upper_bound_total=0.1, one_shot_bound=0.5, mse_ci_low=0.2, mse_ci_high=0.3),
        dict(ed1_db=10, upper_bound_total=0.01, one_shot_bound=0.1, lower_bound_u=0.5,
             mse_ci_low=0.001, mse_ci_high=0.002),
    ])
    rep = consistency_report((cols, rows))
    assert rep.checked_rows == 3
    assert [(v.row, v.kind) for v in rep.violations] == [(1, "above_upper_bound"), (2, "below_lower_bound")]


def test_gap_hand_computed_toy():
    # two-round: 0 dB at x=0, -10 dB at x=10, -20 dB at x=20 ; one-shot is 3 dB to the right
    x = [0, 10, 20]
    two = [1.0, 0.1, 0.01]
    one = [10 ** 0.3, 10 ** -0.7, 10 ** -1.7]
    got = db_gap(x, two, one, [-5.0])
    # two-round hits -5 dB at x=5; one-shot falls from 3 to -7 dB over 0..10, so -5 dB at x=8
    assert got == [(-5.0, pytest.approx(3.0))]
    assert db_gap(x, two, one, [5.0, -30.0]) == []


def test_gap_report_in_window():
    cols, rows = _toy([dict(ed1_db=x, upper_bound_total=t, one_shot_bound=o) for x, t, o in
                       zip([0, 10, 20], [1.0, 0.1, 0.01], [10 ** 0.3, 10 ** -0.7, 10 ** -1.7])])
    rep = consistency_report((cols, rows), require_empirical=False, target_step_db=5.0)
    (g,) = rep.gaps
    assert g.targets_db == [0.0, -5.0, -10.0, -15.0]
    assert g.min_gap == pytest.approx(3.0) and g.max_gap == pytest.approx(3.0)
    assert "violations: 0" in rep.format()


def test_schema_error():
    cols, rows = _toy([dict(ed1_db=0, upper_bound_total=1, one_shot_bound=1)], cols=["M", "ed1_db"])
    with pytest.raises(SchemaError):
        consistency_report((cols, rows))
    cols, rows = _toy([dict(ed1_db=0, upper_bound_total=1, one_shot_bound=1)])
    cols = [c for c in cols if c != "mse_ci_low"]
    with pytest.raises(SchemaError):
        consistency_report((cols, rows))
    consistency_report((cols, rows), require_empirical=False)


# command line

def _write(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_writes_csv_and_is_deterministic(tmp_path):
    cfg = _write(tmp_path, "M = 2\nB = 3\nrho = 0.9\ned1_db = 0:10:5\n")
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["--config", cfg, "--mode", "simulate", "--trials", "300", "--seed", "9"]
    assert cli.main(args + ["--out", str(out1)]) == 0
    assert cli.main(args + ["--out", str(out2)]) == 0
    h = lambda p: hashlib.sha256(p.read_bytes()).hexdigest()
    assert h(out1) == h(out2)
    assert cli.main(["--check", str(out1), "--strict"]) == 0


def test_cli_exit_codes(tmp_path, capsys, monkeypatch):
    bad = _write(tmp_path, "M = 2\nfoo = 1\n")
    assert cli.main(["--config", bad]) == cli.EXIT_CONFIG
    assert f"{bad}:2:" in capsys.readouterr().err
    assert cli.main(["--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    assert cli.main([]) == cli.EXIT_CONFIG
    good = _write(tmp_path, "M = 2\nB = 3\nrho = 0.9\ned1_db = 5\n", "g.cfg")
    assert cli.main(["--config", good, "--trials", "0", "--mode", "simulate"]) == cli.EXIT_CONFIG

    monkeypatch.setenv("CORRMAC_COMPUTE_CAP", "10")
    out = str(tmp_path / "o.csv")
    args = ["--config", good, "--mode", "simulate", "--trials", "20", "--out", out]
    assert cli.main(args) == 0
    assert "compute cap" in capsys.readouterr().err
    assert cli.main(args + ["--strict"]) == cli.EXIT_INFEASIBLE
    monkeypatch.delenv("CORRMAC_COMPUTE_CAP")

    viol = tmp_path / "v.csv"
    cols, rows = _toy([dict(ed1_db=0, upper_bound_total=0.1, one_shot_bound=0.5,
                            mse_ci_low=0.2, mse_ci_high=0.3)])
    with open(viol, "w", newline="") as fh:
        w = csv.DictWriter(fh, cols)
        w.writeheader()
        w.writerows(rows)
    assert cli.main(["--check", str(viol)]) == 0
    assert cli.main(["--check", str(viol), "--strict"]) == cli.EXIT_VIOLATION
    schema = tmp_path / "bad.csv"
    schema.write_text("a,b\n1,2\n")
    assert cli.main(["--check", str(schema)]) == cli.EXIT_SCHEMA


def test_cli_stdout(tmp_path, capsys):
    good = _write(tmp_path, "M = 2\nB = 5\nrho = 0.99\ned1_db = 10, 20\n")
    assert cli.main(["--config", good, "--mode", "analysis"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].split(",") == columns_for("analysis") and len(lines) == 3
