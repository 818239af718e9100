import csv
import io
import subprocess
import sys

import pytest

from baoi.cli import fmt, main, parse_grid, UsageError

SMALL_SIM = ["--frames", "150", "--warmup", "50", "--reps", "2"]


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse(text):
    header = [ln[2:] for ln in text.splitlines() if ln.startswith("# ")]
    rows = list(csv.DictReader(io.StringIO("\n".join(ln for ln in text.splitlines() if not ln.startswith("#")))))
    return dict(h.split("=", 1) for h in header), rows


class TestFormatting:
    def test_twelve_digits(self):
        assert fmt(1 / 3) == "0.333333333333"
        assert fmt(2.0) == "2" and fmt(7) == "7" and fmt(True) == "1" and fmt(None) == ""

    def test_grid(self):
        assert parse_grid("0.05:0.3:0.05") == [0.05, 0.1, 0.15, 0.2, 0.25, 0.3]
        assert parse_grid("10:30:10", integer=True) == [10, 20, 30]
        assert parse_grid("0.2:0.2:0.1") == [0.2]

    @pytest.mark.parametrize("g", ["1:2", "a:b:c", "0.3:0.1:0.1", "0:1:0", "0:1:-1"])
    def test_bad_grid(self, g):
        with pytest.raises(UsageError):
            parse_grid(g)


class TestFixedPoint:
    def test_row(self, capsys):
        code, out, _ = run_cli(capsys, "fixed-point", "--density", "0.1", "--wmin", "16", "--range", "4")
        header, rows = parse(out)
        assert code == 0 and len(rows) == 1
        assert float(rows[0]["p_cl"]) < 0.5 and rows[0]["stable"] == "1"
        assert header["density"] == "0.1" and header["wmin"] == "16"

    def test_unstable(self, capsys):
        code, out, err = run_cli(capsys, "fixed-point", "--density", "0.4")
        assert code == 2 and "unstable" in err
        assert parse(out)[1][0]["stable"] == "0"

    def test_isolated_limit(self, capsys):
        _, out, _ = run_cli(capsys, "fixed-point", "--density", "1e-6")
        assert float(parse(out)[1][0]["p_tx"]) == pytest.approx(2 / 17, rel=1e-4)


class TestAnalyze:
    def test_both_modes(self, capsys):
        code, out, _ = run_cli(capsys, "analyze", "--density", "0.2", "--frame", "50", "--mode", "both")
        row = parse(out)[1][0]
        assert code == 0
        dev = float(row["baoi_paper"]) - float(row["baoi_consistent"])
        assert float(row["baoi_deviation"]) == pytest.approx(dev, rel=1e-9)
        assert float(row["ey_consistent"]) == 50
        assert float(row["ey_numeric"]) == pytest.approx(50, rel=1e-6)

    def test_mu_override(self, capsys):
        _, out, _ = run_cli(capsys, "analyze", "--mu-override", "1", "--frame", "50")
        row = parse(out)[1][0]
        assert abs(float(row["baoi_consistent"]) - 30.665) < 1e-9
        assert float(row["velocity_consistent"]) == pytest.approx(1 / 30.665, rel=1e-11)

    def test_unstable(self, capsys):
        code, _, err = run_cli(capsys, "analyze", "--density", "0.4")
        assert code == 2 and "Unstable" in err

    def test_config_and_override(self, capsys, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# defaults\ndensity=0.2\nframe=40\nmode=both\n")
        _, out, _ = run_cli(capsys, "analyze", "--config", str(cfg), "--frame", "60")
        header, rows = parse(out)
        assert header["density"] == "0.2" and header["frame"] == "60" and header["mode"] == "both"
        assert rows[0]["frame"] == "60" and "baoi_paper" in rows[0]

    def test_bad_config_key(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("colour=blue\n")
        assert run_cli(capsys, "analyze", "--config", str(cfg))[0] == 1


class TestUsage:
    @pytest.mark.parametrize(
        "argv",
        [["fixed-point", "--bogus"], ["nope"], [], ["analyze", "--mode", "x"], ["fixed-point", "--density", "-1"]],
    )
    def test_exit_one(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            code = main(argv)
            raise SystemExit(code)
        assert exc.value.code == 1

    def test_degenerate_topology_is_runtime_failure(self, capsys):
        code, _, err = run_cli(capsys, "simulate", "--density", "1e-9", *SMALL_SIM)
        assert code == 3 and "DegenerateTopology" in err

    def test_console_script(self):
        res = subprocess.run(
            [sys.executable, "-m", "baoi.cli", "fixed-point", "--density", "0.1"], capture_output=True, text=True
        )
        assert res.returncode == 0 and "p_tx" in res.stdout


class TestSweep:
    def test_density_default(self, capsys):
        code, out, _ = run_cli(capsys, "sweep")
        rows = parse(out)[1]
        assert code == 0 and [r["density"] for r in rows] == ["0.05", "0.1", "0.15", "0.2", "0.25", "0.3"]
        vals = [float(r["baoi_consistent"]) for r in rows]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_frame_sweep_marks_unstable(self, capsys):
        code, out, _ = run_cli(capsys, "sweep", "--sweep", "frame", "--density", "0.2")
        rows = parse(out)[1]
        assert code == 0 and len(rows) == 20
        assert [r["status"] for r in rows[:2]] == ["unstable", "unstable"]
        vals = [float(r["baoi_consistent"]) for r in rows if r["status"] == "ok"]
        k = vals.index(min(vals))
        assert 0 < k < len(vals) - 1

    def test_single_point(self, capsys):
        _, out, _ = run_cli(capsys, "sweep", "--grid", "0.2:0.2:0.05")
        assert len(parse(out)[1]) == 1

    def test_all_unstable(self, capsys):
        code, out, _ = run_cli(capsys, "sweep", "--grid", "0.4:0.5:0.1")
        assert code == 2 and [r["status"] for r in parse(out)[1]] == ["unstable", "unstable"]

    def test_rows_recomputable(self, capsys):
        _, out, _ = run_cli(capsys, "sweep", "--grid", "0.1:0.2:0.05", "--mode", "both")
        for row in parse(out)[1]:
            _, single, _ = run_cli(capsys, "analyze", "--density", row["density"], "--mode", "both")
            ref = parse(single)[1][0]
            assert {k: row[k] for k in ref} == ref

    def test_simulate_columns(self, capsys):
        _, out, _ = run_cli(capsys, "sweep", "--grid", "0.1:0.1:0.1", "--simulate", *SMALL_SIM)
        row = parse(out)[1][0]
        assert 0 < float(row["sim_p_tx"]) < 1 and float(row["sim_baoi_ci"]) > 0


class TestSimulate:
    def test_report_and_deltas(self, capsys):
        code, out, err = run_cli(capsys, "simulate", "--density", "0.1", "--seed", "7", *SMALL_SIM)
        header, rows = parse(out)
        assert code == 0
        assert [r["rep"] for r in rows] == ["0", "1", "mean", "ci95"]
        assert [r["seed"] for r in rows[:2]] == ["7", "8"]
        assert header["seed"] == "7" and "analytic" in err and "baoi" in err

    def test_seed_from_environment(self, capsys, monkeypatch):
        monkeypatch.setenv("BAOI_SEED", "11")
        _, out, _ = run_cli(capsys, "simulate", *SMALL_SIM)
        header, rows = parse(out)
        assert header["seed"] == "11" and rows[0]["seed"] == "11"

    def test_trace(self, capsys, tmp_path):
        path = tmp_path / "trace.csv"
        run_cli(capsys, "simulate", "--trace", str(path), *SMALL_SIM)
        rows = list(csv.DictReader(path.open()))
        assert rows and list(rows[0]) == ["node", "slot", "arrival_slot", "origin_slot", "baoi"]
        assert all(int(r["baoi"]) == int(r["slot"]) - int(r["arrival_slot"]) for r in rows)

    def test_identical_files(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            run_cli(capsys, "simulate", "--seed", "3", "--out", str(p), *SMALL_SIM)
        assert a.read_bytes() == b.read_bytes()
