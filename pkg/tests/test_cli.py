import io
import json
import subprocess
import sys

import numpy as np
import pytest

from simid.cli import (
    CSV_HEADER,
    JobSpec,
    main,
    parse_job,
    q10,
    read_curve_csv,
    rows_to_curve,
    run_job,
)
from simid.core import RateCurve
from simid.errors import CliError


def run_cli(args, **kw):
    return subprocess.run(
        [sys.executable, "-m", "simid.cli", *args],
        capture_output=True,
        text=True,
        **kw,
    )


class TestParseJob:
    def test_minimal_rid(self):
        spec = parse_job(
            ["rid", "--px", "0.8,0.1,0.1", "--py", "0.8,0.1,0.1", "--D", "0.2"]
        )
        assert spec.command == "rid"
        assert spec.px.alphabet_size == 3
        assert spec.d_grid == (0.2,)
        assert spec.tol == 1e-4
        assert spec.threads == 1

    def test_decreasing_grid_rejected(self):
        with pytest.raises(CliError, match="--D"):
            parse_job(
                ["rid", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.2,0.1"]
            )

    def test_bad_tol_rejected(self):
        with pytest.raises(CliError, match="--tol"):
            parse_job(
                ["rid", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.1",
                 "--tol", "0.5"]
            )

    def test_bad_pmf_rejected(self):
        with pytest.raises(CliError, match="--px"):
            parse_job(["rid", "--px", "0.9,0.2", "--py", "0.5,0.5", "--D", "0.1"])

    def test_u_size_restricted(self):
        with pytest.raises(CliError, match="--u-size"):
            parse_job(
                ["rid", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.1",
                 "--u-size", "7"]
            )

    def test_missing_py_rejected(self):
        with pytest.raises(CliError, match="--py"):
            parse_job(["rid", "--px", "0.5,0.5", "--D", "0.1"])

    def test_inline_rho(self):
        spec = parse_job(
            ["rid-general", "--px", "0.5,0.5", "--py", "0.5,0.5",
             "--rho", "0,2;1,0", "--D", "0.1"]
        )
        assert spec.rho.rho[0, 1] == 2.0

    def test_multi_curve_sweep_needs_output(self):
        with pytest.raises(CliError, match="--output"):
            parse_job(["sweep", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.1"])

    def test_threads_env_fallback(self, monkeypatch):
        monkeypatch.setenv("SIMID_THREADS", "3")
        spec = parse_job(["rid", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.1"])
        assert spec.threads == 3

    def test_config_file_defaults_and_override(self, tmp_path):
        cfg = tmp_path / "job.cfg"
        cfg.write_text("px=0.5,0.5\npy=0.5,0.5\nD=0.1\ntol=1e-3\n")
        spec = parse_job(["rid", "--config", str(cfg)])
        assert spec.d_grid == (0.1,)
        assert spec.tol == 1e-3
        spec2 = parse_job(["rid", "--config", str(cfg), "--D", "0.3"])
        assert spec2.d_grid == (0.3,)

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "job.cfg"
        cfg.write_text("px=0.5,0.5\nwibble=1\n")
        with pytest.raises(CliError, match="wibble"):
            parse_job(["rid", "--config", str(cfg)])


class TestRunJob:
    def test_bound_example(self, capsys):
        code = main(
            ["bound", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.25"]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert out.splitlines()[0] == ",".join(CSV_HEADER)
        row = out.splitlines()[1].split(",")
        assert float(row[1]) == pytest.approx(0.18034, abs=1e-5)

    def test_rhobar_value_in_d_column(self, capsys):
        code = main(["rhobar", "--px", "0.7,0.3", "--py", "0.4,0.6"])
        out = capsys.readouterr().out
        assert code == 0
        assert float(out.splitlines()[1].split(",")[0]) == pytest.approx(0.3)

    def test_infeasible_everywhere_exit_3(self, capsys):
        code = main(["tc", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.6"])
        captured = capsys.readouterr()
        assert code == 3
        assert "infeasible" in captured.err.lower()
        assert "Infeasible" in captured.out

    def test_budget_exit_4(self, capsys):
        code = main(
            ["simulate", "--px", "0.5,0.5", "--n", "25", "--rate", "0.25",
             "--D", "0.125", "--trials", "10"]
        )
        captured = capsys.readouterr()
        assert code == 4
        assert "budget" in captured.err.lower()

    def test_validation_exit_2(self, capsys):
        code = main(["rid", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.2,0.1"])
        captured = capsys.readouterr()
        assert code == 2
        assert "--D" in captured.err

    def test_json_has_channel(self, capsys):
        code = main(
            ["rid", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.1",
             "--format", "json"]
        )
        out = capsys.readouterr().out
        assert code == 0
        rows = json.loads(out)
        assert len(rows) == 1
        ch = np.asarray(rows[0]["channel"])
        assert ch.shape == (2, 2)
        np.testing.assert_allclose(ch.sum(axis=1), 1.0, atol=1e-9)

    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out
        assert out.count("PASS") >= 5

    def test_sweep_single_curve_stdout(self, capsys):
        code = main(
            ["sweep", "--px", "0.5,0.5", "--py", "0.5,0.5", "--D", "0.05,0.1",
             "--curves", "tc"]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert len(out.splitlines()) == 3

    def test_sweep_multi_curve_files(self, tmp_path, capsys):
        prefix = str(tmp_path / "sw")
        code = main(
            ["sweep", "--px", "0.8,0.1,0.1", "--py", "0.8,0.1,0.1",
             "--D", "0.05,0.15", "--output", prefix]
        )
        capsys.readouterr()
        assert code == 0
        rid = read_curve_csv(prefix + ".rid.csv", label="rid")
        tc = read_curve_csv(prefix + ".tc.csv", label="tc")
        lc = read_curve_csv(prefix + ".lc.csv", label="lc")
        assert np.all(rid.r <= tc.r + 1e-9)
        assert np.all(tc.r <= lc.r + 1e-9)


class TestDeterminismAndRoundTrip:
    def test_two_runs_byte_identical(self):
        args = ["rid", "--px", "0.8,0.1,0.1", "--py", "0.8,0.1,0.1",
                "--D", "0.1,0.2", "--format", "json"]
        a = run_cli(args)
        b = run_cli(args)
        assert a.returncode == 0
        assert a.stdout == b.stdout
        assert a.stdout.encode() == b.stdout.encode()

    def test_simulate_byte_identical(self):
        args = ["simulate", "--px", "0.5,0.5", "--n", "8", "--rate", "0.5",
                "--D", "0.125", "--trials", "3000", "--seed", "9"]
        a = run_cli(args)
        b = run_cli(args)
        assert a.returncode == 0 and a.stdout == b.stdout
        assert "false_negatives" in a.stdout
        assert a.stdout.strip().splitlines()[1].split(",")[-1] == "0"

    def test_csv_round_trips_to_rate_curve(self, tmp_path, capsys):
        out = str(tmp_path / "curve.csv")
        code = main(
            ["rid", "--px", "0.8,0.1,0.1", "--py", "0.8,0.1,0.1",
             "--D", "0.05,0.1,0.2", "--output", out]
        )
        capsys.readouterr()
        assert code == 0
        parsed = read_curve_csv(out, label="rid")
        # recompute in memory and quantize exactly as the emitter does
        import simid

        px = simid.Pmf([0.8, 0.1, 0.1])
        vals = [
            simid.r_id_hamming(px, px, d, 3, 1e-4).rate for d in (0.05, 0.1, 0.2)
        ]
        expect = RateCurve(
            [q10(d) for d in (0.05, 0.1, 0.2)], [q10(v) for v in vals]
        )
        assert np.array_equal(parsed.d, expect.d)
        assert np.array_equal(parsed.r, expect.r)

    def test_rows_to_curve_skips_infinite(self):
        rows = [
            {"D": 0.1, "R": 0.5},
            {"D": 0.2, "R": float("inf")},
        ]
        curve = rows_to_curve(rows + [{"D": 0.3, "R": 0.7}])
        assert len(curve) == 2


class TestEntryPoint:
    def test_console_script_runs(self):
        out = run_cli(["selftest"])
        assert out.returncode == 0
        assert "PASS" in out.stdout

    def test_jobspec_frozen(self):
        spec = JobSpec(command="selftest")
        with pytest.raises(Exception):
            spec.command = "rid"
