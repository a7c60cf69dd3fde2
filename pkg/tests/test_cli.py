"""Command-line runner: artifacts, exit codes and reproducibility."""

from __future__ import annotations

import csv
import subprocess
import sys

import pytest

from expwalk import cli
from expwalk.cli import COLUMNS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_ORACLE, main, run
from expwalk.selftest import OracleResult

FAST = ["mc.nsim=2000", "regime.n0=16", "regime.rungs=2"]
GAUSS = ["step.kind=gaussian", "step.mu=-2", "step.sigma=1"]
PARETO = ["step.kind=pareto", "step.beta=3", "step.scale=1", "step.shift=-2"]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(path):
    return dict(line.split("=", 1) for line in path.read_text().splitlines())


class TestArtifacts:
    @pytest.mark.parametrize("sub", ["classify", "tau-tail", "estimate", "rates", "renewal"])
    def test_csv_and_manifest(self, sub, tmp_path, capsys):
        assert run(sub, None, FAST, tmp_path) == EXIT_OK
        with open(tmp_path / f"{sub}.csv", newline="") as fh:
            assert tuple(next(csv.reader(fh))) == COLUMNS
        rows = read_rows(tmp_path / f"{sub}.csv")
        assert rows and all(r["seed"] == "20240601" for r in rows)
        m = manifest(tmp_path / "manifest.txt")
        assert m["subcommand"] == sub and m["status"] == "ok" and m["exit_code"] == "0"
        assert m["rows"] == str(len(rows)) and m["config_hash"] == rows[0]["config_hash"]
        assert m["config.mc.nsim"] == "2000"

    def test_classify_reference(self, tmp_path):
        run("classify", None, FAST, tmp_path)
        rows = {r["quantity"]: r for r in read_rows(tmp_path / "classify.csv")}
        assert rows["lambda_star"]["method"] == "Osc_LambdaZero"
        assert float(rows["rho_factor"]["value"]) == 1.0

    def test_tau_tail_exact_for_lattice(self, tmp_path):
        run("tau-tail", None, FAST, tmp_path)
        rows = read_rows(tmp_path / "tau-tail.csv")
        assert rows[0]["n"] == "16" and float(rows[0]["value"]) == pytest.approx(12870 / 65536)
        assert float(rows[0]["stderr"]) == 0.0

    def test_renewal_rows_index_x(self, tmp_path):
        run("renewal", None, FAST, tmp_path)
        rows = read_rows(tmp_path / "renewal.csv")
        assert [float(r["n"]) for r in rows[:3]] == [0.0, 1.0, 2.0]
        assert [float(r["value"]) for r in rows[:3]] == [1.0, 2.0, 3.0]

    def test_verify_reference(self, tmp_path):
        assert run("verify", None, FAST, tmp_path) == EXIT_OK
        q = {r["quantity"] for r in read_rows(tmp_path / "verify.csv")}
        assert {"r_n", "C1", "ci_overlap", "rel_diff_to_constant", "last_rung_rel_change"} <= q

    def test_gaussian_constants(self, tmp_path):
        assert run("constants", None, FAST + GAUSS, tmp_path) == EXIT_OK
        rows = read_rows(tmp_path / "constants.csv")
        assert any(r["method"] == "drift-constant" for r in rows)

    def test_heavy_estimate(self, tmp_path):
        assert run("estimate", None, FAST + PARETO + ["regime.jumps=2"], tmp_path) == EXIT_OK
        rows = read_rows(tmp_path / "estimate.csv")
        assert all(float(r["value"]) > 0 for r in rows)

    def test_selftest(self, tmp_path):
        assert run("selftest", None, [], tmp_path) == EXIT_OK
        assert len(read_rows(tmp_path / "selftest.csv")) >= 9


class TestExitCodes:
    def test_unknown_key(self, tmp_path, capsys):
        assert run("classify", None, ["mc.bogus=1"], tmp_path) == EXIT_CONFIG
        err = capsys.readouterr().err
        assert "mc.bogus" in err and "exit=2" in err
        m = manifest(tmp_path / "manifest.txt")
        assert m["status"] == "config-error" and m["exit_code"] == "2"

    def test_bad_value(self, tmp_path):
        assert run("estimate", None, ["f.theta=-3"], tmp_path) == EXIT_CONFIG

    def test_missing_config_file(self, tmp_path):
        assert run("classify", str(tmp_path / "nope.cfg"), [], tmp_path) == EXIT_CONFIG

    def test_numeric_guard(self, tmp_path):
        over = ["step.kind=gaussian", "step.mu=2", "step.sigma=1", "mc.cap=1"]
        assert run("renewal", None, over, tmp_path) == EXIT_NUMERIC
        assert manifest(tmp_path / "manifest.txt")["status"] == "numeric-guard"

    def test_oracle_failure(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "run_all", lambda: [OracleResult("fake", 1.0, 0.0)])
        assert run("selftest", None, [], tmp_path) == EXIT_ORACLE
        assert manifest(tmp_path / "manifest.txt")["status"] == "oracle-failure"

    def test_argparse_entry(self, tmp_path):
        assert main(["classify", "-o", str(tmp_path), "--set", "mc.nsim=500", "-j", "2"]) == 0
        assert manifest(tmp_path / "manifest.txt")["config.mc.workers"] == "2"

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "expwalk", "classify", "--set",
                               "nope.x=1", "-o", str(tmp_path)], capture_output=True, text=True)
        assert proc.returncode == EXIT_CONFIG and "nope.x" in proc.stderr


class TestReproducibility:
    def _csv(self, path):
        return (path / "estimate.csv").read_bytes()

    def test_rerun_bit_identical(self, tmp_path):
        run("estimate", None, FAST, tmp_path / "a")
        run("estimate", None, FAST, tmp_path / "b")
        assert self._csv(tmp_path / "a") == self._csv(tmp_path / "b")

    def test_worker_count_invariant(self, tmp_path):
        run("estimate", None, FAST + ["mc.workers=1"], tmp_path / "a")
        run("estimate", None, FAST + ["mc.workers=4"], tmp_path / "b")
        assert self._csv(tmp_path / "a") == self._csv(tmp_path / "b")

    def test_seed_changes_output(self, tmp_path):
        run("estimate", None, FAST, tmp_path / "a")
        run("estimate", None, FAST + ["mc.seed=7"], tmp_path / "b")
        assert self._csv(tmp_path / "a") != self._csv(tmp_path / "b")
