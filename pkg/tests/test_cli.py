"""Command-line interface: config handling, outputs, manifests, exit codes."""

import json
import os

import numpy as np
import pytest

from kdvks.cli import (
    EXIT_CONFIG,
    EXIT_NUMERICAL,
    EXIT_OK,
    ConfigDocument,
    ConfigError,
    main,
)
from kdvks.grids import read_field


def run_cli(tmp_path, *argv, sub=""):
    out = tmp_path / ("out" + sub)
    code = main(list(argv) + ["--out", str(out)])
    return code, out


class TestConfigDocument:
    def test_unknown_section_rejected(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[turbulence]\nperiod = 7.8\n")
        with pytest.raises(ConfigError, match="section"):
            ConfigDocument.from_file(p)

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[profile]\nperiods = 7.8\n")
        with pytest.raises(ConfigError, match="unknown key"):
            ConfigDocument.from_file(p)

    def test_bad_value_rejected(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("[profile]\nperiod = seven\n")
        with pytest.raises(ConfigError, match="bad value"):
            ConfigDocument.from_file(p)

    def test_flags_override_file(self, tmp_path):
        p = tmp_path / "ok.cfg"
        p.write_text("[profile]\nperiod = 7.0\npoints = 64\n")
        doc = ConfigDocument.from_file(p)
        opts = doc.options("profile", {"period": 7.8, "eps": None})
        assert opts["period"] == 7.8
        assert opts["points"] == 64
        assert opts["eps"] == 0.0

    def test_missing_required_key(self):
        with pytest.raises(ConfigError, match="missing"):
            ConfigDocument().options("profile", {})


class TestExitCodes:
    def test_malformed_config_exits_2_without_outputs(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[profile]\nwrong = 1\n")
        code, out = run_cli(tmp_path, "profile", "--config", str(cfg))
        assert code == EXIT_CONFIG
        assert not out.exists() or not list(out.iterdir())

    def test_numerical_failure_exits_3(self, tmp_path):
        # no wave train exists at a period below the bifurcation onset
        code, out = run_cli(tmp_path, "profile", "--period", "5.0")
        assert code == EXIT_NUMERICAL
        assert not (out / "manifest.json").exists()


class TestProfileCommand:
    def test_smoke_outputs_and_manifest(self, tmp_path):
        code, out = run_cli(tmp_path, "profile", "--period", "7.8")
        assert code == EXIT_OK
        for name in ("profile.bin", "profile.csv", "profile.json",
                     "manifest.json"):
            assert (out / name).is_file()
        meta = json.loads((out / "profile.json").read_text())
        assert meta["residual_norm"] < 1e-9
        assert meta["period"] == 7.8
        f = read_field(out / "profile.bin")
        assert f.grid.num_points == meta["num_points"]
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "profile"
        assert set(man["outputs"]) == {"profile.bin", "profile.csv",
                                       "profile.json"}

    def test_rerun_is_bit_identical(self, tmp_path):
        code1, out1 = run_cli(tmp_path, "profile", "--period", "7.8",
                              sub="1")
        code2, out2 = run_cli(tmp_path, "profile", "--period", "7.8",
                              sub="2")
        assert code1 == code2 == EXIT_OK
        m1 = json.loads((out1 / "manifest.json").read_text())
        m2 = json.loads((out2 / "manifest.json").read_text())
        assert m1["outputs"] == m2["outputs"]

    def test_csv_round_trips_doubles(self, tmp_path):
        code, out = run_cli(tmp_path, "profile", "--period", "7.8")
        f = read_field(out / "profile.bin")
        lines = (out / "profile.csv").read_text().splitlines()[1:]
        vals = np.array([float(l.split(",")[1]) for l in lines])
        assert np.array_equal(vals, f.values)


class TestSmallCommands:
    def test_gaps(self, tmp_path):
        code, out = run_cli(tmp_path, "gaps", "--period", "7.8",
                            "--n-list", "1,2,4")
        assert code == EXIT_OK
        lines = (out / "gaps.csv").read_text().splitlines()
        assert lines[0] == "N,gap,quadratic_reference"
        assert len(lines) == 4
        meta = json.loads((out / "gaps.json").read_text())
        assert meta["gaps"]["1"] > meta["gaps"]["4"] > 0

    def test_lemma_a1(self, tmp_path):
        code, out = run_cli(
            tmp_path, "lemma-a1", "--omega", "1", "--d", "1.0",
            "--n-list", "8,16", "--t-list", "0.1,1,10,100")
        assert code == EXIT_OK
        meta = json.loads((out / "lattice_sum.json").read_text())
        assert np.isfinite(meta["sup_overall"])
        lines = (out / "lattice_sum.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 4

    def test_spectrum(self, tmp_path):
        code, out = run_cli(tmp_path, "spectrum", "--period", "7.8",
                            "--xi-count", "8", "--top", "2")
        assert code == EXIT_OK
        lines = (out / "spectrum.csv").read_text().splitlines()
        assert lines[0] == "xi,re_lambda,im_lambda"
        assert len(lines) == 1 + 8 * 2
        # spectrum away from the origin sits in the left half-plane
        for line in lines[1:]:
            xi, re, im = map(float, line.split(","))
            if abs(xi) > 0.1:
                assert re < 0.0

    def test_semigroup(self, tmp_path):
        code, out = run_cli(
            tmp_path, "semigroup", "--period", "7.8", "--n-list", "4",
            "--t-list", "3,6,12,25,50", "--input-derivative", "1")
        assert code == EXIT_OK
        meta = json.loads((out / "decay.json").read_text())
        assert meta["fits"]["4"]["exponent"] < 0.0

    def test_simulate(self, tmp_path):
        code, out = run_cli(
            tmp_path, "simulate", "--period", "7.8", "--t-end", "1.0",
            "--dt", "0.05", "--snapshots", "0.5,1.0",
            "--amplitude", "0.01")
        assert code == EXIT_OK
        names = sorted(p.name for p in out.iterdir())
        assert "diagnostics.csv" in names
        assert "snapshot_0000.bin" in names  # t = 0 record
        assert "snapshot_0002.bin" in names
        lines = (out / "diagnostics.csv").read_text().splitlines()
        assert lines[0] == "t,mass,energy,sup"
        assert len(lines) == 4


class TestStabmapCommand:
    def test_small_map_schema(self, tmp_path):
        code, out = run_cli(
            tmp_path, "stabmap", "--eps-grid", "0.0",
            "--t-grid", "7.0,7.8", "--m", "32", "--xi-count", "64",
            "--refine-tol", "0.05")
        assert code == EXIT_OK
        lines = (out / "stabmap.csv").read_text().splitlines()
        assert lines[0] == "eps,T,verdict,theta,a1,a2,d1,d2"
        cells = {float(l.split(",")[1]): l.split(",")[2]
                 for l in lines[1:]}
        assert cells[7.8] == "stable"
        assert cells[7.0] == "unstable"
        stable_row = [l for l in lines[1:]
                      if l.split(",")[2] == "stable"][0]
        d1 = float(stable_row.split(",")[6])
        assert np.isfinite(d1) and d1 > 0


class TestReportCommand:
    def test_bundles_a_completed_run(self, tmp_path):
        code, run_dir = run_cli(tmp_path, "gaps", "--period", "7.8",
                                "--n-list", "1,2", sub="run")
        assert code == EXIT_OK
        code, bundle = run_cli(tmp_path, "report", "--run-dir",
                               str(run_dir), sub="bundle")
        assert code == EXIT_OK
        index = json.loads((bundle / "bundle.json").read_text())
        assert index["command"] == "gaps"
        assert set(index["files"]) == {"gaps.csv", "gaps.json"}
        assert (bundle / "gaps.csv").read_text() == \
            (run_dir / "gaps.csv").read_text()

    def test_empty_run_dir_fails(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        code, _ = run_cli(tmp_path, "report", "--run-dir", str(empty))
        assert code == EXIT_CONFIG

    def test_missing_output_listed(self, tmp_path, capsys):
        code, run_dir = run_cli(tmp_path, "gaps", "--period", "7.8",
                                "--n-list", "1", sub="run2")
        assert code == EXIT_OK
        (run_dir / "gaps.csv").unlink()
        code, _ = run_cli(tmp_path, "report", "--run-dir", str(run_dir),
                          sub="bundle2")
        assert code == EXIT_CONFIG
        assert "gaps.csv" in capsys.readouterr().err
