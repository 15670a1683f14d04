#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
测试命令行入口: 子命令输出文件、理论 JSON 与退出码
"""

import json
import math

import pandas as pd
import pytest

from pipeline import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main


def _strict_loads(text):
    def reject(token):
        raise ValueError(f"非标准 JSON 常量: {token}")
    return json.loads(text, parse_constant=reject)


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def data_csv(in_tmp):
    path = in_tmp / "data.csv"
    assert main(["generate", "--n", "120", "--p", "4", "--delta", "0.1", "--seed", "3",
                 "--output", str(path)]) == EXIT_OK
    return path


class TestGenerate:

    def test_writes_table(self, data_csv):
        frame = pd.read_csv(data_csv)
        assert list(frame.columns) == ["y", "x1", "x2", "x3", "x4", "is_outlier"]
        assert len(frame) == 120
        assert (data_csv.parent / "pipeline.log").exists()

    def test_sparse_theta(self, in_tmp):
        assert main(["generate", "--n", "30", "--p", "8", "--s0", "2", "--output", "s.csv"]) == EXIT_OK
        assert (in_tmp / "s.csv").exists()

    def test_invalid_delta(self):
        assert main(["generate", "--delta", "1.5"]) == EXIT_CONFIG

    def test_constant_outlier_mode(self, in_tmp):
        code = main(["generate", "--n", "400", "--p", "3", "--delta", "0.3", "--outlier-mode", "constant",
                     "--outlier-constant", "50", "--outlier-sigma", "0.1", "--seed", "5", "--output", "c.csv"])
        assert code == EXIT_OK
        frame = pd.read_csv(in_tmp / "c.csv")
        outliers = frame["is_outlier"] == 1
        assert outliers.sum() > 0
        assert frame.loc[outliers, "y"].mean() > 40
        assert abs(frame.loc[~outliers, "y"].mean()) < 1

    def test_config_file_with_cli_override(self, in_tmp):
        (in_tmp / "gen.json").write_text(json.dumps({
            "n": 50, "p": 3, "noise": {"delta": 0.2, "outlier_sigma": 2.0}, "output": "from_file.csv",
        }), encoding="utf-8")
        assert main(["generate", "--config", "gen.json", "--n", "70"]) == EXIT_OK
        frame = pd.read_csv(in_tmp / "from_file.csv")
        assert len(frame) == 70
        assert list(frame.columns) == ["y", "x1", "x2", "x3", "is_outlier"]


class TestSolveAndProbe:

    def test_solve_outputs(self, data_csv, in_tmp):
        code = main(["solve", "--data", str(data_csv), "--family", "welsch", "--alpha", "0.1",
                     "--output", "out", "--quiet"])
        assert code == EXIT_OK
        curve = pd.read_csv(in_tmp / "out" / "solve_curve.csv")
        assert list(curve.columns) == ["iter", "gap", "objective"]
        trace = json.loads((in_tmp / "out" / "solve_trace.json").read_text(encoding="utf-8"))
        assert trace["converged"] is True
        assert len(trace["theta_final"]) == 4

    def test_solve_divergence_still_writes(self, data_csv, in_tmp):
        code = main(["solve", "--data", str(data_csv), "--family", "squared", "--step", "100",
                     "--output", "div", "--quiet"])
        assert code == EXIT_OK
        trace = json.loads((in_tmp / "div" / "solve_trace.json").read_text(encoding="utf-8"))
        assert trace["converged"] is False

    def test_probe_outputs(self, data_csv, in_tmp):
        code = main(["probe", "--data", str(data_csv), "--family", "huber", "--alpha", "1.0",
                     "--starts", "3", "--output", "probe", "--quiet"])
        assert code == EXIT_OK
        report = json.loads((in_tmp / "probe" / "probe_report.json").read_text(encoding="utf-8"))
        assert report["starts"] == 3 and report["unique"] is True
        gaps = pd.read_csv(in_tmp / "probe" / "probe_gaps.csv")
        assert list(gaps.columns) == ["iter", "gap_00", "gap_01", "gap_02"]

    def test_lasso_path(self, data_csv, in_tmp):
        code = main(["solve", "--data", str(data_csv), "--lambda", "0.05", "--step", "auto",
                     "--init", "zero", "--output", "l1", "--quiet"])
        assert code == EXIT_OK

    def test_whitespace_format(self, in_tmp):
        (in_tmp / "air.dat").write_text(
            "\n".join(f"{i} {i % 3} {2 * i + (i % 3)}" for i in range(1, 21)) + "\n", encoding="utf-8")
        code = main(["solve", "--data", "air.dat", "--whitespace", "--family", "squared",
                     "--step", "auto", "--radius", "100", "--output", "air", "--quiet"])
        assert code == EXIT_OK

    def test_missing_data_file(self):
        assert main(["solve", "--data", "nope.csv", "--quiet"]) == EXIT_DATA

    def test_malformed_data_file(self, in_tmp):
        (in_tmp / "bad.csv").write_text("y,x1\n1.0,2.0\n3.0,abc\n", encoding="utf-8")
        assert main(["probe", "--data", "bad.csv", "--quiet"]) == EXIT_DATA

    def test_invalid_solver_arguments(self, data_csv):
        assert main(["solve", "--data", str(data_csv), "--step", "-1", "--quiet"]) == EXIT_CONFIG
        assert main(["solve", "--data", str(data_csv), "--alpha", "0", "--quiet"]) == EXIT_CONFIG

    @pytest.mark.parametrize("extra", [
        ["--starts", "1"],
        ["--starts", "0"],
        ["--cluster-tol", "0"],
        ["--workers", "0"],
    ])
    def test_multistart_arguments_rejected(self, data_csv, extra):
        assert main(["probe", "--data", str(data_csv), "--quiet", *extra]) == EXIT_CONFIG

    def test_missing_data_argument(self):
        assert main(["solve", "--quiet"]) == EXIT_CONFIG
        assert main(["probe", "--starts", "1", "--quiet"]) == EXIT_CONFIG

    def test_multistart_report_is_strict_json(self, data_csv, in_tmp):
        code = main(["probe", "--data", str(data_csv), "--family", "welsch", "--alpha", "0.1",
                     "--starts", "2", "--output", "strict", "--quiet"])
        assert code == EXIT_OK
        report = _strict_loads((in_tmp / "strict" / "probe_report.json").read_text(encoding="utf-8"))
        assert set(report) >= {"starts", "unique", "max_pairwise_gap", "clusters"}
        trace_code = main(["solve", "--data", str(data_csv), "--output", "strict", "--quiet"])
        assert trace_code == EXIT_OK
        _strict_loads((in_tmp / "strict" / "solve_trace.json").read_text(encoding="utf-8"))

    def test_config_file_sections(self, data_csv, in_tmp):
        (in_tmp / "run.json").write_text(json.dumps({
            "data": str(data_csv),
            "loss": {"family": "huber", "alpha": 1.0},
            "solver": {"radius": 10, "step_size": 1.0},
            "starts": 3,
            "output": "cfg",
        }), encoding="utf-8")
        assert main(["probe", "--config", "run.json", "--starts", "4", "--quiet"]) == EXIT_OK
        report = json.loads((in_tmp / "cfg" / "probe_report.json").read_text(encoding="utf-8"))
        assert report["starts"] == 4
        assert report["unique"] is True

    def test_config_file_unknown_key(self, data_csv, in_tmp):
        (in_tmp / "run.json").write_text(json.dumps({"data": str(data_csv), "speed": 3}), encoding="utf-8")
        assert main(["solve", "--config", "run.json", "--quiet"]) == EXIT_CONFIG

    def test_config_file_missing(self):
        assert main(["solve", "--config", "absent.json", "--quiet"]) == EXIT_CONFIG


class TestTheory:

    def test_welsch_json(self, capsys):
        code = main(["theory", "--family", "welsch", "--alpha", "0.1", "--delta", "0.0", "--r", "1"])
        assert code == EXIT_OK
        record = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert set(record) == {"eta0", "eta1", "kappa", "tractable", "lambda_rec", "r_s", "c0", "c1"}
        assert record["eta0"] == 0.0 and record["tractable"] is True

    def test_huber_infinite_eta1(self, capsys):
        code = main(["theory", "--family", "huber", "--alpha", "1", "--delta", "0.1", "--r", "1"])
        assert code == EXIT_OK
        record = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert record["eta1"] == "inf"
        assert record["eta0"] == pytest.approx(math.sqrt(2 * math.pi) / 9 * math.exp(11.5), rel=1e-12)

    def test_overflowing_radius_is_strict_json(self, capsys):
        code = main(["theory", "--family", "huber", "--alpha", "1", "--delta", "0.1", "--r", "10"])
        assert code == EXIT_OK
        record = _strict_loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert record["eta0"] == "inf" and record["eta1"] == "inf"
        assert record["tractable"] is True

    def test_config_file(self, in_tmp, capsys):
        (in_tmp / "theory.json").write_text(json.dumps({
            "loss": {"family": "welsch", "alpha": 0.1}, "constants": {"r": 1, "delta": 0.0},
        }), encoding="utf-8")
        assert main(["theory", "--config", "theory.json"]) == EXIT_OK
        record = _strict_loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert record["eta0"] == 0.0 and record["tractable"] is True

    def test_generic_pipeline(self, capsys):
        code = main(["theory", "--generic", "--gamma", "0.3333333333333333", "--c2", "1",
                     "--delta", "0.1", "--r", "1", "--alpha", "0.5"])
        assert code == EXIT_OK
        record = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert record["eta0"] > 0

    @pytest.mark.parametrize("argv", [
        ["theory", "--sigma", "0"],
        ["theory", "--delta", "1.0"],
        ["theory", "--lambda", "-1"],
        ["theory", "--s0", "0"],
    ])
    def test_config_errors(self, argv):
        assert main(argv) == EXIT_CONFIG


class TestExperiments:

    def test_sweep_writes_tables_and_manifest(self, in_tmp):
        code = main(["sweep", "--kind", "lowdim_tractability", "--starts", "2", "--delta", "0.0",
                     "--output", "sweep", "--quiet"])
        assert code == EXIT_OK
        out = in_tmp / "sweep"
        for name in ("lowdim_gaps.csv", "lowdim_uniqueness.csv", "manifest_lowdim_tractability.json",
                     "run_report.md"):
            assert (out / name).exists()

    def test_sweep_from_config(self, in_tmp):
        (in_tmp / "exp.json").write_text(json.dumps({
            "kind": "lowdim_robustness", "delta_grid": [0.1], "alpha_grid": [0.1], "replicas": 2, "starts": 2,
            "design": {"n": 60, "p": 2},
        }), encoding="utf-8")
        code = main(["sweep", "--config", "exp.json", "--output", "rob", "--quiet"])
        assert code == EXIT_OK
        frame = pd.read_csv(in_tmp / "rob" / "robustness_errors.csv")
        assert frame["replicas"].tolist() == [2]

    def test_bad_config_file(self, in_tmp):
        (in_tmp / "exp.json").write_text(json.dumps({"kind": "lowdim_tractability", "speed": 3}),
                                         encoding="utf-8")
        assert main(["sweep", "--config", "exp.json", "--quiet"]) == EXIT_CONFIG

    def test_casestudy_missing_file(self):
        assert main(["casestudy", "--data", "airfoil.dat", "--quiet"]) == EXIT_DATA

    def test_uconv_kind_mismatch(self, in_tmp):
        (in_tmp / "exp.json").write_text(json.dumps({"kind": "highdim"}), encoding="utf-8")
        assert main(["uconv", "--config", "exp.json", "--quiet"]) == EXIT_CONFIG
