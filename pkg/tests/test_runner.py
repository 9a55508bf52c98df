#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
参照解・スイープ実行・CLI のテスト（小さな2連続体問題）
"""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

import main
from conftest import write_toy_config
from harness.config import parse_config
from harness.problem import build_multiscale, build_problem
from harness.reference import compute_reference, fraction_steps, reference_key
from harness.report import ERROR_COLUMNS
from harness.runner import run_case


@pytest.fixture
def toy_problem(toy_config_path):
    return build_problem(parse_config(toy_config_path))


class TestProblem:
    def test_build(self, toy_problem):
        assert toy_problem.kinds == ("background", "fracture")
        assert toy_problem.well is not None and len(toy_problem.well.cells) > 0
        assert toy_problem.exchange_defaulted
        assert toy_problem.u0.shape == (toy_problem.operator.n_dofs,)
        diff = toy_problem.operator.stiffness - toy_problem.base_operator.stiffness
        assert diff.diagonal().max() > 0.0

    def test_multiscale(self, toy_problem):
        ms = build_multiscale(toy_problem)
        n_coarse = toy_problem.coarse_map.background.n_dofs + toy_problem.coarse_map.fracture.n_dofs
        assert ms.space.n_coarse == n_coarse
        np.testing.assert_allclose(ms.u0, 1.0)
        assert ms.basis_time >= 0.0


class TestReference:
    def test_fraction_steps(self):
        assert fraction_steps(8) == {0.25: 2, 0.5: 4, 1.0: 8}
        assert fraction_steps(6) == {0.5: 3, 1.0: 6}

    def test_cache_hit(self, toy_problem, tmp_path):
        first = compute_reference(toy_problem, cache_dir=tmp_path / "ref")
        second = compute_reference(toy_problem, cache_dir=tmp_path / "ref")
        assert not first.cached and second.cached
        assert first.key == second.key
        for step, u in first.snapshots.items():
            np.testing.assert_array_equal(second.snapshots[step], u)
        np.testing.assert_array_equal(second.at_fraction(1.0), first.snapshots[8])
        assert second.at_fraction(0.3) is None

    def test_key_depends_on_steps(self, toy_problem):
        assert reference_key(toy_problem, 8) != reference_key(toy_problem, 16)
        assert reference_key(toy_problem, 8) == reference_key(toy_problem, 8)


class TestRunCase:
    def test_outputs(self, toy_config_path):
        config = parse_config(toy_config_path)
        report = run_case(config)
        out = config.output.directory
        assert report.ok

        errors = pd.read_csv(out / "errors.csv", dtype={"split": str}, keep_default_na=False)
        assert list(errors.columns) == ERROR_COLUMNS
        # 2空間 × (Im1, ImEx1-U) × (N_t=2 の2時刻 + N_t=4 の3時刻)
        assert len(errors) == 20
        fine = errors[errors["scheme"] == "Im1"]
        assert (fine["e_ms1"] == "").all()
        coarse = errors[errors["scheme"] == "Ms-Im1"]
        assert (coarse["e_h1"] == "").all() and (coarse["e_ms1"] != "").all()

        final = fine[np.isclose(fine["snapshot"].astype(float), 0.005)]
        by_nt = dict(zip(final["Nt"], final["e_h1"].astype(float)))
        assert by_nt[4] < by_nt[2]

        for name in ("rates", "timings", "speedups", "run_info"):
            assert report.paths[name].exists()
        info = yaml.safe_load((out / "run_info.yaml").read_text(encoding="utf-8"))
        assert info["exchange_defaulted"] is True
        assert info["n_failures"] == 0
        assert info["dof_coarse"] > 0

    def test_stability_and_snapshots(self, toy_config_path):
        config = parse_config(toy_config_path).with_overrides(check_stability=True, dump_snapshots=True)
        report = run_case(config)
        stability = pd.read_csv(report.paths["stability"])
        assert stability["scheme"].tolist() == ["ImEx1"]
        assert (config.output.directory / "snapshots" / "ImEx1-U_4").is_dir()


class TestMain:
    def test_success(self, toy_config_path, tmp_path):
        assert main.main(["run", str(toy_config_path), "--out", str(tmp_path / "cli"), "--ref-nt", "8"]) == main.EXIT_OK
        assert (tmp_path / "cli" / "errors.csv").exists()

    def test_missing_config(self, tmp_path):
        assert main.main(["run", str(tmp_path / "missing.toml")]) == main.EXIT_CONFIG_ERROR

    def test_bad_thread_variable(self, toy_config_path, monkeypatch):
        monkeypatch.setenv(main.THREADS_ENV, "many")
        assert main.main(["run", str(toy_config_path)]) == main.EXIT_CONFIG_ERROR

    def test_missing_geometry_file(self, toy_config_path):
        (toy_config_path.parent / "toy_fractures.txt").unlink()
        assert main.main(["run", str(toy_config_path)]) == main.EXIT_CONFIG_ERROR

    @pytest.mark.parametrize("content", ["0.1 0.1 0.9\n", "0.5 0.5 2.5 0.5\n"])
    def test_invalid_geometry_file(self, toy_config_path, content):
        (toy_config_path.parent / "toy_fractures.txt").write_text(content, encoding="utf-8")
        assert main.main(["run", str(toy_config_path)]) == main.EXIT_CONFIG_ERROR
        assert not (toy_config_path.parent / "out" / "errors.csv").exists()

    def test_threads_override_jobs(self, monkeypatch):
        monkeypatch.setenv(main.THREADS_ENV, "3")
        assert main.resolve_jobs(1) == 3
        monkeypatch.delenv(main.THREADS_ENV)
        assert main.resolve_jobs(2) == 2

    def test_solver_failure_is_partial(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MCFLOW_CACHE_DIR", str(tmp_path / "cache"))
        path = write_toy_config(tmp_path, solver_extra="  max_iter: 1\n  preconditioner: jacobi\n")
        assert main.main(["run", str(path)]) == main.EXIT_PARTIAL_FAILURE


@pytest.mark.slow
class TestCanonical:
    def test_desk_config(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MCFLOW_CACHE_DIR", str(tmp_path / "cache"))
        config = parse_config(Path(__file__).parent.parent / "configs" / "desk_2c.yaml").with_overrides(out=tmp_path)
        report = run_case(config)
        assert report.ok
        errors = pd.read_csv(tmp_path / "errors.csv", dtype={"split": str}, keep_default_na=False)
        im1 = errors[(errors["scheme"] == "Im1") & np.isclose(errors["snapshot"].astype(float), 0.005)]
        values = im1.sort_values("Nt")["e_h2"].astype(float).tolist()
        assert values == sorted(values, reverse=True)

    def test_second_order_trend(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MCFLOW_CACHE_DIR", str(tmp_path / "cache"))
        config = parse_config(Path(__file__).parent.parent / "configs" / "canonical_2c.toml").with_overrides(out=tmp_path)
        config = replace(
            config,
            time=replace(config.time, nt=(8, 16, 32, 64)),
            schemes=replace(config.schemes, names=("Im2-BDF",), spaces=("fine",)),
            nlmc=replace(config.nlmc, study_layers=()),
            output=replace(config.output, repetitions=1),
        )
        report = run_case(config)
        assert report.ok
        final = [r for r in report.rows if np.isclose(r.snapshot, config.time.t_max)]
        errors = [r.e_h2 for r in sorted(final, key=lambda r: r.Nt)]
        ratios = [a / b for a, b in zip(errors, errors[1:])]
        assert all(3.0 <= ratio <= 5.0 for ratio in ratios), ratios
