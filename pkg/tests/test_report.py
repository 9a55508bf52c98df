#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
harness.errors（相対誤差）と harness.report（CSV出力）のテスト
"""

import math

import numpy as np
import pytest

from assembly.block_operator import single_block_operator
from assembly.fvm import assemble_diffusion_2d
from common.errors import InvalidArgumentError, UndefinedErrorNorm
from geometry.coarse_map import build_coarse_map
from geometry.fractures import FractureNetwork, mesh_fractures
from geometry.grid import build_grid
from harness.errors import compute_errors, relative_l2
from harness.report import (
    ERROR_COLUMNS,
    ErrorRow,
    TimingRow,
    convergence_rates,
    format_iterations,
    observed_rate,
    read_csv,
    speedup_rows,
    summarize,
    write_csv,
    write_run_info,
)


@pytest.fixture
def four_cells():
    """1次元ラプラシアン（4セル, Neumann）と 2つの粗セル"""
    fine = build_grid(4, 1, 4.0, 1.0)
    fmesh = mesh_fractures(FractureNetwork(((0.5, 0.5, 1.5, 0.5),)), fine)
    cmap = build_coarse_map(fine, build_grid(2, 1, 4.0, 1.0), fmesh)
    op = single_block_operator(assemble_diffusion_2d(fine, 1.0), np.ones(4))
    return op, [cmap.background]


class TestErrors:
    def test_hand_computed(self, four_cells):
        op, maps = four_cells
        norms = compute_errors(np.array([1.0, 2.0, 3.0, 4.0]), np.array([1.0, 2.0, 3.0, 5.0]), op, maps)
        assert norms.e_h1 == pytest.approx(100.0 / math.sqrt(30.0))
        assert norms.e_h1 == pytest.approx(18.257, abs=1e-3)
        # u_ref^T A u_ref = 3, 差の (0,0,0,1) は 1
        assert norms.e_h2 == pytest.approx(100.0 / math.sqrt(3.0))
        # 粗セル平均 (1.5, 3.5) と (1.5, 4)
        assert norms.e_H1 == pytest.approx(100.0 * 0.5 / math.sqrt(1.5**2 + 3.5**2))
        assert norms.e_ms1 is None

    def test_reference_against_itself(self, four_cells, rng):
        op, maps = four_cells
        u = rng.uniform(1.0, 2.0, 4)
        norms = compute_errors(u, u.copy(), op, maps)
        assert (norms.e_h1, norms.e_h2, norms.e_H1) == (0.0, 0.0, 0.0)

    def test_constant_shift_has_no_energy(self, four_cells):
        op, maps = four_cells
        u = np.array([1.0, 2.0, 3.0, 4.0])
        norms = compute_errors(u, u + 0.25, op, maps)
        assert norms.e_h2 == pytest.approx(0.0, abs=1e-12)
        assert norms.e_h1 > 0.0

    def test_zero_reference(self, four_cells):
        op, maps = four_cells
        with pytest.raises(UndefinedErrorNorm):
            compute_errors(np.zeros(4), np.ones(4), op, maps)
        with pytest.raises(UndefinedErrorNorm):
            relative_l2(np.zeros(3), np.ones(3))

    def test_dimension_mismatch(self, four_cells):
        op, maps = four_cells
        with pytest.raises(InvalidArgumentError):
            compute_errors(np.ones(4), np.ones(3), op, maps)


def sample_rows():
    rows = []
    for nt in (4, 8, 16):
        rows.append(ErrorRow("Im1", "", nt, 0.005, e_h1=10.0 / nt, e_h2=20.0 / nt, e_H1=5.0 / nt,
                             time_total_s=0.01 * nt, avg_iters_per_continuum="all=12"))
        rows.append(ErrorRow("Ms-Im1", "", nt, 0.005, e_ms1=3.0 / nt**2, e_H1=1.0 / nt**2,
                             time_total_s=0.001 * nt, avg_iters_per_continuum="all=4"))
    return rows


class TestReport:
    def test_header_and_empty_fields(self, tmp_path):
        path = write_csv(sample_rows(), tmp_path / "errors.csv")
        lines = path.read_text(encoding="utf-8").split("\n")
        assert lines[0] == ",".join(ERROR_COLUMNS)
        assert lines[1] == "Im1,,4,0.005,2.5,5,,1.25,0.04,all=12"
        assert "\r" not in path.read_text(encoding="utf-8")

    def test_rewrite_is_byte_identical(self, tmp_path):
        first = write_csv(sample_rows(), tmp_path / "a.csv").read_bytes()
        second = write_csv(sample_rows(), tmp_path / "b.csv").read_bytes()
        assert first == second

    def test_six_significant_digits(self, tmp_path):
        row = ErrorRow("Im1", "", 4, 0.005, e_h1=1.0 / 3.0)
        path = write_csv([row], tmp_path / "digits.csv")
        assert path.read_text(encoding="utf-8").split("\n")[1].split(",")[4] == "0.333333"

    def test_read_back(self, tmp_path):
        rows = sample_rows()
        back = read_csv(write_csv(rows, tmp_path / "errors.csv"))
        assert len(back) == len(rows)
        assert back[1].e_h1 is None and back[1].e_ms1 == pytest.approx(3.0 / 16, rel=1e-6)
        assert back[0].avg_iters_per_continuum == "all=12"

    def test_empty_report(self, tmp_path):
        with pytest.raises(InvalidArgumentError):
            write_csv([], tmp_path / "empty.csv")

    def test_rates(self):
        rates = convergence_rates(sample_rows())
        first = rates[(rates["scheme"] == "Im1") & (rates["metric"] == "e_h1")]
        assert first["Nt"].tolist() == [4, 8]
        np.testing.assert_allclose(first["rate"], 1.0)
        second = rates[(rates["scheme"] == "Ms-Im1") & (rates["metric"] == "e_ms1")]
        np.testing.assert_allclose(second["rate"], 2.0)
        assert rates[(rates["scheme"] == "Ms-Im1") & (rates["metric"] == "e_h1")].empty

    def test_observed_rate(self):
        assert observed_rate(4.0, 1.0) == pytest.approx(2.0)
        assert observed_rate(0.0, 1.0) is None
        assert observed_rate(None, 1.0) is None

    def test_format_iterations(self):
        assert format_iterations({"m": 3.125, "f": 12.0}) == "m=3.125;f=12"

    def test_speedups(self):
        timings = [
            TimingRow("fine", "Im1", "", 8, "all", 2.0, 10.0),
            TimingRow("fine", "ImEx1", "U", 8, "m", 0.5, 3.0),
            TimingRow("fine", "ImEx1", "U", 8, "f", 0.5, 5.0),
            TimingRow("coarse", "Ms-Im1", "", 8, "all", 0.2, 4.0),
        ]
        rows = {(r.kind, r.numerator): r.ratio for r in speedup_rows(timings)}
        assert rows[("decoupled/coupled", "ImEx1-U")] == pytest.approx(0.5)
        assert rows[("coarse/fine", "Ms-Im1")] == pytest.approx(0.1)

    def test_speedups_pair_same_order(self):
        timings = [
            TimingRow("fine", "Im1", "", 8, "all", 1.0, 10.0),
            TimingRow("fine", "Im2-BDF", "", 8, "all", 4.0, 10.0),
            TimingRow("fine", "ImEx2-SBDF", "D", 8, "all", 1.0, 3.0),
            TimingRow("fine", "ImEx1", "D", 8, "all", 0.5, 3.0),
            TimingRow("fine", "ImEx1-CN", "D", 8, "all", 0.5, 3.0),
            TimingRow("coarse", "Ms-Im2-BDF", "", 8, "all", 2.0, 10.0),
            TimingRow("coarse", "Ms-ImEx2-SBDF", "D", 8, "all", 1.0, 3.0),
        ]
        rows = {
            (r.space, r.numerator): (r.denominator, r.ratio)
            for r in speedup_rows(timings) if r.kind == "decoupled/coupled"
        }
        assert rows[("fine", "ImEx2-SBDF-D")] == ("Im2-BDF", pytest.approx(0.25))
        assert rows[("fine", "ImEx1-D")] == ("Im1", pytest.approx(0.5))
        assert rows[("coarse", "Ms-ImEx2-SBDF-D")] == ("Ms-Im2-BDF", pytest.approx(0.5))
        # Im1-CN が無いので対応なし
        assert ("fine", "ImEx1-CN-D") not in rows

    def test_summarize_keeps_final_time(self):
        rows = sample_rows() + [ErrorRow("Im1", "", 4, 0.0025, e_h1=1.0)]
        summary = summarize(rows)
        assert len(summary) == 6
        assert set(summary["snapshot"].astype(float)) == {0.005}

    def test_run_info(self, tmp_path):
        path = write_run_info({"dof_fine": 10, "exchange_defaulted": True}, tmp_path / "run_info.yaml")
        assert path.read_text(encoding="utf-8").splitlines() == ["dof_fine: 10", "exchange_defaulted: true"]
