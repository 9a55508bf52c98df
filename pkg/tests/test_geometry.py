#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
geometry パッケージのテスト
"""

import numpy as np
import pytest

from common.errors import InvalidArgumentError
from geometry.coarse_map import BACKGROUND, FRACTURE, build_coarse_map
from geometry.fractures import (
    FractureNetwork,
    load_fracture_network,
    mesh_fractures,
    parse_fracture_text,
)
from geometry.grid import build_grid


class TestGrid:
    def test_row_major_indexing(self):
        grid = build_grid(4, 3, 2.0, 1.5)
        assert grid.n_cells == 12
        assert grid.cell_index(1, 2) == 9
        ix, iy = grid.cell_ij(9)
        assert (ix, iy) == (1, 2)
        assert grid.hx == pytest.approx(0.5)
        assert grid.hy == pytest.approx(0.5)

    def test_single_cell(self):
        grid = build_grid(1, 1, 1.0, 1.0)
        assert grid.n_cells == 1
        np.testing.assert_allclose(grid.cell_areas(), [1.0])

    def test_cell_centers(self):
        grid = build_grid(2, 2, 1.0, 1.0)
        np.testing.assert_allclose(grid.cell_centers()[3], [0.75, 0.75])

    @pytest.mark.parametrize("nx,ny,lx,ly", [(0, 4, 1.0, 1.0), (4, -1, 1.0, 1.0), (4, 4, 0.0, 1.0), (4, 4, 1.0, -2.0)])
    def test_invalid_dimensions(self, nx, ny, lx, ly):
        with pytest.raises(InvalidArgumentError):
            build_grid(nx, ny, lx, ly)

    def test_locate_clamps_boundary(self):
        grid = build_grid(4, 2, 2.0, 1.0)
        ix, iy = grid.locate(2.0, 1.0)
        assert (int(ix), int(iy)) == (3, 1)


class TestFractureText:
    def test_comments_and_blank_lines(self):
        net = parse_fracture_text("# header\n\n0.1 0.1 0.9 0.9\n  # indented comment\n0.2 0.8 0.8 0.2\n")
        assert net.n_segments == 2

    def test_wrong_field_count(self):
        with pytest.raises(InvalidArgumentError, match=":2:"):
            parse_fracture_text("0.1 0.1 0.9 0.9\n0.1 0.2 0.3\n")

    def test_not_a_number(self):
        with pytest.raises(InvalidArgumentError):
            parse_fracture_text("0.1 0.1 x 0.9\n")

    def test_zero_length_segment(self):
        with pytest.raises(InvalidArgumentError):
            FractureNetwork(((0.5, 0.5, 0.5, 0.5),))

    def test_canonical_geometry(self):
        net = load_fracture_network()
        assert net.n_segments == 10
        net.validate(2.0, 1.0)


class TestMeshFractures:
    def test_horizontal_segment(self):
        grid = build_grid(16, 8, 2.0, 1.0)
        fmesh = mesh_fractures(FractureNetwork(((0.05, 0.3, 0.55, 0.3),)), grid)
        np.testing.assert_allclose(fmesh.lengths, [0.075, 0.125, 0.125, 0.125, 0.05], rtol=1e-12)
        np.testing.assert_array_equal(fmesh.hosts, 16 * 2 + np.arange(5))

    def test_segment_inside_one_cell(self):
        grid = build_grid(16, 8, 2.0, 1.0)
        fmesh = mesh_fractures(FractureNetwork(((0.13, 0.14, 0.2, 0.2),)), grid)
        assert fmesh.n_cells == 1
        assert fmesh.lengths[0] == pytest.approx(np.hypot(0.07, 0.06), rel=1e-12)
        np.testing.assert_array_equal(fmesh.hosts, [16 + 1])

    def test_segment_through_grid_corner(self):
        grid = build_grid(16, 8, 2.0, 1.0)
        fmesh = mesh_fractures(FractureNetwork(((0.0, 0.0, 0.25, 0.25),)), grid)
        assert fmesh.n_cells == 2
        np.testing.assert_array_equal(fmesh.hosts, [0, 17])
        assert np.all(fmesh.lengths > 0.0)

    def test_lengths_sum_to_segment(self, toy_network, toy_grid):
        fmesh = mesh_fractures(toy_network, toy_grid)
        for sid, length in enumerate(toy_network.lengths()):
            assert fmesh.lengths[fmesh.cells_of_segment(sid)].sum() == pytest.approx(length, rel=1e-12)

    def test_ordering_and_hosts(self, toy_network, toy_grid):
        fmesh = mesh_fractures(toy_network, toy_grid)
        assert np.all(np.diff(fmesh.segment_ids) >= 0)
        for sid in range(toy_network.n_segments):
            cells = fmesh.cells_of_segment(sid)
            assert np.all(np.diff(fmesh.t_start[cells]) > 0.0)
        # ホストセルは中点を含む
        ix, iy = toy_grid.locate(fmesh.midpoints[:, 0], fmesh.midpoints[:, 1])
        np.testing.assert_array_equal(toy_grid.cell_index(ix, iy), fmesh.hosts)

    def test_adjacency_stays_within_segment(self, toy_fmesh):
        for a, b, d in toy_fmesh.adjacency():
            assert toy_fmesh.segment_ids[a] == toy_fmesh.segment_ids[b]
            assert d == pytest.approx(0.5 * (toy_fmesh.lengths[a] + toy_fmesh.lengths[b]))

    def test_outside_domain(self):
        grid = build_grid(4, 2, 2.0, 1.0)
        with pytest.raises(InvalidArgumentError):
            mesh_fractures(FractureNetwork(((0.5, 0.5, 2.5, 0.5),)), grid)


class TestCoarseMap:
    def test_background_measures(self, toy_coarse_map):
        bg = toy_coarse_map.for_kind(BACKGROUND)
        assert bg.n_dofs == 8
        np.testing.assert_allclose(bg.measures, 0.25)
        assert all(m.size == 16 for m in bg.members)

    def test_fracture_dofs_only_where_present(self, toy_coarse_map, toy_fmesh):
        fr = toy_coarse_map.for_kind(FRACTURE)
        assert fr.n_fine == toy_fmesh.n_cells
        assert fr.measures.sum() == pytest.approx(toy_fmesh.lengths.sum(), rel=1e-12)
        assert np.all(fr.measures > 0.0)
        assert fr.n_dofs <= 8

    def test_average_of_constant(self, toy_coarse_map):
        for kind in (BACKGROUND, FRACTURE):
            cmap = toy_coarse_map.for_kind(kind)
            np.testing.assert_allclose(cmap.coarse_average(np.full(cmap.n_fine, 3.5)), 3.5, rtol=1e-14)

    def test_identical_grids(self, toy_grid, toy_fmesh):
        bg = build_coarse_map(toy_grid, toy_grid, toy_fmesh).for_kind(BACKGROUND)
        np.testing.assert_array_equal(bg.fine_to_dof, np.arange(toy_grid.n_cells))
        u = np.arange(toy_grid.n_cells, dtype=float)
        np.testing.assert_allclose(bg.coarse_average(u), u, rtol=1e-14)

    def test_non_dividing_coarse_grid(self, toy_grid, toy_fmesh):
        with pytest.raises(InvalidArgumentError):
            build_coarse_map(toy_grid, build_grid(3, 2, 2.0, 1.0), toy_fmesh)

    def test_unknown_kind(self, toy_coarse_map):
        with pytest.raises(InvalidArgumentError):
            toy_coarse_map.for_kind("vug")


class TestCanonicalCounts:
    @pytest.fixture(scope="class")
    def canonical(self):
        fine = build_grid(400, 200, 2.0, 1.0)
        fmesh = mesh_fractures(load_fracture_network(), fine)
        return fine, fmesh, build_coarse_map(fine, build_grid(40, 20, 2.0, 1.0), fmesh)

    def test_grid_sizes(self, canonical):
        fine, _, _ = canonical
        assert fine.n_cells == 80000
        assert fine.h == pytest.approx(1.0 / 200)

    def test_fracture_cells(self, canonical):
        _, fmesh, _ = canonical
        assert abs(fmesh.n_cells - 1474) <= 0.05 * 1474

    def test_coarse_dofs(self, canonical):
        _, _, cmap = canonical
        n_fracture = cmap.for_kind(FRACTURE).n_dofs
        assert abs(n_fracture - 156) <= 0.1 * 156
        assert all(m.size == 100 for m in cmap.for_kind(BACKGROUND).members)
        # 2連続体: 背景800 + フラクチャー、3連続体: 背景2つ + フラクチャー
        assert abs(800 + n_fracture - 956) <= 0.05 * 956
        assert abs(1600 + n_fracture - 1756) <= 0.05 * 1756
