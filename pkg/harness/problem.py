#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
問題の準備
設定から格子・フラクチャーメッシュ・ブロック演算子・坑井・初期値を作る
"""

import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from assembly.block_operator import BlockOperator, assemble_block_operator, default_exchange
from assembly.well import WellSpec, apply_well, select_well_cells
from geometry.coarse_map import CoarseMap, build_coarse_map
from geometry.fractures import FractureMesh, FractureNetwork, load_fracture_network, mesh_fractures
from geometry.grid import StructuredGrid, build_grid
from nlmc.basis import build_basis_set
from nlmc.projection import CoarseOperator, MultiscaleSpace, build_projection, project_operators
from .config import RunConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Problem:
    """
    細格子の問題一式。

    base_operator は坑井なし（エネルギーノルム・基底用）、
    operator は坑井を組み込んだ時間発展用。
    """
    config: RunConfig
    fine: StructuredGrid
    coarse: StructuredGrid
    network: FractureNetwork
    fmesh: FractureMesh
    coarse_map: CoarseMap
    base_operator: BlockOperator
    operator: BlockOperator
    well: Optional[WellSpec]
    u0: np.ndarray
    exchange_defaulted: bool

    @property
    def kinds(self) -> Tuple[str, ...]:
        return self.config.kinds

    def tau(self, n_steps: int) -> float:
        return self.config.time.t_max / n_steps


@dataclass(frozen=True)
class MultiscaleProblem:
    """NLMC空間と粗格子の演算子・初期値"""
    space: MultiscaleSpace
    coarse: CoarseOperator
    u0: np.ndarray
    basis_time: float

    @property
    def operator(self) -> BlockOperator:
        return self.coarse.operator


def initial_vector(op: BlockOperator, values: Sequence[float]) -> np.ndarray:
    """連続体ごとに一定の初期値ベクトル"""
    return op.join([np.full(n, float(v)) for n, v in zip(op.sizes, values)])


def build_problem(config: RunConfig) -> Problem:
    """
    設定から細格子の問題を組み立てる。

    Raises:
        InvalidArgumentError: ジオメトリ・係数が不正
        AssemblyError: 演算子が対称でない
    """
    g = config.geometry
    logger.info("問題を準備中...")
    fine = build_grid(g.fine[0], g.fine[1], g.lx, g.ly)
    coarse = build_grid(g.coarse[0], g.coarse[1], g.lx, g.ly)
    network = load_fracture_network(g.fractures)
    fmesh = mesh_fractures(network, fine)
    coarse_map = build_coarse_map(fine, coarse, fmesh)

    exchange = config.exchange
    exchange_defaulted = exchange is None
    if exchange_defaulted:
        exchange = default_exchange(config.continua)
        logger.warning(
            "交換係数が設定されていないため既定値を使います "
            "(背景-フラクチャー: σ=k_背景, d=h/4 / 背景-背景: σ=k_1, d=h)"
        )
    base = assemble_block_operator(config.continua, fine, fmesh, exchange)

    well = None
    operator = base
    if config.well is not None:
        cells = select_well_cells(fmesh, fine, config.well.box)
        well = WellSpec(continuum=config.well.continuum, cells=cells, u_w=config.well.u_w, q_w=config.well.q_w)
        operator = apply_well(base, well)

    u0 = initial_vector(operator, config.initial_vector_values())
    logger.info(f"問題の準備が完了しました: DOF_h={operator.n_dofs}")
    return Problem(
        config=config,
        fine=fine,
        coarse=coarse,
        network=network,
        fmesh=fmesh,
        coarse_map=coarse_map,
        base_operator=base,
        operator=operator,
        well=well,
        u0=u0,
        exchange_defaulted=exchange_defaulted,
    )


def build_multiscale(problem: Problem, layers: Optional[int] = None, jobs: int = 1, progress: bool = False) -> MultiscaleProblem:
    """
    NLMC空間を作り、坑井込みの演算子を粗格子へ射影する。

    基底は坑井なしの演算子で計算する。
    """
    layers = problem.config.nlmc.layers if layers is None else layers
    start = time.perf_counter()
    bases = build_basis_set(problem.base_operator, problem.coarse_map, problem.kinds, layers, jobs, progress)
    space = build_projection(bases)
    basis_time = time.perf_counter() - start
    coarse = project_operators(space, problem.operator)

    parts = problem.operator.split(problem.u0)
    u0_H = np.concatenate([cmap.coarse_average(p) for cmap, p in zip(space.continuum_maps, parts)])
    logger.info(f"NLMC空間を作成しました: layers={layers}, N_H={space.n_coarse}, 基底計算 {basis_time:.2f}秒")
    return MultiscaleProblem(space=space, coarse=coarse, u0=u0_H, basis_time=basis_time)
