#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
テスト共通のフィクスチャ
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# パスを追加
sys.path.insert(0, str(Path(__file__).parent.parent))

from assembly.block_operator import ContinuumSpec, assemble_block_operator
from geometry.coarse_map import BACKGROUND, FRACTURE, build_coarse_map
from geometry.fractures import FractureNetwork, mesh_fractures
from geometry.grid import build_grid


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="slow マーカーのテストも実行する")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="--runslow を指定すると実行します")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


# 格子線や格子点を通らない2本の線分
TOY_SEGMENTS = (
    (0.13, 0.31, 1.71, 0.77),
    (0.41, 0.93, 0.93, 0.07),
)


@pytest.fixture
def toy_grid():
    return build_grid(16, 8, 2.0, 1.0)


@pytest.fixture
def toy_network():
    return FractureNetwork(TOY_SEGMENTS)


@pytest.fixture
def toy_fmesh(toy_network, toy_grid):
    return mesh_fractures(toy_network, toy_grid)


@pytest.fixture
def two_continua():
    return (
        ContinuumSpec("m", BACKGROUND, c=0.1, k=1.0),
        ContinuumSpec("f", FRACTURE, c=1.0, k=1.0e3),
    )


@pytest.fixture
def toy_operator(two_continua, toy_grid, toy_fmesh):
    """16x8 の2連続体演算子（既定の交換）"""
    return assemble_block_operator(two_continua, toy_grid, toy_fmesh)


@pytest.fixture
def toy_coarse_map(toy_grid, toy_fmesh):
    return build_coarse_map(toy_grid, build_grid(4, 2, 2.0, 1.0), toy_fmesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TOY_CONFIG = """\
geometry:
  fractures: toy_fractures.txt
  fine: [16, 8]
  coarse: [4, 2]

continua:
  - {{name: f, kind: fracture, c: 1.0, k: 1.0e+3}}
  - {{name: m, kind: background, c: 0.1, k: 1.0}}

well:
  continuum: f
  box: [0.95, 1.05, 0.5, 0.6]

time:
  t_max: 0.005
  nt: [2, 4]
  reference_nt: 8

schemes:
  names: [Im1, ImEx1]
  splits: [U]
  spaces: [fine, coarse]

nlmc:
  layers: 1

solver:
  rtol: 1.0e-10
{solver_extra}
output:
  directory: out
  repetitions: 1
"""


def write_toy_config(directory: Path, solver_extra: str = "") -> Path:
    """小さな2連続体問題の設定ファイルとジオメトリを書き出す。"""
    lines = "\n".join(" ".join(f"{v:g}" for v in seg) for seg in TOY_SEGMENTS)
    (directory / "toy_fractures.txt").write_text(f"# x1 y1 x2 y2\n{lines}\n", encoding="utf-8")
    path = directory / "toy.yaml"
    path.write_text(TOY_CONFIG.format(solver_extra=solver_extra), encoding="utf-8")
    return path


@pytest.fixture
def toy_config_path(tmp_path, monkeypatch):
    monkeypatch.delenv("MCFLOW_THREADS", raising=False)
    monkeypatch.setenv("MCFLOW_CACHE_DIR", str(tmp_path / "cache"))
    return write_toy_config(tmp_path)
