#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
MatrixMarket形式の入出力
行列のデバッグ出力とベクトル（スナップショット・基底）の書き出し
"""

import logging
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .sparse import MatrixLike, as_csr

logger = logging.getLogger(__name__)


def dump_matrix(A: MatrixLike, path: Path, comment: str = "") -> Path:
    """疎行列を coordinate real general 形式で保存する。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), sp.coo_matrix(as_csr(A)), comment=comment, field="real", symmetry="general")
    logger.debug(f"行列を保存しました: {path} shape={A.shape}")
    return path


def dump_vector(x: np.ndarray, path: Path, comment: str = "") -> Path:
    """ベクトルを array real general 形式（n×1）で保存する。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    column = np.asarray(x, dtype=float).reshape(-1, 1)
    scipy.io.mmwrite(str(path), column, comment=comment, field="real", symmetry="general")
    logger.debug(f"ベクトルを保存しました: {path} n={column.shape[0]}")
    return path


def load_matrix(path: Path):
    """dump_matrix / dump_vector の出力を読み戻す。"""
    data = scipy.io.mmread(str(path))
    if sp.issparse(data):
        return as_csr(data)
    return np.asarray(data, dtype=float).reshape(-1)
