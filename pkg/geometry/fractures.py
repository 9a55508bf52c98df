#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
フラクチャーネットワークと埋め込みフラクチャーメッシュ
線分を背景格子のセル境界で切断し、1次元フラクチャーセルを作る
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from common.errors import InvalidArgumentError
from .grid import StructuredGrid

logger = logging.getLogger(__name__)

Segment = Tuple[float, float, float, float]

# 付属の標準ジオメトリ（10本のフラクチャー線）
CANONICAL_FRACTURES_PATH = Path(__file__).parent / "canonical_fractures.txt"

# これより短い切断片は隣のセルに併合する（h に対する相対値）
SLIVER_TOL = 1e-12


@dataclass(frozen=True)
class FractureNetwork:
    """線分 (x1, y1, x2, y2) の集まり"""
    segments: Tuple[Segment, ...]

    def __post_init__(self):
        for sid, seg in enumerate(self.segments):
            if len(seg) != 4:
                raise InvalidArgumentError(f"線分 {sid} は4つの座標が必要です: {seg}")
            x1, y1, x2, y2 = seg
            if np.hypot(x2 - x1, y2 - y1) <= 0.0:
                raise InvalidArgumentError(f"線分 {sid} の長さがゼロです: {seg}")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def lengths(self) -> np.ndarray:
        s = np.asarray(self.segments, dtype=float).reshape(-1, 4)
        return np.hypot(s[:, 2] - s[:, 0], s[:, 3] - s[:, 1])

    def validate(self, lx: float, ly: float) -> None:
        """すべての線分が領域 [0,lx]×[0,ly] の内側にあることを確認する。"""
        tol = 1e-12 * max(lx, ly)
        for sid, (x1, y1, x2, y2) in enumerate(self.segments):
            for x, y in ((x1, y1), (x2, y2)):
                if not (-tol <= x <= lx + tol and -tol <= y <= ly + tol):
                    raise InvalidArgumentError(
                        f"線分 {sid} が領域 [0,{lx}]x[0,{ly}] の外にあります: ({x}, {y})"
                    )


def parse_fracture_text(text: str, source: str = "<text>") -> FractureNetwork:
    segments: List[Segment] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise InvalidArgumentError(f"{source}:{lineno}: 4つの数値 'x1 y1 x2 y2' が必要です: {raw!r}")
        try:
            x1, y1, x2, y2 = (float(p) for p in parts)
        except ValueError as e:
            raise InvalidArgumentError(f"{source}:{lineno}: 数値に変換できません: {raw!r}") from e
        segments.append((x1, y1, x2, y2))
    return FractureNetwork(tuple(segments))


def load_fracture_network(path: Path = CANONICAL_FRACTURES_PATH) -> FractureNetwork:
    """ジオメトリファイル（1行1線分、'#'はコメント）を読み込む。"""
    path = Path(path)
    logger.info(f"フラクチャージオメトリを読み込み中: {path}")
    network = parse_fracture_text(path.read_text(encoding="utf-8"), source=str(path))
    logger.info(f"フラクチャー線分数: {network.n_segments}, 総延長: {network.lengths().sum():.6g}")
    return network


@dataclass(frozen=True)
class FractureMesh:
    """
    埋め込みフラクチャーセル。セル順序は (線分番号, 弧長位置)。

    各セルはちょうど1つのホスト背景セルを持つ。
    """
    segment_ids: np.ndarray
    t_start: np.ndarray
    t_end: np.ndarray
    lengths: np.ndarray
    hosts: np.ndarray
    midpoints: np.ndarray
    segment_lengths: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.lengths.size)

    def adjacency(self) -> List[Tuple[int, int, float]]:
        """同じ線分上で隣接するセル対と中点間距離"""
        pairs: List[Tuple[int, int, float]] = []
        for a in range(self.n_cells - 1):
            b = a + 1
            if self.segment_ids[a] == self.segment_ids[b]:
                pairs.append((a, b, 0.5 * (self.lengths[a] + self.lengths[b])))
        return pairs

    def cells_of_segment(self, sid: int) -> np.ndarray:
        return np.flatnonzero(self.segment_ids == sid)


def _breakpoints(seg: Segment, grid: StructuredGrid) -> np.ndarray:
    """線分がセル境界線と交わるパラメータ t（0と1を含む）"""
    x1, y1, x2, y2 = seg
    ts = [np.array([0.0, 1.0])]
    for p1, p2, step, count in ((x1, x2, grid.hx, grid.nx), (y1, y2, grid.hy, grid.ny)):
        if p1 == p2:
            continue
        lo, hi = sorted((p1, p2))
        lines = np.arange(max(1, int(np.floor(lo / step))), min(count - 1, int(np.ceil(hi / step))) + 1) * step
        t = (lines - p1) / (p2 - p1)
        ts.append(t[(t > 0.0) & (t < 1.0)])
    return np.unique(np.concatenate(ts))


def _merge_slivers(ts: np.ndarray, length: float, threshold: float) -> np.ndarray:
    keep = [ts[0]]
    for t in ts[1:-1]:
        if (t - keep[-1]) * length >= threshold:
            keep.append(t)
    if len(keep) > 1 and (ts[-1] - keep[-1]) * length < threshold:
        keep.pop()
    keep.append(ts[-1])
    return np.asarray(keep)


def mesh_fractures(net: FractureNetwork, grid: StructuredGrid) -> FractureMesh:
    """
    フラクチャー線分を背景格子で切断してフラクチャーセルを作る。

    (線分, 背景セル) の正の長さの交差ごとに1セル。1e-12·h より短い
    切れ端（セル角を通る場合など）は隣のセルに併合する。

    Raises:
        InvalidArgumentError: 線分が領域外
    """
    net.validate(grid.lx, grid.ly)
    threshold = SLIVER_TOL * grid.h

    seg_ids: List[int] = []
    t0s: List[float] = []
    t1s: List[float] = []
    lens: List[float] = []
    hosts: List[int] = []
    mids: List[Tuple[float, float]] = []

    for sid, seg in enumerate(net.segments):
        x1, y1, x2, y2 = seg
        length = float(np.hypot(x2 - x1, y2 - y1))
        ts = _merge_slivers(_breakpoints(seg, grid), length, threshold)
        t_mid = 0.5 * (ts[:-1] + ts[1:])
        ix, iy = grid.locate(x1 + t_mid * (x2 - x1), y1 + t_mid * (y2 - y1))
        cell_hosts = grid.cell_index(ix, iy)

        # 併合の結果、同じホストが連続した区間は1セルにまとめる
        start = ts[0]
        for k in range(cell_hosts.size):
            last = k == cell_hosts.size - 1
            if not last and cell_hosts[k + 1] == cell_hosts[k]:
                continue
            end = ts[k + 1]
            tm = 0.5 * (start + end)
            seg_ids.append(sid)
            t0s.append(float(start))
            t1s.append(float(end))
            lens.append((end - start) * length)
            hosts.append(int(cell_hosts[k]))
            mids.append((x1 + tm * (x2 - x1), y1 + tm * (y2 - y1)))
            start = end

    mesh = FractureMesh(
        segment_ids=np.asarray(seg_ids, dtype=np.int64),
        t_start=np.asarray(t0s, dtype=float),
        t_end=np.asarray(t1s, dtype=float),
        lengths=np.asarray(lens, dtype=float),
        hosts=np.asarray(hosts, dtype=np.int64),
        midpoints=np.asarray(mids, dtype=float).reshape(-1, 2),
        segment_lengths=net.lengths(),
    )
    logger.info(f"フラクチャーメッシュを作成しました: {mesh.n_cells}セル (線分{net.n_segments}本, h={grid.h:.4g})")
    return mesh
