#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
多連続体ブロック演算子
連続体ごとの拡散・交換・質量を M^h, A^h = D^h + Q^h, F^h にまとめる
"""

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from common.errors import AssemblyError, InvalidArgumentError
from common.sparse import as_csr, empty_csr, max_asymmetry
from geometry.coarse_map import BACKGROUND, FRACTURE
from geometry.fractures import FractureMesh
from geometry.grid import StructuredGrid
from .fvm import (
    Coefficient,
    assemble_diffusion_2d,
    assemble_diffusion_fracture,
    assemble_exchange,
    cellwise,
    efm_links,
    overlap_links,
)

logger = logging.getLogger(__name__)

KINDS = (BACKGROUND, FRACTURE)
EXCHANGE_RULES = ("efm", "overlap")


@dataclass(frozen=True)
class ContinuumSpec:
    """1つの連続体の係数（c: 貯留係数, k: 透過係数, source: 湧き出し f）"""
    name: str
    kind: str
    c: Coefficient
    k: Coefficient
    source: Coefficient = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"連続体 {self.name}: kind は {KINDS} のいずれかです: {self.kind}")
        if np.any(np.asarray(self.c, dtype=float) <= 0.0):
            raise InvalidArgumentError(f"連続体 {self.name}: c は正である必要があります")
        if np.any(np.asarray(self.k, dtype=float) <= 0.0):
            raise InvalidArgumentError(f"連続体 {self.name}: k は正である必要があります")

    @property
    def k_scalar(self) -> float:
        """並べ替え用の代表値（配列なら平均）"""
        return float(np.mean(np.asarray(self.k, dtype=float)))


@dataclass(frozen=True)
class ExchangeRule:
    first: str
    second: str
    rule: str = "efm"
    sigma: Optional[float] = None
    distance: Optional[float] = None

    def __post_init__(self):
        if self.rule not in EXCHANGE_RULES:
            raise InvalidArgumentError(f"交換ルールは {EXCHANGE_RULES} のいずれかです: {self.rule}")
        if self.sigma is not None and self.sigma < 0.0:
            raise InvalidArgumentError(f"交換係数 σ は非負である必要があります: {self.sigma}")
        if self.first == self.second:
            raise InvalidArgumentError(f"同じ連続体同士の交換は定義できません: {self.first}")


@dataclass(frozen=True)
class ExchangeSpec:
    rules: Tuple[ExchangeRule, ...] = ()


def default_exchange(continua: Sequence[ContinuumSpec]) -> ExchangeSpec:
    """背景–フラクチャーはEFM、背景–背景は重なり交換を既定とする。"""
    rules: List[ExchangeRule] = []
    for a in range(len(continua)):
        for b in range(a + 1, len(continua)):
            ka, kb = continua[a].kind, continua[b].kind
            if ka == FRACTURE and kb == FRACTURE:
                continue
            rule = "overlap" if ka == kb == BACKGROUND else "efm"
            rules.append(ExchangeRule(continua[a].name, continua[b].name, rule))
    return ExchangeSpec(tuple(rules))


@dataclass(frozen=True)
class BlockOperator:
    """
    L×Lブロックの剛性行列 A、ブロック対角の質量 M（対角成分）、右辺 F。

    A_αα = D_α + Σ_β Q_αβ(行和), A_αβ = -Q_αβ。
    """
    names: Tuple[str, ...]
    blocks: Tuple[Tuple[sp.csr_matrix, ...], ...]
    mass: Tuple[np.ndarray, ...]
    rhs: Tuple[np.ndarray, ...]
    measures: Tuple[np.ndarray, ...] = field(default=(), repr=False)

    @property
    def n_continua(self) -> int:
        return len(self.names)

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(m.size for m in self.mass)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)

    @property
    def n_dofs(self) -> int:
        return int(sum(self.sizes))

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidArgumentError(f"未知の連続体です: {name} (候補: {self.names})") from None

    def block_slice(self, alpha: int) -> slice:
        off = self.offsets
        return slice(int(off[alpha]), int(off[alpha + 1]))

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """全体行列 A（CSR）"""
        return as_csr(sp.bmat([list(row) for row in self.blocks], format="csr"))

    def mass_diagonal(self) -> np.ndarray:
        return np.concatenate(self.mass) if self.mass else np.zeros(0)

    def rhs_vector(self) -> np.ndarray:
        return np.concatenate(self.rhs) if self.rhs else np.zeros(0)

    def split(self, u: np.ndarray) -> List[np.ndarray]:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_dofs,):
            raise InvalidArgumentError(f"ベクトルの次元が一致しません: {u.shape} != ({self.n_dofs},)")
        return [u[self.block_slice(a)] for a in range(self.n_continua)]

    @staticmethod
    def join(parts: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate([np.asarray(p, dtype=float) for p in parts]) if parts else np.zeros(0)

    def block_matvec(self, u_blocks: Sequence[np.ndarray]) -> List[np.ndarray]:
        """ブロックごとの A·u（空ブロックは飛ばす）"""
        out = []
        for a, row in enumerate(self.blocks):
            y = np.zeros(self.sizes[a])
            for b, block in enumerate(row):
                if block.nnz:
                    y += block @ u_blocks[b]
            out.append(y)
        return out

    def matvec(self, u: np.ndarray) -> np.ndarray:
        return self.join(self.block_matvec(self.split(u)))

    def energy(self, u: np.ndarray) -> float:
        """||u||_A^2 = u^T A u"""
        u = np.asarray(u, dtype=float)
        return float(u @ self.matvec(u))

    def has_coupling(self) -> bool:
        return any(
            self.blocks[a][b].nnz for a in range(self.n_continua) for b in range(self.n_continua) if a != b
        )

    def with_blocks(self, blocks) -> "BlockOperator":
        return replace(self, blocks=tuple(tuple(as_csr(b) for b in row) for row in blocks))

    def with_rhs(self, rhs: Sequence[np.ndarray]) -> "BlockOperator":
        return replace(self, rhs=tuple(np.asarray(r, dtype=float) for r in rhs))


def check_operator(op: BlockOperator, tol: float = 1e-12, diagonal_dominance: bool = True) -> None:
    """対称性と対角優位（半正定値の目安）を確認する。粗格子の演算子は対角優位を仮定しない。"""
    A = op.stiffness
    scale = max(float(np.max(np.abs(A.diagonal()))) if A.shape[0] else 0.0, 1.0)
    skew = max_asymmetry(A)
    if skew > tol * scale:
        raise AssemblyError(f"剛性行列が非対称です: max|A - A^T| = {skew:.3e}")
    diag = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).reshape(-1) - np.abs(diag)
    deficit = float(np.max(off - diag)) if diag.size else 0.0
    if diagonal_dominance and deficit > 1e-9 * scale:
        raise AssemblyError(f"剛性行列が対角優位ではありません (最大不足 {deficit:.3e})")
    if np.any(op.mass_diagonal() <= 0.0):
        raise AssemblyError("質量行列の対角成分は正である必要があります")


def _measures_for(spec: ContinuumSpec, grid: StructuredGrid, fmesh: FractureMesh) -> np.ndarray:
    return grid.cell_areas() if spec.kind == BACKGROUND else fmesh.lengths.copy()


def assemble_block_operator(
    continua: Sequence[ContinuumSpec],
    grid: StructuredGrid,
    fmesh: FractureMesh,
    exchange: Optional[ExchangeSpec] = None,
) -> BlockOperator:
    """
    連続体のリストからブロック演算子を組み立てる。

    Args:
        continua: 連続体（ソルバーでの並び順）
        grid: 背景の細格子
        fmesh: フラクチャーメッシュ（フラクチャー連続体が無ければ未使用）
        exchange: 交換ルール（省略時は default_exchange）

    Raises:
        InvalidArgumentError: 名前の重複・未知の連続体
        AssemblyError: 対称性が崩れている
    """
    names = tuple(c.name for c in continua)
    if len(set(names)) != len(names):
        raise InvalidArgumentError(f"連続体名が重複しています: {names}")
    if exchange is None:
        exchange = default_exchange(continua)
    logger.info(f"ブロック演算子を組み立て中: continua={names}, exchange={len(exchange.rules)}ルール")

    L = len(continua)
    measures = [_measures_for(c, grid, fmesh) for c in continua]
    sizes = [m.size for m in measures]
    diffusion = []
    for spec, n in zip(continua, sizes):
        if spec.kind == BACKGROUND:
            diffusion.append(assemble_diffusion_2d(grid, spec.k))
        else:
            diffusion.append(assemble_diffusion_fracture(fmesh, spec.k))
        logger.debug(f"連続体 {spec.name}: {n}セル, 拡散nnz={diffusion[-1].nnz}")

    diag_extra = [np.zeros(n) for n in sizes]
    off_blocks: Dict[Tuple[int, int], sp.csr_matrix] = {}
    index = {name: i for i, name in enumerate(names)}
    for rule in exchange.rules:
        for name in (rule.first, rule.second):
            if name not in index:
                raise InvalidArgumentError(f"交換ルールに未知の連続体があります: {name}")
        a, b = index[rule.first], index[rule.second]
        ka, kb = continua[a].kind, continua[b].kind
        if rule.rule == "efm":
            if {ka, kb} != {BACKGROUND, FRACTURE}:
                raise InvalidArgumentError(f"EFM交換は背景とフラクチャーの組だけです: {rule.first}-{rule.second}")
            if ka == FRACTURE:
                a, b = b, a
            links = efm_links(fmesh, continua[a].k, grid, rule.sigma, rule.distance)
        else:
            if ka != BACKGROUND or kb != BACKGROUND:
                raise InvalidArgumentError(f"重なり交換は背景連続体同士だけです: {rule.first}-{rule.second}")
            links = overlap_links(grid, continua[a].k, rule.sigma, rule.distance)
        q = assemble_exchange(links, sizes[a], sizes[b])
        diag_extra[a] += q.diag_first
        diag_extra[b] += q.diag_second
        off_blocks[(a, b)] = as_csr(off_blocks.get((a, b), empty_csr(sizes[a], sizes[b])) - q.coupling)
        off_blocks[(b, a)] = as_csr(off_blocks.get((b, a), empty_csr(sizes[b], sizes[a])) - q.coupling.T)
        logger.debug(f"交換 {names[a]}-{names[b]} ({rule.rule}): {links.n_links}リンク")

    blocks = []
    for a in range(L):
        row = []
        for b in range(L):
            if a == b:
                row.append(as_csr(diffusion[a] + sp.diags(diag_extra[a], format="csr")))
            else:
                row.append(off_blocks.get((a, b), empty_csr(sizes[a], sizes[b])))
        blocks.append(tuple(row))

    mass = tuple(cellwise(c.c, n, "c") * m for c, n, m in zip(continua, sizes, measures))
    rhs = tuple(cellwise(c.source, n, "source") * m for c, n, m in zip(continua, sizes, measures))
    op = BlockOperator(names=names, blocks=tuple(blocks), mass=mass, rhs=rhs, measures=tuple(measures))
    check_operator(op)
    logger.info(f"ブロック演算子の組み立てが完了しました: DOF={op.n_dofs} ({', '.join(f'{n}={s}' for n, s in zip(names, sizes))})")
    return op


def single_block_operator(stiffness, mass, rhs=None, name: str = "u") -> BlockOperator:
    """1連続体（またはスカラーODE）の演算子を直接作る。"""
    A = as_csr(np.atleast_2d(stiffness) if not sp.issparse(stiffness) else stiffness)
    m = np.atleast_1d(np.asarray(mass, dtype=float))
    f = np.zeros_like(m) if rhs is None else np.atleast_1d(np.asarray(rhs, dtype=float))
    return BlockOperator(names=(name,), blocks=((A,),), mass=(m,), rhs=(f,), measures=(np.ones_like(m),))
